//! `ecgage`: the pipeline stages as subcommands.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numeric failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecgage::delineate::write_fiducials_csv;
use ecgage::eval::{EvalReport, SplitKind};
use ecgage::features::FeatureTable;
use ecgage::ingest::{load_dataset, load_manifest, summarize, validate_dataset, write_recording, Dataset, MANIFEST_FILE};
use ecgage::models::{finetune_model, FinetunePolicy, GridFile, ModelKind, TrainedModel};
use ecgage::pipeline::{
    analyze_recording, build_features, kind_label, run_pipeline, train_holdout, train_kfold, write_report,
    FeatureScope, PipelineConfig, Scenario,
};
use ecgage::segment::make_segments;
use ecgage::synth::{make_cohort, write_cohort, CohortConfig};
use ecgage::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ecgage", version, about = "Single-lead ECG vascular-age pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the model and split seeds of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory containing manifest.json.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Segmented,
    Unsegmented,
}

impl From<ScopeArg> for FeatureScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Segmented => FeatureScope::Segments,
            ScopeArg::Unsegmented => FeatureScope::Whole,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic cohort (recordings, annotations, metadata, manifest).
    Synth {
        /// Cohort parameters (JSON); flags below override it.
        #[arg(long)]
        cohort_config: Option<PathBuf>,
        /// Number of subjects.
        #[arg(long)]
        n_subjects: Option<usize>,
        /// Recording length in seconds.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Validates a dataset and prints a cohort summary.
    Ingest,
    /// Writes cleaned recordings with anomalous cycles masked.
    Preprocess,
    /// Writes per-subject fiducial tables.
    Delineate,
    /// Writes the feature table.
    Features {
        /// Whole recordings or overlapping windows.
        #[arg(long, value_enum, default_value = "segmented")]
        scope: ScopeArg,
    },
    /// Writes per-subject segment lists with exclusion flags.
    Segment,
    /// Grid-searches and trains one model kind on a feature table.
    Train {
        /// Feature table CSV.
        #[arg(long)]
        features: PathBuf,
        /// `linear`, `ridge`, `tree` or `forest`.
        #[arg(long)]
        model: ModelKind,
        /// Grid file; defaults to a small grid around the model defaults.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// `60/20/20` holdout or `kfold`.
        #[arg(long, default_value = "60/20/20")]
        split: String,
    },
    /// Fine-tunes a pretrained model on a feature table.
    Finetune {
        /// Pretrained model JSON.
        #[arg(long)]
        pretrained: PathBuf,
        /// Feature table CSV to fine-tune on.
        #[arg(long)]
        data: PathBuf,
        /// `forest-augment:k=K,w=W` or `warm-start:iters=N`.
        #[arg(long)]
        policy: Option<FinetunePolicy>,
    },
    /// Scores a model on a feature table, or runs a scenario into a report directory.
    Evaluate {
        /// Model JSON to score; requires --features.
        #[arg(long, requires = "features", conflicts_with = "report_dir")]
        model: Option<PathBuf>,
        /// Feature table CSV.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Directory that receives a full scenario run.
        #[arg(long, requires = "scenario")]
        report_dir: Option<PathBuf>,
        /// `segmented`, `unsegmented` or `finetune`.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Pretrained model for the finetune scenario.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Renders summary tables from one or more run directories.
    Report {
        /// Run directories written by `run` or `evaluate --report-dir`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Runs one scenario end to end.
    Run {
        /// `segmented`, `unsegmented` or `finetune`.
        #[arg(long)]
        scenario: Scenario,
        /// Pretrained model, required by the finetune scenario.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
}

/// CLI failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl Global {
    fn config(&self) -> CliResult<PipelineConfig> {
        let cfg = match &self.config {
            // A malformed or unknown-key config is a usage error, not bad data.
            Some(p) => PipelineConfig::load(p).map_err(|e| match e {
                Error::Io { .. } => Failure::from(e),
                _ => usage(e.to_string()),
            })?,
            None => PipelineConfig::default(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }

    fn out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| usage("this command needs --out"))
    }

    fn dataset(&self) -> CliResult<Dataset> {
        let root = self.data_root.as_deref().ok_or_else(|| usage("this command needs --data-root"))?;
        Ok(load_dataset(root, None)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    bytes.push(b'\n');
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    emit(&(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n"));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth {
            cohort_config,
            n_subjects,
            duration_s,
        } => {
            let mut cc: CohortConfig = match cohort_config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
                }
                None => CohortConfig::default(),
            };
            if let Some(n) = n_subjects {
                cc.n_subjects = n;
            }
            if let Some(d) = duration_s {
                cc.duration_s = d;
            }
            if let Some(s) = g.seed {
                cc.seed = s;
            }
            let out = g.out()?;
            let manifest = write_cohort(&make_cohort(&cc)?, out)?;
            eprintln!("wrote {} subjects to {}", manifest.entries.len(), out.display());
        }
        Command::Ingest => {
            let root = g.data_root.as_deref().ok_or_else(|| usage("ingest needs --data-root"))?;
            let manifest = load_manifest(&root.join(MANIFEST_FILE))?;
            let report = validate_dataset(&manifest, root)?;
            if !report.is_ok() {
                print_json(&report)?;
                return Err(Error::data(format!("dataset failed validation: {}", report.errors.join("; "))).into());
            }
            let ds = load_dataset(root, None)?;
            let meta: Vec<_> = ds.subjects.iter().map(|(_, m)| m.clone()).collect();
            print_json(&serde_json::json!({ "validation": report, "summary": summarize(&meta) }))?;
        }
        Command::Preprocess | Command::Delineate | Command::Segment => {
            let cfg = g.config()?;
            let ds = g.dataset()?;
            let out = g.out()?;
            for (rec, _) in &ds.subjects {
                let a = analyze_recording(rec, &cfg)?;
                let id = &rec.subject_id;
                match cli.command {
                    Command::Preprocess => {
                        write_recording(&out.join(format!("{id}.csv")), &a.clean.recording)?;
                        write_json(&out.join(format!("{id}.provenance.json")), &a.clean.provenance())?;
                        write_json(&out.join(format!("{id}.excision.json")), &a.excision)?;
                    }
                    Command::Delineate => {
                        write_fiducials_csv(&out.join(format!("{id}.fiducials.csv")), &a.fiducials)?;
                    }
                    _ => {
                        let segs = make_segments(id, &a.clean.recording.validity_mask, a.clean.fs(), &cfg.segment)?;
                        write_json(&out.join(format!("{id}.segments.json")), &segs)?;
                    }
                }
            }
            eprintln!("processed {} subjects into {}", ds.subjects.len(), out.display());
        }
        Command::Features { scope } => {
            let cfg = g.config()?;
            let (table, summaries) = build_features(&g.dataset()?, scope.into(), &cfg)?;
            let out = g.out()?;
            table.write_csv(&out.join("features.csv"))?;
            write_json(&out.join("subjects.json"), &summaries)?;
            eprintln!(
                "{} rows ({} empty and {} incomplete scopes dropped)",
                table.rows.len(),
                table.dropped_empty,
                table.dropped_missing
            );
        }
        Command::Train {
            features,
            model,
            grid,
            split,
        } => {
            let cfg = g.config()?;
            let table = FeatureTable::read_csv(&features)?;
            let specs = match grid {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    let gf: GridFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    gf.expand(cfg.seed)
                }
                None => cfg.grid_for(model),
            };
            let label = kind_label(model);
            let outcome = match split.as_str() {
                "60/20/20" => train_holdout(&table, label, &specs, &cfg)?,
                "kfold" => {
                    if cfg.split_unsegmented.kind != SplitKind::Kfold {
                        return Err(usage("config split_unsegmented must be kfold"));
                    }
                    train_kfold(&table, label, &specs, &cfg)?
                }
                other => return Err(usage(format!("unknown split `{other}` (60/20/20 or kfold)"))),
            };
            let out = g.out()?;
            outcome.model.save(&out.join("model.json"))?;
            write_json(&out.join("leaderboard.json"), &outcome.leaderboard)?;
            write_json(&out.join("eval.json"), &outcome.report)?;
            print_json(&serde_json::json!({ "mse": outcome.report.mse, "r2": outcome.report.r2, "spec": outcome.model.spec }))?;
        }
        Command::Finetune { pretrained, data, policy } => {
            let cfg = g.config()?;
            let model = TrainedModel::load(&pretrained)?;
            let table = FeatureTable::read_csv(&data)?;
            let policy = policy
                .or(cfg.finetune_policy)
                .unwrap_or_else(|| FinetunePolicy::default_for(model.spec.kind));
            let outcome = finetune_model(&model, &table, &policy)?;
            let out = g.out()?;
            outcome.model.save(&out.join("model.json"))?;
            write_json(&out.join("schema.json"), &outcome.schema)?;
            print_json(&outcome.schema)?;
        }
        Command::Evaluate {
            model,
            features,
            report_dir,
            scenario,
            pretrained,
        } => match (model, features, report_dir, scenario) {
            (Some(m), Some(f), None, _) => {
                let cfg = g.config()?;
                let model = TrainedModel::load(&m)?;
                let table = FeatureTable::read_csv(&f)?.select(&model.feature_columns)?;
                let pred = model.predict(&table.matrix())?;
                let all: Vec<usize> = (0..table.rows.len()).collect();
                let report = EvalReport::new(&table, &all, &pred, cfg.histogram_bin_years)?;
                if let Some(out) = &g.out {
                    write_json(&out.join("eval.json"), &report)?;
                }
                print_json(&serde_json::json!({ "n": report.n, "mse": report.mse, "r2": report.r2 }))?;
            }
            (None, _, Some(dir), Some(s)) => run_scenario(g, s, pretrained.as_deref(), &dir)?,
            _ => return Err(usage("evaluate needs --model with --features, or --report-dir with --scenario")),
        },
        Command::Report { runs } => {
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let r = write_report(&runs, &out)?;
            emit(&r.markdown);
        }
        Command::Run { scenario, pretrained } => run_scenario(g, scenario, pretrained.as_deref(), g.out()?)?,
    }
    Ok(())
}

fn run_scenario(g: &Global, scenario: Scenario, pretrained: Option<&Path>, out: &Path) -> CliResult<()> {
    if scenario == Scenario::Finetune && pretrained.is_none() {
        return Err(usage("the finetune scenario needs --pretrained"));
    }
    let cfg = g.config()?;
    let metrics = run_pipeline(&g.dataset()?, &cfg, scenario, pretrained, out)?;
    print_json(&metrics)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
