use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use pag_core::evalkit::{
    calibrate_threshold, collect_sweep_records, default_grid, evaluate, load_dataset, parse_grid, sweep_threshold,
    write_sweep_csv, DatasetExample, DatasetFormat, EvalError, EvalOptions, Objective, OodScoring,
};
use pag_core::{
    write_audit, AggregationStrategy, AuditRecord, Backend, BackendDescriptor, LabelVocabulary, Pipeline,
    PipelineConfig, Query, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "pag",
    version,
    about = "Confidence-gated paraphrase-and-aggregate intent classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one query.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        query: String,
    },
    /// Run the pipeline over a dataset split and score it.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Reference ID-F1 for the error-reduction column.
        #[arg(long)]
        baseline_f1: Option<f64>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one JSON line per decision here.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Error reduction and gated fraction across a threshold grid, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the threshold that maximizes an objective over a grid.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::IdF1)]
        objective: ObjectiveArg,
    },
}

#[derive(Args)]
struct Common {
    /// Run config (JSON). Flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label vocabulary file, one label per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n_paraphrases: Option<usize>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Fixture file for the scripted backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: Option<String>,
    #[arg(long, value_enum, default_value_t = OodArg::Auto)]
    ood_scoring: OodArg,
}

#[derive(Args)]
struct GridArgs {
    /// `a,b,c` or `start:stop:step`; defaults to 0:1:0.02.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Vote,
    Llm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum OodArg {
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    IdF1,
    AvgF1,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Backend(String),
    Data(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Data(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Backend(m) | Failure::Data(m) | Failure::Io(m) => m,
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline { .. } => Failure::Backend(e.to_string()),
            EvalError::Grid(_) => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

struct Setup {
    config: PipelineConfig,
    vocab: LabelVocabulary,
    backend: Box<dyn Backend>,
}

impl Common {
    fn setup(&self) -> Result<Setup, Failure> {
        let run = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
            None => RunConfig {
                pipeline: PipelineConfig::default(),
                vocabulary: None,
                backend: None,
            },
        };
        let mut config = run.pipeline;
        if let Some(tau) = self.tau {
            config.tau = tau;
        }
        if let Some(n) = self.n_paraphrases {
            config.n_paraphrases = n;
        }
        if let Some(a) = self.aggregation {
            config.aggregation = match a {
                AggregationArg::Vote => AggregationStrategy::Vote,
                AggregationArg::Llm => AggregationStrategy::Llm,
            };
        }
        if let Some(p) = self.max_parallel {
            config.max_parallel = p;
        }
        let config = config.validate().map_err(|e| Failure::Config(e.to_string()))?;

        let vocab_path =
            self.vocab.clone().or(run.vocabulary).ok_or_else(|| {
                Failure::Config("no vocabulary: pass --vocab or set \"vocabulary\" in the config".into())
            })?;
        let vocab = LabelVocabulary::load(&vocab_path).map_err(|e| Failure::Config(e.to_string()))?;

        let descriptor = match (self.backend, &self.fixtures, run.backend) {
            (Some(BackendArg::Scripted) | None, Some(fixtures), _) => BackendDescriptor::Scripted {
                fixtures: fixtures.clone(),
            },
            (Some(BackendArg::Http), Some(_), _) => {
                return Err(Failure::Config(
                    "--fixtures only applies to the scripted backend".into(),
                ))
            }
            (None, None, Some(d)) => d,
            (Some(BackendArg::Http), None, Some(d @ BackendDescriptor::Http { .. })) => d,
            (Some(BackendArg::Scripted), None, Some(d @ BackendDescriptor::Scripted { .. })) => d,
            (Some(BackendArg::Http), None, _) => {
                return Err(Failure::Config(
                    "--backend http needs an http backend section in the config".into(),
                ))
            }
            (Some(BackendArg::Scripted), None, _) => {
                return Err(Failure::Config("--backend scripted needs --fixtures".into()))
            }
            (None, None, None) => return Err(Failure::Config("no backend configured".into())),
        };
        let backend = descriptor
            .build(config.max_parallel)
            .map_err(|e| Failure::Config(e.to_string()))?;
        Ok(Setup { config, vocab, backend })
    }
}

impl DataArgs {
    fn examples(&self, default_split: &str) -> Result<Vec<DatasetExample>, Failure> {
        let dataset =
            load_dataset(&self.data, DatasetFormat::from_path(&self.data)).map_err(|e| Failure::Data(e.to_string()))?;
        for w in &dataset.warnings {
            warn!("{w}");
        }
        let split = self.split.as_deref().unwrap_or(default_split);
        match dataset.split(split) {
            Some(examples) if !examples.is_empty() => Ok(examples.to_vec()),
            Some(_) => Err(Failure::Data(format!("split {split:?} is empty"))),
            None => Err(Failure::Data(format!(
                "split {split:?} not found in {}",
                self.data.display()
            ))),
        }
    }

    fn ood_scoring(&self) -> OodScoring {
        match self.ood_scoring {
            OodArg::Auto => OodScoring::Auto,
            OodArg::On => OodScoring::On,
            OodArg::Off => OodScoring::Off,
        }
    }
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, Failure> {
        match &self.grid {
            Some(spec) => parse_grid(spec).map_err(Failure::from),
            None => Ok(default_grid()),
        }
    }
}

fn pipeline(setup: &Setup) -> Result<Pipeline<'_, dyn Backend>, Failure> {
    Pipeline::new(setup.backend.as_ref(), &setup.vocab, setup.config.clone())
        .map_err(|e| Failure::Config(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("creating {}: {e}", path.display())))
}

fn json_line<T: serde::Serialize>(out: &mut impl Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Classify { common, query } => {
            if query.trim().is_empty() {
                return Err(Failure::Config("--query is empty".into()));
            }
            let setup = common.setup()?;
            let pipe = pipeline(&setup)?;
            let decision = pipe
                .run_pag(&Query::new("0", query.clone()))
                .map_err(|e| Failure::Backend(e.to_string()))?;
            if common.json {
                json_line(&mut out, &AuditRecord::from_decision(&decision, &query))?;
            } else {
                let fin = &decision.final_prediction;
                writeln!(out, "{}", fin.label.normalized)?;
                writeln!(out, "path: {}", decision.path)?;
                writeln!(out, "confidence: {:.4}", fin.confidence)?;
                writeln!(out, "in vocabulary: {}", fin.is_in_vocab())?;
                writeln!(out, "out of domain: {}", decision.ood)?;
                writeln!(out, "llm calls: {}", decision.llm_calls_used)?;
                for w in &decision.warnings {
                    writeln!(out, "warning: {w}")?;
                }
            }
        }
        Command::Eval {
            common,
            data,
            baseline_f1,
            out: report_path,
            audit,
        } => {
            let setup = common.setup()?;
            let examples = data.examples("test")?;
            if let Some(b) = baseline_f1 {
                if !(0.0..100.0).contains(&b) {
                    return Err(Failure::Config(format!("--baseline-f1 must be in [0,100): {b}")));
                }
            }
            let options = EvalOptions {
                baseline_f1,
                ood_scoring: data.ood_scoring(),
            };
            let evaluation = evaluate(&examples, &pipeline(&setup)?, &options)?;
            if let Some(path) = report_path {
                let mut f = create(&path)?;
                json_line(&mut f, &evaluation.report)?;
                f.flush()?;
            }
            if let Some(path) = audit {
                let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
                write_audit(&evaluation.decisions, &texts, create(&path)?)?;
            }
            if common.json {
                json_line(&mut out, &evaluation.report)?;
            } else {
                write!(out, "{}", evaluation.report.to_table())?;
            }
        }
        Command::Sweep {
            common,
            data,
            grid,
            out: csv_path,
        } => {
            let grid = grid.grid()?;
            let setup = common.setup()?;
            let examples = data.examples("val")?;
            let records = collect_sweep_records(&examples, &pipeline(&setup)?)?;
            let points = sweep_threshold(
                &records,
                &grid,
                &setup.vocab,
                data.ood_scoring(),
                setup.config.ood_threshold,
            )?;
            match csv_path {
                Some(path) => write_sweep_csv(&points, create(&path)?)?,
                None if common.json => json_line(&mut out, &points)?,
                None => write_sweep_csv(&points, &mut out)?,
            }
        }
        Command::Calibrate {
            common,
            data,
            grid,
            objective,
        } => {
            let grid = grid.grid()?;
            let setup = common.setup()?;
            let examples = data.examples("val")?;
            let records = collect_sweep_records(&examples, &pipeline(&setup)?)?;
            let points = sweep_threshold(
                &records,
                &grid,
                &setup.vocab,
                data.ood_scoring(),
                setup.config.ood_threshold,
            )?;
            let objective = match objective {
                ObjectiveArg::IdF1 => Objective::MaxIdF1,
                ObjectiveArg::AvgF1 => Objective::MaxAvgF1,
            };
            let calibration = calibrate_threshold(&points, objective)?;
            if common.json {
                json_line(&mut out, &calibration)?;
            } else {
                writeln!(out, "tau* = {}", calibration.tau)?;
                writeln!(out, "{} = {:.2}", calibration.objective, calibration.value)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
