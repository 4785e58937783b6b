//! `kvtune` command-line front end.
//!
//! Exit codes: 0 success, 2 validation or usage error, 3 benchmark backend failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kvtune::dataset::Dataset;
use kvtune::domain::{ConfigurationPoint, Physical, SubdomainId, SubdomainSpec, TuningDomain, Workload};
use kvtune::experiments::{
    self, compare, learning_curve, subdomain_study, train_model, tune_with_model, tune_with_oracle, ExperimentReport,
    OptimizerKind, SearchSettings, StudyConfig, TrainSpec,
};
use kvtune::harness::{
    generate_dataset_with, BackendKind, BenchmarkBackend, ExternalBackend, HarnessConfig, SamplingPlan, SyntheticBackend,
    DEFAULT_ATTEMPTS,
};
use kvtune::oracle::{OracleParams, SyntheticOracle, Target};
use kvtune::surrogate::{Algorithm, ModelFile};

#[derive(Parser)]
#[command(name = "kvtune", version, about = "Surrogate-model auto-tuning for Cassandra configurations")]
struct Cli {
    /// Run on one thread so every output is bit-reproducible.
    #[arg(long, global = true)]
    single_thread: bool,
    /// Data disks per node (scales the concurrent_reads values).
    #[arg(long, global = true, default_value_t = 1)]
    disks: u32,
    /// JVM heap in MiB (scales the memtable values).
    #[arg(long = "heap-mb", global = true, default_value_t = 8192)]
    heap_mb: u32,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe the tuning domain.
    Domain {
        #[command(subcommand)]
        command: DomainCommand,
    },
    /// Generate, summarize or split training data.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Fit a surrogate model.
    Train(TrainArgs),
    /// Score a model on a dataset; prints {mae, mae_pct, rmse, n_test}.
    Evaluate(EvaluateArgs),
    /// Search for the best knob settings at a fixed context.
    Tune(TuneArgs),
    /// Measure a tuned configuration against the default one.
    Compare(CompareArgs),
    /// Run a multi-model experiment protocol.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum DomainCommand {
    Show,
}

#[derive(Subcommand)]
enum DatasetCommand {
    Generate(GenerateArgs),
    Summarize {
        #[arg(long)]
        data: PathBuf,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_parser = ["synthetic", "external"])]
    backend: Option<String>,
    /// Harness TOML: backend, external commands, plan cells, seed.
    #[arg(long)]
    backend_config: Option<PathBuf>,
    /// Relative noise of the synthetic backend.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Examples per (workload, n, rf) cell of the reference plan.
    #[arg(long)]
    per_cell: Option<usize>,
    /// Skip a physical design, as N:RF (repeatable).
    #[arg(long, value_parser = parse_physical)]
    exclude: Vec<Physical>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generation log, one JSON record per example.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ContextArgs {
    /// Workload as R:W, e.g. 95:5.
    #[arg(long, value_parser = parse_workload)]
    workload: Option<Workload>,
    #[arg(long)]
    nodes: Option<u32>,
    #[arg(long)]
    rf: Option<u32>,
}

impl ContextArgs {
    fn physical(&self) -> Result<Option<Physical>> {
        match (self.nodes, self.rf) {
            (Some(n), Some(rf)) => Ok(Some(Physical::new(n, rf)?)),
            (None, None) => Ok(None),
            _ => bail!("--nodes and --rf must be given together"),
        }
    }

    fn required(&self) -> Result<(Workload, Physical)> {
        let w = self.workload.context("--workload is required")?;
        let p = self.physical()?.context("--nodes and --rf are required")?;
        Ok((w, p))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gbdt", value_parser = parse_algorithm)]
    algo: Algorithm,
    #[arg(long, value_parser = parse_target)]
    target: Target,
    #[arg(long, default_value = "td1", value_parser = parse_td)]
    td: SubdomainId,
    #[command(flatten)]
    context: ContextArgs,
    /// Hyperparameter search trials; 0 uses the defaults.
    #[arg(long, default_value_t = experiments::DEFAULT_TUNING_BUDGET)]
    tuning_budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    /// Surrogate model file. Without it the noiseless oracle is the objective.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Objective when tuning against the oracle.
    #[arg(long, value_parser = parse_target)]
    target: Option<Target>,
    #[command(flatten)]
    context: ContextArgs,
    #[arg(long, default_value = "sa", value_parser = parse_optimizer)]
    opt: OptimizerKind,
    #[arg(long, default_value_t = 5000)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recommended configuration as JSON, for `compare --tuned`.
    #[arg(long)]
    out_config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Tuned configuration JSON written by `tune --out-config`.
    #[arg(long)]
    tuned: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, default_value = "gbdt", value_parser = parse_algorithm)]
    algo: Algorithm,
    #[arg(long, value_parser = parse_target)]
    target: Target,
    /// Training draws per size.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = experiments::DEFAULT_TUNING_BUDGET)]
    tuning_budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    LearningCurve(StudyArgs),
    Subdomain {
        #[command(flatten)]
        study: StudyArgs,
        /// Subdomains to compare, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_td, default_value = "td1,td2")]
        td: Vec<SubdomainId>,
        #[command(flatten)]
        context: ContextArgs,
    },
}

fn parse_workload(s: &str) -> Result<Workload, String> {
    Workload::parse(s).map_err(|e| e.to_string())
}

fn parse_physical(s: &str) -> Result<Physical, String> {
    let (n, rf) = s.split_once(':').ok_or_else(|| format!("{s:?} is not N:RF"))?;
    let n = n.parse().map_err(|_| format!("{s:?} is not N:RF"))?;
    let rf = rf.parse().map_err(|_| format!("{s:?} is not N:RF"))?;
    Physical::new(n, rf).map_err(|e| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).map_err(|e| e.to_string())
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::parse(s).map_err(|e| e.to_string())
}

fn parse_td(s: &str) -> Result<SubdomainId, String> {
    SubdomainId::parse(s).map_err(|e| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    OptimizerKind::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.single_thread {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let backend = e.chain().any(|c| {
                matches!(c.downcast_ref::<kvtune::Error>(), Some(kvtune::Error::Backend(_)))
                    || c.downcast_ref::<kvtune::harness::BackendFailure>().is_some()
            });
            ExitCode::from(if backend { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let domain = TuningDomain::cassandra(cli.disks, cli.heap_mb)?;
    match cli.command {
        Command::Domain { command: DomainCommand::Show } => print!("{}", domain.render_table()),
        Command::Dataset { command } => dataset(&domain, command)?,
        Command::Train(a) => train(&domain, a)?,
        Command::Evaluate(a) => {
            let model = ModelFile::<f64>::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
            let data = load(&model.domain()?, &a.data)?;
            println!("{}", experiments::evaluate_model(&model, &data)?.to_record());
        }
        Command::Tune(a) => tune(&domain, a)?,
        Command::Compare(a) => compare_cmd(&domain, a)?,
        Command::Experiment { command } => experiment(&domain, command)?,
    }
    Ok(())
}

fn load(domain: &TuningDomain, path: &Path) -> Result<Dataset> {
    Ok(Dataset::load_csv(domain, path)?)
}

fn emit(report: &ExperimentReport, out: Option<&Path>) -> Result<()> {
    print!("{}", report.render_table());
    if let Some(path) = out {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Harness settings from the optional TOML file, overridden by flags.
fn harness_config(args: &BackendArgs) -> Result<HarnessConfig> {
    let mut config = match &args.backend_config {
        Some(path) => HarnessConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => HarnessConfig {
            backend: BackendKind::Synthetic,
            oracle: OracleParams::default(),
            external: None,
            plan: SamplingPlan::reference(100, 0),
            max_attempts: DEFAULT_ATTEMPTS,
        },
    };
    match args.backend.as_deref() {
        Some("external") => config.backend = BackendKind::External,
        Some("synthetic") => config.backend = BackendKind::Synthetic,
        _ => {}
    }
    if let Some(s) = args.sigma {
        config.oracle.noise_sigma = s;
        config.oracle.validate()?;
    }
    Ok(config)
}

fn backend(domain: &TuningDomain, config: &HarnessConfig) -> Result<Box<dyn BenchmarkBackend>> {
    Ok(match config.backend {
        BackendKind::Synthetic => Box::new(SyntheticBackend::new(domain.clone(), config.oracle)?),
        BackendKind::External => {
            let ext = config.external.clone().context("the external backend needs --backend-config with an [external] table")?;
            Box::new(ExternalBackend::new(domain, ext)?)
        }
    })
}

fn dataset(domain: &TuningDomain, command: DatasetCommand) -> Result<()> {
    match command {
        DatasetCommand::Generate(a) => {
            let mut config = harness_config(&a.backend)?;
            if let Some(n) = a.per_cell {
                config.plan = SamplingPlan::reference(n, config.plan.seed);
            }
            if let Some(seed) = a.seed {
                config.plan.seed = seed;
            }
            for p in a.exclude {
                config.plan = config.plan.excluding(p);
            }
            let backend = backend(domain, &config)?;
            let generation = generate_dataset_with(backend.as_ref(), domain, &config.plan, config.max_attempts)?;
            generation.dataset.save_csv(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            if let Some(log) = &a.log {
                std::fs::write(log, generation.log_lines()).with_context(|| format!("writing {}", log.display()))?;
            }
            let failed = generation.failures();
            eprintln!("{} examples written to {}, {failed} failed", generation.dataset.len(), a.out.display());
            if generation.dataset.is_empty() && failed > 0 {
                let first = generation.log.iter().find_map(|r| r.step.map(|s| (s, r.message.clone().unwrap_or_default())));
                let (step, message) = first.expect("failed records name a step");
                return Err(kvtune::Error::Backend(kvtune::harness::BackendFailure::new(step, message)).into());
            }
        }
        DatasetCommand::Summarize { data, out } => {
            let summary = load(domain, &data)?.summarize();
            print!("{}", summary.render_table());
            if let Some(out) = out {
                std::fs::write(&out, summary.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        DatasetCommand::Split { data, train_fraction, seed, out_train, out_test } => {
            let (train, test) = load(domain, &data)?.split(train_fraction, seed)?;
            train.save_csv(&out_train)?;
            test.save_csv(&out_test)?;
            eprintln!("train {} / test {}", train.len(), test.len());
        }
    }
    Ok(())
}

fn subdomain(id: SubdomainId, context: &ContextArgs) -> Result<SubdomainSpec> {
    Ok(SubdomainSpec::from_context(id, context.workload, context.physical()?)?)
}

fn train(domain: &TuningDomain, a: TrainArgs) -> Result<()> {
    let data = load(domain, &a.data)?;
    let spec = TrainSpec {
        algorithm: a.algo,
        target: a.target,
        subdomain: subdomain(a.td, &a.context)?,
        tuning_budget: a.tuning_budget,
        seed: a.seed,
    };
    let model = train_model::<f64>(&data, &spec)?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let validation = model.validation.map_or_else(|| "none".to_string(), |v| v.to_record());
    eprintln!("{} {} model on {} examples of {}; validation {validation}", spec.algorithm, spec.target, model.n_train, spec.subdomain);
    Ok(())
}

fn tune(domain: &TuningDomain, a: TuneArgs) -> Result<()> {
    let (workload, physical) = a.context.required()?;
    let settings = SearchSettings { optimizer: a.opt, budget: a.budget, restarts: a.restarts, seed: a.seed };
    let outcome = match &a.model {
        Some(path) => {
            let model = ModelFile::<f64>::load(path).with_context(|| format!("loading {}", path.display()))?;
            if a.target.is_some_and(|t| t != model.target) {
                bail!("--target {} differs from the model's target {}", a.target.unwrap(), model.target);
            }
            tune_with_model(&model, workload, physical, &settings)?
        }
        None => {
            let target = a.target.context("--target is required when no --model is given")?;
            let oracle = SyntheticOracle::new(domain.clone(), OracleParams::noiseless())?;
            tune_with_oracle(&oracle, target, workload, physical, &settings)?
        }
    };
    if outcome.extrapolated {
        eprintln!("warning: workload {workload} with {physical} was not in the training data; the prediction extrapolates");
    }
    emit(&outcome.report, a.out.as_deref())?;
    if let Some(path) = &a.out_config {
        let json = serde_json::to_string_pretty(&outcome.result.best)? + "\n";
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn compare_cmd(domain: &TuningDomain, a: CompareArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.tuned).with_context(|| format!("reading {}", a.tuned.display()))?;
    let tuned: ConfigurationPoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.tuned.display()))?;
    let config = harness_config(&a.backend)?;
    let backend = backend(domain, &config)?;
    let report = compare(backend.as_ref(), domain, &tuned, a.trials, a.seed)?;
    emit(&report, a.out.as_deref())
}

fn study_config(a: &StudyArgs, default_sizes: &[usize], default_test: usize) -> StudyConfig {
    StudyConfig {
        sizes: a.sizes.clone().unwrap_or_else(|| default_sizes.to_vec()),
        test_size: a.test_size.unwrap_or(default_test),
        algorithm: a.algo,
        target: a.target,
        repeats: a.repeats,
        tuning_budget: a.tuning_budget,
        seed: a.seed,
    }
}

fn experiment(domain: &TuningDomain, command: ExperimentCommand) -> Result<()> {
    match command {
        ExperimentCommand::LearningCurve(a) => {
            let data = load(domain, &a.data)?;
            let cfg = study_config(&a, &experiments::DEFAULT_LEARNING_CURVE_SIZES, experiments::DEFAULT_LEARNING_CURVE_TEST_SIZE);
            emit(&learning_curve::<f64>(&data, &cfg)?, a.out.as_deref())
        }
        ExperimentCommand::Subdomain { study, td, context } => {
            let data = load(domain, &study.data)?;
            let cfg = study_config(&study, &[128, 256, 512, 1024], experiments::DEFAULT_SUBDOMAIN_TEST_SIZE);
            let subs = td.iter().map(|&id| subdomain(id, &context)).collect::<Result<Vec<_>>>()?;
            emit(&subdomain_study::<f64>(&data, &subs, &cfg)?, study.out.as_deref())
        }
    }
}
