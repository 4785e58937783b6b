//! Experiment protocols and the reports they emit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{ConfigurationPoint, Param, Physical, SubdomainSpec, TuningDomain, Workload};
use crate::error::{Error, Result};
use crate::harness::{measure_repeated, BenchmarkBackend};
use crate::oracle::{Metrics, SyntheticOracle, Target};
use crate::optimizer::{
    exhaustive_search, hill_climb, simulated_annealing_restarts, AnnealingSchedule, Objective, SearchContext,
    TuningResult,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::surrogate::{evaluate, tune_hyperparameters, Algorithm, HyperParams, ModelFile, QualityReport, Surrogate};

/// Default random-search budget for hyperparameter tuning.
pub const DEFAULT_TUNING_BUDGET: usize = 60;
pub const DEFAULT_LEARNING_CURVE_SIZES: [usize; 7] = [128, 256, 512, 1024, 2048, 4096, 8192];
pub const DEFAULT_LEARNING_CURVE_TEST_SIZE: usize = 2000;
pub const DEFAULT_SUBDOMAIN_TEST_SIZE: usize = 250;

/// A titled table with its full parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub params: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ExperimentReport {
    pub fn new(id: &str, columns: &[&str]) -> Self {
        ExperimentReport {
            id: id.to_string(),
            params: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "report rows must be complete");
        self.rows.push(row);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `# key=value` preamble (experiment id first), then a header and the rows.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# experiment={}\n", self.id);
        for (k, v) in &self.params {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn render_table(&self) -> String {
        let mut width: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
        };
        let mut s = format!("{}\n", self.id);
        for (k, v) in &self.params {
            let _ = writeln!(s, "  {k}: {v}");
        }
        s.push_str(&line(&self.columns));
        s.push('\n');
        s.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1)));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// How to fit a surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub algorithm: Algorithm,
    pub target: Target,
    pub subdomain: SubdomainSpec,
    /// Random-search trials; 0 fits the algorithm defaults directly.
    pub tuning_budget: usize,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(algorithm: Algorithm, target: Target, subdomain: SubdomainSpec, seed: u64) -> Self {
        TrainSpec { algorithm, target, subdomain, tuning_budget: DEFAULT_TUNING_BUDGET, seed }
    }
}

/// Fits a surrogate on every example of `data` inside the subdomain. With a
/// tuning budget, the random-search winner is refit on all of them and its
/// holdout report is kept as the model's validation record.
pub fn train_model<T: Scalar>(data: &Dataset, spec: &TrainSpec) -> Result<ModelFile<T>> {
    let (filtered, x) = data.filter_and_project::<T>(&spec.subdomain)?;
    let y = filtered.targets::<T>(spec.target);
    let (params, validation) = if spec.tuning_budget > 0 {
        let out = tune_hyperparameters(spec.algorithm, &x, &y, spec.tuning_budget, derive_seed(spec.seed, 0))?;
        (out.params.with_seed(derive_seed(spec.seed, 1)), Some(out.validation))
    } else {
        (HyperParams::default_for(spec.algorithm).with_seed(derive_seed(spec.seed, 1)), None)
    };
    let model = Surrogate::fit(&x, &y, &params)?;
    ModelFile::new(data.domain(), spec.target, spec.subdomain, filtered.contexts(), filtered.len(), validation, model)
}

/// Test-set quality of a model on the examples of `data` inside its subdomain.
pub fn evaluate_model<T: Scalar>(model: &ModelFile<T>, data: &Dataset) -> Result<QualityReport> {
    let (filtered, x) = data.filter_and_project::<T>(&model.subdomain)?;
    evaluate(&model.model, &x, &filtered.targets::<T>(model.target))
}

/// Settings shared by the learning-curve and subdomain protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub sizes: Vec<usize>,
    pub test_size: usize,
    pub algorithm: Algorithm,
    pub target: Target,
    /// Independent training draws per size.
    pub repeats: usize,
    pub tuning_budget: usize,
    pub seed: u64,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("sizes must be a non-empty list of positive counts".into()));
        }
        if self.test_size < 1 || self.repeats < 1 {
            return Err(Error::InvalidArgument("test size and repeats must be ≥ 1".into()));
        }
        Ok(())
    }

    fn stamp(&self, report: &mut ExperimentReport) {
        report
            .param("seed", self.seed)
            .param("algorithm", self.algorithm)
            .param("target", self.target)
            .param("sizes", self.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"))
            .param("test_size", self.test_size)
            .param("repeats", self.repeats)
            .param("tuning_budget", self.tuning_budget);
    }
}

/// Holds out one test set of `test_size` examples, then for each repeat
/// draws nested training sets of every size from the rest, fits (tuning
/// per size when a budget is set) and evaluates. Returns
/// `(size, repeat, report)` in size-then-repeat order.
fn study_cells<T: Scalar>(data: &Dataset, sub: &SubdomainSpec, cfg: &StudyConfig) -> Result<Vec<(usize, usize, QualityReport)>> {
    let filtered = data.filter(sub);
    let need = cfg.sizes.iter().max().copied().unwrap_or(0) + cfg.test_size;
    if filtered.len() < need {
        return Err(Error::InvalidArgument(format!(
            "{sub} has {} examples; sizes up to {} plus a test set of {} need {need}",
            filtered.len(),
            need - cfg.test_size,
            cfg.test_size
        )));
    }
    let test_idx = Dataset::subsample_indices(filtered.len(), cfg.test_size, derive_seed(cfg.seed, 0))?;
    let mut in_test = vec![false; filtered.len()];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let pool_idx: Vec<usize> = (0..filtered.len()).filter(|&i| !in_test[i]).collect();
    let test = filtered.select(&test_idx);
    let pool = filtered.select(&pool_idx);
    let (tx, ty) = (test.features::<T>(sub)?, test.targets::<T>(cfg.target));

    let mut out = Vec::new();
    for &size in &cfg.sizes {
        for rep in 0..cfg.repeats {
            let train = pool.subsample(size, derive_seed(cfg.seed, 1 + rep as u64))?;
            let spec = TrainSpec {
                algorithm: cfg.algorithm,
                target: cfg.target,
                subdomain: *sub,
                tuning_budget: if size >= 10 { cfg.tuning_budget } else { 0 },
                seed: derive_seed(cfg.seed, 1000 + rep as u64),
            };
            let model = train_model::<T>(&train, &spec)?;
            out.push((size, rep, evaluate(&model.model, &tx, &ty)?));
        }
    }
    Ok(out)
}

/// Test error against training-set size on the full domain.
pub fn learning_curve<T: Scalar>(data: &Dataset, cfg: &StudyConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sub = SubdomainSpec::td1();
    let cells = study_cells::<T>(data, &sub, cfg)?;
    let mut report = ExperimentReport::new("learning_curve", &["size", "repeat", "mae", "mae_pct", "rmse", "n_test"]);
    cfg.stamp(&mut report);
    report.param("subdomain", sub).param("n_examples", data.len());
    push_cells(&mut report, &cells, |_| vec![]);
    Ok(report)
}

fn push_cells(report: &mut ExperimentReport, cells: &[(usize, usize, QualityReport)], prefix: impl Fn(usize) -> Vec<String>) {
    for (size, rep, q) in cells {
        let mut row = prefix(*size);
        row.extend([size.to_string(), rep.to_string(), fmt6(q.mae), fmt6(q.mae_pct), fmt6(q.rmse), q.n_test.to_string()]);
        report.push_row(row);
    }
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.0).collect();
    sizes.dedup();
    for size in sizes {
        let of = |f: fn(&QualityReport) -> f64| median(cells.iter().filter(|c| c.0 == size).map(|c| f(&c.2)).collect());
        let mut row = prefix(size);
        row.extend([
            size.to_string(),
            "median".to_string(),
            fmt6(of(|q| q.mae)),
            fmt6(of(|q| q.mae_pct)),
            fmt6(of(|q| q.rmse)),
            cells.iter().find(|c| c.0 == size).map_or(0, |c| c.2.n_test).to_string(),
        ]);
        report.push_row(row);
    }
}

/// Median test MAE per size, read back from a learning-curve or subdomain report.
pub fn median_mae(report: &ExperimentReport, subdomain: Option<&str>) -> Vec<(usize, f64)> {
    let col = |name: &str| report.columns.iter().position(|c| c == name).expect("report column");
    let (size, rep, mae) = (col("size"), col("repeat"), col("mae"));
    let td = report.columns.iter().position(|c| c == "subdomain");
    report
        .rows
        .iter()
        .filter(|r| r[rep] == "median" && subdomain.is_none_or(|s| td.is_some_and(|t| r[t] == s)))
        .map(|r| (r[size].parse().unwrap(), r[mae].parse().unwrap()))
        .collect()
}

/// Test error per subdomain and training size; each subdomain is trained
/// and tested on its own examples.
pub fn subdomain_study<T: Scalar>(data: &Dataset, subdomains: &[SubdomainSpec], cfg: &StudyConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if subdomains.is_empty() {
        return Err(Error::InvalidArgument("no subdomains given".into()));
    }
    let mut report = ExperimentReport::new(
        "subdomain_study",
        &["subdomain", "width", "size", "repeat", "mae", "mae_pct", "rmse", "n_test"],
    );
    cfg.stamp(&mut report);
    report.param("n_examples", data.len());
    for sub in subdomains {
        let cells = study_cells::<T>(data, sub, cfg)?;
        push_cells(&mut report, &cells, |_| vec![sub.id.to_string(), sub.width().to_string()]);
        report.param(&format!("{}", sub.id), sub);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SimulatedAnnealing,
    HillClimb,
    Exhaustive,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sa" => Ok(OptimizerKind::SimulatedAnnealing),
            "hc" => Ok(OptimizerKind::HillClimb),
            "exhaustive" => Ok(OptimizerKind::Exhaustive),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer {s:?} (sa|hc|exhaustive)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::SimulatedAnnealing => "sa",
            OptimizerKind::HillClimb => "hc",
            OptimizerKind::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub optimizer: OptimizerKind,
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            optimizer: OptimizerKind::SimulatedAnnealing,
            budget: AnnealingSchedule::DEFAULT_BUDGET,
            restarts: 1,
            seed: 0,
        }
    }
}

pub fn run_optimizer<T: Scalar>(objective: &Objective<T>, ctx: &SearchContext, s: &SearchSettings) -> Result<TuningResult<T>> {
    match s.optimizer {
        OptimizerKind::Exhaustive => exhaustive_search(objective, ctx),
        OptimizerKind::HillClimb => hill_climb(objective, ctx, None, s.budget, s.seed),
        OptimizerKind::SimulatedAnnealing => {
            let schedule = AnnealingSchedule::calibrated(objective, ctx, s.budget, s.seed)?;
            simulated_annealing_restarts(objective, ctx, &schedule, s.restarts)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub result: TuningResult<f64>,
    pub target: Target,
    pub workload: Workload,
    pub physical: Physical,
    /// The requested context never occurred in the model's training data.
    pub extrapolated: bool,
    pub report: ExperimentReport,
}

/// Optimizes the model's target over the knobs at the given context.
pub fn tune_with_model<T: Scalar>(
    model: &ModelFile<T>,
    workload: Workload,
    physical: Physical,
    settings: &SearchSettings,
) -> Result<TuneOutcome> {
    let domain = model.domain()?;
    let ctx = SearchContext::new(domain.clone(), workload, physical)?;
    let probe = domain.default_configuration(workload, physical);
    if !model.subdomain.admits(&probe) {
        return Err(Error::InvalidArgument(format!(
            "model subdomain {} does not admit workload {workload} with {physical}",
            model.subdomain
        )));
    }
    let sub = model.subdomain;
    let objective = Objective::new(model.target, |p: &ConfigurationPoint| {
        let v = domain.encode::<T>(&sub, p).expect("search points lie in the subdomain");
        crate::surrogate::Predictor::predict_unchecked(&model.model, v.as_slice()).as_f64()
    });
    let result = run_optimizer(&objective, &ctx, settings)?;
    let extrapolated = model.is_extrapolation(workload, physical);
    let mut outcome = finish_tune(result, model.target, workload, physical, extrapolated, settings, "surrogate");
    outcome.report.param("subdomain", model.subdomain).param("algorithm", model.model.hyperparams().algorithm);
    Ok(outcome)
}

/// Optimizes directly against the noiseless oracle, bypassing any surrogate.
pub fn tune_with_oracle(
    oracle: &SyntheticOracle,
    target: Target,
    workload: Workload,
    physical: Physical,
    settings: &SearchSettings,
) -> Result<TuneOutcome> {
    let ctx = SearchContext::new(oracle.domain().clone(), workload, physical)?;
    let objective = Objective::new(target, |p: &ConfigurationPoint| oracle.value(p, target).expect("valid point"));
    let result = run_optimizer(&objective, &ctx, settings)?;
    Ok(finish_tune(result, target, workload, physical, false, settings, "oracle"))
}

fn finish_tune(
    result: TuningResult<f64>,
    target: Target,
    workload: Workload,
    physical: Physical,
    extrapolated: bool,
    s: &SearchSettings,
    objective: &str,
) -> TuneOutcome {
    let mut report = ExperimentReport::new("tune", &["parameter", "value"]);
    report
        .param("seed", s.seed)
        .param("objective", objective)
        .param("target", target)
        .param("direction", if target.maximize() { "maximize" } else { "minimize" })
        .param("workload", workload)
        .param("node_count", physical.node_count)
        .param("replication_factor", physical.replication_factor)
        .param("optimizer", s.optimizer.name())
        .param("budget", s.budget)
        .param("restarts", s.restarts)
        .param("evaluations", result.evaluations)
        .param("extrapolated", extrapolated);
    for k in Param::KNOBS {
        let v = result.best.get(k);
        let shown = if k == Param::TrickleFsync { (v != 0).to_string() } else { v.to_string() };
        report.push_row(vec![k.name().to_string(), shown]);
    }
    report.push_row(vec![format!("predicted_{}", target.name()), fmt6(result.value)]);
    TuneOutcome { result, target, workload, physical, extrapolated, report }
}

/// Measures `tuned` and the default configuration `trials` times each on
/// the same invocation indices and reports means and percent deltas.
pub fn compare(
    backend: &dyn BenchmarkBackend,
    domain: &TuningDomain,
    tuned: &ConfigurationPoint,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    domain.check(tuned)?;
    let baseline = domain.default_configuration(tuned.workload(), tuned.physical());
    let base_inv = derive_seed(seed, 0) >> 16;
    let t = measure_repeated(backend, tuned, trials, base_inv)?;
    let b = measure_repeated(backend, &baseline, trials, base_inv)?;
    let mean = |m: &crate::harness::RepeatedMeasurement| -> Result<Metrics> {
        m.mean.ok_or_else(|| Error::Backend(m.failures.first().cloned().expect("all trials failed")))
    };
    let (tm, bm) = (mean(&t)?, mean(&b)?);

    let mut report = ExperimentReport::new("compare", &["metric", "default", "tuned", "delta_pct"]);
    report
        .param("seed", seed)
        .param("workload", tuned.workload())
        .param("node_count", tuned.physical().node_count)
        .param("replication_factor", tuned.physical().replication_factor)
        .param("trials", trials)
        .param("failed_trials_default", b.failures.len())
        .param("failed_trials_tuned", t.failures.len());
    for k in Param::KNOBS {
        report.param(&format!("tuned.{}", k.name()), tuned.get(k));
    }
    for target in Target::ALL {
        let (d, v) = (target.of(&bm), target.of(&tm));
        report.push_row(vec![target.name().to_string(), fmt6(d), fmt6(v), fmt6(100.0 * (v - d) / d)]);
    }
    Ok(report)
}

/// Percent delta column of a compare report, by metric name.
pub fn compare_delta(report: &ExperimentReport, target: Target) -> Option<f64> {
    report.rows.iter().find(|r| r[0] == target.name()).and_then(|r| r[3].parse().ok())
}
