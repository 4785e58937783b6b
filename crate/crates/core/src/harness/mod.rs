//! Training-example generation over a pluggable benchmark backend.
//!
//! Each example runs the five-step protocol: stop, configure, start (the
//! backend's `prepare`), run the workload and capture metrics (`measure`),
//! then store the row. Knob values for example `i` come from substream `i`
//! of the plan seed, so the dataset does not depend on scheduling.

mod config;
mod external;

pub use config::{BackendKind, HarnessConfig};
pub use external::{parse_metrics, ExternalBackend, ExternalBackendConfig};

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{quantize, Dataset, TrainingExample};
use crate::domain::{ConfigurationPoint, Physical, TuningDomain, Workload};
use crate::error::{Error, Result};
use crate::oracle::{Metrics, OracleParams, SyntheticOracle};
use crate::rng::SplitMix64;

/// Attempts per example before it is logged as failed.
pub const DEFAULT_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Stop,
    Configure,
    Start,
    Workload,
    Capture,
}

impl Step {
    pub const ORDER: [Step; 5] = [Step::Stop, Step::Configure, Step::Start, Step::Workload, Step::Capture];

    pub fn name(self) -> &'static str {
        match self {
            Step::Stop => "stop",
            Step::Configure => "configure",
            Step::Start => "start",
            Step::Workload => "workload",
            Step::Capture => "capture",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A benchmark step that did not complete.
#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("backend failure at step \"{step}\": {message}")]
pub struct BackendFailure {
    pub step: Step,
    pub message: String,
}

impl BackendFailure {
    pub fn new(step: Step, message: impl Into<String>) -> Self {
        BackendFailure { step, message: message.into() }
    }
}

/// A system that can be reconfigured and measured.
pub trait BenchmarkBackend: Sync {
    /// Exclusive backends are driven strictly one example at a time.
    fn requires_exclusive_access(&self) -> bool;

    /// Brings the system into the configuration `point` (stop, configure, start).
    fn prepare(&self, point: &ConfigurationPoint) -> Result<(), BackendFailure>;

    /// Runs the point's workload and returns the captured metrics.
    /// `invocation` distinguishes repeated measurements of the same point.
    fn measure(&self, point: &ConfigurationPoint, invocation: u64) -> Result<Metrics, BackendFailure>;
}

/// The closed-form oracle behind the backend contract.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    oracle: SyntheticOracle,
}

impl SyntheticBackend {
    pub fn new(domain: TuningDomain, params: OracleParams) -> Result<Self> {
        Ok(SyntheticBackend { oracle: SyntheticOracle::new(domain, params)? })
    }

    pub fn oracle(&self) -> &SyntheticOracle {
        &self.oracle
    }
}

impl BenchmarkBackend for SyntheticBackend {
    fn requires_exclusive_access(&self) -> bool {
        false
    }

    fn prepare(&self, _point: &ConfigurationPoint) -> Result<(), BackendFailure> {
        Ok(())
    }

    fn measure(&self, point: &ConfigurationPoint, invocation: u64) -> Result<Metrics, BackendFailure> {
        self.oracle.metrics(point, invocation).map_err(|e| BackendFailure::new(Step::Workload, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCell {
    pub workload: Workload,
    pub physical: Physical,
    pub count: usize,
}

/// Which contexts to sample and how many examples each; knobs are drawn
/// uniformly and independently from their value lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub cells: Vec<PlanCell>,
    pub seed: u64,
}

impl SamplingPlan {
    /// The reference layout: three workloads times the eight measured
    /// physical designs, `per_cell` examples each.
    pub fn reference(per_cell: usize, seed: u64) -> Self {
        let mut cells = Vec::new();
        for workload in [Workload::READWRITE, Workload::WRITEHEAVY, Workload::READHEAVY] {
            for physical in Physical::measured() {
                cells.push(PlanCell { workload, physical, count: per_cell });
            }
        }
        SamplingPlan { cells, seed }
    }

    /// Drops every cell with the given physical design.
    pub fn excluding(mut self, physical: Physical) -> Self {
        self.cells.retain(|c| c.physical != physical);
        self
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn validate(&self, domain: &TuningDomain) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("sampling plan has no cells".into()));
        }
        for c in &self.cells {
            if c.count < 1 {
                return Err(Error::Config(format!("cell {} {} has count 0", c.workload, c.physical)));
            }
            let mut p = domain.default_configuration(Workload::READWRITE, Physical { node_count: 4, replication_factor: 1 });
            p.set_workload(c.workload);
            p.set_physical(c.physical);
            domain.check(&p).map_err(|e| Error::Config(format!("cell {} {}: {e}", c.workload, c.physical)))?;
        }
        Ok(())
    }

    /// The unmeasured point for example `index`.
    pub fn point(&self, domain: &TuningDomain, index: usize) -> ConfigurationPoint {
        let mut offset = index;
        let cell = self
            .cells
            .iter()
            .find(|c| {
                if offset < c.count {
                    true
                } else {
                    offset -= c.count;
                    false
                }
            })
            .expect("index within plan");
        let mut p = domain.default_configuration(cell.workload, cell.physical);
        domain.sample_knobs(&mut p, &mut SplitMix64::substream(self.seed, index as u64));
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// One generation-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: usize,
    pub status: Status,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<Step>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub dataset: Dataset,
    pub log: Vec<LogRecord>,
}

impl Generation {
    pub fn failures(&self) -> usize {
        self.log.iter().filter(|r| r.status == Status::Failed).count()
    }

    /// Line-delimited JSON records.
    pub fn log_lines(&self) -> String {
        self.log.iter().map(|r| serde_json::to_string(r).expect("log serializes") + "\n").collect()
    }
}

pub fn generate_dataset(backend: &dyn BenchmarkBackend, domain: &TuningDomain, plan: &SamplingPlan) -> Result<Generation> {
    generate_dataset_with(backend, domain, plan, DEFAULT_ATTEMPTS)
}

/// Runs the plan. Failed examples are logged and left out; only an invalid
/// plan aborts. Rows appear in example-index order.
pub fn generate_dataset_with(
    backend: &dyn BenchmarkBackend,
    domain: &TuningDomain,
    plan: &SamplingPlan,
    max_attempts: u32,
) -> Result<Generation> {
    plan.validate(domain)?;
    if max_attempts < 1 {
        return Err(Error::Config("max_attempts must be ≥ 1".into()));
    }
    let run = |i: usize| run_example(backend, domain, plan, i, max_attempts);
    let results: Vec<(Option<TrainingExample>, LogRecord)> = if backend.requires_exclusive_access() {
        (0..plan.total()).map(run).collect()
    } else {
        (0..plan.total()).into_par_iter().map(run).collect()
    };
    let mut dataset = Dataset::new(domain.clone());
    let mut log = Vec::with_capacity(results.len());
    for (example, record) in results {
        if let Some(e) = example {
            dataset.push(e)?;
        }
        log.push(record);
    }
    Ok(Generation { dataset, log })
}

fn run_example(
    backend: &dyn BenchmarkBackend,
    domain: &TuningDomain,
    plan: &SamplingPlan,
    index: usize,
    max_attempts: u32,
) -> (Option<TrainingExample>, LogRecord) {
    let started = Instant::now();
    let point = plan.point(domain, index);
    let mut last = None;
    let mut attempts = 0;
    while attempts < max_attempts {
        attempts += 1;
        let outcome = backend.prepare(&point).and_then(|_| backend.measure(&point, index as u64)).and_then(|m| {
            TrainingExample::new(point, quantize(m)).map_err(|e| BackendFailure::new(Step::Capture, e.to_string()))
        });
        match outcome {
            Ok(example) => {
                let record = LogRecord {
                    index,
                    status: Status::Ok,
                    attempts,
                    step: None,
                    message: None,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                };
                return (Some(example), record);
            }
            Err(f) => last = Some(f),
        }
    }
    let f = last.expect("at least one attempt");
    let record = LogRecord {
        index,
        status: Status::Failed,
        attempts,
        step: Some(f.step),
        message: Some(f.message),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    (None, record)
}

/// Result of measuring one point several times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedMeasurement {
    /// Arithmetic mean of the successful trials; `None` if all failed.
    pub mean: Option<Metrics>,
    pub trials: Vec<Metrics>,
    pub failures: Vec<BackendFailure>,
}

/// Prepares and measures `point` `trials` times. Trial `t` uses invocation
/// `first_invocation + t`, so repeated calls with the same base are identical.
pub fn measure_repeated(
    backend: &dyn BenchmarkBackend,
    point: &ConfigurationPoint,
    trials: usize,
    first_invocation: u64,
) -> Result<RepeatedMeasurement> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
    }
    let mut ok = Vec::with_capacity(trials);
    let mut failures = Vec::new();
    for t in 0..trials as u64 {
        match backend.prepare(point).and_then(|_| backend.measure(point, first_invocation + t)) {
            Ok(m) => ok.push(m),
            Err(f) => failures.push(f),
        }
    }
    let mean = (!ok.is_empty()).then(|| {
        let n = ok.len() as f64;
        Metrics {
            throughput_ops: ok.iter().map(|m| m.throughput_ops).sum::<f64>() / n,
            read_latency_ms: ok.iter().map(|m| m.read_latency_ms).sum::<f64>() / n,
            write_latency_ms: ok.iter().map(|m| m.write_latency_ms).sum::<f64>() / n,
        }
    });
    Ok(RepeatedMeasurement { mean, trials: ok, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn domain() -> TuningDomain {
        TuningDomain::cassandra(1, 8192).unwrap()
    }

    fn synthetic(sigma: f64, seed: u64) -> SyntheticBackend {
        SyntheticBackend::new(domain(), OracleParams { noise_sigma: sigma, seed, ..OracleParams::default() }).unwrap()
    }

    #[test]
    fn reference_plan_counts() {
        let plan = SamplingPlan::reference(100, 1);
        assert_eq!(plan.cells.len(), 24);
        let g = generate_dataset(&synthetic(0.02, 0), &domain(), &plan).unwrap();
        assert_eq!(g.dataset.len(), 2400);
        assert_eq!(g.failures(), 0);
        assert_eq!(g.log.len(), 2400);
        let summary = g.dataset.summarize();
        assert_eq!(summary.rows.len(), 24);
        assert!(summary.rows.iter().all(|r| r.stats.count == 100));
    }

    #[test]
    fn excluded_cell_is_absent() {
        let p21 = Physical::new(2, 1).unwrap();
        let mut plan = SamplingPlan::reference(5, 1);
        for w in [Workload::READWRITE, Workload::WRITEHEAVY, Workload::READHEAVY] {
            plan.cells.push(PlanCell { workload: w, physical: p21, count: 5 });
        }
        let plan = plan.excluding(p21);
        let g = generate_dataset(&synthetic(0.0, 0), &domain(), &plan).unwrap();
        assert!(g.dataset.examples().iter().all(|e| e.point.physical() != p21));
        assert_eq!(g.dataset.len(), 120);
    }

    #[test]
    fn rows_are_valid_and_reproducible() {
        let plan = SamplingPlan::reference(20, 77);
        let d = domain();
        let a = generate_dataset(&synthetic(0.02, 3), &d, &plan).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_dataset(&synthetic(0.02, 3), &d, &plan).unwrap());
        assert_eq!(a.dataset.to_csv_string(), b.dataset.to_csv_string());
        for e in a.dataset.examples() {
            assert!(d.validate(&e.point).is_empty());
        }
    }

    #[test]
    fn invalid_plans_abort() {
        let d = domain();
        let bad = SamplingPlan {
            cells: vec![PlanCell { workload: Workload::READWRITE, physical: Physical { node_count: 2, replication_factor: 3 }, count: 1 }],
            seed: 0,
        };
        assert!(generate_dataset(&synthetic(0.0, 0), &d, &bad).is_err());
        let empty = SamplingPlan { cells: vec![], seed: 0 };
        assert!(generate_dataset(&synthetic(0.0, 0), &d, &empty).is_err());
    }

    /// Fails the first attempt of every odd example and every attempt of example 4.
    struct Flaky {
        inner: SyntheticBackend,
        calls: AtomicUsize,
        seen: std::sync::Mutex<std::collections::HashSet<u64>>,
    }

    impl BenchmarkBackend for Flaky {
        fn requires_exclusive_access(&self) -> bool {
            true
        }
        fn prepare(&self, _: &ConfigurationPoint) -> Result<(), BackendFailure> {
            Ok(())
        }
        fn measure(&self, p: &ConfigurationPoint, inv: u64) -> Result<Metrics, BackendFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let first = self.seen.lock().unwrap().insert(inv);
            if inv == 4 || (inv % 2 == 1 && first) {
                return Err(BackendFailure::new(Step::Workload, "flaky"));
            }
            self.inner.measure(p, inv)
        }
    }

    #[test]
    fn failures_are_retried_then_logged_and_skipped() {
        let d = domain();
        let backend = Flaky { inner: synthetic(0.0, 0), calls: AtomicUsize::new(0), seen: Default::default() };
        let plan = SamplingPlan { cells: vec![PlanCell { workload: Workload::READWRITE, physical: Physical::new(4, 3).unwrap(), count: 8 }], seed: 2 };
        let g = generate_dataset(&backend, &d, &plan).unwrap();
        assert_eq!(g.dataset.len(), 7);
        assert_eq!(g.failures(), 1);
        let failed = g.log.iter().find(|r| r.status == Status::Failed).unwrap();
        assert_eq!((failed.index, failed.step, failed.attempts), (4, Some(Step::Workload), 2));
        assert_eq!(g.log[1].attempts, 2);
        assert_eq!(g.log[0].attempts, 1);
        // the surviving rows are exactly the ones a clean run produces
        let clean = generate_dataset(&synthetic(0.0, 0), &d, &plan).unwrap();
        let mut expected = clean.dataset.examples().to_vec();
        expected.remove(4);
        assert_eq!(g.dataset.examples(), &expected[..]);
        let line = g.log_lines().lines().nth(4).unwrap().to_string();
        assert!(line.contains("\"status\":\"failed\"") && line.contains("\"step\":\"workload\""));
    }

    #[test]
    fn repeated_measurements() {
        let d = domain();
        let p = d.default_configuration(Workload::READWRITE, Physical::new(4, 3).unwrap());
        let one = measure_repeated(&synthetic(0.02, 1), &p, 1, 0).unwrap();
        assert_eq!(one.mean.unwrap(), one.trials[0]);
        let flat = measure_repeated(&synthetic(0.0, 1), &p, 5, 0).unwrap();
        assert!(flat.trials.iter().all(|m| *m == flat.trials[0]));
        assert!(measure_repeated(&synthetic(0.0, 1), &p, 0, 0).is_err());
    }

    #[test]
    fn repeated_mean_concentrates() {
        let d = domain();
        let p = d.default_configuration(Workload::READWRITE, Physical::new(4, 3).unwrap());
        let truth = synthetic(0.0, 0).oracle().noiseless(&p).unwrap();
        let bound = 3.0 * 0.02 / 5f64.sqrt();
        let means: Vec<Metrics> =
            (0..1000).map(|seed| measure_repeated(&synthetic(0.02, seed), &p, 5, 0).unwrap().mean.unwrap()).collect();
        let read = means.iter().filter(|m| (m.read_latency_ms / truth.read_latency_ms - 1.0).abs() <= bound).count();
        let write = means.iter().filter(|m| (m.write_latency_ms / truth.write_latency_ms - 1.0).abs() <= bound).count();
        assert!(read >= 990 && write >= 990, "read {read}/1000, write {write}/1000 within bound");
    }
}
