//! Closed-form synthetic performance model standing in for a real cluster.
//!
//! Knob positions are normalised to `u = index / (|domain| - 1)`. With
//! `k, r, c, qr, qw, m` the positions of key cache, row cache, commitlog
//! segment, concurrent reads, concurrent writes and memtable space, `t` the
//! trickle_fsync flag and `p` the read fraction:
//!
//! ```text
//! L_r = 4.0 sqrt(4/n) (1 + 0.5 (rf-1)/(n-1)) (1.8 - 0.5k - 0.3r)
//!           (1 + 0.6 (qr-0.5)^2) (1 + 0.5 max(0, r+m-1))
//! L_w = 2.5 (1 + 0.35 (rf-1)) (1.5 - 0.4m - 0.1c) (1 + 0.8 (qw-0.625)^2)
//!           (1 + 0.1t) (1 + 0.4 max(0, r+m-1))
//! X   = C n 1000 / (p L_r + (1-p) L_w)
//! ```
//!
//! Noise multiplies each latency by `1 + eps`, `eps ~ N(0, sigma)` clamped to
//! `±3 sigma`, and throughput is recomputed from the noisy latencies.

use serde::{Deserialize, Serialize};

use crate::domain::{ConfigurationPoint, Param, TuningDomain};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Relative standard deviation of latency noise.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Client concurrency per node, `C`.
    pub client_concurrency: u32,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { noise_sigma: 0.02, seed: 0, client_concurrency: 64 }
    }
}

impl OracleParams {
    pub fn noiseless() -> Self {
        OracleParams { noise_sigma: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be finite and ≥ 0".into()));
        }
        if self.client_concurrency < 1 {
            return Err(Error::InvalidArgument("client_concurrency must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Throughput in ops/s and mean latencies in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub throughput_ops: f64,
    pub read_latency_ms: f64,
    pub write_latency_ms: f64,
}

/// Which measured quantity a model predicts or a search optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Throughput,
    ReadLatency,
    WriteLatency,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Throughput, Target::ReadLatency, Target::WriteLatency];

    pub fn name(self) -> &'static str {
        match self {
            Target::Throughput => "throughput",
            Target::ReadLatency => "read_latency",
            Target::WriteLatency => "write_latency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown target {s:?}")))
    }

    /// Throughput is maximised, latencies minimised.
    pub fn maximize(self) -> bool {
        self == Target::Throughput
    }

    pub fn of(self, m: &Metrics) -> f64 {
        match self {
            Target::Throughput => m.throughput_ops,
            Target::ReadLatency => m.read_latency_ms,
            Target::WriteLatency => m.write_latency_ms,
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The oracle bound to a domain (needed for knob positions).
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    domain: TuningDomain,
    params: OracleParams,
}

impl SyntheticOracle {
    pub fn new(domain: TuningDomain, params: OracleParams) -> Result<Self> {
        params.validate()?;
        Ok(SyntheticOracle { domain, params })
    }

    pub fn domain(&self) -> &TuningDomain {
        &self.domain
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    fn position(&self, point: &ConfigurationPoint, param: Param) -> f64 {
        let spec = self.domain.spec(param);
        let idx = spec.index_of(point.get(param)).expect("validated point");
        if spec.cardinality() < 2 {
            0.0
        } else {
            idx as f64 / (spec.cardinality() - 1) as f64
        }
    }

    /// Noise-free read and write latency.
    pub fn latencies(&self, point: &ConfigurationPoint) -> Result<(f64, f64)> {
        self.domain.check(point)?;
        let n = point.get(Param::NodeCount) as f64;
        let rf = point.get(Param::ReplicationFactor) as f64;
        let k = self.position(point, Param::KeyCacheSizeInMb);
        let r = self.position(point, Param::RowCacheSizeInMb);
        let c = self.position(point, Param::CommitlogSegmentSizeInMb);
        let qr = self.position(point, Param::ConcurrentReads);
        let qw = self.position(point, Param::ConcurrentWrites);
        let m = self.position(point, Param::MemtableHeapSpaceInMb);
        let t = point.get(Param::TrickleFsync) as f64;
        let pressure = (r + m - 1.0).max(0.0);

        let read = 4.0
            * (4.0 / n).sqrt()
            * (1.0 + 0.5 * (rf - 1.0) / (n - 1.0))
            * (1.8 - 0.5 * k - 0.3 * r)
            * (1.0 + 0.6 * (qr - 0.5).powi(2))
            * (1.0 + 0.5 * pressure);
        let write = 2.5
            * (1.0 + 0.35 * (rf - 1.0))
            * (1.5 - 0.4 * m - 0.1 * c)
            * (1.0 + 0.8 * (qw - 0.625).powi(2))
            * (1.0 + 0.1 * t)
            * (1.0 + 0.4 * pressure);
        Ok((read, write))
    }

    fn throughput(&self, point: &ConfigurationPoint, read: f64, write: f64) -> f64 {
        let n = point.get(Param::NodeCount) as f64;
        let p = point.get(Param::WlReadPct) as f64 / 100.0;
        self.params.client_concurrency as f64 * n * 1000.0 / (p * read + (1.0 - p) * write)
    }

    /// Metrics for `point`. Noise for call `invocation` comes from the
    /// sub-stream `(seed, invocation)`, so equal arguments give equal metrics.
    pub fn metrics(&self, point: &ConfigurationPoint, invocation: u64) -> Result<Metrics> {
        let (mut read, mut write) = self.latencies(point)?;
        let sigma = self.params.noise_sigma;
        if sigma > 0.0 {
            let mut rng = SplitMix64::substream(self.params.seed, invocation);
            let mut eps = || (sigma * rng.standard_normal()).clamp(-3.0 * sigma, 3.0 * sigma);
            read *= 1.0 + eps();
            write *= 1.0 + eps();
        }
        Ok(Metrics {
            throughput_ops: self.throughput(point, read, write),
            read_latency_ms: read,
            write_latency_ms: write,
        })
    }

    /// Noise-free metrics.
    pub fn noiseless(&self, point: &ConfigurationPoint) -> Result<Metrics> {
        let (read, write) = self.latencies(point)?;
        Ok(Metrics {
            throughput_ops: self.throughput(point, read, write),
            read_latency_ms: read,
            write_latency_ms: write,
        })
    }

    /// Noise-free value of one target.
    pub fn value(&self, point: &ConfigurationPoint, target: Target) -> Result<f64> {
        Ok(target.of(&self.noiseless(point)?))
    }
}

/// Outcome of [`trend_check`].
#[derive(Debug, Clone, Default)]
pub struct TrendReport {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl TrendReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Verifies the qualitative trends of the noise-free model on `samples`
/// random knob settings: latency rises with replication, read latency falls
/// and throughput rises with node count, and `X (p L_r + (1-p) L_w) = C n 1000`.
pub fn trend_check(oracle: &SyntheticOracle, samples: usize, seed: u64) -> TrendReport {
    let domain = oracle.domain();
    let mut rng = SplitMix64::substream(seed, 0);
    let mut report = TrendReport::default();
    let c = oracle.params().client_concurrency as f64;
    let fail = |report: &mut TrendReport, ok: bool, msg: String| {
        report.checks += 1;
        if !ok {
            report.failures.push(msg);
        }
    };

    for _ in 0..samples {
        let mut base = domain.default_configuration(
            crate::domain::Workload { read_pct: 0, write_pct: 100 },
            crate::domain::Physical { node_count: 4, replication_factor: 1 },
        );
        let read_pct = rng.below(101) as i64;
        base.set(Param::WlReadPct, read_pct);
        base.set(Param::WlWritePct, 100 - read_pct);
        for k in Param::KNOBS {
            let vals = &domain.spec(k).values;
            base.set(k, vals[rng.below(vals.len())]);
        }

        for n in [2i64, 3, 4] {
            let mut prev: Option<(f64, f64)> = None;
            for rf in 1..=n {
                let pt = base.with(Param::NodeCount, n).with(Param::ReplicationFactor, rf);
                let m = oracle.noiseless(&pt).expect("valid point");
                if let Some((pr, pw)) = prev {
                    fail(
                        &mut report,
                        m.read_latency_ms > pr && m.write_latency_ms > pw,
                        format!("rf {}→{rf} at n={n} did not raise latency for {pt:?}", rf - 1),
                    );
                }
                prev = Some((m.read_latency_ms, m.write_latency_ms));
                let p = read_pct as f64 / 100.0;
                let lhs = m.throughput_ops * (p * m.read_latency_ms + (1.0 - p) * m.write_latency_ms);
                let rhs = c * n as f64 * 1000.0;
                fail(
                    &mut report,
                    (lhs - rhs).abs() <= 1e-9 * rhs,
                    format!("throughput identity off by {} for {pt:?}", lhs - rhs),
                );
            }
        }

        for rf in 1i64..=2 {
            let mut prev: Option<Metrics> = None;
            for n in rf.max(2)..=4 {
                let pt = base.with(Param::NodeCount, n).with(Param::ReplicationFactor, rf);
                let m = oracle.noiseless(&pt).expect("valid point");
                if let Some(pm) = prev {
                    fail(
                        &mut report,
                        m.read_latency_ms < pm.read_latency_ms && m.throughput_ops > pm.throughput_ops,
                        format!("n {}→{n} at rf={rf} did not improve reads/throughput for {pt:?}", n - 1),
                    );
                }
                prev = Some(m);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Physical, Workload};
    use approx::assert_relative_eq;

    fn oracle(sigma: f64) -> SyntheticOracle {
        SyntheticOracle::new(
            TuningDomain::cassandra(1, 8192).unwrap(),
            OracleParams { noise_sigma: sigma, seed: 5, client_concurrency: 64 },
        )
        .unwrap()
    }

    /// n=4, rf=3, k=r=m=c=0, qr=0.5, qw=0, t=0.
    fn reference_point() -> ConfigurationPoint {
        TuningDomain::cassandra(1, 8192)
            .unwrap()
            .default_configuration(Workload::READWRITE, Physical { node_count: 4, replication_factor: 3 })
            .with(Param::KeyCacheSizeInMb, 0)
            .with(Param::RowCacheSizeInMb, 0)
            .with(Param::MemtableHeapSpaceInMb, 256)
            .with(Param::CommitlogSegmentSizeInMb, 4)
            .with(Param::ConcurrentReads, 8)
            .with(Param::ConcurrentWrites, 2)
            .with(Param::TrickleFsync, 0)
    }

    #[test]
    fn hand_computed_reference_point() {
        let m = oracle(0.0).noiseless(&reference_point()).unwrap();
        // 4 * 1 * (1 + 1/3) * 1.8
        assert_relative_eq!(m.read_latency_ms, 9.6, max_relative = 1e-12);
        // 2.5 * 1.7 * 1.5 * (1 + 0.8 * 0.625^2)
        assert_relative_eq!(m.write_latency_ms, 8.3671875, max_relative = 1e-12);
        assert_relative_eq!(m.throughput_ops, 256_000.0 / 8.98359375, max_relative = 1e-12);
        assert!((m.throughput_ops - 28_496.39).abs() < 0.01);
    }

    #[test]
    fn replication_ratio_for_writes() {
        let o = oracle(0.0);
        let p = reference_point();
        let w1 = o.noiseless(&p.with(Param::ReplicationFactor, 1)).unwrap().write_latency_ms;
        let w4 = o.noiseless(&p.with(Param::ReplicationFactor, 4)).unwrap().write_latency_ms;
        assert_relative_eq!(w4 / w1, 2.05, max_relative = 1e-12);
    }

    #[test]
    fn default_and_best_read_latency() {
        let o = oracle(0.0);
        let d = o.domain().clone();
        let ctx = (Workload::WRITEHEAVY, Physical { node_count: 4, replication_factor: 3 });
        let def = d.default_configuration(ctx.0, ctx.1);
        assert_relative_eq!(o.noiseless(&def).unwrap().read_latency_ms, 7.973_333_333_333_333, max_relative = 1e-12);
        let best = def
            .with(Param::KeyCacheSizeInMb, 32)
            .with(Param::RowCacheSizeInMb, 200)
            .with(Param::MemtableHeapSpaceInMb, 256)
            .with(Param::ConcurrentReads, 8);
        assert_relative_eq!(o.noiseless(&best).unwrap().read_latency_ms, 16.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn trends_hold_without_noise() {
        let r = trend_check(&oracle(0.0), 500, 1);
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.checks > 1000);
    }

    #[test]
    fn noise_is_deterministic_and_keeps_identity() {
        let o = oracle(0.02);
        let p = reference_point();
        let a = o.metrics(&p, 17).unwrap();
        let b = o.metrics(&p, 17).unwrap();
        let c = o.metrics(&p, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let lhs = a.throughput_ops * (0.5 * a.read_latency_ms + 0.5 * a.write_latency_ms);
        assert_relative_eq!(lhs, 256_000.0, max_relative = 1e-12);
        let clean = o.noiseless(&p).unwrap();
        assert!((a.read_latency_ms / clean.read_latency_ms - 1.0).abs() <= 0.06 + 1e-12);
    }

    #[test]
    fn metrics_positive_everywhere_on_a_sample() {
        let o = oracle(0.05);
        let d = o.domain().clone();
        let mut rng = SplitMix64::new(3);
        for i in 0..2000 {
            let p = crate::domain::tests::random_point(&d, &mut rng);
            let m = o.metrics(&p, i).unwrap();
            assert!(m.throughput_ops > 0.0 && m.read_latency_ms > 0.0 && m.write_latency_ms > 0.0);
        }
    }

    #[test]
    fn rejects_invalid_point() {
        let o = oracle(0.0);
        assert!(o.noiseless(&reference_point().with(Param::NodeCount, 2)).is_err());
    }
}
