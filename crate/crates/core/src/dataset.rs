//! Training examples, the CSV schema, seeded splitting and subsampling,
//! subdomain filtering and the per-context summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{ConfigurationPoint, Param, Physical, SubdomainSpec, TuningDomain, Workload, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::oracle::{Metrics, Target};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::surrogate::FeatureMatrix;

/// Canonical CSV header. Knob columns hold raw values, not ordinal indices.
pub const CSV_HEADER: &str = "wl_read_pct,wl_write_pct,node_count,replication_factor,trickle_fsync,\
key_cache_size_in_mb,row_cache_size_in_mb,commitlog_segment_size_in_mb,concurrent_reads,\
concurrent_writes,memtable_heap_space_in_mb,throughput_ops,read_latency_ms,write_latency_ms";

const METRIC_COLUMNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingExample {
    pub point: ConfigurationPoint,
    pub metrics: Metrics,
}

impl TrainingExample {
    pub fn new(point: ConfigurationPoint, metrics: Metrics) -> Result<Self> {
        for (name, v) in [
            ("throughput_ops", metrics.throughput_ops),
            ("read_latency_ms", metrics.read_latency_ms),
            ("write_latency_ms", metrics.write_latency_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(TrainingExample { point, metrics })
    }

    pub fn target(&self, target: Target) -> f64 {
        target.of(&self.metrics)
    }
}

/// Rounds each metric to 6 decimal places, the precision stored by generated datasets.
pub fn quantize(m: Metrics) -> Metrics {
    let q = |v: f64| (v * 1e6).round() / 1e6;
    Metrics {
        throughput_ops: q(m.throughput_ops),
        read_latency_ms: q(m.read_latency_ms),
        write_latency_ms: q(m.write_latency_ms),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    domain: TuningDomain,
    examples: Vec<TrainingExample>,
}

impl Dataset {
    pub fn new(domain: TuningDomain) -> Self {
        Dataset { domain, examples: Vec::new() }
    }

    pub fn from_examples(domain: TuningDomain, examples: Vec<TrainingExample>) -> Result<Self> {
        let mut d = Dataset::new(domain);
        for e in examples {
            d.push(e)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, example: TrainingExample) -> Result<()> {
        self.domain.check(&example.point)?;
        self.examples.push(example);
        Ok(())
    }

    pub fn domain(&self) -> &TuningDomain {
        &self.domain
    }

    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            domain: self.domain.clone(),
            examples: indices.iter().map(|&i| self.examples[i]).collect(),
        }
    }

    /// Every distinct (workload, physical) context present.
    pub fn contexts(&self) -> BTreeSet<(Workload, Physical)> {
        self.examples.iter().map(|e| e.point.context()).collect()
    }

    pub fn targets<T: Scalar>(&self, target: Target) -> Vec<T> {
        self.examples.iter().map(|e| T::from_f64_lossy(e.target(target))).collect()
    }

    // CSV

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        let mut line = String::with_capacity(128);
        for e in &self.examples {
            line.clear();
            for p in Param::ALL {
                let v = e.point.get(p);
                if p == Param::TrickleFsync {
                    line.push_str(if v == 1 { "true" } else { "false" });
                } else {
                    line.push_str(&v.to_string());
                }
                line.push(',');
            }
            // Display for f64 is the shortest representation that parses back exactly.
            line.push_str(&format!(
                "{},{},{}\n",
                e.metrics.throughput_ops, e.metrics.read_latency_ms, e.metrics.write_latency_ms
            ));
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(domain: &TuningDomain, reader: R, source: &Path) -> Result<Dataset> {
        let err = |line: u64, message: String| Error::Csv { path: source.to_path_buf(), line, message };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            None => return Err(err(1, "missing header".into())),
            Some(r) => r.map_err(|e| err(1, e.to_string()))?,
        };
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(err(1, format!("header does not match the canonical schema `{CSV_HEADER}`")));
        }

        let mut dataset = Dataset::new(domain.clone());
        for rec in records {
            let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != PARAM_COUNT + METRIC_COLUMNS {
                return Err(err(line, format!("expected {} fields, found {}", PARAM_COUNT + METRIC_COLUMNS, rec.len())));
            }
            let mut values = [0i64; PARAM_COUNT];
            for (i, p) in Param::ALL.into_iter().enumerate() {
                let field = &rec[i];
                values[i] = if p == Param::TrickleFsync {
                    match field {
                        "true" => 1,
                        "false" => 0,
                        _ => return Err(err(line, format!("{p}: expected true or false, found {field:?}"))),
                    }
                } else {
                    field
                        .parse::<i64>()
                        .map_err(|_| err(line, format!("{p}: expected an integer, found {field:?}")))?
                };
            }
            let metric = |i: usize, name: &str| -> Result<f64> {
                let field = &rec[PARAM_COUNT + i];
                field
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("{name}: expected a number, found {field:?}")))
            };
            let metrics = Metrics {
                throughput_ops: metric(0, "throughput_ops")?,
                read_latency_ms: metric(1, "read_latency_ms")?,
                write_latency_ms: metric(2, "write_latency_ms")?,
            };
            let point = ConfigurationPoint::from_values(values);
            let violations = domain.validate(&point);
            if !violations.is_empty() {
                return Err(err(line, Error::InvalidPoint(violations).to_string()));
            }
            let example = TrainingExample::new(point, metrics).map_err(|e| err(line, e.to_string()))?;
            dataset.examples.push(example);
        }
        Ok(dataset)
    }

    pub fn load_csv(domain: &TuningDomain, path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Dataset::read_csv(domain, std::io::BufReader::new(file), path)
    }

    // Sampling

    /// Index partition: the first `round(fraction * N)` entries (clamped to
    /// `[1, N-1]`) of a seeded Fisher-Yates permutation form the training
    /// side. Both sides are returned in ascending index order.
    pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("cannot split {n} examples")));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let perm = SplitMix64::new(seed).permutation(n);
        let mut train = perm[..n_train].to_vec();
        let mut test = perm[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train, test) = Dataset::split_indices(self.len(), train_fraction, seed)?;
        Ok((self.select(&train), self.select(&test)))
    }

    /// Indices of a uniform `size`-subset (first `size` of a seeded permutation), ascending.
    pub fn subsample_indices(n: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
        if size > n {
            return Err(Error::InvalidArgument(format!("cannot draw {size} examples from {n}")));
        }
        let mut idx = SplitMix64::new(seed).permutation(n);
        idx.truncate(size);
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn subsample(&self, size: usize, seed: u64) -> Result<Dataset> {
        Ok(self.select(&Dataset::subsample_indices(self.len(), size, seed)?))
    }

    // Subdomains

    pub fn filter(&self, sub: &SubdomainSpec) -> Dataset {
        Dataset {
            domain: self.domain.clone(),
            examples: self.examples.iter().filter(|e| sub.admits(&e.point)).copied().collect(),
        }
    }

    /// Encoded feature matrix of every example; all must lie in `sub`.
    pub fn features<T: Scalar>(&self, sub: &SubdomainSpec) -> Result<FeatureMatrix<T>> {
        let mut m = FeatureMatrix::with_capacity(sub.width(), self.len());
        for e in &self.examples {
            m.push_row(self.domain.encode::<T>(sub, &e.point)?.as_slice())?;
        }
        Ok(m)
    }

    /// Examples inside `sub` plus their projected feature matrix.
    pub fn filter_and_project<T: Scalar>(&self, sub: &SubdomainSpec) -> Result<(Dataset, FeatureMatrix<T>)> {
        let filtered = self.filter(sub);
        if filtered.is_empty() {
            return Err(Error::EmptySubdomain(sub.to_string()));
        }
        let features = filtered.features(sub)?;
        Ok((filtered, features))
    }

    pub fn summarize(&self) -> DatasetSummary {
        let mut groups: BTreeMap<(Workload, Physical), GroupStats> = BTreeMap::new();
        for e in &self.examples {
            let m = &e.metrics;
            groups
                .entry(e.point.context())
                .and_modify(|g| {
                    g.count += 1;
                    g.throughput_max = g.throughput_max.max(m.throughput_ops);
                    g.throughput_min = g.throughput_min.min(m.throughput_ops);
                    g.read_min = g.read_min.min(m.read_latency_ms);
                    g.read_max = g.read_max.max(m.read_latency_ms);
                    g.write_min = g.write_min.min(m.write_latency_ms);
                    g.write_max = g.write_max.max(m.write_latency_ms);
                })
                .or_insert(GroupStats {
                    count: 1,
                    throughput_max: m.throughput_ops,
                    throughput_min: m.throughput_ops,
                    read_min: m.read_latency_ms,
                    read_max: m.read_latency_ms,
                    write_min: m.write_latency_ms,
                    write_max: m.write_latency_ms,
                });
        }
        let mut rows: Vec<SummaryRow> = groups
            .into_iter()
            .map(|((workload, physical), stats)| SummaryRow { workload, physical, stats })
            .collect();
        rows.sort_by_key(|r| {
            (
                workload_rank(r.workload),
                r.workload,
                std::cmp::Reverse(r.physical.node_count),
                std::cmp::Reverse(r.physical.replication_factor),
            )
        });
        DatasetSummary { rows }
    }
}

// readwrite, writeheavy, readheavy first, then anything else.
fn workload_rank(w: Workload) -> u8 {
    match w.label() {
        Some("readwrite") => 0,
        Some("writeheavy") => 1,
        Some("readheavy") => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub throughput_max: f64,
    pub throughput_min: f64,
    pub read_min: f64,
    pub read_max: f64,
    pub write_min: f64,
    pub write_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub workload: Workload,
    pub physical: Physical,
    pub stats: GroupStats,
}

/// Per (workload, n, rf) counts and metric ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub rows: Vec<SummaryRow>,
}

impl DatasetSummary {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.stats.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "wl_read_pct,wl_write_pct,node_count,replication_factor,count,throughput_max,throughput_min,\
read_latency_min,read_latency_max,write_latency_min,write_latency_max\n",
        );
        for r in &self.rows {
            let s = &r.stats;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.workload.read_pct,
                r.workload.write_pct,
                r.physical.node_count,
                r.physical.replication_factor,
                s.count,
                s.throughput_max,
                s.throughput_min,
                s.read_min,
                s.read_max,
                s.write_min,
                s.write_max
            ));
        }
        out
    }

    /// One block per workload, one row per (n, rf), mirroring the layout of
    /// the reference training-data overview.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let mut current: Option<Workload> = None;
        for r in &self.rows {
            if current != Some(r.workload) {
                if current.is_some() {
                    out.push('\n');
                }
                current = Some(r.workload);
                let name = r.workload.label().unwrap_or("custom");
                out.push_str(&format!(
                    "Workload: {name} ({}% read / {}% write)\n",
                    r.workload.read_pct, r.workload.write_pct
                ));
                out.push_str(&format!(
                    "{:>2} {:>3} {:>7} | {:>9} {:>9} | {:>7} {:>7} | {:>7} {:>7}\n",
                    "n", "rf", "count", "tput max", "tput min", "rd min", "rd max", "wr min", "wr max"
                ));
            }
            let s = &r.stats;
            out.push_str(&format!(
                "{:>2} {:>3} {:>7} | {:>9.0} {:>9.0} | {:>7.1} {:>7.1} | {:>7.1} {:>7.1}\n",
                r.physical.node_count,
                r.physical.replication_factor,
                s.count,
                s.throughput_max,
                s.throughput_min,
                s.read_min,
                s.read_max,
                s.write_min,
                s.write_max
            ));
        }
        out
    }
}
