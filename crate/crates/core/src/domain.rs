//! Tuning domain: the Cassandra parameters the tuner knows about, their legal
//! values, the cross-parameter constraints, subdomain restrictions and the
//! ordinal feature encoding the learners consume.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Every parameter of the tuning domain, in feature-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    WlReadPct,
    WlWritePct,
    NodeCount,
    ReplicationFactor,
    TrickleFsync,
    KeyCacheSizeInMb,
    RowCacheSizeInMb,
    CommitlogSegmentSizeInMb,
    ConcurrentReads,
    ConcurrentWrites,
    MemtableHeapSpaceInMb,
}

pub const PARAM_COUNT: usize = 11;

impl Param {
    pub const ALL: [Param; PARAM_COUNT] = [
        Param::WlReadPct,
        Param::WlWritePct,
        Param::NodeCount,
        Param::ReplicationFactor,
        Param::TrickleFsync,
        Param::KeyCacheSizeInMb,
        Param::RowCacheSizeInMb,
        Param::CommitlogSegmentSizeInMb,
        Param::ConcurrentReads,
        Param::ConcurrentWrites,
        Param::MemtableHeapSpaceInMb,
    ];

    /// The seven DBMS knobs, in column order.
    pub const KNOBS: [Param; 7] = [
        Param::TrickleFsync,
        Param::KeyCacheSizeInMb,
        Param::RowCacheSizeInMb,
        Param::CommitlogSegmentSizeInMb,
        Param::ConcurrentReads,
        Param::ConcurrentWrites,
        Param::MemtableHeapSpaceInMb,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::WlReadPct => "wl_read_pct",
            Param::WlWritePct => "wl_write_pct",
            Param::NodeCount => "node_count",
            Param::ReplicationFactor => "replication_factor",
            Param::TrickleFsync => "trickle_fsync",
            Param::KeyCacheSizeInMb => "key_cache_size_in_mb",
            Param::RowCacheSizeInMb => "row_cache_size_in_mb",
            Param::CommitlogSegmentSizeInMb => "commitlog_segment_size_in_mb",
            Param::ConcurrentReads => "concurrent_reads",
            Param::ConcurrentWrites => "concurrent_writes",
            Param::MemtableHeapSpaceInMb => "memtable_heap_space_in_mb",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn category(self) -> Category {
        match self {
            Param::WlReadPct | Param::WlWritePct => Category::Workload,
            Param::NodeCount | Param::ReplicationFactor => Category::Physical,
            _ => Category::Knob,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Workload,
    Knob,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Boolean,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub param: Param,
    pub kind: ParamKind,
    /// Legal raw values, ascending. Booleans are stored as 0/1.
    pub values: Vec<i64>,
    /// True for the DBMS knobs the optimizer may change.
    pub tunable: bool,
    /// Unit shown by `domain show`.
    pub unit: &'static str,
}

impl ParameterSpec {
    pub fn new(param: Param, kind: ParamKind, values: Vec<i64>, unit: &'static str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("{param}: empty value list")));
        }
        if !values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!(
                "{param}: values must be strictly ascending"
            )));
        }
        if kind == ParamKind::Boolean && values.iter().any(|v| !(0..=1).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "{param}: boolean values must be drawn from {{false, true}}"
            )));
        }
        Ok(ParameterSpec {
            param,
            kind,
            values,
            tunable: param.category() == Category::Knob,
            unit,
        })
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// 0-based position of `raw` in the value list.
    pub fn index_of(&self, raw: i64) -> Option<usize> {
        self.values.binary_search(&raw).ok()
    }

    pub fn contains(&self, raw: i64) -> bool {
        self.index_of(raw).is_some()
    }

    fn render_values(&self) -> String {
        match self.kind {
            ParamKind::Boolean => {
                let names: Vec<&str> = self
                    .values
                    .iter()
                    .map(|&v| if v == 1 { "true" } else { "false" })
                    .collect();
                format!("{{{}}}", names.join(", "))
            }
            ParamKind::Ordinal if self.values.len() > 12 => format!(
                "{{{}..{}}} ({} values)",
                self.values[0],
                self.values[self.values.len() - 1],
                self.values.len()
            ),
            ParamKind::Ordinal => {
                let s: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
                format!("{{{}}}", s.join(", "))
            }
        }
    }
}

/// A read/write operation mix. Percentages sum to 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Workload {
    pub read_pct: u32,
    pub write_pct: u32,
}

impl Workload {
    pub const READWRITE: Workload = Workload { read_pct: 50, write_pct: 50 };
    pub const READHEAVY: Workload = Workload { read_pct: 95, write_pct: 5 };
    pub const WRITEHEAVY: Workload = Workload { read_pct: 5, write_pct: 95 };

    pub fn new(read_pct: u32, write_pct: u32) -> Result<Self> {
        if read_pct + write_pct != 100 {
            return Err(Error::InvalidArgument(format!(
                "workload {read_pct}:{write_pct} does not sum to 100"
            )));
        }
        Ok(Workload { read_pct, write_pct })
    }

    /// Parses `R:W`, e.g. `95:5`.
    pub fn parse(s: &str) -> Result<Self> {
        let (r, w) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("workload {s:?} is not R:W")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidArgument(format!("workload {s:?} is not R:W")))
        };
        Workload::new(parse(r)?, parse(w)?)
    }

    /// Conventional name of the three measured mixes.
    pub fn label(&self) -> Option<&'static str> {
        match (self.read_pct, self.write_pct) {
            (50, 50) => Some("readwrite"),
            (95, 5) => Some("readheavy"),
            (5, 95) => Some("writeheavy"),
            _ => None,
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.read_pct, self.write_pct)
    }
}

/// Sharding and replication: node count `n` and replication factor `rf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Physical {
    pub node_count: u32,
    pub replication_factor: u32,
}

impl Physical {
    pub fn new(node_count: u32, replication_factor: u32) -> Result<Self> {
        if replication_factor > node_count {
            return Err(Error::InvalidArgument(format!(
                "replication_factor {replication_factor} exceeds node_count {node_count}"
            )));
        }
        Ok(Physical { node_count, replication_factor })
    }

    /// The eight combinations present in the reference training data.
    pub fn measured() -> [Physical; 8] {
        [(4, 4), (4, 3), (4, 2), (4, 1), (3, 3), (3, 2), (3, 1), (2, 2)]
            .map(|(n, rf)| Physical { node_count: n, replication_factor: rf })
    }
}

impl fmt::Display for Physical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={},rf={}", self.node_count, self.replication_factor)
    }
}

/// A constraint violation reported by [`TuningDomain::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotInDomain { param: Param, value: i64 },
    WorkloadSum { read: i64, write: i64 },
    ReplicationExceedsNodes { replication_factor: i64, node_count: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotInDomain { param, value } => {
                write!(f, "{param}={value}: value not in domain")
            }
            Violation::WorkloadSum { read, write } => {
                write!(f, "wl_read_pct + wl_write_pct = {} (must be 100)", read + write)
            }
            Violation::ReplicationExceedsNodes { replication_factor, node_count } => write!(
                f,
                "replication_factor ≤ node_count violated ({replication_factor} > {node_count})"
            ),
        }
    }
}

/// One raw value per parameter, indexed by [`Param`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigurationPoint {
    values: [i64; PARAM_COUNT],
}

impl ConfigurationPoint {
    pub fn from_values(values: [i64; PARAM_COUNT]) -> Self {
        ConfigurationPoint { values }
    }

    pub fn values(&self) -> &[i64; PARAM_COUNT] {
        &self.values
    }

    pub fn get(&self, param: Param) -> i64 {
        self.values[param.index()]
    }

    pub fn set(&mut self, param: Param, value: i64) {
        self.values[param.index()] = value;
    }

    pub fn with(mut self, param: Param, value: i64) -> Self {
        self.set(param, value);
        self
    }

    /// Workload as stored, without validation.
    pub fn workload(&self) -> Workload {
        Workload {
            read_pct: self.get(Param::WlReadPct) as u32,
            write_pct: self.get(Param::WlWritePct) as u32,
        }
    }

    pub fn physical(&self) -> Physical {
        Physical {
            node_count: self.get(Param::NodeCount) as u32,
            replication_factor: self.get(Param::ReplicationFactor) as u32,
        }
    }

    pub fn set_workload(&mut self, w: Workload) {
        self.set(Param::WlReadPct, w.read_pct as i64);
        self.set(Param::WlWritePct, w.write_pct as i64);
    }

    pub fn set_physical(&mut self, p: Physical) {
        self.set(Param::NodeCount, p.node_count as i64);
        self.set(Param::ReplicationFactor, p.replication_factor as i64);
    }

    /// `(workload, physical)` context of this point.
    pub fn context(&self) -> (Workload, Physical) {
        (self.workload(), self.physical())
    }
}

impl Serialize for ConfigurationPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(PARAM_COUNT))?;
        for p in Param::ALL {
            if p == Param::TrickleFsync {
                map.serialize_entry(p.name(), &(self.get(p) == 1))?;
            } else {
                map.serialize_entry(p.name(), &self.get(p))?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ConfigurationPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = ConfigurationPoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from parameter name to value")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut seen: BTreeMap<Param, i64> = BTreeMap::new();
                while let Some(key) = access.next_key::<String>()? {
                    let param = Param::from_name(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown parameter {key}")))?;
                    let value = if param == Param::TrickleFsync {
                        access.next_value::<BoolOrInt>()?.0
                    } else {
                        access.next_value::<i64>()?
                    };
                    if seen.insert(param, value).is_some() {
                        return Err(de::Error::custom(format!("duplicate parameter {key}")));
                    }
                }
                let mut values = [0i64; PARAM_COUNT];
                for p in Param::ALL {
                    values[p.index()] = *seen
                        .get(&p)
                        .ok_or_else(|| de::Error::custom(format!("missing parameter {p}")))?;
                }
                Ok(ConfigurationPoint { values })
            }
        }

        deserializer.deserialize_map(PointVisitor)
    }
}

struct BoolOrInt(i64);

impl<'de> Deserialize<'de> for BoolOrInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            B(bool),
            I(i64),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::B(b) => BoolOrInt(b as i64),
            Raw::I(i) => BoolOrInt(i),
        })
    }
}

/// The tuning domain. Parameter order is [`Param::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct TuningDomain {
    params: Vec<ParameterSpec>,
    disks: u32,
    heap_mb: u32,
}

impl TuningDomain {
    /// The eleven-feature Cassandra domain for a node with `disks` data
    /// disks and a `heap_mb` MiB JVM heap.
    pub fn cassandra(disks: u32, heap_mb: u32) -> Result<Self> {
        if disks < 1 {
            return Err(Error::InvalidArgument("disks must be at least 1".into()));
        }
        if heap_mb < 32 || !heap_mb.is_multiple_of(32) {
            return Err(Error::InvalidArgument(format!(
                "heap_mb must be a positive multiple of 32, got {heap_mb}"
            )));
        }
        let d = disks as i64;
        let heap = heap_mb as i64;
        use ParamKind::*;
        let params = vec![
            ParameterSpec::new(Param::WlReadPct, Ordinal, (0..=100).collect(), "%")?,
            ParameterSpec::new(Param::WlWritePct, Ordinal, (0..=100).collect(), "%")?,
            ParameterSpec::new(Param::NodeCount, Ordinal, vec![2, 3, 4], "nodes")?,
            ParameterSpec::new(Param::ReplicationFactor, Ordinal, vec![1, 2, 3, 4], "replicas")?,
            ParameterSpec::new(Param::TrickleFsync, Boolean, vec![0, 1], "")?,
            ParameterSpec::new(Param::KeyCacheSizeInMb, Ordinal, vec![0, 1, 2, 4, 8, 16, 32], "MB")?,
            ParameterSpec::new(Param::RowCacheSizeInMb, Ordinal, (0..=10).map(|i| 20 * i).collect(), "MB")?,
            ParameterSpec::new(Param::CommitlogSegmentSizeInMb, Ordinal, vec![4, 8, 16, 32, 64], "MB")?,
            ParameterSpec::new(
                Param::ConcurrentReads,
                Ordinal,
                (1..=5).map(|e| (1i64 << e) * d).collect(),
                "threads",
            )?,
            ParameterSpec::new(Param::ConcurrentWrites, Ordinal, (1..=8).map(|e| 1i64 << e).collect(), "threads")?,
            ParameterSpec::new(
                Param::MemtableHeapSpaceInMb,
                Ordinal,
                (1..=5).rev().map(|e| heap >> e).collect(),
                "MB",
            )?,
        ];
        Ok(TuningDomain { params, disks, heap_mb })
    }

    pub fn disks(&self) -> u32 {
        self.disks
    }

    pub fn heap_mb(&self) -> u32 {
        self.heap_mb
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn spec(&self, param: Param) -> &ParameterSpec {
        &self.params[param.index()]
    }

    /// A copy of the domain with `param` limited to `values`, each of which
    /// must already be legal.
    pub fn restrict(&self, param: Param, values: &[i64]) -> Result<Self> {
        let spec = self.spec(param);
        if let Some(v) = values.iter().find(|v| !spec.contains(**v)) {
            return Err(Error::InvalidArgument(format!("{param}: {v} is not in the domain")));
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut out = self.clone();
        out.params[param.index()] = ParameterSpec::new(param, spec.kind, sorted, spec.unit)?;
        Ok(out)
    }

    /// Draws every tunable knob uniformly and independently from its values.
    pub fn sample_knobs(&self, point: &mut ConfigurationPoint, rng: &mut SplitMix64) {
        for k in Param::KNOBS {
            let vals = &self.spec(k).values;
            point.set(k, vals[rng.below(vals.len())]);
        }
    }

    /// Number of distinct assignments of the tunable knobs.
    pub fn knob_space_size(&self) -> u128 {
        Param::KNOBS
            .iter()
            .map(|p| self.spec(*p).cardinality() as u128)
            .product()
    }

    /// Every violated constraint; empty means valid.
    pub fn validate(&self, point: &ConfigurationPoint) -> Vec<Violation> {
        let mut out = Vec::new();
        for spec in &self.params {
            let v = point.get(spec.param);
            if !spec.contains(v) {
                out.push(Violation::NotInDomain { param: spec.param, value: v });
            }
        }
        let (r, w) = (point.get(Param::WlReadPct), point.get(Param::WlWritePct));
        if r + w != 100 {
            out.push(Violation::WorkloadSum { read: r, write: w });
        }
        let (n, rf) = (point.get(Param::NodeCount), point.get(Param::ReplicationFactor));
        if rf > n {
            out.push(Violation::ReplicationExceedsNodes { replication_factor: rf, node_count: n });
        }
        out
    }

    pub fn check(&self, point: &ConfigurationPoint) -> Result<()> {
        let v = self.validate(point);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPoint(v))
        }
    }

    /// Stock Cassandra defaults mapped onto the grid, at the given context.
    pub fn default_configuration(&self, workload: Workload, physical: Physical) -> ConfigurationPoint {
        let mut point = ConfigurationPoint::from_values([0; PARAM_COUNT]);
        point.set_workload(workload);
        point.set_physical(physical);
        for (p, v) in self.default_knobs() {
            point.set(p, v);
        }
        point
    }

    pub fn default_knobs(&self) -> [(Param, i64); 7] {
        [
            (Param::TrickleFsync, 0),
            // Stock 100 MB is off-grid; clamp to the largest legal value.
            (Param::KeyCacheSizeInMb, 32),
            (Param::RowCacheSizeInMb, 0),
            (Param::CommitlogSegmentSizeInMb, 32),
            (Param::ConcurrentReads, 32 * self.disks as i64),
            (Param::ConcurrentWrites, 32),
            (Param::MemtableHeapSpaceInMb, self.heap_mb as i64 / 4),
        ]
    }

    /// Feature-vector encoding of a valid point; columns fixed by `sub` are dropped.
    pub fn encode<T: Scalar>(&self, sub: &SubdomainSpec, point: &ConfigurationPoint) -> Result<FeatureVector<T>> {
        self.check(point)?;
        if !sub.admits(point) {
            return Err(Error::InvalidArgument(format!(
                "point context {}/{} is outside subdomain {sub}",
                point.workload(),
                point.physical()
            )));
        }
        Ok(FeatureVector(
            sub.columns()
                .into_iter()
                .map(|p| T::from_f64_lossy(self.encode_component(p, point.get(p)) as f64))
                .collect(),
        ))
    }

    fn encode_component(&self, param: Param, raw: i64) -> i64 {
        match param.category() {
            Category::Knob => self.spec(param).index_of(raw).expect("validated") as i64,
            _ => raw,
        }
    }

    /// Inverse of [`encode`](Self::encode); fixed columns come from `sub`.
    pub fn decode<T: Scalar>(&self, sub: &SubdomainSpec, vector: &FeatureVector<T>) -> Result<ConfigurationPoint> {
        let columns = sub.columns();
        if vector.len() != columns.len() {
            return Err(Error::WidthMismatch { expected: columns.len(), actual: vector.len() });
        }
        let mut point = ConfigurationPoint::from_values([0; PARAM_COUNT]);
        if let Some(w) = sub.fixed_workload {
            point.set_workload(w);
        }
        if let Some(p) = sub.fixed_physical {
            point.set_physical(p);
        }
        for (p, x) in columns.into_iter().zip(vector.0.iter()) {
            let x = x.as_f64();
            if !x.is_finite() || x.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("{p}: component {x} is not an integer")));
            }
            let x = x as i64;
            let raw = match p.category() {
                Category::Knob => {
                    let spec = self.spec(p);
                    if x < 0 || x as usize >= spec.cardinality() {
                        return Err(Error::InvalidArgument(format!(
                            "{p}: index {x} out of range 0..{}",
                            spec.cardinality()
                        )));
                    }
                    spec.values[x as usize]
                }
                _ => x,
            };
            point.set(p, raw);
        }
        self.check(&point)?;
        Ok(point)
    }

    /// Human-readable table of the domain.
    pub fn render_table(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .params
            .iter()
            .map(|s| {
                let category = match s.param.category() {
                    Category::Workload => "workload",
                    Category::Knob => "dbms knob",
                    Category::Physical => "physical design",
                };
                let name = if s.unit.is_empty() || s.unit == "%" {
                    s.param.name().to_string()
                } else {
                    format!("{} [{}]", s.param.name(), s.unit)
                };
                [name, category.to_string(), if s.tunable { "yes" } else { "no" }.into(), s.render_values()]
            })
            .collect();
        let header = ["parameter", "category", "tunable", "values"];
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r.iter()) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = format!("# disks={} heap_mb={}\n", self.disks, self.heap_mb);
        let line = |cells: [&str; 4]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate() {
                if i + 1 == cells.len() {
                    s.push_str(c);
                } else {
                    s.push_str(&format!("{:<w$}  ", c, w = widths[i]));
                }
            }
            s.push('\n');
            s
        };
        out.push_str(&line(header));
        for r in &rows {
            out.push_str(&line([&r[0], &r[1], &r[2], &r[3]]));
        }
        out.push_str(&format!("# knob space: {} configurations\n", self.knob_space_size()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubdomainId {
    #[serde(rename = "TD1")]
    Td1,
    #[serde(rename = "TD2")]
    Td2,
    #[serde(rename = "TD3")]
    Td3,
    #[serde(rename = "TD4")]
    Td4,
}

impl SubdomainId {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "td1" => Ok(SubdomainId::Td1),
            "td2" => Ok(SubdomainId::Td2),
            "td3" => Ok(SubdomainId::Td3),
            "td4" => Ok(SubdomainId::Td4),
            _ => Err(Error::InvalidArgument(format!("unknown subdomain {s:?}"))),
        }
    }
}

impl fmt::Display for SubdomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubdomainId::Td1 => "TD1",
            SubdomainId::Td2 => "TD2",
            SubdomainId::Td3 => "TD3",
            SubdomainId::Td4 => "TD4",
        })
    }
}

/// A restriction of the domain that fixes the workload, the physical
/// design, both, or neither. Fixed columns are projected out of feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub id: SubdomainId,
    pub fixed_workload: Option<Workload>,
    pub fixed_physical: Option<Physical>,
}

impl SubdomainSpec {
    pub fn new(id: SubdomainId, fixed_workload: Option<Workload>, fixed_physical: Option<Physical>) -> Result<Self> {
        let ok = match id {
            SubdomainId::Td1 => fixed_workload.is_none() && fixed_physical.is_none(),
            SubdomainId::Td2 => fixed_workload.is_some() && fixed_physical.is_none(),
            SubdomainId::Td3 => fixed_workload.is_none() && fixed_physical.is_some(),
            SubdomainId::Td4 => fixed_workload.is_some() && fixed_physical.is_some(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{id} fixes {}",
                match id {
                    SubdomainId::Td1 => "nothing",
                    SubdomainId::Td2 => "exactly the workload",
                    SubdomainId::Td3 => "exactly the physical design",
                    SubdomainId::Td4 => "both workload and physical design",
                }
            )));
        }
        if let Some(w) = fixed_workload {
            Workload::new(w.read_pct, w.write_pct)?;
        }
        if let Some(p) = fixed_physical {
            Physical::new(p.node_count, p.replication_factor)?;
        }
        Ok(SubdomainSpec { id, fixed_workload, fixed_physical })
    }

    pub fn td1() -> Self {
        SubdomainSpec { id: SubdomainId::Td1, fixed_workload: None, fixed_physical: None }
    }

    pub fn td2(workload: Workload) -> Self {
        SubdomainSpec { id: SubdomainId::Td2, fixed_workload: Some(workload), fixed_physical: None }
    }

    pub fn td3(physical: Physical) -> Self {
        SubdomainSpec { id: SubdomainId::Td3, fixed_workload: None, fixed_physical: Some(physical) }
    }

    pub fn td4(workload: Workload, physical: Physical) -> Self {
        SubdomainSpec { id: SubdomainId::Td4, fixed_workload: Some(workload), fixed_physical: Some(physical) }
    }

    /// Builds the subdomain `id` from whichever context values it needs.
    pub fn from_context(id: SubdomainId, workload: Option<Workload>, physical: Option<Physical>) -> Result<Self> {
        let need = |what: &str| Error::InvalidArgument(format!("{id} needs a fixed {what}"));
        match id {
            SubdomainId::Td1 => Ok(Self::td1()),
            SubdomainId::Td2 => Ok(Self::td2(workload.ok_or_else(|| need("workload"))?)),
            SubdomainId::Td3 => Ok(Self::td3(physical.ok_or_else(|| need("physical design"))?)),
            SubdomainId::Td4 => Ok(Self::td4(
                workload.ok_or_else(|| need("workload"))?,
                physical.ok_or_else(|| need("physical design"))?,
            )),
        }
    }

    /// Columns kept in the feature vector, in order.
    pub fn columns(&self) -> Vec<Param> {
        Param::ALL
            .into_iter()
            .filter(|p| match p.category() {
                Category::Workload => self.fixed_workload.is_none(),
                Category::Physical => self.fixed_physical.is_none(),
                Category::Knob => true,
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        PARAM_COUNT
            - if self.fixed_workload.is_some() { 2 } else { 0 }
            - if self.fixed_physical.is_some() { 2 } else { 0 }
    }

    /// Whether the point's workload and physical design agree with the fixed values.
    pub fn admits(&self, point: &ConfigurationPoint) -> bool {
        self.fixed_workload.is_none_or(|w| point.workload() == w)
            && self.fixed_physical.is_none_or(|p| point.physical() == p)
    }
}

impl fmt::Display for SubdomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)?;
        let mut parts = Vec::new();
        if let Some(w) = self.fixed_workload {
            parts.push(format!("workload={w}"));
        }
        if let Some(p) = self.fixed_physical {
            parts.push(p.to_string());
        }
        if !parts.is_empty() {
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// Encoded point: raw workload percentages and n/rf, 0/1 booleans, and
/// 0-based ordinal indices for the remaining knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T>(pub Vec<T>);

impl<T> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}
