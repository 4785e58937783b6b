//! Shell-command backend for a real cluster.

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendFailure, BenchmarkBackend, Step};
use crate::domain::{ConfigurationPoint, Param, Physical, TuningDomain, Workload};
use crate::error::{Error, Result};
use crate::oracle::Metrics;

const POLL: Duration = Duration::from_millis(5);

fn default_timeout() -> f64 {
    600.0
}

fn default_duration() -> u64 {
    60
}

/// Command templates run through `sh -c`. Placeholders such as
/// `{key_cache_size_in_mb}` are replaced by the point's raw values; see
/// [`ExternalBackendConfig::PLACEHOLDERS`] for the full list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalBackendConfig {
    pub stop_cmd: String,
    pub configure_cmd: String,
    pub start_cmd: String,
    pub workload_cmd: String,
    /// Key=value file the workload command writes.
    pub metrics_path: PathBuf,
    /// Limit for each individual step, in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_duration")]
    pub duration_s: u64,
}

impl ExternalBackendConfig {
    /// Placeholders beyond the eleven parameter names.
    pub const PLACEHOLDERS: [&'static str; 7] =
        ["read_pct", "write_pct", "node_count", "replication_factor", "duration_s", "metrics_path", "invocation"];

    pub fn validate(&self) -> Result<()> {
        for (name, cmd) in self.commands() {
            if cmd.trim().is_empty() {
                return Err(Error::Config(format!("{name} is empty")));
            }
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config(format!("timeout_s must be > 0, got {}", self.timeout_s)));
        }
        Ok(())
    }

    fn commands(&self) -> [(&'static str, &str); 4] {
        [
            ("stop_cmd", &self.stop_cmd),
            ("configure_cmd", &self.configure_cmd),
            ("start_cmd", &self.start_cmd),
            ("workload_cmd", &self.workload_cmd),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    config: ExternalBackendConfig,
}

impl ExternalBackend {
    pub fn new(domain: &TuningDomain, config: ExternalBackendConfig) -> Result<Self> {
        config.validate()?;
        let probe = domain.default_configuration(Workload::READWRITE, Physical { node_count: 4, replication_factor: 3 });
        let backend = ExternalBackend { config };
        for (name, cmd) in backend.config.commands() {
            backend.render(cmd, &probe, 0).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        Ok(backend)
    }

    pub fn config(&self) -> &ExternalBackendConfig {
        &self.config
    }

    /// Substitutes `{name}` placeholders. `${...}` is left for the shell.
    pub fn render(&self, template: &str, point: &ConfigurationPoint, invocation: u64) -> Result<String, String> {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let shell_var = rest[..open].ends_with('$');
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}');
            let name = close.map(|c| &after[..c]);
            match name {
                Some(name) if !shell_var && !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') => {
                    out.push_str(&self.lookup(name, point, invocation).ok_or_else(|| format!("unknown placeholder {{{name}}}"))?);
                    rest = &after[name.len() + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }

    fn lookup(&self, name: &str, point: &ConfigurationPoint, invocation: u64) -> Option<String> {
        if let Some(p) = Param::from_name(name) {
            let v = point.get(p);
            return Some(if p == Param::TrickleFsync { (v != 0).to_string() } else { v.to_string() });
        }
        Some(match name {
            "read_pct" => point.get(Param::WlReadPct).to_string(),
            "write_pct" => point.get(Param::WlWritePct).to_string(),
            "node_count" => point.get(Param::NodeCount).to_string(),
            "replication_factor" => point.get(Param::ReplicationFactor).to_string(),
            "duration_s" => self.config.duration_s.to_string(),
            "metrics_path" => self.config.metrics_path.display().to_string(),
            "invocation" => invocation.to_string(),
            _ => return None,
        })
    }

    fn run(&self, step: Step, template: &str, point: &ConfigurationPoint, invocation: u64) -> Result<(), BackendFailure> {
        let cmd = self.render(template, point, invocation).map_err(|m| BackendFailure::new(step, m))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|e| BackendFailure::new(step, format!("cannot spawn sh: {e}")))?;
        let deadline = Instant::now() + Duration::from_secs_f64(self.config.timeout_s);
        loop {
            match child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => return Err(BackendFailure::new(step, format!("command exited with {status}"))),
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(BackendFailure::new(step, format!("timed out after {} s", self.config.timeout_s)));
                }
                Ok(None) => std::thread::sleep(POLL),
                Err(e) => return Err(BackendFailure::new(step, format!("wait failed: {e}"))),
            }
        }
    }
}

impl BenchmarkBackend for ExternalBackend {
    fn requires_exclusive_access(&self) -> bool {
        true
    }

    fn prepare(&self, point: &ConfigurationPoint) -> Result<(), BackendFailure> {
        self.run(Step::Stop, &self.config.stop_cmd, point, 0)?;
        self.run(Step::Configure, &self.config.configure_cmd, point, 0)?;
        self.run(Step::Start, &self.config.start_cmd, point, 0)
    }

    fn measure(&self, point: &ConfigurationPoint, invocation: u64) -> Result<Metrics, BackendFailure> {
        // A stale file from an earlier run must never be read back as this run's result.
        match std::fs::remove_file(&self.config.metrics_path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(BackendFailure::new(Step::Workload, format!("cannot clear metrics file: {e}"))),
        }
        self.run(Step::Workload, &self.config.workload_cmd, point, invocation)?;
        let text = std::fs::read_to_string(&self.config.metrics_path).map_err(|e| {
            BackendFailure::new(Step::Capture, format!("cannot read {}: {e}", self.config.metrics_path.display()))
        })?;
        parse_metrics(&text)
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped and
/// unknown keys ignored. All three metric fields must be present, positive
/// and finite.
pub fn parse_metrics(text: &str) -> Result<Metrics, BackendFailure> {
    let fail = |m: String| BackendFailure::new(Step::Capture, m);
    let mut fields: [Option<f64>; 3] = [None; 3];
    const KEYS: [&str; 3] = ["throughput_ops", "read_latency_ms", "write_latency_ms"];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| fail(format!("line {}: expected key=value", n + 1)))?;
        let Some(slot) = KEYS.iter().position(|key| *key == k.trim()) else { continue };
        if fields[slot].is_some() {
            return Err(fail(format!("metrics field repeated: {}", KEYS[slot])));
        }
        let v: f64 = v.trim().parse().map_err(|_| fail(format!("metrics field {} is not a number: {v:?}", KEYS[slot])))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(fail(format!("metrics field {} must be positive and finite, got {v}", KEYS[slot])));
        }
        fields[slot] = Some(v);
    }
    let get = |i: usize| fields[i].ok_or_else(|| fail(format!("metrics field absent: {}", KEYS[i])));
    Ok(Metrics { throughput_ops: get(0)?, read_latency_ms: get(1)?, write_latency_ms: get(2)? })
}
