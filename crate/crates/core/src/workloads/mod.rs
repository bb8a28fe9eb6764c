//! Data-sharing patterns and synchronization workloads, runnable on the
//! relaxed memory model (with or without the lock bit) and on the spatial
//! baseline, producing comparable cost counters and a payload checksum.
//!
//! For identical (pattern, L, rounds, seed) the consumer-observed data — and
//! therefore the checksum — is identical across all backends; only the cost
//! counters differ.

mod patterns;
mod sched;
mod spatial_run;
mod sync;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counters::CostCounters;
use crate::model::{ElErr, EnclaveId};

pub use sched::{RoundRobin, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    ProducerConsumerOneway,
    ProducerConsumerTwoway,
    Proxy,
    ClientServer,
    Spinlock,
    Futex,
}

impl Pattern {
    pub fn is_sync(self) -> bool {
        matches!(self, Pattern::Spinlock | Pattern::Futex)
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::ProducerConsumerOneway => "producer_consumer_oneway",
            Pattern::ProducerConsumerTwoway => "producer_consumer_twoway",
            Pattern::Proxy => "proxy",
            Pattern::ClientServer => "client_server",
            Pattern::Spinlock => "spinlock",
            Pattern::Futex => "futex",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            // The bare producer_consumer is the two-way isolated variant.
            "producer_consumer" | "producer_consumer_twoway" => Ok(Pattern::ProducerConsumerTwoway),
            "producer_consumer_oneway" => Ok(Pattern::ProducerConsumerOneway),
            "proxy" => Ok(Pattern::Proxy),
            "client_server" => Ok(Pattern::ClientServer),
            "spinlock" => Ok(Pattern::Spinlock),
            "futex" => Ok(Pattern::Futex),
            _ => Err(format!("unknown pattern {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Elasticlave,
    ElasticlaveNolock,
    Spatial,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Elasticlave => "elasticlave",
            BackendKind::ElasticlaveNolock => "elasticlave_nolock",
            BackendKind::Spatial => "spatial",
        }
    }

    pub fn all() -> [BackendKind; 3] {
        [
            BackendKind::Elasticlave,
            BackendKind::ElasticlaveNolock,
            BackendKind::Spatial,
        ]
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elasticlave" => Ok(BackendKind::Elasticlave),
            "elasticlave_nolock" => Ok(BackendKind::ElasticlaveNolock),
            "spatial" => Ok(BackendKind::Spatial),
            _ => Err(format!("unknown backend {s:?}")),
        }
    }
}

/// A complete workload description. `l_words` is the shared-data size L in
/// memory words; `contention` is the number of hold steps a lock holder
/// executes before releasing (sync workloads only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub backend: BackendKind,
    #[serde(rename = "L")]
    pub l_words: u64,
    pub rounds: u64,
    pub contention: u64,
    pub seed: u64,
    pub pmp_total: usize,
    pub strict_transfer_map: bool,
}

impl WorkloadSpec {
    pub fn new(pattern: Pattern, backend: BackendKind) -> Self {
        WorkloadSpec {
            pattern,
            backend,
            l_words: 512,
            rounds: 1,
            contention: 0,
            seed: 0,
            pmp_total: 16,
            strict_transfer_map: false,
        }
    }

    /// Parses the flat `key = value` config format. `#` starts a comment;
    /// unknown keys are rejected.
    pub fn from_kv_text(text: &str) -> Result<Self, String> {
        let mut pattern = None;
        let mut spec = WorkloadSpec::new(Pattern::ProducerConsumerTwoway, BackendKind::Elasticlave);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| format!("line {}: {}", lineno + 1, e);
            match key {
                "pattern" => pattern = Some(value.parse().map_err(bad)?),
                "backend" => spec.backend = value.parse().map_err(bad)?,
                "L" => spec.l_words = value.parse().map_err(|e| bad(format!("{e}")))?,
                "rounds" => spec.rounds = value.parse().map_err(|e| bad(format!("{e}")))?,
                "contention" => spec.contention = value.parse().map_err(|e| bad(format!("{e}")))?,
                "seed" => spec.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "pmp_total" => spec.pmp_total = value.parse().map_err(|e| bad(format!("{e}")))?,
                "strict_transfer_map" => {
                    spec.strict_transfer_map = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
            }
        }
        spec.pattern = pattern.ok_or("missing required key: pattern")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rounds == 0 {
            return Err("rounds must be at least 1".into());
        }
        if self.pmp_total < 2 {
            return Err("pmp_total must leave at least one allocatable entry".into());
        }
        Ok(())
    }
}

/// Acquire/release statistics for the synchronization workloads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncMetrics {
    pub acquires: u64,
    pub releases: u64,
    /// Failed acquisition attempts; the CPU-time proxy.
    pub busy_polls: u64,
    /// Scheduler ticks consumed by runnable actors; the wall-time proxy.
    pub wall_steps: u64,
}

/// What a workload run produced: aggregate counters (setup excluded),
/// per-round counter deltas, and the digest of all consumer-observed data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: WorkloadSpec,
    /// One-time setup costs (region creation, sharing, mapping).
    pub setup: CostCounters,
    /// Steady-state totals over all rounds.
    pub counters: CostCounters,
    pub per_round: Vec<CostCounters>,
    /// Hex digest of the data observed by the consuming side(s).
    pub checksum: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncMetrics>,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{actor}: {op} aborted with {err}")]
    Instruction {
        actor: EnclaveId,
        op: &'static str,
        err: ElErr,
    },
    #[error("mutual exclusion violated: {0}")]
    ExclusionViolated(String),
    #[error("workload made no progress after {0} steps")]
    Stalled(u64),
    #[error("bad workload spec: {0}")]
    BadSpec(String),
}

/// Runs one workload to completion.
pub fn run(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    spec.validate().map_err(WorkloadError::BadSpec)?;
    match (spec.pattern.is_sync(), spec.backend) {
        (false, BackendKind::Spatial) => spatial_run::run_pattern(spec),
        (false, _) => patterns::run_pattern(spec),
        (true, _) => sync::run_sync(spec),
    }
}

#[cfg(test)]
mod tests;
