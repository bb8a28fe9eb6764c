//! Executable reference model of the Elasticlave enclave memory-sharing
//! interface, together with the machinery needed to evaluate it:
//!
//! - [`model`]: the instruction-level state machine (regions, permission
//!   matrix, lock bit, signals) with fail-stop semantics.
//! - [`monitor`]: a simulated security-monitor backend accounting for PMP
//!   entries, two-level address translation and context-switch cost.
//! - [`spatial`]: the spatial-isolation baseline (secure public memory plus
//!   a trusted coordinator) with encrypt/decrypt/copy cost counters.
//! - [`workloads`]: data-sharing patterns and synchronization workloads
//!   runnable on both backends, producing comparable [`CostCounters`].
//! - [`verifier`]: a bounded exhaustive interleaving explorer checking the
//!   interface's security properties against adversarial schedules.

pub mod counters;
pub mod digest;
pub mod model;
pub mod monitor;
pub mod spatial;
pub mod trace;
pub mod verifier;
pub mod workloads;

pub use counters::CostCounters;
pub use model::{
    Access, ElErr, EnclaveId, Machine, MachineConfig, PermEntry, Permission, RegionRecord, Signal,
    SignalKind, SystemState, Uid, OS_ID,
};
pub use monitor::{Monitor, MonitorCounters};
pub use trace::TraceRecord;
pub use verifier::{ExplorationConfig, Verdict};
pub use workloads::{BackendKind, Pattern, RunReport, WorkloadSpec};
