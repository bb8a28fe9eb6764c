//! The instruction-level memory model: permissions, system state and the
//! machine implementing the security instructions.

mod machine;
mod perm;
mod state;
mod types;

pub use machine::{InstrCounts, Machine, MachineConfig};
pub use perm::Permission;
pub use state::{PermEntry, RegionRecord, SystemState};
pub use types::{Access, ElErr, EnclaveId, Signal, SignalKind, Uid, OS_ID};
