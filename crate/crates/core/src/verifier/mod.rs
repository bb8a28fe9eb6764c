//! Bounded exhaustive verification of the interface's security properties:
//! declarative multi-enclave programs (with adversary wildcards) are
//! explored over all interleavings, every reached state is checked against
//! the model invariants, and access outcomes are checked against an
//! independently maintained grant ledger.

mod checks;
mod emulation;
mod explore;
mod program;

pub use checks::{GrantLedger, SerialMonitor, SerialPhase};
pub use emulation::{check_spatial_emulation, EmulationReport};
pub use explore::{
    explore, explore_jobs, render_trace, replay, ReplayError, TraceEntry, Verdict, Violation,
};
pub use program::{
    render_instr, ActorProgram, Check, ExplorationConfig, Instr, RegionRef, SerializationSpec,
};

/// Built-in exploration problems, shared by the command-line verify
/// suites and the test suite.
pub mod suites {
    use super::ExplorationConfig;

    /// Bounded escalation: an owner grants a read-only maximum; an
    /// adversary with a wildcard budget must never obtain any access
    /// beyond it.
    pub fn escalation_config() -> ExplorationConfig {
        ExplorationConfig::parse(
            "\
enclave E1
enclave E2
adversary E2 budget 3
max-depth 8
setup E1 create 16 as R1
setup E1 change R1 rw--
setup E1 share R1 E2 r---
setup E1 map R1 0x10000000
setup E2 map R1 0x20000000
step E1 write R1 0x41
step E1 read R1
step E1 change R1 r---
step E1 change R1 rw--
",
        )
        .expect("built-in program parses")
    }

    /// Proxy serialization: a three-enclave lock-transfer chain with a
    /// generously granted adversary racing it. The chain either completes
    /// in order or aborts; the adversary never accesses the region inside
    /// the locked window.
    pub fn proxy_serialization_config() -> ExplorationConfig {
        ExplorationConfig::parse(
            "\
enclave E1
enclave E2
enclave E3
enclave E4
adversary E4 budget 3
max-depth 14
setup E1 mask LockAcquired|LockReleased
setup E1 create 8 as R1
setup E1 change R1 rw--
setup E1 share R1 E2 rw-l
setup E1 share R1 E3 rw-l
setup E1 share R1 E4 rw-l
setup E1 map R1 0x10000000
setup E2 map R1 0x20000000
setup E3 map R1 0x30000000
setup E4 map R1 0x40000000
setup E2 change R1 rw--
setup E3 change R1 rw--
step E1 change R1 rw-l
step E1 write R1 0x41
step E1 transfer R1 E2
step E2 write R1 0x42
step E2 transfer R1 E3
step E3 read R1
step E3 change R1 rw--
property serialization source=E1 proxy=E2 dest=E3 region=R1
",
        )
        .expect("built-in program parses")
    }

    /// A single honest actor, no adversary: exactly one interleaving.
    pub fn single_path_config() -> ExplorationConfig {
        ExplorationConfig::parse(
            "\
enclave E1
max-depth 8
step E1 create 16 as R1
step E1 change R1 rw--
step E1 destroy R1
",
        )
        .expect("built-in program parses")
    }
}
