//! Spatial-emulation equivalence: random spatial-model programs must
//! behave identically on the raw spatial memory model and on its emulation
//! in the relaxed model (public region = owner-created region shared rwx-
//! with everyone including the OS; private region = created, never shared).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Access, ElErr, EnclaveId, Machine, MachineConfig, Permission, OS_ID};
use crate::spatial::{SpatialMemory, SpatialOutcome};

const E1: EnclaveId = EnclaveId(1);
const E2: EnclaveId = EnclaveId(2);
const PRINCIPALS: [EnclaveId; 3] = [OS_ID, E1, E2];

const PUB_SIZE: u64 = 16;
const PRIV_SIZE: u64 = 16;
const PUB_BASE: u64 = 0x1000_0000;

fn priv_base(owner: EnclaveId) -> u64 {
    0x2000_0000 + owner.0 as u64 * 0x10000
}

/// One random spatial-model operation. Offsets may run past the region to
/// cover fault behavior.
#[derive(Debug, Clone, Copy)]
enum SpatialOp {
    PubRead {
        p: EnclaveId,
        off: u64,
    },
    PubWrite {
        p: EnclaveId,
        off: u64,
        b: u8,
    },
    PrivRead {
        p: EnclaveId,
        owner: EnclaveId,
        off: u64,
    },
    PrivWrite {
        p: EnclaveId,
        owner: EnclaveId,
        off: u64,
        b: u8,
    },
}

fn gen_op(rng: &mut ChaCha8Rng) -> SpatialOp {
    let p = PRINCIPALS[rng.gen_range(0..3)];
    let owner = PRINCIPALS[rng.gen_range(0..3)];
    let off = rng.gen_range(0..PUB_SIZE + 4);
    let b: u8 = rng.gen();
    match rng.gen_range(0..4) {
        0 => SpatialOp::PubRead { p, off },
        1 => SpatialOp::PubWrite { p, off, b },
        2 => SpatialOp::PrivRead { p, owner, off },
        _ => SpatialOp::PrivWrite { p, owner, off, b },
    }
}

fn native_apply(mem: &mut SpatialMemory, op: SpatialOp) -> SpatialOutcome {
    match op {
        SpatialOp::PubRead { p, off } => mem.read_public(p, off as usize),
        SpatialOp::PubWrite { p, off, b } => mem.write_public(p, off as usize, b),
        SpatialOp::PrivRead { p, owner, off } => mem.read_private(p, owner, off as usize),
        SpatialOp::PrivWrite { p, owner, off, b } => mem.write_private(p, owner, off as usize, b),
    }
}

fn to_outcome(res: Result<Option<u8>, ElErr>) -> SpatialOutcome {
    match res {
        Ok(Some(b)) => SpatialOutcome::Value(b),
        Ok(None) => SpatialOutcome::Written,
        Err(_) => SpatialOutcome::Fault,
    }
}

fn emu_apply(m: &mut Machine, op: SpatialOp) -> SpatialOutcome {
    match op {
        SpatialOp::PubRead { p, off } => to_outcome(m.mem_access(p, PUB_BASE + off, Access::Read)),
        SpatialOp::PubWrite { p, off, b } => {
            to_outcome(m.mem_access(p, PUB_BASE + off, Access::Write(b)))
        }
        SpatialOp::PrivRead { p, owner, off } => {
            to_outcome(m.mem_access(p, priv_base(owner) + off, Access::Read))
        }
        SpatialOp::PrivWrite { p, owner, off, b } => {
            to_outcome(m.mem_access(p, priv_base(owner) + off, Access::Write(b)))
        }
    }
}

/// Builds the emulation: one public region shared rwx- with every
/// principal, one unshared private region per principal.
fn emu_machine() -> Machine {
    let mut m = Machine::new(MachineConfig::default());
    m.add_enclave(E1);
    m.add_enclave(E2);
    let public = m.create(E1, PUB_SIZE).expect("create public");
    m.change(E1, public, Permission::RWX).expect("drop lock");
    for p in [E2, OS_ID] {
        m.share(E1, public, p, Permission::RWX).expect("share");
        m.change(p, public, Permission::RWX).expect("activate");
    }
    for p in PRINCIPALS {
        m.map(p, PUB_BASE, public).expect("map public");
        let private = m.create(p, PRIV_SIZE).expect("create private");
        m.map(p, priv_base(p), private).expect("map private");
    }
    m
}

#[derive(Debug, Clone, Default)]
pub struct EmulationReport {
    pub programs: u32,
    pub steps_per_program: u32,
    pub mismatches: Vec<String>,
}

impl EmulationReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs `programs` random spatial-model programs of `steps` operations on
/// both models and compares every observable outcome.
pub fn check_spatial_emulation(programs: u32, steps: u32, seed: u64) -> EmulationReport {
    let mut report = EmulationReport {
        programs,
        steps_per_program: steps,
        mismatches: Vec::new(),
    };
    for prog in 0..programs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (prog as u64).wrapping_mul(0x9e37_79b9));
        let mut native = SpatialMemory::new(PUB_SIZE as usize);
        for p in PRINCIPALS {
            native.add_private(p, PRIV_SIZE as usize);
        }
        let mut emu = emu_machine();
        for step in 0..steps {
            let op = gen_op(&mut rng);
            let a = native_apply(&mut native, op);
            let b = emu_apply(&mut emu, op);
            if a != b {
                report.mismatches.push(format!(
                    "program {prog} step {step}: {op:?} native={a:?} emulated={b:?}"
                ));
                break;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn public_writes_are_visible_to_all_principals() {
        let mut m = emu_machine();
        m.mem_access(OS_ID, PUB_BASE + 3, Access::Write(0x7f))
            .unwrap();
        for p in PRINCIPALS {
            assert_eq!(
                m.mem_access(p, PUB_BASE + 3, Access::Read).unwrap(),
                Some(0x7f)
            );
        }
    }

    #[test]
    fn unshared_programs_are_trivially_equal() {
        // Only private self-accesses.
        let mut native = SpatialMemory::new(PUB_SIZE as usize);
        native.add_private(E1, PRIV_SIZE as usize);
        let mut emu = emu_machine();
        for off in 0..PRIV_SIZE {
            let op = SpatialOp::PrivWrite {
                p: E1,
                owner: E1,
                off,
                b: off as u8,
            };
            assert_eq!(native_apply(&mut native, op), emu_apply(&mut emu, op));
        }
    }

    #[test]
    fn short_random_programs_agree() {
        let report = check_spatial_emulation(10, 50, 1);
        assert!(report.passed(), "{:?}", report.mismatches);
    }
}
