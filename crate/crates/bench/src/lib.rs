//! Shared fixtures for the criterion benchmarks.

use elclave_core::model::{EnclaveId, Machine, MachineConfig, Permission, Uid};

pub const PRODUCER: EnclaveId = EnclaveId(1);
pub const CONSUMER: EnclaveId = EnclaveId(2);
pub const PRODUCER_BASE: u64 = 0x1000_0000;
pub const CONSUMER_BASE: u64 = 0x2000_0000;

/// A machine with one region shared read-write between two enclaves and
/// mapped in both, ready for memory traffic.
pub fn shared_region_machine(size: u64) -> (Machine, Uid) {
    let mut m = Machine::new(MachineConfig::default());
    m.add_enclave(PRODUCER);
    m.add_enclave(CONSUMER);
    let r = m.create(PRODUCER, size).expect("create");
    m.change(PRODUCER, r, Permission::RW).expect("change");
    m.share(PRODUCER, r, CONSUMER, Permission::RW)
        .expect("share");
    m.map(PRODUCER, PRODUCER_BASE, r).expect("map");
    m.map(CONSUMER, CONSUMER_BASE, r).expect("map");
    m.change(CONSUMER, r, Permission::RW).expect("change");
    (m, r)
}
