//! Thread-synchronization workloads: two worker enclaves contending on a
//! lock word for a configurable hold time.
//!
//! - spinlock: the lock state lives in a region shared only between the
//!   workers; the OS has no access. Waiters busy-poll.
//! - futex: the lock state is additionally shared with the OS read-only;
//!   waiters sleep and the OS wakes them when it observes the lock free.
//! - spatial: lock state lives in the trusted coordinator; acquire and
//!   release are RPCs over the secure public channel.
//!
//! Acquire test-and-set is modeled as one atomic scheduler step. A guard
//! cell written by the holder and re-checked on every hold step makes
//! mutual-exclusion violations observable.

use super::sched::{RoundRobin, Tick};
use super::{BackendKind, Pattern, RunReport, SyncMetrics, WorkloadError, WorkloadSpec};
use crate::counters::CostCounters;
use crate::digest::Digest64;
use crate::model::{ElErr, EnclaveId, Machine, MachineConfig, Permission, OS_ID};
use crate::spatial::SpatialWorld;

const W1: EnclaveId = EnclaveId(1);
const W2: EnclaveId = EnclaveId(2);
const COORDINATOR: EnclaveId = EnclaveId(100);

const LOCK_OFF: u64 = 0; // holder id, 0 when free
const WAITERS_OFF: u64 = 8; // sleeping-waiter count (futex)
const GUARD_OFF: u64 = 16; // exclusion witness

const BASE: [u64; 3] = [0x0100_0000, 0x1000_0000, 0x2000_0000]; // OS, W1, W2

pub(super) fn run_sync(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    match spec.backend {
        BackendKind::Spatial => run_sync_spatial(spec),
        _ => run_sync_elasticlave(spec),
    }
}

fn checksum(rounds_per_worker: &[(EnclaveId, u64)]) -> String {
    let mut d = Digest64::new();
    for (w, rounds) in rounds_per_worker {
        d.update_u64(w.0 as u64);
        d.update_u64(*rounds);
    }
    format!("{:016x}", d.value())
}

// ---- relaxed-model spinlock and futex --------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Try,
    Hold(u64),
    Release,
    Done,
}

struct Worker {
    me: EnclaveId,
    base: u64,
    phase: Phase,
    rounds_left: u64,
    completed: u64,
    sleeping: bool,
    sleep_epoch: u64,
}

impl Worker {
    fn new(me: EnclaveId, base: u64, rounds: u64) -> Self {
        Worker {
            me,
            base,
            phase: if rounds == 0 { Phase::Done } else { Phase::Try },
            rounds_left: rounds,
            completed: 0,
            sleeping: false,
            sleep_epoch: 0,
        }
    }
}

struct SyncWorld {
    m: Machine,
    futex: bool,
    contention: u64,
    wake_epoch: u64,
    metrics: SyncMetrics,
}

fn fail(actor: EnclaveId, op: &'static str) -> impl FnOnce(ElErr) -> WorkloadError {
    move |err| WorkloadError::Instruction { actor, op, err }
}

fn read_word(m: &mut Machine, p: EnclaveId, vaddr: u64) -> Result<u64, ElErr> {
    let bytes = m.read_bytes(p, vaddr, 8)?;
    Ok(u64::from_le_bytes(bytes.try_into().unwrap()))
}

fn write_word(m: &mut Machine, p: EnclaveId, vaddr: u64, v: u64) -> Result<(), ElErr> {
    m.write_bytes(p, vaddr, &v.to_le_bytes())
}

impl Worker {
    fn step(&mut self, w: &mut SyncWorld) -> Result<Tick, WorkloadError> {
        if self.phase == Phase::Done {
            return Ok(Tick::Done);
        }
        if self.sleeping {
            if w.wake_epoch > self.sleep_epoch {
                self.sleeping = false;
                // Deregister as a waiter, then retry on the next step.
                let waiters = read_word(&mut w.m, self.me, self.base + WAITERS_OFF)
                    .map_err(fail(self.me, "mem_access"))?;
                write_word(
                    &mut w.m,
                    self.me,
                    self.base + WAITERS_OFF,
                    waiters.saturating_sub(1),
                )
                .map_err(fail(self.me, "mem_access"))?;
                return Ok(Tick::Progress);
            }
            return Ok(Tick::Sleeping);
        }
        match self.phase {
            Phase::Try => {
                // Test-and-set, atomic at scheduler-step granularity.
                let lock = read_word(&mut w.m, self.me, self.base + LOCK_OFF)
                    .map_err(fail(self.me, "mem_access"))?;
                if lock == 0 {
                    write_word(&mut w.m, self.me, self.base + LOCK_OFF, self.me.0 as u64)
                        .map_err(fail(self.me, "mem_access"))?;
                    write_word(&mut w.m, self.me, self.base + GUARD_OFF, self.me.0 as u64)
                        .map_err(fail(self.me, "mem_access"))?;
                    w.metrics.acquires += 1;
                    self.phase = if w.contention == 0 {
                        Phase::Release
                    } else {
                        Phase::Hold(w.contention)
                    };
                } else {
                    w.metrics.busy_polls += 1;
                    if w.futex {
                        let waiters = read_word(&mut w.m, self.me, self.base + WAITERS_OFF)
                            .map_err(fail(self.me, "mem_access"))?;
                        write_word(&mut w.m, self.me, self.base + WAITERS_OFF, waiters + 1)
                            .map_err(fail(self.me, "mem_access"))?;
                        self.sleeping = true;
                        self.sleep_epoch = w.wake_epoch;
                    }
                }
                Ok(Tick::Progress)
            }
            Phase::Hold(left) => {
                let guard = read_word(&mut w.m, self.me, self.base + GUARD_OFF)
                    .map_err(fail(self.me, "mem_access"))?;
                if guard != self.me.0 as u64 {
                    return Err(WorkloadError::ExclusionViolated(format!(
                        "{} held the lock but guard reads {guard}",
                        self.me
                    )));
                }
                self.phase = if left <= 1 {
                    Phase::Release
                } else {
                    Phase::Hold(left - 1)
                };
                Ok(Tick::Progress)
            }
            Phase::Release => {
                write_word(&mut w.m, self.me, self.base + LOCK_OFF, 0)
                    .map_err(fail(self.me, "mem_access"))?;
                w.metrics.releases += 1;
                self.rounds_left -= 1;
                self.completed += 1;
                self.phase = if self.rounds_left == 0 {
                    Phase::Done
                } else {
                    Phase::Try
                };
                Ok(Tick::Progress)
            }
            Phase::Done => Ok(Tick::Done),
        }
    }
}

/// The OS side of the futex: poll the (read-only) lock state and wake
/// sleepers whenever the lock is observed free.
struct OsWaker;

impl OsWaker {
    fn step(&mut self, w: &mut SyncWorld) -> Result<Tick, WorkloadError> {
        let lock =
            read_word(&mut w.m, OS_ID, BASE[0] + LOCK_OFF).map_err(fail(OS_ID, "mem_access"))?;
        let waiters =
            read_word(&mut w.m, OS_ID, BASE[0] + WAITERS_OFF).map_err(fail(OS_ID, "mem_access"))?;
        if lock == 0 && waiters > 0 {
            w.wake_epoch += 1;
            Ok(Tick::Progress)
        } else {
            Ok(Tick::Idle)
        }
    }
}

fn run_sync_elasticlave(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let futex = spec.pattern == Pattern::Futex;
    let mut m = Machine::new(MachineConfig {
        pmp_total: spec.pmp_total,
        strict_transfer_map: spec.strict_transfer_map,
        ..MachineConfig::default()
    });
    m.add_enclave(W1);
    m.add_enclave(W2);

    let r = m.create(W1, 24).map_err(fail(W1, "create"))?;
    m.change(W1, r, Permission::RW)
        .map_err(fail(W1, "change"))?;
    m.map(W1, BASE[1], r).map_err(fail(W1, "map"))?;
    m.share(W1, r, W2, Permission::RW)
        .map_err(fail(W1, "share"))?;
    m.map(W2, BASE[2], r).map_err(fail(W2, "map"))?;
    m.change(W2, r, Permission::RW)
        .map_err(fail(W2, "change"))?;
    if futex {
        // Read-only OS view of the lock state enables sleep/wake.
        m.share(W1, r, OS_ID, Permission::R)
            .map_err(fail(W1, "share"))?;
        m.map(OS_ID, BASE[0], r).map_err(fail(OS_ID, "map"))?;
        m.change(OS_ID, r, Permission::R)
            .map_err(fail(OS_ID, "change"))?;
    }

    let mut world = SyncWorld {
        m,
        futex,
        contention: spec.contention,
        wake_epoch: 0,
        metrics: SyncMetrics::default(),
    };
    let setup_mon = world.m.monitor().counters();
    let setup = CostCounters {
        instructions: world.m.counts().lock_protocol_instrs(),
        pmp_writes: setup_mon.pmp_writes,
        context_switches: setup_mon.context_switches,
        ..Default::default()
    };

    let mut w1 = Worker::new(W1, BASE[1], spec.rounds);
    let mut w2 = Worker::new(W2, BASE[2], spec.rounds);
    let mut os = OsWaker;
    let n_actors = if futex { 3 } else { 2 };
    let mut sched = RoundRobin::new(n_actors, None);
    let mut guard_ticks: u64 = 0;
    while w1.phase != Phase::Done || w2.phase != Phase::Done {
        for i in sched.next_rotation() {
            let tick = match i {
                0 => w1.step(&mut world)?,
                1 => w2.step(&mut world)?,
                _ => os.step(&mut world)?,
            };
            if matches!(tick, Tick::Progress | Tick::Idle) {
                world.metrics.wall_steps += 1;
            }
        }
        guard_ticks += 1;
        if guard_ticks > 1_000_000 {
            return Err(WorkloadError::Stalled(guard_ticks));
        }
    }

    let mon = world.m.monitor().counters();
    let totals = CostCounters {
        instructions: world.m.counts().lock_protocol_instrs(),
        pmp_writes: mon.pmp_writes,
        context_switches: mon.context_switches,
        ..Default::default()
    } - setup;

    Ok(RunReport {
        spec: *spec,
        setup,
        counters: totals,
        per_round: Vec::new(),
        checksum: checksum(&[(W1, w1.completed), (W2, w2.completed)]),
        sync: Some(world.metrics),
    })
}

// ---- spatial baseline -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpatialPhase {
    Try,
    Hold(u64),
    Release,
    Done,
}

struct SpatialWorker {
    me: EnclaveId,
    phase: SpatialPhase,
    rounds_left: u64,
    completed: u64,
}

impl SpatialWorker {
    fn step(&mut self, world: &mut SpatialWorld, contention: u64, metrics: &mut SyncMetrics) {
        match self.phase {
            SpatialPhase::Try => {
                // Acquire attempt: one RPC round trip to the coordinator.
                let reply = world.rpc(self.me, "tas lock", &(self.me.0 as u64).to_le_bytes());
                if reply.first() == Some(&1) {
                    metrics.acquires += 1;
                    self.phase = if contention == 0 {
                        SpatialPhase::Release
                    } else {
                        SpatialPhase::Hold(contention)
                    };
                } else {
                    metrics.busy_polls += 1;
                }
            }
            SpatialPhase::Hold(left) => {
                // Private computation while holding.
                self.phase = if left <= 1 {
                    SpatialPhase::Release
                } else {
                    SpatialPhase::Hold(left - 1)
                };
            }
            SpatialPhase::Release => {
                world.rpc(self.me, "clear lock", &[]);
                metrics.releases += 1;
                self.rounds_left -= 1;
                self.completed += 1;
                self.phase = if self.rounds_left == 0 {
                    SpatialPhase::Done
                } else {
                    SpatialPhase::Try
                };
            }
            SpatialPhase::Done => {}
        }
    }
}

fn run_sync_spatial(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let mut world = SpatialWorld::new(COORDINATOR, spec.seed ^ 0x5eed_c0de);
    let mut metrics = SyncMetrics::default();
    let mut workers = [
        SpatialWorker {
            me: W1,
            phase: if spec.rounds == 0 {
                SpatialPhase::Done
            } else {
                SpatialPhase::Try
            },
            rounds_left: spec.rounds,
            completed: 0,
        },
        SpatialWorker {
            me: W2,
            phase: if spec.rounds == 0 {
                SpatialPhase::Done
            } else {
                SpatialPhase::Try
            },
            rounds_left: spec.rounds,
            completed: 0,
        },
    ];
    let mut sched = RoundRobin::new(2, None);
    let mut guard_ticks: u64 = 0;
    while workers.iter().any(|w| w.phase != SpatialPhase::Done) {
        for i in sched.next_rotation() {
            if workers[i].phase != SpatialPhase::Done {
                workers[i].step(&mut world, spec.contention, &mut metrics);
                metrics.wall_steps += 1;
            }
        }
        guard_ticks += 1;
        if guard_ticks > 1_000_000 {
            return Err(WorkloadError::Stalled(guard_ticks));
        }
    }

    Ok(RunReport {
        spec: *spec,
        setup: Default::default(),
        counters: world.counters,
        per_round: Vec::new(),
        checksum: checksum(&[(W1, workers[0].completed), (W2, workers[1].completed)]),
        sync: Some(metrics),
    })
}
