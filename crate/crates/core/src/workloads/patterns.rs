//! Data-sharing patterns on the relaxed memory model.
//!
//! All variants keep a single shared copy of the data. The full backend
//! serializes rounds with the lock bit (acquire/release or atomic transfer);
//! the nolock backend replaces exclusivity with permission toggling plus
//! private staging copies, which is what makes its copy cost grow with L.
//!
//! Steady-state security instructions per round, counted as change +
//! transfer invocations after setup:
//!   producer-consumer  2   (acquire + release, or publish + unpublish)
//!   proxy              4   (acquire, transfer to proxy, transfer to
//!                           destination, release)
//!   client-server      2   (transfer each direction; a round exchanges L
//!                           words split between request and response)

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BackendKind, Pattern, RunReport, Tick, WorkloadError, WorkloadSpec};
use crate::counters::{CostCounters, WORD_BYTES};
use crate::digest::Digest64;
use crate::model::{ElErr, EnclaveId, Machine, MachineConfig, Permission, SignalKind, Uid};

pub(crate) const E1: EnclaveId = EnclaveId(1);
pub(crate) const E2: EnclaveId = EnclaveId(2);
pub(crate) const E3: EnclaveId = EnclaveId(3);

// Per-actor virtual bases; one region is mapped at a different address in
// each enclave.
const BASE: [u64; 4] = [0x0800_0000, 0x1000_0000, 0x2000_0000, 0x3000_0000];

/// Deterministic payload source shared by every backend.
pub(crate) struct PayloadStream {
    rng: ChaCha8Rng,
}

impl PayloadStream {
    pub fn new(seed: u64) -> Self {
        PayloadStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_payload(&mut self, bytes: usize) -> Vec<u8> {
        let mut buf = vec![0u8; bytes];
        self.rng.fill_bytes(&mut buf);
        buf
    }
}

/// In-place update the proxy applies to each request.
pub(crate) fn proxy_transform(data: &mut [u8]) {
    for b in data {
        *b = b.wrapping_add(1);
    }
}

/// The server's computed reply to a request.
pub(crate) fn server_response(req: &[u8], resp_len: usize) -> Vec<u8> {
    (0..resp_len)
        .map(|i| {
            if req.is_empty() {
                0
            } else {
                req[i % req.len()].wrapping_add(7)
            }
        })
        .collect()
}

/// Request/response word split for the client-server pattern: a round
/// exchanges L words total.
pub(crate) fn client_server_split(l_words: u64) -> (u64, u64) {
    (l_words.div_ceil(2), l_words / 2)
}

struct World {
    m: Machine,
    stream: PayloadStream,
    digest: Digest64,
    /// Words explicitly staged into private memory (nolock variants).
    copy_words: u64,
    rounds_done: u64,
    rounds_target: u64,
    l_bytes: usize,
}

impl World {
    fn snapshot(&self) -> CostCounters {
        let mon = self.m.monitor().counters();
        CostCounters {
            enc_ops: 0,
            dec_ops: 0,
            copies: self.copy_words,
            instructions: self.m.counts().lock_protocol_instrs(),
            rpc_round_trips: 0,
            pmp_writes: mon.pmp_writes,
            context_switches: mon.context_switches,
        }
    }
}

fn fail(actor: EnclaveId, op: &'static str) -> impl FnOnce(ElErr) -> WorkloadError {
    move |err| WorkloadError::Instruction { actor, op, err }
}

/// Reads one little-endian word, treating an access fault as "not ready".
fn poll_word(w: &mut World, actor: EnclaveId, vaddr: u64) -> Option<u64> {
    match w.m.read_bytes(actor, vaddr, WORD_BYTES) {
        Ok(bytes) => Some(u64::from_le_bytes(bytes.try_into().unwrap())),
        Err(_) => None,
    }
}

fn write_word(w: &mut World, actor: EnclaveId, vaddr: u64, v: u64) -> Result<(), WorkloadError> {
    w.m.write_bytes(actor, vaddr, &v.to_le_bytes())
        .map_err(fail(actor, "mem_access"))
}

/// Drains `actor`'s queue, true if a signal matching the filter arrived.
fn poll_signal(w: &mut World, actor: EnclaveId, kind: SignalKind, from: Option<EnclaveId>) -> bool {
    w.m.poll_signals(actor)
        .iter()
        .any(|s| s.kind == kind && from.is_none_or(|f| s.actor == f))
}

trait PatternActor {
    fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError>;
}

/// Round-robin drive loop with a per-round counter snapshot whenever the
/// driving actor completes a round.
fn drive(
    world: &mut World,
    actors: &mut [&mut dyn PatternActor],
) -> Result<Vec<CostCounters>, WorkloadError> {
    let mut sched = super::RoundRobin::new(actors.len(), None);
    let mut per_round = Vec::new();
    let mut last_snap = world.snapshot();
    let mut seen_rounds = 0;
    let mut idle_rotations: u64 = 0;
    while world.rounds_done < world.rounds_target {
        let mut progressed = false;
        for i in sched.next_rotation() {
            if world.rounds_done >= world.rounds_target {
                break;
            }
            if actors[i].step(world)? == Tick::Progress {
                progressed = true;
            }
            if world.rounds_done > seen_rounds {
                let snap = world.snapshot();
                per_round.push(snap - last_snap);
                last_snap = snap;
                seen_rounds = world.rounds_done;
            }
        }
        if progressed {
            idle_rotations = 0;
        } else {
            idle_rotations += 1;
            if idle_rotations > 100_000 {
                return Err(WorkloadError::Stalled(idle_rotations));
            }
        }
    }
    Ok(per_round)
}

fn machine_for(spec: &WorkloadSpec, enclaves: u32) -> Machine {
    let mut m = Machine::new(MachineConfig {
        pmp_total: spec.pmp_total,
        strict_transfer_map: spec.strict_transfer_map,
        ..MachineConfig::default()
    });
    for i in 1..=enclaves {
        m.add_enclave(EnclaveId(i));
    }
    m
}

fn report(
    spec: &WorkloadSpec,
    world: &World,
    setup: CostCounters,
    per_round: Vec<CostCounters>,
) -> RunReport {
    RunReport {
        spec: *spec,
        setup,
        counters: world.snapshot() - setup,
        per_round,
        checksum: format!("{:016x}", world.digest.value()),
        sync: None,
    }
}

pub(super) fn run_pattern(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let nolock = spec.backend == BackendKind::ElasticlaveNolock;
    match spec.pattern {
        Pattern::ProducerConsumerOneway | Pattern::ProducerConsumerTwoway if nolock => {
            run_pc_nolock(spec)
        }
        Pattern::ProducerConsumerOneway => run_pc_full(spec, true),
        Pattern::ProducerConsumerTwoway => run_pc_full(spec, false),
        Pattern::Proxy if nolock => run_proxy_nolock(spec),
        Pattern::Proxy => run_proxy_full(spec),
        Pattern::ClientServer if nolock => run_cs_nolock(spec),
        Pattern::ClientServer => run_cs_full(spec),
        Pattern::Spinlock | Pattern::Futex => unreachable!("sync patterns handled elsewhere"),
    }
}

// ---- producer-consumer, full backend ------------------------------------

// Region layout: [0..8) seq word, [8..16) ack word (two-way only),
// payload after the header. One-way keeps the ack in a consumer-owned
// region because the consumer's static maximum is read-only.

fn run_pc_full(spec: &WorkloadSpec, oneway: bool) -> Result<RunReport, WorkloadError> {
    let l_bytes = (spec.l_words * WORD_BYTES) as usize;
    let header: u64 = if oneway { 8 } else { 16 };
    let mut m = machine_for(spec, 2);

    let r1 = m
        .create(E1, header + l_bytes as u64)
        .map_err(fail(E1, "create"))?;
    m.change(E1, r1, Permission::RW)
        .map_err(fail(E1, "change"))?;
    let cons_max = if oneway {
        Permission::R
    } else {
        Permission::RWL
    };
    m.share(E1, r1, E2, cons_max).map_err(fail(E1, "share"))?;
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;
    m.map(E2, BASE[2], r1).map_err(fail(E2, "map"))?;
    let cons_cur = if oneway {
        Permission::R
    } else {
        Permission::RW
    };
    m.change(E2, r1, cons_cur).map_err(fail(E2, "change"))?;

    if oneway {
        // The consumer's maximum is read-only, so the ack word lives in a
        // consumer-owned region shared back read-only.
        let r2 = m.create(E2, 8).map_err(fail(E2, "create"))?;
        m.change(E2, r2, Permission::RW)
            .map_err(fail(E2, "change"))?;
        m.share(E2, r2, E1, Permission::R)
            .map_err(fail(E2, "share"))?;
        m.map(E2, BASE[2] + 0x10000, r2).map_err(fail(E2, "map"))?;
        m.map(E1, BASE[1] + 0x10000, r2).map_err(fail(E1, "map"))?;
        m.change(E1, r2, Permission::R)
            .map_err(fail(E1, "change"))?;
    }
    m.poll_signals(E1); // discard setup lock-release noise

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes,
    };
    let setup = world.snapshot();

    enum ProdPhase {
        Write,
        Lock,
        Publish,
        WaitAck,
        Unlock,
    }
    struct Producer {
        phase: ProdPhase,
        round: u64,
        oneway: bool,
        header: u64,
        r1: Uid,
        ack_vaddr: u64,
    }
    impl PatternActor for Producer {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                // Two-way: acquire the lock before mutating shared data.
                ProdPhase::Lock => {
                    w.m.change(E1, self.r1, Permission::RWL)
                        .map_err(fail(E1, "change"))?;
                    self.phase = ProdPhase::Write;
                    Ok(Tick::Progress)
                }
                ProdPhase::Write => {
                    let payload = w.stream.next_payload(w.l_bytes);
                    w.m.write_bytes(E1, BASE[1] + self.header, &payload)
                        .map_err(fail(E1, "mem_access"))?;
                    write_word(w, E1, BASE[1], self.round)?;
                    self.phase = ProdPhase::Publish;
                    Ok(Tick::Progress)
                }
                // One-way: de-escalate to read-only while the consumer
                // reads. Two-way: release the lock.
                ProdPhase::Publish => {
                    let perm = if self.oneway {
                        Permission::R
                    } else {
                        Permission::RW
                    };
                    w.m.change(E1, self.r1, perm).map_err(fail(E1, "change"))?;
                    self.phase = ProdPhase::WaitAck;
                    Ok(Tick::Progress)
                }
                ProdPhase::WaitAck => match poll_word(w, E1, self.ack_vaddr) {
                    Some(v) if v == self.round => {
                        self.phase = ProdPhase::Unlock;
                        Ok(Tick::Progress)
                    }
                    _ => Ok(Tick::Idle),
                },
                // Restore write access for the next round; this completes
                // the round's two-instruction cycle.
                ProdPhase::Unlock => {
                    if self.oneway {
                        w.m.change(E1, self.r1, Permission::RW)
                            .map_err(fail(E1, "change"))?;
                    }
                    w.rounds_done += 1;
                    self.round += 1;
                    self.phase = if self.oneway {
                        ProdPhase::Write
                    } else {
                        ProdPhase::Lock
                    };
                    Ok(Tick::Progress)
                }
            }
        }
    }

    struct Consumer {
        round: u64,
        header: u64,
        ack_vaddr: u64,
    }
    impl PatternActor for Consumer {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if self.round > w.rounds_target {
                return Ok(Tick::Done);
            }
            match poll_word(w, E2, BASE[2]) {
                Some(v) if v == self.round => {
                    let data =
                        w.m.read_bytes(E2, BASE[2] + self.header, w.l_bytes as u64)
                            .map_err(fail(E2, "mem_access"))?;
                    w.digest.update(&data);
                    write_word(w, E2, self.ack_vaddr, self.round)?;
                    self.round += 1;
                    Ok(Tick::Progress)
                }
                _ => Ok(Tick::Idle),
            }
        }
    }

    // Two-way keeps the ack word in the shared region; one-way uses the
    // consumer-owned ack region.
    let (prod_ack, cons_ack) = if oneway {
        (BASE[1] + 0x10000, BASE[2] + 0x10000)
    } else {
        (BASE[1] + 8, BASE[2] + 8)
    };

    let mut producer = Producer {
        phase: if oneway {
            ProdPhase::Write
        } else {
            ProdPhase::Lock
        },
        round: 1,
        oneway,
        header,
        r1,
        ack_vaddr: prod_ack,
    };
    let mut consumer = Consumer {
        round: 1,
        header,
        ack_vaddr: cons_ack,
    };
    let per_round = drive(&mut world, &mut [&mut producer, &mut consumer])?;
    Ok(report(spec, &world, setup, per_round))
}

// ---- producer-consumer, nolock backend -----------------------------------

// Without the lock bit the consumer stages the payload into private memory
// before using it (one copy per word); the producer still write-protects
// the region while the consumer reads.

fn run_pc_nolock(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let l_bytes = (spec.l_words * WORD_BYTES) as usize;
    let mut m = machine_for(spec, 2);

    let r1 = m
        .create(E1, 8 + l_bytes as u64)
        .map_err(fail(E1, "create"))?;
    m.change(E1, r1, Permission::RW)
        .map_err(fail(E1, "change"))?;
    m.share(E1, r1, E2, Permission::R)
        .map_err(fail(E1, "share"))?;
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;
    m.map(E2, BASE[2], r1).map_err(fail(E2, "map"))?;
    m.change(E2, r1, Permission::R)
        .map_err(fail(E2, "change"))?;
    let r2 = m.create(E2, 8).map_err(fail(E2, "create"))?;
    m.change(E2, r2, Permission::RW)
        .map_err(fail(E2, "change"))?;
    m.share(E2, r2, E1, Permission::R)
        .map_err(fail(E2, "share"))?;
    m.map(E2, BASE[2] + 0x10000, r2).map_err(fail(E2, "map"))?;
    m.map(E1, BASE[1] + 0x10000, r2).map_err(fail(E1, "map"))?;
    m.change(E1, r2, Permission::R)
        .map_err(fail(E1, "change"))?;

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes,
    };
    let setup = world.snapshot();

    enum Phase {
        Write,
        Protect,
        WaitAck,
        Unprotect,
    }
    struct Producer {
        phase: Phase,
        round: u64,
        r1: Uid,
    }
    impl PatternActor for Producer {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                Phase::Write => {
                    let payload = w.stream.next_payload(w.l_bytes);
                    w.m.write_bytes(E1, BASE[1] + 8, &payload)
                        .map_err(fail(E1, "mem_access"))?;
                    write_word(w, E1, BASE[1], self.round)?;
                    self.phase = Phase::Protect;
                    Ok(Tick::Progress)
                }
                Phase::Protect => {
                    w.m.change(E1, self.r1, Permission::R)
                        .map_err(fail(E1, "change"))?;
                    self.phase = Phase::WaitAck;
                    Ok(Tick::Progress)
                }
                Phase::WaitAck => match poll_word(w, E1, BASE[1] + 0x10000) {
                    Some(v) if v == self.round => {
                        self.phase = Phase::Unprotect;
                        Ok(Tick::Progress)
                    }
                    _ => Ok(Tick::Idle),
                },
                Phase::Unprotect => {
                    w.m.change(E1, self.r1, Permission::RW)
                        .map_err(fail(E1, "change"))?;
                    w.rounds_done += 1;
                    self.round += 1;
                    self.phase = Phase::Write;
                    Ok(Tick::Progress)
                }
            }
        }
    }

    struct Consumer {
        round: u64,
    }
    impl PatternActor for Consumer {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if self.round > w.rounds_target {
                return Ok(Tick::Done);
            }
            match poll_word(w, E2, BASE[2]) {
                Some(v) if v == self.round => {
                    // Stage into private memory before use.
                    let staged =
                        w.m.read_bytes(E2, BASE[2] + 8, w.l_bytes as u64)
                            .map_err(fail(E2, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    w.digest.update(&staged);
                    write_word(w, E2, BASE[2] + 0x10000, self.round)?;
                    self.round += 1;
                    Ok(Tick::Progress)
                }
                _ => Ok(Tick::Idle),
            }
        }
    }

    let mut producer = Producer {
        phase: Phase::Write,
        round: 1,
        r1,
    };
    let mut consumer = Consumer { round: 1 };
    let per_round = drive(&mut world, &mut [&mut producer, &mut consumer])?;
    Ok(report(spec, &world, setup, per_round))
}

// ---- proxy, full backend --------------------------------------------------

// Source locks and writes, transfers the lock to the proxy, the proxy
// updates in place and transfers to the destination, which reads and
// releases. Signals carry all the control flow.

fn run_proxy_full(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let l_bytes = (spec.l_words * WORD_BYTES) as usize;
    let size = (l_bytes as u64).max(8);
    let mut m = machine_for(spec, 3);

    let r1 = m.create(E1, size).map_err(fail(E1, "create"))?;
    m.change(E1, r1, Permission::RW)
        .map_err(fail(E1, "change"))?;
    for (e, base) in [(E2, BASE[2]), (E3, BASE[3])] {
        m.share(E1, r1, e, Permission::RWL)
            .map_err(fail(E1, "share"))?;
        m.map(e, base, r1).map_err(fail(e, "map"))?;
        m.change(e, r1, Permission::RW).map_err(fail(e, "change"))?;
    }
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;
    m.poll_signals(E1);

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes,
    };
    let setup = world.snapshot();

    enum SrcPhase {
        Lock,
        Write,
        Handoff,
        WaitDone,
    }
    struct Source {
        phase: SrcPhase,
        r1: Uid,
    }
    impl PatternActor for Source {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                SrcPhase::Lock => {
                    w.m.change(E1, self.r1, Permission::RWL)
                        .map_err(fail(E1, "change"))?;
                    self.phase = SrcPhase::Write;
                    Ok(Tick::Progress)
                }
                SrcPhase::Write => {
                    let payload = w.stream.next_payload(w.l_bytes);
                    w.m.write_bytes(E1, BASE[1], &payload)
                        .map_err(fail(E1, "mem_access"))?;
                    self.phase = SrcPhase::Handoff;
                    Ok(Tick::Progress)
                }
                SrcPhase::Handoff => {
                    w.m.transfer(E1, self.r1, E2)
                        .map_err(fail(E1, "transfer"))?;
                    self.phase = SrcPhase::WaitDone;
                    Ok(Tick::Progress)
                }
                // The destination's release shows up as a LockReleased
                // signal to the owner.
                SrcPhase::WaitDone => {
                    if poll_signal(w, E1, SignalKind::LockReleased, Some(E3)) {
                        w.rounds_done += 1;
                        self.phase = SrcPhase::Lock;
                        Ok(Tick::Progress)
                    } else {
                        Ok(Tick::Idle)
                    }
                }
            }
        }
    }

    struct Proxy {
        r1: Uid,
    }
    impl PatternActor for Proxy {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            if !poll_signal(w, E2, SignalKind::TransferReceived, None) {
                return Ok(Tick::Idle);
            }
            // Holding the lock: update the request in place, hand off.
            let mut data =
                w.m.read_bytes(E2, BASE[2], w.l_bytes as u64)
                    .map_err(fail(E2, "mem_access"))?;
            proxy_transform(&mut data);
            w.m.write_bytes(E2, BASE[2], &data)
                .map_err(fail(E2, "mem_access"))?;
            w.m.transfer(E2, self.r1, E3)
                .map_err(fail(E2, "transfer"))?;
            Ok(Tick::Progress)
        }
    }

    struct Dest {
        r1: Uid,
    }
    impl PatternActor for Dest {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            if !poll_signal(w, E3, SignalKind::TransferReceived, None) {
                return Ok(Tick::Idle);
            }
            let data =
                w.m.read_bytes(E3, BASE[3], w.l_bytes as u64)
                    .map_err(fail(E3, "mem_access"))?;
            w.digest.update(&data);
            w.m.change(E3, self.r1, Permission::RW)
                .map_err(fail(E3, "change"))?;
            Ok(Tick::Progress)
        }
    }

    let mut source = Source {
        phase: SrcPhase::Lock,
        r1,
    };
    let mut proxy = Proxy { r1 };
    let mut dest = Dest { r1 };
    let per_round = drive(&mut world, &mut [&mut source, &mut proxy, &mut dest])?;
    Ok(report(spec, &world, setup, per_round))
}

// ---- proxy, nolock backend -------------------------------------------------

// Region layout: [0..8) stage word (round * 4 + phase), payload after.
// Phases: 1 = request ready, 2 = transformed, 3 = consumed. The proxy must
// stage the data privately, transform, and copy it back: 2L copies, plus the
// destination's staging copy, 3L per round.

fn run_proxy_nolock(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let l_bytes = (spec.l_words * WORD_BYTES) as usize;
    let mut m = machine_for(spec, 3);

    let r1 = m
        .create(E1, 8 + l_bytes as u64)
        .map_err(fail(E1, "create"))?;
    m.change(E1, r1, Permission::RW)
        .map_err(fail(E1, "change"))?;
    for (e, base, cur) in [(E2, BASE[2], Permission::R), (E3, BASE[3], Permission::RW)] {
        m.share(E1, r1, e, Permission::RW)
            .map_err(fail(E1, "share"))?;
        m.map(e, base, r1).map_err(fail(e, "map"))?;
        m.change(e, r1, cur).map_err(fail(e, "change"))?;
    }
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes,
    };
    let setup = world.snapshot();

    enum SrcPhase {
        Write,
        Protect,
        WaitConsumed,
        Unprotect,
    }
    struct Source {
        phase: SrcPhase,
        round: u64,
        r1: Uid,
    }
    impl PatternActor for Source {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                SrcPhase::Write => {
                    let payload = w.stream.next_payload(w.l_bytes);
                    w.m.write_bytes(E1, BASE[1] + 8, &payload)
                        .map_err(fail(E1, "mem_access"))?;
                    write_word(w, E1, BASE[1], self.round * 4 + 1)?;
                    self.phase = SrcPhase::Protect;
                    Ok(Tick::Progress)
                }
                SrcPhase::Protect => {
                    w.m.change(E1, self.r1, Permission::R)
                        .map_err(fail(E1, "change"))?;
                    self.phase = SrcPhase::WaitConsumed;
                    Ok(Tick::Progress)
                }
                SrcPhase::WaitConsumed => match poll_word(w, E1, BASE[1]) {
                    Some(v) if v == self.round * 4 + 3 => {
                        self.phase = SrcPhase::Unprotect;
                        Ok(Tick::Progress)
                    }
                    _ => Ok(Tick::Idle),
                },
                SrcPhase::Unprotect => {
                    w.m.change(E1, self.r1, Permission::RW)
                        .map_err(fail(E1, "change"))?;
                    w.rounds_done += 1;
                    self.round += 1;
                    self.phase = SrcPhase::Write;
                    Ok(Tick::Progress)
                }
            }
        }
    }

    struct Proxy {
        round: u64,
        r1: Uid,
    }
    impl PatternActor for Proxy {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if self.round > w.rounds_target {
                return Ok(Tick::Done);
            }
            match poll_word(w, E2, BASE[2]) {
                Some(v) if v == self.round * 4 + 1 => {
                    // Stage in, transform privately, escalate, copy back.
                    let mut staged =
                        w.m.read_bytes(E2, BASE[2] + 8, w.l_bytes as u64)
                            .map_err(fail(E2, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    proxy_transform(&mut staged);
                    w.m.change(E2, self.r1, Permission::RW)
                        .map_err(fail(E2, "change"))?;
                    w.m.write_bytes(E2, BASE[2] + 8, &staged)
                        .map_err(fail(E2, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    write_word(w, E2, BASE[2], self.round * 4 + 2)?;
                    w.m.change(E2, self.r1, Permission::R)
                        .map_err(fail(E2, "change"))?;
                    self.round += 1;
                    Ok(Tick::Progress)
                }
                _ => Ok(Tick::Idle),
            }
        }
    }

    struct Dest {
        round: u64,
    }
    impl PatternActor for Dest {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if self.round > w.rounds_target {
                return Ok(Tick::Done);
            }
            match poll_word(w, E3, BASE[3]) {
                Some(v) if v == self.round * 4 + 2 => {
                    let staged =
                        w.m.read_bytes(E3, BASE[3] + 8, w.l_bytes as u64)
                            .map_err(fail(E3, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    w.digest.update(&staged);
                    write_word(w, E3, BASE[3], self.round * 4 + 3)?;
                    self.round += 1;
                    Ok(Tick::Progress)
                }
                _ => Ok(Tick::Idle),
            }
        }
    }

    let mut source = Source {
        phase: SrcPhase::Write,
        round: 1,
        r1,
    };
    let mut proxy = Proxy { round: 1, r1 };
    let mut dest = Dest { round: 1 };
    let per_round = drive(&mut world, &mut [&mut source, &mut proxy, &mut dest])?;
    Ok(report(spec, &world, setup, per_round))
}

// ---- client-server, full backend -------------------------------------------

// Single shared copy: request words then response words. The lock travels
// client → server → client each round via transfer, 2 instructions.

fn run_cs_full(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let (req_w, resp_w) = client_server_split(spec.l_words);
    let req_bytes = (req_w * WORD_BYTES) as usize;
    let resp_bytes = (resp_w * WORD_BYTES) as usize;
    let size = ((req_bytes + resp_bytes) as u64).max(8);
    let mut m = machine_for(spec, 2);

    let r1 = m.create(E1, size).map_err(fail(E1, "create"))?;
    m.share(E1, r1, E2, Permission::RWL)
        .map_err(fail(E1, "share"))?;
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;
    m.map(E2, BASE[2], r1).map_err(fail(E2, "map"))?;
    m.change(E2, r1, Permission::RW)
        .map_err(fail(E2, "change"))?;
    // The client keeps the lock it acquired at creation.
    m.poll_signals(E1);

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes: req_bytes + resp_bytes,
    };
    let setup = world.snapshot();

    enum ClientPhase {
        WriteReq,
        Handoff,
        WaitBack,
        ReadResp,
    }
    struct Client {
        phase: ClientPhase,
        r1: Uid,
        req_bytes: usize,
        resp_bytes: usize,
    }
    impl PatternActor for Client {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                ClientPhase::WriteReq => {
                    let req = w.stream.next_payload(self.req_bytes);
                    w.m.write_bytes(E1, BASE[1], &req)
                        .map_err(fail(E1, "mem_access"))?;
                    self.phase = ClientPhase::Handoff;
                    Ok(Tick::Progress)
                }
                ClientPhase::Handoff => {
                    w.m.transfer(E1, self.r1, E2)
                        .map_err(fail(E1, "transfer"))?;
                    self.phase = ClientPhase::WaitBack;
                    Ok(Tick::Progress)
                }
                ClientPhase::WaitBack => {
                    if poll_signal(w, E1, SignalKind::TransferReceived, Some(E2)) {
                        self.phase = ClientPhase::ReadResp;
                        Ok(Tick::Progress)
                    } else {
                        Ok(Tick::Idle)
                    }
                }
                ClientPhase::ReadResp => {
                    let resp =
                        w.m.read_bytes(E1, BASE[1] + self.req_bytes as u64, self.resp_bytes as u64)
                            .map_err(fail(E1, "mem_access"))?;
                    w.digest.update(&resp);
                    w.rounds_done += 1;
                    self.phase = ClientPhase::WriteReq;
                    Ok(Tick::Progress)
                }
            }
        }
    }

    struct Server {
        r1: Uid,
        req_bytes: usize,
        resp_bytes: usize,
    }
    impl PatternActor for Server {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            if !poll_signal(w, E2, SignalKind::TransferReceived, Some(E1)) {
                return Ok(Tick::Idle);
            }
            let req =
                w.m.read_bytes(E2, BASE[2], self.req_bytes as u64)
                    .map_err(fail(E2, "mem_access"))?;
            w.digest.update(&req);
            let resp = server_response(&req, self.resp_bytes);
            w.m.write_bytes(E2, BASE[2] + self.req_bytes as u64, &resp)
                .map_err(fail(E2, "mem_access"))?;
            w.m.transfer(E2, self.r1, E1)
                .map_err(fail(E2, "transfer"))?;
            Ok(Tick::Progress)
        }
    }

    let mut client = Client {
        phase: ClientPhase::WriteReq,
        r1,
        req_bytes,
        resp_bytes,
    };
    let mut server = Server {
        r1,
        req_bytes,
        resp_bytes,
    };
    let per_round = drive(&mut world, &mut [&mut client, &mut server])?;
    Ok(report(spec, &world, setup, per_round))
}

// ---- client-server, nolock backend ------------------------------------------

// Layout: [0..8) stage word, request, response. The server stages the
// request, the client stages the response: L copies per round.

fn run_cs_nolock(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let (req_w, resp_w) = client_server_split(spec.l_words);
    let req_bytes = (req_w * WORD_BYTES) as usize;
    let resp_bytes = (resp_w * WORD_BYTES) as usize;
    let mut m = machine_for(spec, 2);

    let r1 = m
        .create(E1, 8 + (req_bytes + resp_bytes) as u64)
        .map_err(fail(E1, "create"))?;
    m.change(E1, r1, Permission::RW)
        .map_err(fail(E1, "change"))?;
    m.share(E1, r1, E2, Permission::RW)
        .map_err(fail(E1, "share"))?;
    m.map(E1, BASE[1], r1).map_err(fail(E1, "map"))?;
    m.map(E2, BASE[2], r1).map_err(fail(E2, "map"))?;
    m.change(E2, r1, Permission::RW)
        .map_err(fail(E2, "change"))?;

    let mut world = World {
        m,
        stream: PayloadStream::new(spec.seed),
        digest: Digest64::new(),
        copy_words: 0,
        rounds_done: 0,
        rounds_target: spec.rounds,
        l_bytes: req_bytes + resp_bytes,
    };
    let setup = world.snapshot();

    enum ClientPhase {
        WriteReq,
        Protect,
        WaitResp,
        Consume,
    }
    struct Client {
        phase: ClientPhase,
        round: u64,
        r1: Uid,
        req_bytes: usize,
        resp_bytes: usize,
    }
    impl PatternActor for Client {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if w.rounds_done >= w.rounds_target {
                return Ok(Tick::Done);
            }
            match self.phase {
                ClientPhase::WriteReq => {
                    let req = w.stream.next_payload(self.req_bytes);
                    w.m.write_bytes(E1, BASE[1] + 8, &req)
                        .map_err(fail(E1, "mem_access"))?;
                    write_word(w, E1, BASE[1], self.round * 4 + 1)?;
                    self.phase = ClientPhase::Protect;
                    Ok(Tick::Progress)
                }
                // Write-protect its own view while the server works.
                ClientPhase::Protect => {
                    w.m.change(E1, self.r1, Permission::R)
                        .map_err(fail(E1, "change"))?;
                    self.phase = ClientPhase::WaitResp;
                    Ok(Tick::Progress)
                }
                ClientPhase::WaitResp => match poll_word(w, E1, BASE[1]) {
                    Some(v) if v == self.round * 4 + 2 => {
                        self.phase = ClientPhase::Consume;
                        Ok(Tick::Progress)
                    }
                    _ => Ok(Tick::Idle),
                },
                ClientPhase::Consume => {
                    let staged =
                        w.m.read_bytes(
                            E1,
                            BASE[1] + 8 + self.req_bytes as u64,
                            self.resp_bytes as u64,
                        )
                        .map_err(fail(E1, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    w.digest.update(&staged);
                    w.m.change(E1, self.r1, Permission::RW)
                        .map_err(fail(E1, "change"))?;
                    w.rounds_done += 1;
                    self.round += 1;
                    self.phase = ClientPhase::WriteReq;
                    Ok(Tick::Progress)
                }
            }
        }
    }

    struct Server {
        round: u64,
        req_bytes: usize,
        resp_bytes: usize,
    }
    impl PatternActor for Server {
        fn step(&mut self, w: &mut World) -> Result<Tick, WorkloadError> {
            if self.round > w.rounds_target {
                return Ok(Tick::Done);
            }
            match poll_word(w, E2, BASE[2]) {
                Some(v) if v == self.round * 4 + 1 => {
                    let staged =
                        w.m.read_bytes(E2, BASE[2] + 8, self.req_bytes as u64)
                            .map_err(fail(E2, "mem_access"))?;
                    w.copy_words += crate::counters::words(staged.len() as u64);
                    w.digest.update(&staged);
                    let resp = server_response(&staged, self.resp_bytes);
                    w.m.write_bytes(E2, BASE[2] + 8 + self.req_bytes as u64, &resp)
                        .map_err(fail(E2, "mem_access"))?;
                    write_word(w, E2, BASE[2], self.round * 4 + 2)?;
                    self.round += 1;
                    Ok(Tick::Progress)
                }
                _ => Ok(Tick::Idle),
            }
        }
    }

    let mut client = Client {
        phase: ClientPhase::WriteReq,
        round: 1,
        r1,
        req_bytes,
        resp_bytes,
    };
    let mut server = Server {
        round: 1,
        req_bytes,
        resp_bytes,
    };
    let per_round = drive(&mut world, &mut [&mut client, &mut server])?;
    Ok(report(spec, &world, setup, per_round))
}
