use super::*;
use crate::model::{Machine, MachineConfig, Permission};

fn spec(pattern: Pattern, backend: BackendKind, l: u64, rounds: u64) -> WorkloadSpec {
    WorkloadSpec {
        l_words: l,
        rounds,
        ..WorkloadSpec::new(pattern, backend)
    }
}

#[test]
fn producer_consumer_full_costs() {
    let report = run(&spec(
        Pattern::ProducerConsumerTwoway,
        BackendKind::Elasticlave,
        4096,
        1,
    ))
    .unwrap();
    assert_eq!(report.counters.instructions, 2);
    assert_eq!(report.counters.copies, 0);
    assert_eq!(report.counters.enc_ops, 0);

    let spatial = run(&spec(
        Pattern::ProducerConsumerTwoway,
        BackendKind::Spatial,
        4096,
        1,
    ))
    .unwrap();
    assert_eq!(spatial.counters.enc_ops, 4096);
    assert_eq!(spatial.counters.dec_ops, 4096);
    assert_eq!(spatial.counters.copies, 3 * 4096);
    assert_eq!(report.checksum, spatial.checksum);
}

#[test]
fn producer_consumer_instructions_independent_of_l() {
    // Oracle: audit per-round deltas; the instruction count must not grow
    // with the payload size.
    for l in [1u64, 16, 4096] {
        let report = run(&spec(
            Pattern::ProducerConsumerTwoway,
            BackendKind::Elasticlave,
            l,
            10,
        ))
        .unwrap();
        assert_eq!(report.counters.instructions, 20, "L={l}");
        assert_eq!(report.per_round.len(), 10);
        for (i, round) in report.per_round.iter().enumerate() {
            assert_eq!(round.instructions, 2, "L={l} round={i}");
        }
    }
}

#[test]
fn producer_consumer_oneway_matches_other_backends() {
    for l in [1u64, 64] {
        let a = run(&spec(
            Pattern::ProducerConsumerOneway,
            BackendKind::Elasticlave,
            l,
            3,
        ))
        .unwrap();
        let b = run(&spec(
            Pattern::ProducerConsumerOneway,
            BackendKind::Spatial,
            l,
            3,
        ))
        .unwrap();
        assert_eq!(a.checksum, b.checksum);
        assert_eq!(a.counters.instructions, 6);
    }
}

#[test]
fn proxy_full_costs() {
    let report = run(&spec(Pattern::Proxy, BackendKind::Elasticlave, 512, 1)).unwrap();
    assert_eq!(report.counters.instructions, 4);
    assert_eq!(report.counters.copies, 0);
    let spatial = run(&spec(Pattern::Proxy, BackendKind::Spatial, 512, 1)).unwrap();
    assert_eq!(spatial.counters.enc_ops, 2 * 512);
    assert_eq!(spatial.counters.dec_ops, 2 * 512);
    assert_eq!(spatial.counters.copies, 6 * 512);
    assert_eq!(report.checksum, spatial.checksum);
}

#[test]
fn proxy_nolock_copies_grow_with_l() {
    let mut last = 0;
    for l in [1u64, 16, 512, 4096] {
        let report = run(&spec(Pattern::Proxy, BackendKind::ElasticlaveNolock, l, 1)).unwrap();
        assert!(
            report.counters.copies > last,
            "copies must grow with L: L={l} copies={}",
            report.counters.copies
        );
        last = report.counters.copies;
        // Still the single-shared-buffer checksum.
        let full = run(&spec(Pattern::Proxy, BackendKind::Elasticlave, l, 1)).unwrap();
        assert_eq!(report.checksum, full.checksum);
    }
}

#[test]
fn adversary_change_during_locked_chain_is_denied() {
    // While the chain holds the lock, a racing accessor's lock acquisition
    // fails and leaves no effect.
    let mut m = Machine::new(MachineConfig::default());
    for i in 1..=4 {
        m.add_enclave(crate::model::EnclaveId(i));
    }
    let (src, proxy, adv) = (
        crate::model::EnclaveId(1),
        crate::model::EnclaveId(2),
        crate::model::EnclaveId(4),
    );
    let r = m.create(src, 64).unwrap();
    m.change(src, r, Permission::RW).unwrap();
    m.share(src, r, proxy, Permission::RWL).unwrap();
    m.share(src, r, adv, Permission::RWL).unwrap();
    m.change(src, r, Permission::RWL).unwrap(); // source locks
    assert_eq!(
        m.change(adv, r, Permission::RWL),
        Err(crate::model::ElErr::LockHeld)
    );
    m.transfer(src, r, proxy).unwrap(); // atomic handoff
    assert_eq!(
        m.change(adv, r, Permission::RWL),
        Err(crate::model::ElErr::LockHeld)
    );
}

#[test]
fn client_server_costs_and_equivalence() {
    let report = run(&spec(
        Pattern::ClientServer,
        BackendKind::Elasticlave,
        64,
        2,
    ))
    .unwrap();
    assert_eq!(report.counters.instructions, 4); // 2 per round
    let spatial = run(&spec(Pattern::ClientServer, BackendKind::Spatial, 64, 2)).unwrap();
    assert_eq!(spatial.counters.enc_ops, 2 * 64);
    assert_eq!(spatial.counters.dec_ops, 2 * 64);
    assert_eq!(spatial.counters.copies, 2 * 3 * 64);
    assert_eq!(report.checksum, spatial.checksum);
}

#[test]
fn client_server_zero_length_round() {
    let report = run(&spec(Pattern::ClientServer, BackendKind::Elasticlave, 0, 1)).unwrap();
    assert_eq!(report.counters.instructions, 2);
    assert_eq!(report.counters.copies, 0);
    let spatial = run(&spec(Pattern::ClientServer, BackendKind::Spatial, 0, 1)).unwrap();
    assert_eq!(spatial.counters.enc_ops, 0);
    assert_eq!(spatial.counters.copies, 0);
    assert_eq!(report.checksum, spatial.checksum);
}

#[test]
fn spatial_rounds_accumulate_linearly() {
    // Oracle: per-round accumulation.
    let one = run(&spec(Pattern::Proxy, BackendKind::Spatial, 16, 1)).unwrap();
    let three = run(&spec(Pattern::Proxy, BackendKind::Spatial, 16, 3)).unwrap();
    assert_eq!(three.counters.enc_ops, 3 * one.counters.enc_ops);
    assert_eq!(three.counters.dec_ops, 3 * one.counters.dec_ops);
    assert_eq!(three.counters.copies, 3 * one.counters.copies);
    assert_eq!(three.per_round.len(), 3);
    let mut sum = CostCounters::default();
    for r in &three.per_round {
        sum += *r;
    }
    assert_eq!(sum.enc_ops, three.counters.enc_ops);
}

#[test]
fn all_pattern_backends_agree_on_checksum() {
    for pattern in [
        Pattern::ProducerConsumerOneway,
        Pattern::ProducerConsumerTwoway,
        Pattern::Proxy,
        Pattern::ClientServer,
    ] {
        for (l, rounds, seed) in [(1u64, 1u64, 0u64), (16, 3, 7), (33, 2, 99)] {
            let mut sums = Vec::new();
            for backend in BackendKind::all() {
                let mut s = spec(pattern, backend, l, rounds);
                s.seed = seed;
                sums.push(run(&s).unwrap().checksum);
            }
            assert_eq!(sums[0], sums[1], "{pattern} L={l}");
            assert_eq!(sums[0], sums[2], "{pattern} L={l}");
        }
    }
}

#[test]
fn sync_zero_contention_rpc_gap() {
    let mut s = spec(Pattern::Spinlock, BackendKind::Elasticlave, 0, 8);
    s.contention = 0;
    let el = run(&s).unwrap();
    assert_eq!(el.counters.rpc_round_trips, 0);
    assert_eq!(el.counters.instructions, 0);

    let mut s = spec(Pattern::Spinlock, BackendKind::Spatial, 0, 8);
    s.contention = 0;
    let sp = run(&s).unwrap();
    let m = sp.sync.unwrap();
    // Two round trips per completed acquire/release cycle, plus retries.
    assert!(sp.counters.rpc_round_trips >= 2 * m.acquires);
    assert_eq!(m.acquires, 16);
    assert_eq!(el.checksum, sp.checksum);
}

#[test]
fn sync_high_contention_converges() {
    let mut reports = Vec::new();
    for (pattern, backend) in [
        (Pattern::Spinlock, BackendKind::Elasticlave),
        (Pattern::Futex, BackendKind::Elasticlave),
        (Pattern::Spinlock, BackendKind::Spatial),
    ] {
        let mut s = spec(pattern, backend, 0, 10);
        s.contention = 400;
        reports.push(run(&s).unwrap());
    }
    let steps: Vec<u64> = reports.iter().map(|r| r.sync.unwrap().wall_steps).collect();
    let max = *steps.iter().max().unwrap() as f64;
    let min = *steps.iter().min().unwrap() as f64;
    assert!(
        (max - min) / max <= 0.10,
        "wall steps diverge beyond 10%: {steps:?}"
    );
}

#[test]
fn futex_busy_polls_below_spinlock() {
    let mut s = spec(Pattern::Spinlock, BackendKind::Elasticlave, 0, 10);
    s.contention = 50;
    let spin = run(&s).unwrap().sync.unwrap();
    s.pattern = Pattern::Futex;
    let futex = run(&s).unwrap().sync.unwrap();
    assert!(
        futex.busy_polls < spin.busy_polls,
        "futex {} vs spinlock {}",
        futex.busy_polls,
        spin.busy_polls
    );
    assert_eq!(futex.acquires, spin.acquires);
}

#[test]
fn spec_kv_parsing() {
    let text = "\
# proxy sweep point
pattern = proxy
backend = elasticlave_nolock
L = 512
rounds = 5
seed = 42
";
    let s = WorkloadSpec::from_kv_text(text).unwrap();
    assert_eq!(s.pattern, Pattern::Proxy);
    assert_eq!(s.backend, BackendKind::ElasticlaveNolock);
    assert_eq!(s.l_words, 512);
    assert_eq!(s.rounds, 5);
    assert_eq!(s.seed, 42);

    assert!(WorkloadSpec::from_kv_text("pattern = proxy\nbogus = 1").is_err());
    assert!(WorkloadSpec::from_kv_text("L = 4").is_err()); // pattern required
}

#[test]
fn identical_specs_yield_identical_reports() {
    let s = spec(Pattern::Proxy, BackendKind::Elasticlave, 32, 4);
    let a = serde_json::to_string(&run(&s).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&s).unwrap()).unwrap();
    assert_eq!(a, b);
}
