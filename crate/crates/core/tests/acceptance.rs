//! Acceptance suite: the six exit criteria, one test per criterion, each
//! printing a single pass/fail line (visible with `--nocapture`). Every
//! tolerance is exact and every runtime bound is asserted.

use std::panic::{catch_unwind, UnwindSafe};
use std::time::{Duration, Instant};

use elclave_core::model::{
    Access, ElErr, EnclaveId, Machine, MachineConfig, Permission, Uid, OS_ID,
};
use elclave_core::verifier::{self, suites, Check};
use elclave_core::workloads::{self, BackendKind, Pattern, WorkloadSpec};

const E1: EnclaveId = EnclaveId(1);
const E2: EnclaveId = EnclaveId(2);
const E3: EnclaveId = EnclaveId(3);

fn criterion<F: FnOnce() + UnwindSafe>(number: u32, name: &str, budget: Duration, body: F) {
    let started = Instant::now();
    let outcome = catch_unwind(body);
    let elapsed = started.elapsed();
    let status = match (&outcome, elapsed <= budget) {
        (Ok(()), true) => "PASS",
        _ => "FAIL",
    };
    println!(
        "acceptance criterion {number} ({name}): {status} [{elapsed:.2?} of {budget:.2?} budget]"
    );
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
    assert!(
        elapsed <= budget,
        "criterion {number} exceeded its runtime budget: {elapsed:?} > {budget:?}"
    );
}

fn run_spec(pattern: Pattern, backend: BackendKind, l: u64, rounds: u64) -> workloads::RunReport {
    let mut spec = WorkloadSpec::new(pattern, backend);
    spec.l_words = l;
    spec.rounds = rounds;
    workloads::run(&spec).unwrap_or_else(|e| panic!("{pattern} on {backend}: {e}"))
}

#[test]
fn criterion_1_table1_exactness() {
    criterion(
        1,
        "data-sharing cost table exactness",
        Duration::from_secs(5),
        || {
            let cases = [
                (Pattern::ProducerConsumerTwoway, 1u64, 1u64, 3u64, 2u64),
                (Pattern::Proxy, 2, 2, 6, 4),
                (Pattern::ClientServer, 1, 1, 3, 2),
            ];
            for rounds in [1u64, 5] {
                for l in [1u64, 16, 512, 4096] {
                    for (pattern, enc_k, dec_k, cpy_k, instrs) in cases {
                        let spatial = run_spec(pattern, BackendKind::Spatial, l, rounds);
                        assert_eq!(spatial.per_round.len() as u64, rounds);
                        for (i, round) in spatial.per_round.iter().enumerate() {
                            assert_eq!(round.enc_ops, enc_k * l, "{pattern} L={l} round {i} enc");
                            assert_eq!(round.dec_ops, dec_k * l, "{pattern} L={l} round {i} dec");
                            assert_eq!(round.copies, cpy_k * l, "{pattern} L={l} round {i} cpy");
                            assert_eq!(round.instructions, 0, "{pattern} spatial instructions");
                        }
                        assert_eq!(spatial.counters.enc_ops, enc_k * l * rounds);
                        assert_eq!(spatial.counters.dec_ops, dec_k * l * rounds);
                        assert_eq!(spatial.counters.copies, cpy_k * l * rounds);

                        let relaxed = run_spec(pattern, BackendKind::Elasticlave, l, rounds);
                        for (i, round) in relaxed.per_round.iter().enumerate() {
                            assert_eq!(round.instructions, instrs, "{pattern} L={l} round {i}");
                        }
                        assert_eq!(relaxed.counters.instructions, instrs * rounds);
                        assert_eq!(relaxed.counters.enc_ops, 0);
                        assert_eq!(relaxed.counters.dec_ops, 0);
                    }
                }
                // Instruction counts are invariant in L.
                for (pattern, _, _, _, instrs) in cases {
                    let counts: Vec<u64> = [1u64, 16, 512, 4096]
                        .iter()
                        .map(|l| {
                            run_spec(pattern, BackendKind::Elasticlave, *l, rounds)
                                .counters
                                .instructions
                        })
                        .collect();
                    assert!(
                        counts.iter().all(|c| *c == instrs * rounds),
                        "{pattern}: instruction counts vary with L: {counts:?}"
                    );
                }
            }
        },
    );
}

#[test]
fn criterion_2_zero_copy() {
    criterion(
        2,
        "zero-copy vs copy growth",
        Duration::from_secs(5),
        || {
            let sweep = [1u64, 16, 512, 4096];
            for pattern in [
                Pattern::ProducerConsumerTwoway,
                Pattern::Proxy,
                Pattern::ClientServer,
            ] {
                let mut nolock_last = None;
                for l in sweep {
                    let full = run_spec(pattern, BackendKind::Elasticlave, l, 1);
                    assert_eq!(
                        full.counters.copies, 0,
                        "{pattern} L={l}: full backend must not copy payload"
                    );
                    let nolock = run_spec(pattern, BackendKind::ElasticlaveNolock, l, 1);
                    if let Some(last) = nolock_last {
                        assert!(
                            nolock.counters.copies > last,
                            "{pattern}: nolock copies must strictly increase across the L sweep \
                         ({last} !< {})",
                            nolock.counters.copies
                        );
                    }
                    nolock_last = Some(nolock.counters.copies);
                }
            }
        },
    );
}

#[test]
fn criterion_3_exhaustive_security_properties() {
    criterion(
        3,
        "exhaustive security properties",
        Duration::from_secs(60),
        || {
            let escalation = verifier::explore(&suites::escalation_config()).unwrap();
            assert!(
                escalation.passed(),
                "bounded-escalation violations: {:?}",
                escalation
                    .violations
                    .iter()
                    .map(|v| (&v.check, &v.detail))
                    .collect::<Vec<_>>()
            );
            assert!(!escalation.depth_exceeded);

            let proxy_cfg = suites::proxy_serialization_config();
            assert!(proxy_cfg.adversaries.iter().all(|(_, b)| *b <= 4));
            assert!(proxy_cfg.max_depth <= 14);
            assert!(proxy_cfg.checks.contains(&Check::BoundedEscalation));
            assert!(proxy_cfg.checks.contains(&Check::LockExclusivity));
            assert!(proxy_cfg.checks.contains(&Check::StateWellformed)); // cur ≤ max
            assert!(proxy_cfg.checks.contains(&Check::Serialization));
            let proxy = verifier::explore(&proxy_cfg).unwrap();
            assert!(
                proxy.passed(),
                "proxy violations: {:?}",
                proxy
                    .violations
                    .iter()
                    .map(|v| (&v.check, &v.detail))
                    .collect::<Vec<_>>()
            );
            assert!(!proxy.depth_exceeded);

            let states = escalation.states_explored + proxy.states_explored;
            assert!(
                states >= 10_000,
                "exploration too small: {states} states < 10^4"
            );

            // Mutation smoke test: removing the change-instruction lock check
            // must surface at least one violation.
            let mut mutated_cfg = suites::proxy_serialization_config();
            mutated_cfg.machine.skip_change_lock_check = true;
            let mutated = verifier::explore(&mutated_cfg).unwrap();
            assert!(
                !mutated.violations.is_empty(),
                "mutated build must violate lock exclusivity"
            );
            assert!(mutated
                .violations
                .iter()
                .any(|v| v.check == Check::LockExclusivity));
            // Violation traces replay deterministically to the violation.
            let witness = mutated
                .violations
                .iter()
                .find(|v| v.check == Check::LockExclusivity)
                .unwrap();
            verifier::replay(&mutated_cfg, &witness.trace).unwrap();
        },
    );
}

#[test]
fn criterion_4_spatial_emulation_equivalence() {
    criterion(
        4,
        "spatial-emulation equivalence",
        Duration::from_secs(30),
        || {
            let report = verifier::check_spatial_emulation(100, 200, 0);
            assert_eq!(report.programs, 100);
            assert_eq!(report.steps_per_program, 200);
            assert!(
                report.passed(),
                "observable mismatches: {:?}",
                report.mismatches
            );
        },
    );
}

// ---- criterion 5: formal-semantics conformance -----------------------------

/// One pre-condition clause of a formalized instruction, with one case
/// satisfying it (asserting the full transition) and one violating it
/// (asserting the error and that the state is untouched).
struct Clause {
    instr: &'static str,
    clause: &'static str,
    satisfying: fn(),
    violating: fn(),
}

fn machine(enclaves: u32) -> Machine {
    let mut m = Machine::new(MachineConfig::default());
    for i in 1..=enclaves {
        m.add_enclave(EnclaveId(i));
    }
    m
}

fn assert_noop<T: std::fmt::Debug + PartialEq>(
    m: &mut Machine,
    expected: ElErr,
    op: impl FnOnce(&mut Machine) -> Result<T, ElErr>,
) {
    let before = m.semantic_fingerprint();
    let got = op(m);
    assert_eq!(got, Err(expected));
    assert_eq!(
        m.semantic_fingerprint(),
        before,
        "failed instruction must be a no-op"
    );
}

fn shared_pair(max: Permission) -> (Machine, Uid) {
    let mut m = machine(3);
    let r = m.create(E1, 16).unwrap();
    m.change(E1, r, Permission::RW).unwrap();
    m.share(E1, r, E2, max).unwrap();
    (m, r)
}

const CLAUSES: &[Clause] = &[
    Clause {
        instr: "create",
        clause: "caller is a live principal",
        satisfying: || {
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            assert_eq!(r, Uid(1));
            let rec = m.state().regions[&r];
            assert_eq!((rec.owner, rec.size), (E1, 16));
            let e = m.state().perm_entry(r, E1).unwrap();
            assert_eq!((e.max, e.cur), (Permission::RWXL, Permission::RWXL));
            assert_eq!(m.state().mem[&r], vec![0u8; 16]);
        },
        violating: || {
            let mut m = machine(1);
            assert_noop(&mut m, ElErr::NoEnclave, |m| m.create(EnclaveId(9), 16));
        },
    },
    Clause {
        instr: "create",
        clause: "a fresh region slot exists (finite analogue of the fresh-uid clause)",
        satisfying: || {
            // Uids stay fresh across destroy: never reused.
            let mut m = machine(1);
            let a = m.create(E1, 16).unwrap();
            m.destroy(E1, a).unwrap();
            let b = m.create(E1, 16).unwrap();
            assert!(b > a);
        },
        violating: || {
            let mut m = machine(1);
            for _ in 0..15 {
                m.create(E1, 16).unwrap();
            }
            assert_noop(&mut m, ElErr::PmpExhausted, |m| m.create(E1, 16));
        },
    },
    Clause {
        instr: "map",
        clause: "(r, p) is in the permission matrix",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            assert!(m.state().mappings.contains(&(E2, 0x1000, r)));
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::R);
            assert_noop(&mut m, ElErr::NotAccessor, |m| m.map(E3, 0x1000, r));
        },
    },
    Clause {
        instr: "map",
        clause: "the new range intersects none of the caller's mappings",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            m.map(E2, 0x1000 + 16, r).unwrap(); // adjacent is disjoint
            assert_eq!(m.state().mappings.len(), 2);
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            assert_noop(&mut m, ElErr::Overlap, |m| m.map(E2, 0x1000 + 15, r));
        },
    },
    Clause {
        instr: "unmap",
        clause: "(p, v, r) is in the mapping set",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            let perms_before = *m.state().perm_entry(r, E2).unwrap();
            m.unmap(E2, 0x1000, r).unwrap();
            assert!(!m.state().mappings.contains(&(E2, 0x1000, r)));
            assert_eq!(*m.state().perm_entry(r, E2).unwrap(), perms_before);
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::R);
            assert_noop(&mut m, ElErr::NotMapped, |m| m.unmap(E2, 0x1000, r));
        },
    },
    Clause {
        instr: "share",
        clause: "the grantee is a live principal",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::RWL).unwrap();
            let e = m.state().perm_entry(r, E2).unwrap();
            assert_eq!((e.max, e.cur), (Permission::RWL, Permission::EMPTY));
        },
        violating: || {
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            assert_noop(&mut m, ElErr::NoEnclave, |m| {
                m.share(E1, r, EnclaveId(9), Permission::R)
            });
        },
    },
    Clause {
        instr: "share",
        clause: "the grantee differs from the caller",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::R).unwrap();
        },
        violating: || {
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            assert_noop(&mut m, ElErr::AlreadyShared, |m| {
                m.share(E1, r, E1, Permission::R)
            });
        },
    },
    Clause {
        instr: "share",
        clause: "the caller owns the region",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::R).unwrap();
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            assert_noop(&mut m, ElErr::NotOwner, |m| {
                m.share(E2, r, E3, Permission::R)
            });
        },
    },
    Clause {
        instr: "share",
        clause: "the grantee has no existing entry",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::R).unwrap();
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            assert_noop(&mut m, ElErr::AlreadyShared, |m| {
                m.share(E1, r, E2, Permission::R)
            });
        },
    },
    Clause {
        instr: "change",
        clause: "(r, p) is in the permission matrix",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            m.change(E2, r, Permission::RW).unwrap();
            let e = m.state().perm_entry(r, E2).unwrap();
            assert_eq!((e.max, e.cur), (Permission::RWL, Permission::RW));
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            assert_noop(&mut m, ElErr::NotAccessor, |m| {
                m.change(E3, r, Permission::R)
            });
        },
    },
    Clause {
        instr: "change",
        clause: "the requested permission is below the static maximum",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            // Exact assignment, not a union or intersection.
            m.change(E2, r, Permission::W).unwrap();
            assert_eq!(m.state().cur_perm(r, E2), Permission::W);
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            assert_noop(&mut m, ElErr::ExceedsMax, |m| {
                m.change(E2, r, Permission::RWX)
            });
        },
    },
    Clause {
        instr: "change",
        clause: "acquiring the lock requires that no other accessor holds it",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            m.change(E2, r, Permission::RWL).unwrap();
            assert_eq!(m.state().lock_holder(r), Some(E2));
        },
        violating: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap(); // owner holds the lock
            m.share(E1, r, E2, Permission::RWL).unwrap();
            assert_noop(&mut m, ElErr::LockHeld, |m| {
                m.change(E2, r, Permission::RWL)
            });
        },
    },
    Clause {
        instr: "destroy",
        clause: "the caller owns the region (or is the reclaiming OS)",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            m.map(E2, 0x1000, r).unwrap();
            m.destroy(E1, r).unwrap();
            assert!(!m.state().regions.contains_key(&r));
            assert!(!m.state().mem.contains_key(&r));
            assert!(m.state().perms.keys().all(|(g, _)| *g != r));
            assert!(m.state().mappings.iter().all(|(_, _, g)| *g != r));
            // OS reclaim path.
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            m.destroy(OS_ID, r).unwrap();
            assert!(m.state().regions.is_empty());
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL);
            assert_noop(&mut m, ElErr::NotOwner, |m| m.destroy(E2, r));
            assert_noop(&mut m, ElErr::NoRegion, |m| m.destroy(E1, Uid(99)));
        },
    },
    Clause {
        instr: "transfer",
        clause: "caller and target both have matrix entries",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap(); // owner holds the lock
            m.share(E1, r, E2, Permission::RWL).unwrap();
            m.transfer(E1, r, E2).unwrap();
            assert_eq!(m.state().lock_holder(r), Some(E2));
        },
        violating: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            assert_noop(&mut m, ElErr::NotAccessor, |m| m.transfer(E1, r, E2));
        },
    },
    Clause {
        instr: "transfer",
        clause: "the caller currently holds the lock bit",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::RWL).unwrap();
            let max_before = m.state().perm_entry(r, E1).unwrap().max;
            m.transfer(E1, r, E2).unwrap();
            // Atomic handoff: exactly one holder, maxima untouched.
            assert!(!m.state().cur_perm(r, E1).has_lock());
            assert!(m.state().cur_perm(r, E2).has_lock());
            assert_eq!(m.state().perm_entry(r, E1).unwrap().max, max_before);
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::RWL); // E1 released at setup
            assert_noop(&mut m, ElErr::LockHeld, |m| m.transfer(E1, r, E2));
        },
    },
    Clause {
        instr: "transfer",
        clause: "the target's static maximum includes the lock bit",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap();
            m.share(E1, r, E2, Permission::RWL).unwrap();
            m.transfer(E1, r, E2).unwrap();
        },
        violating: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap(); // owner holds the lock
            m.share(E1, r, E2, Permission::RW).unwrap();
            assert_noop(&mut m, ElErr::ExceedsMax, |m| m.transfer(E1, r, E2));
        },
    },
    Clause {
        instr: "read",
        clause: "a mapping of the caller covers the address",
        satisfying: || {
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            m.map(E1, 0x1000, r).unwrap();
            m.mem_access(E1, 0x1000 + 3, Access::Write(0xab)).unwrap();
            assert_eq!(
                m.mem_access(E1, 0x1000 + 3, Access::Read).unwrap(),
                Some(0xab)
            );
        },
        violating: || {
            let mut m = machine(1);
            let r = m.create(E1, 16).unwrap();
            m.map(E1, 0x1000, r).unwrap();
            assert_noop(&mut m, ElErr::Fault, |m| {
                m.mem_access(E1, 0x1000 + 16, Access::Read) // one past the end
            });
        },
    },
    Clause {
        instr: "read",
        clause: "the read bit is set in the caller's dynamic permission",
        satisfying: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            m.change(E2, r, Permission::R).unwrap();
            assert_eq!(m.mem_access(E2, 0x1000, Access::Read).unwrap(), Some(0));
        },
        violating: || {
            let (mut m, r) = shared_pair(Permission::R);
            m.map(E2, 0x1000, r).unwrap();
            // Dynamic permission still empty: share grants max only.
            assert_noop(&mut m, ElErr::Fault, |m| {
                m.mem_access(E2, 0x1000, Access::Read)
            });
        },
    },
    Clause {
        instr: "read",
        clause: "the caller holds the lock or nobody does",
        satisfying: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap(); // E1 holds the lock
            m.map(E1, 0x1000, r).unwrap();
            assert_eq!(m.mem_access(E1, 0x1000, Access::Read).unwrap(), Some(0));
        },
        violating: || {
            let mut m = machine(2);
            let r = m.create(E1, 16).unwrap(); // E1 holds the lock
            m.share(E1, r, E2, Permission::RW).unwrap();
            m.map(E2, 0x2000, r).unwrap();
            m.change(E2, r, Permission::RW).unwrap();
            assert_noop(&mut m, ElErr::Fault, |m| {
                m.mem_access(E2, 0x2000, Access::Read)
            });
        },
    },
];

#[test]
fn criterion_5_formal_conformance() {
    criterion(
        5,
        "formal-semantics conformance",
        Duration::from_secs(1),
        || {
            let mut instrs: Vec<&str> = CLAUSES.iter().map(|c| c.instr).collect();
            instrs.dedup();
            assert_eq!(
                instrs,
                ["create", "map", "unmap", "share", "change", "destroy", "transfer", "read"],
                "all eight formalized instructions are covered"
            );
            for case in CLAUSES {
                let label = format!("{} / {}", case.instr, case.clause);
                catch_unwind(case.satisfying)
                    .unwrap_or_else(|_| panic!("satisfying case failed: {label}"));
                catch_unwind(case.violating)
                    .unwrap_or_else(|_| panic!("violating case failed: {label}"));
            }
            println!("  {} pre-condition clauses covered", CLAUSES.len());
        },
    );
}

#[test]
fn criterion_6_context_switch_linearity() {
    criterion(
        6,
        "context-switch linearity",
        Duration::from_secs(1),
        || {
            let mut m = machine(2);
            for k in 0..=15u64 {
                // Oracle: recount the incoming principal's view from the matrix.
                let visible = m.state().visible_regions(E1).len() as u64;
                assert_eq!(visible, k);
                m.switch_to(OS_ID);
                let writes = m.switch_to(E1);
                assert_eq!(writes, k, "PMP writes must equal visible regions");
                // OS sees nothing unshared.
                m.switch_to(E2);
                assert_eq!(m.switch_to(OS_ID), 0);
                if k < 15 {
                    m.create(E1, 16).unwrap();
                }
            }
            // The 16-entry budget with 1 reserved entry rejects a 16th region.
            assert_eq!(m.state().regions.len(), 15);
            assert_eq!(m.create(E1, 16), Err(ElErr::PmpExhausted));

            // Regions shared with the OS stay in its view across switches.
            let mut m = machine(1);
            let r = m.create(E1, 64).unwrap();
            m.change(E1, r, Permission::RW).unwrap();
            m.share(E1, r, OS_ID, Permission::R).unwrap();
            m.map(OS_ID, 0x9000, r).unwrap();
            m.change(OS_ID, r, Permission::R).unwrap();
            m.switch_to(E1);
            assert_eq!(m.switch_to(OS_ID), 1);
            assert_eq!(m.mem_access(OS_ID, 0x9000, Access::Read).unwrap(), Some(0));
        },
    );
}
