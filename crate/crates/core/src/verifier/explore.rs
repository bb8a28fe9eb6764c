//! Bounded exhaustive interleaving exploration.
//!
//! Depth-first search over all interleavings of honest actor steps and
//! adversary wildcard steps, with a full state snapshot per branch and
//! duplicate-state pruning on a fingerprint of everything a future
//! transition can depend on. Every reached state is checked against the
//! selected invariants; every violation carries a trace that replays
//! deterministically to the violating transition.

use std::collections::HashSet;

use super::checks::{GrantLedger, SerialMonitor};
use super::program::{render_instr, Check, ExplorationConfig, Instr, RegionRef};
use crate::digest::Digest64;
use crate::model::{Access, ElErr, EnclaveId, Machine, Permission, Uid, OS_ID};

/// One replayable trace step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub actor: EnclaveId,
    pub instr: Instr,
    pub result: String,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub check: Check,
    pub detail: String,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct Verdict {
    /// Unique states reached by transitions (the initial state excluded).
    pub states_explored: u64,
    pub transitions: u64,
    /// True when the depth bound cut off unexplored moves.
    pub depth_exceeded: bool,
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Associative, order-independent merge of partial verdicts.
    pub fn merge(&mut self, other: Verdict) {
        self.states_explored += other.states_explored;
        self.transitions += other.transitions;
        self.depth_exceeded |= other.depth_exceeded;
        self.violations.extend(other.violations);
    }
}

#[derive(Debug, Clone)]
pub enum ReplayError {
    Setup(String),
    Divergence {
        step: usize,
        expected: String,
        got: String,
    },
}

impl std::fmt::Display for ReplayError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReplayError::Setup(e) => write!(f, "setup failed: {e}"),
            ReplayError::Divergence {
                step,
                expected,
                got,
            } => write!(
                f,
                "REPLAY_DIVERGENCE at step {step}: expected {expected}, got {got}"
            ),
        }
    }
}

/// Everything that evolves along one exploration path.
#[derive(Clone)]
struct PathState {
    m: Machine,
    bindings: Vec<Option<Uid>>,
    cursors: Vec<usize>,
    aborted: Vec<bool>,
    adv_used: Vec<u32>,
    ledger: GrantLedger,
    serial: Option<SerialMonitor>,
    trace: Vec<TraceEntry>,
}

impl PathState {
    /// Duplicate-state key. Uids are canonicalized by creation order (live
    /// regions relabeled 1..k) and allocation-cursor values are excluded,
    /// so states that differ only in uid churn collapse. Everything a
    /// future transition can observe is included: the canonicalized formal
    /// state, signal queues, masks, free PMP slots, program cursors, abort
    /// flags, adversary budgets, bindings, the grant ledger and the
    /// serialization phase.
    fn fingerprint(&self) -> u64 {
        let state = self.m.state();
        // Live uids ascend in creation order already.
        let rank: std::collections::BTreeMap<Uid, u64> = state
            .regions
            .keys()
            .enumerate()
            .map(|(i, r)| (*r, i as u64 + 1))
            .collect();
        let canon = |u: Uid| rank.get(&u).copied().unwrap_or(0);

        let mut d = Digest64::new();
        d.update_u64(state.enclaves.len() as u64);
        for e in &state.enclaves {
            d.update_u64(e.0 as u64);
        }
        for (r, rec) in &state.regions {
            d.update_u64(canon(*r));
            d.update_u64(rec.owner.0 as u64);
            d.update_u64(rec.size);
            d.update(&state.mem[r]);
        }
        for ((r, p), e) in &state.perms {
            d.update_u64(canon(*r));
            d.update_u64(p.0 as u64);
            d.update(&[e.max.bits(), e.cur.bits()]);
        }
        for (p, v, r) in &state.mappings {
            d.update_u64(p.0 as u64);
            d.update_u64(*v);
            d.update_u64(canon(*r));
        }
        for (p, queue) in &state.pending {
            d.update_u64(p.0 as u64);
            d.update_u64(queue.len() as u64);
            for s in queue {
                d.update(&[s.kind as u8]);
                d.update_u64(canon(s.region));
                d.update_u64(s.actor.0 as u64);
            }
        }
        for (p, kinds) in &state.masks {
            d.update_u64(p.0 as u64);
            for k in kinds {
                d.update(&[*k as u8]);
            }
        }
        d.update_u64(self.m.monitor().free_slots() as u64);
        for b in &self.bindings {
            d.update_u64(b.map(canon).unwrap_or(u64::MAX));
        }
        for c in &self.cursors {
            d.update_u64(*c as u64);
        }
        for a in &self.aborted {
            d.update(&[*a as u8]);
        }
        for u in &self.adv_used {
            d.update_u64(*u as u64);
        }
        self.ledger.fingerprint_canonical(&mut d, &|u| canon(u));
        if let Some(s) = &self.serial {
            d.update(&[s.phase as u8]);
        }
        d.value()
    }
}

/// Result of applying one instruction.
struct StepReport {
    success: bool,
    result: String,
    /// Check failures triggered by this transition.
    violations: Vec<(Check, String)>,
}

fn resolve(bindings: &[Option<Uid>], r: RegionRef) -> Option<Uid> {
    match r {
        RegionRef::Name(i) => bindings.get(i).copied().flatten(),
        RegionRef::Uid(u) => Some(u),
    }
}

fn result_str<T>(res: &Result<T, ElErr>) -> String {
    match res {
        Ok(_) => "SUCCESS".into(),
        Err(e) => e.to_string(),
    }
}

/// Applies one instruction, updating the grant ledger and running the
/// event-based checks (escalation, serialization) plus the state checks.
fn apply_instr(
    ps: &mut PathState,
    cfg: &ExplorationConfig,
    actor: EnclaveId,
    instr: &Instr,
) -> StepReport {
    let pre_fp = ps.m.semantic_fingerprint();
    let mut violations = Vec::new();
    let escalation = |v: Option<String>, out: &mut Vec<(Check, String)>| {
        if let Some(detail) = v {
            if cfg.checks.contains(&Check::BoundedEscalation) {
                out.push((Check::BoundedEscalation, detail));
            }
        }
    };

    let (success, result) = match instr {
        Instr::Create { size, bind } => {
            let res = ps.m.create(actor, *size);
            if let Ok(r) = res {
                ps.bindings[*bind] = Some(r);
                ps.ledger.record_create(r, actor);
            }
            (res.is_ok(), result_str(&res))
        }
        Instr::Map { region, vaddr } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let res = ps.m.map(actor, *vaddr, r);
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Unmap { region, vaddr } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let res = ps.m.unmap(actor, *vaddr, r);
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Share { region, to, max } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let res = ps.m.share(actor, r, *to, *max);
                if res.is_ok() {
                    ps.ledger.record_share(r, *to, *max);
                }
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Change { region, perm } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let had_lock = ps.m.state().cur_perm(r, actor).has_lock();
                let res = ps.m.change(actor, r, *perm);
                if res.is_ok() {
                    escalation(ps.ledger.check_change(r, actor, *perm), &mut violations);
                    if let Some(serial) = &mut ps.serial {
                        let watched = resolve(&ps.bindings, RegionRef::Name(serial.spec.region));
                        serial.on_change(r, actor, had_lock, *perm, watched);
                    }
                }
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Destroy { region } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let res = ps.m.destroy(actor, r);
                if res.is_ok() {
                    ps.ledger.record_destroy(r);
                }
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Transfer { region, to } => match resolve(&ps.bindings, *region) {
            Some(r) => {
                let res = ps.m.transfer(actor, r, *to);
                if res.is_ok() {
                    escalation(
                        ps.ledger.check_change(r, *to, Permission::L),
                        &mut violations,
                    );
                }
                (res.is_ok(), result_str(&res))
            }
            None => (false, "UNBOUND".into()),
        },
        Instr::Read { region } | Instr::Write { region, .. } => {
            let access = match instr {
                Instr::Write { byte, .. } => Access::Write(*byte),
                _ => Access::Read,
            };
            match resolve(&ps.bindings, *region) {
                Some(r) => {
                    let mapping =
                        ps.m.state()
                            .mappings
                            .iter()
                            .find(|(p, _, g)| *p == actor && *g == r)
                            .map(|(_, v, _)| *v);
                    let size = ps.m.state().size(r).unwrap_or(0);
                    match mapping {
                        Some(base) => {
                            let mut res: Result<(), ElErr> = Ok(());
                            for i in 0..size {
                                if let Err(e) = ps.m.mem_access(actor, base + i, access) {
                                    res = Err(e);
                                    break;
                                }
                            }
                            if res.is_ok() {
                                escalation(
                                    ps.ledger.check_access(r, actor, access),
                                    &mut violations,
                                );
                                if let Some(serial) = &mut ps.serial {
                                    let watched =
                                        resolve(&ps.bindings, RegionRef::Name(serial.spec.region));
                                    if let Some(detail) =
                                        serial.on_access(&ps.m, r, actor, access, watched)
                                    {
                                        if cfg.checks.contains(&Check::Serialization) {
                                            violations.push((Check::Serialization, detail));
                                        }
                                    }
                                }
                            }
                            (res.is_ok(), result_str(&res))
                        }
                        None => (false, ElErr::Fault.to_string()),
                    }
                }
                None => (false, "UNBOUND".into()),
            }
        }
        Instr::Poll => {
            ps.m.poll_signals(actor);
            (true, "SUCCESS".into())
        }
        Instr::Mask { kinds } => {
            ps.m.mask_signals(actor, kinds.clone());
            (true, "SUCCESS".into())
        }
    };

    // State checks after the transition.
    if cfg.checks.contains(&Check::Atomicity) && !success {
        let post_fp = ps.m.semantic_fingerprint();
        if post_fp != pre_fp {
            violations.push((
                Check::Atomicity,
                format!(
                    "failed {} mutated the state",
                    render_instr(instr, &cfg.names)
                ),
            ));
        }
    }
    if cfg.checks.contains(&Check::LockExclusivity) {
        for r in ps.m.state().regions.keys() {
            let holders: Vec<EnclaveId> =
                ps.m.state()
                    .perms
                    .iter()
                    .filter(|((g, _), e)| g == r && e.cur.has_lock())
                    .map(|((_, p), _)| *p)
                    .collect();
            if holders.len() > 1 {
                violations.push((
                    Check::LockExclusivity,
                    format!("region {r} has {} lock holders: {holders:?}", holders.len()),
                ));
            }
        }
    }
    if cfg.checks.contains(&Check::StateWellformed) {
        for detail in ps.m.state().audit() {
            violations.push((Check::StateWellformed, detail));
        }
    }
    if cfg.checks.contains(&Check::MaxImmutable) {
        if let Some(detail) = ps.ledger.check_max_immutable(&ps.m) {
            violations.push((Check::MaxImmutable, detail));
        }
    }

    StepReport {
        success,
        result,
        violations,
    }
}

/// The wildcard instruction alphabet for an adversary: every type-correct
/// instruction over handles it legitimately knows (uids are public, other
/// principal ids are public, virtual addresses are its own).
fn adversary_moves(ps: &PathState, cfg: &ExplorationConfig, adv: EnclaveId) -> Vec<Instr> {
    const MAP_PALETTE: [u64; 2] = [0x7000_0000, 0x7100_0000];
    let mut moves = Vec::new();
    let state = ps.m.state();
    let mut principals: Vec<EnclaveId> = vec![OS_ID];
    principals.extend(cfg.enclaves.iter().copied());

    for r in state.regions.keys().copied() {
        for perm in Permission::all() {
            moves.push(Instr::Change {
                region: r.into(),
                perm,
            });
        }
        moves.push(Instr::Destroy { region: r.into() });
        for o in principals.iter().copied().filter(|o| *o != adv) {
            moves.push(Instr::Transfer {
                region: r.into(),
                to: o,
            });
            moves.push(Instr::Share {
                region: r.into(),
                to: o,
                max: Permission::RWL,
            });
        }
        for vaddr in MAP_PALETTE {
            moves.push(Instr::Map {
                region: r.into(),
                vaddr,
            });
        }
        let own_mappings: Vec<u64> = state
            .mappings
            .iter()
            .filter(|(p, _, g)| *p == adv && *g == r)
            .map(|(_, v, _)| *v)
            .collect();
        for vaddr in own_mappings {
            moves.push(Instr::Unmap {
                region: r.into(),
                vaddr,
            });
        }
        moves.push(Instr::Read { region: r.into() });
        moves.push(Instr::Write {
            region: r.into(),
            byte: 0xee,
        });
    }
    moves.push(Instr::Create {
        size: 16,
        bind: usize::MAX, // adversary-created regions stay anonymous
    });
    moves.push(Instr::Poll);
    moves
}

/// All enabled moves at a node, in a fixed deterministic order.
fn enabled_moves(ps: &PathState, cfg: &ExplorationConfig) -> Vec<(usize, Instr)> {
    let mut moves = Vec::new();
    for (i, prog) in cfg.actors.iter().enumerate() {
        if !ps.aborted[i] && ps.cursors[i] < prog.steps.len() {
            moves.push((i, prog.steps[ps.cursors[i]].clone()));
        }
    }
    for (j, (adv, budget)) in cfg.adversaries.iter().enumerate() {
        if ps.adv_used[j] < *budget {
            for instr in adversary_moves(ps, cfg, *adv) {
                moves.push((cfg.actors.len() + j, instr));
            }
        }
    }
    moves
}

fn initial_state(cfg: &ExplorationConfig) -> Result<PathState, String> {
    let mut m = Machine::new(cfg.machine.clone());
    for e in &cfg.enclaves {
        m.add_enclave(*e);
    }
    let mut ps = PathState {
        m,
        bindings: vec![None; cfg.names.len()],
        cursors: vec![0; cfg.actors.len()],
        aborted: vec![false; cfg.actors.len()],
        adv_used: vec![0; cfg.adversaries.len()],
        ledger: GrantLedger::default(),
        serial: cfg.serialization.clone().map(SerialMonitor::new),
        trace: Vec::new(),
    };
    for (actor, instr) in &cfg.setup {
        let report = apply_instr(&mut ps, cfg, *actor, instr);
        if !report.success {
            return Err(format!(
                "setup step `{} {}` failed: {}",
                actor,
                render_instr(instr, &cfg.names),
                report.result
            ));
        }
    }
    ps.trace.clear();
    Ok(ps)
}

/// Applies one move to a cloned path, recording trace, cursor movement and
/// violations. Honest actors abort on their first failed instruction.
fn advance(
    ps: &PathState,
    cfg: &ExplorationConfig,
    actor_idx: usize,
    instr: &Instr,
) -> (PathState, Vec<Violation>) {
    let mut next = ps.clone();
    let actor = if actor_idx < cfg.actors.len() {
        cfg.actors[actor_idx].actor
    } else {
        cfg.adversaries[actor_idx - cfg.actors.len()].0
    };
    // Anonymous adversary create binds nothing.
    let instr_fixed = match instr {
        Instr::Create { size, bind } if *bind == usize::MAX => {
            next.bindings.push(None);
            Instr::Create {
                size: *size,
                bind: next.bindings.len() - 1,
            }
        }
        other => other.clone(),
    };
    let report = apply_instr(&mut next, cfg, actor, &instr_fixed);
    next.trace.push(TraceEntry {
        actor,
        instr: instr.clone(),
        result: report.result.clone(),
    });
    if actor_idx < cfg.actors.len() {
        next.cursors[actor_idx] += 1;
        if !report.success {
            next.aborted[actor_idx] = true;
        }
    } else {
        next.adv_used[actor_idx - cfg.actors.len()] += 1;
    }
    let violations = report
        .violations
        .into_iter()
        .map(|(check, detail)| Violation {
            check,
            detail,
            trace: next.trace.clone(),
        })
        .collect();
    (next, violations)
}

fn dfs(root: PathState, cfg: &ExplorationConfig, seen: &mut HashSet<u64>, verdict: &mut Verdict) {
    let mut stack: Vec<(PathState, usize)> = vec![(root, 0)];
    while let Some((ps, depth)) = stack.pop() {
        let moves = enabled_moves(&ps, cfg);
        if moves.is_empty() {
            continue;
        }
        if depth >= cfg.max_depth {
            verdict.depth_exceeded = true;
            continue;
        }
        for (actor_idx, instr) in moves {
            let (next, violations) = advance(&ps, cfg, actor_idx, &instr);
            verdict.transitions += 1;
            for v in violations {
                if verdict.violations.len() < cfg.max_violations {
                    verdict.violations.push(v);
                }
            }
            let fp = next.fingerprint();
            if seen.insert(fp) {
                verdict.states_explored += 1;
                stack.push((next, depth + 1));
            }
        }
    }
}

/// Explores all interleavings of the configured programs within the depth
/// bound and evaluates every selected check in every reached state.
pub fn explore(cfg: &ExplorationConfig) -> Result<Verdict, String> {
    explore_jobs(cfg, 1)
}

/// Fan-out variant: first-level branches are split across `jobs` workers,
/// each exploring its share on an independent snapshot. The merge is
/// associative; workers keep independent seen-sets, so states on worker
/// boundaries may be counted more than once.
pub fn explore_jobs(cfg: &ExplorationConfig, jobs: usize) -> Result<Verdict, String> {
    let root = initial_state(cfg)?;
    let mut verdict = Verdict::default();
    let root_fp = root.fingerprint();

    if jobs <= 1 {
        let mut seen = HashSet::from([root_fp]);
        dfs(root, cfg, &mut seen, &mut verdict);
        verdict.violations.truncate(cfg.max_violations);
        return Ok(verdict);
    }

    let moves = enabled_moves(&root, cfg);
    if moves.is_empty() {
        return Ok(verdict);
    }
    if cfg.max_depth == 0 {
        verdict.depth_exceeded = true;
        return Ok(verdict);
    }

    // Expand the first level here, then split.
    let mut branches = Vec::new();
    let mut seen_roots = HashSet::from([root_fp]);
    for (actor_idx, instr) in moves {
        let (next, violations) = advance(&root, cfg, actor_idx, &instr);
        verdict.transitions += 1;
        verdict.violations.extend(violations);
        let fp = next.fingerprint();
        if seen_roots.insert(fp) {
            verdict.states_explored += 1;
            branches.push(next);
        }
    }

    let chunks: Vec<Vec<PathState>> = {
        let mut cs: Vec<Vec<PathState>> = (0..jobs).map(|_| Vec::new()).collect();
        for (i, b) in branches.into_iter().enumerate() {
            cs[i % jobs].push(b);
        }
        cs
    };
    let partials: Vec<Verdict> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                scope.spawn(move || {
                    let mut v = Verdict::default();
                    let mut seen = HashSet::new();
                    for ps in chunk {
                        seen.insert(ps.fingerprint());
                        dfs(ps, cfg, &mut seen, &mut v);
                    }
                    v
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for p in partials {
        verdict.merge(p);
    }
    // Deterministic violation order regardless of worker scheduling.
    verdict
        .violations
        .sort_by(|a, b| (a.trace.len(), &a.detail).cmp(&(b.trace.len(), &b.detail)));
    verdict.violations.truncate(cfg.max_violations);
    Ok(verdict)
}

/// Deterministically re-executes a trace against a fresh machine; every
/// step must reproduce its recorded result.
pub fn replay(cfg: &ExplorationConfig, trace: &[TraceEntry]) -> Result<Machine, ReplayError> {
    let mut ps = initial_state(cfg).map_err(ReplayError::Setup)?;
    for (i, entry) in trace.iter().enumerate() {
        let instr_fixed = match &entry.instr {
            Instr::Create { size, bind } if *bind == usize::MAX => {
                ps.bindings.push(None);
                Instr::Create {
                    size: *size,
                    bind: ps.bindings.len() - 1,
                }
            }
            other => other.clone(),
        };
        let report = apply_instr(&mut ps, cfg, entry.actor, &instr_fixed);
        if report.result != entry.result {
            return Err(ReplayError::Divergence {
                step: i,
                expected: entry.result.clone(),
                got: report.result,
            });
        }
    }
    Ok(ps.m)
}

/// Renders a violation trace in the transition-log field order:
/// step, caller, instruction, arguments, result, signals.
pub fn render_trace(cfg: &ExplorationConfig, trace: &[TraceEntry]) -> String {
    let mut out = String::new();
    for (i, entry) in trace.iter().enumerate() {
        let rendered = render_instr(&entry.instr, &cfg.names);
        let (name, args) = rendered.split_once(' ').unwrap_or((rendered.as_str(), ""));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t-\n",
            i + 1,
            entry.actor,
            name,
            args.replace(' ', ","),
            entry.result
        ));
    }
    out
}
