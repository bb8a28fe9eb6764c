//! The deterministic instruction-level state machine.
//!
//! Every instruction validates its pre-conditions first and only then
//! commits the transition, so any non-success return leaves the system
//! state untouched. Memory accesses are evaluated twice on every call:
//! once against the formal state (mapping, dynamic permission, lock rule)
//! and once against the monitor's synthesized PMP view; the two must agree.
//!
//! Callers serialize all invocations; the machine is never entered
//! reentrantly. Apparent concurrency is an explicit interleaving of
//! instruction invocations chosen by a scheduler.

use std::collections::BTreeSet;

use super::perm::Permission;
use super::state::{PermEntry, RegionRecord, SystemState};
use super::types::{Access, ElErr, EnclaveId, Signal, SignalKind, Uid, OS_ID};
use crate::digest::Digest64;
use crate::monitor::Monitor;
use crate::trace::TraceRecord;

/// Knobs fixed at machine construction.
#[derive(Debug, Clone)]
pub struct MachineConfig {
    /// Total PMP entries, including the reserved ones.
    pub pmp_total: usize,
    /// Entries permanently reserved for monitor metadata.
    pub reserved_entries: usize,
    /// Require the transfer target to have the region mapped (the stricter
    /// reading of the handoff rule; the default follows the formal
    /// pre-conditions, which only require an accessor entry).
    pub strict_transfer_map: bool,
    /// Fault injection: skip the lock-exclusivity pre-condition of `change`.
    /// Exists so the verifier's violation detection can be smoke-tested
    /// against a known-broken build. Never enable outside tests.
    pub skip_change_lock_check: bool,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            pmp_total: 16,
            reserved_entries: 1,
            strict_transfer_map: false,
            skip_change_lock_check: false,
        }
    }
}

/// Per-instruction invocation counts (attempts, successful or not).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstrCounts {
    pub create: u64,
    pub map: u64,
    pub unmap: u64,
    pub share: u64,
    pub change: u64,
    pub destroy: u64,
    pub transfer: u64,
    pub mem_access: u64,
    pub poll_signals: u64,
    pub mask_signals: u64,
}

impl InstrCounts {
    /// The steady-state security-instruction metric: permission changes and
    /// lock transfers. Setup instructions (create/share/map) are excluded by
    /// construction of the metric, not by special-casing here.
    pub fn lock_protocol_instrs(&self) -> u64 {
        self.change + self.transfer
    }
}

#[derive(Debug, Clone)]
pub struct Machine {
    state: SystemState,
    monitor: Monitor,
    config: MachineConfig,
    next_uid: u64,
    current: Option<EnclaveId>,
    step: u64,
    counts: InstrCounts,
    trace: Option<Vec<TraceRecord>>,
    /// Signals queued by the instruction currently executing, for the trace.
    emitted: Vec<(EnclaveId, Signal)>,
}

impl Machine {
    pub fn new(config: MachineConfig) -> Self {
        let monitor = Monitor::new(config.pmp_total, config.reserved_entries);
        Machine {
            state: SystemState::default(),
            monitor,
            config,
            next_uid: 1,
            current: None,
            step: 0,
            counts: InstrCounts::default(),
            trace: None,
            emitted: Vec::new(),
        }
    }

    /// Registers a live enclave. The OS principal needs no registration.
    pub fn add_enclave(&mut self, id: EnclaveId) {
        assert!(id != OS_ID, "the OS principal is implicit");
        assert!(self.state.enclaves.insert(id), "enclave {id} already live");
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn counts(&self) -> InstrCounts {
        self.counts
    }

    pub fn set_trace_enabled(&mut self, on: bool) {
        if on && self.trace.is_none() {
            self.trace = Some(Vec::new());
        } else if !on {
            self.trace = None;
        }
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    /// Switches the running principal, reprogramming the PMP view.
    /// Returns the number of PMP region-entry writes performed.
    pub fn switch_to(&mut self, p: EnclaveId) -> u64 {
        self.current = Some(p);
        self.monitor.context_switch(&self.state, p)
    }

    /// Two-level translation of a virtual address in `p`'s space: mapping
    /// lookup to a region uid, then the offset within it.
    pub fn translate(&mut self, p: EnclaveId, vaddr: u64) -> Result<(Uid, u64), ElErr> {
        self.monitor.translate(&self.state, p, vaddr)
    }

    fn ensure_running(&mut self, p: EnclaveId) {
        if self.current != Some(p) && self.state.is_principal(p) {
            self.switch_to(p);
        }
    }

    /// Everything a future transition can depend on: the formal state, the
    /// uid counter and the monitor's slot/layout occupancy. Monotone
    /// counters and the running principal are excluded.
    pub fn semantic_fingerprint(&self) -> u64 {
        let mut d = Digest64::new();
        self.state.fingerprint_into(&mut d);
        d.update_u64(self.next_uid);
        self.monitor.fingerprint_into(&mut d);
        d.value()
    }

    fn queue_signal(&mut self, target: EnclaveId, kind: SignalKind, region: Uid, actor: EnclaveId) {
        if let Some(mask) = self.state.masks.get(&target) {
            if mask.contains(&kind) {
                return;
            }
        }
        let sig = Signal {
            kind,
            region,
            actor,
        };
        self.state.pending.entry(target).or_default().push_back(sig);
        if self.trace.is_some() {
            self.emitted.push((target, sig));
        }
    }

    fn record(
        &mut self,
        caller: EnclaveId,
        instruction: &'static str,
        args: String,
        result: String,
    ) {
        self.step += 1;
        let signals = std::mem::take(&mut self.emitted);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                step: self.step,
                caller,
                instruction,
                arguments: args,
                result,
                signals,
            });
        }
    }

    fn result_str<T>(res: &Result<T, ElErr>) -> String {
        match res {
            Ok(_) => "SUCCESS".into(),
            Err(e) => e.to_string(),
        }
    }

    /// `create(size)`: allocates a fresh region owned by the caller, with
    /// owner permissions ⟨rwxl, rwxl⟩ and zeroed contents.
    pub fn create(&mut self, p: EnclaveId, size: u64) -> Result<Uid, ElErr> {
        self.ensure_running(p);
        self.counts.create += 1;
        let res = self.create_inner(p, size);
        let rendered = match &res {
            Ok(r) => format!("SUCCESS uid={r}"),
            Err(e) => e.to_string(),
        };
        self.record(p, "create", format!("size={size}"), rendered);
        res
    }

    fn create_inner(&mut self, p: EnclaveId, size: u64) -> Result<Uid, ElErr> {
        if !self.state.is_principal(p) {
            return Err(ElErr::NoEnclave);
        }
        if size == 0 {
            return Err(ElErr::Fault);
        }
        if !self.monitor.has_free_slot() {
            return Err(ElErr::PmpExhausted);
        }
        let r = Uid(self.next_uid);
        self.next_uid += 1;
        self.state
            .regions
            .insert(r, RegionRecord { owner: p, size });
        self.state.perms.insert(
            (r, p),
            PermEntry {
                max: Permission::RWXL,
                cur: Permission::RWXL,
            },
        );
        self.state.mem.insert(r, vec![0; size as usize]);
        // The creator starts holding the lock bit, so its own view is rwx.
        let eff = Monitor::effective_perm(&self.state, r, p);
        self.monitor
            .alloc_region(r, size, p, eff)
            .expect("slot availability checked above");
        Ok(r)
    }

    /// `map(vaddr, uid)`: binds a virtual range of the caller to the region.
    /// A region may be mapped at several addresses in one enclave, but a
    /// principal's mappings never intersect.
    pub fn map(&mut self, p: EnclaveId, vaddr: u64, r: Uid) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.map += 1;
        let res = self.map_inner(p, vaddr, r);
        self.record(
            p,
            "map",
            format!("vaddr={vaddr:#x},r={r}"),
            Self::result_str(&res),
        );
        res
    }

    fn map_inner(&mut self, p: EnclaveId, vaddr: u64, r: Uid) -> Result<(), ElErr> {
        if !self.state.perms.contains_key(&(r, p)) {
            return Err(ElErr::NotAccessor);
        }
        let size = self.state.size(r).expect("perm entry implies live region");
        if vaddr.checked_add(size).is_none() {
            return Err(ElErr::Overlap);
        }
        let clashes = self
            .state
            .mappings
            .iter()
            .any(|&(q, u, g)| q == p && self.state.intersect(u, g, vaddr, r));
        if clashes {
            return Err(ElErr::Overlap);
        }
        self.state.mappings.insert((p, vaddr, r));
        Ok(())
    }

    /// `unmap(vaddr, uid)`: removes one mapping triple. Permissions in the
    /// matrix are unaffected.
    pub fn unmap(&mut self, p: EnclaveId, vaddr: u64, r: Uid) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.unmap += 1;
        let res = if self.state.mappings.remove(&(p, vaddr, r)) {
            Ok(())
        } else {
            Err(ElErr::NotMapped)
        };
        self.record(
            p,
            "unmap",
            format!("vaddr={vaddr:#x},r={r}"),
            Self::result_str(&res),
        );
        res
    }

    /// `share(uid, eid, P)`: owner grants `o` an accessor entry with static
    /// maximum `max`. The new accessor's dynamic permission starts empty;
    /// it must issue `change` to activate any of it.
    pub fn share(
        &mut self,
        p: EnclaveId,
        r: Uid,
        o: EnclaveId,
        max: Permission,
    ) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.share += 1;
        let res = self.share_inner(p, r, o, max);
        self.record(
            p,
            "share",
            format!("r={r},o={o},max={max}"),
            Self::result_str(&res),
        );
        res
    }

    fn share_inner(
        &mut self,
        p: EnclaveId,
        r: Uid,
        o: EnclaveId,
        max: Permission,
    ) -> Result<(), ElErr> {
        if self.state.owner(r) != Some(p) {
            return Err(ElErr::NotOwner);
        }
        if !self.state.is_principal(o) {
            return Err(ElErr::NoEnclave);
        }
        // o == p falls out here: the owner always has an entry already.
        if self.state.perms.contains_key(&(r, o)) {
            return Err(ElErr::AlreadyShared);
        }
        self.state.perms.insert(
            (r, o),
            PermEntry {
                max,
                cur: Permission::EMPTY,
            },
        );
        Ok(())
    }

    /// `change(uid, P)`: sets the caller's dynamic permission to exactly
    /// `new` (not a union or intersection), bounded by the static maximum.
    /// Acquiring the lock bit requires that no other accessor holds it;
    /// acquire and release are signaled to the owner.
    pub fn change(&mut self, p: EnclaveId, r: Uid, new: Permission) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.change += 1;
        let res = self.change_inner(p, r, new);
        self.record(
            p,
            "change",
            format!("r={r},perm={new}"),
            Self::result_str(&res),
        );
        res
    }

    fn change_inner(&mut self, p: EnclaveId, r: Uid, new: Permission) -> Result<(), ElErr> {
        let entry = *self.state.perms.get(&(r, p)).ok_or(ElErr::NotAccessor)?;
        if !new.le(entry.max) {
            return Err(ElErr::ExceedsMax);
        }
        if new.has_lock() && !self.config.skip_change_lock_check {
            if let Some(holder) = self.state.lock_holder(r) {
                if holder != p {
                    return Err(ElErr::LockHeld);
                }
            }
        }
        let had_lock = entry.cur.has_lock();
        self.state.perms.get_mut(&(r, p)).expect("checked").cur = new;
        let owner = self.state.owner(r).expect("live region");
        if !had_lock && new.has_lock() {
            self.queue_signal(owner, SignalKind::LockAcquired, r, p);
        } else if had_lock && !new.has_lock() {
            self.queue_signal(owner, SignalKind::LockReleased, r, p);
        }
        self.monitor.refresh_entry(&self.state, r, p);
        Ok(())
    }

    /// `destroy(uid)`: removes the region and every matrix, memory and
    /// mapping entry for it, zeroizing contents first. Callable by the owner
    /// or by the OS (reclaim). Principals with an active mapping are
    /// notified.
    pub fn destroy(&mut self, p: EnclaveId, r: Uid) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.destroy += 1;
        let res = self.destroy_inner(p, r);
        self.record(p, "destroy", format!("r={r}"), Self::result_str(&res));
        res
    }

    fn destroy_inner(&mut self, p: EnclaveId, r: Uid) -> Result<(), ElErr> {
        let rec = *self.state.regions.get(&r).ok_or(ElErr::NoRegion)?;
        if rec.owner != p && p != OS_ID {
            return Err(ElErr::NotOwner);
        }
        let mapped: BTreeSet<EnclaveId> = self
            .state
            .mappings
            .iter()
            .filter(|(_, _, g)| *g == r)
            .map(|(q, _, _)| *q)
            .collect();
        if let Some(bytes) = self.state.mem.get_mut(&r) {
            bytes.fill(0);
        }
        self.state.regions.remove(&r);
        self.state.mem.remove(&r);
        self.state.perms.retain(|(g, _), _| *g != r);
        self.state.mappings.retain(|(_, _, g)| *g != r);
        self.monitor.free_region(r);
        for q in mapped {
            if q != p {
                self.queue_signal(q, SignalKind::RegionDestroyed, r, p);
            }
        }
        Ok(())
    }

    /// `transfer(uid, eid)`: atomically moves the lock bit from the caller
    /// to accessor `o`. No intermediate lock-free state is observable. The
    /// new holder is notified, and the owner sees a release/acquire pair.
    pub fn transfer(&mut self, p: EnclaveId, r: Uid, o: EnclaveId) -> Result<(), ElErr> {
        self.ensure_running(p);
        self.counts.transfer += 1;
        let res = self.transfer_inner(p, r, o);
        self.record(
            p,
            "transfer",
            format!("r={r},o={o}"),
            Self::result_str(&res),
        );
        res
    }

    fn transfer_inner(&mut self, p: EnclaveId, r: Uid, o: EnclaveId) -> Result<(), ElErr> {
        let from = *self.state.perms.get(&(r, p)).ok_or(ElErr::NotAccessor)?;
        let to = *self.state.perms.get(&(r, o)).ok_or(ElErr::NotAccessor)?;
        if !from.cur.has_lock() {
            return Err(ElErr::LockHeld);
        }
        if !to.max.has_lock() {
            return Err(ElErr::ExceedsMax);
        }
        if self.config.strict_transfer_map
            && !self
                .state
                .mappings
                .iter()
                .any(|(q, _, g)| *q == o && *g == r)
        {
            return Err(ElErr::NotMapped);
        }
        self.state.perms.get_mut(&(r, p)).expect("checked").cur = from.cur.without_lock();
        self.state.perms.get_mut(&(r, o)).expect("checked").cur = to.cur.with_lock();
        let owner = self.state.owner(r).expect("live region");
        self.queue_signal(o, SignalKind::TransferReceived, r, p);
        self.queue_signal(owner, SignalKind::LockReleased, r, p);
        self.queue_signal(owner, SignalKind::LockAcquired, r, o);
        self.monitor.refresh_entry(&self.state, r, p);
        Ok(())
    }

    /// A read, write or execute access at a virtual address. The access
    /// succeeds iff a mapping of the caller covers the address, the matching
    /// permission bit is set in the caller's dynamic permission, and either
    /// the caller holds the lock bit or nobody does. Any violation is the
    /// general protection fault.
    pub fn mem_access(
        &mut self,
        p: EnclaveId,
        vaddr: u64,
        access: Access,
    ) -> Result<Option<u8>, ElErr> {
        self.ensure_running(p);
        self.counts.mem_access += 1;
        let res = self.mem_access_inner(p, vaddr, access);
        let rendered = match (&res, access) {
            (Ok(Some(b)), _) => format!("SUCCESS d={b:#04x}"),
            (Ok(None), _) => "SUCCESS".into(),
            (Err(e), _) => e.to_string(),
        };
        self.record(
            p,
            "mem_access",
            format!("vaddr={vaddr:#x},kind={}", access.kind_str()),
            rendered,
        );
        res
    }

    fn mem_access_inner(
        &mut self,
        p: EnclaveId,
        vaddr: u64,
        access: Access,
    ) -> Result<Option<u8>, ElErr> {
        // Formal evaluation: mapping cover, permission bit, lock rule.
        let cover = self.state.covering_mapping(p, vaddr);
        let formal_allow = match cover {
            Some((_, r)) => {
                let cur = self.state.cur_perm(r, p);
                access.required_bit().le(cur)
                    && match self.state.lock_holder(r) {
                        Some(holder) => holder == p,
                        None => true,
                    }
            }
            None => false,
        };

        // Monitor evaluation: two-level translation plus the PMP view
        // programmed for the running principal.
        let translated = self.monitor.translate(&self.state, p, vaddr);
        let pmp_allow = match translated {
            Ok((r, _)) => self.monitor.pmp_allows(r, p, access),
            Err(_) => false,
        };
        assert_eq!(
            formal_allow, pmp_allow,
            "enforcement divergence at {p} vaddr={vaddr:#x} {}: formal={formal_allow} pmp={pmp_allow}",
            access.kind_str()
        );

        if !formal_allow {
            return Err(ElErr::Fault);
        }
        let (r, offset) = translated.expect("allowed access translates");
        let bytes = self.state.mem.get_mut(&r).expect("live region");
        match access {
            Access::Read => Ok(Some(bytes[offset as usize])),
            Access::Write(d) => {
                bytes[offset as usize] = d;
                Ok(None)
            }
            Access::Execute => Ok(None),
        }
    }

    /// Drains and returns the caller's signal queue in FIFO order.
    pub fn poll_signals(&mut self, p: EnclaveId) -> Vec<Signal> {
        self.ensure_running(p);
        self.counts.poll_signals += 1;
        let drained: Vec<Signal> = self
            .state
            .pending
            .get_mut(&p)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default();
        self.record(
            p,
            "poll_signals",
            String::new(),
            format!("SUCCESS n={}", drained.len()),
        );
        drained
    }

    /// Replaces the caller's signal mask: the given kinds are dropped
    /// instead of queued. An empty set restores full delivery.
    pub fn mask_signals(&mut self, p: EnclaveId, kinds: BTreeSet<SignalKind>) {
        self.ensure_running(p);
        self.counts.mask_signals += 1;
        let args = if kinds.is_empty() {
            "kinds=".to_string()
        } else {
            let list: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
            format!("kinds={}", list.join("|"))
        };
        if kinds.is_empty() {
            self.state.masks.remove(&p);
        } else {
            self.state.masks.insert(p, kinds);
        }
        self.record(p, "mask_signals", args, "SUCCESS".into());
    }

    // Bulk helpers used by workloads; each byte is one mem_access.

    pub fn write_bytes(&mut self, p: EnclaveId, vaddr: u64, data: &[u8]) -> Result<(), ElErr> {
        for (i, b) in data.iter().enumerate() {
            self.mem_access(p, vaddr + i as u64, Access::Write(*b))?;
        }
        Ok(())
    }

    pub fn read_bytes(&mut self, p: EnclaveId, vaddr: u64, len: u64) -> Result<Vec<u8>, ElErr> {
        let mut out = Vec::with_capacity(len as usize);
        for i in 0..len {
            out.push(
                self.mem_access(p, vaddr + i, Access::Read)?
                    .expect("read returns a byte"),
            );
        }
        Ok(out)
    }
}
