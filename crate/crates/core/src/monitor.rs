//! Simulated security-monitor plumbing: PMP entry budget, physical layout,
//! two-level address translation and context-switch accounting.
//!
//! The monitor holds one logical PMP entry per live region (single simulated
//! hart). Entry slots below `reserved_entries` are permanently reserved for
//! monitor metadata and never allocated to regions. A PMP entry encodes the
//! *effective* r/w/x permissions of one principal on one region; entries are
//! rewritten when that principal is switched in, and an entry written for a
//! different principal grants nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::digest::Digest64;
use crate::model::{Access, ElErr, EnclaveId, Permission, SystemState, Uid};

/// One PMP entry: the physical range of a region and the r/w/x permissions
/// currently programmed for `principal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmpEntry {
    pub region: Uid,
    pub phys_base: u64,
    pub length: u64,
    pub perms: Permission,
    /// The principal whose view this entry encodes.
    pub principal: EnclaveId,
}

/// Region uid → physical range, assigned by a bump allocator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhysLayout {
    ranges: BTreeMap<Uid, (u64, u64)>,
    cursor: u64,
}

impl PhysLayout {
    pub fn assign(&mut self, r: Uid, size: u64) -> (u64, u64) {
        let base = self.cursor;
        self.cursor += size;
        self.ranges.insert(r, (base, size));
        (base, size)
    }

    pub fn release(&mut self, r: Uid) {
        self.ranges.remove(&r);
    }

    pub fn range(&self, r: Uid) -> Option<(u64, u64)> {
        self.ranges.get(&r).copied()
    }

    pub fn live_regions(&self) -> usize {
        self.ranges.len()
    }
}

/// Monotone operation counters. Cycle costs are out of scope; counts are the
/// comparable metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorCounters {
    pub pmp_writes: u64,
    pub context_switches: u64,
    pub translations: u64,
}

#[derive(Debug, Clone)]
pub struct Monitor {
    pmp_total: usize,
    reserved: usize,
    /// Allocatable slots, index 0 = first non-reserved entry.
    slots: Vec<Option<PmpEntry>>,
    slot_of: BTreeMap<Uid, usize>,
    phys: PhysLayout,
    counters: MonitorCounters,
    last_switch_writes: u64,
}

impl Monitor {
    pub fn new(pmp_total: usize, reserved: usize) -> Self {
        assert!(reserved < pmp_total, "no allocatable PMP entries");
        Monitor {
            pmp_total,
            reserved,
            slots: vec![None; pmp_total - reserved],
            slot_of: BTreeMap::new(),
            phys: PhysLayout::default(),
            counters: MonitorCounters::default(),
            last_switch_writes: 0,
        }
    }

    pub fn counters(&self) -> MonitorCounters {
        self.counters
    }

    pub fn total_entries(&self) -> usize {
        self.pmp_total
    }

    pub fn reserved_entries(&self) -> usize {
        self.reserved
    }

    pub fn phys(&self) -> &PhysLayout {
        &self.phys
    }

    /// PMP writes performed by the most recent context switch.
    pub fn last_switch_writes(&self) -> u64 {
        self.last_switch_writes
    }

    pub fn has_free_slot(&self) -> bool {
        self.slots.iter().any(|s| s.is_none())
    }

    pub fn free_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    /// Claims a PMP slot and a physical range for a new region, programming
    /// the entry with `perms` for `principal` (the caller of create).
    pub fn alloc_region(
        &mut self,
        r: Uid,
        size: u64,
        principal: EnclaveId,
        perms: Permission,
    ) -> Result<(), ElErr> {
        let slot = self
            .slots
            .iter()
            .position(|s| s.is_none())
            .ok_or(ElErr::PmpExhausted)?;
        let (base, len) = self.phys.assign(r, size);
        self.slots[slot] = Some(PmpEntry {
            region: r,
            phys_base: base,
            length: len,
            perms: perms.rwx_bits(),
            principal,
        });
        self.slot_of.insert(r, slot);
        self.counters.pmp_writes += 1;
        Ok(())
    }

    /// Clears the region's entry and releases its slot for reuse.
    pub fn free_region(&mut self, r: Uid) {
        if let Some(slot) = self.slot_of.remove(&r) {
            self.slots[slot] = None;
            self.counters.pmp_writes += 1;
        }
        self.phys.release(r);
    }

    /// The effective r/w/x permission `p` holds on `r` once the global lock
    /// rule is applied: nothing while another accessor holds the lock bit.
    pub fn effective_perm(state: &SystemState, r: Uid, p: EnclaveId) -> Permission {
        let cur = state.cur_perm(r, p);
        match state.lock_holder(r) {
            Some(holder) if holder != p => Permission::EMPTY,
            _ => cur.rwx_bits(),
        }
    }

    /// Reprograms the PMP view for the incoming principal: one entry write
    /// per live region visible to it. Entries of regions outside its view
    /// keep their previous principal tag and therefore grant it nothing.
    /// Returns the number of region-entry writes.
    pub fn context_switch(&mut self, state: &SystemState, to: EnclaveId) -> u64 {
        let mut writes = 0;
        for r in state.visible_regions(to) {
            if let Some(slot) = self.slot_of.get(&r) {
                let entry = self.slots[*slot].as_mut().expect("live slot");
                entry.perms = Self::effective_perm(state, r, to);
                entry.principal = to;
                writes += 1;
            }
        }
        self.counters.context_switches += 1;
        self.counters.pmp_writes += writes;
        self.last_switch_writes = writes;
        writes
    }

    /// Rewrites one region entry for the running principal after a
    /// permission-matrix update touching that region.
    pub fn refresh_entry(&mut self, state: &SystemState, r: Uid, running: EnclaveId) {
        if let Some(slot) = self.slot_of.get(&r) {
            let entry = self.slots[*slot].as_mut().expect("live slot");
            entry.perms = Self::effective_perm(state, r, running);
            entry.principal = running;
            self.counters.pmp_writes += 1;
        }
    }

    /// Two-level translation: virtual address → region uid → offset. The
    /// physical address is `phys_base(uid) + offset`.
    pub fn translate(
        &mut self,
        state: &SystemState,
        p: EnclaveId,
        vaddr: u64,
    ) -> Result<(Uid, u64), ElErr> {
        let (base, r) = state.covering_mapping(p, vaddr).ok_or(ElErr::Fault)?;
        self.counters.translations += 1;
        Ok((r, vaddr - base))
    }

    /// Whether the PMP view currently programmed for `p` permits the access.
    pub fn pmp_allows(&self, r: Uid, p: EnclaveId, access: Access) -> bool {
        match self.slot_of.get(&r).and_then(|s| self.slots[*s].as_ref()) {
            Some(entry) => entry.principal == p && access.required_bit().le(entry.perms),
            None => false,
        }
    }

    /// Occupancy-relevant state (slot assignments and physical layout),
    /// excluding the monotone counters.
    pub fn fingerprint_into(&self, d: &mut Digest64) {
        for (r, slot) in &self.slot_of {
            d.update_u64(r.0);
            d.update_u64(*slot as u64);
        }
        for (r, (base, len)) in &self.phys.ranges {
            d.update_u64(r.0);
            d.update_u64(*base);
            d.update_u64(*len);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_budget_and_reuse() {
        let mut m = Monitor::new(8, 1);
        for i in 0..7 {
            m.alloc_region(Uid(i + 1), 16, EnclaveId(1), Permission::RWX)
                .unwrap();
        }
        // 8 PMP entries minus 1 reserved: the 8th region must not fit.
        assert_eq!(
            m.alloc_region(Uid(100), 16, EnclaveId(1), Permission::RWX),
            Err(ElErr::PmpExhausted)
        );
        m.free_region(Uid(3));
        assert!(m.has_free_slot());
        m.alloc_region(Uid(101), 16, EnclaveId(1), Permission::RWX)
            .unwrap();
        assert!(!m.has_free_slot());
    }

    #[test]
    fn bump_allocator_is_disjoint() {
        let mut m = Monitor::new(16, 1);
        m.alloc_region(Uid(1), 100, EnclaveId(1), Permission::RWX)
            .unwrap();
        m.alloc_region(Uid(2), 50, EnclaveId(1), Permission::RWX)
            .unwrap();
        let (b1, l1) = m.phys().range(Uid(1)).unwrap();
        let (b2, _) = m.phys().range(Uid(2)).unwrap();
        assert!(b1 + l1 <= b2);
    }
}
