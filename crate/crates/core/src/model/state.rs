//! The formal system state: the 5-tuple of principals, regions, permission
//! matrix, region memory and virtual mappings, plus the pending-signal
//! queues that carry asynchronous notifications between instructions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::perm::Permission;
use super::types::{EnclaveId, Signal, SignalKind, Uid, OS_ID};
use crate::digest::Digest64;

/// Region metadata. The owner is immutable for the region's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub owner: EnclaveId,
    pub size: u64,
}

/// Per (region, enclave) permission pair: the static maximum fixed when the
/// entry is created, and the current dynamic permission, always ≤ max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermEntry {
    pub max: Permission,
    pub cur: Permission,
}

/// The machine state ⟨P, R, A, M, V⟩ together with the signal queues.
///
/// All collections are ordered so that iteration, snapshots and fingerprints
/// are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemState {
    /// P: the live enclaves. The OS principal is implicit and always valid.
    pub enclaves: BTreeSet<EnclaveId>,
    /// R: live regions by uid.
    pub regions: BTreeMap<Uid, RegionRecord>,
    /// A: the permission matrix.
    pub perms: BTreeMap<(Uid, EnclaveId), PermEntry>,
    /// M: region contents, exactly `size` bytes per live region.
    pub mem: BTreeMap<Uid, Vec<u8>>,
    /// V: (principal, virtual base, region) mapping triples.
    pub mappings: BTreeSet<(EnclaveId, u64, Uid)>,
    /// Queued signals per principal, FIFO.
    pub pending: BTreeMap<EnclaveId, VecDeque<Signal>>,
    /// Signal kinds each principal has masked (dropped instead of queued).
    pub masks: BTreeMap<EnclaveId, BTreeSet<SignalKind>>,
}

impl SystemState {
    /// Whether `p` may appear as a caller or accessor: the OS or a live enclave.
    pub fn is_principal(&self, p: EnclaveId) -> bool {
        p == OS_ID || self.enclaves.contains(&p)
    }

    pub fn owner(&self, r: Uid) -> Option<EnclaveId> {
        self.regions.get(&r).map(|rec| rec.owner)
    }

    pub fn size(&self, r: Uid) -> Option<u64> {
        self.regions.get(&r).map(|rec| rec.size)
    }

    pub fn perm_entry(&self, r: Uid, p: EnclaveId) -> Option<&PermEntry> {
        self.perms.get(&(r, p))
    }

    /// The current dynamic permission, empty if `p` has no entry for `r`.
    pub fn cur_perm(&self, r: Uid, p: EnclaveId) -> Permission {
        self.perms
            .get(&(r, p))
            .map(|e| e.cur)
            .unwrap_or(Permission::EMPTY)
    }

    /// The accessor currently holding the lock bit on `r`, if any.
    /// The lock-exclusivity invariant guarantees at most one.
    pub fn lock_holder(&self, r: Uid) -> Option<EnclaveId> {
        self.perms
            .range((r, EnclaveId(0))..=(r, EnclaveId(u32::MAX)))
            .find(|(_, e)| e.cur.has_lock())
            .map(|((_, p), _)| *p)
    }

    /// The mapping triple of `p` covering `vaddr`, if any. Mappings of one
    /// principal never intersect, so the cover is unique.
    pub fn covering_mapping(&self, p: EnclaveId, vaddr: u64) -> Option<(u64, Uid)> {
        self.mappings
            .range((p, 0, Uid(0))..=(p, u64::MAX, Uid(u64::MAX)))
            .find(|(_, base, r)| {
                let size = self.size(*r).unwrap_or(0);
                *base <= vaddr && (vaddr - *base) < size
            })
            .map(|(_, base, r)| (*base, *r))
    }

    /// The regions visible to `p`: live regions with an entry for `p` in the
    /// permission matrix, in uid order.
    pub fn visible_regions(&self, p: EnclaveId) -> Vec<Uid> {
        self.perms
            .keys()
            .filter(|(_, q)| *q == p)
            .map(|(r, _)| *r)
            .collect()
    }

    /// `[u, u+size(g)) ∩ [v, v+size(r)) ≠ ∅`, computed without overflow.
    pub fn intersect(&self, u: u64, g: Uid, v: u64, r: Uid) -> bool {
        let gs = self.size(g).unwrap_or(0) as u128;
        let rs = self.size(r).unwrap_or(0) as u128;
        (u as u128 + gs > v as u128) && (v as u128 + rs > u as u128)
    }

    /// Checks every structural invariant and returns the list of violations.
    pub fn audit(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for ((r, p), entry) in &self.perms {
            if !self.regions.contains_key(r) {
                bad.push(format!("perm entry ({r},{p}) references dead region"));
            }
            if !self.is_principal(*p) {
                bad.push(format!("perm entry ({r},{p}) references unknown principal"));
            }
            if !entry.cur.le(entry.max) {
                bad.push(format!(
                    "perm entry ({r},{p}): cur {} exceeds max {}",
                    entry.cur, entry.max
                ));
            }
        }
        for (r, rec) in &self.regions {
            if !self.perms.contains_key(&(*r, rec.owner)) {
                bad.push(format!("region {r}: owner {} has no perm entry", rec.owner));
            }
            let holders: Vec<_> = self
                .perms
                .iter()
                .filter(|((g, _), e)| g == r && e.cur.has_lock())
                .map(|((_, p), _)| *p)
                .collect();
            if holders.len() > 1 {
                bad.push(format!("region {r}: multiple lock holders {holders:?}"));
            }
            match self.mem.get(r) {
                Some(bytes) if bytes.len() as u64 == rec.size => {}
                Some(bytes) => bad.push(format!(
                    "region {r}: memory holds {} bytes, size is {}",
                    bytes.len(),
                    rec.size
                )),
                None => bad.push(format!("region {r}: no backing memory")),
            }
        }
        for r in self.mem.keys() {
            if !self.regions.contains_key(r) {
                bad.push(format!("memory for dead region {r}"));
            }
        }
        for (p, v, r) in &self.mappings {
            if !self.perms.contains_key(&(*r, *p)) {
                bad.push(format!("mapping ({p},{v:#x},{r}) without perm entry"));
            }
            for (q, u, g) in &self.mappings {
                if q == p && (u, g) < (v, r) && self.intersect(*u, *g, *v, *r) {
                    bad.push(format!(
                        "mappings of {p} intersect: ({u:#x},{g}) and ({v:#x},{r})"
                    ));
                }
            }
        }
        bad
    }

    /// Folds the complete state into a fingerprint. Two states with equal
    /// fingerprints are treated as identical by the explorer.
    pub fn fingerprint_into(&self, d: &mut Digest64) {
        d.update_u64(self.enclaves.len() as u64);
        for e in &self.enclaves {
            d.update_u64(e.0 as u64);
        }
        d.update_u64(self.regions.len() as u64);
        for (r, rec) in &self.regions {
            d.update_u64(r.0);
            d.update_u64(rec.owner.0 as u64);
            d.update_u64(rec.size);
        }
        d.update_u64(self.perms.len() as u64);
        for ((r, p), e) in &self.perms {
            d.update_u64(r.0);
            d.update_u64(p.0 as u64);
            d.update(&[e.max.bits(), e.cur.bits()]);
        }
        for (r, bytes) in &self.mem {
            d.update_u64(r.0);
            d.update(bytes);
        }
        d.update_u64(self.mappings.len() as u64);
        for (p, v, r) in &self.mappings {
            d.update_u64(p.0 as u64);
            d.update_u64(*v);
            d.update_u64(r.0);
        }
        for (p, queue) in &self.pending {
            d.update_u64(p.0 as u64);
            d.update_u64(queue.len() as u64);
            for s in queue {
                d.update(&[s.kind as u8]);
                d.update_u64(s.region.0);
                d.update_u64(s.actor.0 as u64);
            }
        }
        for (p, kinds) in &self.masks {
            d.update_u64(p.0 as u64);
            for k in kinds {
                d.update(&[*k as u8]);
            }
        }
    }

    /// Convenience wrapper around `fingerprint_into`.
    pub fn fingerprint(&self) -> u64 {
        let mut d = Digest64::new();
        self.fingerprint_into(&mut d);
        d.value()
    }
}
