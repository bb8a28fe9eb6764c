//! Property evaluation for the explorer: the independently maintained
//! grant ledger (bounded escalation, max immutability) and the
//! serialization monitor for lock-handoff chains.

use std::collections::BTreeMap;

use super::program::SerializationSpec;
use crate::model::{Access, EnclaveId, Machine, Permission, Uid};

/// What the owner has authorized, recorded by the verifier itself when a
/// create or share succeeds. Kept separate from the machine's permission
/// matrix so a corrupted matrix cannot hide an escalation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrantLedger {
    grants: BTreeMap<(Uid, EnclaveId), Permission>,
}

impl GrantLedger {
    pub fn record_create(&mut self, r: Uid, owner: EnclaveId) {
        self.grants.insert((r, owner), Permission::RWXL);
    }

    pub fn record_share(&mut self, r: Uid, to: EnclaveId, max: Permission) {
        self.grants.insert((r, to), max);
    }

    pub fn record_destroy(&mut self, r: Uid) {
        self.grants.retain(|(g, _), _| *g != r);
    }

    pub fn granted(&self, r: Uid, p: EnclaveId) -> Permission {
        self.grants
            .get(&(r, p))
            .copied()
            .unwrap_or(Permission::EMPTY)
    }

    /// The static maxima in the machine must equal the recorded grants.
    pub fn check_max_immutable(&self, m: &Machine) -> Option<String> {
        for ((r, p), entry) in &m.state().perms {
            let granted = self.grants.get(&(*r, *p));
            if granted != Some(&entry.max) {
                return Some(format!(
                    "A.max({r},{p}) is {} but the owner granted {}",
                    entry.max,
                    granted.map(|g| g.to_string()).unwrap_or("nothing".into())
                ));
            }
        }
        None
    }

    /// A successful access with this permission bit must be covered by a
    /// grant.
    pub fn check_access(&self, r: Uid, p: EnclaveId, access: Access) -> Option<String> {
        let granted = self.granted(r, p);
        if access.required_bit().le(granted) {
            None
        } else {
            Some(format!(
                "{p} performed a {} on {r} but was granted only {granted}",
                access.kind_str()
            ))
        }
    }

    /// A successful change to `perm` must be covered by a grant.
    pub fn check_change(&self, r: Uid, p: EnclaveId, perm: Permission) -> Option<String> {
        let granted = self.granted(r, p);
        if perm.le(granted) {
            None
        } else {
            Some(format!(
                "{p} raised its permission on {r} to {perm}, granted only {granted}"
            ))
        }
    }

    pub fn fingerprint_into(&self, d: &mut crate::digest::Digest64) {
        for ((r, p), g) in &self.grants {
            d.update_u64(r.0);
            d.update_u64(p.0 as u64);
            d.update(&[g.bits()]);
        }
    }

    /// Like `fingerprint_into` with uids passed through a canonicalizer.
    pub fn fingerprint_canonical(
        &self,
        d: &mut crate::digest::Digest64,
        canon: &dyn Fn(Uid) -> u64,
    ) {
        for ((r, p), g) in &self.grants {
            d.update_u64(canon(*r));
            d.update_u64(p.0 as u64);
            d.update(&[g.bits()]);
        }
    }
}

/// Phase tracker for the serialization property over one chain execution:
/// from the source's first locked write until the destination's read, no
/// enclave outside the chain may successfully access the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerialPhase {
    Pre,
    Critical,
    Done,
}

#[derive(Debug, Clone)]
pub struct SerialMonitor {
    pub spec: SerializationSpec,
    pub phase: SerialPhase,
}

impl SerialMonitor {
    pub fn new(spec: SerializationSpec) -> Self {
        SerialMonitor {
            spec,
            phase: SerialPhase::Pre,
        }
    }

    fn in_chain(&self, p: EnclaveId) -> bool {
        p == self.spec.source || p == self.spec.dest || self.spec.chain.contains(&p)
    }

    /// Observes one successful region access; returns a violation message
    /// if it breaks the serialization discipline. The critical window opens
    /// at the source's first write under the lock and closes when the
    /// destination reads under the lock or a chain member releases it.
    pub fn on_access(
        &mut self,
        m: &Machine,
        region: Uid,
        actor: EnclaveId,
        access: Access,
        watched: Option<Uid>,
    ) -> Option<String> {
        if watched != Some(region) {
            return None;
        }
        match self.phase {
            SerialPhase::Pre => {
                if actor == self.spec.source
                    && matches!(access, Access::Write(_))
                    && m.state().lock_holder(region) == Some(actor)
                {
                    self.phase = SerialPhase::Critical;
                }
                None
            }
            SerialPhase::Critical => {
                if actor == self.spec.dest
                    && matches!(access, Access::Read)
                    && m.state().lock_holder(region) == Some(actor)
                {
                    self.phase = SerialPhase::Done;
                    return None;
                }
                if self.in_chain(actor) {
                    None
                } else {
                    Some(format!(
                        "{actor} {} the serialized region {region} inside the locked chain",
                        match access {
                            Access::Read => "read",
                            Access::Write(_) => "wrote",
                            Access::Execute => "executed",
                        }
                    ))
                }
            }
            SerialPhase::Done => None,
        }
    }

    /// Observes a successful permission change: a chain member dropping the
    /// lock bit ends the serialized window.
    pub fn on_change(
        &mut self,
        region: Uid,
        actor: EnclaveId,
        had_lock: bool,
        new: Permission,
        watched: Option<Uid>,
    ) {
        if watched != Some(region) || self.phase != SerialPhase::Critical {
            return;
        }
        if self.in_chain(actor) && had_lock && !new.has_lock() {
            self.phase = SerialPhase::Done;
        }
    }
}
