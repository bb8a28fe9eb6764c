//! Identifiers, error codes, signals and memory-access kinds shared by the
//! whole model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::perm::Permission;

/// A principal: either the untrusted OS or an enclave.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnclaveId(pub u32);

/// The distinguished untrusted-OS principal.
pub const OS_ID: EnclaveId = EnclaveId(0);

impl EnclaveId {
    pub fn is_os(self) -> bool {
        self == OS_ID
    }
}

impl fmt::Display for EnclaveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_os() {
            write!(f, "OS")
        } else {
            write!(f, "E{}", self.0)
        }
    }
}

impl fmt::Debug for EnclaveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for EnclaveId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "OS" {
            return Ok(OS_ID);
        }
        let digits = s.strip_prefix('E').unwrap_or(s);
        let n: u32 = digits
            .parse()
            .map_err(|_| format!("bad enclave id {s:?} (expected OS, E<n> or <n>)"))?;
        if n == 0 && s != "OS" {
            return Err("enclave number 0 is reserved for the OS".into());
        }
        Ok(EnclaveId(n))
    }
}

/// Universal region identifier. Allocated from a monotonically increasing
/// counter and never reused within a run, even after destroy.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Uid(pub u64);

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "uid{}", self.0)
    }
}

/// Error codes returned by the security instructions. Every non-success
/// return leaves the system state unchanged: failed instructions are no-ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum ElErr {
    #[error("ERR_NO_REGION")]
    NoRegion,
    #[error("ERR_NO_ENCLAVE")]
    NoEnclave,
    #[error("ERR_NOT_OWNER")]
    NotOwner,
    #[error("ERR_NOT_ACCESSOR")]
    NotAccessor,
    #[error("ERR_EXCEEDS_MAX")]
    ExceedsMax,
    #[error("ERR_LOCK_HELD")]
    LockHeld,
    #[error("ERR_OVERLAP")]
    Overlap,
    #[error("ERR_NOT_MAPPED")]
    NotMapped,
    #[error("ERR_ALREADY_SHARED")]
    AlreadyShared,
    #[error("ERR_PMP_EXHAUSTED")]
    PmpExhausted,
    #[error("ERR_FAULT")]
    Fault,
}

/// Kinds of asynchronous notifications the enforcement layer queues for
/// enclaves. Delivered only through `poll_signals`, at instruction
/// boundaries, in FIFO order per target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    RegionDestroyed,
    LockAcquired,
    LockReleased,
    TransferReceived,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SignalKind::RegionDestroyed => "RegionDestroyed",
            SignalKind::LockAcquired => "LockAcquired",
            SignalKind::LockReleased => "LockReleased",
            SignalKind::TransferReceived => "TransferReceived",
        };
        f.write_str(s)
    }
}

impl FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "RegionDestroyed" => Ok(SignalKind::RegionDestroyed),
            "LockAcquired" => Ok(SignalKind::LockAcquired),
            "LockReleased" => Ok(SignalKind::LockReleased),
            "TransferReceived" => Ok(SignalKind::TransferReceived),
            _ => Err(format!("unknown signal kind {s:?}")),
        }
    }
}

/// One queued notification: what happened, on which region, and which
/// principal caused it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub kind: SignalKind,
    pub region: Uid,
    pub actor: EnclaveId,
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(r={},actor={})", self.kind, self.region, self.actor)
    }
}

/// A memory access request. Execute is a permission check only; no
/// instruction semantics are modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write(u8),
    Execute,
}

impl Access {
    /// The permission bit this access requires.
    pub fn required_bit(self) -> Permission {
        match self {
            Access::Read => Permission::R,
            Access::Write(_) => Permission::W,
            Access::Execute => Permission::X,
        }
    }

    pub fn kind_str(self) -> &'static str {
        match self {
            Access::Read => "read",
            Access::Write(_) => "write",
            Access::Execute => "execute",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enclave_id_parsing() {
        assert_eq!("OS".parse::<EnclaveId>().unwrap(), OS_ID);
        assert_eq!("E3".parse::<EnclaveId>().unwrap(), EnclaveId(3));
        assert_eq!("7".parse::<EnclaveId>().unwrap(), EnclaveId(7));
        assert!("E0".parse::<EnclaveId>().is_err());
        assert!("bogus".parse::<EnclaveId>().is_err());
    }

    #[test]
    fn error_codes_render_stably() {
        assert_eq!(ElErr::PmpExhausted.to_string(), "ERR_PMP_EXHAUSTED");
        assert_eq!(ElErr::Fault.to_string(), "ERR_FAULT");
    }
}
