//! Cost counters comparable across backends. Encrypt/decrypt/copy counts
//! are in memory words (8 bytes); the rest are operation counts.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Number of bytes per memory word used by all word-based accounting.
pub const WORD_BYTES: u64 = 8;

/// Words needed to carry `bytes` bytes.
pub fn words(bytes: u64) -> u64 {
    bytes.div_ceil(WORD_BYTES)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    /// Words encrypted into the secure public channel.
    pub enc_ops: u64,
    /// Words decrypted out of the secure public channel.
    pub dec_ops: u64,
    /// Words materialized in a new location.
    pub copies: u64,
    /// Security-instruction invocations (permission changes and lock
    /// transfers in steady state). Always 0 on the spatial baseline.
    pub instructions: u64,
    /// Round trips through the trusted coordinator.
    pub rpc_round_trips: u64,
    /// PMP entry writes performed by the monitor.
    pub pmp_writes: u64,
    /// Principal switches observed by the monitor.
    pub context_switches: u64,
}

impl Add for CostCounters {
    type Output = CostCounters;
    fn add(self, o: CostCounters) -> CostCounters {
        CostCounters {
            enc_ops: self.enc_ops + o.enc_ops,
            dec_ops: self.dec_ops + o.dec_ops,
            copies: self.copies + o.copies,
            instructions: self.instructions + o.instructions,
            rpc_round_trips: self.rpc_round_trips + o.rpc_round_trips,
            pmp_writes: self.pmp_writes + o.pmp_writes,
            context_switches: self.context_switches + o.context_switches,
        }
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: CostCounters) {
        *self = *self + o;
    }
}

impl Sub for CostCounters {
    type Output = CostCounters;
    fn sub(self, o: CostCounters) -> CostCounters {
        CostCounters {
            enc_ops: self.enc_ops - o.enc_ops,
            dec_ops: self.dec_ops - o.dec_ops,
            copies: self.copies - o.copies,
            instructions: self.instructions - o.instructions,
            rpc_round_trips: self.rpc_round_trips - o.rpc_round_trips,
            pmp_writes: self.pmp_writes - o.pmp_writes,
            context_switches: self.context_switches - o.context_switches,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_rounding() {
        assert_eq!(words(0), 0);
        assert_eq!(words(1), 1);
        assert_eq!(words(8), 1);
        assert_eq!(words(9), 2);
        assert_eq!(words(4096), 512);
    }
}
