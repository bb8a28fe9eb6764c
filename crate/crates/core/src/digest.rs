//! Rolling 64-bit digest used for payload checksums, state fingerprints and
//! duplicate-state pruning. One fixed mechanism everywhere keeps reports
//! byte-identical across runs regardless of hasher randomization.

/// FNV-1a with 64-bit state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Digest64(u64);

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

impl Digest64 {
    pub fn new() -> Self {
        Digest64(FNV_OFFSET)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = h;
    }

    pub fn update_u64(&mut self, v: u64) {
        self.update(&v.to_le_bytes());
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl Default for Digest64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Digest a byte slice in one call.
pub fn digest_bytes(bytes: &[u8]) -> u64 {
    let mut d = Digest64::new();
    d.update(bytes);
    d.value()
}
