//! The spatial ShMem baseline: spatially isolated enclaves that simulate
//! shared memory through a cryptographically secure public channel and a
//! trusted coordinator enclave holding the shared content in its private
//! memory.
//!
//! The cipher is a toy: a deterministic keyed per-word invertible mixing.
//! Its op counts stand in for real crypto cost; the counts, not the
//! strength, are the comparable metric.

use std::collections::BTreeMap;

use crate::counters::{words, CostCounters, WORD_BYTES};
use crate::model::EnclaveId;

/// Keyed per-word mixing. `decrypt(encrypt(w)) == w` for every word and key.
#[derive(Debug, Clone, Copy)]
pub struct ToyCipher {
    key: u64,
}

impl ToyCipher {
    pub fn new(key: u64) -> Self {
        ToyCipher { key }
    }

    fn keystream(&self, index: u64) -> u64 {
        // splitmix64 over (key, word index)
        let mut z = self.key ^ index.wrapping_mul(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn encrypt_word(&self, index: u64, w: u64) -> u64 {
        (w ^ self.keystream(index)).rotate_left(17)
    }

    pub fn decrypt_word(&self, index: u64, w: u64) -> u64 {
        w.rotate_right(17) ^ self.keystream(index)
    }
}

/// Where a byte lives in the baseline world. Private locations carry their
/// owning principal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Location {
    Public,
    Private(EnclaveId),
}

/// Records every buffer touch so isolation can be asserted after a run: no
/// principal ever touches another principal's private memory.
#[derive(Debug, Clone, Default)]
struct AccessAudit {
    touches: u64,
    violations: Vec<String>,
}

impl AccessAudit {
    fn touch(&mut self, actor: EnclaveId, loc: Location) {
        self.touches += 1;
        if let Location::Private(owner) = loc {
            if owner != actor {
                self.violations
                    .push(format!("{actor} touched private memory of {owner}"));
            }
        }
    }
}

/// The coordinator's private side: named replicas of shared objects.
#[derive(Debug, Clone, Default)]
pub struct CoordinatorState {
    replicas: BTreeMap<String, Vec<u8>>,
}

/// The complete baseline world: one public channel, per-enclave private
/// inboxes, and the trusted coordinator. RPCs are processed synchronously
/// in FIFO order.
#[derive(Debug, Clone)]
pub struct SpatialWorld {
    cipher: ToyCipher,
    /// Ciphertext currently sitting in public memory, whole words.
    public: Vec<u8>,
    /// Plaintext byte length of the payload behind `public`.
    public_len: usize,
    /// Last payload delivered to each principal's private memory.
    inboxes: BTreeMap<EnclaveId, Vec<u8>>,
    coordinator_id: EnclaveId,
    coordinator: CoordinatorState,
    audit: AccessAudit,
    pub counters: CostCounters,
}

impl SpatialWorld {
    pub fn new(coordinator_id: EnclaveId, key: u64) -> Self {
        SpatialWorld {
            cipher: ToyCipher::new(key),
            public: Vec::new(),
            public_len: 0,
            inboxes: BTreeMap::new(),
            coordinator_id,
            coordinator: CoordinatorState::default(),
            audit: AccessAudit::default(),
            counters: CostCounters::default(),
        }
    }

    /// Encrypts `payload` word by word into public memory.
    /// Costs: 1 enc op and 1 copy per word.
    pub fn send_to_public(&mut self, src: EnclaveId, payload: &[u8]) {
        let n = words(payload.len() as u64);
        self.audit.touch(src, Location::Private(src));
        self.audit.touch(src, Location::Public);
        self.public.clear();
        for i in 0..n {
            let w = read_word(payload, i);
            let c = self.cipher.encrypt_word(i, w);
            self.public.extend_from_slice(&c.to_le_bytes());
        }
        self.public_len = payload.len();
        self.counters.enc_ops += n;
        self.counters.copies += n;
    }

    fn decrypt_public(&self) -> Vec<u8> {
        let n = words(self.public_len as u64);
        let mut plain = Vec::with_capacity(n as usize * WORD_BYTES as usize);
        for i in 0..n {
            let c = read_word(&self.public, i);
            plain.extend_from_slice(&self.cipher.decrypt_word(i, c).to_le_bytes());
        }
        plain.truncate(self.public_len);
        plain
    }

    /// Decrypts public memory word by word into `dst`'s private memory and
    /// returns the plaintext. Costs: 1 dec op and 1 copy per word.
    pub fn recv_from_public(&mut self, dst: EnclaveId) -> Vec<u8> {
        let n = words(self.public_len as u64);
        self.audit.touch(dst, Location::Public);
        self.audit.touch(dst, Location::Private(dst));
        let plain = self.decrypt_public();
        self.counters.dec_ops += n;
        self.counters.copies += n;
        self.inboxes.insert(dst, plain.clone());
        plain
    }

    /// The coordinator copies the current public payload into a private
    /// replica. Costs: 1 copy per word.
    pub fn coordinator_replicate(&mut self, name: &str) {
        let coord = self.coordinator_id;
        self.audit.touch(coord, Location::Public);
        self.audit.touch(coord, Location::Private(coord));
        let n = words(self.public_len as u64);
        let plain = self.decrypt_public();
        self.coordinator.replicas.insert(name.to_string(), plain);
        self.counters.copies += n;
    }

    /// Sends a payload from `src` to `dst` over the secure public channel.
    /// Costs per word: 1 enc + 1 copy on the way in, 1 dec + 1 copy on the
    /// way out. The payload is delivered intact.
    pub fn secure_send(&mut self, src: EnclaveId, dst: EnclaveId, payload: &[u8]) -> Vec<u8> {
        self.send_to_public(src, payload);
        self.recv_from_public(dst)
    }

    /// One remote procedure call to the trusted coordinator: request and
    /// reply each cross the secure channel once. Supported methods:
    /// `put <name>` stores the payload as a replica (one extra private
    /// copy), `get <name>` returns it, `incr <name>` treats the replica as
    /// a little-endian u64 counter and returns the incremented value,
    /// `tas <name>` test-and-sets it (reply `[1]` on grant, `[0]` when
    /// already held), `clear <name>` zeroes it.
    pub fn rpc(&mut self, src: EnclaveId, method: &str, args: &[u8]) -> Vec<u8> {
        let coord = self.coordinator_id;
        let request = self.secure_send(src, coord, args);
        let reply = match method.split_once(' ') {
            Some(("put", name)) => {
                self.audit.touch(coord, Location::Private(coord));
                self.counters.copies += words(request.len() as u64);
                self.coordinator.replicas.insert(name.into(), request);
                Vec::new()
            }
            Some(("get", name)) => {
                self.audit.touch(coord, Location::Private(coord));
                self.coordinator
                    .replicas
                    .get(name)
                    .cloned()
                    .unwrap_or_default()
            }
            Some(("incr", name)) => {
                self.audit.touch(coord, Location::Private(coord));
                let counter = self
                    .coordinator
                    .replicas
                    .entry(name.into())
                    .or_insert_with(|| vec![0; 8]);
                let v = u64::from_le_bytes(counter[..8].try_into().unwrap()) + 1;
                counter[..8].copy_from_slice(&v.to_le_bytes());
                v.to_le_bytes().to_vec()
            }
            Some(("tas", name)) => {
                self.audit.touch(coord, Location::Private(coord));
                let cell = self
                    .coordinator
                    .replicas
                    .entry(name.into())
                    .or_insert_with(|| vec![0; 8]);
                if cell.iter().all(|&b| b == 0) {
                    let n = request.len().min(cell.len());
                    cell[..n].copy_from_slice(&request[..n]);
                    vec![1]
                } else {
                    vec![0]
                }
            }
            Some(("clear", name)) => {
                self.audit.touch(coord, Location::Private(coord));
                if let Some(cell) = self.coordinator.replicas.get_mut(name) {
                    cell.fill(0);
                }
                Vec::new()
            }
            _ => Vec::new(),
        };
        let delivered = self.secure_send(coord, src, &reply);
        self.counters.rpc_round_trips += 1;
        delivered
    }

    /// Asserts the isolation audit: construction makes cross-private
    /// touches impossible, and this double-checks the recorded log.
    pub fn audit_violations(&self) -> &[String] {
        &self.audit.violations
    }

    pub fn audited_touches(&self) -> u64 {
        self.audit.touches
    }
}

fn read_word(bytes: &[u8], index: u64) -> u64 {
    let mut buf = [0u8; 8];
    let start = (index * WORD_BYTES) as usize;
    let end = bytes.len().min(start + 8);
    if start < end {
        buf[..end - start].copy_from_slice(&bytes[start..end]);
    }
    u64::from_le_bytes(buf)
}

/// The raw spatial memory model itself: public memory fully accessible to
/// every principal including the OS, private memory exclusive to its owner.
/// Used as the oracle when checking that the relaxed model emulates spatial
/// isolation exactly.
#[derive(Debug, Clone)]
pub struct SpatialMemory {
    public: Vec<u8>,
    privates: BTreeMap<EnclaveId, Vec<u8>>,
}

/// Observable outcome of one raw spatial access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialOutcome {
    Value(u8),
    Written,
    Fault,
}

impl SpatialMemory {
    pub fn new(public_size: usize) -> Self {
        SpatialMemory {
            public: vec![0; public_size],
            privates: BTreeMap::new(),
        }
    }

    pub fn add_private(&mut self, owner: EnclaveId, size: usize) {
        self.privates.insert(owner, vec![0; size]);
    }

    pub fn read_public(&self, _p: EnclaveId, off: usize) -> SpatialOutcome {
        match self.public.get(off) {
            Some(b) => SpatialOutcome::Value(*b),
            None => SpatialOutcome::Fault,
        }
    }

    pub fn write_public(&mut self, _p: EnclaveId, off: usize, b: u8) -> SpatialOutcome {
        match self.public.get_mut(off) {
            Some(slot) => {
                *slot = b;
                SpatialOutcome::Written
            }
            None => SpatialOutcome::Fault,
        }
    }

    pub fn read_private(&self, p: EnclaveId, owner: EnclaveId, off: usize) -> SpatialOutcome {
        if p != owner {
            return SpatialOutcome::Fault;
        }
        match self.privates.get(&owner).and_then(|m| m.get(off)) {
            Some(b) => SpatialOutcome::Value(*b),
            None => SpatialOutcome::Fault,
        }
    }

    pub fn write_private(
        &mut self,
        p: EnclaveId,
        owner: EnclaveId,
        off: usize,
        b: u8,
    ) -> SpatialOutcome {
        if p != owner {
            return SpatialOutcome::Fault;
        }
        match self.privates.get_mut(&owner).and_then(|m| m.get_mut(off)) {
            Some(slot) => {
                *slot = b;
                SpatialOutcome::Written
            }
            None => SpatialOutcome::Fault,
        }
    }
}
