//! Data-sharing patterns on the spatial baseline. Every leg moves the
//! payload through secure public memory with the coordinator keeping a
//! private replica: 1 enc + 1 dec + 3 copies per word per leg.

use super::patterns::{client_server_split, proxy_transform, server_response, PayloadStream};
use super::{Pattern, RunReport, WorkloadError, WorkloadSpec};
use crate::counters::WORD_BYTES;
use crate::digest::Digest64;
use crate::model::EnclaveId;
use crate::spatial::SpatialWorld;

const E1: EnclaveId = EnclaveId(1);
const E2: EnclaveId = EnclaveId(2);
const E3: EnclaveId = EnclaveId(3);
const COORDINATOR: EnclaveId = EnclaveId(100);

/// One producer-to-consumer leg: encrypt into public memory, coordinator
/// replica, decrypt into the consumer's private memory.
fn leg(world: &mut SpatialWorld, src: EnclaveId, dst: EnclaveId, payload: &[u8]) -> Vec<u8> {
    world.send_to_public(src, payload);
    world.coordinator_replicate("shared");
    world.recv_from_public(dst)
}

pub(super) fn run_pattern(spec: &WorkloadSpec) -> Result<RunReport, WorkloadError> {
    let l_bytes = (spec.l_words * WORD_BYTES) as usize;
    let mut world = SpatialWorld::new(COORDINATOR, spec.seed ^ 0x5eed_c0de);
    let mut stream = PayloadStream::new(spec.seed);
    let mut digest = Digest64::new();
    let mut per_round = Vec::new();
    let mut last = world.counters;

    for _ in 0..spec.rounds {
        match spec.pattern {
            Pattern::ProducerConsumerOneway | Pattern::ProducerConsumerTwoway => {
                let payload = stream.next_payload(l_bytes);
                let got = leg(&mut world, E1, E2, &payload);
                digest.update(&got);
            }
            Pattern::Proxy => {
                let payload = stream.next_payload(l_bytes);
                let mut held = leg(&mut world, E1, E2, &payload);
                proxy_transform(&mut held);
                let got = leg(&mut world, E2, E3, &held);
                digest.update(&got);
            }
            Pattern::ClientServer => {
                let (req_w, resp_w) = client_server_split(spec.l_words);
                let req = stream.next_payload((req_w * WORD_BYTES) as usize);
                let got_req = leg(&mut world, E1, E2, &req);
                digest.update(&got_req);
                let resp = server_response(&got_req, (resp_w * WORD_BYTES) as usize);
                let got_resp = leg(&mut world, E2, E1, &resp);
                digest.update(&got_resp);
            }
            Pattern::Spinlock | Pattern::Futex => {
                unreachable!("sync patterns handled elsewhere")
            }
        }
        per_round.push(world.counters - last);
        last = world.counters;
    }

    if !world.audit_violations().is_empty() {
        return Err(WorkloadError::ExclusionViolated(
            world.audit_violations().join("; "),
        ));
    }

    Ok(RunReport {
        spec: *spec,
        setup: Default::default(),
        counters: world.counters,
        per_round,
        checksum: format!("{:016x}", digest.value()),
        sync: None,
    })
}
