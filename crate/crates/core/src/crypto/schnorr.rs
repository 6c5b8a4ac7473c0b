//! Schnorr signatures in `G`.
//!
//! Sign: `R = g^k`, `c = h(R ‖ m)`, `s = k − c·x`. Verify: recompute
//! `R' = g^s · X^c` and check `h(R' ‖ m) = c`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::group::{GElem, Group, Scalar};
use super::hash::hash_to_scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub challenge: Scalar,
    pub response: Scalar,
}

fn challenge(group: &Group, commitment: &GElem, msg: &[u8]) -> Scalar {
    let mut buf = group.elem_bytes(commitment);
    buf.extend_from_slice(msg);
    hash_to_scalar(group, &buf)
}

pub fn sign<R: RngCore + ?Sized>(group: &Group, sk: &Scalar, msg: &[u8], rng: &mut R) -> Signature {
    let k = group.random_nonzero_scalar(rng);
    let commitment = group.g_pow(&k);
    let c = challenge(group, &commitment, msg);
    let s = group.scalar_sub(&k, &group.scalar_mul(&c, sk));
    Signature {
        challenge: c,
        response: s,
    }
}

pub fn verify(group: &Group, pk: &GElem, msg: &[u8], sig: &Signature) -> bool {
    let commitment = group.mul(&group.g_pow(&sig.response), &group.exp(pk, &sig.challenge));
    challenge(group, &commitment, msg) == sig.challenge
}
