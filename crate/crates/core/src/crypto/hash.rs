//! Hash functions onto `G1` and `Z_q^*`, the pseudonym mask hash and the KDF.
//!
//! All of them are SHA-256 in counter mode under distinct domain tags.

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use super::group::{G1Elem, GElem, Group, Scalar};
use super::sym::SymKey;

pub const H1_ID: &str = "sha256-ctr/h1";
pub const H_ID: &str = "sha256-ctr/h";
pub const HMASK_ID: &str = "sha256-ctr/mask";
pub const KDF_ID: &str = "sha256/kdf";

const DST_H1: &[u8] = b"vanet-gka:H1";
const DST_H: &[u8] = b"vanet-gka:h";
const DST_MASK: &[u8] = b"vanet-gka:mask";
const DST_KDF: &[u8] = b"vanet-gka:kdf";

/// `SHA-256(dst ‖ counter ‖ data)` blocks concatenated and truncated to `out_len`.
pub fn expand(dst: &[u8], data: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_len + 32);
    let mut counter: u32 = 0;
    while out.len() < out_len {
        let mut h = Sha256::new();
        h.update((dst.len() as u32).to_be_bytes());
        h.update(dst);
        h.update(counter.to_be_bytes());
        h.update(data);
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(out_len);
    out
}

fn to_nonzero_mod_q(group: &Group, dst: &[u8], data: &[u8]) -> BigUint {
    let wide = expand(dst, data, group.element_width() + 16);
    BigUint::from_bytes_be(&wide) % (group.q() - 1u32) + 1u32
}

/// `H1: {0,1}* → G1`, landing in `[1, q − 1]` so that `Q_U` is never the identity.
pub fn hash_to_g1(group: &Group, data: &[u8]) -> G1Elem {
    group.g1(to_nonzero_mod_q(group, DST_H1, data))
}

/// `h: {0,1}* → Z_q^*`.
pub fn hash_to_scalar(group: &Group, data: &[u8]) -> Scalar {
    group.scalar(to_nonzero_mod_q(group, DST_H, data))
}

/// Pseudorandom `out_len` bytes derived from a group element.
pub fn mask_hash(group: &Group, e: &GElem, out_len: usize) -> Vec<u8> {
    expand(DST_MASK, &group.elem_bytes(e), out_len)
}

fn kdf_bytes(kind: u8, secret: &[u8], context: &[u8]) -> SymKey {
    let mut h = Sha256::new();
    h.update(DST_KDF);
    h.update([kind]);
    h.update((context.len() as u32).to_be_bytes());
    h.update(context);
    h.update(secret);
    SymKey::from_bytes(h.finalize().into())
}

/// 32-byte key from a group element (GK, sk, VVK, KEM secrets).
pub fn kdf_elem(group: &Group, e: &GElem, context: &[u8]) -> SymKey {
    kdf_bytes(0x01, &group.elem_bytes(e), context)
}

/// 32-byte key from a scalar (the vehicle nonce `N_1`).
pub fn kdf_scalar(group: &Group, s: &Scalar, context: &[u8]) -> SymKey {
    kdf_bytes(0x02, &group.scalar_bytes(s), context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Profile;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn toy() -> Group {
        Profile::Test.group().unwrap()
    }

    // Chi-square critical value for 9 degrees of freedom at alpha = 0.01.
    const CHI2_9DF_001: f64 = 21.666;

    fn chi_square(counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / counts.len() as f64;
        counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    #[test]
    fn h1_deterministic_and_in_range() {
        let g = toy();
        assert_eq!(hash_to_g1(&g, b"abc"), hash_to_g1(&g, b"abc"));
        let e = hash_to_g1(&g, b"").to_u64().unwrap();
        assert!((1..=10).contains(&e));
    }

    #[test]
    fn h1_and_h_pass_uniformity_check() {
        let g = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut c1 = [0u64; 10];
        let mut c2 = [0u64; 10];
        for _ in 0..10_000 {
            let mut buf = [0u8; 24];
            rng.fill_bytes(&mut buf);
            let a = hash_to_g1(&g, &buf).to_u64().unwrap();
            let b = hash_to_scalar(&g, &buf).to_u64().unwrap();
            assert!((1..=10).contains(&a) && (1..=10).contains(&b));
            c1[(a - 1) as usize] += 1;
            c2[(b - 1) as usize] += 1;
        }
        assert!(chi_square(&c1) < CHI2_9DF_001, "H1 chi2 {}", chi_square(&c1));
        assert!(chi_square(&c2) < CHI2_9DF_001, "h chi2 {}", chi_square(&c2));
    }

    #[test]
    fn h_differs_from_h1_domain() {
        let g = Profile::Desk64.group().unwrap();
        assert_ne!(
            hash_to_g1(&g, b"x").value(),
            hash_to_scalar(&g, b"x").value()
        );
    }

    #[test]
    fn mask_hash_is_balanced() {
        let g = Profile::Desk64.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let e = g.random_elem(&mut rng);
        assert_eq!(mask_hash(&g, &e, 42), mask_hash(&g, &e, 42));
        assert_eq!(mask_hash(&g, &e, 42).len(), 42);
        let mut ones = 0u64;
        let trials = 2_000u64;
        for _ in 0..trials {
            let e = g.random_elem(&mut rng);
            ones += mask_hash(&g, &e, 42)
                .iter()
                .map(|b| b.count_ones() as u64)
                .sum::<u64>();
        }
        let bits = trials * 42 * 8;
        // Binomial(n, 1/2): 4 standard deviations.
        let sd = (bits as f64 * 0.25).sqrt();
        assert!(((ones as f64) - bits as f64 / 2.0).abs() < 4.0 * sd);
    }

    #[test]
    fn kdf_separates_contexts_and_has_no_collisions() {
        let g = Profile::Desk64.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let e = g.random_elem(&mut rng);
        assert_eq!(kdf_elem(&g, &e, b"enc"), kdf_elem(&g, &e, b"enc"));
        assert_ne!(kdf_elem(&g, &e, b"enc"), kdf_elem(&g, &e, b"mac"));
        let s = g.scalar(e.value().clone());
        assert_ne!(kdf_elem(&g, &e, b"enc"), kdf_scalar(&g, &s, b"enc"));

        let mut seen = HashSet::new();
        for i in 0..10_000u64 {
            let e = g.g_pow(&g.scalar_u64(i + 1));
            assert!(seen.insert(*kdf_elem(&g, &e, b"scan").as_bytes()));
        }
    }
}
