//! Reference symmetric layer: an HMAC-SHA256 counter-mode keystream cipher
//! and HMAC-SHA256 truncated to 16 bytes.

use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

use super::CryptoError;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const TAG_LEN: usize = 16;

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymKey([u8; KEY_LEN]);

impl SymKey {
    pub(crate) fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymKey({}…)", hex::encode(&self.0[..4]))
    }
}

pub type Tag = [u8; TAG_LEN];

fn mac(key: &SymKey) -> HmacSha256 {
    <HmacSha256 as Mac>::new_from_slice(&key.0).expect("hmac accepts any key length")
}

/// XORs `data` with the keystream `HMAC_k("ks" ‖ nonce ‖ ctr)`.
pub fn apply_keystream(key: &SymKey, nonce: &[u8], data: &mut [u8]) {
    for (ctr, chunk) in data.chunks_mut(32).enumerate() {
        let mut m = mac(key);
        m.update(b"ks");
        m.update(nonce);
        m.update(&(ctr as u64).to_be_bytes());
        let block = m.finalize().into_bytes();
        for (d, k) in chunk.iter_mut().zip(block.iter()) {
            *d ^= k;
        }
    }
}

/// `nonce ‖ (plaintext ⊕ keystream)` with a fresh random 16-byte nonce.
pub fn sym_encrypt<R: RngCore + ?Sized>(key: &SymKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let mut out = vec![0u8; NONCE_LEN + plaintext.len()];
    rng.fill_bytes(&mut out[..NONCE_LEN]);
    out[NONCE_LEN..].copy_from_slice(plaintext);
    let (nonce, body) = out.split_at_mut(NONCE_LEN);
    apply_keystream(key, nonce, body);
    out
}

pub fn sym_decrypt(key: &SymKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN {
        return Err(CryptoError::CiphertextTooShort);
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    let mut out = body.to_vec();
    apply_keystream(key, nonce, &mut out);
    Ok(out)
}

/// HMAC-SHA256 truncated to 16 bytes.
pub fn hmac(key: &SymKey, data: &[u8]) -> Tag {
    let mut m = mac(key);
    m.update(data);
    let full = m.finalize().into_bytes();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&full[..TAG_LEN]);
    tag
}

pub fn hmac_verify(key: &SymKey, data: &[u8], tag: &Tag) -> bool {
    let mut m = mac(key);
    m.update(data);
    m.verify_truncated_left(tag).is_ok()
}
