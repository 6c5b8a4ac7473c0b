//! Algebraic and symmetric primitives.

pub mod group;
pub mod hash;
pub mod schnorr;
pub mod sym;

use thiserror::Error;

pub use group::{BilinearMap, G1Elem, GElem, Group, Scalar};
pub use hash::{hash_to_g1, hash_to_scalar, kdf_elem, kdf_scalar, mask_hash};
pub use schnorr::Signature;
pub use sym::{hmac, hmac_verify, sym_decrypt, sym_encrypt, SymKey, Tag, NONCE_LEN, TAG_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("modulus is not a safe prime")]
    NotSafePrime,
    #[error("generator does not generate the order-q group")]
    BadGenerator,
    #[error("value out of range")]
    OutOfRange,
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("ciphertext shorter than the nonce")]
    CiphertextTooShort,
}

/// Encryption and MAC keys derived from one shared secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelKeys {
    pub enc: SymKey,
    pub mac: SymKey,
}

impl ChannelKeys {
    pub fn from_elem(group: &Group, secret: &GElem, label: &str) -> Self {
        ChannelKeys {
            enc: kdf_elem(group, secret, format!("{label}/enc").as_bytes()),
            mac: kdf_elem(group, secret, format!("{label}/mac").as_bytes()),
        }
    }

    pub fn from_scalar(group: &Group, secret: &Scalar, label: &str) -> Self {
        ChannelKeys {
            enc: kdf_scalar(group, secret, format!("{label}/enc").as_bytes()),
            mac: kdf_scalar(group, secret, format!("{label}/mac").as_bytes()),
        }
    }
}
