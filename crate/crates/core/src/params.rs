//! Parameter profiles and the published system parameters.

use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::crypto::hash::{HMASK_ID, H1_ID, H_ID, KDF_ID};
use crate::crypto::{CryptoError, G1Elem, GElem, Group};

/// Safe prime with a 63-bit `q`; large enough that accidental collisions do
/// not show up in randomized tests, small enough to be fast.
const DESK64_P: &str = "14996203474145055287";
/// Safe prime with a 256-bit `q`.
const DEFAULT256_P: &str =
    "215118307978999171858548931446769877683570061436050914211906278900180610063363";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `p = 23, q = 11, g = gT = 2`: every property is exhaustively checkable.
    Test,
    /// 64-bit modulus.
    Desk64,
    /// 257-bit modulus, 256-bit `q`.
    Default256,
}

impl Profile {
    pub fn group(self) -> Result<Group, CryptoError> {
        let (p, g) = match self {
            Profile::Test => (BigUint::from(23u32), BigUint::from(2u32)),
            Profile::Desk64 => (DESK64_P.parse().expect("constant"), BigUint::from(4u32)),
            Profile::Default256 => (DEFAULT256_P.parse().expect("constant"), BigUint::from(4u32)),
        };
        Group::new(p, g.clone(), g)
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Profile::Test),
            "desk64" | "64" => Ok(Profile::Desk64),
            "default256" | "default" | "256" => Ok(Profile::Default256),
            other => Err(format!("unknown parameter profile `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashConfig {
    pub h1: String,
    pub h: String,
    pub hmask: String,
    pub kdf: String,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            h1: H1_ID.into(),
            h: H_ID.into(),
            hmask: HMASK_ID.into(),
            kdf: KDF_ID.into(),
        }
    }
}

/// Everything the TA publishes: the group, both forms of its public key and
/// the hash configuration.
///
/// The TA key is needed in `G` (pseudonym masks) and in `G1` (as a pairing
/// argument), so both `g^ψ` and `ψ·P` are carried.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemParams {
    pub group: Arc<Group>,
    pub pk_ta_g: GElem,
    pub pk_ta_g1: G1Elem,
    pub hash_config: HashConfig,
}

#[derive(Serialize, Deserialize)]
struct SystemParamsDoc {
    p: String,
    q: String,
    g: GElem,
    gt: GElem,
    element_width: usize,
    pk_ta_g: GElem,
    pk_ta_g1: G1Elem,
    hash_config: HashConfig,
}

impl Serialize for SystemParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SystemParamsDoc {
            p: self.group.p().to_str_radix(10),
            q: self.group.q().to_str_radix(10),
            g: self.group.generator().clone(),
            gt: self.group.pairing_generator().clone(),
            element_width: self.group.element_width(),
            pk_ta_g: self.pk_ta_g.clone(),
            pk_ta_g1: self.pk_ta_g1.clone(),
            hash_config: self.hash_config.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SystemParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = SystemParamsDoc::deserialize(d)?;
        let p: BigUint = doc.p.parse().map_err(D::Error::custom)?;
        let group = Group::new(p, doc.g.value().clone(), doc.gt.value().clone())
            .map_err(D::Error::custom)?;
        if group.q().to_str_radix(10) != doc.q || group.element_width() != doc.element_width {
            return Err(D::Error::custom("q or element_width inconsistent with p"));
        }
        let pk_ta_g = group
            .elem(doc.pk_ta_g.value().clone())
            .map_err(D::Error::custom)?;
        if doc.pk_ta_g1.value() >= group.q() {
            return Err(D::Error::custom("pk_ta_g1 out of range"));
        }
        Ok(SystemParams {
            group: Arc::new(group),
            pk_ta_g,
            pk_ta_g1: doc.pk_ta_g1,
            hash_config: doc.hash_config,
        })
    }
}
