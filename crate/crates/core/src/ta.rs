//! Trust authority: system initialization, RSU and vehicle registration,
//! per-range vehicle pseudonyms and identity tracing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    hash_to_g1, hash_to_scalar, mask_hash, schnorr, CryptoError, G1Elem, GElem, Group, Scalar,
    Signature,
};
use crate::params::{HashConfig, Profile, SystemParams};

pub const PSEUDONYM_LEN: usize = 42;
/// One byte of the pseudonym is the length prefix.
pub const MAX_TID_LEN: usize = PSEUDONYM_LEN - 1;

#[derive(Debug, Error)]
pub enum TaError {
    #[error("TID {0} is already registered")]
    DuplicateTid(String),
    #[error("TID must be 1..={MAX_TID_LEN} bytes, got {0}")]
    TidLength(usize),
    #[error("TA secret must be in Z_q^*")]
    ZeroSecret,
    #[error("pseudonym does not unmask to a valid identity under the given public key")]
    TraceFailed,
    #[error("registry record {0} is missing")]
    UnknownTid(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("registry i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry format: {0}")]
    Json(#[from] serde_json::Error),
}

/// Renders an identity as text when it is printable, hex otherwise.
pub fn display_tid(tid: &[u8]) -> String {
    match std::str::from_utf8(tid) {
        Ok(s) if s.chars().all(|c| !c.is_control()) => s.to_string(),
        _ => format!("0x{}", hex::encode(tid)),
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// A masked identity, fixed at 42 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pseudonym(pub [u8; PSEUDONYM_LEN]);

impl Pseudonym {
    pub fn as_bytes(&self) -> &[u8; PSEUDONYM_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Pseudonym)
    }
}

impl fmt::Debug for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pseudonym({}…)", hex::encode(&self.0[..6]))
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// `len ‖ tid ‖ 0…` to 42 bytes.
pub fn pad_tid(tid: &[u8]) -> Result<[u8; PSEUDONYM_LEN], TaError> {
    if tid.is_empty() || tid.len() > MAX_TID_LEN {
        return Err(TaError::TidLength(tid.len()));
    }
    let mut out = [0u8; PSEUDONYM_LEN];
    out[0] = tid.len() as u8;
    out[1..=tid.len()].copy_from_slice(tid);
    Ok(out)
}

pub fn unpad_tid(padded: &[u8; PSEUDONYM_LEN]) -> Option<Vec<u8>> {
    let len = padded[0] as usize;
    if len == 0 || len > MAX_TID_LEN || padded[len + 1..].iter().any(|&b| b != 0) {
        return None;
    }
    Some(padded[1..=len].to_vec())
}

fn xor42(a: &[u8; PSEUDONYM_LEN], b: &[u8]) -> [u8; PSEUDONYM_LEN] {
    let mut out = *a;
    for (o, m) in out.iter_mut().zip(b) {
        *o ^= m;
    }
    out
}

/// RSU position in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub x_mm: i64,
    pub y_mm: i64,
}

impl Location {
    pub fn from_meters(x: f64, y: f64) -> Self {
        Location {
            x_mm: (x * 1000.0).round() as i64,
            y_mm: (y * 1000.0).round() as i64,
        }
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.x_mm.to_be_bytes());
        out[8..].copy_from_slice(&self.y_mm.to_be_bytes());
        out
    }

    pub fn hash(&self, group: &Group) -> Scalar {
        hash_to_scalar(group, &self.to_bytes())
    }
}

/// The TA-signed RSU announcement `(PK_RSU, Loc, h(Loc), σ_TA)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beacon {
    pub pk_rsu: GElem,
    pub loc: Location,
    pub loc_hash: Scalar,
    pub ta_sig: Signature,
}

pub fn beacon_signing_bytes(group: &Group, pk_rsu: &GElem, loc: &Location, loc_hash: &Scalar) -> Vec<u8> {
    let mut out = b"meg1".to_vec();
    out.extend(group.elem_bytes(pk_rsu));
    out.extend(loc.to_bytes());
    out.extend(group.scalar_bytes(loc_hash));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Rsu,
    Vehicle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub sk: Scalar,
    pub pk: GElem,
}

/// Long-term material held by a node.
///
/// Vehicles carry no long-term key pair: they draw a fresh one whenever they
/// enter a new RSU range (see [`refresh_vehicle_epoch`]).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCredentials {
    #[serde(with = "hex_bytes")]
    pub tid: Vec<u8>,
    pub role: Role,
    pub keypair: Option<KeyPair>,
    pub q_u: G1Elem,
    pub s_u: G1Elem,
    pub loc: Option<Location>,
}

impl NodeCredentials {
    /// `e(s_U, P) = e(Q_U, ψ·P)`.
    pub fn is_consistent(&self, params: &SystemParams) -> bool {
        let g = &params.group;
        self.q_u == hash_to_g1(g, &self.tid)
            && g.pair(&self.s_u, &g.g1_u64(1)) == g.pair(&self.q_u, &params.pk_ta_g1)
    }
}

/// Public part of a registration, safe to persist in the registry file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRecord {
    #[serde(with = "hex_bytes")]
    pub tid: Vec<u8>,
    pub role: Role,
    pub pk: Option<GElem>,
    pub q_u: G1Elem,
    pub loc: Option<Location>,
}

/// Per-range vehicle key pair and pseudonym.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VehicleEpoch {
    pub alpha: Scalar,
    pub pk: GElem,
    pub fid: Pseudonym,
}

pub struct TaState {
    sk: Scalar,
    params: SystemParams,
    registry: BTreeMap<Vec<u8>, RegistryRecord>,
}

impl fmt::Debug for TaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaState")
            .field("params", &self.params)
            .field("registered", &self.registry.len())
            .finish_non_exhaustive()
    }
}

impl TaState {
    /// Validates the profile's parameters and draws `ψ_TA` from `Z_q^*`.
    pub fn init<R: RngCore + ?Sized>(profile: Profile, rng: &mut R) -> Result<Self, TaError> {
        let group = profile.group()?;
        let psi = group.random_nonzero_scalar(rng);
        Self::with_secret(group, psi)
    }

    pub fn with_secret(group: Group, psi: Scalar) -> Result<Self, TaError> {
        if psi.value() == &num_bigint::BigUint::default() {
            return Err(TaError::ZeroSecret);
        }
        let params = SystemParams {
            pk_ta_g: group.g_pow(&psi),
            pk_ta_g1: group.g1_base_mul(&psi),
            group: Arc::new(group),
            hash_config: HashConfig::default(),
        };
        Ok(TaState {
            sk: psi,
            params,
            registry: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn group(&self) -> &Group {
        &self.params.group
    }

    pub fn secret(&self) -> &Scalar {
        &self.sk
    }

    pub fn records(&self) -> impl Iterator<Item = &RegistryRecord> {
        self.registry.values()
    }

    pub fn record(&self, tid: &[u8]) -> Option<&RegistryRecord> {
        self.registry.get(tid)
    }

    fn certify(&self, tid: &[u8]) -> Result<(G1Elem, G1Elem), TaError> {
        if tid.is_empty() || tid.len() > MAX_TID_LEN {
            return Err(TaError::TidLength(tid.len()));
        }
        if self.registry.contains_key(tid) {
            return Err(TaError::DuplicateTid(display_tid(tid)));
        }
        let g = self.group();
        let q_u = hash_to_g1(g, tid);
        let s_u = g.g1_mul(&self.sk, &q_u);
        Ok((q_u, s_u))
    }

    /// Issues `(ξ, g^ξ, Q, s = ψQ)` and the TA-signed beacon payload.
    pub fn register_rsu<R: RngCore + ?Sized>(
        &mut self,
        tid: &[u8],
        loc: Location,
        rng: &mut R,
    ) -> Result<(NodeCredentials, Beacon), TaError> {
        let (q_u, s_u) = self.certify(tid)?;
        let g = self.params.group.clone();
        let sk = g.random_nonzero_scalar(rng);
        let keypair = KeyPair {
            pk: g.g_pow(&sk),
            sk,
        };
        let beacon = self.sign_beacon(&keypair.pk, loc, rng);
        self.registry.insert(
            tid.to_vec(),
            RegistryRecord {
                tid: tid.to_vec(),
                role: Role::Rsu,
                pk: Some(keypair.pk.clone()),
                q_u: q_u.clone(),
                loc: Some(loc),
            },
        );
        let creds = NodeCredentials {
            tid: tid.to_vec(),
            role: Role::Rsu,
            keypair: Some(keypair),
            q_u,
            s_u,
            loc: Some(loc),
        };
        Ok((creds, beacon))
    }

    pub fn sign_beacon<R: RngCore + ?Sized>(&self, pk_rsu: &GElem, loc: Location, rng: &mut R) -> Beacon {
        let g = self.group();
        let loc_hash = loc.hash(g);
        let msg = beacon_signing_bytes(g, pk_rsu, &loc, &loc_hash);
        Beacon {
            pk_rsu: pk_rsu.clone(),
            loc,
            loc_hash,
            ta_sig: schnorr::sign(g, &self.sk, &msg, rng),
        }
    }

    /// Issues `(Q_V, s_V)`.
    pub fn register_vehicle(&mut self, tid: &[u8]) -> Result<NodeCredentials, TaError> {
        let (q_u, s_u) = self.certify(tid)?;
        self.registry.insert(
            tid.to_vec(),
            RegistryRecord {
                tid: tid.to_vec(),
                role: Role::Vehicle,
                pk: None,
                q_u: q_u.clone(),
                loc: None,
            },
        );
        Ok(NodeCredentials {
            tid: tid.to_vec(),
            role: Role::Vehicle,
            keypair: None,
            q_u,
            s_u,
            loc: None,
        })
    }

    /// Recovers the true identity behind `fid` given the epoch key `pk_v`:
    /// `g^{α·ψ}` is reachable from both `(PK_TA, α)` and `(PK_V, ψ)`.
    pub fn trace(&self, fid: &Pseudonym, pk_v: &GElem) -> Result<Vec<u8>, TaError> {
        let g = self.group();
        let shared = g.exp(pk_v, &self.sk);
        let padded = xor42(&fid.0, &mask_hash(g, &shared, PSEUDONYM_LEN));
        unpad_tid(&padded).ok_or(TaError::TraceFailed)
    }

    /// Writes `registry.json` (public material) and `keystore.json` (secrets).
    pub fn save(&self, dir: &Path, keystore: &Keystore) -> Result<(), TaError> {
        fs::create_dir_all(dir)?;
        let reg = RegistryFile {
            params: self.params.clone(),
            records: self.registry.values().cloned().collect(),
        };
        fs::write(dir.join(REGISTRY_FILE), serde_json::to_vec_pretty(&reg)?)?;
        fs::write(dir.join(KEYSTORE_FILE), serde_json::to_vec_pretty(keystore)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, Keystore), TaError> {
        let reg: RegistryFile = serde_json::from_slice(&fs::read(dir.join(REGISTRY_FILE))?)?;
        let keystore: Keystore = serde_json::from_slice(&fs::read(dir.join(KEYSTORE_FILE))?)?;
        let g = reg.params.group.clone();
        if g.g_pow(&keystore.ta_secret) != reg.params.pk_ta_g {
            return Err(TaError::ZeroSecret);
        }
        let ta = TaState {
            sk: keystore.ta_secret.clone(),
            params: reg.params,
            registry: reg
                .records
                .into_iter()
                .map(|r| (r.tid.clone(), r))
                .collect(),
        };
        Ok((ta, keystore))
    }
}

pub const REGISTRY_FILE: &str = "registry.json";
pub const KEYSTORE_FILE: &str = "keystore.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistryFile {
    pub params: SystemParams,
    pub records: Vec<RegistryRecord>,
}

/// Secret side of the registry: `ψ_TA` and every issued credential.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Keystore {
    pub ta_secret: Scalar,
    pub credentials: Vec<NodeCredentials>,
}

/// Draws `α ∈ Z_q^*` and forms `PK_V = g^α`, `FID = pad(TID) ⊕ Hmask(PK_TA^α)`.
pub fn refresh_vehicle_epoch<R: RngCore + ?Sized>(
    creds: &NodeCredentials,
    params: &SystemParams,
    rng: &mut R,
) -> Result<VehicleEpoch, TaError> {
    let alpha = params.group.random_nonzero_scalar(rng);
    vehicle_epoch_with_alpha(creds, params, alpha)
}

pub fn vehicle_epoch_with_alpha(
    creds: &NodeCredentials,
    params: &SystemParams,
    alpha: Scalar,
) -> Result<VehicleEpoch, TaError> {
    let g = &params.group;
    let padded = pad_tid(&creds.tid)?;
    let shared = g.exp(&params.pk_ta_g, &alpha);
    let fid = Pseudonym(xor42(&padded, &mask_hash(g, &shared, PSEUDONYM_LEN)));
    Ok(VehicleEpoch {
        pk: g.g_pow(&alpha),
        alpha,
        fid,
    })
}
