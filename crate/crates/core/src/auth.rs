//! Vehicle to RSU mutual authentication.
//!
//! The RSU proves itself with its TA-signed beacon. The vehicle answers with
//! a hello carrying its pseudonym twice: once under a group key it may hold
//! from a neighbouring RSU, once under the RSU's public key. A match lets the
//! RSU skip the pairing exchange. Otherwise a challenge/confirm round checks
//! that both sides derive
//!
//! `K = e(P, P)^{N_1 ψ (β Q_RSU + α Q_V)}`
//!
//! from their TA-issued `s = ψQ`.

use std::collections::{BTreeSet, HashMap};

use rand::RngCore;
use thiserror::Error;

use crate::codec::{FidSealedMsg, HelloMsg, PlainReader, SealedMsg, WireMessage};
use crate::crypto::sym::apply_keystream;
use crate::crypto::{
    kdf_elem, schnorr, sym_decrypt, sym_encrypt, ChannelKeys, G1Elem, GElem, Group, Scalar, SymKey,
};
use crate::params::SystemParams;
use crate::ta::{beacon_signing_bytes, Beacon, NodeCredentials, Pseudonym, VehicleEpoch, PSEUDONYM_LEN};

pub const DEFAULT_DELTA_MAX_MS: u64 = 500;

const CHANNEL_LABEL: &str = "v2r";
const ACCEPT_FULL: u8 = 0;
const ACCEPT_FAST: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("beacon signature does not verify under the TA key")]
    SigFail,
    #[error("beacon location hash does not match its location")]
    LocHashMismatch,
    #[error("timestamp is {age_ms} ms away from local time")]
    StaleTimestamp { age_ms: u64 },
    #[error("hello already seen")]
    Replay,
    #[error("MAC check failed")]
    MacFail,
    #[error("ciphertext does not decrypt to a well-formed payload")]
    DecryptFail,
    #[error("key confirmation failed")]
    KeyConfirmFail,
    #[error("message not accepted in state {0:?}")]
    WrongState(AuthState),
    #[error("no session for this pseudonym")]
    UnknownSession,
    #[error("credentials lack an RSU key pair")]
    NotAnRsu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthState {
    BeaconVerified,
    HelloSent,
    Challenged,
    Confirmed,
    FastPathDone,
    Failed,
}

impl AuthState {
    pub fn is_authenticated(self) -> bool {
        matches!(self, AuthState::Confirmed | AuthState::FastPathDone)
    }
}

/// Checks the TA signature and that `loc_hash = h'(Loc)`.
pub fn verify_beacon(params: &SystemParams, beacon: &Beacon) -> Result<(), AuthError> {
    let g = &params.group;
    let msg = beacon_signing_bytes(g, &beacon.pk_rsu, &beacon.loc, &beacon.loc_hash);
    if beacon.loc.hash(g) != beacon.loc_hash {
        return Err(AuthError::LocHashMismatch);
    }
    if !schnorr::verify(g, &params.pk_ta_g, &msg, &beacon.ta_sig) {
        return Err(AuthError::SigFail);
    }
    Ok(())
}

/// `K_V = e(β · N_1Q_RSU, ψP) · e(N_1 s_V, T_RSU)`.
pub fn vehicle_key(
    group: &Group,
    pk_ta_g1: &G1Elem,
    beta: &Scalar,
    n1_q_rsu: &G1Elem,
    n1: &Scalar,
    s_v: &G1Elem,
    t_rsu: &G1Elem,
) -> GElem {
    group.mul(
        &group.pair(&group.g1_mul(beta, n1_q_rsu), pk_ta_g1),
        &group.pair(&group.g1_mul(n1, s_v), t_rsu),
    )
}

/// `K_RSU = e(α · N_1Q_V, ψP) · e(N_1 s_RSU, T_V)`.
pub fn rsu_key(
    group: &Group,
    pk_ta_g1: &G1Elem,
    alpha: &Scalar,
    n1_q_v: &G1Elem,
    n1: &Scalar,
    s_rsu: &G1Elem,
    t_v: &G1Elem,
) -> GElem {
    group.mul(
        &group.pair(&group.g1_mul(alpha, n1_q_v), pk_ta_g1),
        &group.pair(&group.g1_mul(n1, s_rsu), t_v),
    )
}

/// Keys for the `E_{N_1}` channel shared after a hello.
pub fn channel_keys(group: &Group, n1: &Scalar) -> ChannelKeys {
    ChannelKeys::from_scalar(group, n1, CHANNEL_LABEL)
}

fn fast_key(group: &Group, gk: &GElem) -> SymKey {
    kdf_elem(group, gk, b"fast-fid")
}

fn fast_nonce(group: &Group, ts_ms: u64, pk_v: &GElem) -> Vec<u8> {
    let mut n = ts_ms.to_be_bytes().to_vec();
    n.extend(group.elem_bytes(pk_v));
    n
}

/// `E_GK(FID)`: keystream XOR with a nonce bound to `(TS, PK_V)`.
pub fn seal_fast_fid(group: &Group, gk: &GElem, ts_ms: u64, pk_v: &GElem, fid: &Pseudonym) -> [u8; PSEUDONYM_LEN] {
    let mut out = fid.0;
    apply_keystream(&fast_key(group, gk), &fast_nonce(group, ts_ms, pk_v), &mut out);
    out
}

fn kem_key(group: &Group, shared: &GElem) -> SymKey {
    kdf_elem(group, shared, b"meg2/kem")
}

fn mac_field(msg: WireMessage, group: &Group, key: &SymKey) -> WireMessage {
    let mut msg = msg;
    msg.authenticate(group, key);
    msg
}

/// Vehicle half of one vehicle/RSU session.
#[derive(Clone, Debug)]
pub struct VehicleAuth {
    params: SystemParams,
    pk_rsu: GElem,
    state: AuthState,
    fid: Option<Pseudonym>,
    n1: Option<Scalar>,
    ts_ms: u64,
    beta: Option<Scalar>,
    t_v: Option<G1Elem>,
    k_v: Option<GElem>,
    keys: Option<ChannelKeys>,
}

impl VehicleAuth {
    /// Starts a session from a beacon, rejecting it if it fails the checks.
    pub fn from_beacon(params: &SystemParams, beacon: &Beacon) -> Result<Self, AuthError> {
        verify_beacon(params, beacon)?;
        Ok(VehicleAuth {
            params: params.clone(),
            pk_rsu: beacon.pk_rsu.clone(),
            state: AuthState::BeaconVerified,
            fid: None,
            n1: None,
            ts_ms: 0,
            beta: None,
            t_v: None,
            k_v: None,
            keys: None,
        })
    }

    pub fn state(&self) -> AuthState {
        self.state
    }

    pub fn n1(&self) -> Option<&Scalar> {
        self.n1.as_ref()
    }

    pub fn channel(&self) -> Option<&ChannelKeys> {
        self.keys.as_ref()
    }

    pub fn fid(&self) -> Option<&Pseudonym> {
        self.fid.as_ref()
    }

    pub fn k_v(&self) -> Option<&GElem> {
        self.k_v.as_ref()
    }

    pub fn pk_rsu(&self) -> &GElem {
        &self.pk_rsu
    }

    /// Builds Meg2. Without a neighbour key the fast field is random filler.
    pub fn hello<R: RngCore + ?Sized>(
        &mut self,
        epoch: &VehicleEpoch,
        neighbor_gk: Option<&GElem>,
        now_ms: u64,
        rng: &mut R,
    ) -> Result<WireMessage, AuthError> {
        if self.state != AuthState::BeaconVerified {
            return Err(AuthError::WrongState(self.state));
        }
        let g = self.params.group.clone();
        let n1 = g.random_nonzero_scalar(rng);
        let fast_fid = match neighbor_gk {
            Some(gk) => seal_fast_fid(&g, gk, now_ms, &epoch.pk, &epoch.fid),
            None => {
                let mut filler = [0u8; PSEUDONYM_LEN];
                rng.fill_bytes(&mut filler);
                filler
            }
        };
        let u = g.random_nonzero_scalar(rng);
        let shared = g.exp(&self.pk_rsu, &u);
        let mut payload = epoch.fid.0.to_vec();
        payload.extend(g.scalar_bytes(&n1));
        let sealed = sym_encrypt(&kem_key(&g, &shared), &payload, rng);
        let keys = channel_keys(&g, &n1);
        let msg = mac_field(
            WireMessage::Hello(HelloMsg {
                pk_v: epoch.pk.clone(),
                ts_ms: now_ms,
                fast_fid,
                kem_u: g.g_pow(&u),
                sealed,
                mac: [0; 16],
            }),
            &g,
            &keys.mac,
        );
        self.fid = Some(epoch.fid);
        self.n1 = Some(n1);
        self.ts_ms = now_ms;
        self.keys = Some(keys);
        self.state = AuthState::HelloSent;
        Ok(msg)
    }

    /// Answers Meg3 with Meg4.
    pub fn confirm<R: RngCore + ?Sized>(
        &mut self,
        creds: &NodeCredentials,
        meg3: &SealedMsg,
        rng: &mut R,
    ) -> Result<WireMessage, AuthError> {
        if self.state != AuthState::HelloSent {
            return Err(AuthError::WrongState(self.state));
        }
        let g = self.params.group.clone();
        let keys = self.keys.clone().expect("set with hello");
        let n1 = self.n1.clone().expect("set with hello");
        let fid = self.fid.expect("set with hello");
        if !WireMessage::Challenge(meg3.clone()).verify_mac(&g, &keys.mac) {
            return Err(AuthError::MacFail);
        }
        let plain = sym_decrypt(&keys.enc, &meg3.sealed).map_err(|_| AuthError::DecryptFail)?;
        let mut r = PlainReader::new(&g, &plain);
        let (t_rsu, n1_q_rsu) = (|| Ok::<_, crate::codec::CodecError>((r.g1()?, r.g1()?)))()
            .map_err(|_| AuthError::DecryptFail)?;
        r.finish().map_err(|_| AuthError::DecryptFail)?;

        let beta = g.random_nonzero_scalar(rng);
        let t_v = g.g1_base_mul(&beta);
        let k_v = vehicle_key(&g, &self.params.pk_ta_g1, &beta, &n1_q_rsu, &n1, &creds.s_u, &t_rsu);
        let mut payload = fid.0.to_vec();
        payload.extend(g.g1_bytes(&t_v));
        payload.extend(g.g1_bytes(&g.g1_mul(&n1, &creds.q_u)));
        payload.extend(g.elem_bytes(&k_v));
        let msg = mac_field(
            WireMessage::Confirm(FidSealedMsg {
                fid,
                sealed: sym_encrypt(&keys.enc, &payload, rng),
                mac: [0; 16],
            }),
            &g,
            &keys.mac,
        );
        self.beta = Some(beta);
        self.t_v = Some(t_v);
        self.k_v = Some(k_v);
        self.state = AuthState::Challenged;
        Ok(msg)
    }

    /// Handles the RSU's acceptance notice, ending the handshake.
    pub fn accept(&mut self, msg: &FidSealedMsg) -> Result<AuthState, AuthError> {
        if !matches!(self.state, AuthState::HelloSent | AuthState::Challenged) {
            return Err(AuthError::WrongState(self.state));
        }
        let g = &self.params.group;
        let keys = self.keys.as_ref().expect("set with hello");
        if Some(msg.fid) != self.fid || !WireMessage::AuthAccept(msg.clone()).verify_mac(g, &keys.mac) {
            return Err(AuthError::MacFail);
        }
        let plain = sym_decrypt(&keys.enc, &msg.sealed).map_err(|_| AuthError::DecryptFail)?;
        let next = match (plain.as_slice(), self.state) {
            ([ACCEPT_FAST], AuthState::HelloSent) => AuthState::FastPathDone,
            ([ACCEPT_FULL], AuthState::Challenged) => AuthState::Confirmed,
            ([ACCEPT_FAST | ACCEPT_FULL], s) => return Err(AuthError::WrongState(s)),
            _ => return Err(AuthError::DecryptFail),
        };
        self.state = next;
        Ok(next)
    }
}

/// RSU-side state for one vehicle.
#[derive(Clone, Debug)]
pub struct RsuSession {
    state: AuthState,
    n1: Scalar,
    pk_v: GElem,
    alpha: Option<Scalar>,
    keys: ChannelKeys,
}

impl RsuSession {
    pub fn state(&self) -> AuthState {
        self.state
    }

    pub fn n1(&self) -> &Scalar {
        &self.n1
    }

    pub fn pk_v(&self) -> &GElem {
        &self.pk_v
    }

    pub fn alpha(&self) -> Option<&Scalar> {
        self.alpha.as_ref()
    }

    pub fn channel(&self) -> &ChannelKeys {
        &self.keys
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HelloOutcome {
    /// The neighbour-key field matched: the reply is an acceptance notice.
    FastPath { fid: Pseudonym, reply: WireMessage },
    /// Full handshake: the reply is Meg3.
    Challenge { fid: Pseudonym, reply: WireMessage },
}

impl HelloOutcome {
    pub fn fid(&self) -> &Pseudonym {
        match self {
            HelloOutcome::FastPath { fid, .. } | HelloOutcome::Challenge { fid, .. } => fid,
        }
    }

    pub fn reply(&self) -> &WireMessage {
        match self {
            HelloOutcome::FastPath { reply, .. } | HelloOutcome::Challenge { reply, .. } => reply,
        }
    }
}

/// RSU half: every vehicle session it is currently handling, keyed by FID.
#[derive(Clone, Debug)]
pub struct RsuAuth {
    params: SystemParams,
    creds: NodeCredentials,
    sk: Scalar,
    delta_max_ms: u64,
    sessions: HashMap<Pseudonym, RsuSession>,
    seen: BTreeSet<(u64, Pseudonym)>,
}

impl RsuAuth {
    pub fn new(params: SystemParams, creds: NodeCredentials, delta_max_ms: u64) -> Result<Self, AuthError> {
        let sk = creds.keypair.as_ref().ok_or(AuthError::NotAnRsu)?.sk.clone();
        Ok(RsuAuth {
            params,
            creds,
            sk,
            delta_max_ms,
            sessions: HashMap::new(),
            seen: BTreeSet::new(),
        })
    }

    pub fn delta_max_ms(&self) -> u64 {
        self.delta_max_ms
    }

    pub fn session(&self, fid: &Pseudonym) -> Option<&RsuSession> {
        self.sessions.get(fid)
    }

    pub fn remove(&mut self, fid: &Pseudonym) -> Option<RsuSession> {
        self.sessions.remove(fid)
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&Pseudonym, &RsuSession)> {
        self.sessions.iter()
    }

    /// Handles Meg2. `neighbor_gks` are the group keys received from adjacent RSUs.
    pub fn process_hello<'a, R: RngCore + ?Sized>(
        &mut self,
        hello: &HelloMsg,
        now_ms: u64,
        neighbor_gks: impl IntoIterator<Item = &'a GElem>,
        rng: &mut R,
    ) -> Result<HelloOutcome, AuthError> {
        let g = self.params.group.clone();
        let age_ms = now_ms.abs_diff(hello.ts_ms);
        if age_ms > self.delta_max_ms {
            return Err(AuthError::StaleTimestamp { age_ms });
        }

        let shared = g.exp(&hello.kem_u, &self.sk);
        let plain = sym_decrypt(&kem_key(&g, &shared), &hello.sealed).map_err(|_| AuthError::DecryptFail)?;
        let mut r = PlainReader::new(&g, &plain);
        let (fid, n1) = (|| Ok::<_, crate::codec::CodecError>((r.fid()?, r.scalar()?)))()
            .map_err(|_| AuthError::DecryptFail)?;
        r.finish().map_err(|_| AuthError::DecryptFail)?;
        if n1 == g.scalar_u64(0) {
            return Err(AuthError::DecryptFail);
        }
        let keys = channel_keys(&g, &n1);
        if !WireMessage::Hello(hello.clone()).verify_mac(&g, &keys.mac) {
            return Err(AuthError::MacFail);
        }

        let horizon = now_ms.saturating_sub(self.delta_max_ms);
        self.seen = self.seen.split_off(&(horizon.saturating_sub(self.delta_max_ms), Pseudonym([0; PSEUDONYM_LEN])));
        if !self.seen.insert((hello.ts_ms, fid)) {
            return Err(AuthError::Replay);
        }

        let fast = neighbor_gks
            .into_iter()
            .any(|gk| seal_fast_fid(&g, gk, hello.ts_ms, &hello.pk_v, &fid) == hello.fast_fid);
        if fast {
            let reply = self.accept_notice(&g, &keys, fid, ACCEPT_FAST, rng);
            self.sessions.insert(
                fid,
                RsuSession {
                    state: AuthState::FastPathDone,
                    n1,
                    pk_v: hello.pk_v.clone(),
                    alpha: None,
                    keys,
                },
            );
            return Ok(HelloOutcome::FastPath { fid, reply });
        }

        let alpha = g.random_nonzero_scalar(rng);
        let mut payload = g.g1_bytes(&g.g1_base_mul(&alpha));
        payload.extend(g.g1_bytes(&g.g1_mul(&n1, &self.creds.q_u)));
        let reply = mac_field(
            WireMessage::Challenge(SealedMsg {
                sealed: sym_encrypt(&keys.enc, &payload, rng),
                mac: [0; 16],
            }),
            &g,
            &keys.mac,
        );
        self.sessions.insert(
            fid,
            RsuSession {
                state: AuthState::Challenged,
                n1,
                pk_v: hello.pk_v.clone(),
                alpha: Some(alpha),
                keys,
            },
        );
        Ok(HelloOutcome::Challenge { fid, reply })
    }

    /// Handles Meg4 and, on success, returns the acceptance notice.
    pub fn process_confirm<R: RngCore + ?Sized>(
        &mut self,
        meg4: &FidSealedMsg,
        rng: &mut R,
    ) -> Result<WireMessage, AuthError> {
        let g = self.params.group.clone();
        let session = self.sessions.get_mut(&meg4.fid).ok_or(AuthError::UnknownSession)?;
        if session.state != AuthState::Challenged {
            return Err(AuthError::WrongState(session.state));
        }
        if !WireMessage::Confirm(meg4.clone()).verify_mac(&g, &session.keys.mac) {
            return Err(AuthError::MacFail);
        }
        let plain = sym_decrypt(&session.keys.enc, &meg4.sealed).map_err(|_| AuthError::DecryptFail)?;
        let mut r = PlainReader::new(&g, &plain);
        let (fid, t_v, n1_q_v, k_v) =
            (|| Ok::<_, crate::codec::CodecError>((r.fid()?, r.g1()?, r.g1()?, r.elem()?)))()
                .map_err(|_| AuthError::DecryptFail)?;
        r.finish().map_err(|_| AuthError::DecryptFail)?;
        if fid != meg4.fid {
            return Err(AuthError::DecryptFail);
        }
        let alpha = session.alpha.as_ref().expect("challenged sessions carry alpha");
        let k_rsu = rsu_key(&g, &self.params.pk_ta_g1, alpha, &n1_q_v, &session.n1, &self.creds.s_u, &t_v);
        if k_rsu != k_v {
            session.state = AuthState::Failed;
            return Err(AuthError::KeyConfirmFail);
        }
        session.state = AuthState::Confirmed;
        let keys = session.keys.clone();
        Ok(self.accept_notice(&g, &keys, fid, ACCEPT_FULL, rng))
    }

    fn accept_notice<R: RngCore + ?Sized>(
        &self,
        g: &Group,
        keys: &ChannelKeys,
        fid: Pseudonym,
        kind: u8,
        rng: &mut R,
    ) -> WireMessage {
        mac_field(
            WireMessage::AuthAccept(FidSealedMsg {
                fid,
                sealed: sym_encrypt(&keys.enc, &[kind], rng),
                mac: [0; 16],
            }),
            g,
            &keys.mac,
        )
    }
}
