//! Two-round deniable group key agreement among RSUs.
//!
//! Members sit on a ring ordered by TID. Round 1 broadcasts `X = g^x`,
//! `R = g^r`, `T = g^t`. Round 2 broadcasts `Y_i = Y_i^R / Y_i^L` with
//! `Y_i^L = X_{i-1}^{x_i}` and `Y_i^R = X_{i+1}^{x_i}`, a Schnorr-style
//! response `s_i = r_i − v_i·ξ_i`, and pairwise tokens `T_{i,j} = T_j^{r_i}`.
//! Each member then walks the ring from its own `Y^R`, recovering every
//! neighbour product `Ŷ_k^R = g^{x_k x_{k+1}}`, and multiplies them into
//! `sk = g^{x_1x_2 + x_2x_3 + … + x_nx_1}`.

use std::collections::BTreeMap;

use rand::RngCore;
use thiserror::Error;

use crate::codec::{Round1Msg, Round2Msg, WireMessage};
use crate::crypto::{hash_to_scalar, schnorr, GElem, Group, Scalar, Signature};
use crate::ta::display_tid;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GkaError {
    #[error("a ring needs at least two members, got {0}")]
    RosterTooSmall(usize),
    #[error("roster lists {0} twice")]
    DuplicateRosterEntry(String),
    #[error("{0} is not on the roster")]
    UnknownMember(String),
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("no message from {0}")]
    MissingMessage(String),
    #[error("two messages from {0}")]
    DuplicateMessage(String),
    #[error("signature from {0} does not verify")]
    BadSignature(String),
    #[error("message from {0} carries a different round-1 view than ours")]
    Inconsistent(String),
    #[error("{0} sent the wrong number of tokens")]
    MalformedTokens(String),
    #[error("token from {from} to {to} does not match R^t")]
    TokenMismatch { from: String, to: String },
    #[error("Y chain does not close")]
    ChainBreak,
    #[error("Schnorr check failed for {0}")]
    SchnorrFail(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Round1Done,
    Round2Done,
    Keyed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RosterEntry {
    pub tid: Vec<u8>,
    pub pk: GElem,
}

/// Ring order and `pid`, fixed before round 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roster {
    entries: Vec<RosterEntry>,
    pid: Scalar,
}

impl Roster {
    /// Sorts entries lexicographically by TID and computes `pid = h(TID_1 ‖ … ‖ TID_n)`.
    pub fn new(group: &Group, mut entries: Vec<RosterEntry>) -> Result<Self, GkaError> {
        if entries.len() < 2 {
            return Err(GkaError::RosterTooSmall(entries.len()));
        }
        entries.sort_by(|a, b| a.tid.cmp(&b.tid));
        if let Some(w) = entries.windows(2).find(|w| w[0].tid == w[1].tid) {
            return Err(GkaError::DuplicateRosterEntry(display_tid(&w[0].tid)));
        }
        let concat: Vec<u8> = entries.iter().flat_map(|e| e.tid.iter().copied()).collect();
        let pid = hash_to_scalar(group, &concat);
        Ok(Roster { entries, pid })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn pid(&self) -> &Scalar {
        &self.pid
    }

    pub fn index_of(&self, tid: &[u8]) -> Option<usize> {
        self.entries.binary_search_by(|e| e.tid.as_slice().cmp(tid)).ok()
    }

    fn prev(&self, i: usize) -> usize {
        (i + self.len() - 1) % self.len()
    }

    fn next(&self, i: usize) -> usize {
        (i + 1) % self.len()
    }
}

#[derive(Clone)]
struct Ephemerals {
    x: Scalar,
    r: Scalar,
    t: Scalar,
}

#[derive(Clone, Debug)]
struct Commitments {
    x: GElem,
    r: GElem,
    t: GElem,
}

#[derive(Clone, Debug)]
struct RingValues {
    y_left: GElem,
    y_right: GElem,
}

/// One RSU's view of an agreement run.
pub struct GkaSession {
    roster: Roster,
    me: usize,
    long_term: Scalar,
    eph: Option<Ephemerals>,
    commitments: Vec<Commitments>,
    ring: Option<RingValues>,
    own_s: Option<Scalar>,
    phase: Phase,
    key: Option<GElem>,
}

fn sign_message(group: &Group, msg: &mut WireMessage, sk: &Scalar, rng: &mut (impl RngCore + ?Sized)) {
    let sig = schnorr::sign(group, sk, &msg.authenticated_prefix(group), rng);
    match msg {
        WireMessage::GkaRound1(m) => m.sig = sig,
        WireMessage::GkaRound2(m) => m.sig = sig,
        _ => unreachable!("only agreement messages are signed here"),
    }
}

fn placeholder_sig(group: &Group) -> Signature {
    Signature {
        challenge: group.scalar_u64(0),
        response: group.scalar_u64(0),
    }
}

impl Round1Msg {
    pub fn signed(
        group: &Group,
        tid: Vec<u8>,
        x: GElem,
        r: GElem,
        t: GElem,
        sk: &Scalar,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        let mut msg = WireMessage::GkaRound1(Round1Msg {
            tid,
            x,
            r,
            t,
            sig: placeholder_sig(group),
        });
        sign_message(group, &mut msg, sk, rng);
        match msg {
            WireMessage::GkaRound1(m) => m,
            _ => unreachable!(),
        }
    }

    pub fn verify(&self, group: &Group, pk: &GElem) -> bool {
        let msg = WireMessage::GkaRound1(self.clone());
        schnorr::verify(group, pk, &msg.authenticated_prefix(group), &self.sig)
    }
}

impl Round2Msg {
    /// Builds and signs a round-2 message from arbitrary values.
    pub fn signed(
        group: &Group,
        tid: Vec<u8>,
        y: GElem,
        s: Scalar,
        tokens: Vec<GElem>,
        sk: &Scalar,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        let mut msg = WireMessage::GkaRound2(Round2Msg {
            tid,
            y,
            s,
            tokens,
            sig: placeholder_sig(group),
        });
        sign_message(group, &mut msg, sk, rng);
        match msg {
            WireMessage::GkaRound2(m) => m,
            _ => unreachable!(),
        }
    }

    pub fn verify(&self, group: &Group, pk: &GElem) -> bool {
        let msg = WireMessage::GkaRound2(self.clone());
        schnorr::verify(group, pk, &msg.authenticated_prefix(group), &self.sig)
    }
}

/// `v = h(left ‖ right ‖ X_1 ‖ … ‖ X_n ‖ pid)`.
fn ring_challenge(group: &Group, left: &GElem, right: &GElem, xs: &[&GElem], pid: &Scalar) -> Scalar {
    let mut buf = group.elem_bytes(left);
    buf.extend(group.elem_bytes(right));
    for x in xs {
        buf.extend(group.elem_bytes(x));
    }
    buf.extend(group.scalar_bytes(pid));
    hash_to_scalar(group, &buf)
}

/// Picks exactly one message per roster member other than `me`.
fn index_by_sender<'m, M>(
    roster: &Roster,
    me: usize,
    msgs: &'m [M],
    tid_of: impl Fn(&M) -> &[u8],
) -> Result<Vec<Option<&'m M>>, GkaError> {
    let mut slots: Vec<Option<&M>> = vec![None; roster.len()];
    for m in msgs {
        let tid = tid_of(m);
        let idx = roster
            .index_of(tid)
            .ok_or_else(|| GkaError::UnknownMember(display_tid(tid)))?;
        if idx == me {
            continue;
        }
        if slots[idx].is_some() {
            return Err(GkaError::DuplicateMessage(display_tid(tid)));
        }
        slots[idx] = Some(m);
    }
    for (idx, slot) in slots.iter().enumerate() {
        if idx != me && slot.is_none() {
            return Err(GkaError::MissingMessage(display_tid(&roster.entries[idx].tid)));
        }
    }
    Ok(slots)
}

impl GkaSession {
    pub fn new(roster: Roster, self_tid: &[u8], long_term_sk: Scalar) -> Result<Self, GkaError> {
        let me = roster
            .index_of(self_tid)
            .ok_or_else(|| GkaError::UnknownMember(display_tid(self_tid)))?;
        Ok(GkaSession {
            roster,
            me,
            long_term: long_term_sk,
            eph: None,
            commitments: Vec::new(),
            ring: None,
            own_s: None,
            phase: Phase::Init,
            key: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn key(&self) -> Option<&GElem> {
        self.key.as_ref()
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn self_index(&self) -> usize {
        self.me
    }

    fn tid(&self) -> Vec<u8> {
        self.roster.entries[self.me].tid.clone()
    }

    pub fn round1<R: RngCore + ?Sized>(&mut self, group: &Group, rng: &mut R) -> Result<Round1Msg, GkaError> {
        let x = group.random_scalar(rng);
        let r = group.random_scalar(rng);
        let t = group.random_scalar(rng);
        self.round1_with(group, x, r, t, rng)
    }

    /// Round 1 with caller-chosen ephemerals.
    pub fn round1_with<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        x: Scalar,
        r: Scalar,
        t: Scalar,
        rng: &mut R,
    ) -> Result<Round1Msg, GkaError> {
        if self.phase != Phase::Init {
            return Err(GkaError::WrongPhase(self.phase));
        }
        let msg = Round1Msg::signed(
            group,
            self.tid(),
            group.g_pow(&x),
            group.g_pow(&r),
            group.g_pow(&t),
            &self.long_term,
            rng,
        );
        self.eph = Some(Ephemerals { x, r, t });
        self.phase = Phase::Round1Done;
        Ok(msg)
    }

    /// Consumes every member's `M¹` (our own may be included) and emits `M²`.
    pub fn round2<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        msgs: &[Round1Msg],
        rng: &mut R,
    ) -> Result<Round2Msg, GkaError> {
        if self.phase != Phase::Round1Done {
            return Err(GkaError::WrongPhase(self.phase));
        }
        let eph = self.eph.clone().expect("ephemerals set in round 1");
        let slots = index_by_sender(&self.roster, self.me, msgs, |m| &m.tid)?;
        let mut commitments = Vec::with_capacity(self.roster.len());
        for (idx, slot) in slots.into_iter().enumerate() {
            let c = match slot {
                None => Commitments {
                    x: group.g_pow(&eph.x),
                    r: group.g_pow(&eph.r),
                    t: group.g_pow(&eph.t),
                },
                Some(m) => {
                    if !m.verify(group, &self.roster.entries[idx].pk) {
                        return Err(GkaError::BadSignature(display_tid(&m.tid)));
                    }
                    Commitments {
                        x: m.x.clone(),
                        r: m.r.clone(),
                        t: m.t.clone(),
                    }
                }
            };
            commitments.push(c);
        }

        let me = self.me;
        let y_left = group.exp(&commitments[self.roster.prev(me)].x, &eph.x);
        let y_right = group.exp(&commitments[self.roster.next(me)].x, &eph.x);
        let y = group.div(&y_right, &y_left);
        let xs: Vec<&GElem> = commitments.iter().map(|c| &c.x).collect();
        let v = ring_challenge(group, &y_left, &y_right, &xs, self.roster.pid());
        let s = group.scalar_sub(&eph.r, &group.scalar_mul(&v, &self.long_term));
        let tokens = commitments
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != me)
            .map(|(_, c)| group.exp(&c.t, &eph.r))
            .collect();

        let msg = Round2Msg::signed(group, self.tid(), y, s.clone(), tokens, &self.long_term, rng);
        self.commitments = commitments;
        self.ring = Some(RingValues { y_left, y_right });
        self.own_s = Some(s);
        self.phase = Phase::Round2Done;
        Ok(msg)
    }

    /// Verifies tokens, the ring chain and every Schnorr relation, then derives `sk`.
    pub fn finalize(&mut self, group: &Group, msgs: &[Round2Msg]) -> Result<GElem, GkaError> {
        if self.phase != Phase::Round2Done {
            return Err(GkaError::WrongPhase(self.phase));
        }
        let n = self.roster.len();
        let me = self.me;
        let eph = self.eph.as_ref().expect("ephemerals");
        let ring = self.ring.as_ref().expect("ring values");
        let slots = index_by_sender(&self.roster, me, msgs, |m| &m.tid)?;

        for (i, slot) in slots.iter().enumerate() {
            let Some(m) = slot else { continue };
            if !m.verify(group, &self.roster.entries[i].pk) {
                return Err(GkaError::BadSignature(display_tid(&m.tid)));
            }
            if m.tokens.len() != n - 1 {
                return Err(GkaError::MalformedTokens(display_tid(&m.tid)));
            }
        }

        // Tokens addressed to us: T_{i,me} = R_i^{t_me}.
        for (i, slot) in slots.iter().enumerate() {
            let Some(m) = slot else { continue };
            let pos = if me < i { me } else { me - 1 };
            if m.tokens[pos] != group.exp(&self.commitments[i].r, &eph.t) {
                return Err(GkaError::TokenMismatch {
                    from: display_tid(&m.tid),
                    to: display_tid(&self.roster.entries[me].tid),
                });
            }
        }

        // Ŷ_{k+1}^R = Y_{k+1} · Ŷ_k^R starting from our own Y^R.
        let mut y_hat: Vec<Option<GElem>> = vec![None; n];
        y_hat[me] = Some(ring.y_right.clone());
        let mut k = me;
        for _ in 1..n {
            let next = self.roster.next(k);
            let y_next = &slots[next].expect("every other member present").y;
            let v = group.mul(y_next, y_hat[k].as_ref().expect("filled"));
            y_hat[next] = Some(v);
            k = next;
        }
        let y_hat: Vec<GElem> = y_hat.into_iter().map(|v| v.expect("ring walked")).collect();
        if y_hat[self.roster.prev(me)] != ring.y_left {
            return Err(GkaError::ChainBreak);
        }

        let xs: Vec<&GElem> = self.commitments.iter().map(|c| &c.x).collect();
        for i in 0..n {
            let s_i = match slots[i] {
                Some(m) => &m.s,
                None => self.own_s.as_ref().expect("own response"),
            };
            let v_hat = ring_challenge(group, &y_hat[self.roster.prev(i)], &y_hat[i], &xs, self.roster.pid());
            let lhs = group.mul(&group.g_pow(s_i), &group.exp(&self.roster.entries[i].pk, &v_hat));
            if lhs != self.commitments[i].r {
                return Err(GkaError::SchnorrFail(display_tid(&self.roster.entries[i].tid)));
            }
        }

        let sk = group.product(&y_hat);
        self.key = Some(sk.clone());
        self.phase = Phase::Keyed;
        Ok(sk)
    }
}

/// Transcript and per-member keys of a full honest run.
#[derive(Clone, Debug)]
pub struct AgreementRun {
    pub keys: BTreeMap<Vec<u8>, GElem>,
    pub round1: Vec<Round1Msg>,
    pub round2: Vec<Round2Msg>,
}

/// Runs the whole protocol locally for `members = [(tid, ξ)]`.
pub fn run_agreement<R: RngCore + ?Sized>(
    group: &Group,
    members: &[(Vec<u8>, Scalar)],
    rng: &mut R,
) -> Result<AgreementRun, GkaError> {
    let roster = Roster::new(
        group,
        members
            .iter()
            .map(|(tid, sk)| RosterEntry {
                tid: tid.clone(),
                pk: group.g_pow(sk),
            })
            .collect(),
    )?;
    let mut sessions = members
        .iter()
        .map(|(tid, sk)| GkaSession::new(roster.clone(), tid, sk.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let round1 = sessions
        .iter_mut()
        .map(|s| s.round1(group, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let round2 = sessions
        .iter_mut()
        .map(|s| s.round2(group, &round1, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut keys = BTreeMap::new();
    for (s, (tid, _)) in sessions.iter_mut().zip(members) {
        keys.insert(tid.clone(), s.finalize(group, &round2)?);
    }
    Ok(AgreementRun { keys, round1, round2 })
}
