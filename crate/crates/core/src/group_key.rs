//! Per-RSU vehicle group key.
//!
//! Each member contributes `g^λ`. On every membership change the RSU draws a
//! fresh `γ`, blinds every share to `g^{λγ}` and sets
//! `GK = g^γ · Π g^{λ_i γ}`. A member recovers `g^γ` from its own blinded share
//! with `λ^{-1}` and multiplies in the product.
//!
//! Joins deliver the new key to existing members encrypted under the previous
//! one, so a joiner never sees older keys. Leaves broadcast the remaining
//! blinded shares under the old key; the leaver cannot unblind any of them.

use std::collections::BTreeMap;

use rand::RngCore;
use thiserror::Error;

use crate::auth::VehicleAuth;
use crate::codec::{EpochSealedMsg, FidSealedMsg, GkTransferMsg, PlainReader, WireMessage};
use crate::crypto::{sym_decrypt, sym_encrypt, ChannelKeys, GElem, Group, Scalar};
use crate::ta::Pseudonym;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupKeyError {
    #[error("group has no members")]
    EmptyGroup,
    #[error("pseudonym is not a group member")]
    UnknownFid,
    #[error("pseudonym is already a group member")]
    DuplicateFid,
    #[error("MAC check failed")]
    MacFail,
    #[error("ciphertext does not decrypt to a well-formed payload")]
    DecryptFail,
    #[error("own pseudonym absent from the leave broadcast")]
    FidAbsent,
    #[error("vehicle has not completed authentication")]
    Unauthenticated,
    #[error("no group key established")]
    NoKey,
    #[error("message is for epoch {got}, expected {expected}")]
    EpochMismatch { expected: u64, got: u64 },
}

/// Channel keys derived from a group key.
pub fn gk_keys(group: &Group, gk: &GElem) -> ChannelKeys {
    ChannelKeys::from_elem(group, gk, "gk")
}

/// Channel keys for RSU to RSU transfer under the agreed `sk`.
pub fn transfer_keys(group: &Group, sk: &GElem) -> ChannelKeys {
    ChannelKeys::from_elem(group, sk, "rsu-sk")
}

/// `gk = blinded^{λ^{-1}} · product`.
pub fn derive_gk(group: &Group, lambda: &Scalar, blinded: &GElem, product: &GElem) -> GElem {
    let inv = group.scalar_inv(lambda).expect("λ is drawn from Z_q^*");
    group.mul(&group.exp(blinded, &inv), product)
}

fn parse<'a, T>(
    group: &Group,
    plain: &'a [u8],
    f: impl FnOnce(&mut PlainReader<'a, '_>) -> Result<T, crate::codec::CodecError>,
) -> Result<T, GroupKeyError> {
    let mut r = PlainReader::new(group, plain);
    let v = f(&mut r).map_err(|_| GroupKeyError::DecryptFail)?;
    r.finish().map_err(|_| GroupKeyError::DecryptFail)?;
    Ok(v)
}

fn sealed<R: RngCore + ?Sized>(
    group: &Group,
    keys: &ChannelKeys,
    mut msg: WireMessage,
    plain: &[u8],
    rng: &mut R,
) -> WireMessage {
    let ct = sym_encrypt(&keys.enc, plain, rng);
    match &mut msg {
        WireMessage::Pag1(m) | WireMessage::Pag2(m) => m.sealed = ct,
        WireMessage::Pag3(m) | WireMessage::Bm1(m) => m.sealed = ct,
        WireMessage::GkTransfer(m) => m.sealed = ct,
        _ => unreachable!("not a group-key message"),
    }
    msg.authenticate(group, &keys.mac);
    msg
}

#[derive(Clone, Debug)]
struct MemberRecord {
    share: GElem,
    blinded: GElem,
    keys: ChannelKeys,
}

/// What a rekey sends out.
#[derive(Clone, Debug)]
pub struct RekeyOutput {
    pub epoch: u64,
    pub gk: GElem,
    /// One Pag2 per current member, under that member's `E_{N_1}` channel.
    pub pag2: Vec<(Pseudonym, WireMessage)>,
    /// The new key under the previous one; MAC under the new one.
    pub pag3: WireMessage,
}

impl RekeyOutput {
    pub fn pag2_for(&self, fid: &Pseudonym) -> Option<&WireMessage> {
        self.pag2.iter().find(|(f, _)| f == fid).map(|(_, m)| m)
    }
}

#[derive(Clone, Debug)]
pub struct LeaveOutput {
    pub epoch: u64,
    pub gk: Option<GElem>,
    /// Absent when the group became empty.
    pub bm1: Option<WireMessage>,
}

/// RSU-side group.
#[derive(Clone, Debug, Default)]
pub struct GroupState {
    epoch: u64,
    gamma: Option<Scalar>,
    members: BTreeMap<Pseudonym, MemberRecord>,
    gk: Option<GElem>,
    prev_gk: Option<GElem>,
}

impl GroupState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn gk(&self) -> Option<&GElem> {
        self.gk.as_ref()
    }

    pub fn prev_gk(&self) -> Option<&GElem> {
        self.prev_gk.as_ref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, fid: &Pseudonym) -> bool {
        self.members.contains_key(fid)
    }

    pub fn members(&self) -> impl Iterator<Item = &Pseudonym> {
        self.members.keys()
    }

    pub fn blinded(&self, fid: &Pseudonym) -> Option<&GElem> {
        self.members.get(fid).map(|m| &m.blinded)
    }

    /// Checks and opens a Pag1, returning `g^λ`.
    pub fn open_offer(group: &Group, pag1: &FidSealedMsg, keys: &ChannelKeys) -> Result<GElem, GroupKeyError> {
        if !WireMessage::Pag1(pag1.clone()).verify_mac(group, &keys.mac) {
            return Err(GroupKeyError::MacFail);
        }
        let plain = sym_decrypt(&keys.enc, &pag1.sealed).map_err(|_| GroupKeyError::DecryptFail)?;
        parse(group, &plain, |r| r.elem())
    }

    /// Adds an authenticated vehicle and rekeys.
    pub fn handle_join<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        pag1: &FidSealedMsg,
        keys: &ChannelKeys,
        rng: &mut R,
    ) -> Result<RekeyOutput, GroupKeyError> {
        if self.members.contains_key(&pag1.fid) {
            return Err(GroupKeyError::DuplicateFid);
        }
        let share = Self::open_offer(group, pag1, keys)?;
        self.members.insert(
            pag1.fid,
            MemberRecord {
                blinded: share.clone(),
                share,
                keys: keys.clone(),
            },
        );
        self.rekey(group, rng)
    }

    pub fn rekey<R: RngCore + ?Sized>(&mut self, group: &Group, rng: &mut R) -> Result<RekeyOutput, GroupKeyError> {
        let gamma = group.random_nonzero_scalar(rng);
        self.rekey_with_gamma(group, gamma, rng)
    }

    /// Rekey with a caller-chosen `γ ∈ Z_q^*`.
    pub fn rekey_with_gamma<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        gamma: Scalar,
        rng: &mut R,
    ) -> Result<RekeyOutput, GroupKeyError> {
        if self.members.is_empty() {
            return Err(GroupKeyError::EmptyGroup);
        }
        let product = self.blind_all(group, &gamma);
        let gk = group.mul(&group.g_pow(&gamma), &product);
        let old = self.install(gk.clone(), gamma);
        let epoch = self.epoch;

        let pag2 = self
            .members
            .iter()
            .map(|(fid, m)| {
                let mut plain = epoch.to_be_bytes().to_vec();
                plain.extend(group.elem_bytes(&m.blinded));
                plain.extend(group.elem_bytes(&product));
                let msg = WireMessage::Pag2(FidSealedMsg {
                    fid: *fid,
                    sealed: Vec::new(),
                    mac: [0; 16],
                });
                (*fid, sealed(group, &m.keys, msg, &plain, rng))
            })
            .collect();

        let enc_key = gk_keys(group, old.as_ref().unwrap_or(&gk)).enc;
        let mac_key = gk_keys(group, &gk).mac;
        let mut pag3 = WireMessage::Pag3(EpochSealedMsg {
            epoch,
            sealed: sym_encrypt(&enc_key, &group.elem_bytes(&gk), rng),
            mac: [0; 16],
        });
        pag3.authenticate(group, &mac_key);
        Ok(RekeyOutput { epoch, gk, pag2, pag3 })
    }

    /// Removes a member and broadcasts the remaining blinded shares under the old key.
    pub fn handle_leave<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        fid: &Pseudonym,
        rng: &mut R,
    ) -> Result<LeaveOutput, GroupKeyError> {
        let gamma = group.random_nonzero_scalar(rng);
        self.handle_leave_with_gamma(group, fid, gamma, rng)
    }

    pub fn handle_leave_with_gamma<R: RngCore + ?Sized>(
        &mut self,
        group: &Group,
        fid: &Pseudonym,
        gamma: Scalar,
        rng: &mut R,
    ) -> Result<LeaveOutput, GroupKeyError> {
        if self.members.remove(fid).is_none() {
            return Err(GroupKeyError::UnknownFid);
        }
        if self.members.is_empty() {
            self.prev_gk = self.gk.take();
            self.gamma = None;
            self.epoch += 1;
            return Ok(LeaveOutput {
                epoch: self.epoch,
                gk: None,
                bm1: None,
            });
        }
        let product = self.blind_all(group, &gamma);
        let gk = group.mul(&group.g_pow(&gamma), &product);
        let old = self.install(gk.clone(), gamma);
        let epoch = self.epoch;

        let mut plain = epoch.to_be_bytes().to_vec();
        plain.extend((self.members.len() as u32).to_be_bytes());
        for (f, m) in &self.members {
            plain.extend(group.elem_bytes(&m.blinded));
            plain.extend(f.0);
        }
        plain.extend(group.elem_bytes(&product));
        let bm1 = old.map(|old| {
            let msg = WireMessage::Bm1(EpochSealedMsg {
                epoch,
                sealed: Vec::new(),
                mac: [0; 16],
            });
            sealed(group, &gk_keys(group, &old), msg, &plain, rng)
        });
        Ok(LeaveOutput {
            epoch,
            gk: Some(gk),
            bm1,
        })
    }

    /// `E_sk(GK ‖ epoch)` for an adjacent RSU.
    pub fn transfer_gk<R: RngCore + ?Sized>(
        &self,
        group: &Group,
        source_tid: &[u8],
        neighbor_sk: &GElem,
        rng: &mut R,
    ) -> Result<WireMessage, GroupKeyError> {
        let gk = self.gk.as_ref().ok_or(GroupKeyError::NoKey)?;
        let mut plain = group.elem_bytes(gk);
        plain.extend(self.epoch.to_be_bytes());
        let msg = WireMessage::GkTransfer(GkTransferMsg {
            source: source_tid.to_vec(),
            epoch: self.epoch,
            sealed: Vec::new(),
            mac: [0; 16],
        });
        Ok(sealed(group, &transfer_keys(group, neighbor_sk), msg, &plain, rng))
    }

    fn blind_all(&mut self, group: &Group, gamma: &Scalar) -> GElem {
        for m in self.members.values_mut() {
            m.blinded = group.exp(&m.share, gamma);
        }
        group.product(self.members.values().map(|m| &m.blinded))
    }

    fn install(&mut self, gk: GElem, gamma: Scalar) -> Option<GElem> {
        self.prev_gk = self.gk.replace(gk);
        self.gamma = Some(gamma);
        self.epoch += 1;
        self.prev_gk.clone()
    }
}

/// Vehicle-side group membership.
#[derive(Clone, Debug)]
pub struct MemberState {
    fid: Pseudonym,
    lambda: Scalar,
    keys: ChannelKeys,
    epoch: u64,
    blinded: Option<GElem>,
    product: Option<GElem>,
    gk: Option<GElem>,
}

impl MemberState {
    /// Draws `λ` for an authenticated session.
    pub fn from_auth<R: RngCore + ?Sized>(
        group: &Group,
        auth: &VehicleAuth,
        rng: &mut R,
    ) -> Result<Self, GroupKeyError> {
        if !auth.state().is_authenticated() {
            return Err(GroupKeyError::Unauthenticated);
        }
        let fid = *auth.fid().expect("authenticated sessions have a pseudonym");
        let keys = auth.channel().expect("authenticated sessions have keys").clone();
        Ok(Self::with_lambda(fid, keys, group.random_nonzero_scalar(rng)))
    }

    pub fn with_lambda(fid: Pseudonym, keys: ChannelKeys, lambda: Scalar) -> Self {
        MemberState {
            fid,
            lambda,
            keys,
            epoch: 0,
            blinded: None,
            product: None,
            gk: None,
        }
    }

    pub fn fid(&self) -> &Pseudonym {
        &self.fid
    }

    pub fn lambda(&self) -> &Scalar {
        &self.lambda
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn gk(&self) -> Option<&GElem> {
        self.gk.as_ref()
    }

    /// Pag1: `g^λ` under the authentication channel.
    pub fn offer<R: RngCore + ?Sized>(&self, group: &Group, rng: &mut R) -> WireMessage {
        let msg = WireMessage::Pag1(FidSealedMsg {
            fid: self.fid,
            sealed: Vec::new(),
            mac: [0; 16],
        });
        sealed(group, &self.keys, msg, &group.elem_bytes(&group.g_pow(&self.lambda)), rng)
    }

    pub fn apply_pag2(&mut self, group: &Group, pag2: &FidSealedMsg) -> Result<GElem, GroupKeyError> {
        if pag2.fid != self.fid || !WireMessage::Pag2(pag2.clone()).verify_mac(group, &self.keys.mac) {
            return Err(GroupKeyError::MacFail);
        }
        let plain = sym_decrypt(&self.keys.enc, &pag2.sealed).map_err(|_| GroupKeyError::DecryptFail)?;
        let (epoch, blinded, product) = parse(group, &plain, |r| Ok((r.u64()?, r.elem()?, r.elem()?)))?;
        Ok(self.install(group, epoch, blinded, product))
    }

    /// Checks a Pag3 against the key derived from Pag2 (MAC only).
    pub fn check_pag3(&self, group: &Group, pag3: &EpochSealedMsg) -> Result<(), GroupKeyError> {
        let gk = self.gk.as_ref().ok_or(GroupKeyError::NoKey)?;
        if pag3.epoch != self.epoch {
            return Err(GroupKeyError::EpochMismatch {
                expected: self.epoch,
                got: pag3.epoch,
            });
        }
        if !WireMessage::Pag3(pag3.clone()).verify_mac(group, &gk_keys(group, gk).mac) {
            return Err(GroupKeyError::MacFail);
        }
        Ok(())
    }

    /// Existing members: decrypt the new key with the current one.
    pub fn apply_pag3(&mut self, group: &Group, pag3: &EpochSealedMsg) -> Result<GElem, GroupKeyError> {
        let gk = self.gk.as_ref().ok_or(GroupKeyError::NoKey)?;
        let plain = sym_decrypt(&gk_keys(group, gk).enc, &pag3.sealed).map_err(|_| GroupKeyError::DecryptFail)?;
        let new_gk = parse(group, &plain, |r| r.elem())?;
        if !WireMessage::Pag3(pag3.clone()).verify_mac(group, &gk_keys(group, &new_gk).mac) {
            return Err(GroupKeyError::MacFail);
        }
        self.epoch = pag3.epoch;
        self.blinded = None;
        self.product = None;
        self.gk = Some(new_gk.clone());
        Ok(new_gk)
    }

    pub fn apply_bm1(&mut self, group: &Group, bm1: &EpochSealedMsg) -> Result<GElem, GroupKeyError> {
        let gk = self.gk.as_ref().ok_or(GroupKeyError::NoKey)?;
        let keys = gk_keys(group, gk);
        if !WireMessage::Bm1(bm1.clone()).verify_mac(group, &keys.mac) {
            return Err(GroupKeyError::MacFail);
        }
        let plain = sym_decrypt(&keys.enc, &bm1.sealed).map_err(|_| GroupKeyError::DecryptFail)?;
        let (epoch, pairs, product) = parse_bm1(group, &plain)?;
        if epoch != bm1.epoch {
            return Err(GroupKeyError::DecryptFail);
        }
        let blinded = pairs
            .into_iter()
            .find(|(_, f)| *f == self.fid)
            .map(|(b, _)| b)
            .ok_or(GroupKeyError::FidAbsent)?;
        Ok(self.install(group, epoch, blinded, product))
    }

    fn install(&mut self, group: &Group, epoch: u64, blinded: GElem, product: GElem) -> GElem {
        let gk = derive_gk(group, &self.lambda, &blinded, &product);
        self.epoch = epoch;
        self.blinded = Some(blinded);
        self.product = Some(product);
        self.gk = Some(gk.clone());
        gk
    }
}

/// Decrypted Bm1 body: epoch, `(g^{λ_i γ}, FID_i)` pairs and their product.
pub type Bm1Body = (u64, Vec<(GElem, Pseudonym)>, GElem);

pub fn parse_bm1(group: &Group, plain: &[u8]) -> Result<Bm1Body, GroupKeyError> {
    parse(group, plain, |r| {
        let epoch = r.u64()?;
        let n = r.u32()?;
        let mut pairs = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            pairs.push((r.elem()?, r.fid()?));
        }
        Ok((epoch, pairs, r.elem()?))
    })
}

/// Group keys received from adjacent RSUs, latest epoch per source.
#[derive(Clone, Debug, Default)]
pub struct NeighborGkStore {
    keys: BTreeMap<Vec<u8>, (u64, GElem)>,
}

impl NeighborGkStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the key if it is newer than what we hold. Returns whether it was stored.
    pub fn receive(&mut self, group: &Group, msg: &GkTransferMsg, sk: &GElem) -> Result<bool, GroupKeyError> {
        let keys = transfer_keys(group, sk);
        if !WireMessage::GkTransfer(msg.clone()).verify_mac(group, &keys.mac) {
            return Err(GroupKeyError::MacFail);
        }
        let plain = sym_decrypt(&keys.enc, &msg.sealed).map_err(|_| GroupKeyError::DecryptFail)?;
        let (gk, epoch) = parse(group, &plain, |r| Ok((r.elem()?, r.u64()?)))?;
        if epoch != msg.epoch {
            return Err(GroupKeyError::DecryptFail);
        }
        if let Some((held, _)) = self.keys.get(&msg.source) {
            if *held >= epoch {
                return Ok(false);
            }
        }
        self.keys.insert(msg.source.clone(), (epoch, gk));
        Ok(true)
    }

    pub fn get(&self, source: &[u8]) -> Option<(u64, &GElem)> {
        self.keys.get(source).map(|(e, k)| (*e, k))
    }

    pub fn keys(&self) -> impl Iterator<Item = &GElem> {
        self.keys.values().map(|(_, k)| k)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::channel_keys;
    use crate::params::Profile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn fid(i: u8) -> Pseudonym {
        Pseudonym([i; 42])
    }

    fn member(g: &Group, i: u8, lambda: u64) -> MemberState {
        MemberState::with_lambda(fid(i), channel_keys(g, &g.scalar_u64(100 + i as u64)), g.scalar_u64(lambda))
    }

    fn join(g: &Group, st: &mut GroupState, m: &MemberState, rng: &mut ChaCha20Rng) -> Result<RekeyOutput, GroupKeyError> {
        let WireMessage::Pag1(p1) = m.offer(g, rng) else { panic!() };
        st.handle_join(g, &p1, &m.keys, rng)
    }

    fn pag2(out: &RekeyOutput, f: &Pseudonym) -> FidSealedMsg {
        match out.pag2_for(f) {
            Some(WireMessage::Pag2(m)) => m.clone(),
            _ => panic!("no pag2"),
        }
    }

    #[test]
    fn offer_value() {
        let g = Profile::Test.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let m = member(&g, 1, 3);
        let WireMessage::Pag1(p1) = m.offer(&g, &mut rng) else { panic!() };
        assert_eq!(GroupState::open_offer(&g, &p1, &m.keys).unwrap().to_u64(), Some(8));
    }

    #[test]
    fn worked_rekey_vector() {
        // λ = (3, 5), γ = 2 at p = 23.
        let g = Profile::Test.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut a = member(&g, 1, 3);
        let mut b = member(&g, 2, 5);
        let mut st = GroupState::new();
        join(&g, &mut st, &a, &mut rng).unwrap();
        join(&g, &mut st, &b, &mut rng).unwrap();
        let out = st.rekey_with_gamma(&g, g.scalar_u64(2), &mut rng).unwrap();
        assert_eq!(st.blinded(&fid(1)).unwrap().to_u64(), Some(5));
        assert_eq!(st.blinded(&fid(2)).unwrap().to_u64(), Some(11));
        assert_eq!(out.gk.to_u64(), Some(10));
        assert_eq!(a.apply_pag2(&g, &pag2(&out, &fid(1))).unwrap().to_u64(), Some(10));
        assert_eq!(b.apply_pag2(&g, &pag2(&out, &fid(2))).unwrap().to_u64(), Some(10));
    }

    #[test]
    fn member_derivation_vector() {
        let g = Profile::Test.group().unwrap();
        let (lambda, blinded, product) = (g.scalar_u64(3), g.elem_u64(5).unwrap(), g.elem_u64(9).unwrap());
        assert_eq!(g.scalar_inv(&lambda).unwrap(), g.scalar_u64(4));
        assert_eq!(g.exp(&blinded, &g.scalar_u64(4)).to_u64(), Some(4));
        assert_eq!(derive_gk(&g, &lambda, &blinded, &product).to_u64(), Some(10));
    }

    #[test]
    fn single_member_vector() {
        let g = Profile::Test.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut st = GroupState::new();
        join(&g, &mut st, &member(&g, 1, 3), &mut rng).unwrap();
        let out = st.rekey_with_gamma(&g, g.scalar_u64(2), &mut rng).unwrap();
        assert_eq!(out.gk.to_u64(), Some(3));
    }

    #[test]
    fn empty_and_duplicate() {
        let g = Profile::Test.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut st = GroupState::new();
        assert_eq!(st.rekey(&g, &mut rng).unwrap_err(), GroupKeyError::EmptyGroup);
        let m = member(&g, 1, 3);
        join(&g, &mut st, &m, &mut rng).unwrap();
        assert_eq!(join(&g, &mut st, &m, &mut rng).unwrap_err(), GroupKeyError::DuplicateFid);
        assert_eq!(st.handle_leave(&g, &fid(9), &mut rng).unwrap_err(), GroupKeyError::UnknownFid);
    }

    #[test]
    fn leave_broadcast_structure() {
        let g = Profile::Desk64.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut st = GroupState::new();
        let mut ms: Vec<_> = (1..=3).map(|i| member(&g, i, 7 + i as u64)).collect();
        for m in &ms {
            join(&g, &mut st, m, &mut rng).unwrap();
        }
        let out = st.rekey(&g, &mut rng).unwrap();
        for m in ms.iter_mut() {
            m.apply_pag2(&g, &pag2(&out, &m.fid)).unwrap();
        }
        let old = st.gk().unwrap().clone();
        let leave = st.handle_leave(&g, &fid(2), &mut rng).unwrap();
        let Some(WireMessage::Bm1(bm1)) = &leave.bm1 else { panic!() };
        let plain = sym_decrypt(&gk_keys(&g, &old).enc, &bm1.sealed).unwrap();
        let (_, pairs, _) = parse_bm1(&g, &plain).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|(_, f)| *f != fid(2)));
        assert_eq!(ms[0].apply_bm1(&g, bm1).unwrap(), *st.gk().unwrap());
        assert_eq!(ms[2].apply_bm1(&g, bm1).unwrap(), *st.gk().unwrap());
        assert_eq!(ms[1].apply_bm1(&g, bm1).unwrap_err(), GroupKeyError::FidAbsent);
    }

    #[test]
    fn transfer_and_store_ordering() {
        let g = Profile::Desk64.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let sk = g.random_elem(&mut rng);
        let mut st = GroupState::new();
        assert_eq!(st.transfer_gk(&g, b"R1", &sk, &mut rng).unwrap_err(), GroupKeyError::NoKey);
        join(&g, &mut st, &member(&g, 1, 3), &mut rng).unwrap();
        let WireMessage::GkTransfer(first) = st.transfer_gk(&g, b"R1", &sk, &mut rng).unwrap() else { panic!() };
        join(&g, &mut st, &member(&g, 2, 4), &mut rng).unwrap();
        let WireMessage::GkTransfer(second) = st.transfer_gk(&g, b"R1", &sk, &mut rng).unwrap() else { panic!() };

        let mut store = NeighborGkStore::new();
        assert_eq!(store.receive(&g, &second, &sk), Ok(true));
        assert_eq!(store.get(b"R1"), Some((2, st.gk().unwrap())));
        assert_eq!(store.receive(&g, &first, &sk), Ok(false));
        assert_eq!(store.get(b"R1").unwrap().0, 2);
        let wrong = g.random_elem(&mut rng);
        assert_eq!(store.receive(&g, &second, &wrong), Err(GroupKeyError::MacFail));
    }

    #[test]
    fn tampered_product_caught_by_pag3() {
        let g = Profile::Desk64.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut st = GroupState::new();
        let a = member(&g, 1, 11);
        join(&g, &mut st, &a, &mut rng).unwrap();
        let mut b = member(&g, 2, 13);
        let out = join(&g, &mut st, &b, &mut rng).unwrap();
        // Re-seal a Pag2 carrying a wrong product under b's channel.
        let p2 = pag2(&out, &fid(2));
        let plain = sym_decrypt(&b.keys.enc, &p2.sealed).unwrap();
        let (epoch, blinded, product) = parse(&g, &plain, |r| Ok((r.u64()?, r.elem()?, r.elem()?))).unwrap();
        let mut forged = epoch.to_be_bytes().to_vec();
        forged.extend(g.elem_bytes(&blinded));
        forged.extend(g.elem_bytes(&g.mul(&product, g.generator())));
        let msg = WireMessage::Pag2(FidSealedMsg { fid: fid(2), sealed: Vec::new(), mac: [0; 16] });
        let WireMessage::Pag2(bad) = sealed(&g, &b.keys, msg, &forged, &mut rng) else { panic!() };
        b.apply_pag2(&g, &bad).unwrap();
        let WireMessage::Pag3(p3) = &out.pag3 else { panic!() };
        assert_eq!(b.check_pag3(&g, p3), Err(GroupKeyError::MacFail));
    }
}
