//! Messaging inside an RSU group.
//!
//! Group broadcast runs under the group key, unicast to the RSU under the
//! authentication channel, and vehicle-to-vehicle traffic under a pairwise
//! `VVK = g^{λ_i λ_j γ}` nested inside a group-key envelope.

use rand::RngCore;
use thiserror::Error;

use crate::codec::{EpochSealedMsg, FidSealedMsg, PlainReader, SealedMsg, WireMessage};
use crate::crypto::{hmac, hmac_verify, sym_decrypt, sym_encrypt, ChannelKeys, GElem, Group, Scalar, TAG_LEN};
use crate::group_key::{gk_keys, GroupState};
use crate::ta::{Pseudonym, PSEUDONYM_LEN};

/// The one-to-one request constant `C`.
pub const DIRECTORY_REQUEST: &[u8; 8] = b"VVK-REQ\0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommError {
    #[error("MAC check failed")]
    MacFail,
    #[error("ciphertext does not decrypt to a well-formed payload")]
    DecryptFail,
    #[error("request does not carry the directory constant")]
    BadRequest,
    #[error("message addressed to another member")]
    NotForUs,
    #[error("message from an unexpected sender")]
    WrongPeer,
    #[error("channel is for epoch {expected}, message for {got}")]
    EpochMismatch { expected: u64, got: u64 },
    #[error("no group key established")]
    NoKey,
}

fn open(keys: &ChannelKeys, group: &Group, msg: &WireMessage, sealed: &[u8]) -> Result<Vec<u8>, CommError> {
    if !msg.verify_mac(group, &keys.mac) {
        return Err(CommError::MacFail);
    }
    sym_decrypt(&keys.enc, sealed).map_err(|_| CommError::DecryptFail)
}

fn split_fid(plain: &[u8]) -> Result<(Pseudonym, &[u8]), CommError> {
    if plain.len() < PSEUDONYM_LEN {
        return Err(CommError::DecryptFail);
    }
    let fid = Pseudonym::from_slice(&plain[..PSEUDONYM_LEN]).expect("length checked");
    Ok((fid, &plain[PSEUDONYM_LEN..]))
}

/// `E_GK(m, FID) ‖ HMAC_GK`.
pub fn broadcast<R: RngCore + ?Sized>(group: &Group, gk: &GElem, sender: &Pseudonym, m: &[u8], rng: &mut R) -> WireMessage {
    let keys = gk_keys(group, gk);
    let mut plain = sender.0.to_vec();
    plain.extend_from_slice(m);
    let mut msg = WireMessage::Broadcast(SealedMsg {
        sealed: sym_encrypt(&keys.enc, &plain, rng),
        mac: [0; TAG_LEN],
    });
    msg.authenticate(group, &keys.mac);
    msg
}

/// Returns `(sender, payload)`.
pub fn open_broadcast(group: &Group, gk: &GElem, msg: &SealedMsg) -> Result<(Pseudonym, Vec<u8>), CommError> {
    let plain = open(&gk_keys(group, gk), group, &WireMessage::Broadcast(msg.clone()), &msg.sealed)?;
    let (fid, rest) = split_fid(&plain)?;
    Ok((fid, rest.to_vec()))
}

/// `(FID, E_{N_1}(m)) ‖ HMAC_{N_1}`.
pub fn to_rsu<R: RngCore + ?Sized>(group: &Group, fid: &Pseudonym, keys: &ChannelKeys, m: &[u8], rng: &mut R) -> WireMessage {
    let mut msg = WireMessage::ToRsu(FidSealedMsg {
        fid: *fid,
        sealed: sym_encrypt(&keys.enc, m, rng),
        mac: [0; TAG_LEN],
    });
    msg.authenticate(group, &keys.mac);
    msg
}

pub fn open_to_rsu(group: &Group, keys: &ChannelKeys, msg: &FidSealedMsg) -> Result<Vec<u8>, CommError> {
    open(keys, group, &WireMessage::ToRsu(msg.clone()), &msg.sealed)
}

/// Word1: `E_GK(FID, C)`.
pub fn request_directory<R: RngCore + ?Sized>(group: &Group, gk: &GElem, fid: &Pseudonym, rng: &mut R) -> WireMessage {
    let keys = gk_keys(group, gk);
    let mut plain = fid.0.to_vec();
    plain.extend_from_slice(DIRECTORY_REQUEST);
    let mut msg = WireMessage::Word1(SealedMsg {
        sealed: sym_encrypt(&keys.enc, &plain, rng),
        mac: [0; TAG_LEN],
    });
    msg.authenticate(group, &keys.mac);
    msg
}

/// RSU side of Word1: returns the requester.
pub fn open_directory_request(group: &Group, gk: &GElem, msg: &SealedMsg) -> Result<Pseudonym, CommError> {
    let plain = open(&gk_keys(group, gk), group, &WireMessage::Word1(msg.clone()), &msg.sealed)?;
    let (fid, rest) = split_fid(&plain)?;
    if rest != DIRECTORY_REQUEST {
        return Err(CommError::BadRequest);
    }
    Ok(fid)
}

/// Word2: every `(g^{λ_i γ}, FID_i)` under the current group key.
pub fn serve_directory<R: RngCore + ?Sized>(group: &Group, state: &GroupState, rng: &mut R) -> Result<WireMessage, CommError> {
    let gk = state.gk().ok_or(CommError::NoKey)?;
    let keys = gk_keys(group, gk);
    let mut plain = (state.len() as u32).to_be_bytes().to_vec();
    for fid in state.members() {
        plain.extend(group.elem_bytes(state.blinded(fid).expect("member")));
        plain.extend(fid.0);
    }
    let mut msg = WireMessage::Word2(EpochSealedMsg {
        epoch: state.epoch(),
        sealed: sym_encrypt(&keys.enc, &plain, rng),
        mac: [0; TAG_LEN],
    });
    msg.authenticate(group, &keys.mac);
    Ok(msg)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Directory {
    pub epoch: u64,
    pub entries: Vec<(Pseudonym, GElem)>,
}

impl Directory {
    pub fn blinded(&self, fid: &Pseudonym) -> Option<&GElem> {
        self.entries.iter().find(|(f, _)| f == fid).map(|(_, b)| b)
    }
}

pub fn open_directory(group: &Group, gk: &GElem, msg: &EpochSealedMsg) -> Result<Directory, CommError> {
    let plain = open(&gk_keys(group, gk), group, &WireMessage::Word2(msg.clone()), &msg.sealed)?;
    let mut r = PlainReader::new(group, &plain);
    let entries = (|| {
        let n = r.u32()?;
        let mut v = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let b = r.elem()?;
            v.push((r.fid()?, b));
        }
        Ok::<_, crate::codec::CodecError>(v)
    })()
    .map_err(|_| CommError::DecryptFail)?;
    r.finish().map_err(|_| CommError::DecryptFail)?;
    Ok(Directory {
        epoch: msg.epoch,
        entries,
    })
}

/// Pairwise channel between two members in one epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VvkChannel {
    pub own_fid: Pseudonym,
    pub peer_fid: Pseudonym,
    pub vvk: GElem,
    pub epoch: u64,
}

/// `VVK = (g^{λ_peer γ})^{λ_own}`.
pub fn derive_vvk(
    group: &Group,
    own_fid: Pseudonym,
    lambda: &Scalar,
    peer_fid: Pseudonym,
    peer_blinded: &GElem,
    epoch: u64,
) -> VvkChannel {
    VvkChannel {
        own_fid,
        peer_fid,
        vvk: group.exp(peer_blinded, lambda),
        epoch,
    }
}

fn inner_mac_input(sender: &Pseudonym, recipient: &Pseudonym, epoch: u64, ct: &[u8]) -> Vec<u8> {
    let mut v = sender.0.to_vec();
    v.extend(recipient.0);
    v.extend(epoch.to_be_bytes());
    v.extend_from_slice(ct);
    v
}

/// Word3: `E_GK(sender ‖ recipient ‖ epoch ‖ E_VVK(m) ‖ HMAC_VVK)` with an outer group MAC.
pub fn send_peer<R: RngCore + ?Sized>(group: &Group, ch: &VvkChannel, gk: &GElem, m: &[u8], rng: &mut R) -> WireMessage {
    let inner = ChannelKeys::from_elem(group, &ch.vvk, "vvk");
    let ct = sym_encrypt(&inner.enc, m, rng);
    let mut plain = inner_mac_input(&ch.own_fid, &ch.peer_fid, ch.epoch, &ct);
    plain.extend(hmac(&inner.mac, &plain));
    let outer = gk_keys(group, gk);
    let mut msg = WireMessage::Word3(SealedMsg {
        sealed: sym_encrypt(&outer.enc, &plain, rng),
        mac: [0; TAG_LEN],
    });
    msg.authenticate(group, &outer.mac);
    msg
}

/// Opens the group envelope of a Word3 and returns `(sender, recipient)`
/// without touching the inner layer.
pub fn peek_peer(group: &Group, gk: &GElem, msg: &SealedMsg) -> Result<(Pseudonym, Pseudonym), CommError> {
    let plain = open(&gk_keys(group, gk), group, &WireMessage::Word3(msg.clone()), &msg.sealed)?;
    let (sender, rest) = split_fid(&plain)?;
    let (recipient, _) = split_fid(rest)?;
    Ok((sender, recipient))
}

pub fn recv_peer(group: &Group, ch: &VvkChannel, gk: &GElem, msg: &SealedMsg) -> Result<Vec<u8>, CommError> {
    let plain = open(&gk_keys(group, gk), group, &WireMessage::Word3(msg.clone()), &msg.sealed)?;
    if plain.len() < 2 * PSEUDONYM_LEN + 8 + TAG_LEN {
        return Err(CommError::DecryptFail);
    }
    let (body, tag) = plain.split_at(plain.len() - TAG_LEN);
    let (sender, rest) = split_fid(body)?;
    let (recipient, rest) = split_fid(rest)?;
    if recipient != ch.own_fid {
        return Err(CommError::NotForUs);
    }
    if sender != ch.peer_fid {
        return Err(CommError::WrongPeer);
    }
    let epoch = u64::from_be_bytes(rest[..8].try_into().expect("length checked"));
    if epoch != ch.epoch {
        return Err(CommError::EpochMismatch {
            expected: ch.epoch,
            got: epoch,
        });
    }
    let inner = ChannelKeys::from_elem(group, &ch.vvk, "vvk");
    let tag: [u8; TAG_LEN] = tag.try_into().expect("split at TAG_LEN");
    if !hmac_verify(&inner.mac, body, &tag) {
        return Err(CommError::MacFail);
    }
    sym_decrypt(&inner.enc, &rest[8..]).map_err(|_| CommError::DecryptFail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::channel_keys;
    use crate::group_key::{MemberState, RekeyOutput};
    use crate::params::Profile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn fid(i: u8) -> Pseudonym {
        Pseudonym([i; 42])
    }

    struct Setup {
        g: Group,
        st: GroupState,
        members: Vec<MemberState>,
        rng: ChaCha20Rng,
    }

    fn setup(profile: Profile, lambdas: &[u64], gamma: Option<u64>) -> Setup {
        let g = profile.group().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut st = GroupState::new();
        let mut members: Vec<MemberState> = lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| {
                MemberState::with_lambda(fid(i as u8 + 1), channel_keys(&g, &g.scalar_u64(50 + i as u64)), g.scalar_u64(*l))
            })
            .collect();
        let mut last: Option<RekeyOutput> = None;
        for m in &members {
            let WireMessage::Pag1(p1) = m.offer(&g, &mut rng) else { panic!() };
            let keys = channel_keys(&g, &g.scalar_u64(50 + (p1.fid.0[0] - 1) as u64));
            last = Some(st.handle_join(&g, &p1, &keys, &mut rng).unwrap());
        }
        if let Some(gm) = gamma {
            last = Some(st.rekey_with_gamma(&g, g.scalar_u64(gm), &mut rng).unwrap());
        }
        let out = last.unwrap();
        for m in members.iter_mut() {
            let Some(WireMessage::Pag2(p2)) = out.pag2_for(m.fid()) else { panic!() };
            m.apply_pag2(&g, p2).unwrap();
        }
        Setup { g, st, members, rng }
    }

    #[test]
    fn broadcast_round_trip_and_framing() {
        let mut s = setup(Profile::Desk64, &[3, 5, 7], None);
        let gk = s.members[0].gk().unwrap().clone();
        let payload = vec![0xAB; 200];
        let msg = broadcast(&s.g, &gk, &fid(1), &payload, &mut s.rng);
        assert_eq!(msg.measure_overhead(), 58);
        assert_eq!(msg.encode(&s.g).len(), 1 + 4 + 16 + 42 + 200 + 16);
        let WireMessage::Broadcast(b) = msg else { panic!() };
        for m in &s.members {
            assert_eq!(open_broadcast(&s.g, m.gk().unwrap(), &b).unwrap(), (fid(1), payload.clone()));
        }
    }

    #[test]
    fn to_rsu_separation() {
        let mut s = setup(Profile::Desk64, &[3], None);
        let k1 = channel_keys(&s.g, &s.g.scalar_u64(50));
        let k2 = channel_keys(&s.g, &s.g.scalar_u64(51));
        let WireMessage::ToRsu(m) = to_rsu(&s.g, &fid(1), &k1, b"status", &mut s.rng) else { panic!() };
        assert_eq!(open_to_rsu(&s.g, &k1, &m).unwrap(), b"status");
        assert_eq!(open_to_rsu(&s.g, &k2, &m), Err(CommError::MacFail));
    }

    #[test]
    fn directory_request_and_serve() {
        let mut s = setup(Profile::Desk64, &[3, 5, 7], None);
        let gk = s.st.gk().unwrap().clone();
        let WireMessage::Word1(w1) = request_directory(&s.g, &gk, &fid(2), &mut s.rng) else { panic!() };
        assert_eq!(open_directory_request(&s.g, &gk, &w1), Ok(fid(2)));
        let outsider = s.g.random_elem(&mut s.rng);
        let WireMessage::Word1(bad) = request_directory(&s.g, &outsider, &fid(9), &mut s.rng) else { panic!() };
        assert_eq!(open_directory_request(&s.g, &gk, &bad), Err(CommError::MacFail));

        let WireMessage::Word2(w2) = serve_directory(&s.g, &s.st, &mut s.rng).unwrap() else { panic!() };
        let dir = open_directory(&s.g, &gk, &w2).unwrap();
        assert_eq!(dir.entries.len(), 3);
        assert_eq!(dir.epoch, s.st.epoch());
        assert_eq!(open_directory(&s.g, &outsider, &w2), Err(CommError::MacFail));
    }

    #[test]
    fn vvk_worked_vector() {
        // λ_i = 3, λ_j = 5, γ = 2 at p = 23.
        let s = setup(Profile::Test, &[3, 5, 7], Some(2));
        let g = &s.g;
        let bi = s.st.blinded(&fid(1)).unwrap();
        let bj = s.st.blinded(&fid(2)).unwrap();
        assert_eq!(bj.to_u64(), Some(g.g_pow(&g.scalar_u64(10)).to_u64().unwrap()));
        let a = derive_vvk(g, fid(1), &g.scalar_u64(3), fid(2), bj, 1);
        let b = derive_vvk(g, fid(2), &g.scalar_u64(5), fid(1), bi, 1);
        assert_eq!(a.vvk.to_u64(), Some(3));
        assert_eq!(a.vvk, b.vvk);
        let bk = s.st.blinded(&fid(3)).unwrap();
        assert_ne!(derive_vvk(g, fid(1), &g.scalar_u64(3), fid(3), bk, 1).vvk, a.vvk);
    }

    #[test]
    fn peer_round_trip_and_rejections() {
        let mut s = setup(Profile::Desk64, &[3, 5, 7], None);
        let g = s.g.clone();
        let gk = s.st.gk().unwrap().clone();
        let epoch = s.st.epoch();
        let ab = derive_vvk(&g, fid(1), s.members[0].lambda(), fid(2), s.st.blinded(&fid(2)).unwrap(), epoch);
        let ba = derive_vvk(&g, fid(2), s.members[1].lambda(), fid(1), s.st.blinded(&fid(1)).unwrap(), epoch);
        let payload = vec![7u8; 200];
        let WireMessage::Word3(w3) = send_peer(&g, &ab, &gk, &payload, &mut s.rng) else { panic!() };
        assert_eq!(peek_peer(&g, &gk, &w3), Ok((fid(1), fid(2))));
        assert_eq!(recv_peer(&g, &ba, &gk, &w3).unwrap(), payload);

        // Member 3 holds gk but is not an endpoint.
        let cb = derive_vvk(&g, fid(3), s.members[2].lambda(), fid(1), s.st.blinded(&fid(1)).unwrap(), epoch);
        assert_eq!(recv_peer(&g, &cb, &gk, &w3), Err(CommError::NotForUs));
        let spoof = VvkChannel { own_fid: fid(2), ..cb.clone() };
        assert_eq!(recv_peer(&g, &spoof, &gk, &w3), Err(CommError::MacFail));

        let stale = VvkChannel { epoch: epoch + 1, ..ba.clone() };
        assert_eq!(recv_peer(&g, &stale, &gk, &w3), Err(CommError::EpochMismatch { expected: epoch + 1, got: epoch }));
    }
}
