//! Byte-exact wire format for every protocol message.
//!
//! Layout: one type tag byte followed by the type's fields in order. Group
//! elements and scalars are `element_width` bytes big-endian, pseudonyms 42
//! bytes, MACs 16 bytes, timestamps and epochs 8 bytes big-endian, and
//! variable-length fields (identities, ciphertexts, lists) carry a 4-byte
//! big-endian length or count prefix. Signatures and MACs always come last,
//! so the bytes they cover are a prefix of the encoding.

use thiserror::Error;

use crate::crypto::{hmac, hmac_verify, CryptoError, GElem, Group, Scalar, Signature, SymKey, Tag, TAG_LEN};
use crate::ta::{Beacon, Location, Pseudonym, PSEUDONYM_LEN};

pub mod tag {
    pub const GKA_ROUND1: u8 = 0x01;
    pub const GKA_ROUND2: u8 = 0x02;
    pub const MEG1_BEACON: u8 = 0x10;
    pub const MEG2_HELLO: u8 = 0x11;
    pub const MEG3_CHALLENGE: u8 = 0x12;
    pub const MEG4_CONFIRM: u8 = 0x13;
    pub const AUTH_ACCEPT: u8 = 0x14;
    pub const PAG1_OFFER: u8 = 0x20;
    pub const PAG2_SHARE: u8 = 0x21;
    pub const PAG3_REKEY: u8 = 0x22;
    pub const BM1_LEAVE: u8 = 0x23;
    pub const GK_TRANSFER: u8 = 0x24;
    pub const BROADCAST: u8 = 0x30;
    pub const TO_RSU: u8 = 0x31;
    pub const WORD1_REQUEST: u8 = 0x32;
    pub const WORD2_DIRECTORY: u8 = 0x33;
    pub const WORD3_PEER: u8 = 0x34;
}

/// Upper bound on any length prefix; guards allocation on hostile input.
const MAX_FIELD_LEN: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown type tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("length prefix {0} exceeds limit")]
    TooLong(usize),
    #[error("invalid field: {0}")]
    Field(#[from] CryptoError),
    #[error("empty message")]
    Empty,
}

/// `M¹ = (TID, X, R, T, σ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round1Msg {
    pub tid: Vec<u8>,
    pub x: GElem,
    pub r: GElem,
    pub t: GElem,
    pub sig: Signature,
}

/// `M² = (TID, Y, s, T_{i,·}, σ)`; tokens are in roster order, sender skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round2Msg {
    pub tid: Vec<u8>,
    pub y: GElem,
    pub s: Scalar,
    pub tokens: Vec<GElem>,
    pub sig: Signature,
}

/// `Meg2 = (PK_V, TS, E_GK'(FID), E_PK_RSU(FID, N_1), HMAC_N1)`.
///
/// The public-key part is a KEM element `U = g^u` plus the sealed payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HelloMsg {
    pub pk_v: GElem,
    pub ts_ms: u64,
    pub fast_fid: [u8; PSEUDONYM_LEN],
    pub kem_u: GElem,
    pub sealed: Vec<u8>,
    pub mac: Tag,
}

/// Ciphertext plus MAC with no cleartext header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedMsg {
    pub sealed: Vec<u8>,
    pub mac: Tag,
}

/// Ciphertext addressed by a cleartext pseudonym.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FidSealedMsg {
    pub fid: Pseudonym,
    pub sealed: Vec<u8>,
    pub mac: Tag,
}

/// Ciphertext tagged with the group epoch it belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochSealedMsg {
    pub epoch: u64,
    pub sealed: Vec<u8>,
    pub mac: Tag,
}

/// `E_sk(GK)` between neighbouring RSUs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GkTransferMsg {
    pub source: Vec<u8>,
    pub epoch: u64,
    pub sealed: Vec<u8>,
    pub mac: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    GkaRound1(Round1Msg),
    GkaRound2(Round2Msg),
    Beacon(Beacon),
    Hello(HelloMsg),
    Challenge(SealedMsg),
    Confirm(FidSealedMsg),
    AuthAccept(FidSealedMsg),
    Pag1(FidSealedMsg),
    Pag2(FidSealedMsg),
    Pag3(EpochSealedMsg),
    Bm1(EpochSealedMsg),
    GkTransfer(GkTransferMsg),
    Broadcast(SealedMsg),
    ToRsu(FidSealedMsg),
    Word1(SealedMsg),
    Word2(EpochSealedMsg),
    Word3(SealedMsg),
}

struct Writer<'g> {
    group: &'g Group,
    out: Vec<u8>,
}

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_be_bytes());
    }
    fn var(&mut self, bytes: &[u8]) {
        self.out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.out.extend_from_slice(bytes);
    }
    fn raw(&mut self, bytes: &[u8]) {
        self.out.extend_from_slice(bytes);
    }
    fn elem(&mut self, e: &GElem) {
        self.group.encode_uint(e.value(), &mut self.out);
    }
    fn scalar(&mut self, s: &Scalar) {
        self.group.encode_uint(s.value(), &mut self.out);
    }
    fn sig(&mut self, s: &Signature) {
        self.scalar(&s.challenge);
        self.scalar(&s.response);
    }
}

struct Reader<'a, 'g> {
    group: &'g Group,
    buf: &'a [u8],
}

impl<'a> Reader<'a, '_> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, CodecError> {
        let b = self.take(4)?;
        let n = u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize;
        if n > MAX_FIELD_LEN {
            return Err(CodecError::TooLong(n));
        }
        Ok(n)
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn var(&mut self) -> Result<Vec<u8>, CodecError> {
        let n = self.u32()?;
        Ok(self.take(n)?.to_vec())
    }
    fn fid(&mut self) -> Result<Pseudonym, CodecError> {
        Ok(Pseudonym(self.take(PSEUDONYM_LEN)?.try_into().expect("42 bytes")))
    }
    fn mac(&mut self) -> Result<Tag, CodecError> {
        Ok(self.take(TAG_LEN)?.try_into().expect("16 bytes"))
    }
    fn elem(&mut self) -> Result<GElem, CodecError> {
        let w = self.group.element_width();
        Ok(self.group.decode_elem(self.take(w)?)?)
    }
    fn scalar(&mut self) -> Result<Scalar, CodecError> {
        let w = self.group.element_width();
        Ok(self.group.decode_scalar(self.take(w)?)?)
    }
    fn sig(&mut self) -> Result<Signature, CodecError> {
        Ok(Signature {
            challenge: self.scalar()?,
            response: self.scalar()?,
        })
    }
    fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl WireMessage {
    pub fn type_tag(&self) -> u8 {
        use WireMessage::*;
        match self {
            GkaRound1(_) => tag::GKA_ROUND1,
            GkaRound2(_) => tag::GKA_ROUND2,
            Beacon(_) => tag::MEG1_BEACON,
            Hello(_) => tag::MEG2_HELLO,
            Challenge(_) => tag::MEG3_CHALLENGE,
            Confirm(_) => tag::MEG4_CONFIRM,
            AuthAccept(_) => tag::AUTH_ACCEPT,
            Pag1(_) => tag::PAG1_OFFER,
            Pag2(_) => tag::PAG2_SHARE,
            Pag3(_) => tag::PAG3_REKEY,
            Bm1(_) => tag::BM1_LEAVE,
            GkTransfer(_) => tag::GK_TRANSFER,
            Broadcast(_) => tag::BROADCAST,
            ToRsu(_) => tag::TO_RSU,
            Word1(_) => tag::WORD1_REQUEST,
            Word2(_) => tag::WORD2_DIRECTORY,
            Word3(_) => tag::WORD3_PEER,
        }
    }

    pub fn name(&self) -> &'static str {
        use WireMessage::*;
        match self {
            GkaRound1(_) => "M1",
            GkaRound2(_) => "M2",
            Beacon(_) => "Meg1",
            Hello(_) => "Meg2",
            Challenge(_) => "Meg3",
            Confirm(_) => "Meg4",
            AuthAccept(_) => "AuthAccept",
            Pag1(_) => "Pag1",
            Pag2(_) => "Pag2",
            Pag3(_) => "Pag3",
            Bm1(_) => "Bm1",
            GkTransfer(_) => "GkTransfer",
            Broadcast(_) => "Broadcast",
            ToRsu(_) => "ToRsu",
            Word1(_) => "Word1",
            Word2(_) => "Word2",
            Word3(_) => "Word3",
        }
    }

    pub fn encode(&self, group: &Group) -> Vec<u8> {
        let mut w = Writer {
            group,
            out: Vec::with_capacity(64),
        };
        w.u8(self.type_tag());
        match self {
            WireMessage::GkaRound1(m) => {
                w.var(&m.tid);
                w.elem(&m.x);
                w.elem(&m.r);
                w.elem(&m.t);
                w.sig(&m.sig);
            }
            WireMessage::GkaRound2(m) => {
                w.var(&m.tid);
                w.elem(&m.y);
                w.scalar(&m.s);
                w.raw(&(m.tokens.len() as u32).to_be_bytes());
                for t in &m.tokens {
                    w.elem(t);
                }
                w.sig(&m.sig);
            }
            WireMessage::Beacon(b) => {
                w.elem(&b.pk_rsu);
                w.raw(&b.loc.to_bytes());
                w.scalar(&b.loc_hash);
                w.sig(&b.ta_sig);
            }
            WireMessage::Hello(m) => {
                w.elem(&m.pk_v);
                w.u64(m.ts_ms);
                w.raw(&m.fast_fid);
                w.elem(&m.kem_u);
                w.var(&m.sealed);
                w.raw(&m.mac);
            }
            WireMessage::Challenge(m)
            | WireMessage::Broadcast(m)
            | WireMessage::Word1(m)
            | WireMessage::Word3(m) => {
                w.var(&m.sealed);
                w.raw(&m.mac);
            }
            WireMessage::Confirm(m)
            | WireMessage::AuthAccept(m)
            | WireMessage::Pag1(m)
            | WireMessage::Pag2(m)
            | WireMessage::ToRsu(m) => {
                w.raw(&m.fid.0);
                w.var(&m.sealed);
                w.raw(&m.mac);
            }
            WireMessage::Pag3(m) | WireMessage::Bm1(m) | WireMessage::Word2(m) => {
                w.u64(m.epoch);
                w.var(&m.sealed);
                w.raw(&m.mac);
            }
            WireMessage::GkTransfer(m) => {
                w.var(&m.source);
                w.u64(m.epoch);
                w.var(&m.sealed);
                w.raw(&m.mac);
            }
        }
        w.out
    }

    pub fn decode(group: &Group, bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader { group, buf: bytes };
        let t = r.u8().map_err(|_| CodecError::Empty)?;
        let sealed = |r: &mut Reader| -> Result<SealedMsg, CodecError> {
            Ok(SealedMsg {
                sealed: r.var()?,
                mac: r.mac()?,
            })
        };
        let fid_sealed = |r: &mut Reader| -> Result<FidSealedMsg, CodecError> {
            Ok(FidSealedMsg {
                fid: r.fid()?,
                sealed: r.var()?,
                mac: r.mac()?,
            })
        };
        let epoch_sealed = |r: &mut Reader| -> Result<EpochSealedMsg, CodecError> {
            Ok(EpochSealedMsg {
                epoch: r.u64()?,
                sealed: r.var()?,
                mac: r.mac()?,
            })
        };
        let msg = match t {
            tag::GKA_ROUND1 => WireMessage::GkaRound1(Round1Msg {
                tid: r.var()?,
                x: r.elem()?,
                r: r.elem()?,
                t: r.elem()?,
                sig: r.sig()?,
            }),
            tag::GKA_ROUND2 => {
                let tid = r.var()?;
                let y = r.elem()?;
                let s = r.scalar()?;
                let n = r.u32()?;
                if n.saturating_mul(group.element_width()) > r.buf.len() {
                    return Err(CodecError::Truncated);
                }
                let tokens = (0..n).map(|_| r.elem()).collect::<Result<_, _>>()?;
                WireMessage::GkaRound2(Round2Msg {
                    tid,
                    y,
                    s,
                    tokens,
                    sig: r.sig()?,
                })
            }
            tag::MEG1_BEACON => WireMessage::Beacon(Beacon {
                pk_rsu: r.elem()?,
                loc: Location {
                    x_mm: r.i64()?,
                    y_mm: r.i64()?,
                },
                loc_hash: r.scalar()?,
                ta_sig: r.sig()?,
            }),
            tag::MEG2_HELLO => WireMessage::Hello(HelloMsg {
                pk_v: r.elem()?,
                ts_ms: r.u64()?,
                fast_fid: r.take(PSEUDONYM_LEN)?.try_into().expect("42 bytes"),
                kem_u: r.elem()?,
                sealed: r.var()?,
                mac: r.mac()?,
            }),
            tag::MEG3_CHALLENGE => WireMessage::Challenge(sealed(&mut r)?),
            tag::MEG4_CONFIRM => WireMessage::Confirm(fid_sealed(&mut r)?),
            tag::AUTH_ACCEPT => WireMessage::AuthAccept(fid_sealed(&mut r)?),
            tag::PAG1_OFFER => WireMessage::Pag1(fid_sealed(&mut r)?),
            tag::PAG2_SHARE => WireMessage::Pag2(fid_sealed(&mut r)?),
            tag::PAG3_REKEY => WireMessage::Pag3(epoch_sealed(&mut r)?),
            tag::BM1_LEAVE => WireMessage::Bm1(epoch_sealed(&mut r)?),
            tag::GK_TRANSFER => WireMessage::GkTransfer(GkTransferMsg {
                source: r.var()?,
                epoch: r.u64()?,
                sealed: r.var()?,
                mac: r.mac()?,
            }),
            tag::BROADCAST => WireMessage::Broadcast(sealed(&mut r)?),
            tag::TO_RSU => WireMessage::ToRsu(fid_sealed(&mut r)?),
            tag::WORD1_REQUEST => WireMessage::Word1(sealed(&mut r)?),
            tag::WORD2_DIRECTORY => WireMessage::Word2(epoch_sealed(&mut r)?),
            tag::WORD3_PEER => WireMessage::Word3(sealed(&mut r)?),
            other => return Err(CodecError::UnknownTag(other)),
        };
        if !r.buf.is_empty() {
            return Err(CodecError::TrailingBytes(r.buf.len()));
        }
        Ok(msg)
    }

    pub fn mac(&self) -> Option<&Tag> {
        use WireMessage::*;
        match self {
            GkaRound1(_) | GkaRound2(_) | Beacon(_) => None,
            Hello(m) => Some(&m.mac),
            Challenge(m) | Broadcast(m) | Word1(m) | Word3(m) => Some(&m.mac),
            Confirm(m) | AuthAccept(m) | Pag1(m) | Pag2(m) | ToRsu(m) => Some(&m.mac),
            Pag3(m) | Bm1(m) | Word2(m) => Some(&m.mac),
            GkTransfer(m) => Some(&m.mac),
        }
    }

    fn mac_mut(&mut self) -> Option<&mut Tag> {
        use WireMessage::*;
        match self {
            GkaRound1(_) | GkaRound2(_) | Beacon(_) => None,
            Hello(m) => Some(&mut m.mac),
            Challenge(m) | Broadcast(m) | Word1(m) | Word3(m) => Some(&mut m.mac),
            Confirm(m) | AuthAccept(m) | Pag1(m) | Pag2(m) | ToRsu(m) => Some(&mut m.mac),
            Pag3(m) | Bm1(m) | Word2(m) => Some(&mut m.mac),
            GkTransfer(m) => Some(&mut m.mac),
        }
    }

    /// The encoding with the trailing MAC or signature removed.
    pub fn authenticated_prefix(&self, group: &Group) -> Vec<u8> {
        let mut bytes = self.encode(group);
        let trailer = match self {
            WireMessage::GkaRound1(_) | WireMessage::GkaRound2(_) | WireMessage::Beacon(_) => {
                2 * group.element_width()
            }
            _ => TAG_LEN,
        };
        bytes.truncate(bytes.len() - trailer);
        bytes
    }

    /// Sets the MAC over the rest of the encoding. No-op for signed messages.
    pub fn authenticate(&mut self, group: &Group, key: &SymKey) {
        let tag = hmac(key, &self.authenticated_prefix(group));
        if let Some(m) = self.mac_mut() {
            *m = tag;
        }
    }

    pub fn verify_mac(&self, group: &Group, key: &SymKey) -> bool {
        match self.mac() {
            Some(tag) => hmac_verify(key, &self.authenticated_prefix(group), tag),
            None => false,
        }
    }

    /// Messages a vehicle sends to its RSU (or to the group the RSU belongs to).
    pub fn is_obu_to_rsu(&self) -> bool {
        matches!(
            self,
            WireMessage::Hello(_)
                | WireMessage::Confirm(_)
                | WireMessage::Pag1(_)
                | WireMessage::Broadcast(_)
                | WireMessage::ToRsu(_)
                | WireMessage::Word1(_)
        )
    }

    /// Identity plus integrity overhead in bytes: pseudonym fields and MAC fields.
    ///
    /// Pseudonyms count whether they travel in clear or at a fixed offset of the
    /// sealed plaintext (broadcast and directory request carry the sender inside
    /// the group envelope). Variable-length member lists are not counted.
    pub fn measure_overhead(&self) -> usize {
        use WireMessage::*;
        let (pseudonyms, macs) = match self {
            GkaRound1(_) | GkaRound2(_) | Beacon(_) => (0, 0),
            Hello(_) => (1, 1),
            Challenge(_) => (0, 1),
            Confirm(_) | AuthAccept(_) | Pag1(_) | Pag2(_) | ToRsu(_) => (1, 1),
            Pag3(_) | Bm1(_) | Word2(_) | GkTransfer(_) => (0, 1),
            Broadcast(_) | Word1(_) => (1, 1),
            // Sender and recipient inside the group envelope, outer and inner MAC.
            Word3(_) => (2, 2),
        };
        pseudonyms * PSEUDONYM_LEN + macs * TAG_LEN
    }

    /// Multi-line human-readable rendering.
    pub fn pretty(&self, group: &Group) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} (tag 0x{:02x}, {} bytes, overhead {})",
            self.name(),
            self.type_tag(),
            self.encode(group).len(),
            self.measure_overhead()
        );
        let field = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "  {k:<10} {v}");
        };
        match self {
            WireMessage::GkaRound1(m) => {
                field(&mut s, "tid", crate::ta::display_tid(&m.tid));
                field(&mut s, "X", m.x.to_string());
                field(&mut s, "R", m.r.to_string());
                field(&mut s, "T", m.t.to_string());
                field(&mut s, "sig.c", m.sig.challenge.to_string());
                field(&mut s, "sig.s", m.sig.response.to_string());
            }
            WireMessage::GkaRound2(m) => {
                field(&mut s, "tid", crate::ta::display_tid(&m.tid));
                field(&mut s, "Y", m.y.to_string());
                field(&mut s, "s", m.s.to_string());
                for (i, t) in m.tokens.iter().enumerate() {
                    field(&mut s, &format!("T[{i}]"), t.to_string());
                }
                field(&mut s, "sig.c", m.sig.challenge.to_string());
                field(&mut s, "sig.s", m.sig.response.to_string());
            }
            WireMessage::Beacon(b) => {
                field(&mut s, "pk_rsu", b.pk_rsu.to_string());
                field(&mut s, "loc_mm", format!("({}, {})", b.loc.x_mm, b.loc.y_mm));
                field(&mut s, "h(loc)", b.loc_hash.to_string());
                field(&mut s, "sig.c", b.ta_sig.challenge.to_string());
                field(&mut s, "sig.s", b.ta_sig.response.to_string());
            }
            WireMessage::Hello(m) => {
                field(&mut s, "pk_v", m.pk_v.to_string());
                field(&mut s, "ts_ms", m.ts_ms.to_string());
                field(&mut s, "E_gk(fid)", hex::encode(m.fast_fid));
                field(&mut s, "kem_u", m.kem_u.to_string());
                field(&mut s, "sealed", hex::encode(&m.sealed));
                field(&mut s, "mac", hex::encode(m.mac));
            }
            WireMessage::Challenge(m)
            | WireMessage::Broadcast(m)
            | WireMessage::Word1(m)
            | WireMessage::Word3(m) => {
                field(&mut s, "sealed", hex::encode(&m.sealed));
                field(&mut s, "mac", hex::encode(m.mac));
            }
            WireMessage::Confirm(m)
            | WireMessage::AuthAccept(m)
            | WireMessage::Pag1(m)
            | WireMessage::Pag2(m)
            | WireMessage::ToRsu(m) => {
                field(&mut s, "fid", m.fid.to_string());
                field(&mut s, "sealed", hex::encode(&m.sealed));
                field(&mut s, "mac", hex::encode(m.mac));
            }
            WireMessage::Pag3(m) | WireMessage::Bm1(m) | WireMessage::Word2(m) => {
                field(&mut s, "epoch", m.epoch.to_string());
                field(&mut s, "sealed", hex::encode(&m.sealed));
                field(&mut s, "mac", hex::encode(m.mac));
            }
            WireMessage::GkTransfer(m) => {
                field(&mut s, "source", crate::ta::display_tid(&m.source));
                field(&mut s, "epoch", m.epoch.to_string());
                field(&mut s, "sealed", hex::encode(&m.sealed));
                field(&mut s, "mac", hex::encode(m.mac));
            }
        }
        s
    }
}

/// Pulls fixed-width fields out of a decrypted payload.
pub(crate) struct PlainReader<'a, 'g> {
    inner: Reader<'a, 'g>,
}

impl<'a, 'g> PlainReader<'a, 'g> {
    pub(crate) fn new(group: &'g Group, buf: &'a [u8]) -> Self {
        PlainReader {
            inner: Reader { group, buf },
        }
    }
    pub(crate) fn elem(&mut self) -> Result<GElem, CodecError> {
        self.inner.elem()
    }
    pub(crate) fn scalar(&mut self) -> Result<Scalar, CodecError> {
        self.inner.scalar()
    }
    pub(crate) fn g1(&mut self) -> Result<crate::crypto::G1Elem, CodecError> {
        let w = self.inner.group.element_width();
        Ok(self.inner.group.decode_g1(self.inner.take(w)?)?)
    }
    pub(crate) fn fid(&mut self) -> Result<Pseudonym, CodecError> {
        self.inner.fid()
    }
    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        self.inner.u64()
    }
    pub(crate) fn u32(&mut self) -> Result<usize, CodecError> {
        self.inner.u32()
    }
    pub(crate) fn finish(self) -> Result<(), CodecError> {
        if self.inner.buf.is_empty() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(self.inner.buf.len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Profile;

    #[test]
    fn unknown_tag_and_truncation() {
        let g = Profile::Test.group().unwrap();
        assert_eq!(WireMessage::decode(&g, &[]), Err(CodecError::Empty));
        assert_eq!(WireMessage::decode(&g, &[0x7f]), Err(CodecError::UnknownTag(0x7f)));
        assert_eq!(WireMessage::decode(&g, &[tag::BROADCAST, 0, 0]), Err(CodecError::Truncated));
    }

    #[test]
    fn broadcast_framing_is_fixed() {
        let g = Profile::Desk64.group().unwrap();
        let msg = WireMessage::Broadcast(SealedMsg {
            sealed: vec![0u8; 200],
            mac: [0u8; 16],
        });
        // tag + length prefix + body + MAC.
        assert_eq!(msg.encode(&g).len(), 1 + 4 + 200 + 16);
        assert_eq!(msg.measure_overhead(), 58);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let g = Profile::Test.group().unwrap();
        let mut bytes = WireMessage::Word1(SealedMsg {
            sealed: vec![1, 2, 3],
            mac: [9u8; 16],
        })
        .encode(&g);
        bytes.push(0);
        assert_eq!(WireMessage::decode(&g, &bytes), Err(CodecError::TrailingBytes(1)));
    }

    #[test]
    fn hostile_length_prefix_is_bounded() {
        let g = Profile::Test.group().unwrap();
        let bytes = [tag::BROADCAST, 0xff, 0xff, 0xff, 0xff];
        assert!(matches!(WireMessage::decode(&g, &bytes), Err(CodecError::TooLong(_))));
        let bytes = [tag::GKA_ROUND2, 0, 0, 0, 0, 1, 1, 0, 0x10, 0, 0];
        assert_eq!(WireMessage::decode(&g, &bytes), Err(CodecError::Truncated));
    }
}
