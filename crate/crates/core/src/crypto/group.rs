//! The signed quadratic-residue group `G`, the additive group `G1 = (Z_q, +)`
//! and a toy symmetric pairing `e(a, b) = gT^{ab}` between them.
//!
//! For a safe prime `p = 2q + 1` the quadratic residues mod `p` form a group
//! of prime order `q`. Folding every residue `x` to `min(x, p - x)` picks a
//! canonical representative in `[1, q]`; multiplying or exponentiating
//! representatives and folding the result is a well defined group law because
//! `-1` is a non-residue. All elements of `[1, q]` are therefore members of
//! `G`, which makes membership checks a range check.
//!
//! The pairing is deliberately insecure: discrete logs in `G1` are the scalars
//! themselves. It satisfies bilinearity, non-degeneracy and computability,
//! which is all the protocol algebra relies on.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::CryptoError;

/// Element of `G`, a value in `[1, q]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GElem(BigUint);

/// Element of `G1 = (Z_q, +)`; `a·P` is the scalar `a` itself.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct G1Elem(BigUint);

/// Integer mod `q`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

macro_rules! bigint_newtype {
    ($ty:ident, $name:literal) => {
        impl $ty {
            pub fn value(&self) -> &BigUint {
                &self.0
            }

            pub fn to_u64(&self) -> Option<u64> {
                let digits = self.0.to_u64_digits();
                match digits.len() {
                    0 => Some(0),
                    1 => Some(digits[0]),
                    _ => None,
                }
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($name, "({})"), self.0)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }

        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0.to_str_radix(10))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                BigUint::parse_bytes(s.as_bytes(), 10)
                    .map($ty)
                    .ok_or_else(|| serde::de::Error::custom(concat!("invalid decimal ", $name)))
            }
        }
    };
}

bigint_newtype!(GElem, "GElem");
bigint_newtype!(G1Elem, "G1Elem");
bigint_newtype!(Scalar, "Scalar");

/// Abstract bilinear map `e: G1 × G1 → GT`.
///
/// Protocol code is written against the concrete [`Group`], but everything it
/// needs from the pairing is expressible through this trait.
pub trait BilinearMap {
    type G1;
    type Gt;

    fn g1_generator(&self) -> Self::G1;
    fn pair(&self, a: &Self::G1, b: &Self::G1) -> Self::Gt;
}

/// Parameters `(p, q, g, gT)` and all arithmetic over `G`, `G1` and `Z_q`.
#[derive(Clone, PartialEq, Eq)]
pub struct Group {
    p: BigUint,
    q: BigUint,
    g: GElem,
    gt: GElem,
    width: usize,
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Group")
            .field("p", &self.p.to_str_radix(10))
            .field("g", &self.g)
            .field("gt", &self.gt)
            .finish()
    }
}

fn is_probable_prime(n: &BigUint) -> bool {
    num_prime::nt_funcs::is_prime(n, None).probably()
}

impl Group {
    /// Validates `p = 2q + 1` with both prime, and that `g` and `gT` generate `G`.
    pub fn new(p: BigUint, g: BigUint, gt: BigUint) -> Result<Self, CryptoError> {
        if p < BigUint::from(7u32) || p.is_even() {
            return Err(CryptoError::NotSafePrime);
        }
        let q: BigUint = (&p - 1u32) >> 1;
        if !is_probable_prime(&q) || !is_probable_prime(&p) {
            return Err(CryptoError::NotSafePrime);
        }
        let width = p.bits().div_ceil(8) as usize;
        let mut group = Group {
            p,
            q,
            g: GElem(BigUint::one()),
            gt: GElem(BigUint::one()),
            width,
        };
        let g = group.check_generator(&g)?;
        let gt = group.check_generator(&gt)?;
        group.g = g;
        group.gt = gt;
        Ok(group)
    }

    fn check_generator(&self, candidate: &BigUint) -> Result<GElem, CryptoError> {
        let elem = self.elem(candidate.clone()).map_err(|_| CryptoError::BadGenerator)?;
        // Prime order: any element other than 1 generates. Still confirm g^q = 1.
        if elem.0.is_one() || !self.fold_raw(elem.0.modpow(&self.q, &self.p)).is_one() {
            return Err(CryptoError::BadGenerator);
        }
        Ok(elem)
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn generator(&self) -> &GElem {
        &self.g
    }

    pub fn pairing_generator(&self) -> &GElem {
        &self.gt
    }

    /// Bytes per serialized element or scalar: `ceil(bitlen(p) / 8)`.
    pub fn element_width(&self) -> usize {
        self.width
    }

    fn fold_raw(&self, x: BigUint) -> BigUint {
        if x <= self.q {
            x
        } else {
            &self.p - x
        }
    }

    /// The folding map `f`: `x` if `x ≤ q`, else `p − x`.
    pub fn fold(&self, x: &BigUint) -> Result<GElem, CryptoError> {
        if x.is_zero() || x >= &self.p {
            return Err(CryptoError::OutOfRange);
        }
        Ok(GElem(self.fold_raw(x.clone())))
    }

    /// Interprets `value` as an element of `G`; accepts exactly `[1, q]`.
    pub fn elem(&self, value: BigUint) -> Result<GElem, CryptoError> {
        if value.is_zero() || value > self.q {
            return Err(CryptoError::OutOfRange);
        }
        Ok(GElem(value))
    }

    pub fn elem_u64(&self, value: u64) -> Result<GElem, CryptoError> {
        self.elem(BigUint::from(value))
    }

    pub fn identity(&self) -> GElem {
        GElem(BigUint::one())
    }

    /// `a^b := f(a^b mod p)`; exponents live in `Z_q`.
    pub fn exp(&self, a: &GElem, b: &Scalar) -> GElem {
        GElem(self.fold_raw(a.0.modpow(&b.0, &self.p)))
    }

    /// `g^b`.
    pub fn g_pow(&self, b: &Scalar) -> GElem {
        self.exp(&self.g, b)
    }

    pub fn mul(&self, a: &GElem, b: &GElem) -> GElem {
        GElem(self.fold_raw((&a.0 * &b.0) % &self.p))
    }

    pub fn inv(&self, a: &GElem) -> GElem {
        // a^{q-1} = a^{-1} in a group of order q.
        self.exp(a, &Scalar(&self.q - 1u32))
    }

    pub fn div(&self, a: &GElem, b: &GElem) -> GElem {
        self.mul(a, &self.inv(b))
    }

    pub fn product<'a>(&self, elems: impl IntoIterator<Item = &'a GElem>) -> GElem {
        elems
            .into_iter()
            .fold(self.identity(), |acc, e| self.mul(&acc, e))
    }

    // ---- Z_q ----

    pub fn scalar(&self, value: BigUint) -> Scalar {
        Scalar(value % &self.q)
    }

    pub fn scalar_u64(&self, value: u64) -> Scalar {
        self.scalar(BigUint::from(value))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.q - &b.0) % &self.q)
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    /// Multiplicative inverse mod `q`; `None` for zero.
    pub fn scalar_inv(&self, a: &Scalar) -> Option<Scalar> {
        if a.0.is_zero() {
            return None;
        }
        // q is prime: a^{q-2}.
        Some(Scalar(a.0.modpow(&(&self.q - 2u32), &self.q)))
    }

    /// Uniform element of `Z_q^*`.
    pub fn random_nonzero_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar(self.uniform_below(rng, &(&self.q - 1u32)) + 1u32)
    }

    /// Uniform element of `Z_q`.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar(self.uniform_below(rng, &self.q))
    }

    pub fn random_elem<R: RngCore + ?Sized>(&self, rng: &mut R) -> GElem {
        self.g_pow(&self.random_nonzero_scalar(rng))
    }

    pub fn random_g1<R: RngCore + ?Sized>(&self, rng: &mut R) -> G1Elem {
        G1Elem(self.uniform_below(rng, &self.q))
    }

    /// Reduction of `width + 16` random bytes; the bias is below 2^-128.
    fn uniform_below<R: RngCore + ?Sized>(&self, rng: &mut R, bound: &BigUint) -> BigUint {
        let mut buf = vec![0u8; self.width + 16];
        rng.fill_bytes(&mut buf);
        BigUint::from_bytes_be(&buf) % bound
    }

    // ---- G1 ----

    pub fn g1(&self, value: BigUint) -> G1Elem {
        G1Elem(value % &self.q)
    }

    pub fn g1_u64(&self, value: u64) -> G1Elem {
        self.g1(BigUint::from(value))
    }

    /// `a·X`.
    pub fn g1_mul(&self, a: &Scalar, x: &G1Elem) -> G1Elem {
        G1Elem((&a.0 * &x.0) % &self.q)
    }

    pub fn g1_add(&self, x: &G1Elem, y: &G1Elem) -> G1Elem {
        G1Elem((&x.0 + &y.0) % &self.q)
    }

    /// `a·P`.
    pub fn g1_base_mul(&self, a: &Scalar) -> G1Elem {
        G1Elem(a.0.clone())
    }

    /// `e(a, b) = gT^{a·b mod q}`.
    pub fn pair(&self, a: &G1Elem, b: &G1Elem) -> GElem {
        let e = Scalar((&a.0 * &b.0) % &self.q);
        self.exp(&self.gt, &e)
    }

    // ---- fixed-width encoding ----

    /// Big-endian, left padded to `element_width` bytes.
    pub fn encode_uint(&self, v: &BigUint, out: &mut Vec<u8>) {
        let bytes = v.to_bytes_be();
        debug_assert!(bytes.len() <= self.width);
        out.resize(out.len() + self.width - bytes.len().min(self.width), 0);
        out.extend_from_slice(&bytes);
    }

    pub fn elem_bytes(&self, e: &GElem) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width);
        self.encode_uint(&e.0, &mut out);
        out
    }

    pub fn scalar_bytes(&self, s: &Scalar) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width);
        self.encode_uint(&s.0, &mut out);
        out
    }

    pub fn g1_bytes(&self, x: &G1Elem) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width);
        self.encode_uint(&x.0, &mut out);
        out
    }

    pub fn decode_elem(&self, bytes: &[u8]) -> Result<GElem, CryptoError> {
        self.check_width(bytes)?;
        self.elem(BigUint::from_bytes_be(bytes))
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, CryptoError> {
        self.check_width(bytes)?;
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.q {
            return Err(CryptoError::OutOfRange);
        }
        Ok(Scalar(v))
    }

    pub fn decode_g1(&self, bytes: &[u8]) -> Result<G1Elem, CryptoError> {
        self.check_width(bytes)?;
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.q {
            return Err(CryptoError::OutOfRange);
        }
        Ok(G1Elem(v))
    }

    fn check_width(&self, bytes: &[u8]) -> Result<(), CryptoError> {
        if bytes.len() != self.width {
            return Err(CryptoError::BadLength {
                expected: self.width,
                actual: bytes.len(),
            });
        }
        Ok(())
    }
}

impl BilinearMap for Group {
    type G1 = G1Elem;
    type Gt = GElem;

    fn g1_generator(&self) -> G1Elem {
        G1Elem(BigUint::one())
    }

    fn pair(&self, a: &G1Elem, b: &G1Elem) -> GElem {
        Group::pair(self, a, b)
    }
}
