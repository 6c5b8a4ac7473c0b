//! Deniable group key agreement for vehicular networks.
//!
//! RSUs agree on a shared session key with a two-round deniable protocol,
//! authenticate vehicles without contacting the trust authority, form a
//! per-RSU vehicle group with a negotiated group key, and hand that key to
//! neighbouring RSUs so that a vehicle crossing ranges can skip the pairing
//! based handshake.
//!
//! The pairing is a toy instantiation over `Z_q`; see [`crypto::group`].

pub mod auth;
pub mod codec;
pub mod comm;
pub mod cost;
pub mod crypto;
pub mod gka;
pub mod group_key;
pub mod params;
pub mod ta;
