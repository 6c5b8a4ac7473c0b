//! Analytic verification-delay and overhead models, and the per-message
//! delay metric used by the simulator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("scheme {0} has no {1} model")]
    UnknownScheme(Scheme, &'static str),
    #[error("unknown scheme name `{0}`")]
    UnknownSchemeName(String),
    #[error("fractions must lie in [0, 1] and sum to at most 1 (illegal {illegal}, reauth {reauth})")]
    BadFraction { illegal: f64, reauth: f64 },
    #[error("timing {0} must be finite and non-negative")]
    BadTiming(&'static str),
    #[error("no delay samples")]
    NoSamples,
}

/// Primitive costs in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveTimings {
    pub t_par: f64,
    pub t_mul: f64,
    pub t_mp: f64,
    pub t_hmac: f64,
    /// One symmetric decryption of a short field.
    pub t_sym: f64,
}

impl Default for PrimitiveTimings {
    fn default() -> Self {
        PrimitiveTimings {
            t_par: 4.5,
            t_mul: 0.6,
            t_mp: 0.6,
            t_hmac: 0.006,
            t_sym: 0.01,
        }
    }
}

impl PrimitiveTimings {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("t_par", self.t_par),
            ("t_mul", self.t_mul),
            ("t_mp", self.t_mp),
            ("t_hmac", self.t_hmac),
            ("t_sym", self.t_sym),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CostError::BadTiming(name));
            }
        }
        Ok(())
    }

    /// Cost of re-admitting a vehicle through the neighbour-key fast path.
    pub fn fastpath_cost(&self) -> f64 {
        2.0 * self.t_hmac + self.t_sym
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ibv,
    Ecpp,
    Rmaka,
    Acp,
    Ours,
    Abaka,
    Argbv,
}

impl Scheme {
    pub const DELAY_SCHEMES: [Scheme; 5] = [Scheme::Ibv, Scheme::Ecpp, Scheme::Rmaka, Scheme::Acp, Scheme::Ours];
    pub const OVERHEAD_SCHEMES: [Scheme; 4] = [Scheme::Rmaka, Scheme::Abaka, Scheme::Argbv, Scheme::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ibv => "ibv",
            Scheme::Ecpp => "ecpp",
            Scheme::Rmaka => "rmaka",
            Scheme::Acp => "acp",
            Scheme::Ours => "ours",
            Scheme::Abaka => "abaka",
            Scheme::Argbv => "argbv",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Scheme::Ibv,
            Scheme::Ecpp,
            Scheme::Rmaka,
            Scheme::Acp,
            Scheme::Ours,
            Scheme::Abaka,
            Scheme::Argbv,
        ]
        .into_iter()
        .find(|sc| sc.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| CostError::UnknownSchemeName(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Obu,
    Rsu,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Obu => "obu",
            Side::Rsu => "rsu",
        })
    }
}

/// Operation counts `(par, mul, mp)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub par: u32,
    pub mul: u32,
    pub mp: u32,
}

impl OpCounts {
    pub const fn new(par: u32, mul: u32, mp: u32) -> Self {
        OpCounts { par, mul, mp }
    }

    pub fn cost(&self, t: &PrimitiveTimings) -> f64 {
        self.par as f64 * t.t_par + self.mul as f64 * t.t_mul + self.mp as f64 * t.t_mp
    }
}

/// `n · per_n + constant`, evaluated as 0 when `n = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostForm {
    pub per_n: OpCounts,
    pub constant: OpCounts,
}

impl CostForm {
    pub fn eval(&self, n: u64, t: &PrimitiveTimings) -> f64 {
        if n == 0 {
            return 0.0;
        }
        n as f64 * self.per_n.cost(t) + self.constant.cost(t)
    }
}

pub fn cost_form(scheme: Scheme, side: Side) -> Result<CostForm, CostError> {
    let f = |per_n, constant| CostForm { per_n, constant };
    let zero = OpCounts::default();
    Ok(match (scheme, side) {
        (Scheme::Ibv, Side::Obu) => f(OpCounts::new(0, 5, 2), zero),
        (Scheme::Ibv, Side::Rsu) => f(OpCounts::new(0, 1, 1), OpCounts::new(3, 1, 0)),
        (Scheme::Ecpp, Side::Obu) => f(OpCounts::new(1, 4, 0), zero),
        (Scheme::Ecpp, Side::Rsu) => f(OpCounts::new(3, 2, 0), zero),
        (Scheme::Rmaka, _) => f(OpCounts::new(0, 4, 0), zero),
        (Scheme::Acp, Side::Obu) => f(OpCounts::new(0, 1, 0), zero),
        (Scheme::Acp, Side::Rsu) => f(OpCounts::new(0, 2, 0), OpCounts::new(3, 1, 0)),
        (Scheme::Ours, Side::Obu) => f(OpCounts::new(2, 5, 1), zero),
        (Scheme::Ours, Side::Rsu) => f(OpCounts::new(2, 4, 0), zero),
        (s, _) => return Err(CostError::UnknownScheme(s, "verification-delay")),
    })
}

/// Time in ms to complete `n` verifications.
pub fn verification_delay(scheme: Scheme, side: Side, n: u64, t: &PrimitiveTimings) -> Result<f64, CostError> {
    Ok(cost_form(scheme, side)?.eval(n, t))
}

/// RSU cost when only illegal and re-authenticating vehicles run the full
/// handshake and the rest are admitted through the fast path.
pub fn effective_rsu_delay(n: u64, illegal: f64, reauth: f64, t: &PrimitiveTimings) -> Result<f64, CostError> {
    let ok = |x: f64| (0.0..=1.0).contains(&x);
    if !ok(illegal) || !ok(reauth) || illegal + reauth > 1.0 + 1e-12 {
        return Err(CostError::BadFraction { illegal, reauth });
    }
    let full = verification_delay(Scheme::Ours, Side::Rsu, 1, t)?;
    let slow = illegal + reauth;
    Ok(n as f64 * (slow * full + (1.0 - slow).max(0.0) * t.fastpath_cost()))
}

/// Bytes for `n` OBU→RSU messages.
pub fn transmission_overhead(scheme: Scheme, n: u64) -> Result<u64, CostError> {
    let per = match scheme {
        Scheme::Rmaka => 167,
        Scheme::Abaka => 84,
        Scheme::Argbv => 63,
        Scheme::Ours => 58,
        s => return Err(CostError::UnknownScheme(s, "transmission-overhead")),
    };
    Ok(per * n)
}

/// Timing of one message as seen by one receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub creator: u64,
    pub message: u64,
    pub receiver: u64,
    pub t_create: f64,
    pub t_transmit: f64,
    pub t_verify: f64,
}

impl DelaySample {
    pub fn total(&self) -> f64 {
        self.t_create + self.t_transmit + self.t_verify
    }
}

/// Mean over creators of the mean over their messages. A message received by
/// several nodes contributes the mean over its receivers.
pub fn average_delay(samples: &[DelaySample]) -> Result<f64, CostError> {
    if samples.is_empty() {
        return Err(CostError::NoSamples);
    }
    let mut by_creator: BTreeMap<u64, BTreeMap<u64, BTreeMap<u64, f64>>> = BTreeMap::new();
    for s in samples {
        by_creator
            .entry(s.creator)
            .or_default()
            .entry(s.message)
            .or_default()
            .insert(s.receiver, s.total());
    }
    let mean = |it: &mut dyn ExactSizeIterator<Item = f64>| {
        let len = it.len() as f64;
        it.sum::<f64>() / len
    };
    let per_creator: Vec<f64> = by_creator
        .values()
        .map(|msgs| {
            let per_msg: Vec<f64> = msgs.values().map(|rx| mean(&mut rx.values().copied())).collect();
            mean(&mut per_msg.into_iter())
        })
        .collect();
    Ok(mean(&mut per_creator.into_iter()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayRow {
    pub n: u64,
    pub scheme: Scheme,
    pub side: Side,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OverheadRow {
    pub n: u64,
    pub scheme: Scheme,
    pub bytes: u64,
}

fn n_values(n_max: u64, step: u64) -> impl Iterator<Item = u64> {
    let step = step.max(1);
    let mut v: Vec<u64> = (0..=n_max).step_by(step as usize).filter(|n| *n > 0).collect();
    if v.first() != Some(&1) {
        v.insert(0, 1);
    }
    if v.last() != Some(&n_max) && n_max > 0 {
        v.push(n_max);
    }
    v.into_iter()
}

/// Every verification-delay model at `n = 1, step, 2·step, …, n_max`.
pub fn delay_table(n_max: u64, step: u64, t: &PrimitiveTimings) -> Vec<DelayRow> {
    let mut rows = Vec::new();
    for n in n_values(n_max, step) {
        for scheme in Scheme::DELAY_SCHEMES {
            for side in [Side::Obu, Side::Rsu] {
                let ms = verification_delay(scheme, side, n, t).expect("delay scheme");
                rows.push(DelayRow { n, scheme, side, ms });
            }
        }
    }
    rows
}

pub fn overhead_table(n_max: u64, step: u64) -> Vec<OverheadRow> {
    let mut rows = Vec::new();
    for n in n_values(n_max, step) {
        for scheme in Scheme::OVERHEAD_SCHEMES {
            let bytes = transmission_overhead(scheme, n).expect("overhead scheme");
            rows.push(OverheadRow { n, scheme, bytes });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < EPS
    }

    #[test]
    fn our_rows_at_one() {
        let t = PrimitiveTimings::default();
        assert!(close(verification_delay(Scheme::Ours, Side::Rsu, 1, &t).unwrap(), 11.4));
        assert!(close(verification_delay(Scheme::Ours, Side::Obu, 1, &t).unwrap(), 12.6));
        assert!(close(verification_delay(Scheme::Ours, Side::Rsu, 100, &t).unwrap(), 1140.0));
    }

    #[test]
    fn zero_vehicles_cost_nothing() {
        let t = PrimitiveTimings::default();
        for s in Scheme::DELAY_SCHEMES {
            for side in [Side::Obu, Side::Rsu] {
                assert_eq!(verification_delay(s, side, 0, &t).unwrap(), 0.0);
            }
        }
        for s in Scheme::OVERHEAD_SCHEMES {
            assert_eq!(transmission_overhead(s, 0).unwrap(), 0);
        }
    }

    #[test]
    fn unknown_schemes() {
        let t = PrimitiveTimings::default();
        assert!(matches!(
            verification_delay(Scheme::Abaka, Side::Rsu, 1, &t),
            Err(CostError::UnknownScheme(Scheme::Abaka, _))
        ));
        assert!(transmission_overhead(Scheme::Ecpp, 1).is_err());
        assert!("nope".parse::<Scheme>().is_err());
        assert_eq!("ARGBV".parse::<Scheme>().unwrap(), Scheme::Argbv);
    }

    #[test]
    fn overhead_rows() {
        assert_eq!(transmission_overhead(Scheme::Ours, 10).unwrap(), 580);
        assert_eq!(transmission_overhead(Scheme::Argbv, 1).unwrap(), 63);
    }

    #[test]
    fn effective_delay_cases() {
        let t = PrimitiveTimings::default();
        assert!(close(
            effective_rsu_delay(37, 0.0, 1.0, &t).unwrap(),
            verification_delay(Scheme::Ours, Side::Rsu, 37, &t).unwrap()
        ));
        assert!(close(effective_rsu_delay(100, 0.05, 0.0, &t).unwrap(), 5.0 * 11.4 + 95.0 * 0.022));
        let free = PrimitiveTimings { t_hmac: 0.0, t_sym: 0.0, ..t };
        assert_eq!(effective_rsu_delay(100, 0.0, 0.0, &free).unwrap(), 0.0);
        assert!(effective_rsu_delay(1, 0.6, 0.6, &t).is_err());
        assert!(effective_rsu_delay(1, -0.1, 0.0, &t).is_err());
    }

    #[test]
    fn average_delay_examples() {
        let s = |creator, message, c, tr, v| DelaySample {
            creator,
            message,
            receiver: 0,
            t_create: c,
            t_transmit: tr,
            t_verify: v,
        };
        assert!(close(average_delay(&[s(1, 1, 1.0, 2.0, 3.0)]).unwrap(), 6.0));
        let two = [s(1, 1, 6.0, 0.0, 0.0), s(1, 2, 0.0, 10.0, 0.0), s(2, 1, 0.0, 0.0, 4.0)];
        assert!(close(average_delay(&two).unwrap(), 6.0));
        assert_eq!(average_delay(&[s(1, 1, 0.0, 0.0, 0.0)]).unwrap(), 0.0);
        assert_eq!(average_delay(&[]), Err(CostError::NoSamples));
    }

    #[test]
    fn tables_cover_endpoints() {
        let t = PrimitiveTimings::default();
        let rows = delay_table(200, 10, &t);
        assert_eq!(rows.first().unwrap().n, 1);
        assert_eq!(rows.last().unwrap().n, 200);
        assert_eq!(rows.len(), 21 * 10);
        assert_eq!(overhead_table(200, 10).len(), 21 * 4);
    }
}
