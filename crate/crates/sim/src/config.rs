use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vanet_gka::cost::PrimitiveTimings;
use vanet_gka::params::Profile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Scenario parameters. Field names double as the JSON keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub road_length_m: f64,
    pub sim_time_s: f64,
    pub message_size_bytes: usize,
    pub broadcast_interval_ms: f64,
    /// Half-width of the uniform jitter added to each broadcast interval.
    pub interval_variance_s: f64,
    pub rsu_range_m: f64,
    pub vehicle_range_m: f64,
    pub bandwidth_mbps: f64,
    pub n_vehicles: usize,
    pub n_rsus: usize,
    pub vehicle_speed_mps: f64,
    pub illegal_fraction: f64,
    pub rng_seed: u64,
    pub timings: PrimitiveTimings,

    pub profile: Profile,
    pub beacon_interval_ms: f64,
    pub delta_max_ms: u64,
    pub gk_transfer: bool,
    pub propagation_us: f64,
    pub wired_latency_ms: f64,
    /// Delay between admission at a new RSU and leaving the old group.
    pub leave_delay_ms: f64,
    /// Share of periodic messages sent to the RSU instead of the group.
    pub to_rsu_fraction: f64,
    /// Share of periodic messages sent to a single peer.
    pub peer_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            road_length_m: 1000.0,
            sim_time_s: 20.0,
            message_size_bytes: 200,
            broadcast_interval_ms: 300.0,
            interval_variance_s: 0.05,
            rsu_range_m: 600.0,
            vehicle_range_m: 300.0,
            bandwidth_mbps: 6.0,
            n_vehicles: 40,
            n_rsus: 2,
            vehicle_speed_mps: 20.0,
            illegal_fraction: 0.05,
            rng_seed: 1,
            timings: PrimitiveTimings::default(),
            profile: Profile::Desk64,
            beacon_interval_ms: 300.0,
            delta_max_ms: 500,
            gk_transfer: true,
            propagation_us: 1.0,
            wired_latency_ms: 1.0,
            leave_delay_ms: 300.0,
            to_rsu_fraction: 0.2,
            peer_fraction: 0.05,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("road_length_m", self.road_length_m),
            ("sim_time_s", self.sim_time_s),
            ("broadcast_interval_ms", self.broadcast_interval_ms),
            ("rsu_range_m", self.rsu_range_m),
            ("vehicle_range_m", self.vehicle_range_m),
            ("bandwidth_mbps", self.bandwidth_mbps),
            ("beacon_interval_ms", self.beacon_interval_ms),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [
            ("interval_variance_s", self.interval_variance_s),
            ("vehicle_speed_mps", self.vehicle_speed_mps),
            ("propagation_us", self.propagation_us),
            ("wired_latency_ms", self.wired_latency_ms),
            ("leave_delay_ms", self.leave_delay_ms),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        for (field, v) in [
            ("illegal_fraction", self.illegal_fraction),
            ("to_rsu_fraction", self.to_rsu_fraction),
            ("peer_fraction", self.peer_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.to_rsu_fraction + self.peer_fraction > 1.0 {
            return Err(invalid("peer_fraction", "to_rsu_fraction + peer_fraction exceeds 1"));
        }
        if self.interval_variance_s * 1000.0 >= self.broadcast_interval_ms {
            return Err(invalid("interval_variance_s", "jitter must be smaller than the interval"));
        }
        if self.n_rsus == 0 {
            return Err(invalid("n_rsus", "at least one RSU is required"));
        }
        if self.message_size_bytes == 0 {
            return Err(invalid("message_size_bytes", "must be positive"));
        }
        if self.delta_max_ms == 0 {
            return Err(invalid("delta_max_ms", "must be positive"));
        }
        self.timings
            .validate()
            .map_err(|e| invalid("timings", e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ScenarioConfig = serde_json::from_str(r#"{"n_vehicles": 7, "timings": {"t_par": 5.0}}"#).unwrap();
        assert_eq!(c.n_vehicles, 7);
        assert_eq!(c.timings.t_par, 5.0);
        assert_eq!(c.timings.t_mul, 0.6);
        assert_eq!(c.road_length_m, 1000.0);
    }

    #[test]
    fn rejects_bad_values() {
        let c = ScenarioConfig {
            bandwidth_mbps: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid { field: "bandwidth_mbps", .. })));
        let c = ScenarioConfig {
            illegal_fraction: 1.5,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"n_vehicle": 3}"#).is_err());
    }
}
