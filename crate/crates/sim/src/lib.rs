//! Discrete-event simulation of the vehicular group-key stack, density
//! sweeps and the command-line front end.

pub mod cli;
pub mod config;
pub mod sim;
pub mod sweep;

pub use config::{ConfigError, ScenarioConfig};
pub use sim::{run_scenario, MetricsReport, SimError, VehicleStats};
pub use sweep::{sweep_density, sweep_reports, write_rows, SweepRow};
