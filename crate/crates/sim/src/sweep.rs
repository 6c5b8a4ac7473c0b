use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::sim::{run_scenario, MetricsReport, SimError};

/// One density point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub delay_ms: Option<f64>,
    pub overhead_bytes: u64,
}

impl From<&MetricsReport> for SweepRow {
    fn from(r: &MetricsReport) -> Self {
        SweepRow {
            n: r.n_vehicles,
            delay_ms: r.average_delay_ms,
            overhead_bytes: r.total_overhead_bytes,
        }
    }
}

/// Full reports for every `(n, seed)` pair, in input order. Runs are
/// independent and execute in parallel.
pub fn sweep_reports(cfg: &ScenarioConfig, n_list: &[usize], seeds: &[u64]) -> Result<Vec<MetricsReport>, SimError> {
    cfg.validate()?;
    let jobs: Vec<ScenarioConfig> = n_list
        .iter()
        .flat_map(|&n| {
            seeds.iter().map(move |&seed| ScenarioConfig {
                n_vehicles: n,
                rng_seed: seed,
                ..cfg.clone()
            })
        })
        .collect();
    jobs.par_iter().map(run_scenario).collect()
}

/// One row per density at the configured seed.
pub fn sweep_density(cfg: &ScenarioConfig, n_list: &[usize]) -> Result<Vec<SweepRow>, SimError> {
    Ok(sweep_reports(cfg, n_list, &[cfg.rng_seed])?
        .iter()
        .map(SweepRow::from)
        .collect())
}

/// CSV with header `n,delay_ms,overhead_bytes`; an absent delay is an empty cell.
pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let rows = [
            SweepRow { n: 0, delay_ms: None, overhead_bytes: 0 },
            SweepRow { n: 10, delay_ms: Some(1.5), overhead_bytes: 580 },
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,delay_ms,overhead_bytes\n0,,0\n10,1.5,580\n");
    }
}
