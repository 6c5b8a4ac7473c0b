use vanet_sim::{run_scenario, sweep_density, write_rows, ScenarioConfig};

fn short(n: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_vehicles: n,
        rng_seed: seed,
        sim_time_s: 6.0,
        ..ScenarioConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let cfg = short(20, 9);
    let a = serde_json::to_string(&run_scenario(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_scenario(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = run_scenario(&short(20, 10)).unwrap();
    assert_ne!(serde_json::to_string(&other).unwrap(), a);
}

#[test]
fn empty_road_is_silent() {
    let r = run_scenario(&short(0, 1)).unwrap();
    assert_eq!(r.average_delay_ms, None);
    assert_eq!(r.messages_sent, 0);
    assert_eq!(r.total_overhead_bytes, 0);
    assert_eq!(r.delay_samples, 0);
}

#[test]
fn doubling_density_never_lowers_overhead() {
    for seed in 1..=10 {
        let small = run_scenario(&short(10, seed)).unwrap();
        let big = run_scenario(&short(20, seed)).unwrap();
        assert!(
            big.total_overhead_bytes >= small.total_overhead_bytes,
            "seed {seed}: {} < {}",
            big.total_overhead_bytes,
            small.total_overhead_bytes
        );
    }
}

#[test]
fn overhead_is_conserved_across_types() {
    let r = run_scenario(&short(30, 4)).unwrap();
    assert_eq!(r.overhead_by_type.values().sum::<u64>(), r.total_overhead_bytes);
    assert_eq!(r.total_overhead_bytes, 58 * r.obu_to_rsu_messages);
    assert_eq!(r.messages_by_type.values().sum::<u64>(), r.messages_sent);
    assert!(r.delay_samples <= r.deliveries);
}

#[test]
fn legal_vehicles_are_admitted_promptly() {
    let cfg = ScenarioConfig {
        illegal_fraction: 0.0,
        ..short(30, 5)
    };
    let r = run_scenario(&cfg).unwrap();
    let end_ms = cfg.sim_time_s * 1000.0;
    assert_eq!(r.failed_auths, 0);
    for (i, v) in r.vehicles.iter().enumerate() {
        assert!(!v.illegal);
        assert!(v.admissions >= 1, "vehicle {i} never admitted");
        assert_eq!(v.abandoned, 0, "vehicle {i}");
        if let Some(t) = v.pending_since_ms {
            assert!(end_ms - t < 2000.0, "vehicle {i} pending since {t} ms");
        }
    }
}

#[test]
fn illegal_vehicles_never_join() {
    let cfg = ScenarioConfig {
        illegal_fraction: 0.5,
        ..short(20, 6)
    };
    let r = run_scenario(&cfg).unwrap();
    let illegal: Vec<_> = r.vehicles.iter().filter(|v| v.illegal).collect();
    assert!(!illegal.is_empty());
    assert!(illegal.iter().all(|v| v.admissions == 0));
    assert!(r.failed_auths > 0);
}

#[test]
fn fast_path_engages_on_handoff() {
    let r = run_scenario(&ScenarioConfig::default()).unwrap();
    assert!(r.fastpath_count > 0);
    let admitted: u64 = r.vehicles.iter().map(|v| v.admissions).sum();
    assert_eq!(r.auth_count + r.fastpath_count, admitted);
    for v in &r.vehicles {
        assert!(v.full_auths <= 1 + v.invalidated, "{v:?}");
    }
}

#[test]
fn fast_path_off_without_key_transfer() {
    let cfg = ScenarioConfig {
        gk_transfer: false,
        ..short(20, 2)
    };
    assert_eq!(run_scenario(&cfg).unwrap().fastpath_count, 0);
}

#[test]
fn single_density_sweep_writes_one_row() {
    let rows = sweep_density(&short(10, 3), &[10]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n, 10);
    assert!(rows[0].delay_ms.is_some());
    let mut out = Vec::new();
    write_rows(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,delay_ms,overhead_bytes");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("10,"));
}
