use proptest::prelude::*;
use vanet_sim::{run_scenario, ScenarioConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accounting_holds_for_random_scenarios(
        n in 0usize..25,
        n_rsus in 1usize..4,
        seed in any::<u64>(),
        speed in 0.0f64..35.0,
        illegal in 0.0f64..0.3,
        size in 16usize..600,
    ) {
        let cfg = ScenarioConfig {
            n_vehicles: n,
            n_rsus,
            rng_seed: seed,
            vehicle_speed_mps: speed,
            illegal_fraction: illegal,
            message_size_bytes: size,
            sim_time_s: 3.0,
            ..ScenarioConfig::default()
        };
        let r = run_scenario(&cfg).unwrap();
        prop_assert_eq!(r.overhead_exceptions, 0);
        prop_assert_eq!(r.total_overhead_bytes, 58 * r.obu_to_rsu_messages);
        prop_assert_eq!(r.overhead_by_type.values().sum::<u64>(), r.total_overhead_bytes);
        prop_assert_eq!(r.messages_by_type.values().sum::<u64>(), r.messages_sent);
        prop_assert_eq!(r.vehicles.len(), n);
        prop_assert_eq!(r.average_delay_ms.is_some(), r.delay_samples > 0);
        if let Some(d) = r.average_delay_ms {
            prop_assert!(d > 0.0 && d.is_finite());
        }
        for v in &r.vehicles {
            prop_assert!(v.full_auths <= 1 + v.invalidated);
            if v.illegal {
                prop_assert_eq!(v.admissions, 0);
            }
        }
    }
}
