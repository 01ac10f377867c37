use isac_cli::config::{db_to_linear, dbm_to_watts, DiscConfig, RunConfig};
use isac_core::optimizer::Scheme;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = RunConfig> {
    (
        (1.0..500.0f64, 3usize..40, 1.0..30.0f64, 5.0..100.0f64, -80.0..-40.0f64, 0.0..40.0f64),
        (-120.0..-80.0f64, -120.0..-80.0f64, 30.0..70.0f64, 1.0..500.0f64, 1usize..6, prop_oneof![Just(f64::INFINITY), 0.1..50.0f64]),
        prop::collection::vec((-300.0..300.0f64, -300.0..300.0f64), 1..6),
        prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, 0.0..80.0f64), 1..4),
        (any::<u64>(), prop_oneof![Just(Scheme::Proposed), Just(Scheme::Adj), Just(Scheme::Fix)], any::<bool>(), 0.0..20.0f64),
    )
        .prop_map(|(a, b, users, discs, (seed, scheme, snr, det))| {
            let mut c = RunConfig::default();
            let s = &mut c.system;
            (s.period_s, s.slots, s.max_speed_mps, s.altitude_m, s.beta_db, s.power_dbm) = a;
            (s.comm_noise_dbm, s.sensing_noise_dbm, s.rcs_gain_db, s.alpha_t, s.window, s.crb_limit_m2) = b;
            if snr {
                s.detection_snr_db = Some(det);
            } else {
                s.detection_radius_m = Some(100.0 + 10.0 * det);
            }
            c.users = users.into_iter().map(|(x, y)| [x, y]).collect();
            c.region = discs.into_iter().map(|(x, y, r)| DiscConfig { center: [x, y], radius: r }).collect();
            c.seed = seed;
            c.scheme = scheme;
            c
        })
}

proptest! {
    #[test]
    fn serialization_round_trips(c in config()) {
        let text = c.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn human_units_convert_to_linear(c in config()) {
        let p = match c.params() {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let s = &c.system;
        prop_assert!((p.power - dbm_to_watts(s.power_dbm)).abs() <= 1e-15 * p.power);
        prop_assert!((dbm_to_watts(s.power_dbm) - db_to_linear(s.power_dbm - 30.0)).abs() <= 1e-12 * p.power);
        prop_assert!((p.beta * 10f64.powf(-s.beta_db / 10.0) - 1.0).abs() < 1e-12);
        prop_assert!((p.delta * s.slots as f64 - s.period_s).abs() <= 1e-12 * s.period_s);
    }
}
