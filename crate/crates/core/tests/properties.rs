use chanest_core::channel::{steering_vector, wrap_angle};
use chanest_core::classical::{lmmse_estimate, lmmse_filter, oracle_ls};
use chanest_core::harness::{
    metric_detect_prob, metric_mse, metric_nmse, ExperimentConfig, ExperimentId, ResultRow, ResultTable, Sizes, TrainSettings,
};
use chanest_core::linalg::{matmul, ComplexMatrix};
use chanest_core::random::{choose_sorted, complex_gaussian_matrix, rng_for};
use proptest::prelude::*;

fn method_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,10}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trip_preserves_rows(
        rows in prop::collection::vec(
            (method_name(), -30i32..40, 0u64..50, prop::num::f64::NORMAL | prop::num::f64::ZERO, 0.0f64..1e4),
            1..30,
        )
    ) {
        let mut table = ResultTable::new();
        let mut seen = std::collections::BTreeSet::new();
        for (method, snr, seed, value, wall) in rows {
            if !seen.insert((method.clone(), snr, seed)) {
                continue;
            }
            table.push(ResultRow {
                experiment: "tap_mse".into(),
                method,
                snr_db: f64::from(snr) / 2.0,
                seed,
                metric: "mse".into(),
                value,
                wall_time_s: wall,
            }).unwrap();
        }
        table.finalize().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        table.write_csv(&path).unwrap();
        let back = ResultTable::read_csv(&path).unwrap();
        prop_assert_eq!(back.rows(), table.rows());
        prop_assert_eq!(back.to_csv_bytes().unwrap(), table.to_csv_bytes().unwrap());
    }

    #[test]
    fn detection_probability_is_a_fraction(n in 1usize..40, k in 1usize..8, seed in 0u64..500) {
        let k = k.min(n);
        let mut rng = rng_for(seed, 1);
        let truth = choose_sorted(&mut rng, n, k);
        let est = choose_sorted(&mut rng, n, k);
        let p = metric_detect_prob(&est, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p * k as f64 - (p * k as f64).round()).abs() < 1e-12);
        prop_assert_eq!(metric_detect_prob(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn nmse_is_scale_invariant_and_mse_is_not(seed in 0u64..500, s in 0.1f64..10.0) {
        let mut rng = rng_for(seed, 2);
        let h = complex_gaussian_matrix(&mut rng, 6, 3, 1.0);
        let e = complex_gaussian_matrix(&mut rng, 6, 3, 1.0);
        let a = metric_nmse(&e, &h).unwrap();
        let b = metric_nmse(&e.scale_real(s), &h.scale_real(s)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let m1 = metric_mse(&e, &h).unwrap();
        let m2 = metric_mse(&e.scale_real(s), &h.scale_real(s)).unwrap();
        prop_assert!((m2 - s * s * m1).abs() <= 1e-10 * m2.max(1.0));
        prop_assert_eq!(metric_mse(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn steering_vectors_have_unit_modulus_entries(angle in -10.0f64..10.0, n in 1usize..32) {
        let a = steering_vector(angle, n, 0.5);
        prop_assert_eq!(a.dims(), (n, 1));
        prop_assert!(a.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        prop_assert!(a.as_slice()[0].im.abs() < 1e-15);
        let w = wrap_angle(angle);
        prop_assert!((0.0..std::f64::consts::TAU).contains(&w));
        prop_assert!(steering_vector(w, n, 0.5).max_abs_diff(&a) < 1e-9);
    }

    #[test]
    fn lmmse_filter_agrees_with_direct_estimate(seed in 0u64..500, m in 2usize..8, n in 1usize..6, s2 in 0.001f64..5.0) {
        let mut rng = rng_for(seed, 3);
        let x = complex_gaussian_matrix(&mut rng, m, n, 1.0);
        let l = complex_gaussian_matrix(&mut rng, n, n, 1.0);
        let r = matmul(&l, &l.hermitian()).unwrap().add_diagonal(0.1).unwrap();
        let y = complex_gaussian_matrix(&mut rng, m, 2, 1.0);
        let direct = lmmse_estimate(&y, &x, &r, s2).unwrap();
        let via_filter = matmul(&lmmse_filter(&x, &r, s2).unwrap(), &y).unwrap();
        prop_assert!(direct.max_abs_diff(&via_filter) <= 1e-9 * (1.0 + direct.frobenius_norm()));
    }

    #[test]
    fn oracle_ls_recovers_noiseless_sparse_vectors(seed in 0u64..500, k in 1usize..5) {
        let mut rng = rng_for(seed, 4);
        let p = complex_gaussian_matrix(&mut rng, 12, 24, 1.0);
        let support = choose_sorted(&mut rng, 24, k);
        let mut h = ComplexMatrix::zeros(24, 1);
        for &i in &support {
            h[(i, 0)] = complex_gaussian_matrix(&mut rng, 1, 1, 1.0)[(0, 0)];
        }
        let y = matmul(&p, &h).unwrap();
        let est = oracle_ls(&y, &p, &support).unwrap();
        prop_assert!(est.max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn configs_survive_json(snrs in prop::collection::btree_set(-20i32..40, 1..6), seeds in prop::collection::btree_set(0u64..1000, 1..6)) {
        let cfg = ExperimentConfig {
            experiment: ExperimentId::ParamNmse,
            snr_grid_db: snrs.into_iter().map(f64::from).collect(),
            seeds: seeds.into_iter().collect(),
            sizes: Sizes::default(),
            train: TrainSettings::default(),
            output: None,
        };
        cfg.validate().unwrap();
        prop_assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}

#[test]
fn unknown_config_fields_are_rejected() {
    let text = r#"{"experiment":"tap_mse","snr_grid_db":[10],"seeds":[1],"sizes":{"n":64,"bogus":1}}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
    let ok = r#"{"experiment":"tap_mse","snr_grid_db":[10],"seeds":[1]}"#;
    assert_eq!(ExperimentConfig::from_json(ok).unwrap().sizes, Sizes::default());
}

#[test]
fn experiment_ids_round_trip_through_text() {
    for id in ExperimentId::ALL {
        assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
    }
    assert!("fig5".parse::<ExperimentId>().is_err());
}
