mod common;

use std::collections::HashMap;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::Rng;

use common::*;
use pvnet::evaluation::*;
use pvnet::synth::{clearsky_plane, generate, GridSpec, PowerSeries, SynthConfig};
use pvnet::Error;

fn series(values: Vec<f64>) -> PowerSeries {
    PowerSeries {
        t0: Utc.with_ymd_and_hms(2014, 5, 1, 0, 0, 0).unwrap(),
        dt_seconds: 10800,
        values,
    }
}

fn pairs(measured: &[f64], predicted: &[f64]) -> Pairs {
    Pairs {
        indices: (0..measured.len()).collect(),
        measured: measured.to_vec(),
        predicted: predicted.to_vec(),
        rule: DaylightRule::Measured,
    }
}

#[test]
fn filter_keeps_positive_measurements() {
    let p = daylight_filter(&series(vec![0.0, 5.0, 3.0]), &series(vec![1.0, 4.0, 0.0])).unwrap();
    assert_eq!(p.indices, vec![1, 2]);
    assert_eq!(p.measured, vec![5.0, 3.0]);
    let both = daylight_filter_with(
        &series(vec![0.0, 5.0, 3.0]),
        &series(vec![1.0, 4.0, 0.0]),
        DaylightRule::Both,
    )
    .unwrap();
    assert_eq!(both.indices, vec![1]);

    let none = daylight_filter(&series(vec![0.0; 4]), &series(vec![1.0; 4])).unwrap();
    assert!(none.is_empty());
    assert!(matches!(compute_metrics(&none, 10.0), Err(Error::EmptyReport)));
    assert!(matches!(
        daylight_filter(&series(vec![0.0; 4]), &series(vec![1.0; 5])),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn filter_never_keeps_a_synthetic_night() {
    let cfg = SynthConfig {
        grid: GridSpec {
            n_rows: 4,
            n_cols: 4,
            ..GridSpec::default()
        },
        days: 30,
        n_plants: 40,
        ..SynthConfig::default()
    };
    let (r, p, _) = generate(&cfg).unwrap();
    let kept = daylight_filter(&p, &p).unwrap();
    assert!(!kept.is_empty());
    for &i in &kept.indices {
        assert!(clearsky_plane(&r.grid, r.time_at(i)).iter().any(|&v| v > 0.0));
    }
}

#[test]
fn metric_arithmetic() {
    let m = compute_metrics(&pairs(&[1.0], &[0.5]), 2.0).unwrap();
    assert_eq!((m.rmse, m.mae, m.nrmse, m.nmae, m.n_points), (0.5, 0.5, 25.0, 25.0, 1));
    let perfect = compute_metrics(&pairs(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 5.0).unwrap();
    assert_eq!(
        (perfect.rmse, perfect.mae, perfect.nrmse, perfect.nmae),
        (0.0, 0.0, 0.0, 0.0)
    );
    assert!(compute_metrics(&pairs(&[1.0], &[0.5]), 0.0).is_err());
}

#[test]
fn metrics_match_direct_summation() {
    let mut r = rng(21);
    for _ in 0..10 {
        let measured: Vec<f64> = (0..100).map(|_| r.gen_range(0.01..50.0)).collect();
        let predicted: Vec<f64> = (0..100).map(|_| r.gen_range(0.0..60.0)).collect();
        let cap = r.gen_range(50.0..500.0);
        let m = compute_metrics(&pairs(&measured, &predicted), cap).unwrap();
        let (mut sq, mut ab) = (0.0, 0.0);
        for i in 0..100 {
            sq += (predicted[i] - measured[i]).powi(2);
            ab += (predicted[i] - measured[i]).abs();
        }
        let rmse = (sq / 100.0).sqrt();
        let mae = ab / 100.0;
        assert!(rel(m.rmse, rmse) <= 1e-12 && rel(m.mae, mae) <= 1e-12);
        assert_eq!(m.nrmse, 100.0 * m.rmse / cap);
        assert_eq!(m.nmae, 100.0 * m.mae / cap);
    }
}

#[test]
fn baseline_of_periodic_and_constant_series_is_exact() {
    let day: Vec<f64> = vec![0.0, 0.0, 3.0, 9.0, 12.0, 7.0, 1.0, 0.0];
    let periodic = series(day.repeat(5));
    let b = persistence_baseline(&periodic).unwrap();
    let truth = align_to(&periodic, &b).unwrap();
    let m = compute_metrics(&daylight_filter(&truth, &b).unwrap(), 20.0).unwrap();
    assert_eq!((m.rmse, m.mae), (0.0, 0.0));

    let flat = series(vec![4.0; 20]);
    let b = persistence_baseline(&flat).unwrap();
    assert!(b.values.iter().all(|&v| v == 4.0));
    assert!(matches!(
        persistence_baseline(&series(vec![1.0; 8])),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn baseline_matches_timestamp_lookup() {
    let mut r = rng(5);
    let s = series((0..50).map(|_| r.gen_range(0.0..30.0)).collect());
    let lookup: HashMap<_, _> = s
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| (s.t0 + Duration::seconds(s.dt_seconds * i as i64), v))
        .collect();
    let b = persistence_baseline(&s).unwrap();
    assert_eq!(b.len(), 42);
    for (i, &v) in b.values.iter().enumerate() {
        let t = b.t0 + Duration::seconds(b.dt_seconds * i as i64);
        assert_eq!(v, lookup[&(t - Duration::hours(24))]);
    }
}

fn report(model_err: f64, base_err: f64) -> MetricsReport {
    MetricsReport {
        rmse: model_err,
        mae: base_err,
        nrmse: model_err,
        nmae: base_err,
        n_points: 10,
        capacity: 100.0,
        filter_rule: DaylightRule::Measured.describe().to_string(),
    }
}

#[test]
fn comparison_ratio_and_round_trip() {
    let p = pairs(&[1.0, 2.0], &[1.5, 2.5]);
    let same = compare_report(&report(3.0, 2.0), &report(3.0, 2.0), &p, &p).unwrap();
    assert_eq!(same.rmse_ratio(), 1.0);

    let mut model = report(4.73, 1.0);
    let mut base = report(22.04, 1.0);
    model.nrmse = 4.73;
    base.nrmse = 22.04;
    let c = compare_report(&model, &base, &p, &p).unwrap();
    assert!((c.rmse_ratio() - 4.66).abs() < 0.005, "{}", c.rmse_ratio());

    let parsed: HashMap<String, f64> = parse_delimited(&c.to_delimited()).unwrap().into_iter().collect();
    for (k, v) in [
        ("model_nrmse", 4.73),
        ("baseline_nrmse", 22.04),
        ("model_n_points", 10.0),
        ("model_capacity", 100.0),
    ] {
        assert!(rel(parsed[k], v) <= 5e-6, "{k}");
    }
    assert!(rel(parsed["ratio_nrmse"], c.rmse_ratio()) <= 5e-6);
    assert!(c.to_text().contains("Persistence"));

    let other = pairs(&[1.0], &[1.0]);
    assert!(matches!(
        compare_report(&model, &base, &p, &other),
        Err(Error::Parameter(_))
    ));
}

proptest! {
    #[test]
    fn metrics_ignore_error_sign_and_scale_with_capacity(
        m in prop::collection::vec(0.01..50.0f64, 1..40),
        seed in 0u64..1000,
        cap in 1.0..1000.0f64,
    ) {
        let mut r = rng(seed);
        let e: Vec<f64> = (0..m.len()).map(|_| r.gen_range(-5.0..5.0)).collect();
        let plus: Vec<f64> = m.iter().zip(&e).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = m.iter().zip(&e).map(|(a, b)| a - b).collect();
        let a = compute_metrics(&pairs(&m, &plus), cap).unwrap();
        let b = compute_metrics(&pairs(&m, &minus), cap).unwrap();
        prop_assert!(rel(a.rmse, b.rmse) <= 1e-12 && rel(a.mae, b.mae) <= 1e-12);
        let d = compute_metrics(&pairs(&m, &plus), 2.0 * cap).unwrap();
        prop_assert_eq!(d.nrmse, a.nrmse / 2.0);
        prop_assert_eq!(d.nmae, a.nmae / 2.0);
    }
}
