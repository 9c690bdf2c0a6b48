use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use pvnet::physics::*;

fn realistic(seed: u64) -> DiodeParams {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DiodeParams {
        saturation_current: 10f64.powf(r.gen_range(-11.0..-8.0)),
        ideality: r.gen_range(1.0..1.8),
        temperature: r.gen_range(280.0..330.0),
        light_current: r.gen_range(1.0..9.0),
        series_resistance: r.gen_range(0.0..0.05),
        shunt_resistance: r.gen_range(50.0..500.0),
        diode_factor: r.gen_range(1.0..1.8),
    }
}

#[test]
fn bisection_root_sits_in_dense_scan_sign_change() {
    const POINTS: usize = 1_000_000;
    for seed in 0..3 {
        let p = realistic(seed);
        let v = 0.7 * open_circuit_voltage(&p).unwrap();
        let (lo, hi) = (-p.light_current, 2.0 * p.light_current);
        let step = (hi - lo) / (POINTS - 1) as f64;
        let mut prev = cell_residual(lo, v, &p);
        let mut bracket = None;
        for k in 1..POINTS {
            let i = lo + step * k as f64;
            let f = cell_residual(i, v, &p);
            if prev > 0.0 && f <= 0.0 {
                bracket = Some((i - step, i));
                break;
            }
            prev = f;
        }
        let (a, b) = bracket.expect("scan finds a sign change");
        let root = cell_current(v, &p).unwrap();
        assert!(root >= a - 1e-10 && root <= b + 1e-10, "{root} outside [{a}, {b}]");
    }
}

#[test]
fn max_power_point_matches_brute_force_scan() {
    const POINTS: usize = 100_000;
    let p = realistic(11);
    let v_oc = open_circuit_voltage(&p).unwrap();
    let mpp = max_power_point(&p).unwrap();
    let (mut best_v, mut best_p) = (0.0, 0.0);
    for k in 0..POINTS {
        let v = v_oc * k as f64 / (POINTS - 1) as f64;
        let pw = cell_power(v, &p).unwrap();
        if pw > best_p {
            best_p = pw;
            best_v = v;
        }
    }
    let cell = v_oc / (MPP_GRID - 1) as f64;
    assert!((mpp.voltage - best_v).abs() <= cell, "{} vs {best_v}", mpp.voltage);
    assert!(mpp.power <= best_p + 1e-9 && mpp.power > 0.99 * best_p);
}

#[test]
fn explicit_reduction_with_huge_shunt() {
    let p = DiodeParams {
        series_resistance: 0.0,
        shunt_resistance: 1e12,
        ..realistic(5)
    };
    let scale = p.diode_factor * BOLTZMANN * p.temperature / ELEMENTARY_CHARGE;
    let v_oc = open_circuit_voltage(&p).unwrap();
    for k in 0..=50 {
        let v = v_oc * k as f64 / 50.0;
        let explicit = p.light_current - p.saturation_current * ((v / scale).exp() - 1.0);
        assert!((cell_current(v, &p).unwrap() - explicit).abs() <= 1e-9);
    }
    assert!((cell_current(0.0, &p).unwrap() - p.light_current).abs() < 1e-9);
}

#[test]
fn cell_current_is_non_increasing_in_voltage() {
    let p = realistic(3);
    let v_oc = open_circuit_voltage(&p).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..=200 {
        let i = cell_current(v_oc * k as f64 / 200.0, &p).unwrap();
        assert!(i <= prev + 1e-10);
        prev = i;
    }
}

#[test]
fn clearsky_is_zero_at_night_everywhere() {
    let t = Utc.with_ymd_and_hms(2014, 6, 21, 0, 0, 0).unwrap();
    for lat in [40.0, 50.0, 60.0] {
        let cz = solar_cos_zenith(t, lat, 0.0);
        assert!(cz < 0.0);
        assert_eq!(clearsky_ghi(cz), 0.0);
    }
}

proptest! {
    #[test]
    fn plant_power_is_bounded(cap in 0.0..1e3f64, t in -60.0..60.0f64, i in 0.0..2000.0f64, s in 0.0..40.0f64) {
        let p = plant_power(cap, &ModuleWeather { ambient_temp: t, irradiance: i, wind_speed: s });
        prop_assert!(p >= 0.0 && p <= cap);
    }

    #[test]
    fn clearsky_never_exceeds_scale(cz in -1.0..=1.0f64) {
        let g = clearsky_ghi(cz);
        prop_assert!((0.0..=1098.0).contains(&g));
    }

    #[test]
    fn cos_zenith_is_bounded(secs in 0i64..(4 * 365 * 86400), lat in -90.0..90.0f64, lon in -180.0..180.0f64) {
        let t = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(secs);
        let cz = solar_position(t, lat, lon).cos_zenith;
        prop_assert!((-1.0..=1.0).contains(&cz));
    }

    #[test]
    fn module_temperature_is_affine(t in -30.0..40.0f64, i in 0.0..1200.0f64, s in 0.0..20.0f64, d in 0.0..10.0f64) {
        let base = ModuleWeather { ambient_temp: t, irradiance: i, wind_speed: s };
        let m = module_temperature(&base);
        let dt = module_temperature(&ModuleWeather { ambient_temp: t + d, ..base }) - m;
        let di = module_temperature(&ModuleWeather { irradiance: i + d, ..base }) - m;
        let ds = module_temperature(&ModuleWeather { wind_speed: s + d, ..base }) - m;
        prop_assert!((dt - 0.94 * d).abs() < 1e-9);
        prop_assert!((di - 0.02 * d).abs() < 1e-9);
        prop_assert!((ds + 1.5 * d).abs() < 1e-9);
    }

    #[test]
    fn residual_at_root_is_within_bound(seed in 0u64..1000, frac in 0.0..=1.0f64) {
        let p = realistic(seed);
        let v = frac * open_circuit_voltage(&p).unwrap();
        let i = cell_current(v, &p).unwrap();
        prop_assert!(cell_residual(i, v, &p).abs() <= RESIDUAL_TOLERANCE);
    }
}
