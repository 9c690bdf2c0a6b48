use std::fs;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use pvnet::features::Normalization;
use pvnet::model::PVNetParams;
use pvnet::storage::checkpoint::{self, decode_checkpoint, encode_checkpoint};
use pvnet::storage::pgm::encode_pgm;
use pvnet::storage::raster::{self, decode_raster, encode_raster};
use pvnet::storage::series::{decode_series, encode_series};
use pvnet::storage::*;
use pvnet::synth::{GridSpec, PowerSeries, RasterSeries, NWP_CHANNELS};
use pvnet::{Error, Tensor};

fn tiny_raster() -> RasterSeries {
    let grid = GridSpec {
        n_rows: 4,
        n_cols: 4,
        ..GridSpec::default()
    };
    RasterSeries::new(
        grid,
        vec!["DSWRF".to_string()],
        Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
        10800,
        Tensor::new(
            vec![2, 1, 4, 4],
            (0..32).map(|i| (i as f64 - 9.5) * 37.25 + 1e-3).collect(),
        )
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn raster_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.pvrs");
    let r = tiny_raster();
    write_raster(&path, &r).unwrap();
    let back = read_raster(&path).unwrap();
    assert_eq!(back.frames.shape(), &[2, 1, 4, 4]);
    for (a, b) in back.frames.data().iter().zip(r.frames.data()) {
        assert_eq!(a.to_bits(), (*b as f32 as f64).to_bits());
    }
    assert_eq!(
        (back.t0, back.dt_seconds, &back.channels),
        (r.t0, r.dt_seconds, &r.channels)
    );
    // nothing but the target is left behind by the atomic write
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn raster_corruption_is_reported() {
    let bytes = encode_raster(&tiny_raster());
    assert_eq!(&bytes[..6], raster::MAGIC);
    let mut bad = bytes.clone();
    bad[0] = b'Q';
    assert_eq!(decode_raster(&bad).unwrap_err().field(), Some("magic"));
    match decode_raster(&bytes[..bytes.len() - 1]) {
        Err(Error::Truncated {
            field,
            expected,
            actual,
        }) => {
            assert_eq!(field, "frames");
            assert_eq!((expected, actual), (128, 127));
        }
        other => panic!("expected truncation, got {other:?}"),
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_raster(&long).is_err());
}

#[test]
fn magics_are_distinct_six_bytes() {
    assert_eq!(raster::MAGIC.len(), 6);
    assert_eq!(checkpoint::MAGIC.len(), 6);
    assert_ne!(raster::MAGIC, checkpoint::MAGIC);
    let ck = sample_checkpoint();
    let bytes = encode_checkpoint(&ck);
    assert!(decode_raster(&bytes).is_err());
    assert!(decode_checkpoint(&encode_raster(&tiny_raster())).is_err());
}

fn sample_checkpoint() -> Checkpoint {
    let mut config = RunConfig::default();
    config.set("n_rows", "8").unwrap();
    config.set("n_cols", "8").unwrap();
    config.set("conv_stack", "2,pool").unwrap();
    config.set("fc_dim", "3").unwrap();
    config.set("lstm_units", "2").unwrap();
    let arch = Checkpoint::architecture(&config).unwrap();
    let mut params = PVNetParams::zeros(&arch);
    let n = params.param_count();
    params
        .assign_flat(&(0..n).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>())
        .unwrap();
    Checkpoint {
        config,
        normalization: Normalization {
            channel_mean: vec![1.0, 0.5, 280.0, 40.0, 300.0],
            channel_std: vec![2.0, 0.25, 8.0, 30.0, 250.0],
            target_scale: 1234.5,
        },
        params: params.quantized(),
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pvnw");
    let ck = sample_checkpoint();
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(&fs::read(&path).unwrap()[..6], checkpoint::MAGIC);
    let bytes = encode_checkpoint(&ck);
    assert_eq!(
        decode_checkpoint(&bytes[..bytes.len() - 2]).unwrap_err().field(),
        Some("weights")
    );
}

fn series(values: Vec<f64>) -> PowerSeries {
    PowerSeries {
        t0: Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
        dt_seconds: 10800,
        values,
    }
}

#[test]
fn series_rejects_bad_text() {
    assert!(matches!(decode_series(""), Err(Error::Format { .. })));
    let text = encode_series(&series(vec![1.0, 2.0, 3.0]));
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(1, 2);
    let err = decode_series(&lines.join("\n")).unwrap_err();
    assert!(err.field().unwrap().starts_with("line"), "{err}");
    let garbled = text.replacen("2", "x", 1);
    assert!(decode_series(&garbled).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    write_series(&path, &series(vec![0.0, 1.0 / 3.0])).unwrap();
    let back = read_series(&path).unwrap();
    assert!((back.values[1] - 1.0 / 3.0).abs() <= 5e-9 / 3.0);
}

#[test]
fn config_files() {
    assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
    assert_eq!(parse_config_str("# nothing\n\n").unwrap(), RunConfig::default());
    assert_eq!(parse_config_str("lr = 0.0015").unwrap().model.lr, 0.0015);
    let cases = [
        ("dropout_conv = 1.5", "dropout_conv"),
        ("dropout_fc = -0.1", "dropout_fc"),
        ("colour = blue", "colour"),
        ("epochs = 0", "epochs"),
        ("batch_size = three", "batch_size"),
        ("n_rows = 7", "n_rows"),
        // 12 rows cannot pass the default three pools
        ("n_rows = 12", "conv_stack"),
    ];
    for (text, key) in cases {
        let err = parse_config_str(text).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{text}: {err}");
        assert_eq!(err.field(), Some(key), "{text}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "seed = 42\nconv_stack = 8,pool,16,pool\n").unwrap();
    let c = parse_config(&path).unwrap();
    assert_eq!((c.seed(), c.synth.seed), (42, 42));
    assert_eq!(parse_config_str(&c.echo()).unwrap(), c);
    assert!(matches!(
        parse_config(&dir.path().join("missing.cfg")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn pgm_is_dark_where_values_are_large() {
    let img = encode_pgm(&[0.0, 1.0, 2.0, 4.0], 2, 2).unwrap();
    let header = b"P5\n2 2\n255\n";
    assert_eq!(&img[..header.len()], header);
    assert_eq!(&img[header.len()..], &[255, 191, 127, 0]);
    assert!(encode_pgm(&[0.0; 16], 4, 4).unwrap()[header.len()..]
        .iter()
        .all(|&b| b == 255));
    assert!(encode_pgm(&[1.0; 3], 2, 2).is_err());
}

#[test]
fn nwp_channel_names() {
    assert_eq!(NWP_CHANNELS, ["DSWRF", "EACC", "TMP"]);
}

proptest! {
    #[test]
    fn series_round_trips_to_nine_digits(values in prop::collection::vec(0.0..1e5f64, 1..50)) {
        let s = series(values);
        let back = decode_series(&encode_series(&s)).unwrap();
        prop_assert_eq!(back.t0, s.t0);
        prop_assert_eq!(back.len(), s.len());
        for (a, b) in back.values.iter().zip(&s.values) {
            prop_assert!((a - b).abs() <= 5e-9 * b.abs());
        }
    }

    #[test]
    fn raster_round_trips_any_f32(vals in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 32)) {
        let mut r = tiny_raster();
        for (d, v) in r.frames.data_mut().iter_mut().zip(&vals) {
            *d = *v as f64;
        }
        let back = decode_raster(&encode_raster(&r)).unwrap();
        for (a, b) in back.frames.data().iter().zip(&vals) {
            prop_assert_eq!((*a as f32).to_bits(), b.to_bits());
        }
    }
}
