mod support;

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use isoscatter::ingest::{
    linear_ramp, parse_touchstone, serialize_touchstone, synthesize_sweep, variance_curve,
    variance_curve_ports, DataFormat, FrequencyUnit, NetworkRecord, StirState, SweepDataset,
    TouchstoneOptions,
};
use isoscatter::multiport::make_orthogonal_port_forms;
use isoscatter::sie::SieConfig;
use isoscatter::{Error, SeedStream};

use support::median;

fn fixture(name: &str) -> Vec<NetworkRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/touchstone/good").join(name);
    parse_touchstone(&std::fs::read(path).unwrap(), name).unwrap()
}

fn close(a: Complex64, re: f64, im: f64) -> bool {
    (a - Complex64::new(re, im)).norm() < 1e-12
}

#[test]
fn two_port_fixture_column_order() {
    let r = fixture("two_port_ri.s2p");
    assert_eq!(r.len(), 2);
    assert_eq!(r[0].frequency, 1e9);
    assert!(close(r[0].s[(0, 0)], 0.1, -0.2));
    assert!(close(r[0].s[(1, 0)], 0.3, 0.4));
    assert!(close(r[0].s[(0, 1)], 0.5, 0.6));
    assert!(close(r[0].s[(1, 1)], -0.7, 0.8));
    assert!(close(r[1].s[(1, 1)], 0.25, -0.25));
    assert_eq!(r[1].reference_impedance, 50.0);
}

#[test]
fn one_port_db_fixture() {
    let r = fixture("one_port_db.s1p");
    assert_eq!(r[0].frequency, 1e8);
    assert!(close(r[0].s[(0, 0)], 0.0, 0.1));
    assert!(close(r[1].s[(0, 0)], 1.0, 0.0));
}

#[test]
fn four_port_fixture_rows_per_line() {
    let r = fixture("four_port_ma.s4p");
    assert_eq!(r.len(), 1);
    let s = &r[0].s;
    assert_eq!(r[0].frequency, 5e5);
    assert_eq!(r[0].reference_impedance, 75.0);
    assert!(close(s[(0, 0)], 1.0, 0.0));
    assert!(close(s[(0, 1)], 0.0, 0.5) && close(s[(1, 0)], 0.0, 0.5));
    assert!(close(s[(1, 1)], -1.0, 0.0));
    assert!(close(s[(2, 2)], 0.0, -0.25));
    let h = 0.125 / 2f64.sqrt();
    assert!(close(s[(3, 3)], h, h));
}

#[test]
fn unit_conversions_are_powers_of_ten() {
    for (unit, scale) in [
        (FrequencyUnit::Hz, 1.0),
        (FrequencyUnit::KHz, 1e3),
        (FrequencyUnit::MHz, 1e6),
        (FrequencyUnit::GHz, 1e9),
    ] {
        assert_eq!(unit.scale(), scale);
        let text = format!("# {} S RI R 50\n3 0.5 0\n", unit.label());
        let r = parse_touchstone(text.as_bytes(), "x.s1p").unwrap();
        assert_eq!(r[0].frequency, 3.0 * scale);
    }
}

#[test]
fn five_port_files_are_unsupported() {
    assert!(matches!(parse_touchstone(b"", "big.s5p"), Err(Error::Unsupported(_))));
    let rec = NetworkRecord {
        frequency: 1.0,
        s: Array2::zeros((5, 5)),
        reference_impedance: 50.0,
    };
    assert!(matches!(
        serialize_touchstone(&[rec], &TouchstoneOptions::default()),
        Err(Error::Unsupported(_))
    ));
}

fn synthetic(stirs: usize, freqs: usize, rho: (f64, f64), seed: u64) -> SweepDataset {
    let n = 64;
    let root = SeedStream::new(seed);
    let forms = make_orthogonal_port_forms(2, n, &[1.0, 1.0], &mut root.child(1).rng(0)).unwrap();
    let grid = linear_ramp(1e9, 2e9, freqs);
    let profile = linear_ramp(rho.0, rho.1, freqs);
    synthesize_sweep(&SieConfig::new(n, 1.0), &forms, stirs, &grid, Some(&profile), &root.child(2)).unwrap()
}

#[test]
fn synthetic_sweep_median_residual() {
    // One calibration run measured a median of 0.058; frozen with 2x headroom.
    const MEDIAN_THRESHOLD: f64 = 0.12;
    let curve = variance_curve(&synthetic(200, 100, (0.4, 0.9), 80)).unwrap();
    assert_eq!(curve.rows.len(), 100);
    assert!(!curve.low_confidence);
    let residuals: Vec<f64> = curve.rows.iter().map(|r| r.rel_residual.unwrap()).collect();
    let med = median(&residuals);
    assert!(med <= MEDIAN_THRESHOLD, "{med}");
    assert_eq!(curve.median_residual(), Some(med));
    let mean_ratio =
        curve.rows.iter().map(|r| r.var_pp / r.var_pq).sum::<f64>() / curve.rows.len() as f64;
    assert!((mean_ratio - 2.0).abs() <= 0.2, "{mean_ratio}");
}

#[test]
fn doubling_rho_quadruples_paired_variances() {
    let low = variance_curve(&synthetic(40, 10, (0.2, 0.4), 81)).unwrap();
    let high = variance_curve(&synthetic(40, 10, (0.4, 0.8), 81)).unwrap();
    for (a, b) in low.rows.iter().zip(&high.rows) {
        for (x, y) in [(a.var_pp, b.var_pp), (a.var_qq, b.var_qq), (a.var_pq, b.var_pq), (a.predicted_var_pq, b.predicted_var_pq)] {
            assert!((y / x - 4.0).abs() < 1e-9, "{x} {y}");
        }
    }
}

#[test]
fn degenerate_stir_counts() {
    let single = variance_curve(&synthetic(1, 4, (1.0, 1.0), 82)).unwrap();
    assert!(single.rows.iter().all(|r| r.var_pp == 0.0 && r.var_pq == 0.0 && r.rel_residual.is_none()));
    let two = variance_curve(&synthetic(2, 4, (1.0, 1.0), 83)).unwrap();
    assert!(two.low_confidence);
    assert!(two.rows.iter().all(|r| r.rel_residual.is_some()));
    // Two samples: the unbiased variance is |a - b|^2 / 2.
    let ds = synthetic(2, 1, (1.0, 1.0), 83);
    let (a, b) = (ds.stir_states[0].records[0].s[(0, 1)], ds.stir_states[1].records[0].s[(0, 1)]);
    let curve = variance_curve(&ds).unwrap();
    assert!((curve.rows[0].var_pq - (a - b).norm_sqr() / 2.0).abs() < 1e-15);
}

#[test]
fn identical_stir_states_have_zero_variance() {
    let base = synthetic(1, 5, (1.0, 1.0), 84).stir_states.remove(0);
    let states = (0..6)
        .map(|m| StirState {
            label: format!("copy_{m}"),
            records: base.records.clone(),
        })
        .collect();
    let curve = variance_curve(&SweepDataset::from_states(states)).unwrap();
    assert!(curve.rows.iter().all(|r| r.var_pp == 0.0 && r.var_qq == 0.0 && r.var_pq == 0.0));
}

#[test]
fn misaligned_grids_are_listed() {
    let mut ds = synthetic(3, 4, (1.0, 1.0), 85);
    ds.stir_states[1].records[2].frequency += 1.0;
    match variance_curve(&ds) {
        Err(Error::Alignment(freqs)) => {
            assert!(!freqs.is_empty());
            assert!(freqs.iter().any(|f| f.to_bits() == ds.stir_states[1].records[2].frequency.to_bits()));
            let message = Error::Alignment(freqs).to_string();
            assert!(message.contains("1666666667.666"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn directory_round_trip_through_touchstone() {
    let ds = synthetic(5, 7, (0.5, 1.0), 86);
    let dir = tempfile::tempdir().unwrap();
    let options = TouchstoneOptions {
        unit: FrequencyUnit::MHz,
        format: DataFormat::Db,
        reference: 50.0,
    };
    // Written in reverse so that loading has to sort by name.
    for state in ds.stir_states.iter().rev() {
        let text = serialize_touchstone(&state.records, &options).unwrap();
        std::fs::write(dir.path().join(format!("{}.s2p", state.label)), text).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "not a sweep").unwrap();
    let loaded = SweepDataset::load_dir(dir.path()).unwrap();
    assert_eq!(loaded.stir_count(), 5);
    for (a, b) in ds.stir_states.iter().zip(&loaded.stir_states) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.frequency - y.frequency).abs() <= 1e-12 * x.frequency);
            assert!(x.s.iter().zip(y.s.iter()).all(|(u, v)| (u - v).norm() < 1e-9));
        }
    }
    let direct = variance_curve_ports(&ds, 2, 1).unwrap();
    let reloaded = variance_curve_ports(&loaded, 2, 1).unwrap();
    for (x, y) in direct.rows.iter().zip(&reloaded.rows) {
        assert!((x.var_pq - y.var_pq).abs() < 1e-8 * x.var_pq);
    }
}
