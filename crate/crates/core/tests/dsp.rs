mod common;

use std::f64::consts::PI;

use handpass::dsp::{
    fit_scaler, normalize_cfr, ridge_line, sanitize_phase, to_cfr, unwrap_phase, wrap_angle,
    CfrVector, DspError, SanitizerConfig, ScalerKind, SubcarrierMask,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_cfr() -> impl Strategy<Value = CfrVector> {
    prop::collection::vec((0.01f64..100.0, -PI..PI), 256).prop_map(|v| {
        CfrVector::from_complex(
            v.into_iter()
                .map(|(a, p)| Complex64::from_polar(a, p))
                .collect(),
        )
    })
}

fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 2usize..30)
        .prop_flat_map(|(w, n)| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, w), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_idempotent(cfr in arb_cfr()) {
        let once = normalize_cfr(&cfr).unwrap();
        prop_assert!((once.mean_amplitude() - 1.0).abs() < 1e-12);
        let twice = normalize_cfr(&once).unwrap();
        for (a, b) in once.amplitude.iter().zip(&twice.amplitude) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in once.phase_deg.iter().zip(&cfr.phase_deg) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sanitize_keeps_amplitude(cfr in arb_cfr(), lambda in 0.0f64..10.0) {
        let cfg = SanitizerConfig { lambda, unwrap: true };
        let out = sanitize_phase(&cfr, &cfg, &SubcarrierMask::vht80());
        prop_assert_eq!(&out.amplitude, &cfr.amplitude);
        for (&p, c) in out.phase_deg.iter().zip(&out.subcarriers) {
            prop_assert!(p > -180.0 - 1e-9 && p <= 180.0 + 1e-9);
            prop_assert!((wrap_angle(c.arg() - p.to_radians())).abs() < 1e-9);
        }
    }

    #[test]
    fn sanitize_removes_any_added_ramp(
        base in prop::collection::vec((0.01f64..100.0, -0.3f64..0.3), 256),
        slope in -0.3f64..0.3,
        c in -PI..PI,
    ) {
        // with a smooth base phase the unregularised fit absorbs any extra trend
        let cfg = SanitizerConfig { lambda: 0.0, unwrap: true };
        let mask = SubcarrierMask::vht80();
        let build = |extra: f64, offset: f64| {
            CfrVector::from_complex(
                base.iter()
                    .zip(-128..128)
                    .map(|(&(a, p), k)| Complex64::from_polar(a, p + extra * f64::from(k) + offset))
                    .collect(),
            )
        };
        let a = sanitize_phase(&build(0.0, 0.0), &cfg, &mask);
        let b = sanitize_phase(&build(slope, c), &cfg, &mask);
        for p in mask.useful_positions() {
            let d = wrap_angle((a.phase_deg[p] - b.phase_deg[p]).to_radians()).abs();
            prop_assert!(d < 1e-9, "position {p}: {d}");
        }
    }

    #[test]
    fn minmax_maps_training_data_into_unit_interval(rows in arb_matrix()) {
        let s = fit_scaler(ScalerKind::MinMax, &rows).unwrap();
        for r in &rows {
            for v in s.transform_row(r).unwrap() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn zscore_standardises_columns(rows in arb_matrix()) {
        let s = fit_scaler(ScalerKind::ZScore, &rows).unwrap();
        let out: Vec<Vec<f64>> = rows.iter().map(|r| s.transform_row(r).unwrap()).collect();
        let n = out.len() as f64;
        for j in 0..out[0].len() {
            let mean = out.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = out.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(var.abs() < 1e-9 || (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scalers_ignore_translation(rows in arb_matrix(), shift in -1e3f64..1e3) {
        for kind in [ScalerKind::MinMax, ScalerKind::ZScore, ScalerKind::Robust] {
            let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
            let a = fit_scaler(kind, &rows).unwrap();
            let b = fit_scaler(kind, &moved).unwrap();
            for (r, m) in rows.iter().zip(&moved) {
                for (x, y) in a.transform_row(r).unwrap().iter().zip(b.transform_row(m).unwrap()) {
                    prop_assert!((x - y).abs() < 1e-6, "{kind:?}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn ridge_matches_qr_oracle_and_shrinks() {
    let xs: Vec<f64> = SubcarrierMask::vht80()
        .useful
        .iter()
        .map(|&k| f64::from(k))
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| 0.03 * x + 1.5 + (x * 0.7).sin() * 0.1)
        .collect();
    for lambda in [0.0, 0.1, 1.0, 100.0] {
        let (a, b) = ridge_line(&xs, &ys, lambda);
        let (qa, qb) = common::ridge_qr(&xs, &ys, lambda);
        assert!(
            (a - qa).abs() < 1e-9 && (b - qb).abs() < 1e-9,
            "lambda {lambda}"
        );
    }
    // intercept shrinks toward zero as the penalty grows
    let (_, b0) = ridge_line(&xs, &ys, 0.0);
    let (_, b1) = ridge_line(&xs, &ys, 1000.0);
    assert!(b1.abs() < b0.abs());
}

#[test]
fn unwrap_agrees_with_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    use rand::Rng;
    for _ in 0..100 {
        let slope = rng.random_range(-2.5..2.5);
        let raw: Vec<f64> = (0..234)
            .map(|i| wrap_angle(slope * i as f64 + rng.random_range(-0.2..0.2)))
            .collect();
        let mut ours = raw.clone();
        unwrap_phase(&mut ours);
        let reference = common::unwrap_oracle(&raw);
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_frame_is_rejected_by_normalisation() {
    let frame = handpass::CsiFrame::from_csi(vec![Default::default(); 256]);
    let cfr = to_cfr(&frame).unwrap();
    assert!(cfr.phase_deg.iter().all(|&p| p == 0.0));
    assert_eq!(normalize_cfr(&cfr).unwrap_err(), DspError::ZeroSignal);
}
