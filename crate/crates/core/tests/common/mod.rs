//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use handpass::codec::{CsiFrame, RawSample, Timestamp, CSI_MAGIC, SUBCARRIERS};
use handpass::dataset::{build_rows_from_frames, slice_dataset, Hand, RowsByCapture, SliceOptions};
use handpass::learners::{train, HyperParams, ModelKind, TrainedModel};
use handpass::synth::{capture_frames, SynthConfig};
use handpass::{FramePipeline, SliceName};
use num_complex::Complex;
use rand::Rng;

pub fn random_frame<R: Rng>(rng: &mut R) -> CsiFrame {
    let csi: Vec<RawSample> = (0..SUBCARRIERS)
        .map(|_| Complex::new(rng.random::<i16>(), rng.random::<i16>()))
        .collect();
    CsiFrame {
        magic: CSI_MAGIC,
        rssi: rng.random(),
        frame_control: rng.random(),
        source_mac: rng.random(),
        sequence_number: rng.random(),
        core_spatial: rng.random(),
        chanspec: rng.random(),
        chip_version: rng.random(),
        csi,
        timestamp: Timestamp {
            secs: rng.random(),
            micros: rng.random_range(0..1_000_000),
        },
    }
}

/// Logical subcarrier `k` of a hardware-ordered vector.
pub fn hardware_sample(frame: &CsiFrame, k: i32) -> RawSample {
    let h = (k + 256) % 256;
    frame.csi[h as usize]
}

/// Unwrap in the style of numpy: steps are mapped into [−π, π).
pub fn unwrap_oracle(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut correction = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            let mut dd = (d + PI).rem_euclid(2.0 * PI) - PI;
            if dd == -PI && d > 0.0 {
                dd = PI;
            }
            if d.abs() >= PI {
                correction += dd - d;
            }
        }
        out.push(p + correction);
    }
    out
}

/// Ridge line through `(x, y)` penalising slope and intercept, solved as an
/// augmented least-squares problem with Givens rotations.
pub fn ridge_qr(x: &[f64], y: &[f64], lambda: f64) -> (f64, f64) {
    let s = lambda.sqrt();
    let mut rows: Vec<[f64; 3]> = x.iter().zip(y).map(|(&xi, &yi)| [xi, 1.0, yi]).collect();
    rows.push([s, 0.0, 0.0]);
    rows.push([0.0, s, 0.0]);
    // upper-triangular R with right-hand side in the last column
    let mut r = [[0.0f64; 3]; 2];
    for mut row in rows {
        for col in 0..2 {
            let (a, b) = (r[col][col], row[col]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, sn) = (a / h, b / h);
            for j in col..3 {
                let (u, v) = (r[col][j], row[j]);
                r[col][j] = c * u + sn * v;
                row[j] = -sn * u + c * v;
            }
        }
    }
    let intercept = r[1][2] / r[1][1];
    let slope = (r[0][2] - r[0][1] * intercept) / r[0][0];
    (slope, intercept)
}

/// Exhaustive best root split under Gini: every feature, every midpoint
/// between distinct sorted values. Ties go to the lowest feature, then the
/// lowest threshold. Returns `(feature, threshold, decrease)`.
pub fn brute_force_root(rows: &[Vec<f64>], y: &[usize], k: usize) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    let gini = |idx: &[usize]| -> (u128, u128) {
        // Σ count² and size, so purity = Σc²/size
        let mut counts = vec![0u128; k];
        idx.iter().for_each(|&i| counts[y[i]] += 1);
        (counts.iter().map(|c| c * c).sum(), idx.len() as u128)
    };
    let mut best: Option<(usize, f64, u128, u128)> = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let t = if t < w[1] { t } else { w[0] };
            let left: Vec<usize> = (0..n).filter(|&i| rows[i][f] <= t).collect();
            let right: Vec<usize> = (0..n).filter(|&i| rows[i][f] > t).collect();
            let (sl, nl) = gini(&left);
            let (sr, nr) = gini(&right);
            let (num, den) = (sl * nr + sr * nl, nl * nr);
            let better = match best {
                None => true,
                Some((_, _, bn, bd)) => num * bd > bn * den,
            };
            if better {
                best = Some((f, t, num, den));
            }
        }
    }
    best.map(|(f, t, num, den)| {
        let all: Vec<usize> = (0..n).collect();
        let (sq, _) = gini(&all);
        let parent = 1.0 - sq as f64 / (n * n) as f64;
        let child = (n as f64 - num as f64 / den as f64) / n as f64;
        (f, t, parent - child)
    })
}

/// Gaussian naive Bayes posteriors evaluated term by term in the log domain.
pub fn gnb_oracle(rows: &[Vec<f64>], y: &[usize], k: usize, smoothing: f64, x: &[f64]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let column_var = |f: usize, members: &[&Vec<f64>]| {
        let m = members.iter().map(|r| r[f]).sum::<f64>() / members.len() as f64;
        let v = members.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / members.len() as f64;
        (m, v)
    };
    let everyone: Vec<&Vec<f64>> = rows.iter().collect();
    let eps = smoothing
        * (0..d)
            .map(|f| column_var(f, &everyone).1)
            .fold(0.0, f64::max);
    let mut log_joint = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(y)
            .filter(|(_, &t)| t == c)
            .map(|(r, _)| r)
            .collect();
        let mut lj = (members.len() as f64 / n).ln();
        for (f, &xf) in x.iter().enumerate().take(d) {
            let (m, v) = column_var(f, &members);
            let v = v + eps;
            lj += -0.5 * (2.0 * PI * v).ln() - (xf - m).powi(2) / (2.0 * v);
        }
        log_joint.push(lj);
    }
    let top = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = top + log_joint.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    log_joint.iter().map(|l| (l - log_z).exp()).collect()
}

/// Feature rows for every right-hand capture of `cfg`, generated in memory.
pub fn synthetic_rows(cfg: &SynthConfig, pipeline: &FramePipeline) -> RowsByCapture {
    let mut rows = RowsByCapture::new();
    for user in 1..=cfg.users {
        for capture in 1..=cfg.captures_per_user {
            let meta = cfg.meta(user, Hand::Right, capture);
            let frames = capture_frames(cfg, user, Hand::Right, capture);
            let built = build_rows_from_frames(&frames, meta, pipeline).expect("synthetic frames");
            rows.insert((user, Hand::Right, capture), built.rows);
        }
    }
    rows
}

pub fn slice_rows(
    rows: &RowsByCapture,
    pipeline: &FramePipeline,
    name: SliceName,
    rate: f64,
) -> (Vec<Vec<f64>>, Vec<u32>) {
    let opts = SliceOptions {
        packets_per_second: rate,
        right_hand_only: true,
    };
    let s = slice_dataset(rows, pipeline.feature_names(), name, opts).expect("slice");
    let labels = s.matrix.labels();
    (s.matrix.rows, labels)
}

/// A small, fast forest for tests that need a real model.
pub fn quick_forest(rows: &[Vec<f64>], labels: &[u32], seed: u64) -> TrainedModel {
    let mut hyper = HyperParams::default();
    hyper.forest.n_trees = 25;
    train(ModelKind::RandomForest, rows, labels, &hyper, seed).expect("train")
}
