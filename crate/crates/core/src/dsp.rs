//! Per-frame signal processing and dataset-level feature scaling.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CsiFrame, SUBCARRIERS};

/// Lowest logical subcarrier index at 80 MHz.
pub const MIN_INDEX: i32 = -128;
pub const NULL_SUBCARRIERS: [i32; 14] = [
    -128, -127, -126, -125, -124, -123, -1, 0, 1, 123, 124, 125, 126, 127,
];
pub const PILOT_SUBCARRIERS: [i32; 8] = [-103, -75, -39, -11, 11, 39, 75, 103];
pub const USEFUL_SUBCARRIERS: usize = 234;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("fft shift needs an even length, got {0}")]
    OddLength(usize),
    #[error("frame carries no signal (mean amplitude is zero)")]
    ZeroSignal,
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Null, pilot and useful subcarriers of the 80 MHz layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcarrierMask {
    pub null_indices: BTreeSet<i32>,
    pub pilot_indices: BTreeSet<i32>,
    /// Ascending logical indices that carry data.
    pub useful: Vec<i32>,
}

impl Default for SubcarrierMask {
    fn default() -> Self {
        Self::vht80()
    }
}

impl SubcarrierMask {
    pub fn vht80() -> Self {
        let null_indices: BTreeSet<i32> = NULL_SUBCARRIERS.into_iter().collect();
        let pilot_indices: BTreeSet<i32> = PILOT_SUBCARRIERS.into_iter().collect();
        let useful = logical_indices()
            .filter(|k| !null_indices.contains(k) && !pilot_indices.contains(k))
            .collect();
        SubcarrierMask {
            null_indices,
            pilot_indices,
            useful,
        }
    }

    pub fn is_useful(&self, k: i32) -> bool {
        !self.null_indices.contains(&k) && !self.pilot_indices.contains(&k)
    }

    /// Positions into a logical-order 256-vector for the useful subcarriers.
    pub fn useful_positions(&self) -> Vec<usize> {
        self.useful.iter().map(|&k| position_of(k)).collect()
    }
}

/// Logical subcarrier indices −128..=127 in vector order.
pub fn logical_indices() -> impl Iterator<Item = i32> {
    MIN_INDEX..MIN_INDEX + SUBCARRIERS as i32
}

/// Vector position of logical index `k` after the FFT shift.
pub fn position_of(k: i32) -> usize {
    (k - MIN_INDEX) as usize
}

/// Swaps the two halves of an even-length slice: `out[i] = values[(i + n/2) % n]`.
pub fn fft_shift<T: Clone>(values: &[T]) -> Result<Vec<T>, DspError> {
    let n = values.len();
    if !n.is_multiple_of(2) {
        return Err(DspError::OddLength(n));
    }
    let half = n / 2;
    Ok(values[half..]
        .iter()
        .chain(&values[..half])
        .cloned()
        .collect())
}

/// Channel frequency response of one frame in logical subcarrier order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfrVector {
    pub subcarriers: Vec<Complex64>,
    pub amplitude: Vec<f64>,
    pub phase_deg: Vec<f64>,
}

impl CfrVector {
    pub fn from_complex(subcarriers: Vec<Complex64>) -> Self {
        let amplitude = subcarriers.iter().map(|z| z.norm()).collect();
        let phase_deg = subcarriers
            .iter()
            .map(|z| phase_of(*z).to_degrees())
            .collect();
        CfrVector {
            subcarriers,
            amplitude,
            phase_deg,
        }
    }

    pub fn mean_amplitude(&self) -> f64 {
        self.amplitude.iter().sum::<f64>() / self.amplitude.len() as f64
    }
}

/// `atan2(im, re)` with the origin mapped to 0.
fn phase_of(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        0.0
    } else {
        z.im.atan2(z.re)
    }
}

pub fn to_cfr(frame: &CsiFrame) -> Result<CfrVector, DspError> {
    if frame.csi.len() != SUBCARRIERS {
        return Err(DspError::DimensionMismatch {
            expected: SUBCARRIERS,
            got: frame.csi.len(),
        });
    }
    let promoted: Vec<Complex64> = frame
        .csi
        .iter()
        .map(|s| Complex64::new(f64::from(s.re), f64::from(s.im)))
        .collect();
    Ok(CfrVector::from_complex(fft_shift(&promoted)?))
}

/// Divides every subcarrier by the mean amplitude over all 256 bins.
pub fn normalize_cfr(cfr: &CfrVector) -> Result<CfrVector, DspError> {
    let mean = cfr.mean_amplitude();
    if !mean.is_finite() || mean <= 0.0 {
        return Err(DspError::ZeroSignal);
    }
    Ok(CfrVector {
        subcarriers: cfr.subcarriers.iter().map(|z| z / mean).collect(),
        amplitude: cfr.amplitude.iter().map(|a| a / mean).collect(),
        phase_deg: cfr.phase_deg.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizerConfig {
    /// Ridge weight on the slope and intercept of the removed phase trend.
    pub lambda: f64,
    pub unwrap: bool,
}

impl Default for SanitizerConfig {
    fn default() -> Self {
        SanitizerConfig {
            lambda: 0.1,
            unwrap: true,
        }
    }
}

impl SanitizerConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(DspError::InvalidConfig(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Sequential unwrap: a step larger than π in magnitude is folded by 2π.
pub fn unwrap_phase(phases: &mut [f64]) {
    let mut offset = 0.0;
    for i in 1..phases.len() {
        let raw = phases[i] + offset;
        let step = raw - phases[i - 1];
        if step > PI {
            offset -= 2.0 * PI * ((step + PI) / (2.0 * PI)).floor();
        } else if step < -PI {
            offset += 2.0 * PI * ((-step + PI) / (2.0 * PI)).floor();
        }
        phases[i] += offset;
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Slope and intercept of the ridge-regularised line through `(x, y)`.
pub fn ridge_line(x: &[f64], y: &[f64], lambda: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sx += xi;
        sxx += xi * xi;
        sy += yi;
        sxy += xi * yi;
    }
    // [sxx + λ, sx; sx, n + λ] [a; b] = [sxy; sy]
    let a11 = sxx + lambda;
    let a22 = n + lambda;
    let det = a11 * a22 - sx * sx;
    if det == 0.0 {
        return (0.0, 0.0);
    }
    let slope = (sxy * a22 - sx * sy) / det;
    let intercept = (a11 * sy - sx * sxy) / det;
    (slope, intercept)
}

/// Removes the regularised linear phase trend fitted over the useful subcarriers.
pub fn sanitize_phase(cfr: &CfrVector, cfg: &SanitizerConfig, mask: &SubcarrierMask) -> CfrVector {
    let positions = mask.useful_positions();
    let xs: Vec<f64> = mask.useful.iter().map(|&k| f64::from(k)).collect();
    let mut phases: Vec<f64> = positions
        .iter()
        .map(|&p| cfr.phase_deg[p].to_radians())
        .collect();
    if cfg.unwrap {
        unwrap_phase(&mut phases);
    }
    let (slope, intercept) = ridge_line(&xs, &phases, cfg.lambda);

    let mut subcarriers = Vec::with_capacity(SUBCARRIERS);
    let mut phase_deg = Vec::with_capacity(SUBCARRIERS);
    for (pos, k) in logical_indices().enumerate() {
        let residual =
            wrap_angle(cfr.phase_deg[pos].to_radians() - slope * f64::from(k) - intercept);
        subcarriers.push(Complex64::from_polar(cfr.amplitude[pos], residual));
        phase_deg.push(residual.to_degrees());
    }
    CfrVector {
        subcarriers,
        amplitude: cfr.amplitude.clone(),
        phase_deg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    MinMax,
    ZScore,
    Robust,
}

impl std::str::FromStr for ScalerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minmax" => Ok(ScalerKind::MinMax),
            "zscore" => Ok(ScalerKind::ZScore),
            "robust" => Ok(ScalerKind::Robust),
            other => Err(format!("unknown scaler '{other}'")),
        }
    }
}

/// Per-column affine scaler: `(x - center) / spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScaler {
    pub kind: ScalerKind,
    /// min, mean or median per column.
    pub center: Vec<f64>,
    /// max, stddev or iqr per column.
    pub spread_param: Vec<f64>,
}

impl FittedScaler {
    pub fn width(&self) -> usize {
        self.center.len()
    }

    /// Denominator for column `j`.
    fn denominator(&self, j: usize) -> f64 {
        match self.kind {
            ScalerKind::MinMax => self.spread_param[j] - self.center[j],
            ScalerKind::ZScore | ScalerKind::Robust => self.spread_param[j],
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, DspError> {
        if row.len() != self.width() {
            return Err(DspError::DimensionMismatch {
                expected: self.width(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let d = self.denominator(j);
                if d == 0.0 {
                    0.0
                } else {
                    (x - self.center[j]) / d
                }
            })
            .collect())
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn fit_scaler<R: AsRef<[f64]>>(kind: ScalerKind, rows: &[R]) -> Result<FittedScaler, DspError> {
    let first = rows.first().ok_or(DspError::EmptyMatrix)?;
    let width = first.as_ref().len();
    if width == 0 {
        return Err(DspError::EmptyMatrix);
    }
    for r in rows {
        if r.as_ref().len() != width {
            return Err(DspError::DimensionMismatch {
                expected: width,
                got: r.as_ref().len(),
            });
        }
    }
    let n = rows.len() as f64;
    let mut center = Vec::with_capacity(width);
    let mut spread = Vec::with_capacity(width);
    let mut column = Vec::with_capacity(rows.len());
    for j in 0..width {
        column.clear();
        column.extend(rows.iter().map(|r| r.as_ref()[j]));
        match kind {
            ScalerKind::MinMax => {
                center.push(column.iter().copied().fold(f64::INFINITY, f64::min));
                spread.push(column.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            ScalerKind::ZScore => {
                let mean = column.iter().sum::<f64>() / n;
                let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                center.push(mean);
                spread.push(var.sqrt());
            }
            ScalerKind::Robust => {
                column.sort_by(f64::total_cmp);
                center.push(quantile_sorted(&column, 0.5));
                spread.push(quantile_sorted(&column, 0.75) - quantile_sorted(&column, 0.25));
            }
        }
    }
    Ok(FittedScaler {
        kind,
        center,
        spread_param: spread,
    })
}

pub fn apply_scaler<R: AsRef<[f64]>>(
    scaler: &FittedScaler,
    rows: &[R],
) -> Result<Vec<Vec<f64>>, DspError> {
    rows.iter()
        .map(|r| scaler.transform_row(r.as_ref()))
        .collect()
}
