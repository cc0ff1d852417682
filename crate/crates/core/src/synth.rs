//! Seeded synthetic capture generator.
//!
//! Each user gets a stable spectral signature: a shared baseline channel plus
//! `bump_count` Gaussian amplitude bumps and a smooth phase profile. Every
//! frame then receives a random gain, a random linear phase ramp and offset,
//! and circular complex Gaussian noise before 16-bit quantisation. The gain
//! is what CFR normalisation removes and the ramp is what phase sanitisation
//! removes. This emulates the capture protocol for software verification; it
//! is not an electromagnetic model of a hand.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{write_capture, CodecError, CsiFrame, Timestamp, SUBCARRIERS};
use crate::dataset::{CaptureMeta, Gender, Hand};
use crate::dsp::{fft_shift, logical_indices, NULL_SUBCARRIERS};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Raw amplitude of the baseline channel in quantisation units.
const AMPLITUDE_SCALE: f64 = 2000.0;
const TRANSMITTER_MAC: [u8; 6] = [0xdc, 0xa6, 0x32, 0x11, 0x22, 0x33];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: u32,
    pub captures_per_user: u8,
    pub frames_per_capture: usize,
    pub packets_per_second: f64,
    /// Standard deviation of the complex noise relative to the baseline amplitude.
    pub noise_sigma: f64,
    pub bump_count: usize,
    /// Largest per-frame phase slope in radians per subcarrier.
    pub ramp_range: f64,
    /// Per-frame gain is drawn from `1 ± gain_spread`.
    pub gain_spread: f64,
    /// Probability that a frame carries a narrowband interference burst.
    pub burst_probability: f64,
    /// Burst amplitude relative to the baseline amplitude.
    pub burst_power: f64,
    /// Also emit left-hand captures (different signature per hand).
    pub left_hand: bool,
    pub seed: u64,
}

/// Noise level at which RF macro F1 on the scaled protocol sits near 0.99.
pub const CALIBRATED_NOISE_SIGMA: f64 = 0.1;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 20,
            captures_per_user: 5,
            frames_per_capture: 5500,
            packets_per_second: 1000.0,
            noise_sigma: CALIBRATED_NOISE_SIGMA,
            bump_count: 4,
            ramp_range: 0.05,
            gain_spread: 0.3,
            burst_probability: 0.2,
            burst_power: 1.0,
            left_hand: false,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// 20 users × 5 captures × 500 frames at 100 packets/s.
    pub fn scaled_protocol() -> Self {
        SynthConfig {
            frames_per_capture: 500,
            packets_per_second: 100.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.users == 0 || self.captures_per_user == 0 || self.frames_per_capture == 0 {
            return bad("users, captures_per_user and frames_per_capture must be at least 1");
        }
        if self.users > 20 || self.captures_per_user > 5 {
            return bad("at most 20 users and 5 captures per user");
        }
        if self.bump_count == 0 {
            return bad("bump_count must be at least 1");
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !self.packets_per_second.is_finite() || self.packets_per_second <= 0.0 {
            return bad("packets_per_second must be positive");
        }
        if !(0.0..1.0).contains(&self.gain_spread)
            || !self.ramp_range.is_finite()
            || self.ramp_range < 0.0
        {
            return bad("gain_spread must be in [0, 1) and ramp_range non-negative");
        }
        if !(0.0..=1.0).contains(&self.burst_probability)
            || !self.burst_power.is_finite()
            || self.burst_power < 0.0
        {
            return bad("burst_probability must be in [0, 1] and burst_power non-negative");
        }
        Ok(())
    }

    pub fn hands(&self) -> Vec<Hand> {
        if self.left_hand {
            vec![Hand::Right, Hand::Left]
        } else {
            vec![Hand::Right]
        }
    }

    /// Users 1..=10 are men, 11..=20 women.
    pub fn meta(&self, user_id: u32, hand: Hand, capture: u8) -> CaptureMeta {
        CaptureMeta {
            capture,
            gender: if user_id <= 10 { Gender::M } else { Gender::F },
            hand,
            user_id,
        }
    }
}

/// Stable per-user channel in logical subcarrier order.
#[derive(Debug, Clone)]
pub struct Signature {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn hand_code(hand: Hand) -> u64 {
    match hand {
        Hand::Right => 0,
        Hand::Left => 1,
    }
}

/// Baseline shared by every user: the static room channel.
fn baseline(seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    let p1 = rng.random_range(60.0..120.0);
    let p2 = rng.random_range(25.0..45.0);
    let (o1, o2) = (
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    );
    logical_indices()
        .map(|k| {
            let k = f64::from(k);
            1.0 + 0.25 * (2.0 * PI * k / p1 + o1).cos() + 0.1 * (2.0 * PI * k / p2 + o2).cos()
        })
        .collect()
}

pub fn signature(cfg: &SynthConfig, user_id: u32, hand: Hand) -> Signature {
    let base = baseline(cfg.seed);
    let mut rng = stream(
        cfg.seed,
        1 + (u64::from(user_id) * 2 + hand_code(hand)) * 1000,
    );
    let bumps: Vec<(f64, f64, f64)> = (0..cfg.bump_count)
        .map(|_| {
            let center = rng.random_range(-120.0..120.0);
            let width = rng.random_range(4.0..16.0);
            let height = rng.random_range(0.15..0.45);
            (center, width, height)
        })
        .collect();
    let waves: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.1..0.4),
                rng.random_range(30.0..150.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut amplitude = Vec::with_capacity(SUBCARRIERS);
    let mut phase = Vec::with_capacity(SUBCARRIERS);
    for (pos, k) in logical_indices().enumerate() {
        let kf = f64::from(k);
        if NULL_SUBCARRIERS.contains(&k) {
            amplitude.push(0.0);
        } else {
            let bump: f64 = bumps
                .iter()
                .map(|(c, w, h)| h * (-(kf - c).powi(2) / (2.0 * w * w)).exp())
                .sum();
            amplitude.push(AMPLITUDE_SCALE * (base[pos] + bump));
        }
        phase.push(
            waves
                .iter()
                .map(|(a, p, o)| a * (2.0 * PI * kf / p + o).sin())
                .sum(),
        );
    }
    Signature { amplitude, phase }
}

fn quantize(x: f64) -> i16 {
    x.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// All frames of one capture session, in emission order.
pub fn capture_frames(cfg: &SynthConfig, user_id: u32, hand: Hand, capture: u8) -> Vec<CsiFrame> {
    let sig = signature(cfg, user_id, hand);
    let id = 1 + (u64::from(user_id) * 2 + hand_code(hand)) * 1000 + u64::from(capture);
    let mut rng = stream(cfg.seed, id);
    let noise = Normal::new(0.0, cfg.noise_sigma * AMPLITUDE_SCALE / 2f64.sqrt())
        .expect("validated noise sigma");
    let start = 1_700_000_000u64 + u64::from(capture) * 60 + u64::from(user_id) * 3600;
    (0..cfg.frames_per_capture)
        .map(|t| {
            let ramp = if cfg.ramp_range > 0.0 {
                rng.random_range(-cfg.ramp_range..=cfg.ramp_range)
            } else {
                0.0
            };
            let offset = rng.random_range(-PI..PI);
            let gain = 1.0 + cfg.gain_spread * rng.random_range(-1.0..=1.0);
            let mut z: Vec<Complex64> = logical_indices()
                .enumerate()
                .map(|(pos, k)| {
                    let theta = sig.phase[pos] + ramp * f64::from(k) + offset;
                    Complex64::from_polar(sig.amplitude[pos] * gain, theta)
                        + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
                })
                .collect();
            if rng.random_bool(cfg.burst_probability) {
                let width = rng.random_range(8..=24);
                let start = rng.random_range(0..SUBCARRIERS - width);
                for v in &mut z[start..start + width] {
                    let a = cfg.burst_power * AMPLITUDE_SCALE * rng.random_range(0.5..1.0);
                    *v += Complex64::from_polar(a, rng.random_range(-PI..PI));
                }
            }
            let logical: Vec<Complex<i16>> = z
                .iter()
                .map(|v| Complex::new(quantize(v.re), quantize(v.im)))
                .collect();
            let micros_total = (t as f64 / cfg.packets_per_second * 1e6).round() as u64;
            let mut frame = CsiFrame::from_csi(fft_shift(&logical).expect("even length"));
            frame.rssi = (-45.0 + 20.0 * gain.log10()).round() as i8;
            frame.source_mac = TRANSMITTER_MAC;
            frame.sequence_number = (t % 4096) as u16;
            frame.timestamp = Timestamp {
                secs: (start + micros_total / 1_000_000) as u32,
                micros: (micros_total % 1_000_000) as u32,
            };
            frame
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub meta: CaptureMeta,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub packets_per_second: f64,
    pub generator: SynthConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SynthError> {
        let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| SynthError::Manifest(e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(SynthError::Manifest(format!(
                "unsupported manifest version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| SynthError::Manifest(e.to_string()))?;
        fs::write(dir.as_ref().join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

/// `<user:02>/<hand>/<capture>.pcap`
pub fn capture_path(meta: &CaptureMeta) -> PathBuf {
    PathBuf::from(format!("{:02}", meta.user_id))
        .join(meta.hand.to_string())
        .join(format!("{}.pcap", meta.capture))
}

/// Writes every capture under `out_dir` plus `manifest.json`.
pub fn generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest, SynthError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let mut metas = Vec::new();
    for user in 1..=cfg.users {
        for hand in cfg.hands() {
            for capture in 1..=cfg.captures_per_user {
                metas.push(cfg.meta(user, hand, capture));
            }
        }
    }
    let entries = metas
        .par_iter()
        .map(|meta| {
            let rel = capture_path(meta);
            let full = out_dir.join(&rel);
            if let Some(parent) = full.parent() {
                fs::create_dir_all(parent)?;
            }
            let frames = capture_frames(cfg, meta.user_id, meta.hand, meta.capture);
            write_capture(&frames, &full)?;
            Ok(ManifestEntry {
                path: rel,
                meta: *meta,
                frames: frames.len(),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        packets_per_second: cfg.packets_per_second,
        generator: cfg.clone(),
        entries,
    };
    fs::create_dir_all(out_dir)?;
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Ground-truth user per frame for each manifest entry.
pub fn oracle_labels(manifest: &Manifest) -> Vec<(PathBuf, Vec<u32>)> {
    manifest
        .entries
        .iter()
        .map(|e| (e.path.clone(), vec![e.meta.user_id; e.frames]))
        .collect()
}
