//! Sweeps the synthetic noise level and reports 10-fold macro F1 per model.
//!
//! cargo run --release -p handpass --example calibrate -- 0.4 0.6 0.8

use std::time::Instant;

use handpass::dataset::{build_rows_from_frames, slice_dataset, RowsByCapture, SliceOptions};
use handpass::learners::{cross_validate, CvOptions};
use handpass::synth::{capture_frames, SynthConfig};
use handpass::{FramePipeline, ModelKind, SliceName};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let models: Vec<ModelKind> = std::env::var("MODELS")
        .unwrap_or_else(|_| "rf,dt,knn,nb".into())
        .split(',')
        .map(|m| m.parse().unwrap())
        .collect();
    let pipeline = FramePipeline::default();
    let slices: Vec<SliceName> = std::env::var("SLICE")
        .map(|s| s.split(',').map(|n| n.parse().unwrap()).collect())
        .unwrap_or_else(|_| vec![SliceName::D1]);
    for sigma in args.iter().map(|a| a.parse::<f64>().unwrap()) {
        let cfg = SynthConfig {
            noise_sigma: sigma,
            burst_probability: env_or("BURST_P", SynthConfig::default().burst_probability),
            burst_power: env_or("BURST_POW", SynthConfig::default().burst_power),
            packets_per_second: env_or("RATE", 100.0),
            frames_per_capture: env_or("FRAMES", 500.0) as usize,
            ..SynthConfig::scaled_protocol()
        };
        let t0 = Instant::now();
        let mut rows = RowsByCapture::new();
        for user in 1..=cfg.users {
            for capture in 1..=cfg.captures_per_user {
                let meta = cfg.meta(user, handpass::dataset::Hand::Right, capture);
                let frames = capture_frames(&cfg, user, meta.hand, capture);
                let built = build_rows_from_frames(&frames, meta, &pipeline).unwrap();
                rows.insert((user, meta.hand, capture), built.rows);
            }
        }
        let opts = SliceOptions {
            packets_per_second: cfg.packets_per_second,
            right_hand_only: true,
        };
        println!("sigma {sigma}: gen {:.1?}", t0.elapsed());
        for &slice in &slices {
            let s = slice_dataset(&rows, pipeline.feature_names(), slice, opts).unwrap();
            for &kind in &models {
                let t = Instant::now();
                let r = cross_validate(
                    kind,
                    &s.matrix.rows,
                    &s.matrix.labels(),
                    &CvOptions::default(),
                )
                .unwrap();
                println!(
                    "  {slice} {:5} rows {kind:4} f1 {:.4} acc {:.4} ({:.1?})",
                    s.matrix.len(),
                    r.mean.f1,
                    r.mean.accuracy,
                    t.elapsed()
                );
            }
        }
    }
}

fn env_or(key: &str, default: f64) -> f64 {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}
