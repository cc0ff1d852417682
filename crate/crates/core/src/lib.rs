//! Wi-Fi CSI palm authentication.
//!
//! The pipeline runs from Nexmon-style PCAP captures ([`codec`]) through
//! amplitude/phase preprocessing ([`dsp`]) and feature tables ([`dataset`])
//! to from-scratch classifiers ([`learners`]) and the access-control layer
//! ([`gatekeeper`]). [`synth`] produces seeded synthetic captures for
//! end-to-end checks.

pub mod codec;
pub mod dataset;
pub mod dsp;
pub mod gatekeeper;
pub mod learners;
pub mod synth;

pub use codec::{read_capture, write_capture, CaptureFile, CodecError, CsiFrame};
pub use dataset::{CaptureMeta, FeatureMatrix, FeatureRow, FramePipeline, SliceName};
pub use dsp::{FittedScaler, SanitizerConfig, ScalerKind, SubcarrierMask};
pub use learners::{HyperParams, ModelKind, TrainedModel};
