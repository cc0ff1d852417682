//! Enrollment, windowed authentication decisions, the audit trail and the
//! line-protocol service.

mod audit;
mod service;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{read_audit, AuditLog, AuditReadout, AuditRecord};
pub use service::{serve, Gatekeeper, Request, Response, ServiceError};

use crate::codec::{CodecError, CsiFrame};
use crate::dataset::FramePipeline;
use crate::dsp::{fit_scaler, DspError, FittedScaler, ScalerKind};
use crate::learners::{train, HyperParams, LearnError, ModelKind, TrainedModel};

pub const STORE_FORMAT_VERSION: u32 = 1;
/// Environment variable overriding the store path.
pub const STORE_ENV: &str = "HANDPASS_STORE";
pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_WINDOW_SECONDS: f64 = 1.0;
pub const DEFAULT_PERMISSION: &str = "door";
pub const MIN_ENROLL_FRAMES: usize = 100;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("need at least two enrolled users, got {0}")]
    DegenerateLabels(usize),
    #[error("user {user} has {frames} usable frames, need {needed}")]
    TooFewFrames {
        user: u32,
        frames: usize,
        needed: usize,
    },
    #[error("window needs {needed} frames, got {got}")]
    WindowTooShort { needed: usize, got: usize },
    #[error("every frame in the window is degenerate")]
    ZeroSignal,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("store document: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollConfig {
    pub model: ModelKind,
    pub scaler: ScalerKind,
    pub hyper: HyperParams,
    pub pipeline: FramePipeline,
    pub packets_per_second: f64,
    /// Permissions granted to every enrolled user.
    pub permissions: BTreeSet<String>,
    pub min_frames: usize,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        EnrollConfig {
            model: ModelKind::RandomForest,
            scaler: ScalerKind::MinMax,
            hyper: HyperParams::default(),
            pipeline: FramePipeline::default(),
            packets_per_second: 1000.0,
            permissions: [DEFAULT_PERMISSION.to_string()].into(),
            min_frames: MIN_ENROLL_FRAMES,
        }
    }
}

/// Everything needed to turn raw frames into a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentStore {
    pub format_version: u32,
    /// Bumped whenever the roster or model changes.
    pub version: u32,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub packets_per_second: f64,
    pub pipeline: FramePipeline,
    pub scaler: FittedScaler,
    pub model: TrainedModel,
    pub roster: BTreeMap<u32, BTreeSet<String>>,
}

impl EnrollmentStore {
    pub fn to_json(&self) -> Result<String, GateError> {
        serde_json::to_string(self).map_err(|e| GateError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, GateError> {
        let store: EnrollmentStore =
            serde_json::from_str(text).map_err(|e| GateError::Format(e.to_string()))?;
        if store.format_version != STORE_FORMAT_VERSION {
            return Err(GateError::Format(format!(
                "unsupported store version {}",
                store.format_version
            )));
        }
        if let Some(u) = store
            .roster
            .keys()
            .find(|u| !store.model.classes.contains(u))
        {
            return Err(GateError::Format(format!(
                "roster user {u} is not a model class"
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GateError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Removes a user from the roster; the model still knows the class.
    pub fn revoke(&mut self, user: u32) -> bool {
        let removed = self.roster.remove(&user).is_some();
        if removed {
            self.version += 1;
        }
        removed
    }

    /// Scaled feature vector for one frame.
    pub fn features(&self, frame: &CsiFrame) -> Result<Vec<f64>, GateError> {
        let raw = self.pipeline.features(frame)?;
        Ok(self.scaler.transform_row(&raw)?)
    }

    pub fn frames_for_window(&self, window_seconds: f64) -> usize {
        ((window_seconds * self.packets_per_second).ceil() as usize).max(1)
    }
}

/// Fits the scaler and classifier on every user's enrollment frames.
pub fn enroll(
    frames_by_user: &BTreeMap<u32, Vec<CsiFrame>>,
    cfg: &EnrollConfig,
    seed: u64,
) -> Result<EnrollmentStore, GateError> {
    if frames_by_user.len() < 2 {
        return Err(GateError::DegenerateLabels(frames_by_user.len()));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (&user, frames) in frames_by_user {
        let before = rows.len();
        for frame in frames {
            match cfg.pipeline.features(frame) {
                Ok(f) => {
                    rows.push(f);
                    labels.push(user);
                }
                Err(DspError::ZeroSignal) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let usable = rows.len() - before;
        if usable < cfg.min_frames {
            return Err(GateError::TooFewFrames {
                user,
                frames: usable,
                needed: cfg.min_frames,
            });
        }
    }
    let scaler = fit_scaler(cfg.scaler, &rows)?;
    for r in rows.iter_mut() {
        *r = scaler.transform_row(r)?;
    }
    let model = train(cfg.model, &rows, &labels, &cfg.hyper, seed)?;
    let roster = frames_by_user
        .keys()
        .map(|&u| (u, cfg.permissions.clone()))
        .collect();
    Ok(EnrollmentStore {
        format_version: STORE_FORMAT_VERSION,
        version: 1,
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        packets_per_second: cfg.packets_per_second,
        pipeline: cfg.pipeline.clone(),
        scaler,
        model,
        roster,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Grant,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthDecision {
    pub user_id: Option<u32>,
    pub vote_share: f64,
    pub frames_used: usize,
    pub window_seconds: f64,
    pub decision: Decision,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthPolicy {
    pub window_seconds: f64,
    /// Minimum share of frame votes the modal user needs.
    pub threshold: f64,
    pub permission: Option<String>,
}

impl Default for AuthPolicy {
    fn default() -> Self {
        AuthPolicy {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            threshold: DEFAULT_THRESHOLD,
            permission: None,
        }
    }
}

/// Per-frame predictions for the leading window of `frames`.
pub fn window_votes(
    store: &EnrollmentStore,
    frames: &[CsiFrame],
    window_seconds: f64,
) -> Result<Vec<u32>, GateError> {
    if window_seconds.is_nan() || window_seconds <= 0.0 {
        return Err(GateError::InvalidRequest(format!(
            "window must be positive, got {window_seconds}"
        )));
    }
    let needed = store.frames_for_window(window_seconds);
    if frames.len() < needed {
        return Err(GateError::WindowTooShort {
            needed,
            got: frames.len(),
        });
    }
    let mut votes = Vec::with_capacity(needed);
    for frame in &frames[..needed] {
        match store.features(frame) {
            Ok(f) => votes.push(store.model.predict_one(&f)?),
            Err(GateError::Dsp(DspError::ZeroSignal)) => {}
            Err(e) => return Err(e),
        }
    }
    if votes.is_empty() {
        return Err(GateError::ZeroSignal);
    }
    Ok(votes)
}

/// Applies the vote-share threshold and roster policy to per-frame votes.
pub fn decide(store: &EnrollmentStore, votes: &[u32], policy: &AuthPolicy) -> AuthDecision {
    let mut tally: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in votes {
        *tally.entry(v).or_default() += 1;
    }
    // lowest label wins ties
    let (user, count) = tally.iter().fold(
        (0u32, 0usize),
        |best, (&u, &c)| if c > best.1 { (u, c) } else { best },
    );
    let share = count as f64 / votes.len() as f64;
    let (decision, reason) = if share < policy.threshold {
        (Decision::Deny, "below threshold".to_string())
    } else {
        match store.roster.get(&user) {
            None => (Decision::Deny, "not enrolled".to_string()),
            Some(perms) => match &policy.permission {
                Some(p) if !perms.contains(p) => {
                    (Decision::Deny, format!("missing permission '{p}'"))
                }
                _ => (Decision::Grant, "granted".to_string()),
            },
        }
    };
    AuthDecision {
        user_id: Some(user),
        vote_share: share,
        frames_used: votes.len(),
        window_seconds: policy.window_seconds,
        decision,
        reason,
    }
}

pub fn authenticate(
    store: &EnrollmentStore,
    frames: &[CsiFrame],
    policy: &AuthPolicy,
) -> Result<AuthDecision, GateError> {
    if !(0.0..=1.0).contains(&policy.threshold) {
        return Err(GateError::InvalidRequest(format!(
            "threshold must be within [0, 1], got {}",
            policy.threshold
        )));
    }
    let votes = window_votes(store, frames, policy.window_seconds)?;
    Ok(decide(store, &votes, policy))
}
