//! Feature rows, the CSV table format and the six capture-duration slices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::Manifest;

use rayon::prelude::*;

use crate::codec::{read_capture, CaptureFile, CodecError, CsiFrame, SUBCARRIERS};
use crate::dsp::{
    logical_indices, normalize_cfr, sanitize_phase, to_cfr, DspError, SanitizerConfig,
    SubcarrierMask,
};

pub const METADATA_COLUMNS: [&str; 4] = ["capture", "gender", "hand", "user_id"];
pub const FULL_FEATURES: usize = 2 * SUBCARRIERS;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("capture is empty")]
    EmptyCapture,
    #[error("insufficient rows: {0}")]
    InsufficientRows(String),
    #[error("ragged rows: line {line} has {got} fields, header has {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid metadata: {0}")]
    InvalidMeta(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Right,
    Left,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

impl FromStr for Gender {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" | "m" => Ok(Gender::M),
            "F" | "f" => Ok(Gender::F),
            other => Err(DatasetError::InvalidMeta(format!("gender '{other}'"))),
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hand::Right => "right",
            Hand::Left => "left",
        })
    }
}

impl FromStr for Hand {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "right" | "r" => Ok(Hand::Right),
            "left" | "l" => Ok(Hand::Left),
            other => Err(DatasetError::InvalidMeta(format!("hand '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaptureMeta {
    /// 1..=5
    pub capture: u8,
    pub gender: Gender,
    pub hand: Hand,
    /// 1..=20
    pub user_id: u32,
}

impl CaptureMeta {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(1..=5).contains(&self.capture) {
            return Err(DatasetError::InvalidMeta(format!(
                "capture number {} outside 1..=5",
                self.capture
            )));
        }
        if !(1..=20).contains(&self.user_id) {
            return Err(DatasetError::InvalidMeta(format!(
                "user id {} outside 1..=20",
                self.user_id
            )));
        }
        Ok(())
    }
}

/// Per-frame preprocessing from raw CSI to a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePipeline {
    pub mask: SubcarrierMask,
    pub sanitizer: SanitizerConfig,
    /// Drop null and pilot subcarriers from both feature blocks.
    pub prune: bool,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default = "yes")]
    pub sanitize: bool,
}

fn yes() -> bool {
    true
}

impl Default for FramePipeline {
    fn default() -> Self {
        FramePipeline {
            mask: SubcarrierMask::vht80(),
            sanitizer: SanitizerConfig::default(),
            prune: true,
            normalize: true,
            sanitize: true,
        }
    }
}

impl FramePipeline {
    pub fn full() -> Self {
        FramePipeline {
            prune: false,
            ..Self::default()
        }
    }

    /// Logical subcarrier indices kept in each feature block.
    pub fn kept_subcarriers(&self) -> Vec<i32> {
        if self.prune {
            self.mask.useful.clone()
        } else {
            logical_indices().collect()
        }
    }

    pub fn width(&self) -> usize {
        2 * self.kept_subcarriers().len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let kept = self.kept_subcarriers();
        kept.iter()
            .map(|k| format!("amp_{k}"))
            .chain(kept.iter().map(|k| format!("phase_{k}")))
            .collect()
    }

    /// Amplitude block followed by phase (degrees) block.
    pub fn features(&self, frame: &CsiFrame) -> Result<Vec<f64>, DspError> {
        let mut cfr = to_cfr(frame)?;
        if self.normalize {
            cfr = normalize_cfr(&cfr)?;
        } else if cfr.mean_amplitude() == 0.0 {
            return Err(DspError::ZeroSignal);
        }
        if self.sanitize {
            self.sanitizer.validate()?;
            cfr = sanitize_phase(&cfr, &self.sanitizer, &self.mask);
        }
        let out = if self.prune {
            let pos = self.mask.useful_positions();
            pos.iter()
                .map(|&p| cfr.amplitude[p])
                .chain(pos.iter().map(|&p| cfr.phase_deg[p]))
                .collect()
        } else {
            let mut v = cfr.amplitude;
            v.extend_from_slice(&cfr.phase_deg);
            v
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub meta: CaptureMeta,
    pub frame_index: usize,
}

impl FeatureRow {
    pub fn label(&self) -> u32 {
        self.meta.user_id
    }
}

/// Rows of features with their metadata; the unit handed to learners.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub meta: Vec<CaptureMeta>,
}

impl FeatureMatrix {
    pub fn from_rows(feature_names: Vec<String>, rows: &[FeatureRow]) -> Self {
        FeatureMatrix {
            feature_names,
            rows: rows.iter().map(|r| r.features.clone()).collect(),
            meta: rows.iter().map(|r| r.meta).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    /// Total CSV columns: features plus the metadata block.
    pub fn column_count(&self) -> usize {
        self.width() + METADATA_COLUMNS.len()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.meta.iter().map(|m| m.user_id).collect()
    }
}

/// Output of [`build_rows`].
#[derive(Debug, Clone, Default)]
pub struct BuiltRows {
    pub rows: Vec<FeatureRow>,
    /// Frames rejected as carrying no signal.
    pub dropped: usize,
}

pub fn build_rows(
    capture: &CaptureFile,
    meta: CaptureMeta,
    pipeline: &FramePipeline,
) -> Result<BuiltRows, DatasetError> {
    build_rows_from_frames(&capture.frames, meta, pipeline)
}

pub fn build_rows_from_frames(
    frames: &[CsiFrame],
    meta: CaptureMeta,
    pipeline: &FramePipeline,
) -> Result<BuiltRows, DatasetError> {
    if frames.is_empty() {
        return Err(DatasetError::EmptyCapture);
    }
    meta.validate()?;
    let width = pipeline.width();
    let mut built = BuiltRows::default();
    for (frame_index, frame) in frames.iter().enumerate() {
        match pipeline.features(frame) {
            Ok(features) => {
                assert_eq!(features.len(), width);
                built.rows.push(FeatureRow {
                    features,
                    meta,
                    frame_index,
                });
            }
            Err(DspError::ZeroSignal) => built.dropped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(built)
}

/// Reads every capture listed in a generator manifest under `dir` and
/// preprocesses it. Also returns the manifest.
pub fn rows_from_manifest(
    dir: impl AsRef<Path>,
    pipeline: &FramePipeline,
) -> Result<(RowsByCapture, Manifest), DatasetError> {
    let dir = dir.as_ref();
    let manifest = Manifest::load(dir).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    let built = manifest
        .entries
        .par_iter()
        .map(|e| {
            let capture = read_capture(dir.join(&e.path))?;
            let rows = build_rows(&capture, e.meta, pipeline)?;
            if rows.dropped > 0 {
                log::warn!(
                    "{}: dropped {} zero-signal frames",
                    e.path.display(),
                    rows.dropped
                );
            }
            Ok(((e.meta.user_id, e.meta.hand, e.meta.capture), rows.rows))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok((built.into_iter().collect(), manifest))
}

/// The six dataset slicings: seconds per capture and captures used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SliceName {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
}

impl SliceName {
    pub const ALL: [SliceName; 6] = [
        SliceName::D1,
        SliceName::D2,
        SliceName::D3,
        SliceName::D4,
        SliceName::D5,
        SliceName::D6,
    ];

    pub fn seconds(self) -> f64 {
        match self {
            SliceName::D1 | SliceName::D2 | SliceName::D3 => 1.0,
            _ => 5.0,
        }
    }

    pub fn captures(self) -> &'static [u8] {
        match self {
            SliceName::D1 | SliceName::D4 => &[1],
            SliceName::D2 | SliceName::D5 => &[1, 2, 3],
            SliceName::D3 | SliceName::D6 => &[1, 2, 3, 4, 5],
        }
    }

    pub fn rows_per_capture(self, packets_per_second: f64) -> usize {
        (self.seconds() * packets_per_second).ceil() as usize
    }
}

impl fmt::Display for SliceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SliceName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SliceName::ALL
            .into_iter()
            .find(|n| n.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown slice '{s}', expected D1..D6"))
    }
}

/// Rows of one capture session, keyed by (user, hand, capture).
pub type RowsByCapture = BTreeMap<(u32, Hand, u8), Vec<FeatureRow>>;

#[derive(Debug, Clone)]
pub struct DatasetSlice {
    pub name: SliceName,
    pub seconds_per_capture: f64,
    pub captures_used: Vec<u8>,
    pub matrix: FeatureMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct SliceOptions {
    pub packets_per_second: f64,
    /// Keep only right-hand captures.
    pub right_hand_only: bool,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            packets_per_second: 1000.0,
            right_hand_only: true,
        }
    }
}

/// Takes the leading `seconds × rate` rows of each required capture per user.
pub fn slice_dataset(
    rows: &RowsByCapture,
    feature_names: Vec<String>,
    name: SliceName,
    opts: SliceOptions,
) -> Result<DatasetSlice, DatasetError> {
    let hands: &[Hand] = if opts.right_hand_only {
        &[Hand::Right]
    } else {
        &[Hand::Right, Hand::Left]
    };
    let take = name.rows_per_capture(opts.packets_per_second);
    let mut out = Vec::new();
    for &hand in hands {
        let users: BTreeSet<u32> = rows
            .keys()
            .filter(|(_, h, _)| *h == hand)
            .map(|(u, _, _)| *u)
            .collect();
        for user in users {
            for &capture in name.captures() {
                let session = rows.get(&(user, hand, capture)).ok_or_else(|| {
                    DatasetError::InsufficientRows(format!(
                        "user {user} has no {hand}-hand capture {capture}"
                    ))
                })?;
                if session.len() < take {
                    return Err(DatasetError::InsufficientRows(format!(
                        "user {user} {hand} capture {capture}: need {take} rows, have {}",
                        session.len()
                    )));
                }
                out.extend_from_slice(&session[..take]);
            }
        }
    }
    if out.is_empty() {
        return Err(DatasetError::InsufficientRows(
            "no captures for the requested hand".into(),
        ));
    }
    Ok(DatasetSlice {
        name,
        seconds_per_capture: name.seconds(),
        captures_used: name.captures().to_vec(),
        matrix: FeatureMatrix::from_rows(feature_names, &out),
    })
}

pub fn write_csv(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = File::create(path)?;
    write_csv_to(matrix, BufWriter::new(file))
}

pub fn write_csv_to<W: Write>(matrix: &FeatureMatrix, mut w: W) -> Result<(), DatasetError> {
    let header: Vec<&str> = matrix
        .feature_names
        .iter()
        .map(String::as_str)
        .chain(METADATA_COLUMNS)
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for (row, meta) in matrix.rows.iter().zip(&matrix.meta) {
        if row.len() != matrix.width() {
            return Err(DatasetError::RaggedRows {
                line: 0,
                expected: matrix.width(),
                got: row.len(),
            });
        }
        line.clear();
        for x in row {
            // shortest representation that parses back to the same f64
            line.push_str(&format!("{x},"));
        }
        line.push_str(&format!(
            "{},{},{},{}",
            meta.capture, meta.gender, meta.hand, meta.user_id
        ));
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix, DatasetError> {
    let file = File::open(path)?;
    read_csv_from(file)
}

pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<FeatureMatrix, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .clone();
    let n = header.len();
    if n < METADATA_COLUMNS.len()
        || header
            .iter()
            .skip(n - METADATA_COLUMNS.len())
            .ne(METADATA_COLUMNS)
    {
        return Err(DatasetError::Csv(format!(
            "header must end with {}",
            METADATA_COLUMNS.join(",")
        )));
    }
    let width = n - METADATA_COLUMNS.len();
    let mut matrix = FeatureMatrix {
        feature_names: header.iter().take(width).map(str::to_owned).collect(),
        ..FeatureMatrix::default()
    };
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let line = i + 2;
        if record.len() != n {
            return Err(DatasetError::RaggedRows {
                line,
                expected: n,
                got: record.len(),
            });
        }
        let parse = |s: &str| -> Result<f64, DatasetError> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| DatasetError::Csv(format!("line {line}: bad number '{s}'")))
        };
        let row = record
            .iter()
            .take(width)
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?;
        let bad = |what: &str| DatasetError::InvalidMeta(format!("line {line}: bad {what}"));
        let meta = CaptureMeta {
            capture: record[width].trim().parse().map_err(|_| bad("capture"))?,
            gender: record[width + 1].trim().parse()?,
            hand: record[width + 2].trim().parse()?,
            user_id: record[width + 3]
                .trim()
                .parse()
                .map_err(|_| bad("user_id"))?,
        };
        meta.validate()
            .map_err(|e| DatasetError::InvalidMeta(format!("line {line}: {e}")))?;
        matrix.rows.push(row);
        matrix.meta.push(meta);
    }
    Ok(matrix)
}
