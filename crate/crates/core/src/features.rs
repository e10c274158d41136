//! Keypoint file IO and exhaustive nearest-neighbor descriptor matching.
//!
//! Feature extraction itself happens upstream; this module only consumes its
//! output. A feature file is JSON Lines: the first line is a header object
//! (`image_id`, `width`, `height`), every following line one keypoint
//! (`x`, `y`, `scale`, `orientation`, `luminance`, optional `hue`,
//! `descriptor`). An empty file parses as an empty set.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::normalize_angle;

/// One invariant local feature, in source-image pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Characteristic-region radius in pixels; strictly positive.
    pub scale: f64,
    /// Radians, normalized to `[0, 2π)` on load.
    pub orientation: f64,
    /// Luminance sampled at (x, y).
    pub luminance: u8,
    /// Hue in degrees `[0, 360)`, when the extractor provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hue: Option<f64>,
    pub descriptor: Vec<f64>,
}

/// All keypoints extracted from one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub keypoints: Vec<Keypoint>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    image_id: String,
    width: u32,
    height: u32,
}

impl FeatureSet {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        Self { image_id: image_id.into(), width, height, keypoints: Vec::new() }
    }

    pub fn descriptor_len(&self) -> Option<usize> {
        self.keypoints.first().map(|k| k.descriptor.len())
    }

    /// Keypoints lying outside the image bounds. Permitted by the format;
    /// callers may want to warn.
    pub fn out_of_bounds_count(&self) -> usize {
        self.keypoints
            .iter()
            .filter(|k| k.x < 0.0 || k.y < 0.0 || k.x > self.width as f64 || k.y > self.height as f64)
            .count()
    }
}

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}: descriptor length {found} differs from length {expected} established earlier in the file")]
    DescriptorLength { line: usize, expected: usize, found: usize },
}

fn record_err(line: usize, message: impl fmt::Display) -> FeatureFileError {
    FeatureFileError::Record { line, message: message.to_string() }
}

/// Parses a feature file body. Line numbers in errors are 1-based.
pub fn parse_feature_set(text: &str) -> Result<FeatureSet, FeatureFileError> {
    let mut set = FeatureSet::new("", 0, 0);
    let mut expected_len: Option<usize> = None;
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_header {
            let header: Header =
                serde_json::from_str(trimmed).map_err(|e| record_err(line, format!("bad header: {e}")))?;
            set.image_id = header.image_id;
            set.width = header.width;
            set.height = header.height;
            seen_header = true;
            continue;
        }
        let mut kp: Keypoint = serde_json::from_str(trimmed).map_err(|e| record_err(line, e))?;
        if !kp.x.is_finite() || !kp.y.is_finite() || !kp.scale.is_finite() || !kp.orientation.is_finite() {
            return Err(record_err(line, "non-finite coordinate field"));
        }
        if kp.scale <= 0.0 {
            return Err(record_err(line, format!("scale must be > 0, got {}", kp.scale)));
        }
        if kp.descriptor.iter().any(|v| !v.is_finite()) {
            return Err(record_err(line, "non-finite descriptor element"));
        }
        kp.orientation = normalize_angle(kp.orientation);
        if let Some(h) = kp.hue {
            if !h.is_finite() {
                return Err(record_err(line, "non-finite hue"));
            }
            kp.hue = Some(h.rem_euclid(360.0));
        }
        match expected_len {
            None => expected_len = Some(kp.descriptor.len()),
            Some(expected) if expected != kp.descriptor.len() => {
                return Err(FeatureFileError::DescriptorLength {
                    line,
                    expected,
                    found: kp.descriptor.len(),
                });
            }
            Some(_) => {}
        }
        set.keypoints.push(kp);
    }
    Ok(set)
}

pub fn load_feature_set(path: impl AsRef<Path>) -> Result<FeatureSet, FeatureFileError> {
    parse_feature_set(&fs::read_to_string(path)?)
}

/// Serializes a feature set in the JSON Lines layout accepted by
/// [`parse_feature_set`]. Save-load-save is byte-stable.
pub fn encode_feature_set(set: &FeatureSet) -> String {
    let header = Header {
        image_id: set.image_id.clone(),
        width: set.width,
        height: set.height,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for kp in &set.keypoints {
        out.push_str(&serde_json::to_string(kp).expect("keypoint serializes"));
        out.push('\n');
    }
    out
}

pub fn save_feature_set(set: &FeatureSet, path: impl AsRef<Path>) -> Result<(), FeatureFileError> {
    fs::write(path, encode_feature_set(set))?;
    Ok(())
}

/// A pattern-to-scene feature pairing with its descriptor-metric distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pattern_feature_id: usize,
    pub scene_feature_id: usize,
    pub distance: f64,
}

/// Descriptor distance used by the matcher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    L2,
    L1,
    /// Bit-level Hamming distance; descriptor elements are interpreted as
    /// bytes (rounded and clamped to 0..=255).
    Hamming,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Hamming => a
                .iter()
                .zip(b)
                .map(|(x, y)| (to_byte(*x) ^ to_byte(*y)).count_ones() as f64)
                .sum(),
        }
    }
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Metric::L2),
            "l1" => Ok(Metric::L1),
            "hamming" => Ok(Metric::Hamming),
            other => Err(format!("unknown metric `{other}` (expected l2, l1 or hamming)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("descriptor length mismatch: pattern descriptors have length {pattern}, scene descriptors length {scene}")]
    DescriptorLengthMismatch { pattern: usize, scene: usize },
}

/// Exhaustive one-nearest-neighbor matching: for every scene keypoint, the
/// closest pattern keypoint under `metric`, ties resolved towards the lower
/// pattern index. No ratio test; distance filtering happens downstream.
pub fn match_features(
    pattern: &FeatureSet,
    scene: &FeatureSet,
    metric: Metric,
) -> Result<Vec<Correspondence>, MatchError> {
    if pattern.keypoints.is_empty() || scene.keypoints.is_empty() {
        return Ok(Vec::new());
    }
    let plen = pattern.descriptor_len().expect("nonempty");
    let slen = scene.descriptor_len().expect("nonempty");
    if plen != slen {
        return Err(MatchError::DescriptorLengthMismatch { pattern: plen, scene: slen });
    }
    let corrs = scene
        .keypoints
        .iter()
        .enumerate()
        .map(|(scene_id, skp)| {
            let mut best_id = 0;
            let mut best_dist = f64::INFINITY;
            for (pattern_id, pkp) in pattern.keypoints.iter().enumerate() {
                let d = metric.distance(&pkp.descriptor, &skp.descriptor);
                if d < best_dist {
                    best_dist = d;
                    best_id = pattern_id;
                }
            }
            Correspondence {
                pattern_feature_id: best_id,
                scene_feature_id: scene_id,
                distance: best_dist,
            }
        })
        .collect();
    Ok(corrs)
}

/// Correspondence files are JSON Lines, one record per line.
pub fn encode_correspondences(corrs: &[Correspondence]) -> String {
    let mut out = String::new();
    for c in corrs {
        out.push_str(&serde_json::to_string(c).expect("correspondence serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>, FeatureFileError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let c: Correspondence =
            serde_json::from_str(trimmed).map_err(|e| record_err(idx + 1, e))?;
        if c.distance < 0.0 {
            return Err(record_err(idx + 1, "distance must be >= 0"));
        }
        out.push(c);
    }
    Ok(out)
}
