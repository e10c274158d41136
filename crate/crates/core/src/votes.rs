//! Vote-space construction: correspondence filtering, adjacency weighting and
//! object-center prediction.
//!
//! The distance threshold is the midpoint of the observed distance range,
//! correspondences above it are rejected, and surviving distances are mapped
//! to an adjacency weight in `[0, 1]` (1 = perfect match, 0 = at the
//! rejection boundary). Each surviving correspondence then casts one vote for
//! the object center under the similarity transform implied by the keypoint
//! pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Correspondence, FeatureSet, Keypoint};
use crate::geom::{circular_diff_deg, normalize_angle, Point};

/// One filtered correspondence projected into center/scale/rotation space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    /// Predicted object center, scene pixels. May fall outside the scene for
    /// partially visible objects.
    pub cx: f64,
    pub cy: f64,
    /// Scene keypoint scale over pattern keypoint scale.
    pub rel_scale: f64,
    /// Scene minus pattern orientation, radians in `[0, 2π)`.
    pub rel_rotation: f64,
    /// Similarity weight in `[0, 1]`.
    pub adjacency: f64,
    pub pattern_feature_id: usize,
    pub scene_feature_id: usize,
    pub scene_lum: u8,
    pub pattern_lum: u8,
}

impl Vote {
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }
}

/// Pattern identity and dimensions; the pattern-side half of every detection
/// process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMeta {
    pub pattern_id: String,
    pub width: u32,
    pub height: u32,
}

impl PatternMeta {
    pub fn new(pattern_id: impl Into<String>, width: u32, height: u32) -> Self {
        Self { pattern_id: pattern_id.into(), width, height }
    }

    pub fn from_feature_set(set: &FeatureSet) -> Self {
        Self::new(set.image_id.clone(), set.width, set.height)
    }

    pub fn center(&self) -> Point {
        Point::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Patterns are conventionally preprocessed so the larger side falls in
    /// 256..=512 pixels; outside that range detection still runs but callers
    /// may warn.
    pub fn size_in_convention(&self) -> bool {
        let larger = self.width.max(self.height);
        (256..=512).contains(&larger)
    }
}

/// The live vote collection for one (pattern, scene) pair. Erasure marks
/// votes dead; it never mutates or reorders them, so vote ids stay stable.
#[derive(Clone, Debug)]
pub struct VoteSpace {
    pub pattern_id: String,
    pub scene_dims: (u32, u32),
    votes: Vec<Vote>,
    live: Vec<bool>,
    live_count: usize,
}

impl VoteSpace {
    pub fn new(pattern_id: impl Into<String>, scene_dims: (u32, u32), votes: Vec<Vote>) -> Self {
        let live = vec![true; votes.len()];
        let live_count = votes.len();
        Self { pattern_id: pattern_id.into(), scene_dims, votes, live, live_count }
    }

    /// All votes ever cast, dead ones included; index = vote id.
    pub fn all_votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn vote(&self, id: usize) -> &Vote {
        &self.votes[id]
    }

    pub fn is_live(&self, id: usize) -> bool {
        self.live[id]
    }

    pub fn live_count(&self) -> usize {
        self.live_count
    }

    pub fn iter_live(&self) -> impl Iterator<Item = (usize, &Vote)> {
        self.votes
            .iter()
            .enumerate()
            .filter(|(id, _)| self.live[*id])
    }

    /// Sum of live adjacencies; the mass conserved by the vote image.
    pub fn live_adjacency_sum(&self) -> f64 {
        self.iter_live().map(|(_, v)| v.adjacency).sum()
    }

    pub(crate) fn kill(&mut self, id: usize) -> bool {
        if self.live[id] {
            self.live[id] = false;
            self.live_count -= 1;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("empty correspondence set")]
    EmptyCorrespondenceSet,
    #[error("distance {distance} exceeds threshold {threshold}; filter before weighting")]
    DistanceAboveThreshold { distance: f64, threshold: f64 },
    #[error("pattern keypoint scale must be > 0")]
    ZeroPatternScale,
}

/// Midpoint of the distance range over a correspondence group.
pub fn distance_threshold(distances: &[f64]) -> Result<f64, VoteError> {
    if distances.is_empty() {
        return Err(VoteError::EmptyCorrespondenceSet);
    }
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min + max) / 2.0)
}

/// Boundary-inclusive distance acceptance: keep iff `distance <= thr`.
pub fn accept_distance(distance: f64, thr: f64) -> bool {
    distance <= thr
}

/// Maps an accepted distance to its adjacency weight `1 - (d/thr)^2`.
/// A zero threshold (all distances identical and zero) degenerates to
/// adjacency 1: every match is perfect.
pub fn adjacency(distance: f64, thr: f64) -> Result<f64, VoteError> {
    if distance > thr {
        return Err(VoteError::DistanceAboveThreshold { distance, threshold: thr });
    }
    if thr == 0.0 {
        return Ok(1.0);
    }
    let ratio = distance / thr;
    Ok(1.0 - ratio * ratio)
}

/// Accepts unless both hues are present and circularly further apart than
/// `max_diff_deg`.
pub fn hue_accepted(pattern_hue: Option<f64>, scene_hue: Option<f64>, max_diff_deg: f64) -> bool {
    match (pattern_hue, scene_hue) {
        (Some(p), Some(s)) => circular_diff_deg(p, s) <= max_diff_deg,
        _ => true,
    }
}

/// Projects one correspondence into a vote. The scene keypoint carries the
/// pattern keypoint's offset from the pattern center through the similarity
/// transform given by the scale ratio and orientation difference.
pub fn predict_vote(
    corr: &Correspondence,
    pattern_kp: &Keypoint,
    scene_kp: &Keypoint,
    meta: &PatternMeta,
    adjacency: f64,
) -> Result<Vote, VoteError> {
    if pattern_kp.scale <= 0.0 {
        return Err(VoteError::ZeroPatternScale);
    }
    let rel_scale = scene_kp.scale / pattern_kp.scale;
    let rel_rotation = normalize_angle(scene_kp.orientation - pattern_kp.orientation);
    let offset = meta.center() - Point::new(pattern_kp.x, pattern_kp.y);
    let center = Point::new(scene_kp.x, scene_kp.y) + offset.rotate(rel_rotation).scale(rel_scale);
    Ok(Vote {
        cx: center.x,
        cy: center.y,
        rel_scale,
        rel_rotation,
        adjacency,
        pattern_feature_id: corr.pattern_feature_id,
        scene_feature_id: corr.scene_feature_id,
        scene_lum: scene_kp.luminance,
        pattern_lum: pattern_kp.luminance,
    })
}

/// Runs the full correspondence filter chain and projects survivors into a
/// vote space: distance threshold over the whole group, then per
/// correspondence distance rejection, hue rejection, adjacency weighting and
/// center prediction. Zero survivors yield a valid empty space.
pub fn build_vote_space(
    pattern: &FeatureSet,
    scene: &FeatureSet,
    corrs: &[Correspondence],
    meta: &PatternMeta,
    hue_max_diff_deg: f64,
) -> Result<VoteSpace, VoteError> {
    let scene_dims = (scene.width, scene.height);
    if corrs.is_empty() {
        return Ok(VoteSpace::new(meta.pattern_id.clone(), scene_dims, Vec::new()));
    }
    let distances: Vec<f64> = corrs.iter().map(|c| c.distance).collect();
    let thr = distance_threshold(&distances)?;
    let mut votes = Vec::new();
    for corr in corrs {
        if !accept_distance(corr.distance, thr) {
            continue;
        }
        let pattern_kp = &pattern.keypoints[corr.pattern_feature_id];
        let scene_kp = &scene.keypoints[corr.scene_feature_id];
        if !hue_accepted(pattern_kp.hue, scene_kp.hue, hue_max_diff_deg) {
            continue;
        }
        let weight = adjacency(corr.distance, thr)?;
        votes.push(predict_vote(corr, pattern_kp, scene_kp, meta, weight)?);
    }
    Ok(VoteSpace::new(meta.pattern_id.clone(), scene_dims, votes))
}
