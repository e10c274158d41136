//! The six verification filters and the two cascade passes.
//!
//! Pass 1 (after the local gather) runs vote count, adjacency sum, scale
//! variance and rotation variance. Pass 2 (after the flood-fill gather) runs
//! scale variance, rotation variance, the luminance binary test and the
//! normalized cross-correlation. The cascade short-circuits on the first
//! rejection and never touches the vote space itself.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::Pose;
use crate::geom::{circular_mean, normalize_angle};
use crate::image::GrayImage;
use crate::votes::Vote;

/// Side of the square patches compared by the correlation filter.
pub const NCC_PATCH_SIZE: u32 = 50;

/// Thresholds and the test budget for the cascade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    /// Filter (1): minimum surviving votes.
    pub min_votes: usize,
    /// Filter (2): minimum adjacency sum.
    pub min_adjacency_sum: f64,
    /// Filter (3): maximum population variance of relative scale.
    pub max_scale_variance: f64,
    /// Filter (4): maximum rotation variance, radians squared.
    pub max_rotation_variance: f64,
    /// Filter (5): number of luminance binary tests.
    pub binary_tests: usize,
    /// Filter (5): maximum normalized Hamming distance.
    pub max_hamming_norm: f64,
    /// Filter (6): minimum zero-mean normalized cross-correlation.
    pub min_ncc: f64,
    /// Seed for the binary-test pair draws.
    pub rng_seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            min_votes: 6,
            min_adjacency_sum: 3.0,
            max_scale_variance: 0.05,
            // (45°)². The variance is over all gathered rotations, so one
            // stray vote in a group of n contributes up to π²/n; this bound
            // tolerates a single outlier for n >= 16 while incoherent groups
            // (bimodal >= (90°)², uniform ~ π²/3) stay rejected.
            max_rotation_variance: 45.0_f64.to_radians().powi(2),
            binary_tests: 128,
            max_hamming_norm: 0.25,
            min_ncc: 0.3,
            rng_seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_votes < 3 {
            return Err(format!("min_votes must be >= 3, got {}", self.min_votes));
        }
        if self.binary_tests == 0 {
            return Err("binary_tests must be >= 1".into());
        }
        for (name, v) in [
            ("min_adjacency_sum", self.min_adjacency_sum),
            ("max_scale_variance", self.max_scale_variance),
            ("max_rotation_variance", self.max_rotation_variance),
            ("max_hamming_norm", self.max_hamming_norm),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !self.min_ncc.is_finite() {
            return Err("min_ncc must be finite".into());
        }
        Ok(())
    }
}

/// One filter's measurement and verdict, recorded in acceptance order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Result of one cascade pass: overall verdict plus every filter that ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    pub accepted: bool,
    pub filters: Vec<FilterOutcome>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    One,
    Two,
}

/// Image context required by filters (5) is vote-only, (6) needs the scene
/// patch under the pass-1 pose and the pattern graphics.
#[derive(Clone, Copy)]
pub struct PassTwoContext<'a> {
    pub pose: &'a Pose,
    pub scene_image: &'a GrayImage,
    pub pattern_image: &'a GrayImage,
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("cascade pass 2 requires pose and image context for the correlation filter")]
    MissingPassTwoContext,
}

pub fn vote_count_filter(votes: &[Vote], min_votes: usize) -> bool {
    votes.len() >= min_votes
}

pub fn adjacency_sum(votes: &[Vote]) -> f64 {
    votes.iter().map(|v| v.adjacency).sum()
}

pub fn adjacency_sum_filter(votes: &[Vote], min_sum: f64) -> bool {
    adjacency_sum(votes) >= min_sum
}

/// Population variance of the relative scales. `None` for an empty group.
pub fn scale_variance(votes: &[Vote]) -> Option<f64> {
    if votes.is_empty() {
        return None;
    }
    let n = votes.len() as f64;
    let mean = votes.iter().map(|v| v.rel_scale).sum::<f64>() / n;
    Some(votes.iter().map(|v| (v.rel_scale - mean).powi(2)).sum::<f64>() / n)
}

pub fn scale_variance_filter(votes: &[Vote], max_var: f64) -> bool {
    scale_variance(votes).is_some_and(|v| v <= max_var)
}

/// Rotation variance via the twelve-bucket procedure: histogram the
/// rotations into 30° buckets, take the three fullest (ties to the lower
/// index), anchor on the circular mean of their member votes, shift that
/// anchor to 180° and measure the population variance of all shifted values
/// about 180°.
///
/// The bucket grid is anchored at the group's own circular mean, so the
/// whole statistic co-rotates with the data: adding a constant to every
/// rotation leaves it unchanged.
pub fn rotation_variance(rotations: &[f64]) -> Option<f64> {
    if rotations.is_empty() {
        return None;
    }
    let mu = circular_mean(rotations);
    let centered: Vec<f64> = rotations
        .iter()
        .map(|&r| normalize_angle(r - mu + PI))
        .collect();

    const BUCKETS: usize = 12;
    let bucket_width = TAU / BUCKETS as f64;
    let mut counts = [0usize; BUCKETS];
    for &c in &centered {
        let b = ((c / bucket_width) as usize).min(BUCKETS - 1);
        counts[b] += 1;
    }
    let mut order: Vec<usize> = (0..BUCKETS).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let top = &order[..3];

    let members: Vec<f64> = centered
        .iter()
        .copied()
        .filter(|&c| {
            let b = ((c / bucket_width) as usize).min(BUCKETS - 1);
            top.contains(&b)
        })
        .collect();
    let anchor = circular_mean(&members);

    let n = centered.len() as f64;
    let variance = centered
        .iter()
        .map(|&c| {
            let shifted = normalize_angle(c - anchor + PI);
            (shifted - PI).powi(2)
        })
        .sum::<f64>()
        / n;
    Some(variance)
}

pub fn rotation_variance_filter(votes: &[Vote], max_var: f64) -> bool {
    let rotations: Vec<f64> = votes.iter().map(|v| v.rel_rotation).collect();
    rotation_variance(&rotations).is_some_and(|v| v <= max_var)
}

/// Deterministic ordered pair draws for the binary test: each test picks
/// `(i, j)` uniformly with `i != j`, independently across tests.
pub fn draw_test_pairs(group_size: usize, tests: usize, seed: u64) -> Vec<(usize, usize)> {
    debug_assert!(group_size >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tests)
        .map(|_| {
            let i = rng.random_range(0..group_size);
            let mut j = rng.random_range(0..group_size - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

/// Normalized Hamming distance between the scene-side and pattern-side
/// luminance orderings over the drawn pairs. `None` when the group holds
/// fewer than two votes.
pub fn binary_test_statistic(votes: &[Vote], tests: usize, seed: u64) -> Option<f64> {
    if votes.len() < 2 || tests == 0 {
        return None;
    }
    let pairs = draw_test_pairs(votes.len(), tests, seed);
    let mismatches = pairs
        .iter()
        .filter(|&&(i, j)| {
            let scene_bit = votes[i].scene_lum < votes[j].scene_lum;
            let pattern_bit = votes[i].pattern_lum < votes[j].pattern_lum;
            scene_bit != pattern_bit
        })
        .count();
    Some(mismatches as f64 / tests as f64)
}

pub fn binary_test_filter(votes: &[Vote], tests: usize, max_hamming_norm: f64, seed: u64) -> bool {
    binary_test_statistic(votes, tests, seed).is_some_and(|d| d <= max_hamming_norm)
}

/// Zero-mean normalized cross-correlation of two equal-length patches.
/// Defined as 0 when either patch has no variance.
pub fn ncc_zero_mean(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cross = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cross += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    cross / (var_a.sqrt() * var_b.sqrt())
}

/// Samples the pose quad out of the scene into a `NCC_PATCH_SIZE`² patch by
/// inverse similarity mapping with bilinear interpolation; samples falling
/// outside the scene read as zero.
pub fn sample_pose_patch(scene: &GrayImage, pose: &Pose, pattern_dims: (u32, u32)) -> Vec<f64> {
    let side = NCC_PATCH_SIZE;
    let (pw, ph) = (pattern_dims.0 as f64, pattern_dims.1 as f64);
    let pattern_center = crate::geom::Point::new(pw / 2.0, ph / 2.0);
    let mut patch = Vec::with_capacity((side * side) as usize);
    for v in 0..side {
        for u in 0..side {
            let px = (u as f64 + 0.5) * pw / side as f64;
            let py = (v as f64 + 0.5) * ph / side as f64;
            let offset = crate::geom::Point::new(px, py) - pattern_center;
            let scene_pt = pose.center + offset.rotate(pose.rotation).scale(pose.scale);
            patch.push(scene.sample_bilinear(scene_pt.x, scene_pt.y));
        }
    }
    patch
}

/// Correlation between the scene patch under `pose` and the pattern resized
/// to the same patch size.
pub fn ncc_statistic(scene: &GrayImage, pattern: &GrayImage, pose: &Pose) -> f64 {
    let scene_patch = sample_pose_patch(scene, pose, (pattern.width(), pattern.height()));
    let pattern_patch: Vec<f64> = pattern
        .resize_bilinear(NCC_PATCH_SIZE, NCC_PATCH_SIZE)
        .data()
        .iter()
        .map(|&b| b as f64)
        .collect();
    ncc_zero_mean(&scene_patch, &pattern_patch)
}

pub fn ncc_filter(scene: &GrayImage, pattern: &GrayImage, pose: &Pose, min_ncc: f64) -> bool {
    ncc_statistic(scene, pattern, pose) >= min_ncc
}

fn outcome(name: &str, statistic: f64, threshold: f64, accepted: bool) -> FilterOutcome {
    FilterOutcome { name: name.to_string(), statistic, threshold, accepted }
}

/// Runs the filters of the given pass in order, short-circuiting on the
/// first rejection. The report lists exactly the filters that ran.
pub fn run_cascade(
    votes: &[Vote],
    pass: Pass,
    config: &CascadeConfig,
    context: Option<&PassTwoContext<'_>>,
) -> Result<CascadeOutcome, CascadeError> {
    let ctx = match pass {
        Pass::One => None,
        Pass::Two => Some(context.ok_or(CascadeError::MissingPassTwoContext)?),
    };

    let mut filters = Vec::new();
    let mut push = |f: FilterOutcome| -> bool {
        let ok = f.accepted;
        filters.push(f);
        ok
    };

    let accepted = 'cascade: {
        if pass == Pass::One {
            let count_ok = vote_count_filter(votes, config.min_votes);
            if !push(outcome("vote_count", votes.len() as f64, config.min_votes as f64, count_ok)) {
                break 'cascade false;
            }
            let sum = adjacency_sum(votes);
            if !push(outcome("adjacency_sum", sum, config.min_adjacency_sum, sum >= config.min_adjacency_sum)) {
                break 'cascade false;
            }
        }

        let svar = scale_variance(votes);
        let s_ok = svar.is_some_and(|v| v <= config.max_scale_variance);
        if !push(outcome("scale_variance", svar.unwrap_or(f64::NAN), config.max_scale_variance, s_ok)) {
            break 'cascade false;
        }
        let rotations: Vec<f64> = votes.iter().map(|v| v.rel_rotation).collect();
        let rvar = rotation_variance(&rotations);
        let r_ok = rvar.is_some_and(|v| v <= config.max_rotation_variance);
        if !push(outcome("rotation_variance", rvar.unwrap_or(f64::NAN), config.max_rotation_variance, r_ok)) {
            break 'cascade false;
        }

        if let Some(ctx) = ctx {
            let hamming = binary_test_statistic(votes, config.binary_tests, config.rng_seed);
            let h_ok = hamming.is_some_and(|d| d <= config.max_hamming_norm);
            if !push(outcome("binary_test", hamming.unwrap_or(f64::NAN), config.max_hamming_norm, h_ok)) {
                break 'cascade false;
            }
            let ncc = ncc_statistic(ctx.scene_image, ctx.pattern_image, ctx.pose);
            if !push(outcome("ncc", ncc, config.min_ncc, ncc >= config.min_ncc)) {
                break 'cascade false;
            }
        }
        true
    };

    Ok(CascadeOutcome { accepted, filters })
}
