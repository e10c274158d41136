//! Two-pass iterative vote aggregation.
//!
//! Propositions are visited in strength order. Pass 1 gathers votes in a
//! local disc, unique-filters them and runs cascade filters (1)-(4); an
//! accepted group yields a pose estimate whose shrunken quad bounds the
//! pass-2 flood-fill gather. Pass 2 unique-filters again and runs filters
//! (3)-(6). Acceptance recomputes the pose from the pass-2 votes, emits the
//! occurrence and erases its quad from the vote space and image; any
//! rejection leaves the vote data untouched.

use std::collections::VecDeque;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::config::RunConfig;
use crate::filters::{run_cascade, CascadeOutcome, Pass, PassTwoContext};
use crate::geom::{circular_mean, Point, Quad};
use crate::image::GrayImage;
use crate::vote_image::{erase_region, Proposition, VoteImage};
use crate::votes::{PatternMeta, Vote, VoteSpace};

/// A similarity transform placing the pattern rectangle in the scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: Point,
    /// Scale relative to the pattern.
    pub scale: f64,
    /// Radians in `[0, 2π)`.
    pub rotation: f64,
    /// Pattern rectangle corners under the transform, starting at the
    /// pattern's top-left corner.
    pub quad: Quad,
}

impl Pose {
    /// Builds the pose whose quad is the pattern rectangle mapped by the
    /// given similarity transform about `center`.
    pub fn from_similarity(center: Point, scale: f64, rotation: f64, meta: &PatternMeta) -> Pose {
        let hw = meta.width as f64 / 2.0;
        let hh = meta.height as f64 / 2.0;
        let corners = [
            Point::new(-hw, -hh),
            Point::new(hw, -hh),
            Point::new(hw, hh),
            Point::new(-hw, hh),
        ];
        let quad = Quad(corners.map(|c| center + c.rotate(rotation).scale(scale)));
        Pose { center, scale, rotation, quad }
    }
}

/// Per-pass filter reports for an accepted occurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub pass1: CascadeOutcome,
    pub pass2: CascadeOutcome,
}

/// One accepted detection.
#[derive(Clone, Debug, PartialEq)]
pub struct Occurrence {
    pub pattern_id: String,
    pub pose: Pose,
    /// The final (pass-2, unique-filtered) vote group.
    pub votes: Vec<Vote>,
    pub vote_count: usize,
    pub adjacency_sum: f64,
    pub filter_report: CascadeReport,
}

// Serialized without the raw vote group: pattern_id, center, scale,
// rotation_deg, quad, vote_count, adjacency_sum, filter_report.
impl Serialize for Occurrence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Occurrence", 8)?;
        s.serialize_field("pattern_id", &self.pattern_id)?;
        s.serialize_field("center", &[self.pose.center.x, self.pose.center.y])?;
        s.serialize_field("scale", &self.pose.scale)?;
        s.serialize_field("rotation_deg", &self.pose.rotation.to_degrees())?;
        let quad: Vec<[f64; 2]> = self.pose.quad.corners().iter().map(|c| [c.x, c.y]).collect();
        s.serialize_field("quad", &quad)?;
        s.serialize_field("vote_count", &self.vote_count)?;
        s.serialize_field("adjacency_sum", &self.adjacency_sum)?;
        s.serialize_field("filter_report", &self.filter_report)?;
        s.end()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("cannot estimate a pose from an empty vote group")]
    EmptyVoteGroup,
}

/// All live votes within `radius` (inclusive) of `center`.
pub fn gather_local(vs: &VoteSpace, center: Point, radius: f64) -> Vec<Vote> {
    vs.iter_live()
        .filter(|(_, v)| v.center().distance(center) <= radius)
        .map(|(_, v)| *v)
        .collect()
}

/// Keeps one vote per pattern feature: the highest adjacency, ties to the
/// lower scene feature id. Output is ordered by adjacency descending (then
/// pattern and scene ids for determinism). Idempotent.
pub fn unique_filter(votes: &[Vote]) -> Vec<Vote> {
    let mut best: Vec<&Vote> = Vec::new();
    'outer: for vote in votes {
        for kept in best.iter_mut() {
            if kept.pattern_feature_id == vote.pattern_feature_id {
                let replace = vote.adjacency > kept.adjacency
                    || (vote.adjacency == kept.adjacency && vote.scene_feature_id < kept.scene_feature_id);
                if replace {
                    *kept = vote;
                }
                continue 'outer;
            }
        }
        best.push(vote);
    }
    let mut out: Vec<Vote> = best.into_iter().copied().collect();
    out.sort_by(|a, b| {
        b.adjacency
            .total_cmp(&a.adjacency)
            .then(a.pattern_feature_id.cmp(&b.pattern_feature_id))
            .then(a.scene_feature_id.cmp(&b.scene_feature_id))
    });
    out
}

/// Adjacency-weighted mean center, median relative scale, circular-mean
/// rotation, and the pattern rectangle under that transform.
pub fn estimate_pose(votes: &[Vote], meta: &PatternMeta) -> Result<Pose, PoseError> {
    if votes.is_empty() {
        return Err(PoseError::EmptyVoteGroup);
    }
    let weight_sum: f64 = votes.iter().map(|v| v.adjacency).sum();
    let center = if weight_sum > 0.0 {
        let x = votes.iter().map(|v| v.cx * v.adjacency).sum::<f64>() / weight_sum;
        let y = votes.iter().map(|v| v.cy * v.adjacency).sum::<f64>() / weight_sum;
        Point::new(x, y)
    } else {
        // All-zero weights (boundary-distance groups): plain mean.
        let n = votes.len() as f64;
        Point::new(
            votes.iter().map(|v| v.cx).sum::<f64>() / n,
            votes.iter().map(|v| v.cy).sum::<f64>() / n,
        )
    };

    let mut scales: Vec<f64> = votes.iter().map(|v| v.rel_scale).collect();
    scales.sort_by(f64::total_cmp);
    let mid = scales.len() / 2;
    let scale = if scales.len() % 2 == 1 {
        scales[mid]
    } else {
        (scales[mid - 1] + scales[mid]) / 2.0
    };

    let rotations: Vec<f64> = votes.iter().map(|v| v.rel_rotation).collect();
    let rotation = circular_mean(&rotations);

    Ok(Pose::from_similarity(center, scale, rotation, meta))
}

/// Flood fill on the raw vote-image grid from the proposition's cell,
/// 8-connected, through cells with positive value whose centers lie inside
/// the bound quad shrunk about the bound center. Returns the votes indexed
/// by the filled cells.
pub fn flood_gather(
    vs: &VoteSpace,
    vi: &VoteImage,
    prop: &Proposition,
    bound: &Pose,
    shrink: f64,
) -> Vec<Vote> {
    debug_assert!(shrink > 0.0 && shrink <= 1.0);
    let mask_quad = bound.quad.scaled_about(bound.center, shrink);
    let (cols, rows) = (vi.cols(), vi.rows());
    if cols == 0 || rows == 0 {
        return Vec::new();
    }

    let passes = |col: usize, row: usize| -> bool {
        vi.value(col, row) > 0.0 && mask_quad.contains(vi.cell_center(col, row))
    };

    let (seed_col, seed_row) = prop.cell;
    if !passes(seed_col, seed_row) {
        return Vec::new();
    }

    let mut visited = vec![false; cols * rows];
    let mut queue = VecDeque::new();
    visited[seed_row * cols + seed_col] = true;
    queue.push_back((seed_col, seed_row));
    let mut votes = Vec::new();
    while let Some((col, row)) = queue.pop_front() {
        votes.extend(vi.cell_votes(col, row).iter().map(|&id| *vs.vote(id)));
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = col as i64 + dx;
                let ny = row as i64 + dy;
                if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if visited[ny * cols + nx] || !passes(nx, ny) {
                    continue;
                }
                visited[ny * cols + nx] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    votes
}

/// Read-only inputs of one detection process besides the vote data.
#[derive(Clone, Copy)]
pub struct DetectInputs<'a> {
    pub meta: &'a PatternMeta,
    pub scene_image: &'a GrayImage,
    pub pattern_image: &'a GrayImage,
}

/// The flood-fill seed for a proposition: the heaviest raw cell within the
/// proposition's smoothing window. The smoothed maximum of a small blob
/// often sits on an empty raw cell between the heavy ones, where a literal
/// flood fill would come up empty.
fn flood_seed(vi: &VoteImage, prop: &Proposition, smooth_radius: u32) -> Proposition {
    let (col, row) = prop.cell;
    let r = smooth_radius as usize;
    let mut best = (vi.value(col, row), row, col);
    for ny in row.saturating_sub(r)..=(row + r).min(vi.rows() - 1) {
        for nx in col.saturating_sub(r)..=(col + r).min(vi.cols() - 1) {
            let v = vi.value(nx, ny);
            if v > best.0 {
                best = (v, ny, nx);
            }
        }
    }
    let (_, best_row, best_col) = best;
    Proposition {
        cell: (best_col, best_row),
        position: vi.cell_center(best_col, best_row),
        strength: prop.strength,
    }
}

/// Runs the full aggregation loop over a sorted proposition queue. Consumes
/// votes from the space/image pair as occurrences are accepted; rejected
/// propositions erase nothing. Propositions whose live strength (smoothed
/// cell value recomputed from the current grid) has dropped below the
/// detection threshold — their region was erased by an earlier acceptance —
/// are skipped.
pub fn detect(
    vs: &mut VoteSpace,
    vi: &mut VoteImage,
    props: &[Proposition],
    inputs: &DetectInputs<'_>,
    config: &RunConfig,
) -> Vec<Occurrence> {
    let radius = config.gather_radius_factor * inputs.meta.diagonal();
    let mut occurrences = Vec::new();
    for prop in props {
        let (col, row) = prop.cell;
        if vi.smoothed_value_at(col, row, config.smooth_radius) < config.t_min {
            continue;
        }

        let group1 = unique_filter(&gather_local(vs, prop.position, radius));
        let pass1 = run_cascade(&group1, Pass::One, &config.cascade, None)
            .expect("pass 1 needs no context");
        if !pass1.accepted {
            continue;
        }
        let bound = estimate_pose(&group1, inputs.meta).expect("pass 1 accepted a nonempty group");

        let seed = flood_seed(vi, prop, config.smooth_radius);
        let group2 = unique_filter(&flood_gather(vs, vi, &seed, &bound, config.flood_shrink));
        let ctx = PassTwoContext {
            pose: &bound,
            scene_image: inputs.scene_image,
            pattern_image: inputs.pattern_image,
        };
        let pass2 = run_cascade(&group2, Pass::Two, &config.cascade, Some(&ctx))
            .expect("pass 2 context supplied");
        if !pass2.accepted {
            continue;
        }

        let pose = estimate_pose(&group2, inputs.meta).expect("pass 2 accepted a nonempty group");
        erase_region(vs, vi, &pose.quad);
        let adjacency_sum = group2.iter().map(|v| v.adjacency).sum();
        occurrences.push(Occurrence {
            pattern_id: vs.pattern_id.clone(),
            pose,
            vote_count: group2.len(),
            adjacency_sum,
            votes: group2,
            filter_report: CascadeReport { pass1, pass2 },
        });
    }
    occurrences
}
