//! The vote image: adjacency mass rasterized onto the scene plane, plus
//! proposition detection and vote erasure.
//!
//! Cell values and the per-cell vote index are kept exactly consistent with
//! the live votes, including under erasure, so the grid's total mass always
//! equals the live adjacency sum.

use serde::{Deserialize, Serialize};

use crate::geom::{Point, Quad};
use crate::image::GrayImage;
use crate::votes::VoteSpace;

/// Adjacency-sum raster over the scene, with a vote index per cell.
#[derive(Clone, Debug)]
pub struct VoteImage {
    bin_size: u32,
    cols: usize,
    rows: usize,
    grid: Vec<f64>,
    cells: Vec<Vec<usize>>,
}

/// A candidate object center: a cell of the vote image with its smoothed
/// strength, used to order the aggregation queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposition {
    /// (col, row) of the originating cell.
    pub cell: (usize, usize),
    /// Cell center in scene pixels.
    pub position: Point,
    pub strength: f64,
}

/// Knobs for proposition detection.
#[derive(Clone, Copy, Debug)]
pub struct PropositionParams {
    pub smooth_radius: u32,
    pub t_min: f64,
    /// Chebyshev suppression radius in cells.
    pub nms_radius: u32,
    pub max_props: usize,
}

impl VoteImage {
    /// Accumulates every live vote into the cell its center falls in by floor
    /// division; centers outside the scene clamp into the border cells.
    pub fn rasterize(vs: &VoteSpace, bin_size: u32) -> VoteImage {
        assert!(bin_size >= 1, "bin_size must be >= 1");
        let (w, h) = vs.scene_dims;
        let cols = (w as usize).div_ceil(bin_size as usize);
        let rows = (h as usize).div_ceil(bin_size as usize);
        let mut vi = VoteImage {
            bin_size,
            cols,
            rows,
            grid: vec![0.0; cols * rows],
            cells: vec![Vec::new(); cols * rows],
        };
        if cols == 0 || rows == 0 {
            debug_assert_eq!(vs.live_count(), 0, "votes cannot be placed on an empty grid");
            return vi;
        }
        for (id, vote) in vs.iter_live() {
            let (col, row) = vi.cell_of(vote.cx, vote.cy);
            let idx = row * cols + col;
            vi.grid[idx] += vote.adjacency;
            vi.cells[idx].push(id);
        }
        vi
    }

    pub fn bin_size(&self) -> u32 {
        self.bin_size
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.grid[row * self.cols + col]
    }

    pub fn cell_votes(&self, col: usize, row: usize) -> &[usize] {
        &self.cells[row * self.cols + col]
    }

    /// Containing cell by floor division, clamped to the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = (x / self.bin_size as f64).floor().clamp(0.0, (self.cols - 1) as f64) as usize;
        let row = (y / self.bin_size as f64).floor().clamp(0.0, (self.rows - 1) as f64) as usize;
        (col, row)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            (col as f64 + 0.5) * self.bin_size as f64,
            (row as f64 + 0.5) * self.bin_size as f64,
        )
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.iter().sum()
    }

    /// Mass-preserving box blur: each cell's value spreads uniformly over its
    /// clipped window, so border cells renormalize instead of leaking mass.
    /// Radius 0 is the identity. The raster itself is untouched; smoothing is
    /// only for proposition detection and export.
    pub fn smoothed(&self, radius: u32) -> Vec<f64> {
        if radius == 0 || self.grid.is_empty() {
            return self.grid.clone();
        }
        let r = radius as isize;
        let (cols, rows) = (self.cols as isize, self.rows as isize);
        // Per-source share: value divided by its clipped window size.
        let mut share = vec![0.0; self.grid.len()];
        for row in 0..rows {
            let span_y = (row + r).min(rows - 1) - (row - r).max(0) + 1;
            for col in 0..cols {
                let span_x = (col + r).min(cols - 1) - (col - r).max(0) + 1;
                let idx = (row * cols + col) as usize;
                share[idx] = self.grid[idx] / (span_x * span_y) as f64;
            }
        }
        let mut out = vec![0.0; self.grid.len()];
        for row in 0..rows {
            for col in 0..cols {
                let mut sum = 0.0;
                for ny in (row - r).max(0)..=(row + r).min(rows - 1) {
                    for nx in (col - r).max(0)..=(col + r).min(cols - 1) {
                        sum += share[(ny * cols + nx) as usize];
                    }
                }
                out[(row * cols + col) as usize] = sum;
            }
        }
        out
    }

    /// The smoothed value of one cell recomputed from the live grid — the
    /// cell's current proposition strength. Reads only the (2r+1)² window,
    /// so the aggregation loop can cheaply skip propositions whose region
    /// was already erased.
    pub fn smoothed_value_at(&self, col: usize, row: usize, radius: u32) -> f64 {
        if radius == 0 {
            return self.value(col, row);
        }
        let r = radius as isize;
        let (cols, rows) = (self.cols as isize, self.rows as isize);
        let (col, row) = (col as isize, row as isize);
        let mut sum = 0.0;
        for ny in (row - r).max(0)..=(row + r).min(rows - 1) {
            let span_y = (ny + r).min(rows - 1) - (ny - r).max(0) + 1;
            for nx in (col - r).max(0)..=(col + r).min(cols - 1) {
                let span_x = (nx + r).min(cols - 1) - (nx - r).max(0) + 1;
                sum += self.grid[(ny * cols + nx) as usize] / (span_x * span_y) as f64;
            }
        }
        sum
    }

    fn remove_from_cell(&mut self, idx: usize, dead: &[usize], vs: &VoteSpace) {
        self.cells[idx].retain(|id| !dead.contains(id));
        // Recompute instead of subtracting: keeps the cell exactly equal to
        // the sum of its remaining votes.
        self.grid[idx] = self.cells[idx].iter().map(|&id| vs.vote(id).adjacency).sum();
    }
}

/// Greedy non-maximum suppression over the smoothed grid: cells above
/// `t_min`, visited in descending value (ties to lower row, then column),
/// each selection suppressing its Chebyshev neighborhood. Result is sorted by
/// strength descending and capped at `max_props`.
pub fn find_propositions(vi: &VoteImage, params: &PropositionParams) -> Vec<Proposition> {
    let smoothed = vi.smoothed(params.smooth_radius);
    let (cols, rows) = (vi.cols(), vi.rows());
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let v = smoothed[row * cols + col];
            if v > params.t_min {
                candidates.push((v, row, col));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let r = params.nms_radius as usize;
    let mut suppressed = vec![false; cols * rows];
    let mut props = Vec::new();
    for (value, row, col) in candidates {
        if props.len() >= params.max_props {
            break;
        }
        if suppressed[row * cols + col] {
            continue;
        }
        props.push(Proposition {
            cell: (col, row),
            position: vi.cell_center(col, row),
            strength: value,
        });
        for ny in row.saturating_sub(r)..=(row + r).min(rows - 1) {
            for nx in col.saturating_sub(r)..=(col + r).min(cols - 1) {
                suppressed[ny * cols + nx] = true;
            }
        }
    }
    props
}

/// Removes every live vote whose center lies inside the quad (boundary
/// inclusive) from both the vote space and the vote image. Returns the number
/// of votes removed.
pub fn erase_region(vs: &mut VoteSpace, vi: &mut VoteImage, quad: &Quad) -> usize {
    if vi.cols == 0 || vi.rows == 0 {
        return 0;
    }
    let (min, max) = quad.bbox();
    let (c0, r0) = vi.cell_of(min.x, min.y);
    let (c1, r1) = vi.cell_of(max.x, max.y);
    let mut removed = 0;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let idx = row * vi.cols + col;
            let dead: Vec<usize> = vi.cells[idx]
                .iter()
                .copied()
                .filter(|&id| quad.contains(vs.vote(id).center()))
                .collect();
            if dead.is_empty() {
                continue;
            }
            for &id in &dead {
                vs.kill(id);
            }
            removed += dead.len();
            vi.remove_from_cell(idx, &dead, vs);
        }
    }
    removed
}

/// Min-max normalized smoothed grid as an 8-bit image, one pixel per cell.
/// A flat grid renders black. Output bytes are deterministic.
pub fn render_gray(vi: &VoteImage, smooth_radius: u32) -> GrayImage {
    let smoothed = vi.smoothed(smooth_radius);
    let min = smoothed.iter().copied().fold(f64::INFINITY, f64::min);
    let max = smoothed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = if smoothed.is_empty() || max <= min {
        vec![0u8; smoothed.len()]
    } else {
        smoothed
            .iter()
            .map(|v| ((v - min) / (max - min) * 255.0).round() as u8)
            .collect()
    };
    GrayImage::from_raw(vi.cols as u32, vi.rows as u32, data)
}
