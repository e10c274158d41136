//! Synthetic benchmark harness: deterministic generation of patterns and
//! scenes with known ground truth, plus the detection metrics.
//!
//! Patterns are textured rasters with randomly placed keypoints carrying
//! unit-norm descriptors. A scene plants instances as coherent keypoint
//! groups (the pattern keypoints pushed through the instance's similarity
//! transform, descriptors perturbed by a small metric distance) over a flat
//! background, renders the warped pattern patches so the correlation filter
//! is exercised end to end, and scatters noise keypoints with distant
//! descriptors. Everything derives from the suite seed, so outputs are
//! byte-identical across runs.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::Occurrence;
use crate::config::RunConfig;
use crate::features::{FeatureSet, Keypoint};
use crate::geom::{circular_diff_deg, normalize_angle, Point};
use crate::image::GrayImage;
use crate::pipeline::{run_detection, PipelineError};
use crate::votes::PatternMeta;

/// Inlier descriptor distance to its source pattern feature.
const INLIER_DIST: (f64, f64) = (0.05, 0.25);
/// Noise descriptor distance to a random pattern feature; spans the
/// rejection threshold so a share of the noise survives into votes.
const NOISE_DIST: (f64, f64) = (0.3, 1.3);
/// Bridge descriptor distance: survives the threshold but always weaker
/// than any inlier.
const BRIDGE_DIST: (f64, f64) = (0.35, 0.45);
const POSITION_JITTER: f64 = 1.0;
const SCALE_JITTER: f64 = 0.015;
const ROTATION_JITTER_DEG: f64 = 1.0;
const HUE_JITTER_DEG: f64 = 15.0;
const PATTERN_KP_MARGIN: f64 = 16.0;
const KEYPOINT_SCALE: (f64, f64) = (2.0, 6.0);
const BACKGROUND_LUM: u8 = 128;

/// A synthetic pattern to generate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternSpec {
    pub pattern_id: String,
    pub width: u32,
    pub height: u32,
    pub keypoints: usize,
}

/// One instance planted into a scene.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub pattern_id: String,
    pub center: [f64; 2],
    pub scale: f64,
    pub rotation_deg: f64,
    pub inliers: usize,
    /// Render the warped pattern patch into the scene raster. Disabling it
    /// starves the correlation filter.
    #[serde(default = "default_true")]
    pub render_patch: bool,
}

fn default_true() -> bool {
    true
}

/// A chain of weak planted votes connecting two instances' vote blobs, used
/// to exercise the flood-fill bound between touching blobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub from: usize,
    pub to: usize,
    pub step_px: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<InstanceSpec>,
    #[serde(default)]
    pub noise_keypoints: usize,
    #[serde(default)]
    pub bridges: Vec<BridgeSpec>,
}

/// A whole experiment: patterns, scenes and the master seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSuite {
    pub seed: u64,
    pub descriptor_len: usize,
    pub patterns: Vec<PatternSpec>,
    pub scenes: Vec<SceneSpec>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scene `{scene}`: instance {index} center ({x}, {y}) lies outside the scene bounds")]
    InstanceOutOfBounds { scene: String, index: usize, x: f64, y: f64 },
    #[error("scene `{scene}`: instance {index} must plant at least one inlier")]
    NoInliers { scene: String, index: usize },
    #[error("scene `{scene}`: unknown pattern `{pattern_id}`")]
    UnknownPattern { scene: String, pattern_id: String },
    #[error("scene `{scene}`: bridge endpoint {index} out of range")]
    BadBridge { scene: String, index: usize },
    #[error("suite defines no detection processes")]
    NoProcesses,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Clone, Debug)]
pub struct GeneratedPattern {
    pub features: FeatureSet,
    pub image: GrayImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub pattern_id: String,
    pub center: Point,
    pub scale: f64,
    /// Radians in `[0, 2π)`.
    pub rotation: f64,
    pub pattern_diag: f64,
}

#[derive(Clone, Debug)]
pub struct GeneratedScene {
    pub features: FeatureSet,
    pub image: GrayImage,
    pub truth: Vec<GroundTruthInstance>,
}

#[derive(Clone, Debug)]
pub struct GeneratedSuite {
    pub patterns: Vec<GeneratedPattern>,
    pub scenes: Vec<GeneratedScene>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_shl(32) | index))
}

fn random_unit(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Adds a perturbation of exact L2 norm `magnitude` in a random direction.
fn perturbed(descriptor: &[f64], magnitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dir = random_unit(rng, descriptor.len());
    descriptor
        .iter()
        .zip(&dir)
        .map(|(d, u)| d + magnitude * u)
        .collect()
}

/// Blurred random texture stretched to the full 8-bit range.
fn textured_image(width: u32, height: u32, blur_radius: u32, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (width as usize, height as usize);
    let mut values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..256.0)).collect();
    for r in [blur_radius, blur_radius] {
        if r == 0 {
            continue;
        }
        values = box_blur_rows(&values, w, h, r as usize);
        values = transpose(&values, w, h);
        values = box_blur_rows(&values, h, w, r as usize);
        values = transpose(&values, h, w);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    let data = values
        .iter()
        .map(|&v| ((v - min) / span * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(width, height, data)
}

fn box_blur_rows(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for row in 0..h {
        let line = &values[row * w..(row + 1) * w];
        for col in 0..w {
            let lo = col.saturating_sub(r);
            let hi = (col + r).min(w - 1);
            let sum: f64 = line[lo..=hi].iter().sum();
            out[row * w + col] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

fn transpose(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for row in 0..h {
        for col in 0..w {
            out[col * h + row] = values[row * w + col];
        }
    }
    out
}

/// Deterministically generates one pattern: texture, keypoints, descriptors.
pub fn generate_pattern(spec: &PatternSpec, descriptor_len: usize, seed: u64) -> GeneratedPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = textured_image(spec.width, spec.height, 8, &mut rng);
    let mut features = FeatureSet::new(spec.pattern_id.clone(), spec.width, spec.height);
    for _ in 0..spec.keypoints {
        let x = rng.random_range(PATTERN_KP_MARGIN..spec.width as f64 - PATTERN_KP_MARGIN);
        let y = rng.random_range(PATTERN_KP_MARGIN..spec.height as f64 - PATTERN_KP_MARGIN);
        let luminance = image.sample_bilinear(x, y).round().clamp(0.0, 255.0) as u8;
        features.keypoints.push(Keypoint {
            x,
            y,
            scale: rng.random_range(KEYPOINT_SCALE.0..KEYPOINT_SCALE.1),
            orientation: rng.random_range(0.0..TAU),
            luminance,
            hue: Some(rng.random_range(0.0..360.0)),
            descriptor: random_unit(&mut rng, descriptor_len),
        });
    }
    GeneratedPattern { features, image }
}

struct InstancePlacement<'a> {
    spec: &'a InstanceSpec,
    pattern_index: usize,
    rotation: f64,
    chosen_inliers: Vec<usize>,
}

/// Maps a pattern point into the scene under the instance transform.
fn instance_map(center: Point, scale: f64, rotation: f64, pattern_center: Point, p: Point) -> Point {
    center + (p - pattern_center).rotate(rotation).scale(scale)
}

/// Deterministically generates one scene against the given patterns.
pub fn generate_scene(
    spec: &SceneSpec,
    patterns: &[GeneratedPattern],
    seed: u64,
) -> Result<GeneratedScene, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image = GrayImage::filled(spec.width, spec.height, BACKGROUND_LUM);
    let mut features = FeatureSet::new(spec.scene_id.clone(), spec.width, spec.height);
    let mut truth = Vec::new();

    let pattern_index = |id: &str| -> Result<usize, HarnessError> {
        patterns
            .iter()
            .position(|p| p.features.image_id == id)
            .ok_or_else(|| HarnessError::UnknownPattern { scene: spec.scene_id.clone(), pattern_id: id.to_string() })
    };

    // Validate and place instances, rendering their patches first so keypoint
    // luminances can sample the finished raster. Which pattern features are
    // detectable is a property of the pattern, so all instances of one
    // pattern in a scene draw their inliers from the same shuffled feature
    // order.
    let mut feature_orders: Vec<Option<Vec<usize>>> = vec![None; patterns.len()];
    let mut placements: Vec<InstancePlacement<'_>> = Vec::new();
    for (index, inst) in spec.instances.iter().enumerate() {
        let [cx, cy] = inst.center;
        if cx < 0.0 || cy < 0.0 || cx > spec.width as f64 || cy > spec.height as f64 {
            return Err(HarnessError::InstanceOutOfBounds { scene: spec.scene_id.clone(), index, x: cx, y: cy });
        }
        if inst.inliers == 0 {
            return Err(HarnessError::NoInliers { scene: spec.scene_id.clone(), index });
        }
        let pat_idx = pattern_index(&inst.pattern_id)?;
        let pattern = &patterns[pat_idx];
        let rotation = normalize_angle(inst.rotation_deg.to_radians());
        if inst.render_patch {
            render_patch(&mut image, &pattern.image, Point::new(cx, cy), inst.scale, rotation);
        }
        let available = pattern.features.keypoints.len();
        let order = feature_orders[pat_idx]
            .get_or_insert_with(|| shuffled_indices(&mut rng, available))
            .clone();
        let chosen = order[..inst.inliers.min(available)].to_vec();
        placements.push(InstancePlacement { spec: inst, pattern_index: pat_idx, rotation, chosen_inliers: chosen });
        let meta = PatternMeta::from_feature_set(&pattern.features);
        truth.push(GroundTruthInstance {
            pattern_id: inst.pattern_id.clone(),
            center: Point::new(cx, cy),
            scale: inst.scale,
            rotation,
            pattern_diag: meta.diagonal(),
        });
    }

    // Inlier keypoints: pattern keypoints through the instance transform with
    // small pose jitter and descriptors a short metric distance from their
    // sources. Luminance re-samples the rendered scene.
    for placement in &placements {
        let inst = placement.spec;
        let pattern = &patterns[placement.pattern_index];
        let pattern_center = PatternMeta::from_feature_set(&pattern.features).center();
        let center = Point::new(inst.center[0], inst.center[1]);
        for &kp_index in &placement.chosen_inliers {
            let kp = &pattern.features.keypoints[kp_index];
            let mapped = instance_map(center, inst.scale, placement.rotation, pattern_center, Point::new(kp.x, kp.y));
            let x = mapped.x + rng.random_range(-POSITION_JITTER..POSITION_JITTER);
            let y = mapped.y + rng.random_range(-POSITION_JITTER..POSITION_JITTER);
            let scale = kp.scale * inst.scale * (1.0 + rng.random_range(-SCALE_JITTER..SCALE_JITTER));
            let orientation = normalize_angle(
                kp.orientation
                    + placement.rotation
                    + rng.random_range(-ROTATION_JITTER_DEG..ROTATION_JITTER_DEG).to_radians(),
            );
            let luminance = if inst.render_patch {
                image.sample_bilinear(x, y).round().clamp(0.0, 255.0) as u8
            } else {
                kp.luminance
            };
            let hue = kp
                .hue
                .map(|h| (h + rng.random_range(-HUE_JITTER_DEG..HUE_JITTER_DEG)).rem_euclid(360.0));
            let magnitude = rng.random_range(INLIER_DIST.0..INLIER_DIST.1);
            features.keypoints.push(Keypoint {
                x,
                y,
                scale,
                orientation,
                luminance,
                hue,
                descriptor: perturbed(&kp.descriptor, magnitude, &mut rng),
            });
        }
    }

    // Bridge keypoints: weak phantom inliers whose votes land along the
    // segment between two instance centers, reusing the `from` instance's
    // inlier features so unique filtering collapses them against the real
    // votes. Luminance copies the pattern side to keep the chain neutral for
    // the binary test.
    for (bridge_index, bridge) in spec.bridges.iter().enumerate() {
        let (Some(a), Some(b)) = (placements.get(bridge.from), placements.get(bridge.to)) else {
            return Err(HarnessError::BadBridge { scene: spec.scene_id.clone(), index: bridge_index });
        };
        let from = Point::new(a.spec.center[0], a.spec.center[1]);
        let to = Point::new(b.spec.center[0], b.spec.center[1]);
        let distance = from.distance(to);
        let direction = (to - from).scale(1.0 / distance.max(1e-12));
        let pattern = &patterns[a.pattern_index];
        let pattern_center = PatternMeta::from_feature_set(&pattern.features).center();
        // Midpoint spacing keeps chain points away from cell boundaries,
        // where one ulp of rounding in the vote projection could drop a
        // vote into the neighboring cell and open a gap.
        let mut t = bridge.step_px * 0.5;
        let mut i = 0usize;
        while t < distance {
            let target = from + direction.scale(t);
            let source_index = a.chosen_inliers[i % a.chosen_inliers.len()];
            let kp = &pattern.features.keypoints[source_index];
            // Position chosen so the vote projects exactly onto the chain point.
            let pos = instance_map(target, a.spec.scale, a.rotation, pattern_center, Point::new(kp.x, kp.y));
            let magnitude = rng.random_range(BRIDGE_DIST.0..BRIDGE_DIST.1);
            // The chain must be gap-free: redraw until the perturbed
            // descriptor still nearest-neighbors its source, otherwise the
            // vote lands off the chain.
            let descriptor = loop {
                let candidate = perturbed(&kp.descriptor, magnitude, &mut rng);
                if nearest_pattern_feature(&pattern.features, &candidate) == source_index {
                    break candidate;
                }
            };
            features.keypoints.push(Keypoint {
                x: pos.x,
                y: pos.y,
                scale: kp.scale * a.spec.scale,
                orientation: normalize_angle(kp.orientation + a.rotation),
                luminance: kp.luminance,
                hue: kp.hue,
                descriptor,
            });
            t += bridge.step_px;
            i += 1;
        }
    }

    // Noise keypoints: uniform positions, random pose, descriptors at a
    // threshold-straddling distance from a random pattern feature.
    if spec.noise_keypoints > 0 && !patterns.is_empty() {
        for _ in 0..spec.noise_keypoints {
            let x = rng.random_range(0.0..spec.width as f64);
            let y = rng.random_range(0.0..spec.height as f64);
            let source_pattern = &patterns[rng.random_range(0..patterns.len())];
            let source_kp = &source_pattern.features.keypoints
                [rng.random_range(0..source_pattern.features.keypoints.len())];
            let magnitude = rng.random_range(NOISE_DIST.0..NOISE_DIST.1);
            let luminance = image.sample_bilinear(x, y).round().clamp(0.0, 255.0) as u8;
            features.keypoints.push(Keypoint {
                x,
                y,
                scale: rng.random_range(KEYPOINT_SCALE.0..KEYPOINT_SCALE.1),
                orientation: rng.random_range(0.0..TAU),
                luminance,
                hue: None,
                descriptor: perturbed(&source_kp.descriptor, magnitude, &mut rng),
            });
        }
    }

    Ok(GeneratedScene { features, image, truth })
}

fn nearest_pattern_feature(pattern: &FeatureSet, descriptor: &[f64]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (index, kp) in pattern.keypoints.iter().enumerate() {
        let d: f64 = kp
            .descriptor
            .iter()
            .zip(descriptor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_dist {
            best_dist = d;
            best = index;
        }
    }
    best
}

fn shuffled_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..n.saturating_sub(1) {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    indices
}

/// Inverse-map render of the pattern into the scene under a similarity
/// transform; only pixels whose preimage falls inside the pattern change.
fn render_patch(scene: &mut GrayImage, pattern: &GrayImage, center: Point, scale: f64, rotation: f64) {
    let (pw, ph) = (pattern.width() as f64, pattern.height() as f64);
    let pattern_center = Point::new(pw / 2.0, ph / 2.0);
    let corners = [
        Point::new(0.0, 0.0),
        Point::new(pw, 0.0),
        Point::new(pw, ph),
        Point::new(0.0, ph),
    ]
    .map(|c| instance_map(center, scale, rotation, pattern_center, c));
    let min_x = corners.iter().map(|c| c.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let min_y = corners.iter().map(|c| c.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_x = (corners.iter().map(|c| c.x).fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
        .clamp(0, scene.width() as i64) as u32;
    let max_y = (corners.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
        .clamp(0, scene.height() as i64) as u32;
    let inv_scale = 1.0 / scale;
    for y in min_y..max_y {
        for x in min_x..max_x {
            let scene_pt = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            let p = pattern_center + (scene_pt - center).rotate(-rotation).scale(inv_scale);
            if p.x >= 0.0 && p.y >= 0.0 && p.x <= pw && p.y <= ph {
                let v = pattern.sample_bilinear(p.x, p.y).round().clamp(0.0, 255.0) as u8;
                scene.set(x, y, v);
            }
        }
    }
}

/// Generates every pattern and scene of a suite, deterministically under the
/// suite seed.
pub fn generate(suite: &EvalSuite) -> Result<GeneratedSuite, HarnessError> {
    let patterns: Vec<GeneratedPattern> = suite
        .patterns
        .iter()
        .enumerate()
        .map(|(i, spec)| generate_pattern(spec, suite.descriptor_len, derive_seed(suite.seed, 1, i as u64)))
        .collect();
    let scenes = suite
        .scenes
        .iter()
        .enumerate()
        .map(|(i, spec)| generate_scene(spec, &patterns, derive_seed(suite.seed, 2, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GeneratedSuite { patterns, scenes })
}

/// One (scene, pattern) detection run together with the ground truth
/// instances of that pattern in that scene.
#[derive(Clone, Debug)]
pub struct DetectionProcess {
    pub scene_id: String,
    pub pattern_id: String,
    pub occurrences: Vec<Occurrence>,
    pub truths: Vec<GroundTruthInstance>,
}

/// Runs one (scene, pattern) process out of a generated suite.
pub fn run_process(
    generated: &GeneratedSuite,
    scene_index: usize,
    pattern_index: usize,
    config: &RunConfig,
) -> Result<DetectionProcess, HarnessError> {
    let scene = &generated.scenes[scene_index];
    let pattern = &generated.patterns[pattern_index];
    let occurrences = run_detection(
        &pattern.features,
        &pattern.image,
        &scene.features,
        &scene.image,
        config,
    )?;
    let truths = scene
        .truth
        .iter()
        .filter(|t| t.pattern_id == pattern.features.image_id)
        .cloned()
        .collect();
    Ok(DetectionProcess {
        scene_id: scene.features.image_id.clone(),
        pattern_id: pattern.features.image_id.clone(),
        occurrences,
        truths,
    })
}

/// Runs the full cross product of scenes and patterns, like the reference
/// experiment where every photo is tested against every pattern.
pub fn run_suite(generated: &GeneratedSuite, config: &RunConfig) -> Result<Vec<DetectionProcess>, HarnessError> {
    if generated.scenes.is_empty() || generated.patterns.is_empty() {
        return Err(HarnessError::NoProcesses);
    }
    let mut processes = Vec::new();
    for scene_index in 0..generated.scenes.len() {
        for pattern_index in 0..generated.patterns.len() {
            processes.push(run_process(generated, scene_index, pattern_index, config)?);
        }
    }
    Ok(processes)
}

/// Pose-matching tolerances for scoring a detection against ground truth.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchCriteria {
    /// Match radius as a fraction of the instance's scaled pattern diagonal.
    pub radius_diag_frac: f64,
    /// Scale ratio tolerance (×/÷).
    pub scale_tol: f64,
    pub rot_tol_deg: f64,
}

impl Default for MatchCriteria {
    fn default() -> Self {
        Self { radius_diag_frac: 0.25, scale_tol: 1.3, rot_tol_deg: 20.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessOutcome {
    pub scene_id: String,
    pub pattern_id: String,
    pub total_instances: usize,
    /// Occurrences that claimed a ground-truth instance.
    pub true_detections: usize,
    pub false_detections: usize,
}

/// The detection metrics over a batch of processes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalResult {
    pub processes: Vec<ProcessOutcome>,
    /// Matched instances over all planted instances.
    pub detection_rate: f64,
    /// Share of processes with at least one false detection.
    pub false_detection_chance: f64,
    /// Mean false detections over the processes that had any.
    pub avg_false_detections: f64,
}

impl EvalResult {
    /// Plain-text summary in the layout of the reference result tables.
    pub fn summary_table(&self) -> String {
        format!(
            "| Detection Rate | False Detection Chance |\n\
             | {:>13.1}% | {:>21.2}% |\n\
             \n\
             | Average Number of False Detections |\n\
             | {:>34.2} |\n\
             \n\
             processes: {}\n",
            self.detection_rate * 100.0,
            self.false_detection_chance * 100.0,
            self.avg_false_detections,
            self.processes.len(),
        )
    }
}

/// Scores occurrences against ground truth. Within a process, occurrences
/// claim instances greedily in adjacency-sum order (descending); an
/// occurrence is true iff an unclaimed instance of the same pattern lies
/// within the match radius and the scale/rotation tolerances. Instances can
/// be claimed at most once.
pub fn evaluate(processes: &[DetectionProcess], criteria: &MatchCriteria) -> EvalResult {
    let mut outcomes = Vec::with_capacity(processes.len());
    let mut total_instances = 0usize;
    let mut total_matched = 0usize;
    let mut false_processes = 0usize;
    let mut total_false = 0usize;

    for process in processes {
        let mut order: Vec<usize> = (0..process.occurrences.len()).collect();
        order.sort_by(|&a, &b| {
            let oa = &process.occurrences[a];
            let ob = &process.occurrences[b];
            ob.adjacency_sum
                .total_cmp(&oa.adjacency_sum)
                .then(oa.pattern_id.cmp(&ob.pattern_id))
                .then(oa.pose.center.x.total_cmp(&ob.pose.center.x))
                .then(oa.pose.center.y.total_cmp(&ob.pose.center.y))
        });

        let mut claimed = vec![false; process.truths.len()];
        let mut true_detections = 0usize;
        let mut false_detections = 0usize;
        for idx in order {
            let occurrence = &process.occurrences[idx];
            let mut best: Option<(f64, usize)> = None;
            for (t_idx, truth) in process.truths.iter().enumerate() {
                if claimed[t_idx] || truth.pattern_id != occurrence.pattern_id {
                    continue;
                }
                let dist = occurrence.pose.center.distance(truth.center);
                if dist > criteria.radius_diag_frac * truth.pattern_diag * truth.scale {
                    continue;
                }
                let ratio = occurrence.pose.scale / truth.scale;
                if ratio > criteria.scale_tol || ratio < 1.0 / criteria.scale_tol {
                    continue;
                }
                let rot_diff = circular_diff_deg(
                    occurrence.pose.rotation.to_degrees(),
                    truth.rotation.to_degrees(),
                );
                if rot_diff > criteria.rot_tol_deg {
                    continue;
                }
                if best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, t_idx));
                }
            }
            match best {
                Some((_, t_idx)) => {
                    claimed[t_idx] = true;
                    true_detections += 1;
                }
                None => false_detections += 1,
            }
        }

        total_instances += process.truths.len();
        total_matched += true_detections;
        if false_detections > 0 {
            false_processes += 1;
            total_false += false_detections;
        }
        outcomes.push(ProcessOutcome {
            scene_id: process.scene_id.clone(),
            pattern_id: process.pattern_id.clone(),
            total_instances: process.truths.len(),
            true_detections,
            false_detections,
        });
    }

    let detection_rate = if total_instances > 0 {
        total_matched as f64 / total_instances as f64
    } else {
        0.0
    };
    let false_detection_chance = if processes.is_empty() {
        0.0
    } else {
        false_processes as f64 / processes.len() as f64
    };
    let avg_false_detections = if false_processes > 0 {
        total_false as f64 / false_processes as f64
    } else {
        0.0
    };
    EvalResult { processes: outcomes, detection_rate, false_detection_chance, avg_false_detections }
}

/// The built-in demonstration suite: four patterns, twenty scenes with five
/// well-separated instances each, three hundred noise keypoints per scene.
pub fn default_suite(seed: u64) -> EvalSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xD5)) ;
    let patterns: Vec<PatternSpec> = (0..4)
        .map(|i| PatternSpec {
            pattern_id: format!("pattern{i:02}"),
            width: 320,
            height: 256,
            keypoints: 80,
        })
        .collect();
    let anchors = [
        (350.0, 350.0),
        (1000.0, 350.0),
        (1650.0, 350.0),
        (350.0, 1100.0),
        (1000.0, 1100.0),
    ];
    let scenes = (0..20)
        .map(|i| {
            let pattern_id = format!("pattern{:02}", i % 4);
            let instances = anchors
                .iter()
                .map(|&(x, y)| InstanceSpec {
                    pattern_id: pattern_id.clone(),
                    center: [
                        x + rng.random_range(-40.0..40.0),
                        y + rng.random_range(-40.0..40.0),
                    ],
                    scale: rng.random_range(0.9..1.15),
                    rotation_deg: rng.random_range(0.0..360.0),
                    inliers: 30,
                    render_patch: true,
                })
                .collect();
            SceneSpec {
                scene_id: format!("scene{i:02}"),
                width: 2000,
                height: 1500,
                instances,
                noise_keypoints: 300,
                bridges: Vec::new(),
            }
        })
        .collect();
    EvalSuite { seed, descriptor_len: 32, patterns, scenes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{CascadeReport, Pose};
    use crate::features::{encode_feature_set, match_features, Metric};
    use crate::filters::CascadeOutcome;
    use crate::image::encode_pgm;

    fn small_pattern_spec(id: &str) -> PatternSpec {
        PatternSpec { pattern_id: id.into(), width: 320, height: 256, keypoints: 60 }
    }

    #[test]
    fn pattern_generation_is_deterministic() {
        let spec = small_pattern_spec("p0");
        let a = generate_pattern(&spec, 32, 99);
        let b = generate_pattern(&spec, 32, 99);
        assert_eq!(encode_feature_set(&a.features), encode_feature_set(&b.features));
        assert_eq!(encode_pgm(&a.image), encode_pgm(&b.image));
        let c = generate_pattern(&spec, 32, 100);
        assert_ne!(encode_feature_set(&a.features), encode_feature_set(&c.features));
    }

    #[test]
    fn empty_scene_is_blank_with_no_keypoints() {
        let suite = EvalSuite {
            seed: 5,
            descriptor_len: 16,
            patterns: vec![small_pattern_spec("p0")],
            scenes: vec![SceneSpec {
                scene_id: "s0".into(),
                width: 400,
                height: 300,
                instances: vec![],
                noise_keypoints: 0,
                bridges: vec![],
            }],
        };
        let generated = generate(&suite).unwrap();
        let scene = &generated.scenes[0];
        assert!(scene.features.keypoints.is_empty());
        assert!(scene.image.data().iter().all(|&b| b == BACKGROUND_LUM));
        assert!(scene.truth.is_empty());
    }

    #[test]
    fn instance_outside_bounds_is_rejected() {
        let suite = EvalSuite {
            seed: 5,
            descriptor_len: 16,
            patterns: vec![small_pattern_spec("p0")],
            scenes: vec![SceneSpec {
                scene_id: "s0".into(),
                width: 400,
                height: 300,
                instances: vec![InstanceSpec {
                    pattern_id: "p0".into(),
                    center: [450.0, 100.0],
                    scale: 1.0,
                    rotation_deg: 0.0,
                    inliers: 10,
                    render_patch: true,
                }],
                noise_keypoints: 0,
                bridges: vec![],
            }],
        };
        assert!(matches!(generate(&suite), Err(HarnessError::InstanceOutOfBounds { .. })));
    }

    #[test]
    fn single_instance_inliers_match_their_sources() {
        // Construction oracle: 30 inliers, no noise. Every scene keypoint
        // must nearest-neighbor match its source pattern feature at a small
        // distance.
        let suite = EvalSuite {
            seed: 31,
            descriptor_len: 32,
            patterns: vec![small_pattern_spec("p0")],
            scenes: vec![SceneSpec {
                scene_id: "s0".into(),
                width: 900,
                height: 700,
                instances: vec![InstanceSpec {
                    pattern_id: "p0".into(),
                    center: [450.0, 350.0],
                    scale: 1.0,
                    rotation_deg: 30.0,
                    inliers: 30,
                    render_patch: true,
                }],
                noise_keypoints: 0,
                bridges: vec![],
            }],
        };
        let generated = generate(&suite).unwrap();
        let scene = &generated.scenes[0];
        let pattern = &generated.patterns[0];
        assert_eq!(scene.features.keypoints.len(), 30);
        let corrs = match_features(&pattern.features, &scene.features, Metric::L2).unwrap();
        assert_eq!(corrs.len(), 30);
        for c in &corrs {
            assert!(c.distance < INLIER_DIST.1 + 1e-9, "distance {}", c.distance);
            // The matched pattern keypoint must be the actual source: its
            // mapped position must sit within jitter of the scene keypoint.
            let kp = &pattern.features.keypoints[c.pattern_feature_id];
            let skp = &scene.features.keypoints[c.scene_feature_id];
            let mapped = instance_map(
                Point::new(450.0, 350.0),
                1.0,
                30.0_f64.to_radians(),
                Point::new(160.0, 128.0),
                Point::new(kp.x, kp.y),
            );
            let dist = mapped.distance(Point::new(skp.x, skp.y));
            assert!(dist <= POSITION_JITTER * 2.0_f64.sqrt() + 1e-9, "offset {dist}");
        }
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let suite = default_suite(7);
        let small = EvalSuite {
            seed: suite.seed,
            descriptor_len: suite.descriptor_len,
            patterns: suite.patterns[..1].to_vec(),
            scenes: suite.scenes[..1].to_vec(),
        };
        let a = generate(&small).unwrap();
        let b = generate(&small).unwrap();
        assert_eq!(
            encode_feature_set(&a.scenes[0].features),
            encode_feature_set(&b.scenes[0].features)
        );
        assert_eq!(encode_pgm(&a.scenes[0].image), encode_pgm(&b.scenes[0].image));
    }

    fn dummy_occurrence(pattern_id: &str, center: Point, scale: f64, rotation: f64, adjacency_sum: f64) -> Occurrence {
        let meta = PatternMeta::new(pattern_id, 320, 256);
        let empty = CascadeOutcome { accepted: true, filters: vec![] };
        Occurrence {
            pattern_id: pattern_id.into(),
            pose: Pose::from_similarity(center, scale, rotation, &meta),
            votes: vec![],
            vote_count: 0,
            adjacency_sum,
            filter_report: CascadeReport { pass1: empty.clone(), pass2: empty },
        }
    }

    fn truth(pattern_id: &str, x: f64, y: f64) -> GroundTruthInstance {
        GroundTruthInstance {
            pattern_id: pattern_id.into(),
            center: Point::new(x, y),
            scale: 1.0,
            rotation: 0.0,
            pattern_diag: 410.0,
        }
    }

    #[test]
    fn evaluate_reproduces_reference_ratios() {
        // 7200 processes, 129 containing false detections, 203 false total:
        // chance 129/7200 = 1.7917%, average 203/129 = 1.5736.
        let mut processes = Vec::new();
        for i in 0..7200 {
            let occurrences = if i < 74 {
                vec![
                    dummy_occurrence("p", Point::new(100.0, 100.0), 1.0, 0.0, 10.0),
                    dummy_occurrence("p", Point::new(500.0, 500.0), 1.0, 0.0, 8.0),
                ]
            } else if i < 129 {
                vec![dummy_occurrence("p", Point::new(100.0, 100.0), 1.0, 0.0, 10.0)]
            } else {
                vec![]
            };
            processes.push(DetectionProcess {
                scene_id: format!("s{i}"),
                pattern_id: "p".into(),
                occurrences,
                truths: vec![],
            });
        }
        let result = evaluate(&processes, &MatchCriteria::default());
        assert!((result.false_detection_chance * 100.0 - 1.79).abs() < 0.01);
        assert!((result.avg_false_detections - 1.574).abs() < 0.005);
        assert_eq!(result.detection_rate, 0.0);
    }

    #[test]
    fn evaluate_zero_occurrences() {
        let processes = vec![DetectionProcess {
            scene_id: "s".into(),
            pattern_id: "p".into(),
            occurrences: vec![],
            truths: vec![truth("p", 100.0, 100.0), truth("p", 900.0, 100.0)],
        }];
        let result = evaluate(&processes, &MatchCriteria::default());
        assert_eq!(result.detection_rate, 0.0);
        assert_eq!(result.false_detection_chance, 0.0);
        assert_eq!(result.avg_false_detections, 0.0);
    }

    #[test]
    fn evaluate_perfect_detection() {
        let processes = vec![DetectionProcess {
            scene_id: "s".into(),
            pattern_id: "p".into(),
            occurrences: vec![
                dummy_occurrence("p", Point::new(102.0, 99.0), 1.05, 0.1, 10.0),
                dummy_occurrence("p", Point::new(898.0, 101.0), 0.95, 6.2, 9.0),
            ],
            truths: vec![truth("p", 100.0, 100.0), truth("p", 900.0, 100.0)],
        }];
        let result = evaluate(&processes, &MatchCriteria::default());
        assert_eq!(result.detection_rate, 1.0);
        assert_eq!(result.false_detection_chance, 0.0);
    }

    #[test]
    fn evaluate_claims_each_instance_once() {
        // Two occurrences on the same instance: the stronger claims it, the
        // weaker is false.
        let processes = vec![DetectionProcess {
            scene_id: "s".into(),
            pattern_id: "p".into(),
            occurrences: vec![
                dummy_occurrence("p", Point::new(105.0, 100.0), 1.0, 0.0, 5.0),
                dummy_occurrence("p", Point::new(100.0, 100.0), 1.0, 0.0, 20.0),
            ],
            truths: vec![truth("p", 100.0, 100.0)],
        }];
        let result = evaluate(&processes, &MatchCriteria::default());
        assert_eq!(result.processes[0].true_detections, 1);
        assert_eq!(result.processes[0].false_detections, 1);
        assert_eq!(result.false_detection_chance, 1.0);
    }

    #[test]
    fn evaluate_respects_pose_tolerances() {
        let mk = |scale: f64, rot_deg: f64| {
            vec![DetectionProcess {
                scene_id: "s".into(),
                pattern_id: "p".into(),
                occurrences: vec![dummy_occurrence(
                    "p",
                    Point::new(100.0, 100.0),
                    scale,
                    rot_deg.to_radians(),
                    5.0,
                )],
                truths: vec![truth("p", 100.0, 100.0)],
            }]
        };
        let criteria = MatchCriteria::default();
        assert_eq!(evaluate(&mk(1.0, 0.0), &criteria).detection_rate, 1.0);
        assert_eq!(evaluate(&mk(1.5, 0.0), &criteria).detection_rate, 0.0, "scale out of tolerance");
        assert_eq!(evaluate(&mk(1.0, 25.0), &criteria).detection_rate, 0.0, "rotation out of tolerance");
        assert_eq!(evaluate(&mk(1.0, 345.0), &criteria).detection_rate, 1.0, "rotation wraps");
    }

    #[test]
    fn evaluate_is_order_independent_given_tie_rule() {
        let occurrences = vec![
            dummy_occurrence("p", Point::new(100.0, 100.0), 1.0, 0.0, 7.0),
            dummy_occurrence("p", Point::new(900.0, 100.0), 1.0, 0.0, 11.0),
            dummy_occurrence("p", Point::new(500.0, 900.0), 1.0, 0.0, 3.0),
        ];
        let truths = vec![truth("p", 100.0, 100.0), truth("p", 900.0, 100.0)];
        let forward = DetectionProcess {
            scene_id: "s".into(),
            pattern_id: "p".into(),
            occurrences: occurrences.clone(),
            truths: truths.clone(),
        };
        let mut reversed_occurrences = occurrences;
        reversed_occurrences.reverse();
        let reversed = DetectionProcess {
            scene_id: "s".into(),
            pattern_id: "p".into(),
            occurrences: reversed_occurrences,
            truths,
        };
        let a = evaluate(&[forward], &MatchCriteria::default());
        let b = evaluate(&[reversed], &MatchCriteria::default());
        assert_eq!(a.processes[0].true_detections, b.processes[0].true_detections);
        assert_eq!(a.processes[0].false_detections, b.processes[0].false_detections);
    }

    #[test]
    fn suite_round_trips_through_json() {
        let suite = default_suite(3);
        let text = serde_json::to_string(&suite).unwrap();
        let back: EvalSuite = serde_json::from_str(&text).unwrap();
        assert_eq!(back.scenes.len(), suite.scenes.len());
        assert_eq!(back.patterns.len(), 4);
        assert_eq!(back.scenes[0].instances.len(), 5);
    }

    #[test]
    fn run_suite_requires_processes() {
        let generated = GeneratedSuite { patterns: vec![], scenes: vec![] };
        assert!(matches!(
            run_suite(&generated, &RunConfig::default()),
            Err(HarnessError::NoProcesses)
        ));
    }
}
