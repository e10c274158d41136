//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Every oracle here is an independent implementation (plain loops and
//! scans) of the contract it checks; none of them call back into the
//! pipeline code paths under test.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voteagg_core::aggregation::{detect, flood_gather, gather_local, unique_filter, DetectInputs, Pose};
use voteagg_core::config::RunConfig;
use voteagg_core::features::{match_features, FeatureSet, Keypoint, Metric};
use voteagg_core::filters::rotation_variance;
use voteagg_core::geom::{normalize_angle, Point, Quad};
use voteagg_core::harness::{
    self, default_suite, evaluate, BridgeSpec, DetectionProcess, EvalSuite, InstanceSpec,
    MatchCriteria, PatternSpec, SceneSpec,
};
use voteagg_core::pipeline::prepare_process;
use voteagg_core::vote_image::{erase_region, Proposition, VoteImage};
use voteagg_core::votes::{accept_distance, adjacency, distance_threshold, PatternMeta, Vote, VoteSpace};

fn vote(cx: f64, cy: f64, adjacency: f64, pattern_id: usize, scene_id: usize) -> Vote {
    Vote {
        cx,
        cy,
        rel_scale: 1.0,
        rel_rotation: 0.0,
        adjacency,
        pattern_feature_id: pattern_id,
        scene_feature_id: scene_id,
        scene_lum: 0,
        pattern_lum: 0,
    }
}

/// Criterion: the distance-threshold, rejection and adjacency formulas are
/// exact, and adjacency is monotone with the documented endpoints, over 1000
/// randomized draws. Runtime under one second.
#[test]
fn acceptance_formula_suite() {
    let start = Instant::now();

    assert_eq!(distance_threshold(&[0.2, 0.3, 0.6]).unwrap(), 0.4);
    assert_eq!(distance_threshold(&[0.5]).unwrap(), 0.5);
    assert!(distance_threshold(&[]).is_err());

    assert!(accept_distance(0.4, 0.4), "boundary distance is accepted");
    assert!(!accept_distance(0.41, 0.4));
    assert!(accept_distance(0.0, 0.4));

    let thr = 1.25;
    assert_eq!(adjacency(0.0, thr).unwrap(), 1.0);
    assert_eq!(adjacency(thr, thr).unwrap(), 0.0);
    assert!((adjacency(thr / 2.0, thr).unwrap() - 0.75).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    for _ in 0..1000 {
        let thr: f64 = rng.random_range(1e-9..100.0);
        let a: f64 = rng.random_range(0.0..thr);
        let b: f64 = rng.random_range(0.0..thr);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let adj_lo = adjacency(lo, thr).unwrap();
        let adj_hi = adjacency(hi, thr).unwrap();
        assert!(adj_lo >= adj_hi, "monotonicity at ({lo}, {hi}, {thr})");
        assert!((0.0..=1.0).contains(&adj_lo));
        assert!((0.0..=1.0).contains(&adj_hi));
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "formula suite took {elapsed:?}");
    println!("[acceptance] formula suite (Eqs. 1-3 + 1000 monotonicity draws): PASS ({elapsed:?})");
}

/// Criterion: five operations match their independent oracles with exact set
/// equality on 100 randomized instances each. Runtime under 30 seconds.
#[test]
fn acceptance_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0E);

    // unique_filter vs hash-group-by-max oracle.
    for _ in 0..100 {
        let votes: Vec<Vote> = (0..rng.random_range(1..150))
            .map(|i| {
                vote(
                    rng.random_range(0.0..50.0),
                    rng.random_range(0.0..50.0),
                    (rng.random_range(0..500) as f64) / 500.0,
                    rng.random_range(0..20),
                    i,
                )
            })
            .collect();
        let got = unique_filter(&votes);
        let mut groups: HashMap<usize, Vote> = HashMap::new();
        for v in &votes {
            groups
                .entry(v.pattern_feature_id)
                .and_modify(|kept| {
                    if v.adjacency > kept.adjacency
                        || (v.adjacency == kept.adjacency && v.scene_feature_id < kept.scene_feature_id)
                    {
                        *kept = *v;
                    }
                })
                .or_insert(*v);
        }
        let mut got_ids: Vec<(usize, usize)> = got.iter().map(|v| (v.pattern_feature_id, v.scene_feature_id)).collect();
        let mut expected_ids: Vec<(usize, usize)> =
            groups.values().map(|v| (v.pattern_feature_id, v.scene_feature_id)).collect();
        got_ids.sort_unstable();
        expected_ids.sort_unstable();
        assert_eq!(got_ids, expected_ids, "unique_filter vs group-by-max");
    }

    // gather_local vs linear distance scan.
    for _ in 0..100 {
        let votes: Vec<Vote> = (0..rng.random_range(1..200))
            .map(|i| vote(rng.random_range(-50.0..250.0), rng.random_range(-50.0..250.0), rng.random_range(0.0..1.0), i, i))
            .collect();
        let center = Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
        let radius = rng.random_range(1.0..150.0);
        let expected: Vec<usize> = votes
            .iter()
            .enumerate()
            .filter(|(_, v)| ((v.cx - center.x).powi(2) + (v.cy - center.y).powi(2)).sqrt() <= radius)
            .map(|(i, _)| i)
            .collect();
        let vs = VoteSpace::new("p", (200, 200), votes);
        let got: Vec<usize> = gather_local(&vs, center, radius)
            .iter()
            .map(|v| v.scene_feature_id)
            .collect();
        assert_eq!(got, expected, "gather_local vs linear scan");
    }

    // flood_gather vs masked connected components.
    let meta = PatternMeta::new("p", 100, 100);
    for _ in 0..100 {
        let votes: Vec<Vote> = (0..rng.random_range(1..80))
            .map(|i| vote(rng.random_range(0.0..160.0), rng.random_range(0.0..160.0), rng.random_range(0.1..1.0), i, i))
            .collect();
        let seed_vote = votes[rng.random_range(0..votes.len())];
        let vs = VoteSpace::new("p", (160, 160), votes);
        let vi = VoteImage::rasterize(&vs, 4);
        let cell = vi.cell_of(seed_vote.cx, seed_vote.cy);
        let prop = Proposition { cell, position: vi.cell_center(cell.0, cell.1), strength: 1.0 };
        let bound = Pose::from_similarity(
            Point::new(rng.random_range(20.0..140.0), rng.random_range(20.0..140.0)),
            rng.random_range(0.5..2.0),
            rng.random_range(0.0..TAU),
            &meta,
        );
        let shrink = rng.random_range(0.4..1.0);
        let mut got: Vec<usize> = flood_gather(&vs, &vi, &prop, &bound, shrink)
            .iter()
            .map(|v| v.scene_feature_id)
            .collect();
        got.sort_unstable();

        // Oracle: build the mask grid, BFS it, collect the cell indices.
        let mask_quad = bound.quad.scaled_about(bound.center, shrink);
        let (cols, rows) = (vi.cols(), vi.rows());
        let mask: Vec<bool> = (0..cols * rows)
            .map(|idx| {
                let (col, row) = (idx % cols, idx / cols);
                vi.value(col, row) > 0.0 && mask_quad.contains(vi.cell_center(col, row))
            })
            .collect();
        let mut expected: Vec<usize> = Vec::new();
        let seed_idx = cell.1 * cols + cell.0;
        if mask[seed_idx] {
            let mut seen = vec![false; cols * rows];
            seen[seed_idx] = true;
            let mut stack = vec![seed_idx];
            while let Some(idx) = stack.pop() {
                let (col, row) = (idx % cols, idx / cols);
                expected.extend_from_slice(vi.cell_votes(col, row));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (col as i64 + dx, row as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                            continue;
                        }
                        let nidx = ny as usize * cols + nx as usize;
                        if !seen[nidx] && mask[nidx] {
                            seen[nidx] = true;
                            stack.push(nidx);
                        }
                    }
                }
            }
        }
        expected.sort_unstable();
        assert_eq!(got, expected, "flood_gather vs masked connected components");
    }

    // erase_region vs point-in-polygon scan.
    for _ in 0..100 {
        let votes: Vec<Vote> = (0..rng.random_range(1..200))
            .map(|i| vote(rng.random_range(-30.0..230.0), rng.random_range(-30.0..230.0), rng.random_range(0.0..1.0), i, i))
            .collect();
        let center = Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
        let hw = rng.random_range(5.0..80.0);
        let hh = rng.random_range(5.0..80.0);
        let angle: f64 = rng.random_range(0.0..TAU);
        let corner = |sx: f64, sy: f64| center + Point::new(sx * hw, sy * hh).rotate(angle);
        let quad = Quad([corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0)]);

        let expected: Vec<usize> = votes
            .iter()
            .enumerate()
            .filter(|(_, v)| {
                let mut pos = false;
                let mut neg = false;
                for i in 0..4 {
                    let a = quad.0[i];
                    let b = quad.0[(i + 1) % 4];
                    let cross = (b.x - a.x) * (v.cy - a.y) - (b.y - a.y) * (v.cx - a.x);
                    if cross > 0.0 {
                        pos = true;
                    }
                    if cross < 0.0 {
                        neg = true;
                    }
                }
                !(pos && neg)
            })
            .map(|(i, _)| i)
            .collect();

        let n = votes.len();
        let mut vs = VoteSpace::new("p", (200, 200), votes);
        let mut vi = VoteImage::rasterize(&vs, 4);
        let removed = erase_region(&mut vs, &mut vi, &quad);
        let dead: Vec<usize> = (0..n).filter(|&id| !vs.is_live(id)).collect();
        assert_eq!(removed, expected.len());
        assert_eq!(dead, expected, "erase_region vs point-in-polygon scan");
    }

    // match vs independent double-loop nearest neighbor; the first instance
    // is a full 200-pattern x 500-scene set, the rest randomized sizes.
    for instance in 0..100 {
        let dim = if instance == 0 { 16 } else { rng.random_range(4..24) };
        let (pattern_count, scene_count) = if instance == 0 {
            (200, 500)
        } else {
            (rng.random_range(1..50), rng.random_range(1..100))
        };
        let mut pattern = FeatureSet::new("p", 100, 100);
        for _ in 0..pattern_count {
            pattern.keypoints.push(Keypoint {
                x: 1.0,
                y: 1.0,
                scale: 1.0,
                orientation: 0.0,
                luminance: 0,
                hue: None,
                descriptor: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
        let mut scene = FeatureSet::new("s", 100, 100);
        for _ in 0..scene_count {
            scene.keypoints.push(Keypoint {
                x: 1.0,
                y: 1.0,
                scale: 1.0,
                orientation: 0.0,
                luminance: 0,
                hue: None,
                descriptor: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
        let got = match_features(&pattern, &scene, Metric::L2).unwrap();
        for (scene_id, skp) in scene.keypoints.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (pattern_id, pkp) in pattern.keypoints.iter().enumerate() {
                let d = pkp
                    .descriptor
                    .iter()
                    .zip(&skp.descriptor)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if d < best_d {
                    best_d = d;
                    best = pattern_id;
                }
            }
            assert_eq!(got[scene_id].pattern_feature_id, best, "match vs double loop");
            assert_eq!(got[scene_id].distance, best_d);
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "oracle suite took {elapsed:?}");
    println!("[acceptance] oracle equivalence (5 operations x 100 randomized instances): PASS ({elapsed:?})");
}

/// Criterion: the rotation-variance statistic is invariant under global
/// rotation offsets within 1e-9 (200 groups x 20 offsets) and bimodal
/// opposite-rotation groups are rejected at the default threshold.
#[test]
fn acceptance_rotation_filter_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x2E);
    let default_max = RunConfig::default().cascade.max_rotation_variance;

    for _ in 0..200 {
        let rotations: Vec<f64> = (0..rng.random_range(3..60))
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        let base = rotation_variance(&rotations).unwrap();
        let base_verdict = base <= default_max;
        for _ in 0..20 {
            let delta = rng.random_range(0.0..TAU);
            let shifted: Vec<f64> = rotations.iter().map(|&r| normalize_angle(r + delta)).collect();
            let got = rotation_variance(&shifted).unwrap();
            assert!(
                (got - base).abs() < 1e-9,
                "variance moved под offset {delta}: {got} vs {base}"
            );
            assert_eq!(got <= default_max, base_verdict);
        }
    }

    for n in [4usize, 10, 40] {
        let mut rotations = vec![0.0; n / 2];
        rotations.extend(vec![PI; n / 2]);
        let variance = rotation_variance(&rotations).unwrap();
        assert!(variance > default_max, "bimodal group must reject: {variance}");
    }

    let elapsed = start.elapsed();
    println!("[acceptance] rotation-filter shift invariance (200 groups x 20 offsets, 1e-9): PASS ({elapsed:?})");
}

/// Criterion: the evaluation metrics reproduce the reference ratios: 7200
/// processes with 129 false-containing and 203 false detections give a false
/// detection chance of 1.79% and an average of 1.574.
#[test]
fn acceptance_metrics_arithmetic() {
    let start = Instant::now();
    let meta = PatternMeta::new("p", 320, 256);
    let make_occurrence = |x: f64| voteagg_core::aggregation::Occurrence {
        pattern_id: "p".into(),
        pose: Pose::from_similarity(Point::new(x, 100.0), 1.0, 0.0, &meta),
        votes: vec![],
        vote_count: 0,
        adjacency_sum: 1.0,
        filter_report: voteagg_core::aggregation::CascadeReport {
            pass1: voteagg_core::filters::CascadeOutcome { accepted: true, filters: vec![] },
            pass2: voteagg_core::filters::CascadeOutcome { accepted: true, filters: vec![] },
        },
    };

    let mut processes = Vec::with_capacity(7200);
    for i in 0..7200usize {
        // 74 processes with two false detections plus 55 with one: 203 false
        // detections spread over 129 processes.
        let occurrences = if i < 74 {
            vec![make_occurrence(100.0), make_occurrence(600.0)]
        } else if i < 129 {
            vec![make_occurrence(100.0)]
        } else {
            vec![]
        };
        processes.push(DetectionProcess {
            scene_id: format!("scene{i}"),
            pattern_id: "p".into(),
            occurrences,
            truths: vec![],
        });
    }
    let result = evaluate(&processes, &MatchCriteria::default());
    let chance_pct = result.false_detection_chance * 100.0;
    assert!(
        (chance_pct - 1.79).abs() <= 0.01,
        "false detection chance {chance_pct}% != 1.79% +/- 0.01"
    );
    assert!(
        (result.avg_false_detections - 1.574).abs() <= 0.005,
        "average false detections {} != 1.574 +/- 0.005",
        result.avg_false_detections
    );

    let elapsed = start.elapsed();
    println!(
        "[acceptance] metrics arithmetic (7200/129/203 -> {:.4}% chance, {:.4} average): PASS ({elapsed:?})",
        chance_pct, result.avg_false_detections
    );
}

/// Criterion: twenty seeded scenes with five well-separated instances each
/// (30 inliers per instance, 300 noise keypoints) reach a detection rate of
/// at least 0.95 with zero false occurrences, and every planted instance's
/// center lies within the pass-1 gather radius of some generated
/// proposition. Runtime under 60 seconds.
#[test]
fn acceptance_synthetic_end_to_end() {
    let start = Instant::now();
    let config = RunConfig::default();
    let suite = default_suite(42);
    let generated = harness::generate(&suite).expect("generation succeeds");

    let mut processes = Vec::new();
    let mut instances_total = 0usize;
    let mut instances_covered = 0usize;
    for (scene_index, scene) in generated.scenes.iter().enumerate() {
        let pattern_index = scene_index % generated.patterns.len();
        let pattern = &generated.patterns[pattern_index];
        assert_eq!(
            scene.truth[0].pattern_id, pattern.features.image_id,
            "suite layout: scene pairs with its own pattern"
        );

        let mut prepared = prepare_process(&pattern.features, &scene.features, &config).unwrap();
        let radius = config.gather_radius_factor * prepared.meta.diagonal();
        for truth in &scene.truth {
            instances_total += 1;
            let covered = prepared
                .propositions
                .iter()
                .any(|p| p.position.distance(truth.center) <= radius);
            if covered {
                instances_covered += 1;
            }
        }

        let inputs = DetectInputs {
            meta: &prepared.meta,
            scene_image: &scene.image,
            pattern_image: &pattern.image,
        };
        let occurrences = detect(
            &mut prepared.vote_space,
            &mut prepared.vote_image,
            &prepared.propositions,
            &inputs,
            &config,
        );
        processes.push(DetectionProcess {
            scene_id: scene.features.image_id.clone(),
            pattern_id: pattern.features.image_id.clone(),
            occurrences,
            truths: scene.truth.clone(),
        });
    }

    assert_eq!(instances_total, 100);
    assert_eq!(
        instances_covered, instances_total,
        "every planted instance center must be within the pass-1 radius of a proposition"
    );

    let result = evaluate(&processes, &MatchCriteria::default());
    let false_total: usize = result.processes.iter().map(|p| p.false_detections).sum();
    assert!(
        result.detection_rate >= 0.95,
        "detection rate {} below 0.95",
        result.detection_rate
    );
    assert_eq!(false_total, 0, "expected zero false occurrences");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "end-to-end suite took {elapsed:?}");
    println!(
        "[acceptance] synthetic end-to-end (rate {:.3}, {} false, 100/100 propositions cover): PASS ({elapsed:?})",
        result.detection_rate, false_total
    );
}

/// Criterion: two instances whose vote blobs touch (connected through a
/// planted weak-vote chain) are still detected as two distinct occurrences
/// with disjoint vote groups, across 10 seeds.
#[test]
fn acceptance_adjacent_instance_separation() {
    let start = Instant::now();
    let config = RunConfig::default();

    for seed in 0..10u64 {
        let suite = EvalSuite {
            seed: 1000 + seed,
            descriptor_len: 32,
            patterns: vec![PatternSpec {
                pattern_id: "pat".into(),
                width: 320,
                height: 256,
                keypoints: 80,
            }],
            scenes: vec![SceneSpec {
                scene_id: format!("adjacent{seed}"),
                width: 1500,
                height: 800,
                instances: vec![
                    InstanceSpec {
                        pattern_id: "pat".into(),
                        center: [580.0, 400.0],
                        scale: 1.0,
                        rotation_deg: 0.0,
                        inliers: 30,
                        render_patch: true,
                    },
                    InstanceSpec {
                        pattern_id: "pat".into(),
                        center: [940.0, 400.0],
                        scale: 1.0,
                        rotation_deg: 0.0,
                        inliers: 30,
                        render_patch: true,
                    },
                ],
                noise_keypoints: 60,
                bridges: vec![BridgeSpec { from: 0, to: 1, step_px: 4.0 }],
            }],
        };
        let generated = harness::generate(&suite).unwrap();
        let scene = &generated.scenes[0];
        let pattern = &generated.patterns[0];

        let mut prepared = prepare_process(&pattern.features, &scene.features, &config).unwrap();

        // Precondition of the criterion: the two blobs must actually touch,
        // i.e. the nonzero cells around both centers share one connected
        // component. Checked with an independent BFS over the raw grid.
        let vi = &prepared.vote_image;
        let (cols, rows) = (vi.cols(), vi.rows());
        let cell_a = vi.cell_of(580.0, 400.0);
        let cell_b = vi.cell_of(940.0, 400.0);
        let near = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)) <= 2;
        let mut seen = vec![false; cols * rows];
        let mut stack = vec![cell_a];
        seen[cell_a.1 * cols + cell_a.0] = true;
        let mut reached_b = false;
        while let Some((col, row)) = stack.pop() {
            if near((col, row), cell_b) {
                reached_b = true;
                break;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (col as i64 + dx, row as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !seen[ny * cols + nx] && vi.value(nx, ny) > 0.0 {
                        seen[ny * cols + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
        assert!(reached_b, "seed {seed}: vote blobs are not touching; test construction broken");

        let inputs = DetectInputs {
            meta: &prepared.meta,
            scene_image: &scene.image,
            pattern_image: &pattern.image,
        };
        let occurrences = detect(
            &mut prepared.vote_space,
            &mut prepared.vote_image,
            &prepared.propositions,
            &inputs,
            &config,
        );
        assert_eq!(occurrences.len(), 2, "seed {seed}: expected exactly two occurrences");

        // Each occurrence near one distinct instance center.
        let centers = [Point::new(580.0, 400.0), Point::new(940.0, 400.0)];
        let mut matched = [false; 2];
        for occurrence in &occurrences {
            let idx = if occurrence.pose.center.distance(centers[0])
                < occurrence.pose.center.distance(centers[1])
            {
                0
            } else {
                1
            };
            assert!(
                occurrence.pose.center.distance(centers[idx]) < 40.0,
                "seed {seed}: occurrence far from both instances"
            );
            matched[idx] = true;
        }
        assert!(matched[0] && matched[1], "seed {seed}: both instances must be found");

        // Disjoint vote groups: a (pattern, scene) feature pair identifies a
        // vote uniquely.
        let group_a: Vec<(usize, usize)> = occurrences[0]
            .votes
            .iter()
            .map(|v| (v.pattern_feature_id, v.scene_feature_id))
            .collect();
        let overlap = occurrences[1]
            .votes
            .iter()
            .filter(|v| group_a.contains(&(v.pattern_feature_id, v.scene_feature_id)))
            .count();
        assert_eq!(overlap, 0, "seed {seed}: occurrence vote groups must be disjoint");
    }

    let elapsed = start.elapsed();
    println!("[acceptance] adjacent-instance separation (touching blobs, 10 seeds): PASS ({elapsed:?})");
}

/// Supporting check for the end-to-end criterion: matching the planted
/// construction recovers all inliers below the distance threshold when noise
/// is present.
#[test]
fn acceptance_inliers_survive_threshold_in_noisy_scenes() {
    let suite = default_suite(42);
    let generated = harness::generate(&suite).unwrap();
    let scene = &generated.scenes[0];
    let pattern = &generated.patterns[0];
    let corrs = match_features(&pattern.features, &scene.features, Metric::L2).unwrap();
    let distances: Vec<f64> = corrs.iter().map(|c| c.distance).collect();
    let thr = distance_threshold(&distances).unwrap();
    // 5 instances x 30 inliers lead the keypoint list by construction.
    let inliers = 150;
    for c in corrs.iter().filter(|c| c.scene_feature_id < inliers) {
        assert!(
            accept_distance(c.distance, thr),
            "inlier correspondence {} at distance {} above threshold {}",
            c.scene_feature_id,
            c.distance,
            thr
        );
    }
}

