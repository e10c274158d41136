//! Shared fixtures for the binary tests: a small synthetic suite written out
//! as feature/image files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voteagg_core::features::encode_feature_set;
use voteagg_core::harness::{self, EvalSuite, InstanceSpec, PatternSpec, SceneSpec};
use voteagg_core::image::save_pgm;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voteagg"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn small_suite(seed: u64) -> EvalSuite {
    EvalSuite {
        seed,
        descriptor_len: 24,
        patterns: (0..2)
            .map(|i| PatternSpec {
                pattern_id: format!("pat{i}"),
                width: 288,
                height: 256,
                keypoints: 60,
            })
            .collect(),
        scenes: (0..2)
            .map(|i| SceneSpec {
                scene_id: format!("scene{i}"),
                width: 900,
                height: 700,
                instances: vec![InstanceSpec {
                    pattern_id: format!("pat{i}"),
                    center: [450.0, 350.0],
                    scale: 1.0,
                    rotation_deg: 25.0 * i as f64,
                    inliers: 30,
                    render_patch: true,
                }],
                noise_keypoints: 80,
                bridges: vec![],
            })
            .collect(),
    }
}

pub struct Inputs {
    pub dir: tempfile::TempDir,
    pub scene_features: PathBuf,
    pub scene_image: PathBuf,
    pub pattern_features: Vec<PathBuf>,
    pub pattern_images: Vec<PathBuf>,
}

pub fn write_suite_inputs(seed: u64) -> Inputs {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite(seed);
    let generated = harness::generate(&suite).unwrap();
    let scene_features = dir.path().join("scene.jsonl");
    let scene_image = dir.path().join("scene.pgm");
    fs::write(&scene_features, encode_feature_set(&generated.scenes[0].features)).unwrap();
    save_pgm(&generated.scenes[0].image, &scene_image).unwrap();
    let mut pattern_features = Vec::new();
    let mut pattern_images = Vec::new();
    for (i, pattern) in generated.patterns.iter().enumerate() {
        let features = dir.path().join(format!("pat{i}.jsonl"));
        let image = dir.path().join(format!("pat{i}.pgm"));
        fs::write(&features, encode_feature_set(&pattern.features)).unwrap();
        save_pgm(&pattern.image, &image).unwrap();
        pattern_features.push(features);
        pattern_images.push(image);
    }
    Inputs { dir, scene_features, scene_image, pattern_features, pattern_images }
}
