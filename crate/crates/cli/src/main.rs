//! Command-line front end: feature matching, detection, vote-image
//! rendering and synthetic evaluation.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use voteagg_core::aggregation::{detect, DetectInputs, Occurrence};
use voteagg_core::config::RunConfig;
use voteagg_core::features::{encode_correspondences, load_feature_set, match_features, FeatureSet, Metric};
use voteagg_core::harness::{self, default_suite, evaluate, DetectionProcess, EvalSuite, MatchCriteria};
use voteagg_core::image::{encode_pgm, load_pgm, GrayImage};
use voteagg_core::pipeline::prepare_process;
use voteagg_core::vote_image::render_gray;
use voteagg_core::votes::PatternMeta;

#[derive(Parser)]
#[command(name = "voteagg", version, about = "Multi-instance object detection by vote aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the base seed (harness generation and binary-test draws).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads across patterns/processes; 0 = available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Descriptor metric: l2, l1 or hamming.
    #[arg(long)]
    metric: Option<Metric>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))
                .map_err(CliError::Input)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.cascade.rng_seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if let Some(metric) = self.metric {
            config.metric = metric;
        }
        config
            .validate()
            .map_err(|e| CliError::Input(anyhow!(e)))?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Match pattern features against scene features and write the
    /// correspondences as JSON Lines.
    Match {
        /// Pattern feature file (JSON Lines).
        #[arg(long)]
        pattern: PathBuf,
        /// Scene feature file (JSON Lines).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "l2")]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full detection pipeline for one scene against one or more
    /// patterns and write the accepted occurrences as JSON.
    Detect {
        /// Scene feature file.
        #[arg(long)]
        scene: PathBuf,
        /// Scene image (binary PGM), required by the correlation filter.
        #[arg(long)]
        scene_image: PathBuf,
        /// Pattern feature file; repeat for several patterns.
        #[arg(long = "pattern", required = true)]
        patterns: Vec<PathBuf>,
        /// Pattern image (binary PGM); i-th flag pairs with the i-th
        /// --pattern.
        #[arg(long = "pattern-image", required = true)]
        pattern_images: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write each pattern's vote image as `<dir>/votes_<id>.pgm`.
        #[arg(long)]
        render_dir: Option<PathBuf>,
    },
    /// Render the smoothed, min-max normalized vote image for one
    /// (pattern, scene) pair.
    RenderVotes {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output path; `.png` renders PNG, anything else binary PGM.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic suite, run every (scene, pattern) detection
    /// process and report the detection metrics.
    Eval {
        /// Suite description (JSON). Mutually exclusive with
        /// --default-suite.
        #[arg(long, conflicts_with = "default_suite")]
        suite: Option<PathBuf>,
        /// Use the built-in 20-scene demonstration suite.
        #[arg(long)]
        default_suite: bool,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(CliError::Input(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            std::process::exit(3);
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Match { pattern, scene, metric, out } => cmd_match(&pattern, &scene, metric, &out),
        Command::Detect { scene, scene_image, patterns, pattern_images, config, out, render_dir } => {
            cmd_detect(&scene, &scene_image, &patterns, &pattern_images, &config, &out, render_dir.as_deref())
        }
        Command::RenderVotes { scene, pattern, config, out } => cmd_render_votes(&scene, &pattern, &config, &out),
        Command::Eval { suite, default_suite, config, out } => cmd_eval(suite.as_deref(), default_suite, &config, &out),
    }
}

fn load_features(path: &Path) -> Result<FeatureSet, CliError> {
    let set = load_feature_set(path)
        .with_context(|| format!("loading features {}", path.display()))
        .map_err(CliError::Input)?;
    let oob = set.out_of_bounds_count();
    if oob > 0 {
        eprintln!(
            "warning: {}: {} keypoint(s) outside the {}x{} image bounds",
            path.display(),
            oob,
            set.width,
            set.height
        );
    }
    Ok(set)
}

fn load_image_for(path: &Path, features: &FeatureSet) -> Result<GrayImage, CliError> {
    let image = load_pgm(path)
        .with_context(|| format!("loading image {}", path.display()))
        .map_err(CliError::Input)?;
    if (image.width(), image.height()) != (features.width, features.height) {
        return Err(CliError::Input(anyhow!(
            "{}: image is {}x{} but feature file {} declares {}x{}",
            path.display(),
            image.width(),
            image.height(),
            features.image_id,
            features.width,
            features.height
        )));
    }
    Ok(image)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Internal)
}

fn cmd_match(pattern_path: &Path, scene_path: &Path, metric: Metric, out: &Path) -> Result<(), CliError> {
    let pattern = load_features(pattern_path)?;
    let scene = load_features(scene_path)?;
    let corrs = match_features(&pattern, &scene, metric).map_err(|e| CliError::Input(anyhow!(e)))?;
    write_output(out, encode_correspondences(&corrs).as_bytes())?;
    eprintln!("{} correspondence(s) written to {}", corrs.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct DetectReport<'a> {
    config: &'a RunConfig,
    scene_id: &'a str,
    occurrences: Vec<Occurrence>,
}

struct PatternInput {
    features: FeatureSet,
    image: GrayImage,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
        .map_err(CliError::Internal)
}

fn cmd_detect(
    scene_path: &Path,
    scene_image_path: &Path,
    pattern_paths: &[PathBuf],
    pattern_image_paths: &[PathBuf],
    config_args: &ConfigArgs,
    out: &Path,
    render_dir: Option<&Path>,
) -> Result<(), CliError> {
    if pattern_paths.len() != pattern_image_paths.len() {
        return Err(CliError::Input(anyhow!(
            "{} --pattern flag(s) but {} --pattern-image flag(s); they pair by position",
            pattern_paths.len(),
            pattern_image_paths.len()
        )));
    }
    let config = config_args.resolve()?;
    let scene = load_features(scene_path)?;
    let scene_image = load_image_for(scene_image_path, &scene)?;

    let mut patterns = Vec::new();
    for (features_path, image_path) in pattern_paths.iter().zip(pattern_image_paths) {
        let features = load_features(features_path)?;
        let image = load_image_for(image_path, &features)?;
        let meta = PatternMeta::from_feature_set(&features);
        if !meta.size_in_convention() {
            eprintln!(
                "warning: pattern {} is {}x{}; detection expects the larger side in 256..=512",
                meta.pattern_id, meta.width, meta.height
            );
        }
        if features.keypoints.is_empty() {
            eprintln!("warning: pattern {} has no keypoints; it cannot produce occurrences", meta.pattern_id);
        }
        if let (Some(p), Some(s)) = (features.descriptor_len(), scene.descriptor_len()) {
            if p != s {
                return Err(CliError::Input(anyhow!(
                    "pattern {}: descriptor length {} does not match scene descriptor length {}",
                    meta.pattern_id,
                    p,
                    s
                )));
            }
        }
        patterns.push(PatternInput { features, image });
    }

    if let Some(dir) = render_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::Internal)?;
    }

    let pool = thread_pool(config.workers)?;
    let results: Vec<Result<Vec<Occurrence>>> = pool.install(|| {
        patterns
            .par_iter()
            .map(|pattern| {
                let mut prepared = prepare_process(&pattern.features, &scene, &config)?;
                if let Some(dir) = render_dir {
                    let rendered = render_gray(&prepared.vote_image, config.smooth_radius);
                    let name = format!("votes_{}.pgm", prepared.meta.pattern_id);
                    fs::write(dir.join(&name), encode_pgm(&rendered))?;
                }
                let inputs = DetectInputs {
                    meta: &prepared.meta,
                    scene_image: &scene_image,
                    pattern_image: &pattern.image,
                };
                Ok(detect(
                    &mut prepared.vote_space,
                    &mut prepared.vote_image,
                    &prepared.propositions,
                    &inputs,
                    &config,
                ))
            })
            .collect()
    });

    let mut occurrences = Vec::new();
    for result in results {
        occurrences.extend(result.map_err(CliError::Internal)?);
    }
    let report = DetectReport { config: &config, scene_id: &scene.image_id, occurrences };
    let mut json = serde_json::to_vec_pretty(&report)
        .context("serializing occurrences")
        .map_err(CliError::Internal)?;
    json.push(b'\n');
    write_output(out, &json)?;
    eprintln!("{} occurrence(s) written to {}", report.occurrences.len(), out.display());
    Ok(())
}

fn cmd_render_votes(scene_path: &Path, pattern_path: &Path, config_args: &ConfigArgs, out: &Path) -> Result<(), CliError> {
    let config = config_args.resolve()?;
    let scene = load_features(scene_path)?;
    let pattern = load_features(pattern_path)?;
    let prepared = prepare_process(&pattern, &scene, &config).map_err(|e| CliError::Input(anyhow!(e)))?;
    let rendered = render_gray(&prepared.vote_image, config.smooth_radius);
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        image::save_buffer_with_format(
            out,
            rendered.data(),
            rendered.width(),
            rendered.height(),
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .with_context(|| format!("writing {}", out.display()))
        .map_err(CliError::Internal)?;
    } else {
        write_output(out, &encode_pgm(&rendered))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport<'a> {
    config: &'a RunConfig,
    criteria: MatchCriteria,
    suite_seed: u64,
    detection_rate: f64,
    false_detection_chance: f64,
    avg_false_detections: f64,
    processes: Vec<harness::ProcessOutcome>,
}

fn cmd_eval(
    suite_path: Option<&Path>,
    use_default: bool,
    config_args: &ConfigArgs,
    out: &Path,
) -> Result<(), CliError> {
    let config = config_args.resolve()?;
    let mut suite: EvalSuite = match (suite_path, use_default) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("loading suite {}", path.display()))
                .map_err(CliError::Input)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing suite {}", path.display()))
                .map_err(CliError::Input)?
        }
        (None, true) => default_suite(config.seed),
        (None, false) => {
            return Err(CliError::Input(anyhow!("pass --suite <file> or --default-suite")));
        }
    };
    if config_args.seed.is_some() {
        suite.seed = config.seed;
    }
    if suite.scenes.is_empty() || suite.patterns.is_empty() {
        return Err(CliError::Input(anyhow!("no processes: the suite needs at least one scene and one pattern")));
    }

    let generated = harness::generate(&suite).map_err(|e| CliError::Input(anyhow!(e)))?;
    let pairs: Vec<(usize, usize)> = (0..generated.scenes.len())
        .flat_map(|s| (0..generated.patterns.len()).map(move |p| (s, p)))
        .collect();

    let pool = thread_pool(config.workers)?;
    let processes: Vec<DetectionProcess> = pool
        .install(|| {
            pairs
                .par_iter()
                .map(|&(s, p)| harness::run_process(&generated, s, p, &config))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(|e| CliError::Internal(anyhow!(e)))?;

    let criteria = MatchCriteria::default();
    let result = evaluate(&processes, &criteria);
    let report = EvalReport {
        config: &config,
        criteria,
        suite_seed: suite.seed,
        detection_rate: result.detection_rate,
        false_detection_chance: result.false_detection_chance,
        avg_false_detections: result.avg_false_detections,
        processes: result.processes.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&report)
        .context("serializing report")
        .map_err(CliError::Internal)?;
    json.push(b'\n');
    write_output(out, &json)?;
    print!("{}", result.summary_table());
    Ok(())
}
