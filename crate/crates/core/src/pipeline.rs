//! End-to-end wiring of one detection process: match features, build the
//! vote space and image, generate propositions, aggregate and verify.

use thiserror::Error;

use crate::aggregation::{detect, DetectInputs, Occurrence};
use crate::config::RunConfig;
use crate::features::{match_features, FeatureSet, MatchError};
use crate::image::GrayImage;
use crate::vote_image::{find_propositions, Proposition, VoteImage};
use crate::votes::{build_vote_space, PatternMeta, VoteError, VoteSpace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Votes(#[from] VoteError),
}

/// Everything up to (and including) the sorted proposition queue. Exposed so
/// callers can render vote images or inspect propositions without running
/// the aggregation loop.
pub struct PreparedProcess {
    pub meta: PatternMeta,
    pub vote_space: VoteSpace,
    pub vote_image: VoteImage,
    pub propositions: Vec<Proposition>,
}

pub fn prepare_process(
    pattern: &FeatureSet,
    scene: &FeatureSet,
    config: &RunConfig,
) -> Result<PreparedProcess, PipelineError> {
    let meta = PatternMeta::from_feature_set(pattern);
    let corrs = match_features(pattern, scene, config.metric)?;
    let vote_space = build_vote_space(pattern, scene, &corrs, &meta, config.hue_max_diff_deg)?;
    let vote_image = VoteImage::rasterize(&vote_space, config.bin_size);
    let propositions = find_propositions(&vote_image, &config.proposition_params());
    Ok(PreparedProcess { meta, vote_space, vote_image, propositions })
}

/// Runs one full (pattern, scene) detection process.
pub fn run_detection(
    pattern: &FeatureSet,
    pattern_image: &GrayImage,
    scene: &FeatureSet,
    scene_image: &GrayImage,
    config: &RunConfig,
) -> Result<Vec<Occurrence>, PipelineError> {
    let mut prepared = prepare_process(pattern, scene, config)?;
    let inputs = DetectInputs {
        meta: &prepared.meta,
        scene_image,
        pattern_image,
    };
    Ok(detect(
        &mut prepared.vote_space,
        &mut prepared.vote_image,
        &prepared.propositions,
        &inputs,
        config,
    ))
}
