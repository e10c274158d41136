//! Multi-object, multi-instance detection from local-feature
//! correspondences.
//!
//! The pipeline turns descriptor matches into center-predicting votes,
//! rasterizes their adjacency weights into a vote image, extracts sorted
//! object-center propositions, and aggregates votes around each proposition
//! in two passes (local disc, then bounded flood fill) with unique filtering
//! and a cascade of verification filters. Accepted occurrences erase their
//! votes so weaker instances surface on later iterations.
//!
//! Modules follow the pipeline stages:
//!
//! - [`features`] — keypoint file IO and brute-force descriptor matching
//! - [`votes`] — correspondence filtering and vote-space construction
//! - [`vote_image`] — rasterization, propositions, erasure, rendering
//! - [`aggregation`] — the two-pass gather loop producing occurrences
//! - [`filters`] — the six cascade verification filters
//! - [`harness`] — synthetic ground-truth scenes and detection metrics
//! - [`pipeline`] — one-call wiring of a full detection process

pub mod aggregation;
pub mod config;
pub mod features;
pub mod filters;
pub mod geom;
pub mod harness;
pub mod image;
pub mod pipeline;
pub mod vote_image;
pub mod votes;

pub use aggregation::{detect, estimate_pose, flood_gather, gather_local, unique_filter, Occurrence, Pose};
pub use config::RunConfig;
pub use features::{load_feature_set, match_features, save_feature_set, Correspondence, FeatureSet, Keypoint, Metric};
pub use filters::{run_cascade, CascadeConfig, Pass};
pub use geom::{Point, Quad};
pub use image::{load_pgm, save_pgm, GrayImage};
pub use pipeline::{prepare_process, run_detection};
pub use vote_image::{erase_region, find_propositions, render_gray, Proposition, VoteImage};
pub use votes::{build_vote_space, distance_threshold, PatternMeta, Vote, VoteSpace};
