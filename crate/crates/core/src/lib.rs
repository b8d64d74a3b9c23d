//! Semi-automatic annotation of audio-visual speech corpora.
//!
//! The pipeline turns long-form videos into reviewable speech samples:
//!
//! 1. [`scene`] segments a video by HSV content change and drops scenes
//!    whose first frame shows nobody.
//! 2. [`tracking`] detects faces frame by frame and links them into
//!    per-person tracks by bounding-box proximity.
//! 3. [`asd`] scores each track for speaking activity in non-overlapping
//!    windows, smooths the scores, thresholds them and trims the scene.
//! 4. [`transcription`] attaches word-aligned transcripts to each clip.
//! 5. [`store`] persists candidates and the annotator's decisions, and
//!    [`service`] serves them over HTTP to the review UI.
//!
//! Heavy models (face detector, landmark aligner, speaker scorer, speech
//! recognizer) run out of process behind the line-delimited JSON protocol in
//! [`backend`]. [`dataset`] synthesises training corpora for the speaker
//! scorer from single-speaker clips and [`metrics`] / [`eval`] evaluate it.

pub mod asd;
pub mod backend;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod media;
pub mod metrics;
pub mod mfcc;
pub mod pipeline;
pub mod scene;
pub mod service;
pub mod store;
pub mod synth;
pub mod tracking;
pub mod transcription;
pub mod types;

pub use config::{parse_config, PipelineConfig};
pub use types::{
    BoundingBox, CandidateSample, FaceObservation, FaceTrack, SceneSegment, ScoreSeries, Status, Transcription,
    VideoAsset, Word,
};
