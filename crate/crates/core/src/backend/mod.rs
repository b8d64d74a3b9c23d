//! Model backends.
//!
//! The pipeline talks to every model through one of four traits
//! ([`FaceDetector`], [`LandmarkDetector`], [`AsdScorer`],
//! [`SpeechRecognizer`]). In production each trait is served by an external
//! process speaking newline-delimited JSON over stdio ([`client`],
//! [`remote`]); tests use the in-process scripted implementations below or
//! the fixture-driven [`mock`] backend, which also runs as a subprocess.

pub mod client;
pub mod mock;
pub mod protocol;
pub mod remote;
pub mod scratch;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::media::{GrayCrop, RgbFrame};
use crate::types::{BoundingBox, Word};

pub use client::{BackendHandle, SpawnOptions};
pub use protocol::{BackendKind, PROTOCOL_VERSION};
pub use remote::{RemoteAsdScorer, RemoteFaceDetector, RemoteLandmarkDetector, RemoteRecognizer};
pub use scratch::ScratchDir;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("cannot spawn backend `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("backend handshake failed: {0}")]
    Handshake(String),
    #[error("backend speaks protocol {found}, expected {expected}")]
    Version { expected: u32, found: u64 },
    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("backend closed its output")]
    Eof,
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("reply id {got} does not match any pending request")]
    IdMismatch { got: u64 },
    #[error("backend error {code}: {message}")]
    Remote { code: i64, message: String },
    #[error("unexpected result shape for {method}: {reason}")]
    Schema { method: String, reason: String },
    #[error("backend I/O error: {0}")]
    Io(String),
    #[error("backend has been shut down")]
    Closed,
    #[error("{0}")]
    Scripted(String),
}

impl BackendError {
    /// Wraps the error with the frame it concerns.
    pub fn at_frame(self, frame_index: usize) -> BackendError {
        match self {
            BackendError::Schema { method, reason } => {
                BackendError::Schema { method, reason: format!("frame {frame_index}: {reason}") }
            }
            BackendError::Malformed(m) => BackendError::Malformed(format!("frame {frame_index}: {m}")),
            other => other,
        }
    }
}

/// A face as reported by a detector, before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFace {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

pub trait FaceDetector: Send + Sync {
    fn detect(&self, frame_index: usize, frame: &RgbFrame) -> Result<Vec<RawFace>, BackendError>;
}

pub trait LandmarkDetector: Send + Sync {
    fn landmarks(
        &self,
        frame_index: usize,
        frame: &RgbFrame,
        bbox: &BoundingBox,
    ) -> Result<Vec<[f64; 2]>, BackendError>;
}

/// One non-overlapping window of a track, ready for scoring.
#[derive(Debug, Clone, Copy)]
pub struct AsdWindow<'a> {
    pub track_id: u32,
    pub window_index: usize,
    /// Absolute video frame of the first crop.
    pub first_frame: usize,
    pub crop_size: u32,
    pub crops: &'a [GrayCrop],
    /// `rows_per_frame * crops.len()` rows of 13 coefficients.
    pub mfcc: &'a [[f32; 13]],
}

pub trait AsdScorer: Send + Sync {
    /// Preferred crop side in pixels.
    fn crop_size(&self) -> u32 {
        112
    }

    /// One score per frame of the window.
    fn score(&self, window: &AsdWindow<'_>) -> Result<Vec<f64>, BackendError>;
}

/// Recognizer output before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTranscript {
    pub text: String,
    pub language: Option<String>,
    pub words: Vec<Word>,
}

pub trait SpeechRecognizer: Send + Sync {
    /// `audio` is 16 kHz mono; `language` is an ISO code or `"auto"`.
    fn transcribe(&self, clip_name: &str, audio: &[f32], language: &str) -> Result<RawTranscript, BackendError>;
}

impl<F> FaceDetector for F
where
    F: Fn(usize, &RgbFrame) -> Result<Vec<RawFace>, BackendError> + Send + Sync,
{
    fn detect(&self, frame_index: usize, frame: &RgbFrame) -> Result<Vec<RawFace>, BackendError> {
        self(frame_index, frame)
    }
}

impl<F> AsdScorer for F
where
    F: Fn(&AsdWindow<'_>) -> Result<Vec<f64>, BackendError> + Send + Sync,
{
    fn score(&self, window: &AsdWindow<'_>) -> Result<Vec<f64>, BackendError> {
        self(window)
    }
}

impl<F> SpeechRecognizer for F
where
    F: Fn(&str, &[f32], &str) -> Result<RawTranscript, BackendError> + Send + Sync,
{
    fn transcribe(&self, clip_name: &str, audio: &[f32], language: &str) -> Result<RawTranscript, BackendError> {
        self(clip_name, audio, language)
    }
}

impl<F> LandmarkDetector for F
where
    F: Fn(usize, &RgbFrame, &BoundingBox) -> Result<Vec<[f64; 2]>, BackendError> + Send + Sync,
{
    fn landmarks(
        &self,
        frame_index: usize,
        frame: &RgbFrame,
        bbox: &BoundingBox,
    ) -> Result<Vec<[f64; 2]>, BackendError> {
        self(frame_index, frame, bbox)
    }
}

/// In-process face detector answering from a per-frame table.
#[derive(Debug, Clone, Default)]
pub struct ScriptedFaces {
    pub frames: HashMap<usize, Vec<RawFace>>,
    pub fail_frames: HashSet<usize>,
}

impl FaceDetector for ScriptedFaces {
    fn detect(&self, frame_index: usize, _frame: &RgbFrame) -> Result<Vec<RawFace>, BackendError> {
        if self.fail_frames.contains(&frame_index) {
            return Err(BackendError::Scripted(format!("scripted failure at frame {frame_index}")));
        }
        Ok(self.frames.get(&frame_index).cloned().unwrap_or_default())
    }
}
