//! Trait implementations that forward to a backend process. Payloads go
//! through files in the scratch directory; only paths travel on the wire.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::protocol::*;
use super::scratch::{write_gray_crops, write_mfcc, write_png, write_wav16k};
use super::{
    AsdScorer, AsdWindow, BackendError, BackendHandle, FaceDetector, LandmarkDetector, RawFace, RawTranscript,
    SpeechRecognizer,
};
use crate::media::{MediaError, RgbFrame};
use crate::types::BoundingBox;

fn media_err(e: MediaError) -> BackendError {
    BackendError::Io(e.to_string())
}

fn path_str(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Hands out one fresh subdirectory per call, so concurrent callers (other
/// videos, other window sizes) never overwrite each other's payloads.
struct CallDirs {
    root: PathBuf,
    next: AtomicU64,
}

impl CallDirs {
    fn new(root: PathBuf) -> Self {
        CallDirs { root, next: AtomicU64::new(0) }
    }

    fn enter(&self) -> Result<CallDir, BackendError> {
        let path = self.root.join(format!("q{}", self.next.fetch_add(1, Ordering::SeqCst)));
        std::fs::create_dir_all(&path).map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))?;
        Ok(CallDir(path))
    }
}

struct CallDir(PathBuf);

impl CallDir {
    fn join(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for CallDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

pub struct RemoteFaceDetector {
    handle: Arc<BackendHandle>,
    scratch: CallDirs,
}

impl RemoteFaceDetector {
    pub fn new(handle: Arc<BackendHandle>, scratch: impl Into<PathBuf>) -> Self {
        RemoteFaceDetector { handle, scratch: CallDirs::new(scratch.into()) }
    }
}

impl FaceDetector for RemoteFaceDetector {
    fn detect(&self, frame_index: usize, frame: &RgbFrame) -> Result<Vec<RawFace>, BackendError> {
        let dir = self.scratch.enter()?;
        let path = dir.join(&format!("f{frame_index:06}.png"));
        write_png(&path, frame).map_err(media_err)?;
        let result: Result<DetectFacesResult, _> = self
            .handle
            .call(METHOD_DETECT_FACES, &DetectFacesParams { image_path: path_str(&path) })
            .map_err(|e| e.at_frame(frame_index));
        Ok(result?.faces.into_iter().map(|f| RawFace { bbox: f.bbox, confidence: f.confidence }).collect())
    }
}

pub struct RemoteLandmarkDetector {
    handle: Arc<BackendHandle>,
    scratch: CallDirs,
}

impl RemoteLandmarkDetector {
    pub fn new(handle: Arc<BackendHandle>, scratch: impl Into<PathBuf>) -> Self {
        RemoteLandmarkDetector { handle, scratch: CallDirs::new(scratch.into()) }
    }
}

impl LandmarkDetector for RemoteLandmarkDetector {
    fn landmarks(
        &self,
        frame_index: usize,
        frame: &RgbFrame,
        bbox: &BoundingBox,
    ) -> Result<Vec<[f64; 2]>, BackendError> {
        let dir = self.scratch.enter()?;
        let path = dir.join(&format!("l{frame_index:06}.png"));
        write_png(&path, frame).map_err(media_err)?;
        let result: Result<DetectLandmarksResult, _> = self
            .handle
            .call(METHOD_DETECT_LANDMARKS, &DetectLandmarksParams { image_path: path_str(&path), bbox: *bbox })
            .map_err(|e| e.at_frame(frame_index));
        Ok(result?.landmarks)
    }
}

pub struct RemoteAsdScorer {
    handle: Arc<BackendHandle>,
    scratch: CallDirs,
    crop_size: u32,
}

impl RemoteAsdScorer {
    /// Uses the `crop_size` capability when the backend advertises one.
    pub fn new(handle: Arc<BackendHandle>, scratch: impl Into<PathBuf>) -> Self {
        let crop_size =
            handle.capabilities().get("crop_size").and_then(serde_json::Value::as_u64).map_or(112, |n| n as u32);
        RemoteAsdScorer { handle, scratch: CallDirs::new(scratch.into()), crop_size }
    }
}

impl AsdScorer for RemoteAsdScorer {
    fn crop_size(&self) -> u32 {
        self.crop_size
    }

    fn score(&self, window: &AsdWindow<'_>) -> Result<Vec<f64>, BackendError> {
        let stem = format!("t{}_w{}", window.track_id, window.window_index);
        let dir = self.scratch.enter()?;
        let crops_path = dir.join(&format!("{stem}.gray"));
        let mfcc_path = dir.join(&format!("{stem}.mfcc"));
        write_gray_crops(&crops_path, window.crops).map_err(media_err)?;
        write_mfcc(&mfcc_path, window.mfcc).map_err(media_err)?;
        let params = ScoreAsdParams {
            crops_path: path_str(&crops_path),
            n_frames: window.crops.len(),
            crop_size: window.crop_size,
            mfcc_path: path_str(&mfcc_path),
            n_mfcc_rows: window.mfcc.len(),
            first_frame: Some(window.first_frame),
            track_id: Some(window.track_id),
        };
        let result: Result<ScoreAsdResult, _> = self.handle.call(METHOD_SCORE_ASD, &params);
        drop(dir);
        let scores = result?.scores;
        if scores.len() != window.crops.len() {
            return Err(BackendError::Schema {
                method: METHOD_SCORE_ASD.into(),
                reason: format!(
                    "track {} window {}: {} scores for {} frames",
                    window.track_id,
                    window.window_index,
                    scores.len(),
                    window.crops.len()
                ),
            });
        }
        Ok(scores)
    }
}

pub struct RemoteRecognizer {
    handle: Arc<BackendHandle>,
    scratch: PathBuf,
    counter: AtomicU64,
}

impl RemoteRecognizer {
    pub fn new(handle: Arc<BackendHandle>, scratch: impl Into<PathBuf>) -> Self {
        RemoteRecognizer { handle, scratch: scratch.into(), counter: AtomicU64::new(0) }
    }
}

impl SpeechRecognizer for RemoteRecognizer {
    fn transcribe(&self, clip_name: &str, audio: &[f32], language: &str) -> Result<RawTranscript, BackendError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let safe: String = clip_name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        let path = self.scratch.join(format!("c{n}_{safe}.wav"));
        write_wav16k(&path, audio).map_err(media_err)?;
        let result: Result<TranscribeResult, _> = self
            .handle
            .call(METHOD_TRANSCRIBE, &TranscribeParams { audio_path: path_str(&path), language: language.to_string() });
        let _ = std::fs::remove_file(&path);
        let r = result?;
        Ok(RawTranscript { text: r.text, language: r.language, words: r.words.into_iter().map(Into::into).collect() })
    }
}
