//! Decoded media: RGB frames, 16 kHz mono audio and the sources that
//! produce them.
//!
//! Two source kinds exist. A *raw video directory* (`video.json`,
//! `frames.rgb`, optional `audio.wav`) is read directly and is what the
//! fixtures and examples use. Anything else is decoded by an external
//! `ffmpeg`/`ffprobe` subprocess.

mod audio;
mod ffmpeg;
mod frame;
mod raw;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use audio::{read_wav, resample_linear, write_wav_pcm16, Audio, TARGET_SAMPLE_RATE};
pub use ffmpeg::{ffmpeg_available, write_clip_mp4, FfmpegVideo};
pub use frame::{GrayCrop, RgbFrame};
pub use raw::{RawVideo, RawVideoMeta, RawVideoWriter, RAW_META_FILE};

use crate::types::VideoAsset;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid media {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("frame {index} out of range (video has {count} frames)")]
    FrameOutOfRange { index: usize, count: usize },
    #[error("decoder failed: {0}")]
    Decoder(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoInfo {
    pub fps: f64,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    /// Rate of the audio as delivered by [`FrameSource::audio`].
    pub audio_sample_rate: u32,
}

impl VideoInfo {
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Random-access frame provider. Implementations are optimised for
/// increasing indices; going backwards may be expensive.
pub trait FrameSource {
    fn info(&self) -> &VideoInfo;

    fn frame(&mut self, index: usize) -> Result<RgbFrame, MediaError>;

    /// Whole audio track, mono, resampled to 16 kHz.
    fn audio(&mut self) -> Result<Audio, MediaError>;
}

/// Everything held in memory; used by tests and examples.
#[derive(Debug, Clone)]
pub struct MemoryVideo {
    pub info: VideoInfo,
    pub frames: Vec<RgbFrame>,
    pub audio: Audio,
}

impl MemoryVideo {
    pub fn new(fps: f64, frames: Vec<RgbFrame>, audio: Audio) -> Self {
        let (width, height) = frames.first().map(|f| (f.width, f.height)).unwrap_or((0, 0));
        let info = VideoInfo { fps, frame_count: frames.len(), width, height, audio_sample_rate: audio.sample_rate };
        MemoryVideo { info, frames, audio }
    }
}

impl FrameSource for MemoryVideo {
    fn info(&self) -> &VideoInfo {
        &self.info
    }

    fn frame(&mut self, index: usize) -> Result<RgbFrame, MediaError> {
        self.frames.get(index).cloned().ok_or(MediaError::FrameOutOfRange { index, count: self.frames.len() })
    }

    fn audio(&mut self) -> Result<Audio, MediaError> {
        Ok(self.audio.to_16k())
    }
}

/// Stable id from the path and its size on disk (directories sum their files).
pub fn video_id(path: &Path) -> Result<String, MediaError> {
    let io = |source| MediaError::Io { path: path.to_path_buf(), source };
    let meta = std::fs::metadata(path).map_err(io)?;
    let size = if meta.is_dir() {
        let mut total = 0u64;
        for entry in std::fs::read_dir(path).map_err(io)? {
            let entry = entry.map_err(io)?;
            total += entry.metadata().map_err(io)?.len();
        }
        total
    } else {
        meta.len()
    };
    let canonical = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string_lossy().as_bytes());
    hasher.update(b":");
    hasher.update(size.to_le_bytes());
    Ok(hex::encode(&hasher.finalize()[..8]))
}

/// Opens a raw video directory or, for any other path, an ffmpeg decoder.
pub fn open_video(path: &Path) -> Result<Box<dyn FrameSource + Send>, MediaError> {
    if path.join(RAW_META_FILE).is_file() {
        Ok(Box::new(RawVideo::open(path)?))
    } else {
        Ok(Box::new(FfmpegVideo::open(path)?))
    }
}

/// Builds the [`VideoAsset`] record for an opened source.
pub fn asset_for(path: &Path, source: &dyn FrameSource) -> Result<VideoAsset, MediaError> {
    let info = source.info();
    let asset = VideoAsset {
        id: video_id(path)?,
        path: path.to_path_buf(),
        fps: info.fps,
        frame_count: info.frame_count,
        width: info.width,
        height: info.height,
        audio_sample_rate: info.audio_sample_rate,
    };
    asset.validate().map_err(|reason| MediaError::Invalid { path: path.to_path_buf(), reason })?;
    Ok(asset)
}
