use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_wav, write_wav_pcm16, Audio, FrameSource, MediaError, RgbFrame, VideoInfo, TARGET_SAMPLE_RATE};

pub const RAW_META_FILE: &str = "video.json";
const FRAMES_FILE: &str = "frames.rgb";
const AUDIO_FILE: &str = "audio.wav";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVideoMeta {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
}

/// Directory holding `video.json`, concatenated RGB24 frames in
/// `frames.rgb` and an optional `audio.wav`.
pub struct RawVideo {
    dir: PathBuf,
    info: VideoInfo,
    frames: File,
}

impl RawVideo {
    pub fn open(dir: &Path) -> Result<Self, MediaError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| MediaError::Io { path: p, source }
        };
        let meta_path = dir.join(RAW_META_FILE);
        let meta: RawVideoMeta = serde_json::from_slice(&fs::read(&meta_path).map_err(io(&meta_path))?)
            .map_err(|e| MediaError::Invalid { path: meta_path.clone(), reason: e.to_string() })?;
        let frames_path = dir.join(FRAMES_FILE);
        let frames = File::open(&frames_path).map_err(io(&frames_path))?;
        let expected = meta.frame_count as u64 * meta.width as u64 * meta.height as u64 * 3;
        let actual = frames.metadata().map_err(io(&frames_path))?.len();
        if actual != expected {
            return Err(MediaError::Invalid {
                path: frames_path,
                reason: format!("expected {expected} bytes, found {actual}"),
            });
        }
        let info = VideoInfo {
            fps: meta.fps,
            frame_count: meta.frame_count,
            width: meta.width,
            height: meta.height,
            audio_sample_rate: TARGET_SAMPLE_RATE,
        };
        Ok(RawVideo { dir: dir.to_path_buf(), info, frames })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl FrameSource for RawVideo {
    fn info(&self) -> &VideoInfo {
        &self.info
    }

    fn frame(&mut self, index: usize) -> Result<RgbFrame, MediaError> {
        if index >= self.info.frame_count {
            return Err(MediaError::FrameOutOfRange { index, count: self.info.frame_count });
        }
        let size = self.info.width as usize * self.info.height as usize * 3;
        let mut data = vec![0u8; size];
        let path = self.dir.join(FRAMES_FILE);
        let io = |source| MediaError::Io { path: path.clone(), source };
        self.frames.seek(SeekFrom::Start((index * size) as u64)).map_err(io)?;
        self.frames.read_exact(&mut data).map_err(io)?;
        Ok(RgbFrame::new(self.info.width, self.info.height, data))
    }

    fn audio(&mut self) -> Result<Audio, MediaError> {
        let path = self.dir.join(AUDIO_FILE);
        if path.is_file() {
            Ok(read_wav(&path)?.to_16k())
        } else {
            let n = (self.info.frame_count as f64 / self.info.fps * TARGET_SAMPLE_RATE as f64).round() as usize;
            Ok(Audio::silence(TARGET_SAMPLE_RATE, n))
        }
    }
}

/// Streams frames into a raw video directory.
pub struct RawVideoWriter {
    dir: PathBuf,
    meta: RawVideoMeta,
    frames: BufWriter<File>,
}

impl RawVideoWriter {
    pub fn create(dir: &Path, fps: f64, width: u32, height: u32) -> Result<Self, MediaError> {
        let io = |source| MediaError::Io { path: dir.to_path_buf(), source };
        fs::create_dir_all(dir).map_err(io)?;
        let frames = File::create(dir.join(FRAMES_FILE)).map_err(io)?;
        Ok(RawVideoWriter {
            dir: dir.to_path_buf(),
            meta: RawVideoMeta { fps, width, height, frame_count: 0 },
            frames: BufWriter::new(frames),
        })
    }

    pub fn push(&mut self, frame: &RgbFrame) -> Result<(), MediaError> {
        if frame.width != self.meta.width || frame.height != self.meta.height {
            return Err(MediaError::Invalid {
                path: self.dir.clone(),
                reason: format!(
                    "frame is {}x{}, video is {}x{}",
                    frame.width, frame.height, self.meta.width, self.meta.height
                ),
            });
        }
        self.frames.write_all(&frame.data).map_err(|source| MediaError::Io { path: self.dir.clone(), source })?;
        self.meta.frame_count += 1;
        Ok(())
    }

    pub fn finish(mut self, audio: Option<&Audio>) -> Result<PathBuf, MediaError> {
        let io = |source| MediaError::Io { path: self.dir.clone(), source };
        self.frames.flush().map_err(io)?;
        if let Some(audio) = audio {
            write_wav_pcm16(&self.dir.join(AUDIO_FILE), audio)?;
        }
        let meta = serde_json::to_vec_pretty(&self.meta).expect("meta serializes");
        fs::write(self.dir.join(RAW_META_FILE), meta)
            .map_err(|source| MediaError::Io { path: self.dir.clone(), source })?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read_frames_and_audio() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip");
        let mut w = RawVideoWriter::create(&path, 25.0, 4, 3).unwrap();
        for v in 0..5u8 {
            w.push(&RgbFrame::solid(4, 3, [v, v, v])).unwrap();
        }
        w.finish(Some(&Audio::new(16000, vec![0.25; 3200]))).unwrap();
        let mut video = RawVideo::open(&path).unwrap();
        assert_eq!(video.info().frame_count, 5);
        assert_eq!(video.frame(3).unwrap().pixel(1, 1), [3, 3, 3]);
        assert_eq!(video.frame(0).unwrap().pixel(0, 0), [0, 0, 0]);
        assert!(video.frame(5).is_err());
        assert_eq!(video.audio().unwrap().samples.len(), 3200);
    }

    #[test]
    fn missing_audio_reads_as_silence() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RawVideoWriter::create(dir.path(), 25.0, 2, 2).unwrap();
        for _ in 0..25 {
            w.push(&RgbFrame::solid(2, 2, [1, 2, 3])).unwrap();
        }
        w.finish(None).unwrap();
        let audio = RawVideo::open(dir.path()).unwrap().audio().unwrap();
        assert_eq!(audio.samples.len(), 16000);
        assert!(audio.samples.iter().all(|&s| s == 0.0));
    }
}
