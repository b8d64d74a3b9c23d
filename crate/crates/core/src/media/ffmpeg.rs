use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use super::{Audio, FrameSource, MediaError, RgbFrame, VideoInfo, TARGET_SAMPLE_RATE};

pub fn ffmpeg_available() -> bool {
    Command::new("ffmpeg")
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn parse_rate(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

/// Decodes with an `ffmpeg` child streaming raw RGB24 frames. Seeking
/// backwards restarts the decoder.
pub struct FfmpegVideo {
    path: PathBuf,
    info: VideoInfo,
    decoder: Option<(Child, ChildStdout)>,
    cursor: usize,
}

impl FfmpegVideo {
    pub fn open(path: &Path) -> Result<Self, MediaError> {
        let output = Command::new("ffprobe")
            .args(["-v", "error", "-select_streams", "v:0"])
            .args(["-show_entries", "stream=width,height,avg_frame_rate,r_frame_rate,nb_frames:format=duration"])
            .args(["-of", "json"])
            .arg(path)
            .output()
            .map_err(|e| MediaError::Decoder(format!("cannot run ffprobe: {e}")))?;
        if !output.status.success() {
            return Err(MediaError::Invalid {
                path: path.to_path_buf(),
                reason: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let probe: serde_json::Value = serde_json::from_slice(&output.stdout)
            .map_err(|e| MediaError::Decoder(format!("unreadable ffprobe output: {e}")))?;
        let invalid = |reason: &str| MediaError::Invalid { path: path.to_path_buf(), reason: reason.to_string() };
        let stream = probe["streams"].get(0).ok_or_else(|| invalid("no video stream"))?;
        let width = stream["width"].as_u64().ok_or_else(|| invalid("no width"))? as u32;
        let height = stream["height"].as_u64().ok_or_else(|| invalid("no height"))? as u32;
        let fps = stream["avg_frame_rate"]
            .as_str()
            .and_then(parse_rate)
            .filter(|f| *f > 0.0)
            .or_else(|| stream["r_frame_rate"].as_str().and_then(parse_rate))
            .filter(|f| *f > 0.0)
            .ok_or_else(|| invalid("no frame rate"))?;
        let frame_count = stream["nb_frames"]
            .as_str()
            .and_then(|s| s.parse::<usize>().ok())
            .or_else(|| {
                let duration: f64 = probe["format"]["duration"].as_str()?.parse().ok()?;
                Some((duration * fps).round() as usize)
            })
            .ok_or_else(|| invalid("unknown frame count"))?;
        Ok(FfmpegVideo {
            path: path.to_path_buf(),
            info: VideoInfo { fps, frame_count, width, height, audio_sample_rate: TARGET_SAMPLE_RATE },
            decoder: None,
            cursor: 0,
        })
    }

    fn restart(&mut self) -> Result<(), MediaError> {
        if let Some((mut child, _)) = self.decoder.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(&self.path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| MediaError::Decoder(format!("cannot run ffmpeg: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        self.decoder = Some((child, stdout));
        self.cursor = 0;
        Ok(())
    }

    fn read_next(&mut self) -> Result<Vec<u8>, MediaError> {
        let size = self.info.width as usize * self.info.height as usize * 3;
        let mut buf = vec![0u8; size];
        let (_, stdout) = self.decoder.as_mut().expect("decoder running");
        stdout.read_exact(&mut buf).map_err(|e| MediaError::Decoder(format!("frame {}: {e}", self.cursor)))?;
        self.cursor += 1;
        Ok(buf)
    }
}

impl Drop for FfmpegVideo {
    fn drop(&mut self) {
        if let Some((mut child, _)) = self.decoder.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl FrameSource for FfmpegVideo {
    fn info(&self) -> &VideoInfo {
        &self.info
    }

    fn frame(&mut self, index: usize) -> Result<RgbFrame, MediaError> {
        if index >= self.info.frame_count {
            return Err(MediaError::FrameOutOfRange { index, count: self.info.frame_count });
        }
        if self.decoder.is_none() || index < self.cursor {
            self.restart()?;
        }
        while self.cursor < index {
            self.read_next()?;
        }
        let data = self.read_next()?;
        Ok(RgbFrame::new(self.info.width, self.info.height, data))
    }

    fn audio(&mut self) -> Result<Audio, MediaError> {
        let output = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(&self.path)
            .args(["-vn", "-ac", "1", "-ar", "16000", "-f", "s16le", "-"])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| MediaError::Decoder(format!("cannot run ffmpeg: {e}")))?;
        if !output.status.success() {
            return Err(MediaError::Decoder(String::from_utf8_lossy(&output.stderr).trim().to_string()));
        }
        let samples =
            output.stdout.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0).collect();
        Ok(Audio::new(TARGET_SAMPLE_RATE, samples))
    }
}

/// Encodes frames `[start, end)` of `source` plus matching audio into an
/// H.264/AAC MP4 for browser playback.
pub fn write_clip_mp4(
    source: &mut dyn FrameSource,
    audio: &Audio,
    start: usize,
    end: usize,
    out: &Path,
) -> Result<(), MediaError> {
    let info = source.info().clone();
    let scratch = out.with_extension("clip.wav");
    let clip_audio = Audio::new(audio.sample_rate, audio.segment(start as f64 / info.fps, end as f64 / info.fps));
    super::write_wav_pcm16(&scratch, &clip_audio)?;
    let mut child = Command::new("ffmpeg")
        .args(["-v", "error", "-y", "-f", "rawvideo", "-pix_fmt", "rgb24"])
        .args(["-s", &format!("{}x{}", info.width, info.height)])
        .args(["-r", &info.fps.to_string(), "-i", "-", "-i"])
        .arg(&scratch)
        .args(["-c:v", "libx264", "-pix_fmt", "yuv420p", "-c:a", "aac", "-shortest"])
        .arg(out)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| MediaError::Decoder(format!("cannot run ffmpeg: {e}")))?;
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        for i in start..end {
            let frame = source.frame(i)?;
            stdin.write_all(&frame.data).map_err(|e| MediaError::Decoder(format!("encoder closed: {e}")))?;
        }
    }
    let output = child.wait_with_output().map_err(|e| MediaError::Decoder(e.to_string()))?;
    let _ = std::fs::remove_file(&scratch);
    if !output.status.success() {
        return Err(MediaError::Decoder(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rates_parse() {
        assert_eq!(parse_rate("25/1"), Some(25.0));
        assert_eq!(parse_rate("30000/1001").map(|r| (r * 1000.0).round()), Some(29970.0));
        assert_eq!(parse_rate("0/0"), None);
        assert_eq!(parse_rate("24"), Some(24.0));
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(FfmpegVideo::open(Path::new("/nonexistent/video.mp4")).is_err());
    }
}
