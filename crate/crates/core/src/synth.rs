//! Synthetic media and scripted-backend fixtures for examples and tests.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::media::{Audio, MediaError, MemoryVideo, RawVideoWriter, RgbFrame, TARGET_SAMPLE_RATE};
use crate::types::BoundingBox;

/// A face drawn as a filled rectangle over a frame range.
#[derive(Debug, Clone)]
pub struct PaintedFace {
    pub frames: Range<usize>,
    pub bbox: BoundingBox,
    pub color: [u8; 3],
}

/// Solid-colour scenes, one `(length, colour)` per scene, with faces
/// painted on top.
pub fn scene_video(
    fps: f64,
    width: u32,
    height: u32,
    scenes: &[(usize, [u8; 3])],
    faces: &[PaintedFace],
    audio: Audio,
) -> MemoryVideo {
    let mut frames = Vec::new();
    for &(len, color) in scenes {
        for _ in 0..len {
            frames.push(RgbFrame::solid(width, height, color));
        }
    }
    for face in faces {
        let b = face.bbox;
        for f in face.frames.clone() {
            if let Some(frame) = frames.get_mut(f) {
                frame.fill_rect(b.x1 as u32, b.y1 as u32, b.x2 as u32, b.y2 as u32, face.color);
            }
        }
    }
    MemoryVideo::new(fps, frames, audio)
}

/// Writes a raw video directory and returns its path.
pub fn write_raw_video(dir: &Path, video: &MemoryVideo) -> Result<PathBuf, MediaError> {
    let mut w = RawVideoWriter::create(dir, video.info.fps, video.info.width, video.info.height)?;
    for f in &video.frames {
        w.push(f)?;
    }
    w.finish(Some(&video.audio))
}

pub fn sine(freq: f64, seconds: f64, amplitude: f32) -> Audio {
    let n = (seconds * TARGET_SAMPLE_RATE as f64).round() as usize;
    let sr = TARGET_SAMPLE_RATE as f64;
    Audio::new(
        TARGET_SAMPLE_RATE,
        (0..n).map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin() as f32).collect(),
    )
}

/// Shell command line running the scripted backend of `bin`.
pub fn mock_command(bin: &Path, kind: &str, fixture: &Path) -> String {
    let parts = [
        bin.to_string_lossy().into_owned(),
        "mock-backend".into(),
        "--kind".into(),
        kind.into(),
        "--fixture".into(),
        fixture.to_string_lossy().into_owned(),
    ];
    shlex::try_join(parts.iter().map(String::as_str)).expect("no NUL bytes in paths")
}

/// The reference end-to-end fixture: a 250-frame video at 25 fps whose
/// second scene (frames 100..250) shows one face that speaks on frames
/// 150..200, plus the scripted backend fixtures describing it.
#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub video: PathBuf,
    pub face_fixture: PathBuf,
    pub asd_fixture: PathBuf,
    pub asr_fixture: PathBuf,
    pub face_box: BoundingBox,
    pub speaking: Range<usize>,
    pub scene: Range<usize>,
    pub text: &'static str,
}

pub const DEMO_FPS: f64 = 25.0;

pub fn demo_corpus(dir: &Path) -> Result<DemoCorpus, MediaError> {
    std::fs::create_dir_all(dir).map_err(|source| MediaError::Io { path: dir.to_path_buf(), source })?;
    let face_box = BoundingBox::new(36.0, 16.0, 60.0, 48.0);
    let scene = 100..250;
    let speaking = 150..200;
    let video = scene_video(
        DEMO_FPS,
        96,
        72,
        &[(100, [30, 40, 160]), (150, [40, 150, 60])],
        &[PaintedFace { frames: scene.clone(), bbox: face_box, color: [220, 170, 140] }],
        sine(220.0, 10.0, 0.3),
    );
    let path = write_raw_video(&dir.join("demo_video"), &video)?;

    let write = |name: &str, v: serde_json::Value| -> Result<PathBuf, MediaError> {
        let p = dir.join(name);
        std::fs::write(&p, serde_json::to_vec_pretty(&v).expect("fixture serializes"))
            .map_err(|source| MediaError::Io { path: p.clone(), source })?;
        Ok(p)
    };
    let face_fixture = write(
        "faces.json",
        json!({ "faces": { "ranges": [ { "start": scene.start, "end": scene.end,
            "faces": [ { "bbox": face_box, "confidence": 0.97 } ] } ] } }),
    )?;
    let asd_fixture = write(
        "asd.json",
        json!({ "asd": { "mode": "ranges", "default": -1.0,
            "ranges": [ { "start": speaking.start, "end": speaking.end, "score": 1.0 } ] } }),
    )?;
    let text = "hola mundo";
    let asr_fixture = write(
        "asr.json",
        json!({ "asr": { "text": text, "language": "es",
            "words": [ { "w": "hola", "t0": 0.50, "t1": 0.90 }, { "w": "mundo", "t0": 1.00, "t1": 1.60 } ] } }),
    )?;
    Ok(DemoCorpus { video: path, face_fixture, asd_fixture, asr_fixture, face_box, speaking, scene, text })
}
