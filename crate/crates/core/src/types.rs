//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Number of points produced by the landmark aligner for one face.
pub const LANDMARK_COUNT: usize = 68;

/// Audio sample rates accepted after ingest normalization.
pub const SUPPORTED_SAMPLE_RATES: [u32; 5] = [8000, 16000, 22050, 44100, 48000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub id: String,
    pub path: PathBuf,
    pub fps: f64,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub audio_sample_rate: u32,
}

impl VideoAsset {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        if self.frame_count == 0 {
            return Err("video has no frames".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err(format!("invalid frame size {}x{}", self.width, self.height));
        }
        if !SUPPORTED_SAMPLE_RATES.contains(&self.audio_sample_rate) {
            return Err(format!("unsupported audio sample rate {}", self.audio_sample_rate));
        }
        Ok(())
    }

    pub fn frame_to_seconds(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }
}

/// Axis-aligned box in pixels, origin top-left. Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox { x1: v[0], y1: v[1], x2: v[2], y2: v[3] }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Checks `x1 < x2`, `y1 < y2` and containment in a `width`×`height` frame.
    pub fn is_valid_in(&self, width: u32, height: u32) -> bool {
        let (w, h) = (width as f64, height as f64);
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
            && self.x1 >= 0.0
            && self.y1 >= 0.0
            && self.x2 <= w
            && self.y2 <= h
    }

    /// Intersects the box with the frame. Returns `None` if nothing is left.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let (w, h) = (width as f64, height as f64);
        let b = BoundingBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }

    /// Linear interpolation between two boxes, `t` in [0, 1].
    pub fn lerp(&self, other: &BoundingBox, t: f64) -> BoundingBox {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        BoundingBox {
            x1: mix(self.x1, other.x1),
            y1: mix(self.y1, other.y1),
            x2: mix(self.x2, other.x2),
            y2: mix(self.y2, other.y2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTrack {
    pub track_id: u32,
    pub video_id: String,
    pub scene_index: usize,
    pub observations: Vec<FaceObservation>,
}

impl FaceTrack {
    pub fn first_frame(&self) -> Option<usize> {
        self.observations.first().map(|o| o.frame_index)
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.observations.last().map(|o| o.frame_index)
    }

    /// Half-open frame span `[first, last + 1)` covered by the track.
    pub fn span(&self) -> Option<(usize, usize)> {
        Some((self.first_frame()?, self.last_frame()? + 1))
    }

    /// One box per frame of the span; frames skipped by the detector are
    /// linearly interpolated between the surrounding observations.
    pub fn dense_boxes(&self) -> Vec<BoundingBox> {
        let mut out = Vec::new();
        for pair in self.observations.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let steps = b.frame_index - a.frame_index;
            for k in 0..steps {
                out.push(a.bbox.lerp(&b.bbox, k as f64 / steps as f64));
            }
        }
        if let Some(last) = self.observations.last() {
            out.push(last.bbox);
        }
        out
    }

    /// Checks ordering, the gap bound and containment in `scene`.
    pub fn validate(&self, max_track_gap: usize, scene: &SceneSegment) -> Result<(), String> {
        if self.observations.is_empty() {
            return Err(format!("track {} has no observations", self.track_id));
        }
        for pair in self.observations.windows(2) {
            let (a, b) = (pair[0].frame_index, pair[1].frame_index);
            if b <= a {
                return Err(format!("track {}: frame {b} does not follow {a}", self.track_id));
            }
            if b - a > max_track_gap {
                return Err(format!("track {}: gap {a}->{b} exceeds {max_track_gap}", self.track_id));
            }
        }
        let (first, end) = self.span().expect("non-empty");
        if first < scene.start_frame || end > scene.end_frame {
            return Err(format!(
                "track {} span [{first},{end}) leaves scene [{},{})",
                self.track_id, scene.start_frame, scene.end_frame
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSegment {
    pub scene_index: usize,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub cut_score: f64,
}

impl SceneSegment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..self.end_frame).contains(&frame)
    }
}

/// Per-frame speaking scores for one track, starting at `first_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub track_id: u32,
    pub first_frame: usize,
    pub values: Vec<f64>,
}

impl ScoreSeries {
    pub fn end_frame(&self) -> usize {
        self.first_frame + self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    #[serde(alias = "w")]
    pub word: String,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub text: String,
    /// ISO-639-1 code, or `auto-detected:<code>` when the recognizer chose it.
    pub language: String,
    pub words: Vec<Word>,
}

impl Transcription {
    pub fn empty(language: &str) -> Self {
        Transcription { text: String::new(), language: language.to_string(), words: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Discarded,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pending => "pending",
            Status::Accepted => "accepted",
            Status::Discarded => "discarded",
        })
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Status::Pending),
            "accepted" => Ok(Status::Accepted),
            "discarded" => Ok(Status::Discarded),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// A trimmed scene span with its active speaker; the unit the annotator judges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub candidate_id: String,
    pub video_id: String,
    pub scene_index: usize,
    pub track_id: u32,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub fps: f64,
    pub per_frame_bboxes: Vec<BoundingBox>,
    pub transcription: Transcription,
    #[serde(default)]
    pub transcription_failed: bool,
    pub status: Status,
    #[serde(default)]
    pub edited_text: Option<String>,
}

impl CandidateSample {
    pub fn make_id(video_id: &str, scene_index: usize, track_id: u32, start_frame: usize) -> String {
        format!("{video_id}:{scene_index}:{track_id}:{start_frame}")
    }

    pub fn expected_id(&self) -> String {
        Self::make_id(&self.video_id, self.scene_index, self.track_id, self.start_frame)
    }

    pub fn start_seconds(&self) -> f64 {
        self.start_frame as f64 / self.fps
    }

    pub fn end_seconds(&self) -> f64 {
        self.end_frame as f64 / self.fps
    }

    pub fn duration_seconds(&self) -> f64 {
        self.end_seconds() - self.start_seconds()
    }

    /// Text an export should carry: the annotator's edit when present.
    pub fn final_text(&self) -> &str {
        self.edited_text.as_deref().unwrap_or(&self.transcription.text)
    }

    pub fn validate(&self, scene: Option<&SceneSegment>) -> Result<(), String> {
        if self.end_frame <= self.start_frame {
            return Err(format!("empty span [{}, {})", self.start_frame, self.end_frame));
        }
        if self.per_frame_bboxes.len() != self.end_frame - self.start_frame {
            return Err(format!(
                "{} boxes for a {}-frame span",
                self.per_frame_bboxes.len(),
                self.end_frame - self.start_frame
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        if self.candidate_id != self.expected_id() {
            return Err(format!("candidate id {:?} does not match {:?}", self.candidate_id, self.expected_id()));
        }
        if let Some(scene) = scene {
            if self.start_frame < scene.start_frame || self.end_frame > scene.end_frame {
                return Err(format!(
                    "span [{}, {}) leaves scene [{}, {})",
                    self.start_frame, self.end_frame, scene.start_frame, scene.end_frame
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(frame: usize, x: f64) -> FaceObservation {
        FaceObservation {
            frame_index: frame,
            bbox: BoundingBox::new(x, 0.0, x + 10.0, 10.0),
            confidence: 0.9,
            landmarks: None,
        }
    }

    #[test]
    fn dense_boxes_interpolates_gaps() {
        let track = FaceTrack {
            track_id: 0,
            video_id: "v".into(),
            scene_index: 0,
            observations: vec![obs(3, 0.0), obs(5, 20.0), obs(6, 20.0)],
        };
        let boxes = track.dense_boxes();
        assert_eq!(boxes.len(), 4);
        assert_eq!(boxes[1].x1, 10.0);
        assert_eq!(track.span(), Some((3, 7)));
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = BoundingBox::new(1.0, 2.0, 3.0, 4.5);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.5]");
        let back: BoundingBox = serde_json::from_str("[1,2,3,4.5]").unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn word_accepts_wire_alias() {
        let w: Word = serde_json::from_str(r#"{"w":"hola","t0":0.1,"t1":0.48}"#).unwrap();
        assert_eq!(w.word, "hola");
    }

    #[test]
    fn video_asset_rejects_odd_sample_rate() {
        let v = VideoAsset {
            id: "x".into(),
            path: "x".into(),
            fps: 25.0,
            frame_count: 1,
            width: 2,
            height: 2,
            audio_sample_rate: 11025,
        };
        assert!(v.validate().is_err());
    }
}
