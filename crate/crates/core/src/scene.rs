//! Scene segmentation by HSV content change, and the person-presence filter
//! that keeps only scenes whose first frame shows a face.

use thiserror::Error;

use crate::backend::{BackendError, FaceDetector};
use crate::media::{FrameSource, MediaError, RgbFrame};
use crate::types::SceneSegment;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot convert an empty frame")]
    EmptyFrame,
    #[error("frame size mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("video has no frames")]
    NoFrames,
    #[error("scene {scene_index}: face backend failed: {source}")]
    Backend { scene_index: usize, source: BackendError },
    #[error("scene {scene_index}: {source}")]
    Media { scene_index: usize, source: MediaError },
}

/// HSV planes, each channel mapped to [0, 255] (hue linearly from [0°, 360°)).
#[derive(Debug, Clone, PartialEq)]
pub struct HsvFrame {
    pub width: u32,
    pub height: u32,
    pub h: Vec<u8>,
    pub s: Vec<u8>,
    pub v: Vec<u8>,
}

/// Standard RGB→HSV on one pixel, scaled to 8 bits per channel.
pub fn rgb_to_hsv8([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let chroma = max - min;
    let hue = if chroma == 0.0 {
        0.0
    } else if max == rf {
        60.0 * ((gf - bf) / chroma).rem_euclid(6.0)
    } else if max == gf {
        60.0 * ((bf - rf) / chroma + 2.0)
    } else {
        60.0 * ((rf - gf) / chroma + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { chroma / max };
    [(hue / 360.0 * 255.0).round().min(255.0) as u8, (sat * 255.0).round() as u8, max as u8]
}

/// Nearest-neighbour downscale by `downscale_factor`, then HSV conversion.
pub fn to_hsv(frame: &RgbFrame, downscale_factor: u32) -> Result<HsvFrame, SceneError> {
    if frame.width == 0 || frame.height == 0 || frame.data.is_empty() {
        return Err(SceneError::EmptyFrame);
    }
    let f = downscale_factor.max(1);
    let width = frame.width.div_ceil(f);
    let height = frame.height.div_ceil(f);
    let n = width as usize * height as usize;
    let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for y in 0..height {
        for x in 0..width {
            let [ph, ps, pv] = rgb_to_hsv8(frame.pixel(x * f, y * f));
            h.push(ph);
            s.push(ps);
            v.push(pv);
        }
    }
    Ok(HsvFrame { width, height, h, s, v })
}

fn mean_abs_diff(a: &[u8], b: &[u8]) -> f64 {
    let total: u64 = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64).sum();
    total as f64 / a.len() as f64
}

/// Mean over H, S and V of the per-pixel mean absolute difference.
pub fn content_score(prev: &HsvFrame, cur: &HsvFrame) -> Result<f64, SceneError> {
    if prev.width != cur.width || prev.height != cur.height {
        return Err(SceneError::DimensionMismatch(prev.width, prev.height, cur.width, cur.height));
    }
    Ok((mean_abs_diff(&prev.h, &cur.h) + mean_abs_diff(&prev.s, &cur.s) + mean_abs_diff(&prev.v, &cur.v)) / 3.0)
}

/// Streaming cut detector. Feed frames in order with [`SceneDetector::push`],
/// then call [`SceneDetector::finish`].
#[derive(Debug)]
pub struct SceneDetector {
    threshold: f64,
    min_len: usize,
    prev: Option<HsvFrame>,
    next_index: usize,
    scene_start: usize,
    scene_cut_score: f64,
    scenes: Vec<SceneSegment>,
}

impl SceneDetector {
    pub fn new(scene_threshold: f64, min_scene_len_frames: usize) -> Self {
        SceneDetector {
            threshold: scene_threshold,
            min_len: min_scene_len_frames.max(1),
            prev: None,
            next_index: 0,
            scene_start: 0,
            scene_cut_score: 0.0,
            scenes: Vec::new(),
        }
    }

    /// Returns the content score against the previous frame (0 for the first).
    pub fn push(&mut self, frame: HsvFrame) -> Result<f64, SceneError> {
        let i = self.next_index;
        let score = match &self.prev {
            Some(prev) => content_score(prev, &frame)?,
            None => 0.0,
        };
        if i > 0 && score >= self.threshold && i - self.scene_start >= self.min_len {
            self.scenes.push(SceneSegment {
                scene_index: self.scenes.len(),
                start_frame: self.scene_start,
                end_frame: i,
                cut_score: self.scene_cut_score,
            });
            self.scene_start = i;
            self.scene_cut_score = score;
        }
        self.prev = Some(frame);
        self.next_index += 1;
        Ok(score)
    }

    pub fn finish(mut self) -> Result<Vec<SceneSegment>, SceneError> {
        if self.next_index == 0 {
            return Err(SceneError::NoFrames);
        }
        self.scenes.push(SceneSegment {
            scene_index: self.scenes.len(),
            start_frame: self.scene_start,
            end_frame: self.next_index,
            cut_score: self.scene_cut_score,
        });
        Ok(self.scenes)
    }
}

/// Segments an in-order stream of HSV frames.
pub fn detect_scenes<I>(
    frames: I,
    scene_threshold: f64,
    min_scene_len_frames: usize,
) -> Result<Vec<SceneSegment>, SceneError>
where
    I: IntoIterator<Item = HsvFrame>,
{
    let mut detector = SceneDetector::new(scene_threshold, min_scene_len_frames);
    for frame in frames {
        detector.push(frame)?;
    }
    detector.finish()
}

/// Decodes every frame of `source` and segments it.
pub fn detect_scenes_in(
    source: &mut dyn FrameSource,
    scene_threshold: f64,
    min_scene_len_frames: usize,
    downscale_factor: u32,
) -> Result<Vec<SceneSegment>, SceneError> {
    let count = source.info().frame_count;
    let mut detector = SceneDetector::new(scene_threshold, min_scene_len_frames);
    for i in 0..count {
        let frame = source.frame(i).map_err(|source| SceneError::Media { scene_index: 0, source })?;
        detector.push(to_hsv(&frame, downscale_factor)?)?;
    }
    detector.finish()
}

/// Keeps the scenes whose first frame shows at least one face with
/// confidence `>= face_confidence_min`, in order.
pub fn filter_scenes_with_faces(
    scenes: &[SceneSegment],
    source: &mut dyn FrameSource,
    detector: &dyn FaceDetector,
    face_confidence_min: f64,
) -> Result<Vec<SceneSegment>, SceneError> {
    let mut kept = Vec::new();
    for scene in scenes {
        let frame = source
            .frame(scene.start_frame)
            .map_err(|source| SceneError::Media { scene_index: scene.scene_index, source })?;
        let faces = detector
            .detect(scene.start_frame, &frame)
            .map_err(|source| SceneError::Backend { scene_index: scene.scene_index, source })?;
        if faces.iter().any(|f| f.confidence >= face_confidence_min) {
            kept.push(scene.clone());
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{RawFace, ScriptedFaces};
    use crate::media::{Audio, MemoryVideo};
    use crate::types::BoundingBox;

    fn solid_hsv(rgb: [u8; 3]) -> HsvFrame {
        to_hsv(&RgbFrame::solid(8, 6, rgb), 1).unwrap()
    }

    #[test]
    fn hsv_reference_colours() {
        assert_eq!(rgb_to_hsv8([255, 0, 0]), [0, 255, 255]);
        let gray = rgb_to_hsv8([128, 128, 128]);
        assert_eq!((gray[1], gray[2]), (0, 128));
        assert_eq!(rgb_to_hsv8([0, 255, 0]), [85, 255, 255]);
        assert_eq!(rgb_to_hsv8([0, 0, 255]), [170, 255, 255]);
    }

    #[test]
    fn empty_frame_is_rejected() {
        let f = RgbFrame { width: 0, height: 0, data: vec![] };
        assert!(matches!(to_hsv(&f, 4), Err(SceneError::EmptyFrame)));
    }

    #[test]
    fn downscale_uses_nearest_neighbour() {
        let mut f = RgbFrame::solid(5, 5, [0, 0, 0]);
        f.set_pixel(4, 4, [255, 255, 255]);
        let hsv = to_hsv(&f, 4).unwrap();
        assert_eq!((hsv.width, hsv.height), (2, 2));
        assert_eq!(hsv.v, vec![0, 0, 0, 255]);
    }

    #[test]
    fn content_score_cases() {
        let black = solid_hsv([0, 0, 0]);
        let white = solid_hsv([255, 255, 255]);
        assert_eq!(content_score(&black, &black).unwrap(), 0.0);
        assert_eq!(content_score(&black, &white).unwrap(), 85.0);
        assert_eq!(content_score(&white, &black).unwrap(), 85.0);
        let small = to_hsv(&RgbFrame::solid(2, 2, [0, 0, 0]), 1).unwrap();
        assert!(matches!(content_score(&black, &small), Err(SceneError::DimensionMismatch(..))));
    }

    #[test]
    fn single_frame_is_one_scene() {
        let scenes = detect_scenes([solid_hsv([1, 2, 3])], 27.0, 15).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!((scenes[0].start_frame, scenes[0].end_frame), (0, 1));
        assert!(detect_scenes(Vec::<HsvFrame>::new(), 27.0, 15).is_err());
    }

    #[test]
    fn short_scenes_are_not_cut() {
        // Colour changes every 5 frames but min length is 15.
        let colours = [[255, 0, 0], [0, 0, 255]];
        let frames = (0..30).map(|i| solid_hsv(colours[(i / 5) % 2]));
        let scenes = detect_scenes(frames, 27.0, 15).unwrap();
        let spans: Vec<_> = scenes.iter().map(|s| (s.start_frame, s.end_frame)).collect();
        assert_eq!(spans, vec![(0, 15), (15, 30)]);
        assert!(scenes[1].cut_score > 27.0);
        assert_eq!(scenes[0].cut_score, 0.0);
    }

    fn face_at_frames(frames: &[usize], confidence: f64) -> ScriptedFaces {
        let mut s = ScriptedFaces::default();
        for &f in frames {
            s.frames.insert(f, vec![RawFace { bbox: BoundingBox::new(1.0, 1.0, 4.0, 4.0), confidence }]);
        }
        s
    }

    fn scenes_0_30_60() -> Vec<SceneSegment> {
        vec![
            SceneSegment { scene_index: 0, start_frame: 0, end_frame: 30, cut_score: 0.0 },
            SceneSegment { scene_index: 1, start_frame: 30, end_frame: 60, cut_score: 90.0 },
        ]
    }

    #[test]
    fn filter_keeps_scenes_with_a_face_on_the_first_frame() {
        let mut video = MemoryVideo::new(25.0, vec![RgbFrame::solid(8, 8, [9, 9, 9]); 60], Audio::silence(16000, 0));
        let scenes = scenes_0_30_60();
        let none = ScriptedFaces::default();
        assert!(filter_scenes_with_faces(&scenes, &mut video, &none, 0.5).unwrap().is_empty());
        let kept = filter_scenes_with_faces(&scenes, &mut video, &face_at_frames(&[30], 0.9), 0.5).unwrap();
        assert_eq!(kept, vec![scenes[1].clone()]);
        let weak = filter_scenes_with_faces(&scenes, &mut video, &face_at_frames(&[0, 30], 0.4), 0.5).unwrap();
        assert!(weak.is_empty());
    }

    #[test]
    fn filter_names_the_failing_scene() {
        let mut video = MemoryVideo::new(25.0, vec![RgbFrame::solid(8, 8, [9, 9, 9]); 60], Audio::silence(16000, 0));
        let mut faces = ScriptedFaces::default();
        faces.fail_frames.insert(30);
        let err = filter_scenes_with_faces(&scenes_0_30_60(), &mut video, &faces, 0.5).unwrap_err();
        assert!(matches!(err, SceneError::Backend { scene_index: 1, .. }), "{err}");
    }
}
