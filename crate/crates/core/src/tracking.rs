//! Face detection filtering, proximity tracking, landmark attachment and
//! face cropping.

use thiserror::Error;

use crate::backend::{BackendError, FaceDetector, LandmarkDetector};
use crate::media::{GrayCrop, RgbFrame};
use crate::types::{BoundingBox, FaceObservation, FaceTrack, LANDMARK_COUNT};

/// Margin applied around the face box before cropping.
pub const CROP_MARGIN: f64 = 1.2;
pub const DEFAULT_CROP_SIZE: u32 = 112;

/// Runs the detector on one frame and keeps faces with
/// `confidence >= min_confidence`, highest confidence first. Boxes are
/// clipped to the frame; boxes with nothing left inside it are dropped.
pub fn detect_faces(
    frame_index: usize,
    frame: &RgbFrame,
    detector: &dyn FaceDetector,
    min_confidence: f64,
) -> Result<Vec<FaceObservation>, BackendError> {
    let raw = detector.detect(frame_index, frame).map_err(|e| e.at_frame(frame_index))?;
    let mut out: Vec<FaceObservation> = raw
        .into_iter()
        .filter(|f| f.confidence.is_finite() && f.confidence >= min_confidence)
        .filter_map(|f| {
            Some(FaceObservation {
                frame_index,
                bbox: f.bbox.clamp_to(frame.width, frame.height)?,
                confidence: f.confidence.min(1.0),
                landmarks: None,
            })
        })
        .collect();
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    Ok(out)
}

/// Center distance divided by the frame diagonal.
pub fn normalized_distance(a: &BoundingBox, b: &BoundingBox, diagonal: f64) -> f64 {
    let ((ax, ay), (bx, by)) = (a.center(), b.center());
    (ax - bx).hypot(ay - by) / diagonal
}

/// Greedy matching. Returns `(track position, detection position)` pairs
/// taken in order of increasing distance; ties go to the lower track id,
/// then to the more confident detection.
pub fn greedy_match(
    tracks: &[FaceTrack],
    detections: &[FaceObservation],
    diagonal: f64,
    max_match_dist: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let Some(last) = t.observations.last() else { continue };
        for (di, d) in detections.iter().enumerate() {
            let dist = normalized_distance(&last.bbox, &d.bbox, diagonal);
            if dist <= max_match_dist {
                pairs.push((dist, t.track_id, d.confidence, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.total_cmp(&a.2)).then(a.4.cmp(&b.4)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Vec::new();
    for (_, _, _, ti, di) in pairs {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.push((ti, di));
        }
    }
    out
}

/// Frame-by-frame tracker for one scene.
#[derive(Debug, Clone)]
pub struct Tracker {
    video_id: String,
    scene_index: usize,
    diagonal: f64,
    max_match_dist: f64,
    max_track_gap: usize,
    next_track_id: u32,
    open: Vec<FaceTrack>,
    closed: Vec<FaceTrack>,
}

impl Tracker {
    pub fn new(
        video_id: &str,
        scene_index: usize,
        width: u32,
        height: u32,
        max_match_dist: f64,
        max_track_gap: usize,
    ) -> Self {
        Tracker {
            video_id: video_id.to_string(),
            scene_index,
            diagonal: (width as f64).hypot(height as f64),
            max_match_dist,
            max_track_gap,
            next_track_id: 0,
            open: Vec::new(),
            closed: Vec::new(),
        }
    }

    pub fn open_tracks(&self) -> &[FaceTrack] {
        &self.open
    }

    pub fn open_tracks_mut(&mut self) -> &mut [FaceTrack] {
        &mut self.open
    }

    /// Folds one frame of detections into the open tracks and returns the
    /// tracks closed by this step. Frames must be fed in increasing order.
    pub fn assign_tracks(&mut self, frame_index: usize, detections: Vec<FaceObservation>) -> Vec<FaceTrack> {
        let gap = self.max_track_gap;
        let (still_open, newly_closed): (Vec<_>, Vec<_>) = std::mem::take(&mut self.open)
            .into_iter()
            .partition(|t| t.last_frame().is_some_and(|last| frame_index - last <= gap));
        self.open = still_open;

        let matches = greedy_match(&self.open, &detections, self.diagonal, self.max_match_dist);
        let mut taken = vec![false; detections.len()];
        let mut slots: Vec<Option<FaceObservation>> = detections.into_iter().map(Some).collect();
        for (ti, di) in matches {
            taken[di] = true;
            let obs = slots[di].take().expect("detection matched once");
            self.open[ti].observations.push(obs);
        }
        for obs in slots.into_iter().flatten() {
            let track_id = self.next_track_id;
            self.next_track_id += 1;
            self.open.push(FaceTrack {
                track_id,
                video_id: self.video_id.clone(),
                scene_index: self.scene_index,
                observations: vec![obs],
            });
        }
        self.closed.extend(newly_closed.iter().cloned());
        newly_closed
    }

    /// Closes everything and returns all tracks of the scene ordered by id.
    pub fn finish(mut self) -> Vec<FaceTrack> {
        self.closed.append(&mut self.open);
        self.closed.sort_by_key(|t| t.track_id);
        self.closed
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkReport {
    pub attempted: usize,
    pub attached: usize,
    pub failed: usize,
    pub failures: Vec<(usize, String)>,
}

impl LandmarkReport {
    pub fn merge(&mut self, other: LandmarkReport) {
        self.attempted += other.attempted;
        self.attached += other.attached;
        self.failed += other.failed;
        self.failures.extend(other.failures);
    }
}

/// Checks arity and that every point lies within the frame grown by 10%.
pub fn check_landmarks(points: &[[f64; 2]], width: u32, height: u32) -> Result<(), String> {
    if points.len() != LANDMARK_COUNT {
        return Err(format!("expected {LANDMARK_COUNT} landmarks, got {}", points.len()));
    }
    let (mx, my) = (0.1 * width as f64, 0.1 * height as f64);
    for (i, [x, y]) in points.iter().enumerate() {
        if !(x.is_finite() && y.is_finite())
            || *x < -mx
            || *x > width as f64 + mx
            || *y < -my
            || *y > height as f64 + my
        {
            return Err(format!("landmark {i} ({x}, {y}) outside the frame"));
        }
    }
    Ok(())
}

/// Asks the aligner for one observation; failures leave it untouched.
pub fn attach_landmarks_to(
    obs: &mut FaceObservation,
    frame: &RgbFrame,
    detector: &dyn LandmarkDetector,
    report: &mut LandmarkReport,
) {
    report.attempted += 1;
    let result = detector
        .landmarks(obs.frame_index, frame, &obs.bbox)
        .map_err(|e| e.to_string())
        .and_then(|pts| check_landmarks(&pts, frame.width, frame.height).map(|_| pts));
    match result {
        Ok(points) => {
            obs.landmarks = Some(points);
            report.attached += 1;
        }
        Err(reason) => {
            log::warn!("landmarks for frame {}: {reason}", obs.frame_index);
            obs.landmarks = None;
            report.failed += 1;
            report.failures.push((obs.frame_index, reason));
        }
    }
}

/// Attaches landmarks to every observation of `track`, fetching frames
/// through `frame_at`.
pub fn attach_landmarks<F>(track: &mut FaceTrack, mut frame_at: F, detector: &dyn LandmarkDetector) -> LandmarkReport
where
    F: FnMut(usize) -> Result<RgbFrame, String>,
{
    let mut report = LandmarkReport::default();
    for obs in &mut track.observations {
        match frame_at(obs.frame_index) {
            Ok(frame) => attach_landmarks_to(obs, &frame, detector, &mut report),
            Err(reason) => {
                report.attempted += 1;
                report.failed += 1;
                report.failures.push((obs.frame_index, reason));
            }
        }
    }
    report
}

#[derive(Debug, Error, PartialEq)]
pub enum CropError {
    #[error("degenerate crop region for box {0:?}")]
    Degenerate(BoundingBox),
    #[error("crop size must be positive")]
    ZeroSize,
}

/// Square crop region: side `max(w, h) * 1.2` around the box center,
/// shifted to lie inside the frame and clipped only when it is larger
/// than the frame itself.
pub fn crop_region(bbox: &BoundingBox, width: u32, height: u32) -> Option<BoundingBox> {
    let (w, h) = (width as f64, height as f64);
    let side = bbox.width().max(bbox.height()) * CROP_MARGIN;
    let (cx, cy) = bbox.center();
    let place = |c: f64, limit: f64| {
        if side >= limit {
            (0.0, limit)
        } else {
            let lo = (c - side / 2.0).clamp(0.0, limit - side);
            (lo, lo + side)
        }
    };
    let (x1, x2) = place(cx, w);
    let (y1, y2) = place(cy, h);
    (x2 > x1 && y2 > y1 && side > 0.0).then(|| BoundingBox::new(x1, y1, x2, y2))
}

pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().min(255.0) as u8
}

/// Bilinearly resampled grayscale square crop of the face.
pub fn crop_face(frame: &RgbFrame, bbox: &BoundingBox, out_size: u32) -> Result<GrayCrop, CropError> {
    if out_size == 0 {
        return Err(CropError::ZeroSize);
    }
    if frame.width == 0 || frame.height == 0 {
        return Err(CropError::Degenerate(*bbox));
    }
    let region = crop_region(bbox, frame.width, frame.height).ok_or(CropError::Degenerate(*bbox))?;
    let (fw, fh) = (frame.width as usize, frame.height as usize);
    let gray: Vec<f64> = frame.data.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]]) as f64).collect();
    let sx = region.width() / out_size as f64;
    let sy = region.height() / out_size as f64;
    let n = out_size as usize;
    let mut data = Vec::with_capacity(n * n);
    for v in 0..n {
        let y = (region.y1 + (v as f64 + 0.5) * sy - 0.5).clamp(0.0, (fh - 1) as f64);
        let (y0, ty) = (y.floor() as usize, y - y.floor());
        let y1 = (y0 + 1).min(fh - 1);
        for u in 0..n {
            let x = (region.x1 + (u as f64 + 0.5) * sx - 0.5).clamp(0.0, (fw - 1) as f64);
            let (x0, tx) = (x.floor() as usize, x - x.floor());
            let x1 = (x0 + 1).min(fw - 1);
            let top = gray[y0 * fw + x0] * (1.0 - tx) + gray[y0 * fw + x1] * tx;
            let bottom = gray[y1 * fw + x0] * (1.0 - tx) + gray[y1 * fw + x1] * tx;
            data.push((top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayCrop { size: out_size, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{RawFace, ScriptedFaces};

    fn obs(frame: usize, cx: f64, cy: f64, conf: f64) -> FaceObservation {
        FaceObservation {
            frame_index: frame,
            bbox: BoundingBox::new(cx - 5.0, cy - 5.0, cx + 5.0, cy + 5.0),
            confidence: conf,
            landmarks: None,
        }
    }

    #[test]
    fn detections_are_filtered_and_sorted() {
        let mut faces = ScriptedFaces::default();
        faces.frames.insert(
            3,
            vec![
                RawFace { bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0), confidence: 0.3 },
                RawFace { bbox: BoundingBox::new(20.0, 0.0, 30.0, 10.0), confidence: 0.9 },
                RawFace { bbox: BoundingBox::new(40.0, 0.0, 50.0, 10.0), confidence: 0.6 },
            ],
        );
        let frame = RgbFrame::solid(64, 64, [0, 0, 0]);
        let got = detect_faces(3, &frame, &faces, 0.5).unwrap();
        assert_eq!(got.iter().map(|o| o.confidence).collect::<Vec<_>>(), vec![0.9, 0.6]);
        faces.fail_frames.insert(4);
        assert!(detect_faces(4, &frame, &faces, 0.5).is_err());
    }

    #[test]
    fn stationary_face_is_one_track() {
        let mut t = Tracker::new("v", 0, 100, 100, 0.1, 5);
        for f in 0..50 {
            t.assign_tracks(f, vec![obs(f, 50.0, 50.0, 0.9)]);
        }
        let tracks = t.finish();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 50);
    }

    #[test]
    fn gap_longer_than_limit_splits_the_track() {
        let mut t = Tracker::new("v", 0, 100, 100, 0.1, 5);
        for f in 0..10 {
            t.assign_tracks(f, vec![obs(f, 50.0, 50.0, 0.9)]);
        }
        // Last seen at 9; a gap of 5 (seen again at 14) is tolerated.
        t.assign_tracks(14, vec![obs(14, 50.0, 50.0, 0.9)]);
        // Gap of 6 closes it.
        let closed = t.assign_tracks(20, vec![obs(20, 50.0, 50.0, 0.9)]);
        assert_eq!(closed.len(), 1);
        let tracks = t.finish();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].observations.len(), 11);
        assert_eq!(tracks[1].first_frame(), Some(20));
    }

    #[test]
    fn ties_prefer_lower_track_then_higher_confidence() {
        let mut t = Tracker::new("v", 0, 100, 100, 0.5, 5);
        t.assign_tracks(0, vec![obs(0, 40.0, 50.0, 0.9), obs(0, 60.0, 50.0, 0.8)]);
        // One detection exactly between both tracks: track 0 wins.
        t.assign_tracks(1, vec![obs(1, 50.0, 50.0, 0.7)]);
        let open = t.open_tracks();
        assert_eq!(open[0].observations.len(), 2);
        assert_eq!(open[1].observations.len(), 1);

        // Two detections equidistant from one track: the confident one wins.
        let mut t = Tracker::new("v", 0, 100, 100, 0.5, 5);
        t.assign_tracks(0, vec![obs(0, 50.0, 50.0, 0.9)]);
        t.assign_tracks(1, vec![obs(1, 45.0, 50.0, 0.6), obs(1, 55.0, 50.0, 0.95)]);
        let tracks = t.finish();
        assert_eq!(tracks[0].observations[1].confidence, 0.95);
        assert_eq!(tracks[1].observations[0].confidence, 0.6);
    }

    #[test]
    fn landmark_failures_are_counted() {
        let mut track = FaceTrack {
            track_id: 0,
            video_id: "v".into(),
            scene_index: 0,
            observations: (0..10).map(|f| obs(f, 50.0, 50.0, 0.9)).collect(),
        };
        let aligner = |f: usize, _: &RgbFrame, _: &BoundingBox| -> Result<Vec<[f64; 2]>, BackendError> {
            match f {
                3 => Err(BackendError::Scripted("boom".into())),
                7 => Ok(vec![[0.0, 0.0]; 67]),
                _ => Ok(vec![[0.0, 0.0]; 68]),
            }
        };
        let report = attach_landmarks(&mut track, |_| Ok(RgbFrame::solid(100, 100, [0, 0, 0])), &aligner);
        assert_eq!((report.attached, report.failed), (8, 2));
        assert!(track.observations[3].landmarks.is_none());
        assert_eq!(track.observations[0].landmarks.as_ref().unwrap().len(), 68);
    }

    #[test]
    fn crops_of_uniform_frames_are_uniform() {
        let gray = RgbFrame::solid(100, 80, [90, 90, 90]);
        let c = crop_face(&gray, &BoundingBox::new(20.0, 20.0, 50.0, 60.0), 112).unwrap();
        assert_eq!(c.data.len(), 112 * 112);
        assert!(c.data.iter().all(|&v| v == 90));
        let white = RgbFrame::solid(100, 80, [255, 255, 255]);
        let c = crop_face(&white, &BoundingBox::new(20.0, 20.0, 50.0, 60.0), 112).unwrap();
        assert!(c.data.iter().all(|&v| v == 255));
    }

    #[test]
    fn edge_boxes_shift_inside_the_frame() {
        // w = 9, h = 20 -> side 24 around (94.5, 50) -> x shifted to [76, 100].
        let r = crop_region(&BoundingBox::new(90.0, 40.0, 99.0, 60.0), 100, 100).unwrap();
        assert_eq!(r, BoundingBox::new(76.0, 38.0, 100.0, 62.0));
        let frame = RgbFrame::solid(100, 100, [10, 200, 30]);
        let c = crop_face(&frame, &BoundingBox::new(90.0, 40.0, 99.0, 60.0), 112).unwrap();
        assert_eq!(c.size, 112);
        assert_eq!(c.data.len(), 112 * 112);
    }

    #[test]
    fn oversized_boxes_are_clipped_to_the_frame() {
        let r = crop_region(&BoundingBox::new(0.0, 0.0, 100.0, 50.0), 100, 50).unwrap();
        assert_eq!(r, BoundingBox::new(0.0, 0.0, 100.0, 50.0));
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma([255, 0, 0]), 76);
        assert_eq!(luma([0, 255, 0]), 150);
        assert_eq!(luma([0, 0, 255]), 29);
        assert_eq!(luma([255, 255, 255]), 255);
    }
}
