//! Links per-frame face detections into tracks. Two people sit apart while
//! a third walks in halfway through and the detector drops a few frames.

use avcorpus::tracking::Tracker;
use avcorpus::types::{BoundingBox, FaceObservation};

fn face(frame: usize, cx: f64, cy: f64) -> FaceObservation {
    FaceObservation {
        frame_index: frame,
        bbox: BoundingBox::new(cx - 30.0, cy - 40.0, cx + 30.0, cy + 40.0),
        confidence: 0.95,
        landmarks: None,
    }
}

fn main() {
    // Normalised match distance 0.1 and tracks survive 5 missed frames.
    let mut tracker = Tracker::new("demo", 0, 640, 480, 0.1, 5);
    for f in 0..120 {
        let mut dets = vec![face(f, 140.0, 240.0)];
        // The right-hand speaker is missed on frames 50..54, inside the gap.
        if !(50..54).contains(&f) {
            dets.push(face(f, 500.0, 240.0));
        }
        // The walker moves 2 px per frame, well under the match distance.
        if f >= 60 {
            dets.push(face(f, 200.0 + 2.0 * (f - 60) as f64, 120.0));
        }
        let closed = tracker.assign_tracks(f, dets);
        for t in closed {
            println!("frame {f}: track {} closed", t.track_id);
        }
    }
    for t in tracker.finish() {
        let first = t.first_frame().unwrap_or(0);
        let last = t.observations.last().map_or(0, |o| o.frame_index);
        println!("track {}: {} observations over frames {first}..={last}", t.track_id, t.observations.len());
    }
}
