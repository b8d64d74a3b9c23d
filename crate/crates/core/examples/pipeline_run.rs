//! Runs the whole annotation pipeline on an in-memory two-shot video with
//! in-process model stand-ins, then persists the candidates to a store.

use avcorpus::backend::{AsdWindow, BackendError, RawFace, RawTranscript};
use avcorpus::media::{Audio, RgbFrame};
use avcorpus::pipeline::{analyze_video, persist, Backends};
use avcorpus::store::Store;
use avcorpus::synth::{scene_video, PaintedFace};
use avcorpus::types::{BoundingBox, VideoAsset, Word};
use avcorpus::PipelineConfig;

const FACE: BoundingBox = BoundingBox { x1: 20.0, y1: 10.0, x2: 44.0, y2: 40.0 };

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut video = scene_video(
        25.0,
        64,
        48,
        &[(120, [20, 30, 200]), (120, [200, 180, 20])],
        &[PaintedFace { frames: 0..240, bbox: FACE, color: [230, 160, 140] }],
        Audio::silence(16_000, 240 * 640),
    );
    let asset = VideoAsset {
        id: "demo".into(),
        path: "demo".into(),
        fps: 25.0,
        frame_count: 240,
        width: 64,
        height: 48,
        audio_sample_rate: 16_000,
    };

    // The face is found wherever it is painted; it "speaks" on three stretches.
    let face = |_: usize, _: &RgbFrame| Ok(vec![RawFace { bbox: FACE, confidence: 0.9 }]);
    let speaking = [10..30, 70..100, 150..200];
    let asd = |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> {
        Ok((w.first_frame..w.first_frame + w.crops.len())
            .map(|f| if speaking.iter().any(|r| r.contains(&f)) { 1.0 } else { -1.0 })
            .collect())
    };
    let asr = |_: &str, audio: &[f32], _: &str| -> Result<RawTranscript, BackendError> {
        let secs = audio.len() as f64 / 16_000.0;
        Ok(RawTranscript {
            text: "hola".into(),
            language: Some("es".into()),
            words: vec![Word { word: "hola".into(), t0: 0.0, t1: secs.min(0.4) }],
        })
    };
    let backends = Backends { face: &face, landmarks: None, asd: &asd, asr: &asr };

    let config = PipelineConfig::default();
    let mut analysis = analyze_video(&asset, &mut video, &config, &backends)?;
    let r = &analysis.report;
    println!("{} scenes, {} kept, {} tracks, {} candidates", r.scenes_found, r.scenes_kept, r.tracks, r.candidates);
    for c in &analysis.candidates {
        println!("  {} frames [{}, {}) {:?}", c.candidate_id, c.start_frame, c.end_frame, c.transcription.text);
    }

    let dir = tempfile::tempdir()?;
    let store = Store::open(dir.path())?;
    persist(&mut analysis, &config, &mut store.writer()?)?;
    println!(
        "store holds {} candidates; run marker written: {}",
        store.load_candidates()?.len(),
        store.read_run_marker("demo")?.is_some()
    );
    Ok(())
}
