//! End-to-end orchestration: scenes, face filter, tracks, speaker scoring,
//! trimming, transcription and persistence, with resume support.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asd::{align_mfcc, decide_activity, rows_per_frame, score_track, smooth_scores, trim_scene, AsdError};
use crate::backend::{AsdScorer, BackendError, FaceDetector, LandmarkDetector, SpeechRecognizer};
use crate::config::PipelineConfig;
use crate::media::{self, ffmpeg_available, write_clip_mp4, Audio, FrameSource, GrayCrop, MediaError, RgbFrame};
use crate::mfcc::{MfccExtractor, MFCC_COEFFS, MFCC_SAMPLE_RATE};
use crate::scene::{detect_scenes_in, filter_scenes_with_faces, SceneError};
use crate::store::{now_timestamp, RunMarker, Store, StoreError, StoreWriter};
use crate::tracking::{attach_landmarks_to, crop_face, detect_faces, CropError, LandmarkReport, Tracker};
use crate::transcription::{resolved_language, transcribe};
use crate::types::{BoundingBox, CandidateSample, FaceTrack, SceneSegment, Status, Transcription, VideoAsset};

/// The four model roles. Landmarks are optional.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub face: &'a dyn FaceDetector,
    pub landmarks: Option<&'a dyn LandmarkDetector>,
    pub asd: &'a dyn AsdScorer,
    pub asr: &'a dyn SpeechRecognizer,
}

#[derive(Debug, Clone)]
pub struct ProcessOptions {
    /// Where trimmed clips go. Clips are only written when ffmpeg exists.
    pub media_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        ProcessOptions { media_dir: None, workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("media: {0}")]
    Media(#[from] MediaError),
    #[error("scene detection: {0}")]
    Scenes(SceneError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
}

/// A hard failure inside one scene. The scene is dropped, the run goes on.
#[derive(Debug, Error)]
enum SceneFailure {
    #[error("{0}")]
    Scene(#[from] SceneError),
    #[error("frame {frame}: {source}")]
    Media { frame: usize, source: MediaError },
    #[error("face detection: {0}")]
    Faces(#[from] BackendError),
    #[error("crop at frame {frame}: {source}")]
    Crop { frame: usize, source: CropError },
    #[error("speaker scoring: {0}")]
    Asd(#[from] AsdError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneErrorRecord {
    pub scene_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub video_id: String,
    pub scenes_found: usize,
    pub scenes_kept: usize,
    pub tracks: usize,
    pub candidates: usize,
    pub candidate_ids: Vec<String>,
    /// Candidates already present in the store and not appended again.
    pub skipped_existing: usize,
    pub landmark_failures: usize,
    pub transcription_failures: usize,
    pub scene_errors: Vec<SceneErrorRecord>,
}

/// Output of analysing one video before anything is persisted.
#[derive(Debug, Clone)]
pub struct VideoAnalysis {
    pub report: RunReport,
    pub tracks: Vec<FaceTrack>,
    pub candidates: Vec<CandidateSample>,
}

struct SceneOutput {
    tracks: Vec<FaceTrack>,
    crops: HashMap<u32, Vec<GrayCrop>>,
    landmarks: LandmarkReport,
}

/// One pass over the scene: detect, track, attach landmarks and cut the
/// face crops. Frames the detector missed inside a track are cropped from a
/// small ring buffer once the track is picked up again.
fn track_scene(
    video_id: &str,
    scene: &SceneSegment,
    first: RgbFrame,
    source: &mut dyn FrameSource,
    config: &PipelineConfig,
    backends: &Backends<'_>,
) -> Result<SceneOutput, SceneFailure> {
    let info = source.info().clone();
    let crop_size = backends.asd.crop_size();
    let mut tracker =
        Tracker::new(video_id, scene.scene_index, info.width, info.height, config.max_match_dist, config.max_track_gap);
    let mut crops: HashMap<u32, Vec<GrayCrop>> = HashMap::new();
    let mut landmarks = LandmarkReport::default();
    let mut recent: VecDeque<(usize, RgbFrame)> = VecDeque::new();
    let mut first = Some(first);

    for f in scene.start_frame..scene.end_frame {
        let frame = match first.take() {
            Some(fr) => fr,
            None => source.frame(f).map_err(|source| SceneFailure::Media { frame: f, source })?,
        };
        let dets = detect_faces(f, &frame, backends.face, config.face_confidence_min)?;
        tracker.assign_tracks(f, dets);
        for track in tracker.open_tracks_mut() {
            let n = track.observations.len();
            if track.observations[n - 1].frame_index != f {
                continue;
            }
            if let Some(lm) = backends.landmarks {
                attach_landmarks_to(&mut track.observations[n - 1], &frame, lm, &mut landmarks);
            }
            let out = crops.entry(track.track_id).or_default();
            let cur = track.observations[n - 1].bbox;
            if n >= 2 {
                let prev = &track.observations[n - 2];
                let steps = f - prev.frame_index;
                for k in 1..steps {
                    let g = prev.frame_index + k;
                    let bbox = prev.bbox.lerp(&cur, k as f64 / steps as f64);
                    let (_, gap_frame) = recent.iter().find(|(i, _)| *i == g).expect("gap frames are buffered");
                    out.push(
                        crop_face(gap_frame, &bbox, crop_size)
                            .map_err(|source| SceneFailure::Crop { frame: g, source })?,
                    );
                }
            }
            out.push(crop_face(&frame, &cur, crop_size).map_err(|source| SceneFailure::Crop { frame: f, source })?);
        }
        recent.push_back((f, frame));
        while recent.len() > config.max_track_gap.max(1) {
            recent.pop_front();
        }
    }
    Ok(SceneOutput { tracks: tracker.finish(), crops, landmarks })
}

/// Per-frame boxes for `[start, end)`, replicating the track's edge boxes
/// where the clip extends past the track.
fn clip_boxes(track: &FaceTrack, start: usize, end: usize) -> Vec<BoundingBox> {
    let dense = track.dense_boxes();
    let first = track.first_frame().expect("tracks are non-empty");
    (start..end).map(|f| dense[f.saturating_sub(first).min(dense.len() - 1)]).collect()
}

/// Speaking spans of one track, trimmed to the scene. Spans whose trimmed
/// clips would share a start frame are merged.
fn track_spans(
    track: &FaceTrack,
    crops: &[GrayCrop],
    mfcc: &[[f32; MFCC_COEFFS]],
    fps: f64,
    scene: &SceneSegment,
    config: &PipelineConfig,
    scorer: &dyn AsdScorer,
) -> Result<Vec<(usize, usize)>, AsdError> {
    let first = track.first_frame().expect("tracks are non-empty");
    let aligned = align_mfcc(mfcc, fps, first, crops.len());
    let raw =
        score_track(track.track_id, first, crops, &aligned, rows_per_frame(fps), config.asd_window_frames, scorer)?;
    let smoothed = smooth_scores(&raw, config.smooth_window_frames)?;
    let (_, spans) = decide_activity(&smoothed, config.asd_threshold);
    let mut out: Vec<(usize, usize)> = Vec::new();
    for span in spans {
        let (s, e) = trim_scene(scene, span, config.trim_margin_frames);
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    Ok(out)
}

/// Tracks and candidates of one scene, or `None` when it has no faces.
type SceneResult = Result<Option<(Vec<FaceTrack>, Vec<CandidateSample>)>, SceneFailure>;

#[allow(clippy::too_many_arguments)]
fn analyze_scene(
    asset: &VideoAsset,
    scene: &SceneSegment,
    source: &mut dyn FrameSource,
    audio: &Audio,
    mfcc: &[[f32; MFCC_COEFFS]],
    fps: f64,
    config: &PipelineConfig,
    backends: &Backends<'_>,
    report: &mut RunReport,
) -> SceneResult {
    let first =
        source.frame(scene.start_frame).map_err(|source| SceneFailure::Media { frame: scene.start_frame, source })?;
    if filter_scenes_with_faces(std::slice::from_ref(scene), source, backends.face, config.face_confidence_min)?
        .is_empty()
    {
        return Ok(None);
    }
    let out = track_scene(&asset.id, scene, first, source, config, backends)?;
    report.landmark_failures += out.landmarks.failed;

    let mut candidates = Vec::new();
    for track in &out.tracks {
        let crops = &out.crops[&track.track_id];
        for (start, end) in track_spans(track, crops, mfcc, fps, scene, config, backends.asd)? {
            let candidate_id = CandidateSample::make_id(&asset.id, scene.scene_index, track.track_id, start);
            let clip = audio.segment(start as f64 / fps, end as f64 / fps);
            let (transcription, failed) = match transcribe(&candidate_id, &clip, &config.language, backends.asr) {
                Ok(t) => (t, false),
                Err(e) => {
                    log::warn!("transcription of {candidate_id} failed: {e}");
                    report.transcription_failures += 1;
                    (Transcription::empty(&resolved_language(&config.language, None)), true)
                }
            };
            candidates.push(CandidateSample {
                candidate_id,
                video_id: asset.id.clone(),
                scene_index: scene.scene_index,
                track_id: track.track_id,
                start_frame: start,
                end_frame: end,
                fps,
                per_frame_bboxes: clip_boxes(track, start, end),
                transcription,
                transcription_failed: failed,
                status: Status::Pending,
                edited_text: None,
            });
        }
    }
    Ok(Some((out.tracks, candidates)))
}

/// Runs every stage on one video without touching the store.
pub fn analyze_video(
    asset: &VideoAsset,
    source: &mut dyn FrameSource,
    config: &PipelineConfig,
    backends: &Backends<'_>,
) -> Result<VideoAnalysis, PipelineError> {
    let fps = if asset.fps.is_finite() && asset.fps > 0.0 { asset.fps } else { config.fps_assumed };
    let scenes = detect_scenes_in(source, config.scene_threshold, config.min_scene_len_frames, config.downscale_factor)
        .map_err(PipelineError::Scenes)?;
    let audio = source.audio()?;
    let mfcc = MfccExtractor::new().extract(&audio.samples, MFCC_SAMPLE_RATE).map(|m| m.rows).unwrap_or_else(|e| {
        log::warn!("{}: no usable audio ({e}); scoring against silence", asset.id);
        Vec::new()
    });

    let mut report = RunReport { video_id: asset.id.clone(), scenes_found: scenes.len(), ..Default::default() };
    let mut tracks = Vec::new();
    let mut candidates = Vec::new();
    for scene in &scenes {
        match analyze_scene(asset, scene, source, &audio, &mfcc, fps, config, backends, &mut report) {
            Ok(None) => {}
            Ok(Some((t, c))) => {
                report.scenes_kept += 1;
                tracks.extend(t);
                candidates.extend(c);
            }
            Err(e) => {
                log::error!("{} scene {}: {e}", asset.id, scene.scene_index);
                report.scene_errors.push(SceneErrorRecord { scene_index: scene.scene_index, error: e.to_string() });
            }
        }
    }
    report.tracks = tracks.len();
    report.candidates = candidates.len();
    report.candidate_ids = candidates.iter().map(|c| c.candidate_id.clone()).collect();
    Ok(VideoAnalysis { report, tracks, candidates })
}

/// Appends new candidates, writes tracks and, when no scene failed, the
/// completion marker.
pub fn persist(
    analysis: &mut VideoAnalysis,
    config: &PipelineConfig,
    writer: &mut StoreWriter,
) -> Result<(), PipelineError> {
    for c in &analysis.candidates {
        if writer.contains(&c.candidate_id) {
            analysis.report.skipped_existing += 1;
        } else {
            writer.append_candidate(c)?;
        }
    }
    writer.write_tracks(&analysis.report.video_id, &analysis.tracks)?;
    if analysis.report.scene_errors.is_empty() {
        writer.write_run_marker(&RunMarker {
            video_id: analysis.report.video_id.clone(),
            config_hash: config.config_hash(),
            completed_at: now_timestamp(),
            report: serde_json::to_value(&analysis.report).expect("report serializes"),
        })?;
    }
    Ok(())
}

fn write_clips(source: &mut dyn FrameSource, candidates: &[CandidateSample], dir: &Path) {
    if !ffmpeg_available() {
        log::info!("ffmpeg not found; skipping clip export");
        return;
    }
    if let Err(e) = std::fs::create_dir_all(dir) {
        log::warn!("cannot create {}: {e}", dir.display());
        return;
    }
    let audio = match source.audio() {
        Ok(a) => a,
        Err(e) => {
            log::warn!("clip export: {e}");
            return;
        }
    };
    for c in candidates {
        let out = dir.join(format!("{}.mp4", c.candidate_id));
        if out.exists() {
            continue;
        }
        if let Err(e) = write_clip_mp4(source, &audio, c.start_frame, c.end_frame, &out) {
            log::warn!("clip {}: {e}", c.candidate_id);
        }
    }
}

/// Analyses one video and persists the result.
pub fn process_video(
    asset: &VideoAsset,
    source: &mut dyn FrameSource,
    config: &PipelineConfig,
    backends: &Backends<'_>,
    writer: &mut StoreWriter,
    options: &ProcessOptions,
) -> Result<RunReport, PipelineError> {
    let mut analysis = analyze_video(asset, source, config, backends)?;
    persist(&mut analysis, config, writer)?;
    if let Some(dir) = &options.media_dir {
        write_clips(source, &analysis.candidates, dir);
    }
    Ok(analysis.report)
}

/// Videos still to process: those without a completion marker recorded
/// under the current config hash.
pub fn resume(videos: &[PathBuf], store: &Store, config: &PipelineConfig) -> Vec<PathBuf> {
    let hash = config.config_hash();
    videos
        .iter()
        .filter(|path| {
            let id = match media::video_id(path) {
                Ok(id) => id,
                Err(_) => return true,
            };
            match store.read_run_marker(&id) {
                Ok(Some(marker)) => marker.config_hash != hash,
                Ok(None) => true,
                Err(e) => {
                    log::warn!("{}: {e}; re-queueing", path.display());
                    true
                }
            }
        })
        .cloned()
        .collect()
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub processed: Vec<RunReport>,
    /// Videos skipped because they were already complete.
    pub skipped: usize,
    pub failures: Vec<(PathBuf, String)>,
}

fn run_one(
    path: &Path,
    config: &PipelineConfig,
    backends: &Backends<'_>,
    writer: &Mutex<StoreWriter>,
    options: &ProcessOptions,
) -> Result<RunReport, PipelineError> {
    let mut source = media::open_video(path)?;
    let asset = media::asset_for(path, source.as_ref())?;
    let mut analysis = analyze_video(&asset, source.as_mut(), config, backends)?;
    persist(&mut analysis, config, &mut writer.lock().expect("store writer poisoned"))?;
    if let Some(dir) = &options.media_dir {
        write_clips(source.as_mut(), &analysis.candidates, dir);
    }
    Ok(analysis.report)
}

/// Processes every pending video with a bounded pool of workers, one
/// video per worker at a time. Store writes go through a single writer.
pub fn run_videos(
    videos: &[PathBuf],
    store: &Store,
    config: &PipelineConfig,
    backends: &Backends<'_>,
    options: &ProcessOptions,
) -> Result<BatchReport, PipelineError> {
    let pending = resume(videos, store, config);
    let skipped = videos.len() - pending.len();
    let writer = Mutex::new(store.writer()?);
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    let workers = options.workers.clamp(1, pending.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(path) = pending.get(i) else { break };
                let r = run_one(path, config, backends, &writer, options);
                results.lock().expect("results poisoned").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results poisoned");
    results.sort_by_key(|(i, _)| *i);
    let mut batch = BatchReport { skipped, ..Default::default() };
    for (i, r) in results {
        match r {
            Ok(report) => batch.processed.push(report),
            Err(e) => {
                log::error!("{}: {e}", pending[i].display());
                batch.failures.push((pending[i].clone(), e.to_string()));
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{AsdWindow, RawFace, RawTranscript};
    use crate::media::MemoryVideo;
    use crate::types::Word;

    fn solid(rgb: [u8; 3]) -> RgbFrame {
        RgbFrame::new(64, 48, rgb.iter().copied().cycle().take(64 * 48 * 3).collect())
    }

    fn face(_: usize, _: &RgbFrame) -> Result<Vec<RawFace>, BackendError> {
        Ok(vec![RawFace { bbox: BoundingBox::new(20.0, 10.0, 40.0, 34.0), confidence: 0.9 }])
    }

    fn asr(_: &str, _: &[f32], _: &str) -> Result<RawTranscript, BackendError> {
        Ok(RawTranscript {
            text: "hola".into(),
            language: Some("es".into()),
            words: vec![Word { word: "hola".into(), t0: 0.1, t1: 0.4 }],
        })
    }

    fn video(n: usize) -> MemoryVideo {
        MemoryVideo::new(25.0, vec![solid([90, 120, 60]); n], Audio::silence(16_000, n * 640))
    }

    fn run(n: usize, high: std::ops::Range<usize>) -> VideoAnalysis {
        let asd = move |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> {
            Ok((w.first_frame..w.first_frame + w.crops.len())
                .map(|f| if high.contains(&f) { 1.0 } else { 0.0 })
                .collect())
        };
        let backends = Backends { face: &face, landmarks: None, asd: &asd, asr: &asr };
        let mut v = video(n);
        let asset = VideoAsset {
            id: "vid".into(),
            path: "vid".into(),
            fps: 25.0,
            frame_count: n,
            width: 64,
            height: 48,
            audio_sample_rate: 16_000,
        };
        let config = PipelineConfig { asd_threshold: 0.5, ..Default::default() };
        analyze_video(&asset, &mut v, &config, &backends).unwrap()
    }

    #[test]
    fn one_span_gives_one_trimmed_candidate() {
        let a = run(60, 10..41);
        assert_eq!(a.report.scenes_kept, 1);
        assert_eq!(a.candidates.len(), 1);
        let c = &a.candidates[0];
        assert_eq!((c.start_frame, c.end_frame), (0, 53));
        assert_eq!(c.per_frame_bboxes.len(), 53);
        assert_eq!(c.transcription.text, "hola");
        assert_eq!(c.candidate_id, "vid:0:0:0");
    }

    #[test]
    fn quiet_track_gives_nothing() {
        assert!(run(60, 0..0).candidates.is_empty());
    }

    #[test]
    fn edge_boxes_are_replicated() {
        let mut t = FaceTrack { track_id: 0, video_id: "v".into(), scene_index: 0, observations: vec![] };
        for (f, x) in [(5, 0.0), (7, 2.0)] {
            t.observations.push(crate::types::FaceObservation {
                frame_index: f,
                bbox: BoundingBox::new(x, 0.0, x + 1.0, 1.0),
                confidence: 1.0,
                landmarks: None,
            });
        }
        let b = clip_boxes(&t, 3, 9);
        let xs: Vec<f64> = b.iter().map(|b| b.x1).collect();
        assert_eq!(xs, vec![0.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
    }
}
