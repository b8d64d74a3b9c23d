//! Context-window ablation: score a labelled dataset at several window
//! sizes and tabulate accuracy, mAP and AUC per size.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asd::{align_mfcc, rows_per_frame, score_track, AsdError};
use crate::backend::AsdScorer;
use crate::dataset::DatasetItem;
use crate::media::{open_video, Audio, FrameSource, GrayCrop, MediaError};
use crate::metrics::{accuracy, average_precision, roc_auc, MetricsError};
use crate::mfcc::{MfccError, MfccExtractor, MFCC_COEFFS, MFCC_SAMPLE_RATE};
use crate::tracking::{crop_face, CropError};
use crate::types::BoundingBox;

/// Window sizes of the reference ablation, in frames.
pub const DEFAULT_WINDOWS: [usize; 9] = [5, 9, 13, 17, 21, 25, 35, 43, 51];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("item {item}: {source}")]
    Media { item: String, source: MediaError },
    #[error("item {item}: {source}")]
    Crop { item: String, source: CropError },
    #[error("item {item}: {source}")]
    Mfcc { item: String, source: MfccError },
    #[error("item {item}, window {window}: {source}")]
    Scoring { item: String, window: usize, source: AsdError },
    #[error("window {window}: {source}")]
    Metrics { window: usize, source: MetricsError },
    #[error("item {0} has an empty frame span")]
    EmptyItem(String),
    #[error("no items to evaluate")]
    NoItems,
}

/// Everything the scorer needs for one item.
#[derive(Debug, Clone)]
pub struct ItemFeatures {
    pub item_id: String,
    pub label: bool,
    pub crops: Vec<GrayCrop>,
    /// `rows_per_frame` rows per crop.
    pub mfcc: Vec<[f32; MFCC_COEFFS]>,
    pub rows_per_frame: usize,
}

/// Resolves video ids to opened sources under a media root. A video id
/// names either a raw video directory or a file (any extension).
pub struct MediaLibrary {
    root: PathBuf,
    open: HashMap<String, (Box<dyn FrameSource + Send>, Audio)>,
}

impl MediaLibrary {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        MediaLibrary { root: root.into(), open: HashMap::new() }
    }

    fn resolve(&self, video_id: &str) -> Result<PathBuf, MediaError> {
        let direct = self.root.join(video_id);
        if direct.exists() {
            return Ok(direct);
        }
        let entries =
            std::fs::read_dir(&self.root).map_err(|source| MediaError::Io { path: self.root.clone(), source })?;
        for e in entries.flatten() {
            let p = e.path();
            if p.file_stem().and_then(|s| s.to_str()) == Some(video_id) {
                return Ok(p);
            }
        }
        Err(MediaError::Invalid { path: direct, reason: "no such video in the media directory".into() })
    }

    pub fn get(&mut self, video_id: &str) -> Result<(&mut (dyn FrameSource + Send), &Audio), MediaError> {
        if !self.open.contains_key(video_id) {
            let path = self.resolve(video_id)?;
            let mut src = open_video(&path)?;
            let audio = src.audio()?;
            self.open.insert(video_id.to_string(), (src, audio));
        }
        let (src, audio) = self.open.get_mut(video_id).expect("just inserted");
        Ok((src.as_mut(), &*audio))
    }
}

/// Loads crops and aligned MFCCs for one item. Source clips are assumed
/// to be face-centred, so the whole frame is cropped.
pub fn load_item(
    item: &DatasetItem,
    media: &mut MediaLibrary,
    crop_size: u32,
    extractor: &MfccExtractor,
) -> Result<ItemFeatures, EvalError> {
    let id = item.item_id.clone();
    let media_err = |source| EvalError::Media { item: id.clone(), source };
    let (start, end) = (item.video_ref.start_frame, item.video_ref.end_frame);
    if end <= start {
        return Err(EvalError::EmptyItem(id));
    }
    let (crops, fps) = {
        let (src, _) = media.get(&item.video_ref.video_id).map_err(media_err)?;
        let fps = src.info().fps;
        let mut crops = Vec::with_capacity(end - start);
        for f in start..end {
            let frame = src.frame(f).map_err(media_err)?;
            let full = BoundingBox::new(0.0, 0.0, frame.width as f64, frame.height as f64);
            crops.push(
                crop_face(&frame, &full, crop_size).map_err(|source| EvalError::Crop { item: id.clone(), source })?,
            );
        }
        (crops, fps)
    };
    let (_, audio) = media.get(&item.audio_ref.video_id).map_err(media_err)?;
    let a = &item.audio_ref;
    let t0 = a.t0 + a.shift;
    let samples = audio.segment_wrapped(t0, t0 + item.duration, a.recording_duration);
    let mfcc =
        extractor.extract(&samples, MFCC_SAMPLE_RATE).map_err(|source| EvalError::Mfcc { item: id.clone(), source })?;
    let aligned = align_mfcc(&mfcc.rows, fps, 0, crops.len());
    Ok(ItemFeatures { item_id: id, label: item.label == 1, crops, mfcc: aligned, rows_per_frame: rows_per_frame(fps) })
}

pub fn load_items(
    items: &[DatasetItem],
    media: &mut MediaLibrary,
    crop_size: u32,
) -> Result<Vec<ItemFeatures>, EvalError> {
    let extractor = MfccExtractor::new();
    items.iter().map(|it| load_item(it, media, crop_size, &extractor)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub frames: usize,
    pub seconds: f64,
    pub accuracy: f64,
    /// Binomial standard error of the accuracy.
    pub accuracy_stderr: f64,
    pub map: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub fps: f64,
    pub threshold: f64,
    pub items: usize,
    pub rows: Vec<AblationRow>,
}

/// Item score: mean of the per-frame scores over all windows.
pub fn score_item(f: &ItemFeatures, window: usize, scorer: &dyn AsdScorer) -> Result<f64, EvalError> {
    let s = score_track(0, 0, &f.crops, &f.mfcc, f.rows_per_frame, window, scorer)
        .map_err(|source| EvalError::Scoring { item: f.item_id.clone(), window, source })?;
    Ok(s.values.iter().sum::<f64>() / s.values.len() as f64)
}

fn evaluate_window(
    features: &[ItemFeatures],
    window: usize,
    scorer: &dyn AsdScorer,
    fps: f64,
    threshold: f64,
) -> Result<AblationRow, EvalError> {
    let scores = features.iter().map(|f| score_item(f, window, scorer)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<bool> = features.iter().map(|f| f.label).collect();
    let predictions: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let m = |source| EvalError::Metrics { window, source };
    let (acc, se) = accuracy(&predictions, &labels).map_err(m)?;
    Ok(AblationRow {
        frames: window,
        seconds: window as f64 / fps,
        accuracy: acc,
        accuracy_stderr: se,
        map: average_precision(&scores, &labels).map_err(m)?,
        auc: roc_auc(&scores, &labels).map_err(m)?,
    })
}

/// One row per window size, evaluated in parallel.
pub fn ablate_context_windows(
    features: &[ItemFeatures],
    scorer: &dyn AsdScorer,
    windows: &[usize],
    fps: f64,
    threshold: f64,
) -> Result<AblationReport, EvalError> {
    if features.is_empty() {
        return Err(EvalError::NoItems);
    }
    let rows: Vec<Result<AblationRow, EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            windows.iter().map(|&w| s.spawn(move || evaluate_window(features, w, scorer, fps, threshold))).collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    Ok(AblationReport { fps, threshold, items: features.len(), rows: rows.into_iter().collect::<Result<_, _>>()? })
}

impl AblationReport {
    /// Aligned text table; accuracy in percent with its binomial standard error.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ =
            writeln!(out, "{:>7} {:>8} {:>16} {:>8} {:>8}", "frames", "seconds", "accuracy (%)", "mAP (%)", "AUC (%)");
        for r in &self.rows {
            let acc = format!("{:.1}±{:.1}", 100.0 * r.accuracy, 100.0 * r.accuracy_stderr);
            let _ = writeln!(
                out,
                "{:>7} {:>8} {:>16} {:>8.1} {:>8.1}",
                r.frames,
                format!("{:.2}", r.seconds),
                acc,
                100.0 * r.map,
                100.0 * r.auc
            );
        }
        let _ = writeln!(out, "(± is the binomial standard error; {} items, threshold {})", self.items, self.threshold);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Parses `5,9,13`.
pub fn parse_windows(s: &str) -> Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("bad window {x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err("window sizes must be positive".into());
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{AsdWindow, BackendError};

    fn features(label: bool, level: u8, n: usize) -> ItemFeatures {
        ItemFeatures {
            item_id: format!("i{level}"),
            label,
            crops: vec![GrayCrop { size: 1, data: vec![level] }; n],
            mfcc: vec![[0.0; 13]; 4 * n],
            rows_per_frame: 4,
        }
    }

    #[test]
    fn seconds_column_matches_reference_pairs() {
        let f = vec![features(true, 200, 60), features(false, 10, 60)];
        let scorer = |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> {
            Ok(w.crops.iter().map(|c| c.mean() / 255.0).collect())
        };
        let r = ablate_context_windows(&f, &scorer, &DEFAULT_WINDOWS, 25.0, 0.5).unwrap();
        let secs: Vec<String> = r.rows.iter().map(|r| format!("{:.2}", r.seconds)).collect();
        assert_eq!(secs[5], "1.00");
        assert_eq!(secs[8], "2.04");
        assert_eq!(secs[0], "0.20");
        assert!(r.rows.iter().all(|r| r.accuracy == 1.0 && r.auc == 1.0));
        let table = r.to_table();
        assert!(table.contains("   2.04"));
        assert!(table.contains("100.0±0.0"));

        let single = ablate_context_windows(&f, &scorer, &[25], 25.0, 0.5).unwrap();
        assert_eq!(single.rows.len(), 1);
    }

    #[test]
    fn window_lists() {
        assert_eq!(parse_windows("5, 9,51").unwrap(), vec![5, 9, 51]);
        assert!(parse_windows("5,0").is_err());
        assert!(parse_windows("x").is_err());
    }
}
