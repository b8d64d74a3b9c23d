//! Active-speaker scoring of face tracks and the post-processing that turns
//! raw scores into trimmed speaking spans.

use thiserror::Error;

use crate::backend::{AsdScorer, AsdWindow, BackendError};
use crate::media::GrayCrop;
use crate::mfcc::MFCC_COEFFS;
use crate::types::{SceneSegment, ScoreSeries};

#[derive(Debug, Error)]
pub enum AsdError {
    #[error("track {track_id}, window {window_index} (frame {first_frame}): {source}")]
    Backend {
        track_id: u32,
        window_index: usize,
        first_frame: usize,
        #[source]
        source: BackendError,
    },
    #[error("track {track_id}, window {window_index}: expected {expected} scores, got {got}")]
    ScoreCount { track_id: u32, window_index: usize, expected: usize, got: usize },
    #[error("track {track_id}, window {window_index}: non-finite score")]
    NonFinite { track_id: u32, window_index: usize },
    #[error("smoothing window must be odd and >= 1, got {0}")]
    EvenWindow(usize),
    #[error("window size must be >= 1")]
    ZeroWindow,
    #[error("{crops} crops but {rows} MFCC rows at {per_frame} rows per frame")]
    Misaligned { crops: usize, rows: usize, per_frame: usize },
    #[error("threshold tuning needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not a number")]
    NotANumber(usize),
}

/// MFCC rows per video frame: `round((1000 / fps) / 10)`, at least 1.
pub fn rows_per_frame(fps: f64) -> usize {
    ((100.0 / fps).round() as usize).max(1)
}

/// MFCC rows for video frames `[first_frame, first_frame + n_frames)`.
/// Frame `i` takes `rows_per_frame` consecutive rows starting at the row
/// nearest its timestamp; rows past either end of the matrix are filled by
/// repeating the edge row.
pub fn align_mfcc(
    mfcc: &[[f32; MFCC_COEFFS]],
    fps: f64,
    first_frame: usize,
    n_frames: usize,
) -> Vec<[f32; MFCC_COEFFS]> {
    let per = rows_per_frame(fps);
    if mfcc.is_empty() {
        return vec![[0.0; MFCC_COEFFS]; per * n_frames];
    }
    let last = mfcc.len() - 1;
    let mut out = Vec::with_capacity(per * n_frames);
    for f in first_frame..first_frame + n_frames {
        let start = (f as f64 * 100.0 / fps).round() as usize;
        for r in 0..per {
            out.push(mfcc[(start + r).min(last)]);
        }
    }
    out
}

/// A half-open run of frames `[first_frame, first_frame + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSlice {
    pub first_frame: usize,
    pub len: usize,
}

/// Consecutive non-overlapping windows over `[start, end)`; the last one
/// holds the remainder.
pub fn slice_windows(start: usize, end: usize, window: usize) -> Result<Vec<WindowSlice>, AsdError> {
    if window == 0 {
        return Err(AsdError::ZeroWindow);
    }
    Ok((start..end)
        .step_by(window)
        .map(|first_frame| WindowSlice { first_frame, len: window.min(end - first_frame) })
        .collect())
}

/// Scores a track window by window. `crops[i]` is the face at frame
/// `first_frame + i`; `mfcc` holds `rows_per_frame` rows per crop.
pub fn score_track(
    track_id: u32,
    first_frame: usize,
    crops: &[GrayCrop],
    mfcc: &[[f32; MFCC_COEFFS]],
    rows_per_frame: usize,
    window: usize,
    scorer: &dyn AsdScorer,
) -> Result<ScoreSeries, AsdError> {
    if mfcc.len() != crops.len() * rows_per_frame {
        return Err(AsdError::Misaligned { crops: crops.len(), rows: mfcc.len(), per_frame: rows_per_frame });
    }
    let crop_size = crops.first().map_or(scorer.crop_size(), |c| c.size);
    let mut values = Vec::with_capacity(crops.len());
    for (window_index, slice) in slice_windows(0, crops.len(), window)?.into_iter().enumerate() {
        let (a, b) = (slice.first_frame, slice.first_frame + slice.len);
        let w = AsdWindow {
            track_id,
            window_index,
            first_frame: first_frame + a,
            crop_size,
            crops: &crops[a..b],
            mfcc: &mfcc[a * rows_per_frame..b * rows_per_frame],
        };
        let scores = scorer.score(&w).map_err(|source| AsdError::Backend {
            track_id,
            window_index,
            first_frame: first_frame + a,
            source,
        })?;
        if scores.len() != slice.len {
            return Err(AsdError::ScoreCount { track_id, window_index, expected: slice.len, got: scores.len() });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(AsdError::NonFinite { track_id, window_index });
        }
        values.extend(scores);
    }
    Ok(ScoreSeries { track_id, first_frame, values })
}

/// Centered moving mean with the window truncated at both ends.
pub fn smooth_values(values: &[f64], k: usize) -> Result<Vec<f64>, AsdError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(AsdError::EvenWindow(k));
    }
    let half = (k - 1) / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let w = &values[i.saturating_sub(half)..(i + half + 1).min(n)];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            // Rounding can push the mean a hair outside the window's range.
            let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            mean.clamp(lo, hi)
        })
        .collect())
}

pub fn smooth_scores(series: &ScoreSeries, k: usize) -> Result<ScoreSeries, AsdError> {
    Ok(ScoreSeries {
        track_id: series.track_id,
        first_frame: series.first_frame,
        values: smooth_values(&series.values, k)?,
    })
}

/// `mask[i] = values[i] >= threshold` and the maximal true runs as
/// absolute frame spans `[start, end)`.
pub fn decide_activity(series: &ScoreSeries, threshold: f64) -> (Vec<bool>, Vec<(usize, usize)>) {
    let mask: Vec<bool> = series.values.iter().map(|&v| v >= threshold).collect();
    let mut spans = Vec::new();
    let mut run_start = None;
    for (i, &on) in mask.iter().chain(std::iter::once(&false)).enumerate() {
        match (on, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                spans.push((series.first_frame + s, series.first_frame + i));
                run_start = None;
            }
            _ => {}
        }
    }
    (mask, spans)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub j_statistic: f64,
}

/// Youden-optimal threshold over the unique score values, predicting
/// positive when `score >= t`. Ties go to the smallest threshold.
pub fn optimal_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdReport, AsdError> {
    if scores.len() != labels.len() {
        return Err(AsdError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(AsdError::NotANumber(i));
    }
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(AsdError::SingleClass { positives: p, negatives: n });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Walk thresholds from high to low; J compared exactly as tp*N - fp*P.
    let (mut tp, mut fp) = (0i128, 0i128);
    let (pi, ni) = (p as i128, n as i128);
    let mut best: Option<(i128, f64, i128, i128)> = None;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let j = tp * ni - fp * pi;
        if best.is_none_or(|(bj, ..)| j >= bj) {
            best = Some((j, t, tp, fp));
        }
    }
    let (_, threshold, tp, fp) = best.expect("non-empty input");
    let tpr = tp as f64 / p as f64;
    let fpr = fp as f64 / n as f64;
    Ok(ThresholdReport { threshold, tpr, fpr, j_statistic: tpr - fpr })
}

/// Grows the active span by `margin` frames on each side, clamped to the scene.
pub fn trim_scene(scene: &SceneSegment, active: (usize, usize), margin: usize) -> (usize, usize) {
    (scene.start_frame.max(active.0.saturating_sub(margin)), scene.end_frame.min(active.1 + margin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> ScoreSeries {
        ScoreSeries { track_id: 0, first_frame: 0, values }
    }

    #[test]
    fn rows_per_frame_at_common_rates() {
        assert_eq!(rows_per_frame(25.0), 4);
        assert_eq!(rows_per_frame(30.0), 3);
        assert_eq!(rows_per_frame(50.0), 2);
        assert_eq!(rows_per_frame(200.0), 1);
    }

    #[test]
    fn alignment_pads_with_the_edge_row() {
        let m: Vec<[f32; 13]> = (0..10).map(|i| [i as f32; 13]).collect();
        let a = align_mfcc(&m, 25.0, 1, 3);
        let firsts: Vec<f32> = a.iter().map(|r| r[0]).collect();
        assert_eq!(firsts, vec![4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0]);
    }

    #[test]
    fn windows_partition_the_track() {
        let w = slice_windows(0, 120, 51).unwrap();
        assert_eq!(w.iter().map(|s| s.len).collect::<Vec<_>>(), vec![51, 51, 18]);
        assert_eq!(slice_windows(10, 61, 51).unwrap(), vec![WindowSlice { first_frame: 10, len: 51 }]);
        assert!(slice_windows(0, 5, 0).is_err());
    }

    #[test]
    fn scoring_concatenates_windows_and_checks_counts() {
        let crops = vec![GrayCrop { size: 1, data: vec![0] }; 7];
        let mfcc = vec![[0f32; 13]; 28];
        let parity = |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> {
            Ok((0..w.crops.len()).map(|i| ((w.first_frame + i + 1) % 2) as f64).collect())
        };
        let s = score_track(3, 10, &crops, &mfcc, 4, 3, &parity).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.first_frame, 10);

        let short = |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> { Ok(vec![1.0; w.crops.len() - 1]) };
        assert!(matches!(
            score_track(3, 10, &crops, &mfcc, 4, 3, &short),
            Err(AsdError::ScoreCount { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_values(&[0.0, 1.0, 0.0], 3).unwrap(), vec![0.5, 1.0 / 3.0, 0.5]);
        assert_eq!(smooth_values(&[2.0; 6], 5).unwrap(), vec![2.0; 6]);
        assert_eq!(smooth_values(&[0.3, 0.1], 1).unwrap(), vec![0.3, 0.1]);
        assert!(matches!(smooth_values(&[0.0], 4), Err(AsdError::EvenWindow(4))));
    }

    #[test]
    fn activity_spans() {
        let (mask, spans) = decide_activity(&series(vec![0.1, 0.9, 0.9, 0.1]), 0.5);
        assert_eq!(mask, vec![false, true, true, false]);
        assert_eq!(spans, vec![(1, 3)]);
        let s = ScoreSeries { track_id: 0, first_frame: 5, values: vec![0.6, 0.2, 0.7, 0.8] };
        assert_eq!(decide_activity(&s, 0.5).1, vec![(5, 6), (7, 9)]);
        assert!(decide_activity(&series(vec![0.1; 4]), 0.5).1.is_empty());
        assert_eq!(decide_activity(&series(vec![0.1; 4]), 0.0).1, vec![(0, 4)]);
    }

    #[test]
    fn worked_threshold_example() {
        let r = optimal_threshold(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(r.threshold, 0.35);
        assert_eq!((r.tpr, r.fpr, r.j_statistic), (1.0, 0.5, 0.5));
    }

    #[test]
    fn threshold_edge_cases() {
        let r = optimal_threshold(&[0.1, 0.2, 0.7, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!((r.threshold, r.j_statistic), (0.7, 1.0));
        let r = optimal_threshold(&[0.9, 0.7, 0.2, 0.1], &[false, false, true, true]).unwrap();
        assert_eq!((r.threshold, r.tpr, r.fpr), (0.1, 1.0, 1.0));
        assert!(matches!(optimal_threshold(&[0.1, 0.2], &[true, true]), Err(AsdError::SingleClass { .. })));
    }

    #[test]
    fn trimming() {
        let scene = SceneSegment { scene_index: 0, start_frame: 100, end_frame: 400, cut_score: 0.0 };
        assert_eq!(trim_scene(&scene, (150, 200), 12), (138, 212));
        assert_eq!(trim_scene(&scene, (100, 200), 12), (100, 212));
        assert_eq!(trim_scene(&scene, (150, 395), 12), (138, 400));
        assert_eq!(trim_scene(&scene, (150, 200), 0), (150, 200));
    }
}
