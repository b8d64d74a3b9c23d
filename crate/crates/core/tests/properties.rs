mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use avcorpus::asd::{optimal_threshold, smooth_values};
use avcorpus::dataset::{
    build_splits, make_temporal_mismatch, BuildOptions, Mix, SampleType, Sex, SourceUtterance, Split,
};
use avcorpus::metrics::{average_precision, roc_auc};
use avcorpus::tracking::Tracker;
use avcorpus::types::{BoundingBox, FaceObservation};

fn odd_window() -> impl Strategy<Value = usize> {
    (0usize..8).prop_map(|h| 2 * h + 1)
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..max)
        .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(any::<bool>(), n)))
        .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
        .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 4.0).collect(), l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn smoothing_matches_the_naive_mean(v in prop::collection::vec(-10.0f64..10.0, 1..80), k in odd_window()) {
        let got = smooth_values(&v, k).unwrap();
        let want = common::smooth_oracle(&v, k);
        prop_assert_eq!(got.len(), v.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_is_linear_and_bounded(
        pair in (1usize..60).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        k in odd_window(),
    ) {
        let (x, y) = pair;
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let (sx, sy, sm) = (smooth_values(&x, k).unwrap(), smooth_values(&y, k).unwrap(), smooth_values(&mix, k).unwrap());
        for i in 0..x.len() {
            prop_assert!((sm[i] - (a * sx[i] + b * sy[i])).abs() < 1e-9);
        }
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(sx.iter().all(|&s| lo <= s && s <= hi));
        let c = smooth_values(&vec![x[0]; x.len()], k).unwrap();
        prop_assert!(c.iter().all(|&s| s == x[0]));
    }

    #[test]
    fn even_windows_are_rejected(k in (0usize..10).prop_map(|h| 2 * h)) {
        prop_assert!(smooth_values(&[1.0, 2.0], k).is_err());
    }

    #[test]
    fn threshold_is_the_brute_force_optimum((s, l) in labelled(60)) {
        let r = optimal_threshold(&s, &l).unwrap();
        let (j, t) = common::youden_oracle(&s, &l);
        prop_assert!((r.j_statistic - j).abs() < 1e-9);
        prop_assert_eq!(r.threshold, t);
        prop_assert!((r.tpr - r.fpr - r.j_statistic).abs() < 1e-12);
    }

    #[test]
    fn ap_and_auc_match_their_definitions((s, l) in labelled(60)) {
        prop_assert!((average_precision(&s, &l).unwrap() - common::ap_oracle(&s, &l)).abs() < 1e-12);
        prop_assert!((roc_auc(&s, &l).unwrap() - common::auc_oracle(&s, &l)).abs() < 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps((s, l) in labelled(40)) {
        let mapped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&mapped, &l).unwrap());
    }

    #[test]
    fn tracking_assigns_each_detection_exactly_once(
        frames in prop::collection::vec(prop::collection::vec((0.0f64..150.0, 0.0f64..100.0), 0..5), 1..60),
        gap in 0usize..6,
    ) {
        let mut tracker = Tracker::new("v", 0, 200, 150, 0.10, gap);
        let mut seen = HashSet::new();
        for (f, dets) in frames.iter().enumerate() {
            let obs = dets
                .iter()
                .map(|&(x, y)| FaceObservation { frame_index: f, bbox: BoundingBox::new(x, y, x + 40.0, y + 40.0), confidence: 0.9, landmarks: None })
                .collect();
            tracker.assign_tracks(f, obs);
            for &(x, y) in dets {
                seen.insert((f, x.to_bits(), y.to_bits()));
            }
        }
        let total: usize = frames.iter().map(Vec::len).sum();
        let tracks = tracker.finish();
        let mut placed = HashSet::new();
        let mut ids = HashSet::new();
        for t in &tracks {
            prop_assert!(ids.insert(t.track_id));
            prop_assert!(!t.observations.is_empty());
            for w in t.observations.windows(2) {
                prop_assert!(w[1].frame_index > w[0].frame_index);
                prop_assert!(w[1].frame_index - w[0].frame_index <= gap.max(1));
            }
            for o in &t.observations {
                prop_assert!(placed.insert((o.frame_index, o.bbox.x1.to_bits(), o.bbox.y1.to_bits())));
            }
        }
        prop_assert_eq!(placed.len(), total);
        prop_assert_eq!(placed, seen);
    }

    #[test]
    fn apportioned_counts_sum_and_stay_close(n in 0usize..5000, w in prop::collection::vec(1u32..20, 4)) {
        let sum: u32 = w.iter().sum();
        let mix = Mix {
            positive: w[0] as f64 / sum as f64,
            temporal_mismatch: w[1] as f64 / sum as f64,
            partial_mismatch: w[2] as f64 / sum as f64,
            complete_mismatch: w[3] as f64 / sum as f64,
        };
        let counts = mix.apportion(n);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (k, t) in SampleType::ALL.into_iter().enumerate() {
            prop_assert!((counts[k] as f64 - mix.get(t) * n as f64).abs() < 1.0);
        }
    }

    #[test]
    fn temporal_shift_is_between_half_and_full_duration(d in 0.2f64..10.0, extra in 0.0f64..30.0, seed in any::<u64>()) {
        let u = utterance(0, 0, 0.0, d, 2.0 * d + extra);
        let it = make_temporal_mismatch(&u, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = it.audio_ref.shift.abs();
        prop_assert!(d / 2.0 <= s && s <= d);
        prop_assert!(it.overlap() <= 0.5 + 1e-12);
        prop_assert!(it.validate().is_ok());
    }

    #[test]
    fn built_splits_respect_every_constraint(
        speakers in 2usize..8,
        per in 2usize..5,
        n in 6usize..60,
        seed in any::<u64>(),
    ) {
        let mut pool = Vec::new();
        for s in 0..speakers {
            for k in 0..per {
                pool.push(utterance(s, k, k as f64 * 3.0, k as f64 * 3.0 + 2.0, 40.0));
            }
        }
        let assignment: HashMap<String, Split> =
            (0..speakers).map(|s| (format!("s{s}"), if s % 2 == 0 { Split::Training } else { Split::Test })).collect();
        let opts = BuildOptions { mix: Mix::default(), seed, items_per_split: Some(n) };
        let built = build_splits(&pool, &assignment, &opts);
        // A split with a single speaker has nobody to borrow complete-mismatch audio from.
        if speakers < 4 {
            prop_assert!(built.is_err());
            return Ok(());
        }
        let m = built.unwrap();
        prop_assert_eq!(m.items.len(), 2 * n);
        let mut ids = HashSet::new();
        for it in &m.items {
            prop_assert!(it.validate().is_ok(), "{:?}", it);
            prop_assert!(ids.insert(it.item_id.clone()));
            prop_assert_eq!(assignment[&it.speaker_video], it.split);
            prop_assert_eq!(assignment[&it.speaker_audio], it.split);
        }
        for split in [Split::Training, Split::Test] {
            let counts = Mix::default().apportion(n);
            for (k, t) in SampleType::ALL.into_iter().enumerate() {
                prop_assert_eq!(m.split(split).filter(|i| i.sample_type == t).count(), counts[k]);
            }
        }
        prop_assert_eq!(build_splits(&pool, &assignment, &opts).unwrap(), m);
    }
}

fn utterance(speaker: usize, k: usize, t0: f64, t1: f64, recording: f64) -> SourceUtterance {
    SourceUtterance {
        utterance_id: format!("s{speaker}u{k}"),
        video_id: format!("rec{speaker}"),
        start_frame: (t0 * 25.0) as usize,
        end_frame: (t1 * 25.0) as usize,
        t0,
        t1,
        speaker_id: format!("s{speaker}"),
        speaker_sex: Some(if speaker.is_multiple_of(2) { Sex::F } else { Sex::M }),
        recording_duration: recording,
    }
}
