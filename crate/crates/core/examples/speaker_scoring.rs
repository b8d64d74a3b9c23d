//! Turns raw per-frame speaker scores into speech spans: smooth, threshold,
//! split into runs and trim the ends. Then tunes a threshold on labelled
//! scores with Youden's J.

use avcorpus::asd::{decide_activity, optimal_threshold, smooth_scores, trim_scene};
use avcorpus::types::{SceneSegment, ScoreSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Frames 40..110 are speech; scores are noisy around +1 / -1.
    let values: Vec<f64> =
        (0..160).map(|f| if (40..110).contains(&f) { 1.0 } else { -1.0 } + rng.random_range(-1.4..1.4)).collect();
    let raw = ScoreSeries { track_id: 0, first_frame: 200, values };

    let (_, noisy) = decide_activity(&raw, 0.0);
    println!("unsmoothed: {} spans", noisy.len());
    let smooth = smooth_scores(&raw, 11)?;
    let (_, spans) = decide_activity(&smooth, 0.0);
    println!("smoothed (k=11): {spans:?}");

    let scene = SceneSegment { scene_index: 0, start_frame: 200, end_frame: 360, cut_score: 0.0 };
    for &span in &spans {
        println!("span {span:?} with a 12-frame margin, clamped to the scene: {:?}", trim_scene(&scene, span, 12));
    }

    let labels: Vec<bool> = (0..160).map(|f| (40..110).contains(&f)).collect();
    let r = optimal_threshold(&smooth.values, &labels)?;
    println!("tuned threshold {:.3}: TPR {:.3} FPR {:.3} J {:.3}", r.threshold, r.tpr, r.fpr, r.j_statistic);
    Ok(())
}
