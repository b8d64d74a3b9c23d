//! Ranking metrics and a context-window ablation. The scorer here is a toy
//! that compares crop brightness with audio energy, so longer windows
//! average away more noise.

use avcorpus::backend::{AsdWindow, BackendError};
use avcorpus::eval::{ablate_context_windows, ItemFeatures};
use avcorpus::media::GrayCrop;
use avcorpus::metrics::{average_precision, roc_auc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = [0.9, 0.8, 0.7];
    let l = [true, false, true];
    println!("AP {:.4}  AUC {:.4}", average_precision(&s, &l)?, roc_auc(&s, &l)?);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let items: Vec<ItemFeatures> = (0..40)
        .map(|i| {
            let label = i % 2 == 0;
            let loud: Vec<bool> = (0..75).map(|_| rng.random_bool(0.5)).collect();
            let crops = loud.iter().map(|&on| GrayCrop { size: 2, data: vec![if on { 200 } else { 40 }; 4] }).collect();
            // Matched items share the on/off pattern; mismatched get a fresh one.
            let heard: Vec<bool> = if label { loud.clone() } else { (0..75).map(|_| rng.random_bool(0.5)).collect() };
            let mfcc = heard.iter().flat_map(|&on| std::iter::repeat_n([if on { 5.0 } else { -5.0 }; 13], 4)).collect();
            ItemFeatures { item_id: format!("item{i}"), label, crops, mfcc, rows_per_frame: 4 }
        })
        .collect();

    let noise = std::sync::Mutex::new(ChaCha8Rng::seed_from_u64(9));
    let scorer = |w: &AsdWindow<'_>| -> Result<Vec<f64>, BackendError> {
        let mut n = noise.lock().unwrap();
        Ok(w.crops
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let bright = c.data[0] > 100;
                let loud = w.mfcc[i * 4][0] > 0.0;
                (if bright == loud { 1.0 } else { -1.0 }) + n.random_range(-3.0..3.0)
            })
            .collect())
    };
    let report = ablate_context_windows(&items, &scorer, &[5, 25, 51], 25.0, 0.0)?;
    print!("{}", report.to_table());
    Ok(())
}
