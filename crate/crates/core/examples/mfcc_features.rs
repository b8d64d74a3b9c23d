//! Computes the 13-coefficient audio features the speaker scorer sees and
//! how they line up with video frames.

use avcorpus::asd::{align_mfcc, rows_per_frame};
use avcorpus::mfcc::{frame_count, MfccExtractor, MFCC_SAMPLE_RATE};
use avcorpus::synth::sine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ex = MfccExtractor::new();
    let tone = sine(440.0, 1.0, 0.5);
    let m = ex.extract(&tone.samples, MFCC_SAMPLE_RATE)?;
    println!("{} samples -> {} rows (formula says {})", tone.samples.len(), m.len(), frame_count(tone.samples.len()));
    let silence = ex.extract(&vec![0.0; 16_000], MFCC_SAMPLE_RATE)?;
    println!("c0 tone {:.2} vs silence {:.2}", m.rows[0][0], silence.rows[0][0]);
    let fmt = |r: &[f32; 13]| r.iter().map(|c| format!("{c:7.2}")).collect::<String>();
    println!("tone row 10:   {}", fmt(&m.rows[10]));

    // At 25 fps each video frame covers 4 rows of 10 ms hop.
    let per = rows_per_frame(25.0);
    let aligned = align_mfcc(&m.rows, 25.0, 5, 10);
    println!("{per} rows per frame; frames 5..15 use {} rows", aligned.len());
    if let Err(e) = ex.extract(&[0.0; 399], MFCC_SAMPLE_RATE) {
        println!("399 samples: {e}");
    }
    Ok(())
}
