//! Builds a speaker-disjoint train/validation/test manifest of matched and
//! mismatched audio-visual pairs from a list of transcribed utterances.

use std::collections::HashMap;

use avcorpus::dataset::{build_splits, stats_table, BuildOptions, Mix, SampleType, Sex, SourceUtterance, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sources = Vec::new();
    let mut assignment = HashMap::new();
    for s in 0..12 {
        let speaker = format!("spk{s:02}");
        let split = match s % 4 {
            0 | 1 => Split::Training,
            2 => Split::Validation,
            _ => Split::Test,
        };
        assignment.insert(speaker.clone(), split);
        for k in 0..8 {
            let t0 = k as f64 * 5.0;
            let d = 1.5 + (k % 3) as f64;
            sources.push(SourceUtterance {
                utterance_id: format!("{speaker}-u{k}"),
                video_id: format!("vid-{speaker}"),
                start_frame: (t0 * 25.0) as usize,
                end_frame: ((t0 + d) * 25.0) as usize,
                t0,
                t1: t0 + d,
                speaker_id: speaker.clone(),
                speaker_sex: Some(if s % 2 == 0 { Sex::F } else { Sex::M }),
                recording_duration: 45.0,
            });
        }
    }

    let opts = BuildOptions { mix: Mix::default(), seed: 42, items_per_split: None };
    let manifest = build_splits(&sources, &assignment, &opts)?;
    print!("{}", stats_table(&manifest.header.stats));
    for t in SampleType::ALL {
        println!("{t:>18}: {}", manifest.items.iter().filter(|i| i.sample_type == t).count());
    }
    if let Some(it) = manifest.items.iter().find(|i| i.sample_type == SampleType::TemporalMismatch) {
        println!(
            "example shifted item {} (audio shift {:.2} s, overlap {:.2})",
            it.item_id,
            it.audio_ref.shift,
            it.overlap()
        );
    }
    println!("first manifest line: {}", manifest.to_jsonl().lines().nth(1).unwrap_or(""));
    Ok(())
}
