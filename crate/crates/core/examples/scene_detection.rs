//! Finds hard cuts in a synthetic three-shot video and shows how the
//! threshold and minimum scene length change the result.

use avcorpus::media::Audio;
use avcorpus::scene::{content_score, detect_scenes_in, to_hsv};
use avcorpus::synth::scene_video;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shots = [(40, [200, 40, 40]), (12, [40, 190, 60]), (48, [30, 50, 210])];
    let mut video = scene_video(25.0, 64, 48, &shots, &[], Audio::silence(16_000, 0));

    let a = to_hsv(&video.frames[39], 1)?;
    let b = to_hsv(&video.frames[40], 1)?;
    println!("content score across the first cut: {:.1}", content_score(&a, &b)?);

    for (threshold, min_len) in [(27.0, 15), (27.0, 1), (200.0, 1)] {
        let scenes = detect_scenes_in(&mut video, threshold, min_len, 1)?;
        let spans: Vec<String> = scenes.iter().map(|s| format!("[{},{})", s.start_frame, s.end_frame)).collect();
        println!("threshold {threshold:>5}, min length {min_len:>2}: {}", spans.join(" "));
    }
    Ok(())
}
