//! Writes the synthetic demo video and scripted backend fixtures.
//!
//! ```text
//! cargo run --example demo_corpus -- /tmp/demo
//! ```

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    let demo = avcorpus::synth::demo_corpus(std::path::Path::new(&dir))?;
    println!("video          {}", demo.video.display());
    println!("face fixture   {}", demo.face_fixture.display());
    println!("asd fixture    {}", demo.asd_fixture.display());
    println!("asr fixture    {}", demo.asr_fixture.display());
    println!("speaking       frames {}..{}", demo.speaking.start, demo.speaking.end);
    Ok(())
}
