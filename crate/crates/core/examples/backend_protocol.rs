//! Talks to a model backend over the stdio JSON-lines protocol. The example
//! serves its own backend: run without arguments it re-launches itself as a
//! scripted face/ASR backend and calls it.

use std::io::{stdin, stdout, BufReader};
use std::sync::Arc;

use avcorpus::backend::client::BackendHandle;
use avcorpus::backend::mock::{run_stdio, MockFixture};
use avcorpus::backend::protocol::BackendKind;
use avcorpus::backend::remote::{RemoteFaceDetector, RemoteRecognizer};
use avcorpus::backend::{FaceDetector, SpeechRecognizer};
use avcorpus::media::RgbFrame;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("--serve") {
        let fixture = MockFixture::load(args[2].as_ref())?;
        run_stdio(fixture, BufReader::new(stdin()), stdout())?;
        return Ok(());
    }

    let dir = tempfile::tempdir()?;
    let fixture = dir.path().join("backend.json");
    std::fs::write(
        &fixture,
        json!({
            "capabilities": { "max_inflight": 2 },
            "faces": { "ranges": [ { "start": 0, "end": 10, "faces": [ { "bbox": [8, 8, 40, 48], "confidence": 0.9 } ] } ] },
            "asr": { "text": "buenos dias", "language": "es",
                     "words": [ { "w": "buenos", "t0": 0.1, "t1": 0.5 }, { "w": "dias", "t0": 0.6, "t1": 1.0 } ] }
        })
        .to_string(),
    )?;
    let me = std::env::current_exe()?;
    let cmd = shlex::try_join([me.to_str().unwrap(), "--serve", fixture.to_str().unwrap()])?;

    let handle = Arc::new(BackendHandle::spawn(&cmd, BackendKind::Face)?);
    println!("protocol v{}, capabilities {:?}", handle.protocol_version(), handle.capabilities());

    let faces = RemoteFaceDetector::new(handle.clone(), dir.path().join("scratch"));
    let frame = RgbFrame::solid(64, 64, [90, 90, 90]);
    for f in [3, 12] {
        println!("frame {f}: {:?}", faces.detect(f, &frame)?);
    }

    let asr = RemoteRecognizer::new(handle.clone(), dir.path());
    let t = asr.transcribe("clip", &vec![0.0; 16_000], "auto")?;
    println!("transcript {:?} ({:?}), {} words", t.text, t.language, t.words.len());

    match handle.call::<_, serde_json::Value>("no_such_method", &json!({})) {
        Err(e) => println!("unknown method: {e}"),
        Ok(v) => println!("unexpected reply {v}"),
    }
    println!("shutdown: {:?}", handle.shutdown());
    Ok(())
}
