//! Fixture-driven backend used by tests, examples and the `mock-backend`
//! subcommand. Replies depend only on the fixture and the request, so a
//! given fixture reproduces byte-identical output across runs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::*;
use super::scratch::{read_gray_crops, read_mfcc};
use crate::types::BoundingBox;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockFixture {
    /// Protocol version announced in the handshake (default 1).
    pub protocol: Option<u64>,
    pub capabilities: serde_json::Map<String, Value>,
    /// Never answer the handshake.
    pub hang: bool,
    /// Keep running after a shutdown request.
    pub ignore_shutdown: bool,
    /// Answer every non-handshake request with a line that is not JSON.
    pub malformed: bool,
    /// Append every received request line to this file.
    pub log_requests: Option<PathBuf>,
    pub faces: FaceScript,
    pub landmarks: LandmarkScript,
    pub asd: AsdScript,
    pub asr: AsrScript,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceScript {
    pub ranges: Vec<FaceRange>,
    pub frames: BTreeMap<usize, Vec<WireFace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRange {
    pub start: usize,
    pub end: usize,
    pub faces: Vec<WireFace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarkScript {
    /// Number of points returned (68 for a well-behaved aligner).
    pub points: usize,
    pub fail_frames: Vec<usize>,
}

impl Default for LandmarkScript {
    fn default() -> Self {
        LandmarkScript { points: 68, fail_frames: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsdMode {
    /// `value` for every frame.
    #[default]
    Constant,
    /// `score` inside the listed absolute frame ranges, `default` elsewhere.
    Ranges,
    /// 1, 0, 1, 0, ... by absolute frame parity.
    Parity,
    /// Crop mean intensity / 255.
    MeanIntensity,
    /// Correlation between crop brightness and audio energy over the window.
    Synchrony,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsdScript {
    pub mode: AsdMode,
    pub value: f64,
    pub default: f64,
    pub ranges: Vec<ScoreRange>,
    /// Return this many fewer scores than frames (protocol-error fixture).
    pub short_by: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrScript {
    pub text: String,
    pub language: Option<String>,
    pub words: Vec<WireWord>,
    pub fail: bool,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Extracts `123` from `.../f000123.png`.
fn frame_from_image_path(path: &str) -> Option<usize> {
    let stem = Path::new(path).file_stem()?.to_str()?;
    let digits: String = stem.chars().skip_while(|c| !c.is_ascii_digit()).take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 3 {
        return 0.0;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 1e-12 || vb <= 1e-12 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub struct ScriptedBackend {
    pub fixture: MockFixture,
}

type Outcome = Result<Value, (i64, String)>;

impl ScriptedBackend {
    pub fn new(fixture: MockFixture) -> Self {
        ScriptedBackend { fixture }
    }

    pub fn hello(&self) -> Value {
        json!({
            "protocol": self.fixture.protocol.unwrap_or(PROTOCOL_VERSION as u64),
            "capabilities": Value::Object(self.fixture.capabilities.clone()),
        })
    }

    pub fn handle(&self, method: &str, params: Value) -> Outcome {
        let bad = |e: serde_json::Error| (-32602, format!("invalid params: {e}"));
        match method {
            METHOD_HELLO => Ok(self.hello()),
            METHOD_DETECT_FACES => self.detect_faces(serde_json::from_value(params).map_err(bad)?),
            METHOD_DETECT_LANDMARKS => self.landmarks(serde_json::from_value(params).map_err(bad)?),
            METHOD_SCORE_ASD => self.score_asd(serde_json::from_value(params).map_err(bad)?),
            METHOD_TRANSCRIBE => self.transcribe(serde_json::from_value(params).map_err(bad)?),
            other => Err((-32601, format!("unknown method {other}"))),
        }
    }

    fn detect_faces(&self, p: DetectFacesParams) -> Outcome {
        let frame = frame_from_image_path(&p.image_path).ok_or((1, format!("no frame index in {}", p.image_path)))?;
        let script = &self.fixture.faces;
        let mut faces: Vec<WireFace> = script.frames.get(&frame).cloned().unwrap_or_default();
        for r in &script.ranges {
            if (r.start..r.end).contains(&frame) {
                faces.extend(r.faces.iter().cloned());
            }
        }
        Ok(json!({ "faces": faces }))
    }

    fn landmarks(&self, p: DetectLandmarksParams) -> Outcome {
        let frame = frame_from_image_path(&p.image_path).unwrap_or(usize::MAX);
        if self.fixture.landmarks.fail_frames.contains(&frame) {
            return Err((2, format!("alignment failed on frame {frame}")));
        }
        let BoundingBox { x1, y1, x2, y2 } = p.bbox;
        // Points on a grid inside the box.
        let n = self.fixture.landmarks.points;
        let points: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let (u, v) = ((i % 9) as f64 / 8.0, (i / 9) as f64 / 8.0);
                [x1 + (x2 - x1) * u, y1 + (y2 - y1) * v.min(1.0)]
            })
            .collect();
        Ok(json!({ "landmarks": points }))
    }

    fn score_asd(&self, p: ScoreAsdParams) -> Outcome {
        let script = &self.fixture.asd;
        let first = p.first_frame.unwrap_or(0);
        let mut scores: Vec<f64> = match script.mode {
            AsdMode::Constant => vec![script.value; p.n_frames],
            AsdMode::Parity => (0..p.n_frames).map(|i| if (first + i).is_multiple_of(2) { 1.0 } else { 0.0 }).collect(),
            AsdMode::Ranges => (0..p.n_frames)
                .map(|i| {
                    let f = first + i;
                    script.ranges.iter().find(|r| (r.start..r.end).contains(&f)).map_or(script.default, |r| r.score)
                })
                .collect(),
            AsdMode::MeanIntensity => {
                let crops = read_gray_crops(Path::new(&p.crops_path), p.n_frames, p.crop_size)
                    .map_err(|e| (3, e.to_string()))?;
                crops.iter().map(|c| c.mean() / 255.0).collect()
            }
            AsdMode::Synchrony => {
                let crops = read_gray_crops(Path::new(&p.crops_path), p.n_frames, p.crop_size)
                    .map_err(|e| (3, e.to_string()))?;
                let mfcc = read_mfcc(Path::new(&p.mfcc_path)).map_err(|e| (3, e.to_string()))?;
                if mfcc.len() != p.n_mfcc_rows || p.n_frames == 0 || mfcc.len() % p.n_frames != 0 {
                    return Err((3, format!("{} MFCC rows for {} frames", mfcc.len(), p.n_frames)));
                }
                let per = mfcc.len() / p.n_frames;
                let video: Vec<f64> = crops.iter().map(|c| c.mean()).collect();
                let audio: Vec<f64> =
                    mfcc.chunks(per).map(|rows| rows.iter().map(|r| r[0] as f64).sum::<f64>() / per as f64).collect();
                let r = pearson(&video, &audio).max(0.0);
                vec![r; p.n_frames]
            }
        };
        scores.truncate(p.n_frames.saturating_sub(script.short_by));
        Ok(json!({ "scores": scores }))
    }

    fn transcribe(&self, p: TranscribeParams) -> Outcome {
        let script = &self.fixture.asr;
        if script.fail {
            return Err((4, "recognizer failed".into()));
        }
        let language = if p.language == "auto" {
            script.language.clone().unwrap_or_else(|| "en".into())
        } else {
            p.language.clone()
        };
        Ok(json!({ "text": script.text, "language": language, "words": script.words }))
    }
}

/// Serves the protocol over the given streams until shutdown or EOF.
pub fn run_stdio(fixture: MockFixture, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    let backend = ScriptedBackend::new(fixture);
    let mut log = match &backend.fixture.log_requests {
        Some(path) => Some(std::fs::OpenOptions::new().create(true).append(true).open(path)?),
        None => None,
    };
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(log) = log.as_mut() {
            writeln!(log, "{line}")?;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("mock backend: unreadable request: {e}");
                continue;
            }
        };
        if request.method == METHOD_SHUTDOWN {
            if backend.fixture.ignore_shutdown {
                continue;
            }
            return Ok(());
        }
        let Some(id) = request.id else {
            eprintln!("mock backend: request without id: {line}");
            continue;
        };
        if request.method == METHOD_HELLO && backend.fixture.hang {
            continue;
        }
        if request.method != METHOD_HELLO && backend.fixture.malformed {
            writeln!(output, "this is not json")?;
            output.flush()?;
            continue;
        }
        let reply = match backend.handle(&request.method, request.params.unwrap_or(Value::Null)) {
            Ok(result) => Reply::ok(id, result),
            Err((code, message)) => Reply::err(id, code, message),
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    if backend.fixture.ignore_shutdown {
        // Simulate a wedged process: stay alive after stdin closes.
        loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(fixture: MockFixture, input: &str) -> String {
        let mut out = Vec::new();
        run_stdio(fixture, input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn frame_index_comes_from_file_name() {
        assert_eq!(frame_from_image_path("scratch/f000123.png"), Some(123));
        assert_eq!(frame_from_image_path("/tmp/x/f7.png"), Some(7));
        assert_eq!(frame_from_image_path("nothing.png"), None);
    }

    #[test]
    fn handshake_and_faces() {
        let mut fixture = MockFixture::default();
        fixture.faces.ranges.push(FaceRange {
            start: 100,
            end: 200,
            faces: vec![WireFace { bbox: BoundingBox::new(1.0, 2.0, 3.0, 4.0), confidence: 0.97 }],
        });
        let out = run(
            fixture,
            concat!(
                r#"{"id":0,"method":"hello","params":{"protocol":1,"kind":"face"}}"#,
                "\n",
                r#"{"id":1,"method":"detect_faces","params":{"image_path":"scratch/f000123.png"}}"#,
                "\n",
                r#"{"id":2,"method":"detect_faces","params":{"image_path":"scratch/f000001.png"}}"#,
                "\n",
                r#"{"method":"shutdown"}"#,
                "\n"
            ),
        );
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], r#"{"id":0,"result":{"capabilities":{},"protocol":1}}"#);
        assert_eq!(lines[1], r#"{"id":1,"result":{"faces":[{"bbox":[1.0,2.0,3.0,4.0],"confidence":0.97}]}}"#);
        assert_eq!(lines[2], r#"{"id":2,"result":{"faces":[]}}"#);
    }

    #[test]
    fn replies_are_reproducible() {
        let fixture =
            MockFixture { asd: AsdScript { mode: AsdMode::Parity, ..Default::default() }, ..Default::default() };
        let input = r#"{"id":4,"method":"score_asd","params":{"crops_path":"a","n_frames":5,"crop_size":112,"mfcc_path":"b","n_mfcc_rows":20,"first_frame":3}}"#;
        let a = run(fixture.clone(), input);
        assert_eq!(a, run(fixture, input));
        assert_eq!(a.trim(), r#"{"id":4,"result":{"scores":[0.0,1.0,0.0,1.0,0.0]}}"#);
    }

    #[test]
    fn unknown_methods_get_an_error_reply() {
        let out = run(MockFixture::default(), r#"{"id":9,"method":"frobnicate","params":{}}"#);
        let reply: Reply = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(reply.error.unwrap().code, -32601);
    }

    #[test]
    fn declared_language_is_echoed() {
        let fixture = MockFixture {
            asr: AsrScript { text: "hola".into(), language: Some("es".into()), ..Default::default() },
            ..Default::default()
        };
        let backend = ScriptedBackend::new(fixture);
        let auto = backend.handle(METHOD_TRANSCRIBE, json!({"audio_path":"c.wav","language":"auto"})).unwrap();
        assert_eq!(auto["language"], "es");
        let fr = backend.handle(METHOD_TRANSCRIBE, json!({"audio_path":"c.wav","language":"fr"})).unwrap();
        assert_eq!(fr["language"], "fr");
    }

    #[test]
    fn pearson_sanity() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }
}
