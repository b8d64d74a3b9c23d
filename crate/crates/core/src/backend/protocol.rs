//! Wire format. One JSON object per line in each direction.
//!
//! ```text
//! -> {"id":0,"method":"hello","params":{"protocol":1,"kind":"face"}}
//! <- {"id":0,"result":{"protocol":1,"capabilities":{...}}}
//! -> {"id":1,"method":"detect_faces","params":{"image_path":"scratch/f000123.png"}}
//! <- {"id":1,"result":{"faces":[{"bbox":[x1,y1,x2,y2],"confidence":0.97}]}}
//! <- {"id":2,"error":{"code":-1,"message":"..."}}
//! -> {"method":"shutdown"}
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::types::{BoundingBox, Word};

pub const PROTOCOL_VERSION: u32 = 1;

pub const METHOD_HELLO: &str = "hello";
pub const METHOD_SHUTDOWN: &str = "shutdown";
pub const METHOD_DETECT_FACES: &str = "detect_faces";
pub const METHOD_DETECT_LANDMARKS: &str = "detect_landmarks";
pub const METHOD_SCORE_ASD: &str = "score_asd";
pub const METHOD_TRANSCRIBE: &str = "transcribe";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Face,
    Landmarks,
    Asd,
    Asr,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Face => "face",
            BackendKind::Landmarks => "landmarks",
            BackendKind::Asd => "asd",
            BackendKind::Asr => "asr",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face" => Ok(BackendKind::Face),
            "landmarks" => Ok(BackendKind::Landmarks),
            "asd" => Ok(BackendKind::Asd),
            "asr" => Ok(BackendKind::Asr),
            other => Err(format!("unknown backend kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
}

/// Serialize-only request that keeps the params' field order.
#[derive(Debug, Serialize)]
pub struct OutgoingRequest<'a, P: Serialize> {
    pub id: u64,
    pub method: &'a str,
    pub params: &'a P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
}

impl Reply {
    pub fn ok(id: u64, result: Value) -> Self {
        Reply { id, result: Some(result), error: None }
    }

    pub fn err(id: u64, code: i64, message: impl Into<String>) -> Self {
        Reply { id, result: None, error: Some(RpcError { code, message: message.into() }) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloParams {
    pub protocol: u32,
    pub kind: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloResult {
    pub protocol: u64,
    #[serde(default)]
    pub capabilities: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectFacesParams {
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFace {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectFacesResult {
    pub faces: Vec<WireFace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectLandmarksParams {
    pub image_path: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectLandmarksResult {
    pub landmarks: Vec<[f64; 2]>,
}

/// `first_frame` and `track_id` extend the base schema so scripted backends
/// can key their answers on absolute frame positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreAsdParams {
    pub crops_path: String,
    pub n_frames: usize,
    pub crop_size: u32,
    pub mfcc_path: String,
    pub n_mfcc_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreAsdResult {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeParams {
    pub audio_path: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireWord {
    pub w: String,
    pub t0: f64,
    pub t1: f64,
}

impl From<WireWord> for Word {
    fn from(w: WireWord) -> Self {
        Word { word: w.w, t0: w.t0, t1: w.t1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeResult {
    pub text: String,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub words: Vec<WireWord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hello_request_has_exact_shape() {
        let params = HelloParams { protocol: 1, kind: BackendKind::Face };
        let req = OutgoingRequest { id: 0, method: METHOD_HELLO, params: &params };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"id":0,"method":"hello","params":{"protocol":1,"kind":"face"}}"#
        );
        let shutdown = Request { id: None, method: METHOD_SHUTDOWN.into(), params: None };
        assert_eq!(serde_json::to_string(&shutdown).unwrap(), r#"{"method":"shutdown"}"#);
    }

    #[test]
    fn schema_instances_parse() {
        let faces: DetectFacesResult =
            serde_json::from_value(json!({"faces":[{"bbox":[1,2,3,4],"confidence":0.97}]})).unwrap();
        assert_eq!(faces.faces[0].bbox, BoundingBox::new(1.0, 2.0, 3.0, 4.0));
        let asd: ScoreAsdParams = serde_json::from_value(json!({
            "crops_path":"scratch/t7_w0.gray","n_frames":51,"crop_size":112,
            "mfcc_path":"scratch/t7_w0.mfcc","n_mfcc_rows":204
        }))
        .unwrap();
        assert_eq!(asd.n_mfcc_rows, 4 * asd.n_frames);
        let tr: TranscribeResult = serde_json::from_value(json!({
            "text":"hola mundo","language":"es",
            "words":[{"w":"hola","t0":0.10,"t1":0.48},{"w":"mundo","t0":0.55,"t1":1.02}]
        }))
        .unwrap();
        assert_eq!(tr.words.len(), 2);
        let reply: Reply = serde_json::from_str(r#"{"id":3,"error":{"code":7,"message":"boom"}}"#).unwrap();
        assert_eq!(reply.error.unwrap().code, 7);
    }
}
