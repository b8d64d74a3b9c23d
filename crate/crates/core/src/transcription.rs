//! Word-aligned transcription of candidate clips.

use std::fmt;

use thiserror::Error;

use crate::backend::{BackendError, SpeechRecognizer};
use crate::media::TARGET_SAMPLE_RATE;
use crate::types::{Transcription, Word};

/// Word end times may overrun the clip by this much.
pub const END_TOLERANCE_S: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TextWithoutAlignment,
    NegativeDuration { index: usize, t0: f64, t1: f64 },
    NonMonotone { index: usize, prev_t0: f64, t0: f64 },
    OutOfClip { index: usize, t0: f64, t1: f64, duration: f64 },
    NotFinite { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TextWithoutAlignment => write!(f, "text without alignment"),
            Violation::NegativeDuration { index, t0, t1 } => {
                write!(f, "word {index} ends before it starts ({t0} > {t1})")
            }
            Violation::NonMonotone { index, prev_t0, t0 } => {
                write!(f, "non-monotone: word {index} starts at {t0} before the previous word at {prev_t0}")
            }
            Violation::OutOfClip { index, t0, t1, duration } => {
                write!(f, "word {index} [{t0}, {t1}] outside the {duration} s clip")
            }
            Violation::NotFinite { index } => write!(f, "word {index} has a non-finite time"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TranscriptionError {
    #[error("empty clip")]
    EmptyClip,
    #[error("recognizer failed: {0}")]
    Backend(#[from] BackendError),
    #[error("invalid transcription: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Every violated invariant, in word order.
pub fn validate_transcription(t: &Transcription, clip_duration: f64) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if t.words.is_empty() && !t.text.trim().is_empty() {
        out.push(Violation::TextWithoutAlignment);
    }
    let mut prev_t0: Option<f64> = None;
    for (index, w) in t.words.iter().enumerate() {
        let Word { t0, t1, .. } = *w;
        if !t0.is_finite() || !t1.is_finite() {
            out.push(Violation::NotFinite { index });
            continue;
        }
        if t1 < t0 {
            out.push(Violation::NegativeDuration { index, t0, t1 });
        }
        if let Some(p) = prev_t0 {
            if t0 < p {
                out.push(Violation::NonMonotone { index, prev_t0: p, t0 });
            }
        }
        if t0 < 0.0 || t1 > clip_duration + END_TOLERANCE_S {
            out.push(Violation::OutOfClip { index, t0, t1, duration: clip_duration });
        }
        prev_t0 = Some(t0);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Language recorded for a clip: the declared code, or
/// `auto-detected:<code>` when detection was requested.
pub fn resolved_language(requested: &str, detected: Option<&str>) -> String {
    if requested == "auto" {
        format!("auto-detected:{}", detected.filter(|d| !d.is_empty()).unwrap_or("und"))
    } else {
        requested.to_string()
    }
}

/// Transcribes a 16 kHz clip and validates the word timings.
pub fn transcribe(
    clip_name: &str,
    audio: &[f32],
    language: &str,
    recognizer: &dyn SpeechRecognizer,
) -> Result<Transcription, TranscriptionError> {
    if audio.is_empty() {
        return Err(TranscriptionError::EmptyClip);
    }
    let duration = audio.len() as f64 / TARGET_SAMPLE_RATE as f64;
    let raw = recognizer.transcribe(clip_name, audio, language)?;
    let t = Transcription {
        text: raw.text,
        language: resolved_language(language, raw.language.as_deref()),
        words: raw.words,
    };
    validate_transcription(&t, duration).map_err(TranscriptionError::Invalid)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RawTranscript;

    fn word(w: &str, t0: f64, t1: f64) -> Word {
        Word { word: w.into(), t0, t1 }
    }

    fn canned(words: Vec<Word>) -> impl Fn(&str, &[f32], &str) -> Result<RawTranscript, BackendError> {
        move |_: &str, _: &[f32], _: &str| {
            Ok(RawTranscript { text: "hola mundo".into(), language: Some("es".into()), words: words.clone() })
        }
    }

    #[test]
    fn well_formed_transcript_passes_through() {
        let asr = canned(vec![word("hola", 0.10, 0.48), word("mundo", 0.55, 1.02)]);
        let t = transcribe("c3", &vec![0.0; 17_000], "auto", &asr).unwrap();
        assert_eq!(t.text, "hola mundo");
        assert_eq!(t.language, "auto-detected:es");
        assert_eq!(t.words[1], word("mundo", 0.55, 1.02));
        let t = transcribe("c3", &vec![0.0; 17_000], "es", &asr).unwrap();
        assert_eq!(t.language, "es");
    }

    #[test]
    fn overrun_beyond_tolerance_is_rejected() {
        let asr = canned(vec![word("hola", 0.10, 0.48), word("mundo", 0.55, 1.20)]);
        let err = transcribe("c", &vec![0.0; 16_000], "auto", &asr).unwrap_err();
        assert!(
            matches!(err, TranscriptionError::Invalid(ref v) if matches!(v[0], Violation::OutOfClip { index: 1, .. }))
        );
        let asr = canned(vec![word("hola", 0.10, 1.04)]);
        assert!(transcribe("c", &vec![0.0; 16_000], "auto", &asr).is_ok());
    }

    #[test]
    fn all_violations_are_reported() {
        let t = Transcription { text: "x".into(), language: "es".into(), words: vec![] };
        let v = validate_transcription(&t, 1.0).unwrap_err();
        assert_eq!(v[0].to_string(), "text without alignment");

        let t = Transcription {
            text: "a b c".into(),
            language: "es".into(),
            words: vec![word("a", 0.5, 0.4), word("b", 0.2, 0.3), word("c", 0.3, 0.4)],
        };
        let v = validate_transcription(&t, 1.0).unwrap_err();
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::NegativeDuration { index: 0, .. }));
        assert!(v[1].to_string().starts_with("non-monotone"));
    }
}
