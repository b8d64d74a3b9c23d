//! Pipeline configuration, read from TOML.
//!
//! Keys may appear at the top level or inside the section that owns them
//! (`[scene]`, `[faces]`, `[asd]`, `[transcription]`). Unknown keys are an
//! error so typos never silently fall back to a default.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config is not valid UTF-8")]
    Utf8,
    #[error("config syntax error: {0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Cut threshold on the 0–255 content score.
    pub scene_threshold: f64,
    pub min_scene_len_frames: usize,
    pub downscale_factor: u32,
    pub face_confidence_min: f64,
    /// Fraction of the frame diagonal.
    pub max_match_dist: f64,
    pub max_track_gap: usize,
    pub asd_window_frames: usize,
    pub smooth_window_frames: usize,
    pub asd_threshold: f64,
    pub trim_margin_frames: usize,
    pub language: String,
    pub fps_assumed: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene_threshold: 27.0,
            min_scene_len_frames: 15,
            downscale_factor: 4,
            face_confidence_min: 0.5,
            max_match_dist: 0.10,
            max_track_gap: 5,
            asd_window_frames: 51,
            smooth_window_frames: 11,
            asd_threshold: 0.0,
            trim_margin_frames: 12,
            language: "auto".to_string(),
            fps_assumed: 25.0,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("scene", &["scene_threshold", "min_scene_len_frames", "downscale_factor"]),
    ("faces", &["face_confidence_min", "max_match_dist", "max_track_gap"]),
    ("asd", &["asd_window_frames", "smooth_window_frames", "asd_threshold", "trim_margin_frames", "fps_assumed"]),
    ("transcription", &["language"]),
];

fn is_known_key(key: &str) -> bool {
    SECTIONS.iter().any(|(_, keys)| keys.contains(&key))
}

/// Parses a TOML config; unspecified keys take their defaults.
pub fn parse_config(bytes: &[u8]) -> Result<PipelineConfig, ConfigError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ConfigError::Utf8)?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;

    let mut flat = toml::Table::new();
    for (key, value) in table {
        if let Some((_, keys)) = SECTIONS.iter().find(|(name, _)| *name == key) {
            let toml::Value::Table(section) = value else {
                return Err(ConfigError::Syntax(format!("`{key}` must be a section")));
            };
            for (inner, v) in section {
                if !keys.contains(&inner.as_str()) {
                    return Err(ConfigError::UnknownKey(format!("{key}.{inner}")));
                }
                flat.insert(inner, v);
            }
        } else if is_known_key(&key) {
            flat.insert(key, value);
        } else {
            return Err(ConfigError::UnknownKey(key));
        }
    }

    let config: PipelineConfig = toml::Value::Table(flat)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, reason: &str| Err(ConfigError::Invalid { key, reason: reason.to_string() });
        if !(self.scene_threshold.is_finite() && self.scene_threshold >= 0.0) {
            return bad("scene_threshold", "must be a non-negative number");
        }
        if self.min_scene_len_frames == 0 {
            return bad("min_scene_len_frames", "must be at least 1");
        }
        if self.downscale_factor == 0 {
            return bad("downscale_factor", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.face_confidence_min) {
            return bad("face_confidence_min", "must lie in [0, 1]");
        }
        if !(self.max_match_dist.is_finite() && self.max_match_dist > 0.0) {
            return bad("max_match_dist", "must be positive");
        }
        if self.asd_window_frames == 0 {
            return bad("asd_window_frames", "must be at least 1");
        }
        if self.smooth_window_frames == 0 || self.smooth_window_frames.is_multiple_of(2) {
            return bad("smooth_window_frames", "must be odd and at least 1");
        }
        if !self.asd_threshold.is_finite() {
            return bad("asd_threshold", "must be finite");
        }
        if !(self.fps_assumed.is_finite() && self.fps_assumed > 0.0) {
            return bad("fps_assumed", "must be positive");
        }
        if !is_language_code(&self.language) {
            return bad("language", "must be \"auto\" or a two-letter ISO-639-1 code");
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Stable hash over every field; used to invalidate run-state markers.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn is_language_code(s: &str) -> bool {
    s == "auto" || (s.len() == 2 && s.bytes().all(|b| b.is_ascii_lowercase()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config(b"").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.asd_window_frames, 51);
        assert_eq!(c.fps_assumed, 25.0);
    }

    #[test]
    fn even_smoothing_window_is_rejected() {
        let err = parse_config(b"smooth_window_frames = 4").unwrap_err();
        assert!(err.to_string().contains("must be odd"), "{err}");
        assert!(err.to_string().contains("smooth_window_frames"));
    }

    #[test]
    fn round_trip_preserves_threshold() {
        let c = PipelineConfig { scene_threshold: 27.0, ..Default::default() };
        let back = parse_config(c.to_toml_string().as_bytes()).unwrap();
        assert_eq!(back.scene_threshold, 27.0);
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert_eq!(
            parse_config(b"scene_treshold = 3.0").unwrap_err(),
            ConfigError::UnknownKey("scene_treshold".into())
        );
        assert_eq!(
            parse_config(b"[asd]\nlanguage = \"es\"").unwrap_err(),
            ConfigError::UnknownKey("asd.language".into())
        );
    }

    #[test]
    fn sections_are_flattened() {
        let c = parse_config(b"[asd]\nasd_threshold = 0.42\n[transcription]\nlanguage = \"es\"").unwrap();
        assert_eq!(c.asd_threshold, 0.42);
        assert_eq!(c.language, "es");
    }

    #[test]
    fn bad_types_and_values() {
        assert!(matches!(parse_config(b"max_track_gap = \"x\""), Err(ConfigError::Syntax(_))));
        assert!(matches!(parse_config(b"language = \"spanish\""), Err(ConfigError::Invalid { key: "language", .. })));
        assert!(parse_config(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { asd_threshold: 0.3, ..Default::default() };
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), PipelineConfig::default().config_hash());
    }
}
