//! On-disk candidate store and decision log.
//!
//! Layout of a store directory:
//!
//! ```text
//! <store>/candidates.jsonl    one CandidateSample per line, append-only
//! <store>/decisions.jsonl     one DecisionRecord per line, append-only
//! <store>/runs/<video>.json   run-state marker written when a video completes
//! <store>/tracks/<video>.jsonl face tracks kept for later corpus work
//! <store>/.lock               advisory lock held by the single writer
//! ```
//!
//! The effective status of a candidate is a pure function of the decision
//! log: the last record carrying a decision, ordered by timestamp with ties
//! broken by file order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BoundingBox, CandidateSample, FaceTrack, Status, Word};

pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt record at {path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("duplicate candidate id {0}")]
    DuplicateId(String),
    #[error("unknown candidate id {0}")]
    UnknownCandidate(String),
    #[error("invalid candidate {id}: {reason}")]
    InvalidCandidate { id: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accepted,
    Discarded,
}

impl Decision {
    pub fn status(self) -> Status {
        match self {
            Decision::Accepted => Status::Accepted,
            Decision::Discarded => Status::Discarded,
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accepted" | "accept" => Ok(Decision::Accepted),
            "discarded" | "discard" => Ok(Decision::Discarded),
            other => Err(format!("unknown decision {other:?}")),
        }
    }
}

/// One line of the decision log. A record without `decision` is a pure
/// transcript edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub candidate_id: String,
    pub decision: Option<Decision>,
    #[serde(default)]
    pub edited_text: Option<String>,
    pub annotator: String,
    pub timestamp: String,
}

/// UTC ISO-8601 with millisecond precision, e.g. `2024-05-01T10:00:00.123Z`.
pub fn now_timestamp() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EffectiveState {
    pub status: Option<Status>,
    pub edited_text: Option<String>,
}

/// Replays the log: last decision and last edit per candidate.
pub fn effective_states(records: &[DecisionRecord]) -> HashMap<String, EffectiveState> {
    let mut order: Vec<&DecisionRecord> = records.iter().collect();
    // Stable: equal timestamps keep file order.
    order.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
    let mut out: HashMap<String, EffectiveState> = HashMap::new();
    for r in order {
        let state = out.entry(r.candidate_id.clone()).or_default();
        if let Some(d) = r.decision {
            state.status = Some(d.status());
        }
        if r.edited_text.is_some() {
            state.edited_text = r.edited_text.clone();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMarker {
    pub video_id: String,
    pub config_hash: String,
    pub completed_at: String,
    #[serde(default)]
    pub report: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Candidates keyed by id (global candidate order) with decisions applied.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    pub candidates: BTreeMap<String, CandidateSample>,
    pub decisions: Vec<DecisionRecord>,
}

impl StoreSnapshot {
    pub fn history(&self, id: &str) -> Vec<&DecisionRecord> {
        self.decisions.iter().filter(|d| d.candidate_id == id).collect()
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(io_err(path))?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            // A torn final line is what an interrupted append leaves behind.
            Err(e) if i == last => {
                log::warn!("ignoring truncated last line of {}: {e}", path.display())
            }
            Err(e) => {
                return Err(StoreError::Corrupt { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
            }
        }
    }
    Ok(out)
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_string(value).expect("store records serialize");
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Store { root })
    }

    /// Opens an existing store without creating anything.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::Io {
                path: root,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "store directory not found"),
            });
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn candidates_path(&self) -> PathBuf {
        self.root.join(CANDIDATES_FILE)
    }

    pub fn decisions_path(&self) -> PathBuf {
        self.root.join(DECISIONS_FILE)
    }

    fn run_marker_path(&self, video_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{video_id}.json"))
    }

    /// Raw candidates as written by the pipeline (status always pending).
    pub fn load_candidates(&self) -> Result<Vec<CandidateSample>, StoreError> {
        read_jsonl(&self.candidates_path())
    }

    pub fn load_decisions(&self) -> Result<Vec<DecisionRecord>, StoreError> {
        read_jsonl(&self.decisions_path())
    }

    pub fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        let decisions = self.load_decisions()?;
        let states = effective_states(&decisions);
        let mut candidates = BTreeMap::new();
        for mut c in self.load_candidates()? {
            if let Some(state) = states.get(&c.candidate_id) {
                if let Some(status) = state.status {
                    c.status = status;
                }
                if state.edited_text.is_some() {
                    c.edited_text = state.edited_text.clone();
                }
            }
            candidates.insert(c.candidate_id.clone(), c);
        }
        Ok(StoreSnapshot { candidates, decisions })
    }

    /// Takes the single-writer lock, blocking until it is free.
    pub fn writer(&self) -> Result<StoreWriter, StoreError> {
        let lock_path = self.root.join(LOCK_FILE);
        let lock =
            OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path).map_err(io_err(&lock_path))?;
        lock.lock().map_err(io_err(&lock_path))?;
        let ids = self.load_candidates()?.into_iter().map(|c| c.candidate_id).collect();
        Ok(StoreWriter { store: self.clone(), _lock: lock, ids })
    }

    pub fn read_run_marker(&self, video_id: &str) -> Result<Option<RunMarker>, StoreError> {
        let path = self.run_marker_path(video_id);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
                path,
                line: 1,
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

/// Exclusive write access; the lock is released on drop.
pub struct StoreWriter {
    store: Store,
    _lock: File,
    ids: HashSet<String>,
}

impl StoreWriter {
    pub fn contains(&self, candidate_id: &str) -> bool {
        self.ids.contains(candidate_id)
    }

    pub fn append_candidate(&mut self, candidate: &CandidateSample) -> Result<String, StoreError> {
        candidate
            .validate(None)
            .map_err(|reason| StoreError::InvalidCandidate { id: candidate.candidate_id.clone(), reason })?;
        if self.ids.contains(&candidate.candidate_id) {
            return Err(StoreError::DuplicateId(candidate.candidate_id.clone()));
        }
        append_line(&self.store.candidates_path(), candidate)?;
        self.ids.insert(candidate.candidate_id.clone());
        Ok(candidate.candidate_id.clone())
    }

    pub fn record_decision(
        &mut self,
        candidate_id: &str,
        decision: Option<Decision>,
        edited_text: Option<String>,
        annotator: &str,
        timestamp: &str,
    ) -> Result<DecisionRecord, StoreError> {
        if !self.ids.contains(candidate_id) {
            return Err(StoreError::UnknownCandidate(candidate_id.to_string()));
        }
        let record = DecisionRecord {
            candidate_id: candidate_id.to_string(),
            decision,
            edited_text,
            annotator: annotator.to_string(),
            timestamp: timestamp.to_string(),
        };
        append_line(&self.store.decisions_path(), &record)?;
        Ok(record)
    }

    pub fn write_run_marker(&mut self, marker: &RunMarker) -> Result<(), StoreError> {
        let path = self.store.run_marker_path(&marker.video_id);
        let dir = path.parent().expect("marker has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_atomic(&path, &serde_json::to_vec_pretty(marker).expect("marker serializes"))
    }

    pub fn write_tracks(&mut self, video_id: &str, tracks: &[FaceTrack]) -> Result<(), StoreError> {
        let dir = self.store.root.join("tracks");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut body = String::new();
        for t in tracks {
            body.push_str(&serde_json::to_string(t).expect("tracks serialize"));
            body.push('\n');
        }
        write_atomic(&dir.join(format!("{video_id}.jsonl")), body.as_bytes())
    }
}

/// One exported (accepted) sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub candidate_id: String,
    pub video_id: String,
    pub scene_index: usize,
    pub track_id: u32,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub text: String,
    pub text_edited: bool,
    pub language: String,
    pub words: Vec<Word>,
    pub per_frame_bboxes: Vec<BoundingBox>,
}

/// Accepted candidates in candidate-id order, with the final text applied.
pub fn export_rows(snapshot: &StoreSnapshot) -> Vec<ExportRow> {
    snapshot
        .candidates
        .values()
        .filter(|c| c.status == Status::Accepted)
        .map(|c| ExportRow {
            candidate_id: c.candidate_id.clone(),
            video_id: c.video_id.clone(),
            scene_index: c.scene_index,
            track_id: c.track_id,
            start_frame: c.start_frame,
            end_frame: c.end_frame,
            start_time: c.start_seconds(),
            end_time: c.end_seconds(),
            text: c.final_text().to_string(),
            text_edited: c.edited_text.is_some(),
            language: c.transcription.language.clone(),
            words: c.transcription.words.clone(),
            per_frame_bboxes: c.per_frame_bboxes.clone(),
        })
        .collect()
}

pub fn export_jsonl(snapshot: &StoreSnapshot) -> String {
    let mut out = String::new();
    for row in export_rows(snapshot) {
        out.push_str(&serde_json::to_string(&row).expect("export rows serialize"));
        out.push('\n');
    }
    out
}

/// Writes the export file; returns the number of rows.
pub fn export(store: &Store, destination: &Path) -> Result<usize, StoreError> {
    let snapshot = store.snapshot()?;
    let body = export_jsonl(&snapshot);
    fs::write(destination, &body).map_err(io_err(destination))?;
    Ok(body.lines().count())
}
