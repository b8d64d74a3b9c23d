//! Synthesis of speaker-scorer training corpora from single-speaker clips.
//!
//! Every source utterance shows one person talking throughout. From those
//! the builder derives one positive and three kinds of negative sample:
//!
//! - `positive`: the clip with its own audio.
//! - `temporal_mismatch`: same clip, audio shifted by `|s|` in `[D/2, D]`
//!   so that at most half of it overlaps the original.
//! - `partial_mismatch`: audio from another utterance of the same speaker.
//! - `complete_mismatch`: audio from a different speaker.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("invalid mix: {0}")]
    Mix(String),
    #[error("speaker {0} has no split assignment")]
    Unassigned(String),
    #[error("mix cannot be satisfied: {}", .0.join("; "))]
    Shortfall(Vec<String>),
    #[error("no utterance of another speaker to draw audio from")]
    SingleSpeaker,
    #[error("no other utterance of speaker {0}")]
    SingleUtterance(String),
    #[error("recording of {utterance} ({recording:.2} s) too short for a shift of a {duration:.2} s clip")]
    RecordingTooShort { utterance: String, recording: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceUtterance {
    pub utterance_id: String,
    pub video_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Audio span in the parent recording, seconds.
    pub t0: f64,
    pub t1: f64,
    pub speaker_id: String,
    #[serde(default)]
    pub speaker_sex: Option<Sex>,
    /// Length of the parent recording in seconds.
    pub recording_duration: f64,
}

impl SourceUtterance {
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleType {
    Positive,
    TemporalMismatch,
    PartialMismatch,
    CompleteMismatch,
}

impl SampleType {
    pub const ALL: [SampleType; 4] =
        [SampleType::Positive, SampleType::TemporalMismatch, SampleType::PartialMismatch, SampleType::CompleteMismatch];
}

impl fmt::Display for SampleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleType::Positive => "positive",
            SampleType::TemporalMismatch => "temporal_mismatch",
            SampleType::PartialMismatch => "partial_mismatch",
            SampleType::CompleteMismatch => "complete_mismatch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Validation, Split::Test];

    fn stream(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Training => "training",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "training" | "train" => Ok(Split::Training),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRef {
    pub utterance_id: String,
    pub video_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Audio is read from `t0 + shift` for the video's duration, wrapping
/// around the parent recording when it runs past either end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub utterance_id: String,
    pub video_id: String,
    pub t0: f64,
    pub t1: f64,
    pub shift: f64,
    pub recording_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub item_id: String,
    pub split: Split,
    pub sample_type: SampleType,
    pub label: u8,
    /// Seconds of video (and of audio read).
    pub duration: f64,
    pub video_ref: VideoRef,
    pub audio_ref: AudioRef,
    pub speaker_video: String,
    pub speaker_audio: String,
    #[serde(default)]
    pub speaker_sex: Option<Sex>,
}

impl DatasetItem {
    /// Fraction of the video span covered by its own audio after the shift.
    pub fn overlap(&self) -> f64 {
        if self.video_ref.utterance_id != self.audio_ref.utterance_id || self.duration <= 0.0 {
            return 0.0;
        }
        (self.duration - self.audio_ref.shift.abs()).max(0.0) / self.duration
    }

    /// Checks the constraints of the item's sample type.
    pub fn validate(&self) -> Result<(), String> {
        let same_utt = self.video_ref.utterance_id == self.audio_ref.utterance_id;
        let same_speaker = self.speaker_video == self.speaker_audio;
        let expected_label = u8::from(self.sample_type == SampleType::Positive);
        if self.label != expected_label {
            return Err(format!("{}: label {} for {}", self.item_id, self.label, self.sample_type));
        }
        let ok = match self.sample_type {
            SampleType::Positive => same_utt && self.audio_ref.shift == 0.0,
            SampleType::TemporalMismatch => same_utt && same_speaker && self.overlap() <= 0.5,
            SampleType::PartialMismatch => !same_utt && same_speaker,
            SampleType::CompleteMismatch => !same_speaker,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{}: violates {} constraints", self.item_id, self.sample_type))
        }
    }
}

fn video_ref(u: &SourceUtterance) -> VideoRef {
    VideoRef {
        utterance_id: u.utterance_id.clone(),
        video_id: u.video_id.clone(),
        start_frame: u.start_frame,
        end_frame: u.end_frame,
    }
}

fn audio_ref(u: &SourceUtterance, shift: f64) -> AudioRef {
    AudioRef {
        utterance_id: u.utterance_id.clone(),
        video_id: u.video_id.clone(),
        t0: u.t0,
        t1: u.t1,
        shift,
        recording_duration: u.recording_duration,
    }
}

fn item(sample_type: SampleType, video: &SourceUtterance, audio: &SourceUtterance, shift: f64) -> DatasetItem {
    DatasetItem {
        item_id: String::new(),
        split: Split::Training,
        sample_type,
        label: u8::from(sample_type == SampleType::Positive),
        duration: video.duration(),
        video_ref: video_ref(video),
        audio_ref: audio_ref(audio, shift),
        speaker_video: video.speaker_id.clone(),
        speaker_audio: audio.speaker_id.clone(),
        speaker_sex: video.speaker_sex,
    }
}

pub fn make_positive(u: &SourceUtterance) -> DatasetItem {
    item(SampleType::Positive, u, u, 0.0)
}

/// A shift can wrap around the recording without re-entering the clip
/// only if the recording is at least twice the clip.
pub fn supports_temporal_shift(u: &SourceUtterance) -> bool {
    u.duration() > 0.0 && u.recording_duration >= 2.0 * u.duration()
}

pub fn make_temporal_mismatch(u: &SourceUtterance, rng: &mut impl Rng) -> Result<DatasetItem, DatasetError> {
    if !supports_temporal_shift(u) {
        return Err(DatasetError::RecordingTooShort {
            utterance: u.utterance_id.clone(),
            recording: u.recording_duration,
            duration: u.duration(),
        });
    }
    let d = u.duration();
    let magnitude = rng.random_range(d / 2.0..=d);
    let shift = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    Ok(item(SampleType::TemporalMismatch, u, u, shift))
}

/// `pool` may contain anything; only other utterances of the same speaker
/// are drawn.
pub fn make_partial_mismatch(
    u: &SourceUtterance,
    pool: &[&SourceUtterance],
    rng: &mut impl Rng,
) -> Result<DatasetItem, DatasetError> {
    let others: Vec<&&SourceUtterance> =
        pool.iter().filter(|o| o.speaker_id == u.speaker_id && o.utterance_id != u.utterance_id).collect();
    let b = others.choose(rng).ok_or_else(|| DatasetError::SingleUtterance(u.speaker_id.clone()))?;
    Ok(item(SampleType::PartialMismatch, u, b, 0.0))
}

pub fn make_complete_mismatch(
    u: &SourceUtterance,
    pool: &[&SourceUtterance],
    rng: &mut impl Rng,
) -> Result<DatasetItem, DatasetError> {
    let others: Vec<&&SourceUtterance> = pool.iter().filter(|o| o.speaker_id != u.speaker_id).collect();
    let b = others.choose(rng).ok_or(DatasetError::SingleSpeaker)?;
    Ok(item(SampleType::CompleteMismatch, u, b, 0.0))
}

/// Proportions of the four sample types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub positive: f64,
    pub temporal_mismatch: f64,
    pub partial_mismatch: f64,
    pub complete_mismatch: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix { positive: 0.5, temporal_mismatch: 1.0 / 6.0, partial_mismatch: 1.0 / 6.0, complete_mismatch: 1.0 / 6.0 }
    }
}

impl Mix {
    pub fn get(&self, t: SampleType) -> f64 {
        match t {
            SampleType::Positive => self.positive,
            SampleType::TemporalMismatch => self.temporal_mismatch,
            SampleType::PartialMismatch => self.partial_mismatch,
            SampleType::CompleteMismatch => self.complete_mismatch,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = SampleType::ALL.map(|t| self.get(t));
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DatasetError::Mix(format!("proportions must be non-negative, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DatasetError::Mix(format!("proportions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Item counts per type summing to `n` (largest remainder).
    pub fn apportion(&self, n: usize) -> [usize; 4] {
        let exact = SampleType::ALL.map(|t| self.get(t) * n as f64);
        let mut counts = exact.map(|x| x.floor() as usize);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut left = n.saturating_sub(counts.iter().sum());
        for i in order.into_iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

impl std::str::FromStr for Mix {
    type Err = DatasetError;

    /// `"p,t,pm,cm"`; fractions like `1/6` are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| -> Result<f64, DatasetError> {
            let x = x.trim();
            let v = match x.split_once('/') {
                Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
                None => x.parse().ok(),
            };
            v.ok_or_else(|| DatasetError::Mix(format!("cannot parse {x:?}")))
        };
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(DatasetError::Mix(format!("expected 4 comma-separated proportions, got {}", parts.len())));
        }
        let mix = Mix {
            positive: parse(parts[0])?,
            temporal_mismatch: parse(parts[1])?,
            partial_mismatch: parse(parts[2])?,
            complete_mismatch: parse(parts[3])?,
        };
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub speakers_female: usize,
    pub speakers_male: usize,
    pub speakers_total: usize,
    pub utterances: usize,
    pub items: usize,
    pub sample_types: BTreeMap<SampleType, usize>,
}

/// Per-split statistics derived from the items alone.
pub fn compute_stats(items: &[DatasetItem]) -> BTreeMap<Split, SplitStats> {
    let mut speakers: BTreeMap<Split, BTreeMap<&str, Option<Sex>>> = BTreeMap::new();
    let mut utterances: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
    let mut out: BTreeMap<Split, SplitStats> = BTreeMap::new();
    for it in items {
        speakers.entry(it.split).or_default().insert(&it.speaker_video, it.speaker_sex);
        utterances.entry(it.split).or_default().insert(&it.video_ref.utterance_id);
        let s = out.entry(it.split).or_default();
        s.items += 1;
        *s.sample_types.entry(it.sample_type).or_default() += 1;
    }
    for (split, s) in out.iter_mut() {
        let sp = &speakers[split];
        s.speakers_total = sp.len();
        s.speakers_female = sp.values().filter(|x| **x == Some(Sex::F)).count();
        s.speakers_male = sp.values().filter(|x| **x == Some(Sex::M)).count();
        s.utterances = utterances[split].len();
    }
    out
}

/// `100000 -> "100k"`, `12345 -> "12.3k"`, `999 -> "999"`.
pub fn compact_count(n: usize) -> String {
    if n < 1000 {
        n.to_string()
    } else if n.is_multiple_of(1000) {
        format!("{}k", n / 1000)
    } else {
        format!("{:.1}k", n as f64 / 1000.0)
    }
}

/// Speakers by sex and utterance counts per split, plus a total row.
pub fn stats_table(stats: &BTreeMap<Split, SplitStats>) -> String {
    let mut rows: Vec<[String; 5]> = Vec::new();
    let mut total = SplitStats::default();
    for (split, s) in stats {
        let mut name = split.to_string();
        name[..1].make_ascii_uppercase();
        rows.push([
            name,
            s.speakers_female.to_string(),
            s.speakers_male.to_string(),
            s.speakers_total.to_string(),
            compact_count(s.utterances),
        ]);
        total.speakers_female += s.speakers_female;
        total.speakers_male += s.speakers_male;
        total.speakers_total += s.speakers_total;
        total.utterances += s.utterances;
    }
    rows.push([
        "Total".into(),
        total.speakers_female.to_string(),
        total.speakers_male.to_string(),
        total.speakers_total.to_string(),
        compact_count(total.utterances),
    ]);
    let mut out = String::new();
    out.push_str(&format!("{:<12}{:>8}{:>8}{:>8}{:>12}\n", "", "Speakers", "", "", "No. of"));
    out.push_str(&format!("{:<12}{:>8}{:>8}{:>8}{:>12}\n", "Dataset", "Female", "Male", "Total", "Utterances"));
    for r in rows {
        out.push_str(&format!("{:<12}{:>8}{:>8}{:>8}{:>12}\n", r[0], r[1], r[2], r[3], r[4]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub seed: u64,
    pub mix: Mix,
    pub stats: BTreeMap<Split, SplitStats>,
    #[serde(default)]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub items: Vec<DatasetItem>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for it in &self.items {
            out.push_str(&serde_json::to_string(it).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let io = |source| DatasetError::Io { path: path.display().to_string(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, e: serde_json::Error| DatasetError::Parse {
            path: path.to_string(),
            line: line + 1,
            reason: e.to_string(),
        };
        let (n, first) = lines.next().ok_or(DatasetError::Parse {
            path: path.to_string(),
            line: 1,
            reason: "empty manifest".into(),
        })?;
        let header: ManifestHeader = serde_json::from_str(first).map_err(|e| perr(n, e))?;
        let items = lines.map(|(n, l)| serde_json::from_str(l).map_err(|e| perr(n, e))).collect::<Result<_, _>>()?;
        Ok(DatasetManifest { header, items })
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Reads source utterances, one JSON object per line.
pub fn read_sources(path: &Path) -> Result<Vec<SourceUtterance>, DatasetError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: name.clone(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Parse {
                path: name.clone(),
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Reads a JSON object mapping speaker id to split name.
pub fn read_split_assignment(path: &Path) -> Result<HashMap<String, Split>, DatasetError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: name.clone(), source })?;
    let raw: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: name.clone(),
        line: 1,
        reason: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(k, v)| {
            let split = v.parse().map_err(|reason| DatasetError::Parse { path: name.clone(), line: 1, reason })?;
            Ok((k, split))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOptions {
    pub mix: Mix,
    pub seed: u64,
    /// Items per split; defaults to the split's utterance count.
    pub items_per_split: Option<usize>,
}

/// Builds all three splits. Each split draws from its own rng stream and
/// only pairs utterances within the split.
pub fn build_splits(
    utterances: &[SourceUtterance],
    assignment: &HashMap<String, Split>,
    options: &BuildOptions,
) -> Result<DatasetManifest, DatasetError> {
    options.mix.validate()?;
    let mut by_split: BTreeMap<Split, Vec<&SourceUtterance>> = BTreeMap::new();
    for u in utterances {
        let split = assignment.get(&u.speaker_id).ok_or_else(|| DatasetError::Unassigned(u.speaker_id.clone()))?;
        by_split.entry(*split).or_default().push(u);
    }
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut shortfall = Vec::new();
    for (split, pool) in &by_split {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(split.stream());
        let n = options.items_per_split.unwrap_or(pool.len());
        match build_split(*split, pool, n, &options.mix, &mut rng, &mut skipped) {
            Ok(mut v) => items.append(&mut v),
            Err(DatasetError::Shortfall(s)) => shortfall.extend(s),
            Err(e) => return Err(e),
        }
    }
    if !shortfall.is_empty() {
        return Err(DatasetError::Shortfall(shortfall));
    }
    let stats = compute_stats(&items);
    Ok(DatasetManifest { header: ManifestHeader { seed: options.seed, mix: options.mix, stats, skipped }, items })
}

fn build_split(
    split: Split,
    pool: &[&SourceUtterance],
    n: usize,
    mix: &Mix,
    rng: &mut ChaCha8Rng,
    skipped: &mut Vec<String>,
) -> Result<Vec<DatasetItem>, DatasetError> {
    let counts = mix.apportion(n);
    let mut per_speaker: HashMap<&str, usize> = HashMap::new();
    for u in pool {
        *per_speaker.entry(u.speaker_id.as_str()).or_default() += 1;
    }
    let multi_speaker = per_speaker.len() > 1;
    let eligible = |t: SampleType, u: &SourceUtterance| match t {
        SampleType::Positive => true,
        SampleType::TemporalMismatch => supports_temporal_shift(u),
        SampleType::PartialMismatch => per_speaker[u.speaker_id.as_str()] > 1,
        SampleType::CompleteMismatch => multi_speaker,
    };

    let mut shortfall = Vec::new();
    for (k, t) in SampleType::ALL.into_iter().enumerate() {
        if counts[k] > 0 && !pool.iter().any(|u| eligible(t, u)) {
            shortfall.push(format!("{split}: {} {t} items requested but no utterance qualifies", counts[k]));
        }
    }
    if !shortfall.is_empty() {
        return Err(DatasetError::Shortfall(shortfall));
    }
    let too_short = pool.iter().filter(|u| !supports_temporal_shift(u)).count();
    if too_short > 0 && counts[1] > 0 {
        skipped.push(format!("{split}: {too_short} utterances too short in their recording for a temporal mismatch"));
    }

    // Most constrained types pick their video clips first; every clip is
    // used once before any is reused.
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    let mut used = vec![false; pool.len()];
    let mut picks: Vec<(SampleType, usize)> = Vec::with_capacity(n);
    for t in
        [SampleType::PartialMismatch, SampleType::TemporalMismatch, SampleType::CompleteMismatch, SampleType::Positive]
    {
        let want = counts[SampleType::ALL.iter().position(|x| *x == t).expect("known type")];
        let candidates: Vec<usize> = order.iter().copied().filter(|&i| eligible(t, pool[i])).collect();
        let mut taken = 0;
        for &i in &candidates {
            if taken == want {
                break;
            }
            if !used[i] {
                used[i] = true;
                picks.push((t, i));
                taken += 1;
            }
        }
        for &i in candidates.iter().cycle().take(want - taken) {
            picks.push((t, i));
        }
    }

    let mut out = Vec::with_capacity(n);
    for (t, i) in picks {
        let u = pool[i];
        let it = match t {
            SampleType::Positive => make_positive(u),
            SampleType::TemporalMismatch => make_temporal_mismatch(u, rng)?,
            SampleType::PartialMismatch => make_partial_mismatch(u, pool, rng)?,
            SampleType::CompleteMismatch => make_complete_mismatch(u, pool, rng)?,
        };
        out.push(it);
    }
    out.shuffle(rng);
    for (k, it) in out.iter_mut().enumerate() {
        it.split = split;
        it.item_id = format!("{split}-{k:06}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn utt(id: &str, speaker: &str, sex: Option<Sex>, t0: f64, t1: f64) -> SourceUtterance {
        SourceUtterance {
            utterance_id: id.into(),
            video_id: format!("rec-{speaker}"),
            start_frame: (t0 * 25.0) as usize,
            end_frame: (t1 * 25.0) as usize,
            t0,
            t1,
            speaker_id: speaker.into(),
            speaker_sex: sex,
            recording_duration: 600.0,
        }
    }

    #[test]
    fn positive_keeps_everything() {
        let u = utt("u1", "s1", Some(Sex::F), 10.0, 12.0);
        let it = make_positive(&u);
        assert_eq!((it.label, it.audio_ref.shift, it.duration), (1, 0.0, 2.0));
        assert_eq!(it.speaker_audio, it.speaker_video);
        let back: DatasetItem = serde_json::from_str(&serde_json::to_string(&it).unwrap()).unwrap();
        assert_eq!(back, it);
    }

    #[test]
    fn overlap_formula() {
        let u = utt("u1", "s1", None, 10.0, 12.0);
        let mut it = make_positive(&u);
        it.sample_type = SampleType::TemporalMismatch;
        it.label = 0;
        it.audio_ref.shift = 1.2;
        assert!((it.overlap() - 0.4).abs() < 1e-12);
        assert!(it.validate().is_ok());
        it.audio_ref.shift = 2.0;
        assert_eq!(it.overlap(), 0.0);
        it.audio_ref.shift = 0.8;
        assert!((it.overlap() - 0.6).abs() < 1e-12);
        assert!(it.validate().is_err());
    }

    #[test]
    fn temporal_shift_needs_room() {
        let mut u = utt("u1", "s1", None, 0.0, 2.0);
        u.recording_duration = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(make_temporal_mismatch(&u, &mut rng), Err(DatasetError::RecordingTooShort { .. })));
    }

    #[test]
    fn mismatch_pools() {
        let a = utt("a1", "A", None, 0.0, 2.0);
        let a2 = utt("a2", "A", None, 3.0, 5.0);
        let b = utt("b1", "B", None, 0.0, 2.0);
        let pool = [&a, &a2, &b];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = make_partial_mismatch(&a, &pool, &mut rng).unwrap();
            assert_eq!(p.audio_ref.utterance_id, "a2");
            let c = make_complete_mismatch(&a, &pool, &mut rng).unwrap();
            assert_eq!(c.speaker_audio, "B");
        }
        assert!(matches!(make_partial_mismatch(&b, &pool, &mut rng), Err(DatasetError::SingleUtterance(_))));
        assert!(matches!(make_complete_mismatch(&a, &[&a, &a2], &mut rng), Err(DatasetError::SingleSpeaker)));
    }

    #[test]
    fn apportionment() {
        assert_eq!(Mix::default().apportion(1200), [600, 200, 200, 200]);
        assert_eq!(Mix::default().apportion(7).iter().sum::<usize>(), 7);
        let all_pos: Mix = "1,0,0,0".parse().unwrap();
        assert_eq!(all_pos.apportion(5), [5, 0, 0, 0]);
        assert!("0.5,0.5,0.5,0".parse::<Mix>().is_err());
        let m: Mix = "0.5,1/6,1/6,1/6".parse().unwrap();
        assert!((m.temporal_mismatch - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn compact_counts() {
        assert_eq!(compact_count(100_000), "100k");
        assert_eq!(compact_count(30_000), "30k");
        assert_eq!(compact_count(12_345), "12.3k");
        assert_eq!(compact_count(999), "999");
    }

    #[test]
    fn unsatisfiable_mix_lists_the_shortfall() {
        let pool = vec![utt("a1", "A", None, 0.0, 2.0), utt("b1", "B", None, 0.0, 2.0)];
        let assignment: HashMap<String, Split> = [("A".into(), Split::Training), ("B".into(), Split::Training)].into();
        let opts = BuildOptions { items_per_split: Some(12), ..Default::default() };
        let err = build_splits(&pool, &assignment, &opts).unwrap_err();
        match err {
            DatasetError::Shortfall(v) => assert!(v[0].contains("partial_mismatch")),
            other => panic!("unexpected {other}"),
        }
        let opts = BuildOptions { mix: "1,0,0,0".parse().unwrap(), ..Default::default() };
        let m = build_splits(&pool, &assignment, &opts).unwrap();
        assert!(m.items.iter().all(|i| i.label == 1));
    }

    #[test]
    fn manifest_round_trip_and_determinism() {
        let mut pool = Vec::new();
        for s in 0..6 {
            for k in 0..4 {
                let t0 = 10.0 * k as f64;
                pool.push(utt(
                    &format!("s{s}u{k}"),
                    &format!("s{s}"),
                    Some(if s % 2 == 0 { Sex::F } else { Sex::M }),
                    t0,
                    t0 + 2.0,
                ));
            }
        }
        let assignment: HashMap<String, Split> = (0..6).map(|s| (format!("s{s}"), Split::ALL[s % 3])).collect();
        let opts = BuildOptions { seed: 42, ..Default::default() };
        let a = build_splits(&pool, &assignment, &opts).unwrap();
        let b = build_splits(&pool, &assignment, &opts).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let parsed = DatasetManifest::parse(&a.to_jsonl(), "m").unwrap();
        assert_eq!(parsed, a);
        assert!(a.items.iter().all(|i| i.validate().is_ok()));
        assert_eq!(compute_stats(&a.items), a.header.stats);
    }
}
