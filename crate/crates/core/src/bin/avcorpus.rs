use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use avcorpus::asd::optimal_threshold;
use avcorpus::backend::{
    mock, BackendHandle, BackendKind, RemoteAsdScorer, RemoteFaceDetector, RemoteLandmarkDetector, RemoteRecognizer,
    ScratchDir,
};
use avcorpus::config::is_language_code;
use avcorpus::dataset::{
    build_splits, read_sources, read_split_assignment, stats_table, BuildOptions, DatasetManifest, Mix, Split,
};
use avcorpus::eval::{ablate_context_windows, load_items, parse_windows, MediaLibrary, DEFAULT_WINDOWS};
use avcorpus::pipeline::{resume, run_videos, Backends, ProcessOptions};
use avcorpus::service::{serve, AppState};
use avcorpus::store::{export, Store};
use avcorpus::{parse_config, PipelineConfig};

#[derive(Parser)]
#[command(name = "avcorpus", version, about = "Build and review audio-visual speech corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the candidate pipeline over videos, skipping completed ones.
    Process {
        #[arg(required = true)]
        videos: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        face_backend: String,
        #[arg(long)]
        asd_backend: String,
        #[arg(long)]
        asr_backend: String,
        #[arg(long)]
        landmarks_backend: Option<String>,
        /// ISO 639-1 code, or `auto` to let the recognizer decide.
        #[arg(long)]
        language: Option<String>,
        /// Write trimmed MP4 clips here (needs ffmpeg).
        #[arg(long)]
        media: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        media: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Synthesise a labelled speaker-activity dataset.
    BuildAsdDataset {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        /// Proportions of positive, temporal, partial and complete mismatches.
        #[arg(long, default_value = "1/2,1/6,1/6,1/6")]
        mix: Mix,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        items_per_split: Option<usize>,
    },
    /// Score a dataset split at several context windows.
    EvalAsd {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        asd_backend: String,
        /// Comma-separated window sizes in frames, e.g. `5,9,13`.
        #[arg(long, value_parser = |s: &str| parse_windows(s).map(Windows))]
        windows: Option<Windows>,
        /// Directory holding the source videos; defaults to the manifest's directory.
        #[arg(long)]
        media: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = 25.0)]
        fps: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Pick the Youden-optimal decision threshold.
    TuneThreshold {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Write accepted candidates as JSON Lines.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scripted backend used by tests and examples.
    #[command(hide = true)]
    MockBackend {
        #[arg(long)]
        kind: Option<BackendKind>,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

// A plain `Vec` field would make clap expect one value per window.
#[derive(Clone)]
struct Windows(Vec<usize>);

fn load_config(path: Option<&Path>, language: Option<String>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => parse_config(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(lang) = language {
        if lang != "auto" && !is_language_code(&lang) {
            bail!("--language must be a two-letter code or `auto`, got {lang:?}");
        }
        config.language = lang;
    }
    config.validate()?;
    Ok(config)
}

struct Spawned {
    handles: Vec<Arc<BackendHandle>>,
}

impl Spawned {
    fn spawn(&mut self, cmd: &str, kind: BackendKind) -> Result<Arc<BackendHandle>> {
        let h = Arc::new(BackendHandle::spawn(cmd, kind).with_context(|| format!("{kind} backend"))?);
        self.handles.push(h.clone());
        Ok(h)
    }

    fn shutdown(self) {
        for h in self.handles {
            let outcome = h.shutdown();
            log::debug!("{} backend: {outcome:?}", h.kind());
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_process(
    videos: Vec<PathBuf>,
    config: Option<PathBuf>,
    store: PathBuf,
    face: String,
    asd: String,
    asr: String,
    landmarks: Option<String>,
    language: Option<String>,
    media: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<bool> {
    let config = load_config(config.as_deref(), language)?;
    let store = Store::open(&store)?;
    if resume(&videos, &store, &config).is_empty() {
        println!("0 videos processed (all complete)");
        return Ok(true);
    }
    let scratch = ScratchDir::create(&std::env::temp_dir().join("avcorpus"))?;
    let mut spawned = Spawned { handles: Vec::new() };
    let result = (|| {
        let face = RemoteFaceDetector::new(spawned.spawn(&face, BackendKind::Face)?, scratch.path());
        let asd = RemoteAsdScorer::new(spawned.spawn(&asd, BackendKind::Asd)?, scratch.path());
        let asr = RemoteRecognizer::new(spawned.spawn(&asr, BackendKind::Asr)?, scratch.path());
        let landmarks = match &landmarks {
            Some(cmd) => Some(RemoteLandmarkDetector::new(spawned.spawn(cmd, BackendKind::Landmarks)?, scratch.path())),
            None => None,
        };
        let backends = Backends { face: &face, landmarks: landmarks.as_ref().map(|l| l as _), asd: &asd, asr: &asr };
        let mut options = ProcessOptions { media_dir: media, ..Default::default() };
        if let Some(w) = workers {
            options.workers = w.max(1);
        }
        Ok::<_, anyhow::Error>(run_videos(&videos, &store, &config, &backends, &options)?)
    })();
    spawned.shutdown();
    let batch = result?;
    let _ = scratch.cleanup();
    for r in &batch.processed {
        println!(
            "{}: {} scenes, {} kept, {} tracks, {} candidates ({} new), {} transcription failures, {} scene errors",
            r.video_id,
            r.scenes_found,
            r.scenes_kept,
            r.tracks,
            r.candidates,
            r.candidates - r.skipped_existing,
            r.transcription_failures,
            r.scene_errors.len()
        );
    }
    for (path, e) in &batch.failures {
        eprintln!("{}: {e}", path.display());
    }
    println!("{} videos processed", batch.processed.len());
    Ok(batch.failures.is_empty())
}

fn cmd_serve(store: PathBuf, port: u16, media: Option<PathBuf>, host: String) -> Result<bool> {
    let store = Store::open_existing(&store)?;
    let media_root = media.unwrap_or_else(|| store.root().join("media"));
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(AppState { store, media_root }, addr)).with_context(|| format!("serving on {addr}"))?;
    Ok(true)
}

fn cmd_build(
    sources: PathBuf,
    splits: PathBuf,
    mix: Mix,
    seed: u64,
    out: PathBuf,
    items_per_split: Option<usize>,
) -> Result<bool> {
    let utterances = read_sources(&sources)?;
    let assignment: HashMap<String, Split> = read_split_assignment(&splits)?;
    let manifest = build_splits(&utterances, &assignment, &BuildOptions { mix, seed, items_per_split })?;
    manifest.write(&out)?;
    print!("{}", stats_table(&manifest.header.stats));
    if !manifest.header.skipped.is_empty() {
        println!("{} utterances skipped for temporal mismatches", manifest.header.skipped.len());
    }
    println!("{} items written to {}", manifest.items.len(), out.display());
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    manifest: PathBuf,
    asd: String,
    windows: Option<Windows>,
    media: Option<PathBuf>,
    threshold: f64,
    split: Split,
    fps: f64,
    json: Option<PathBuf>,
) -> Result<bool> {
    let m = DatasetManifest::read(&manifest)?;
    let items: Vec<_> = m.split(split).cloned().collect();
    if items.is_empty() {
        bail!("the manifest has no {split} items");
    }
    let root = media.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let scratch = ScratchDir::create(&std::env::temp_dir().join("avcorpus"))?;
    let mut spawned = Spawned { handles: Vec::new() };
    let result = (|| {
        let scorer = RemoteAsdScorer::new(spawned.spawn(&asd, BackendKind::Asd)?, scratch.path());
        let features =
            load_items(&items, &mut MediaLibrary::new(&root), avcorpus::backend::AsdScorer::crop_size(&scorer))?;
        let windows = windows.map(|w| w.0).unwrap_or_else(|| DEFAULT_WINDOWS.to_vec());
        Ok::<_, anyhow::Error>(ablate_context_windows(&features, &scorer, &windows, fps, threshold)?)
    })();
    spawned.shutdown();
    let report = result?;
    let _ = scratch.cleanup();
    print!("{}", report.to_table());
    if let Some(p) = json {
        std::fs::write(&p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(true)
}

fn read_numbers(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).map(str::to_string).collect())
}

fn cmd_tune(scores: PathBuf, labels: PathBuf) -> Result<bool> {
    let s: Vec<f64> = read_numbers(&scores)?
        .iter()
        .map(|x| x.parse::<f64>().with_context(|| format!("bad score {x:?}")))
        .collect::<Result<_>>()?;
    let l: Vec<bool> = read_numbers(&labels)?
        .iter()
        .map(|x| match x.as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => bail!("bad label {other:?}"),
        })
        .collect::<Result<_>>()?;
    let r = optimal_threshold(&s, &l)?;
    println!("threshold {:?}", r.threshold);
    println!("TPR {:?}", r.tpr);
    println!("FPR {:?}", r.fpr);
    println!("J {:?}", r.j_statistic);
    Ok(true)
}

fn cmd_export(store: PathBuf, out: PathBuf) -> Result<bool> {
    let store = Store::open_existing(&store)?;
    let n = export(&store, &out)?;
    println!("{n} accepted candidates exported to {}", out.display());
    Ok(true)
}

fn cmd_mock(fixture: Option<PathBuf>) -> Result<bool> {
    let fixture = match fixture {
        Some(p) => mock::MockFixture::load(&p).map_err(anyhow::Error::msg)?,
        None => mock::MockFixture::default(),
    };
    mock::run_stdio(fixture, std::io::stdin().lock(), std::io::stdout().lock())?;
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Process {
            videos,
            config,
            store,
            face_backend,
            asd_backend,
            asr_backend,
            landmarks_backend,
            language,
            media,
            workers,
        } => cmd_process(
            videos,
            config,
            store,
            face_backend,
            asd_backend,
            asr_backend,
            landmarks_backend,
            language,
            media,
            workers,
        ),
        Command::Serve { store, port, media, host } => cmd_serve(store, port, media, host),
        Command::BuildAsdDataset { sources, splits, mix, seed, out, items_per_split } => {
            cmd_build(sources, splits, mix, seed, out, items_per_split)
        }
        Command::EvalAsd { manifest, asd_backend, windows, media, threshold, split, fps, json } => {
            cmd_eval(manifest, asd_backend, windows, media, threshold, split, fps, json)
        }
        Command::TuneThreshold { scores, labels } => cmd_tune(scores, labels),
        Command::Export { store, out } => cmd_export(store, out),
        Command::MockBackend { kind: _, fixture } => cmd_mock(fixture),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
