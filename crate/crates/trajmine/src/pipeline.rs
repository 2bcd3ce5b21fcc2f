//! End-to-end runs behind the `mine`, `genvideo`, `simulate` and `render` commands.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use trajmine_core::genloop::{build_frame_schedule, render_frames, sample_transform, GenLoopError};
use trajmine_core::sim::{
    generate_scene, run_scenario, simulate_detector, Metrics, SceneRenderer, SceneSpec, SimError,
};
use trajmine_core::tmm::{mine_video, MiningReport, PseudoFrame, TmmError};
use trajmine_core::{
    Detection, FrameIndex, Image, MatchingStrategy, TemplateTracker, Trajectory,
    TrajectoryStore,
};

use crate::config::{ConfigError, RunConfig};
use crate::io::dataset::{
    dataset_to_bytes, read_pseudo_dataset, DatasetError, DatasetFrame, PseudoDataset,
};
use crate::io::detections::{detections_to_jsonl, group_by_video, read_detections, IngestError};
use crate::io::frames::{encode_png, frame_file_name, load_image, FrameError, FrameSource};
use crate::io::manifest::{GenLoopManifest, MANIFEST_FILE};
use crate::io::{to_canonical_document, write_atomic, write_dir_atomic};
use crate::overlay::{render_overlay, OverlayStyle};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DATASET_FILE: &str = "dataset.json";
pub const REPORT_FILE: &str = "report.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const FRAMES_DIR: &str = "frames";
pub const SCENE_FILE: &str = "scene.json";
pub const SIM_VIDEO_ID: &str = "sim";

/// Failure of a run, split by what the user has to fix.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
}

impl RunError {
    pub fn category(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Io(_) => "io",
            RunError::Data(_) => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 3,
            RunError::Data(_) => 4,
        }
    }

    fn io(context: impl std::fmt::Display, e: io::Error) -> Self {
        RunError::Io(format!("{context}: {e}"))
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<IngestError> for RunError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => RunError::Io(e.to_string()),
            _ => RunError::Data(format!("detections: {e}")),
        }
    }
}

impl From<FrameError> for RunError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io { .. } => RunError::Io(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for RunError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => RunError::Io(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<TmmError> for RunError {
    fn from(e: TmmError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<GenLoopError> for RunError {
    fn from(e: GenLoopError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InfeasibleSpec(_) => RunError::Config(e.to_string()),
            SimError::Mining(_) => RunError::Data(e.to_string()),
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, RunError> {
    p.as_deref()
        .ok_or_else(|| RunError::Config(format!("missing input: pass {flag} or set it in the config")))
}

fn metadata(cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!(TOOL_NAME));
    m.insert("version".into(), json!(TOOL_VERSION));
    m.insert("config".into(), cfg.to_value());
    m
}

/// Frame location of one video: `root/<video_id>` when it exists, otherwise
/// `root` itself if the run has a single video.
pub fn video_frames_path(root: &Path, video_id: &str, n_videos: usize) -> Result<PathBuf, RunError> {
    let usable = !video_id.is_empty()
        && video_id != "."
        && video_id != ".."
        && !video_id.contains(['/', '\\']);
    if usable {
        let sub = root.join(video_id);
        if sub.exists() {
            return Ok(sub);
        }
    }
    if n_videos == 1 {
        Ok(root.to_path_buf())
    } else {
        Err(RunError::Io(format!(
            "no frames for video {video_id:?} under {}",
            root.display()
        )))
    }
}

/// Result of mining one video.
#[derive(Debug, Clone)]
pub struct VideoMining {
    pub video_id: String,
    pub frames: Vec<PseudoFrame>,
    pub trajectories: Vec<Trajectory>,
    pub report: MiningReport,
    /// Generator settings for videos backed by a loop manifest.
    pub genloop: Option<Value>,
}

/// Detections keyed by the frame positions the tracker will step through.
///
/// Loop videos are detected once per unique frame; those detections are
/// copied to every position that replays the frame.
pub fn detections_per_position(
    detections: &BTreeMap<FrameIndex, Vec<Detection>>,
    source: &FrameSource,
) -> Result<BTreeMap<FrameIndex, Vec<Detection>>, RunError> {
    let limit = source.unique_count();
    if let Some((&last, _)) = detections.last_key_value() {
        if last as usize >= limit {
            return Err(RunError::Data(format!(
                "detections reference frame {last} but only {limit} frames exist"
            )));
        }
    }
    match source.manifest() {
        None => Ok(detections.clone()),
        Some(m) => Ok(m
            .schedule
            .iter()
            .enumerate()
            .filter_map(|(p, &u)| {
                detections
                    .get(&(u as FrameIndex))
                    .map(|d| (p as FrameIndex, d.clone()))
            })
            .collect()),
    }
}

/// Builds trajectories over every frame of `source` with the template
/// tracker and mines them.
pub fn mine_video_source(
    video_id: &str,
    detections: &BTreeMap<FrameIndex, Vec<Detection>>,
    source: &FrameSource,
    cfg: &RunConfig,
) -> Result<VideoMining, RunError> {
    let per_position = detections_per_position(detections, source)?;
    let n = FrameIndex::try_from(source.len())
        .map_err(|_| RunError::Data(format!("video {video_id:?} has too many frames")))?;
    let tracker = TemplateTracker::new(cfg.tracker);
    let mut store = TrajectoryStore::new(cfg.tmm, cfg.matching);
    let mut cache: Vec<Option<Image>> = vec![None; source.unique_count()];
    let empty = Vec::new();
    for p in 0..n {
        let u = source.unique_index(p as usize)?;
        if cache[u].is_none() {
            cache[u] = Some(load_image(&source.unique_path(u)?)?);
        }
        let frame = cache[u].as_ref().expect("just loaded");
        let dets = per_position.get(&p).unwrap_or(&empty);
        store.step_frame(p, frame, dets, &tracker)?;
        if source.manifest().is_none() {
            cache[u] = None;
        }
    }
    let trajectories = store.finish();
    let out = mine_video(&trajectories, &per_position, &cfg.tmm);
    debug!("{video_id}: {:?}", out.report);
    let genloop = source.manifest().map(|m| {
        json!({
            "source_image": m.source_image,
            "mode": m.mode,
            "affine": m.affine,
            "n_unique": m.n_unique,
            "schedule": m.schedule,
        })
    });
    Ok(VideoMining {
        video_id: video_id.to_string(),
        frames: out.frames,
        trajectories,
        report: out.report,
        genloop,
    })
}

/// Everything `mine` produces, before it is written.
#[derive(Debug, Clone)]
pub struct MineResult {
    pub dataset: PseudoDataset,
    pub report: MiningReport,
    pub videos: BTreeMap<String, MiningReport>,
}

impl MineResult {
    pub fn report_value(&self, cfg: &RunConfig) -> Value {
        let mut m = metadata(cfg);
        m.insert("report".into(), json!(self.report));
        m.insert("videos".into(), json!(self.videos));
        Value::Object(m)
    }
}

/// Mines every video of the detection stream without writing anything.
pub fn mine(cfg: &RunConfig) -> Result<MineResult, RunError> {
    let det_path = required(&cfg.paths.detections, "--detections")?;
    let frames_root = required(&cfg.paths.frames, "--frames")?;
    let videos = group_by_video(read_detections(det_path)?);
    info!("mining {} video(s) from {}", videos.len(), det_path.display());
    let n_videos = videos.len();
    let jobs: Vec<(&String, &BTreeMap<FrameIndex, Vec<Detection>>)> = videos.iter().collect();
    let mined = jobs
        .par_iter()
        .map(|(id, dets)| {
            let source = FrameSource::open(&video_frames_path(frames_root, id, n_videos)?)?;
            mine_video_source(id, dets, &source, cfg)
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let mut report = MiningReport::default();
    let mut per_video = BTreeMap::new();
    let mut frames = Vec::new();
    let mut sources = serde_json::Map::new();
    for v in mined {
        report.merge(&v.report);
        per_video.insert(v.video_id.clone(), v.report);
        if let Some(g) = v.genloop {
            sources.insert(v.video_id.clone(), g);
        }
        frames.extend(v.frames.into_iter().map(|frame| DatasetFrame {
            video_id: v.video_id.clone(),
            frame,
        }));
    }
    let mut meta = metadata(cfg);
    meta.insert("video_ids".into(), json!(per_video.keys().collect::<Vec<_>>()));
    meta.insert("report".into(), json!(report));
    if !sources.is_empty() {
        meta.insert("genloop".into(), Value::Object(sources));
    }
    Ok(MineResult {
        dataset: PseudoDataset {
            meta: Value::Object(meta),
            frames,
        },
        report,
        videos: per_video,
    })
}

/// Mines and writes `dataset.json` and `report.json` into the output directory.
pub fn run_mine(cfg: &RunConfig) -> Result<MineResult, RunError> {
    let out = required(&cfg.paths.out, "--out")?.to_path_buf();
    let result = mine(cfg)?;
    let dataset = dataset_to_bytes(&result.dataset);
    let report = to_canonical_document(&result.report_value(cfg)).expect("report serializes");
    write_atomic(&out.join(DATASET_FILE), &dataset).map_err(|e| RunError::io(out.display(), e))?;
    write_atomic(&out.join(REPORT_FILE), &report).map_err(|e| RunError::io(out.display(), e))?;
    info!(
        "{} hard positives, {} hard negatives, {} admitted frames",
        result.report.hard_positives, result.report.hard_negatives, result.report.admitted_frames
    );
    Ok(result)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// A single image file, or every image in a directory sorted by name.
pub fn list_images(path: &Path) -> Result<Vec<PathBuf>, RunError> {
    let meta = fs::metadata(path).map_err(|e| RunError::io(path.display(), e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| RunError::io(path.display(), e))? {
        let p = entry.map_err(|e| RunError::io(path.display(), e))?.path();
        if p.is_file() && is_image(&p) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// A generated video ready to be written.
#[derive(Debug, Clone)]
pub struct GeneratedVideo {
    pub name: String,
    pub manifest: GenLoopManifest,
    pub frames: Vec<Image>,
}

/// Generates the video for image number `index` of a run.
pub fn generate_video(
    image: &Image,
    source_image: &str,
    name: &str,
    index: u64,
    cfg: &RunConfig,
) -> Result<GeneratedVideo, RunError> {
    let spec = &cfg.genloop;
    let schedule = build_frame_schedule(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let end = sample_transform(spec, (image.width(), image.height()), &mut rng);
    let video = render_frames(image, spec.mode, &end, &schedule);
    let manifest = GenLoopManifest {
        source_image: source_image.to_string(),
        mode: spec.mode,
        affine: end,
        n_unique: schedule.n_unique(),
        schedule: schedule.positions().to_vec(),
        frame_files: (0..schedule.n_unique()).map(frame_file_name).collect(),
        config: Some(cfg.to_value()),
    };
    Ok(GeneratedVideo {
        name: name.to_string(),
        manifest,
        frames: video.unique_frames,
    })
}

fn write_video(dir: &Path, video: &GeneratedVideo) -> io::Result<()> {
    for (file, frame) in video.manifest.frame_files.iter().zip(&video.frames) {
        let png = encode_png(frame).map_err(io::Error::other)?;
        fs::write(dir.join(file), png)?;
    }
    fs::write(dir.join(MANIFEST_FILE), video.manifest.to_bytes())
}

/// Writes one `<out>/<image stem>/` directory per source image holding the
/// unique frames and `manifest.json`. Returns the manifest paths.
pub fn run_genvideo(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let images = list_images(required(&cfg.paths.images, "--images")?)?;
    let out = required(&cfg.paths.out, "--out")?;
    let mut names = BTreeMap::new();
    for p in &images {
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| RunError::Data(format!("unusable file name {}", p.display())))?;
        if let Some(prev) = names.insert(stem.to_string(), p) {
            return Err(RunError::Data(format!(
                "{} and {} would share the output {stem:?}",
                prev.display(),
                p.display()
            )));
        }
    }
    info!("generating {} video(s) in {} mode", images.len(), mode_name(cfg));
    let videos = images
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let img = load_image(p)?;
            let name = p.file_stem().and_then(|s| s.to_str()).expect("checked above");
            let source = p.file_name().and_then(|s| s.to_str()).unwrap_or(name);
            generate_video(&img, source, name, i as u64, cfg)
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    videos
        .par_iter()
        .map(|v| {
            let target = out.join(&v.name);
            write_dir_atomic(&target, |dir| write_video(dir, v))
                .map_err(|e| RunError::io(target.display(), e))?;
            Ok(target.join(MANIFEST_FILE))
        })
        .collect()
}

fn mode_name(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.genloop.mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Metrics of one matching strategy across seeds.
#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub mean: Metrics,
    pub per_seed: Vec<Metrics>,
    pub report: MiningReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub seeds: Vec<u64>,
    pub strategies: BTreeMap<String, StrategySummary>,
}

fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len().max(1) as f64;
    let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Metrics {
        purity: avg(|m| m.purity),
        hp_precision: avg(|m| m.hp_precision),
        hp_recall: avg(|m| m.hp_recall),
        hn_precision: avg(|m| m.hn_precision),
        pseudo_noise_rate: avg(|m| m.pseudo_noise_rate),
    }
}

fn strategy_name(s: MatchingStrategy) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Runs the simulated scenario for every seed with both matching strategies.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationReport, RunError> {
    let seeds: Vec<u64> = (0..cfg.sim.seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
    let mut strategies = BTreeMap::new();
    for strategy in [MatchingStrategy::MutualBest, MatchingStrategy::Greedy] {
        let runs = seeds
            .par_iter()
            .map(|&seed| {
                let scene = SceneSpec {
                    seed,
                    ..cfg.sim.scene
                };
                let out = run_scenario(&scene, &cfg.sim.noise, &cfg.tmm, strategy)?;
                Ok((out.metrics, out.mining.report))
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        let per_seed: Vec<Metrics> = runs.iter().map(|(m, _)| *m).collect();
        let mut report = MiningReport::default();
        runs.iter().for_each(|(_, r)| report.merge(r));
        strategies.insert(
            strategy_name(strategy),
            StrategySummary {
                mean: mean_metrics(&per_seed),
                per_seed,
                report,
            },
        );
    }
    Ok(SimulationReport { seeds, strategies })
}

impl SimulationReport {
    pub fn to_value(&self, cfg: &RunConfig) -> Value {
        let mut m = metadata(cfg);
        m.insert("seeds".into(), json!(self.seeds));
        m.insert("strategies".into(), json!(self.strategies));
        Value::Object(m)
    }
}

/// Runs the simulation and writes the report to `--out` when given.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulationReport, RunError> {
    let report = simulate(cfg)?;
    if let Some(out) = &cfg.paths.out {
        let bytes = to_canonical_document(&report.to_value(cfg)).expect("report serializes");
        write_atomic(out, &bytes).map_err(|e| RunError::io(out.display(), e))?;
    }
    Ok(report)
}

/// Writes the scene of the run seed as mining inputs: `detections.jsonl`,
/// rendered `frames/` and the ground truth in `scene.json`.
pub fn emit_scene(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let scene = cfg.sim.scene;
    let gt = generate_scene(&scene)?;
    let dets = simulate_detector(&gt, &cfg.sim.noise, SIM_VIDEO_ID, scene.seed);
    let renderer = SceneRenderer::new(&gt, scene.seed);
    let frames = (0..gt.n_frames)
        .into_par_iter()
        .map(|f| encode_png(&renderer.render(&gt, f)).map_err(|e| RunError::Data(e.to_string())))
        .collect::<Result<Vec<_>, RunError>>()?;
    let instances: Vec<Vec<Value>> = gt
        .instances
        .iter()
        .map(|track| {
            track
                .iter()
                .map(|o| match o {
                    Some(o) => json!({"bbox": o.bbox.to_array(), "mask": o.mask.to_flat()}),
                    None => Value::Null,
                })
                .collect()
        })
        .collect();
    let mut meta = metadata(cfg);
    meta.insert("video_id".into(), json!(SIM_VIDEO_ID));
    meta.insert("instances".into(), json!(instances));
    meta.insert("dropouts".into(), json!(dets.dropouts));
    let scene_doc = to_canonical_document(&Value::Object(meta)).expect("scene serializes");
    let jsonl = detections_to_jsonl(&dets.records);
    write_dir_atomic(dir, |d| {
        fs::write(d.join(DETECTIONS_FILE), &jsonl)?;
        fs::write(d.join(SCENE_FILE), &scene_doc)?;
        let fdir = d.join(FRAMES_DIR);
        fs::create_dir(&fdir)?;
        for (i, png) in frames.iter().enumerate() {
            fs::write(fdir.join(frame_file_name(i)), png)?;
        }
        Ok(())
    })
    .map_err(|e| RunError::io(dir.display(), e))
}

/// Draws every admitted frame of a dataset into `<out>/<video_id>/<frame>.png`.
pub fn run_render(cfg: &RunConfig) -> Result<usize, RunError> {
    let dataset = read_pseudo_dataset(required(&cfg.paths.dataset, "--dataset")?)?;
    let frames_root = required(&cfg.paths.frames, "--frames")?;
    let out = required(&cfg.paths.out, "--out")?;
    let mut ids: Vec<&str> = dataset.frames.iter().map(|f| f.video_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut sources = BTreeMap::new();
    for id in &ids {
        let src = FrameSource::open(&video_frames_path(frames_root, id, ids.len())?)?;
        sources.insert(*id, src);
    }
    let style = OverlayStyle::default();
    let rendered = dataset
        .frames
        .par_iter()
        .map(|f| {
            let img = sources[f.video_id.as_str()].load(f.frame.frame as usize)?;
            let drawn = render_overlay(&img, Some(&f.frame), &[], &style);
            let png = encode_png(&drawn).map_err(|e| RunError::Data(e.to_string()))?;
            Ok((f.video_id.clone(), f.frame.frame as usize, png))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    write_dir_atomic(out, |d| {
        for (id, frame, png) in &rendered {
            let vdir = d.join(id);
            fs::create_dir_all(&vdir)?;
            fs::write(vdir.join(frame_file_name(*frame)), png)?;
        }
        Ok(())
    })
    .map_err(|e| RunError::io(out.display(), e))?;
    Ok(rendered.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(RunError::Config(String::new()).exit_code(), 2);
        assert_eq!(RunError::Io(String::new()).exit_code(), 3);
        assert_eq!(RunError::Data(String::new()).exit_code(), 4);
    }

    #[test]
    fn video_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        assert_eq!(video_frames_path(dir.path(), "a", 2).unwrap(), dir.path().join("a"));
        assert_eq!(video_frames_path(dir.path(), "b", 1).unwrap(), dir.path());
        assert!(video_frames_path(dir.path(), "b", 2).is_err());
        assert!(video_frames_path(dir.path(), "../a", 2).is_err());
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let cfg = RunConfig::default();
        assert!(matches!(mine(&cfg), Err(RunError::Config(_))));
        assert!(matches!(run_genvideo(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn zero_noise_simulation_is_pure() {
        let mut cfg = RunConfig::default();
        cfg.sim.seeds = 3;
        cfg.sim.scene.crossing = true;
        let r = simulate(&cfg).unwrap();
        for s in r.strategies.values() {
            assert_eq!(s.mean.purity, 1.0);
        }
    }
}
