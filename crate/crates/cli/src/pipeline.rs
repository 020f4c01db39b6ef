//! Load, estimate features, weight, downsample, place, score and write.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use rayon::prelude::*;
use scenefit::body::{Skeleton, SkinnedTemplate};
use scenefit::geometry::{Aabb, TriangleMesh};
use scenefit::interaction::{estimate_features_heuristic, FeatureMap, SemanticPalette};
use scenefit::metrics::MetricsReport;
use scenefit::motion::{downsample_indices, reduction_ratio, MotionSequence, TARGET_FPS};
use scenefit::objective::{AlterationBreakdown, PlacementParams, SceneFields};
use scenefit::placement::{place, Clip, Placement, RunSummary};
use scenefit::weighting::frame_weights;
use scenefit::Vec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::{scene_fields, sha256_hex};
use crate::config::PipelineConfig;
use crate::formats::{attach_labels, parse_labels, parse_motion, parse_obj, read_features, write_obj, FrameRecord};
use crate::io::{read, read_text, write_atomic};

pub const PLACEMENT_FORMAT: &str = "scenefit.placement";
pub const REPORT_FORMAT: &str = "scenefit.report";
pub const FORMAT_VERSION: u32 = 1;

/// Where per-vertex contact features come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Heuristic,
    File(PathBuf),
}

impl FromStr for FeatureSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "heuristic" {
            Self::Heuristic
        } else {
            Self::File(PathBuf::from(s))
        })
    }
}

/// SHA-256 of every input file; `features` is `"heuristic"` when estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputHashes {
    pub scene: String,
    pub labels: Option<String>,
    pub motion: String,
    pub features: String,
}

pub struct SceneInput {
    pub mesh: TriangleMesh,
    pub hash: String,
    pub labels_hash: Option<String>,
}

pub fn load_scene(mesh_path: &Path, labels_path: Option<&Path>) -> anyhow::Result<SceneInput> {
    let bytes = read(mesh_path)?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not text", mesh_path.display()))?;
    let mesh = parse_obj(text).with_context(|| format!("parsing {}", mesh_path.display()))?;
    let hash = sha256_hex(&bytes);
    let Some(labels_path) = labels_path else {
        return Ok(SceneInput {
            mesh,
            hash,
            labels_hash: None,
        });
    };
    let label_text = read_text(labels_path)?;
    let labels = parse_labels(&label_text).with_context(|| format!("parsing {}", labels_path.display()))?;
    let mesh = attach_labels(mesh, labels).with_context(|| format!("labels {}", labels_path.display()))?;
    Ok(SceneInput {
        mesh,
        hash,
        labels_hash: Some(sha256_hex(label_text.as_bytes())),
    })
}

/// Scene fields plus the floor-plane bounds for candidate grids.
pub struct PreparedScene {
    pub fields: SceneFields,
    pub bounds: Aabb,
}

/// Candidate bounds: the floor-labelled vertices when present, otherwise
/// the whole mesh.
pub fn placement_bounds(mesh: &TriangleMesh) -> Aabb {
    if let Some(labels) = mesh.labels() {
        let floor = Aabb::from_points(
            mesh.vertices()
                .iter()
                .zip(labels)
                .filter(|(_, c)| **c == SemanticPalette::FLOOR)
                .map(|(v, _)| v),
        );
        if !floor.is_empty() {
            return floor;
        }
    }
    mesh.bounds()
}

pub fn prepare_scene(mesh: &TriangleMesh, config: &PipelineConfig, cache: Option<&Path>) -> anyhow::Result<PreparedScene> {
    Ok(PreparedScene {
        fields: scene_fields(mesh, config, cache)?,
        bounds: placement_bounds(mesh),
    })
}

/// A clip reduced to the frames that enter the optimization.
pub struct PreparedClip {
    pub motion: MotionSequence,
    pub features: FeatureMap,
    pub weights: Vec<f64>,
    /// Index of every retained frame in the source clip.
    pub source_frames: Vec<usize>,
}

pub fn prepare_clip(
    motion: &MotionSequence,
    features: Option<FeatureMap>,
    config: &PipelineConfig,
    skeleton: &Skeleton,
    template: &SkinnedTemplate,
) -> anyhow::Result<PreparedClip> {
    let features = match features {
        Some(f) => f,
        None => estimate_features_heuristic(motion, skeleton, template, &config.heuristic).context("features")?,
    };
    features
        .check_shape(motion.len(), template.vertex_count())
        .context("features")?;
    let weights = frame_weights(motion, &features, skeleton, &config.weighting).context("frame weights")?;
    let source_frames = downsample_indices(motion, &weights).context("downsampling")?;
    let fps = if motion.fps() <= TARGET_FPS {
        motion.fps()
    } else {
        motion.fps() / reduction_ratio(motion.fps()) as f64
    };
    Ok(PreparedClip {
        motion: motion.select(&source_frames, fps)?,
        features: features.select(&source_frames),
        weights: weights.select(&source_frames)?.as_slice().to_vec(),
        source_frames,
    })
}

impl PreparedClip {
    pub fn clip<'a>(&'a self, skeleton: &'a Skeleton, template: &'a SkinnedTemplate) -> anyhow::Result<Clip<'a>> {
        Ok(Clip::new(self.motion.frames(), &self.features, &self.weights, skeleton, template)?)
    }
}

/// Everything needed to reproduce and audit one placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub format: String,
    pub version: u32,
    /// Position in the loss ranking of all optimized candidates.
    pub rank: usize,
    pub accepted: bool,
    pub seed: u64,
    pub inputs: InputHashes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub placement: PlacementParams,
    pub initial: PlacementParams,
    pub center: Vec3,
    pub loss: f64,
    pub placement_loss: f64,
    pub alteration: Option<AlterationBreakdown>,
    pub metrics: MetricsReport,
    pub runs: Vec<RunSummary>,
    pub fps: f64,
    pub source_frames: Vec<usize>,
    pub timestamps: Vec<f64>,
    /// Altered poses with the placement folded into the root.
    pub frames: Vec<FrameRecord>,
    pub config: PipelineConfig,
}

/// Origin of an exported pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene: String,
    pub motion: String,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NoValidFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rank: usize,
    pub loss: f64,
    pub non_collision: f64,
    pub contact: f64,
    pub accepted: bool,
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub status: Status,
    pub seed: u64,
    pub inputs: InputHashes,
    pub accepted: usize,
    pub candidates: Vec<ReportEntry>,
    pub config: PipelineConfig,
}

pub struct RunArgs {
    pub scene: PathBuf,
    pub labels: Option<PathBuf>,
    pub motion: PathBuf,
    pub features: FeatureSource,
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub export_mesh: bool,
    pub cache: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn status(&self) -> Status {
        if self.report.accepted > 0 {
            Status::Ok
        } else {
            Status::NoValidFit
        }
    }
}

struct LoadedMotion {
    motion: MotionSequence,
    features: Option<FeatureMap>,
    hash: String,
    features_hash: String,
}

fn load_motion(path: &Path, features: &FeatureSource) -> anyhow::Result<LoadedMotion> {
    let text = read_text(path)?;
    let motion = parse_motion(&text).with_context(|| format!("parsing {}", path.display()))?;
    let (features, features_hash) = match features {
        FeatureSource::Heuristic => (None, "heuristic".to_string()),
        FeatureSource::File(p) => {
            let bytes = read(p)?;
            let f = read_features(&bytes).with_context(|| format!("parsing {}", p.display()))?;
            (Some(f), sha256_hex(&bytes))
        }
    };
    Ok(LoadedMotion {
        motion,
        features,
        hash: sha256_hex(text.as_bytes()),
        features_hash,
    })
}

/// Result of placing one clip in one scene, before anything is written.
struct Fit {
    placements: Vec<Placement>,
    clip: PreparedClip,
}

fn fit(scene: &PreparedScene, clip: PreparedClip, config: &PipelineConfig, skeleton: &Skeleton, template: &SkinnedTemplate) -> anyhow::Result<Option<Fit>> {
    let view = clip.clip(skeleton, template)?;
    let mut placement_config = config.placement.clone();
    if scene.fields.classes.is_none() && placement_config.weights.lambda_sem != 0.0 {
        log::info!("scene has no labels; semantic term disabled");
        placement_config.weights.lambda_sem = 0.0;
    }
    let placements = match place(&view, &scene.fields, &scene.bounds, &placement_config) {
        Ok(p) => p,
        Err(scenefit::Error::NoValidFit) => return Ok(None),
        Err(e) => return Err(e).context("placement"),
    };
    Ok(Some(Fit { placements, clip }))
}

/// Writes accepted placements as `placement_<k>.json` in ranking order and
/// returns the report entries for all candidates.
#[allow(clippy::too_many_arguments)]
fn write_placements(
    out: &Path,
    fit: &Fit,
    inputs: &InputHashes,
    provenance: Option<&Provenance>,
    config: &PipelineConfig,
    skeleton: &Skeleton,
    template: &SkinnedTemplate,
    export_mesh: bool,
) -> anyhow::Result<(Vec<ReportEntry>, Vec<PathBuf>)> {
    let mut entries = Vec::new();
    let mut files = Vec::new();
    let clip = &fit.clip;
    for (rank, p) in fit.placements.iter().enumerate() {
        let accepted = config.filter.accepts(p.loss, &p.metrics);
        let mut entry = ReportEntry {
            rank,
            loss: p.loss,
            non_collision: p.metrics.non_collision,
            contact: p.metrics.contact,
            accepted,
            file: None,
        };
        if accepted {
            let k = files.len();
            let name = format!("placement_{k}.json");
            let world = p.world_poses(skeleton);
            let file = PlacementFile {
                format: PLACEMENT_FORMAT.into(),
                version: FORMAT_VERSION,
                rank,
                accepted,
                seed: config.seed,
                inputs: inputs.clone(),
                provenance: provenance.cloned(),
                placement: p.params,
                initial: p.initial,
                center: p.center,
                loss: p.loss,
                placement_loss: p.placement_loss,
                alteration: p.alteration,
                metrics: p.metrics.clone(),
                runs: p.runs.clone(),
                fps: clip.motion.fps(),
                source_frames: clip.source_frames.clone(),
                timestamps: clip.motion.timestamps().to_vec(),
                frames: world.iter().map(FrameRecord::from_pose).collect(),
                config: config.clone(),
            };
            let path = out.join(&name);
            write_atomic(&path, (serde_json::to_string_pretty(&file)? + "\n").as_bytes())?;
            if export_mesh {
                let view = clip.clip(skeleton, template)?;
                for (i, vertices) in view.meshes(&world).iter().enumerate() {
                    let mesh = template.surface(vertices)?;
                    write_atomic(&out.join(format!("placement_{k}")).join(format!("frame_{i:04}.obj")), write_obj(&mesh).as_bytes())?;
                }
            }
            entry.file = Some(name);
            files.push(path);
        }
        entries.push(entry);
    }
    Ok((entries, files))
}

/// Removes `placement_<k>.json` files left by an earlier run.
fn clear_previous(out: &Path) -> anyhow::Result<()> {
    let Ok(dir) = std::fs::read_dir(out) else { return Ok(()) };
    for entry in dir {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let stale = name
            .strip_prefix("placement_")
            .and_then(|s| s.strip_suffix(".json"))
            .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()));
        if stale {
            std::fs::remove_file(entry.path())?;
        }
    }
    Ok(())
}

/// The `run` command.
pub fn run(args: &RunArgs) -> anyhow::Result<RunOutcome> {
    let config = &args.config;
    config.validate().context("config")?;
    let skeleton = Skeleton::default();
    let template = SkinnedTemplate::bundled();
    let scene_input = load_scene(&args.scene, args.labels.as_deref()).context("load scene")?;
    let motion = load_motion(&args.motion, &args.features).context("load motion")?;
    let inputs = InputHashes {
        scene: scene_input.hash.clone(),
        labels: scene_input.labels_hash.clone(),
        motion: motion.hash.clone(),
        features: motion.features_hash.clone(),
    };
    let scene = prepare_scene(&scene_input.mesh, config, args.cache.as_deref()).context("scene fields")?;
    let clip = prepare_clip(&motion.motion, motion.features, config, &skeleton, &template).context("prepare motion")?;
    let fit = fit(&scene, clip, config, &skeleton, &template)?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    clear_previous(&args.out)?;
    let (candidates, files) = match &fit {
        Some(fit) => write_placements(&args.out, fit, &inputs, None, config, &skeleton, &template, args.export_mesh).context("write")?,
        None => (Vec::new(), Vec::new()),
    };
    let accepted = files.len();
    let report = Report {
        format: REPORT_FORMAT.into(),
        version: FORMAT_VERSION,
        status: if accepted > 0 { Status::Ok } else { Status::NoValidFit },
        seed: config.seed,
        inputs,
        accepted,
        candidates,
        config: config.clone(),
    };
    write_atomic(&args.out.join("report.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes()).context("write")?;
    Ok(RunOutcome { report, files })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub mesh: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionEntry {
    pub path: PathBuf,
    /// Action label carried into every exported placement.
    pub label: String,
    /// Features file; estimated from the motion when absent.
    #[serde(default)]
    pub features: Option<PathBuf>,
}

/// Scenes and motions whose full cross product is exported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenes: Vec<SceneEntry>,
    pub motions: Vec<MotionEntry>,
}

impl Manifest {
    /// Reads a JSON manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut m: Manifest = serde_json::from_str(&read_text(path)?).with_context(|| format!("manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut m.scenes {
            s.mesh = base.join(&s.mesh);
            s.labels = s.labels.as_ref().map(|l| base.join(l));
        }
        for mo in &mut m.motions {
            mo.path = base.join(&mo.path);
            mo.features = mo.features.as_ref().map(|f| base.join(f));
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Exported,
    /// Placements were found but none passed the filters.
    Rejected,
    NoValidFit,
    Failed,
}

/// Outcome of one scene and motion pair, stored as `pair.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub key: String,
    pub provenance: Provenance,
    pub status: PairStatus,
    pub placements: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub pairs: usize,
    pub resumed: usize,
    pub exported: usize,
    pub placements: usize,
    pub rejected: usize,
    pub no_valid_fit: usize,
    pub failed: usize,
    pub records: Vec<PairRecord>,
}

/// Pair identity: content of every input plus the full config.
fn pair_key(scene: &SceneInput, motion: &LoadedMotion, config: &PipelineConfig) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    h.update(&scene.hash);
    h.update(scene.labels_hash.as_deref().unwrap_or("-"));
    h.update(&motion.hash);
    h.update(&motion.features_hash);
    h.update(serde_json::to_vec(config)?);
    Ok(hex::encode(h.finalize()))
}

/// The `export_dataset` command. Pairs already recorded under `out/pairs`
/// with the same key are skipped; failures are recorded and the batch
/// continues.
pub fn export_dataset(manifest: &Manifest, config: &PipelineConfig, out: &Path, cache: Option<&Path>) -> anyhow::Result<ExportSummary> {
    config.validate().context("config")?;
    let skeleton = Skeleton::default();
    let template = SkinnedTemplate::bundled();
    let scenes: Vec<anyhow::Result<(SceneInput, PreparedScene)>> = manifest
        .scenes
        .par_iter()
        .map(|s| {
            let input = load_scene(&s.mesh, s.labels.as_deref()).with_context(|| format!("load scene {}", s.mesh.display()))?;
            let prepared = prepare_scene(&input.mesh, config, cache).context("scene fields")?;
            Ok((input, prepared))
        })
        .collect();
    let motions: Vec<anyhow::Result<LoadedMotion>> = manifest
        .motions
        .par_iter()
        .map(|m| {
            let source = m.features.clone().map_or(FeatureSource::Heuristic, FeatureSource::File);
            load_motion(&m.path, &source).with_context(|| format!("load motion {}", m.path.display()))
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..scenes.len()).flat_map(|s| (0..motions.len()).map(move |m| (s, m))).collect();
    let records: Vec<(PairRecord, bool)> = pairs
        .par_iter()
        .map(|&(si, mi)| {
            let provenance = Provenance {
                scene: manifest.scenes[si].mesh.display().to_string(),
                motion: manifest.motions[mi].path.display().to_string(),
                label: manifest.motions[mi].label.clone(),
            };
            let failed = |key: String, e: anyhow::Error| {
                log::error!("{} x {}: {e:#}", provenance.scene, provenance.motion);
                PairRecord {
                    key,
                    provenance: provenance.clone(),
                    status: PairStatus::Failed,
                    placements: Vec::new(),
                    error: Some(format!("{e:#}")),
                }
            };
            let (scene, motion) = match (&scenes[si], &motions[mi]) {
                (Ok(s), Ok(m)) => (s, m),
                (Err(e), _) | (_, Err(e)) => return (failed(String::new(), anyhow::anyhow!("{e:#}")), false),
            };
            let key = match pair_key(&scene.0, motion, config) {
                Ok(k) => k,
                Err(e) => return (failed(String::new(), e), false),
            };
            let dir = out.join("pairs").join(&key);
            let marker = dir.join("pair.json");
            if let Ok(text) = std::fs::read_to_string(&marker) {
                if let Ok(record) = serde_json::from_str::<PairRecord>(&text) {
                    if record.status != PairStatus::Failed {
                        return (record, true);
                    }
                }
            }
            let result = export_pair(&scene.1, motion, &scene.0, config, &provenance, &dir, &skeleton, &template);
            let record = match result {
                Ok((status, placements)) => PairRecord {
                    key: key.clone(),
                    provenance: provenance.clone(),
                    status,
                    placements,
                    error: None,
                },
                Err(e) => failed(key.clone(), e),
            };
            if let Err(e) = serde_json::to_string_pretty(&record)
                .map_err(anyhow::Error::from)
                .and_then(|t| write_atomic(&marker, (t + "\n").as_bytes()))
            {
                return (failed(key, e), false);
            }
            (record, false)
        })
        .collect();

    let mut summary = ExportSummary {
        pairs: records.len(),
        ..ExportSummary::default()
    };
    for (record, resumed) in records {
        summary.resumed += resumed as usize;
        match record.status {
            PairStatus::Exported => summary.exported += 1,
            PairStatus::Rejected => summary.rejected += 1,
            PairStatus::NoValidFit => summary.no_valid_fit += 1,
            PairStatus::Failed => summary.failed += 1,
        }
        summary.placements += record.placements.len();
        summary.records.push(record);
    }
    write_atomic(&out.join("summary.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn export_pair(
    scene: &PreparedScene,
    motion: &LoadedMotion,
    scene_input: &SceneInput,
    config: &PipelineConfig,
    provenance: &Provenance,
    dir: &Path,
    skeleton: &Skeleton,
    template: &SkinnedTemplate,
) -> anyhow::Result<(PairStatus, Vec<String>)> {
    let clip = prepare_clip(&motion.motion, motion.features.clone(), config, skeleton, template).context("prepare motion")?;
    let Some(fit) = fit(scene, clip, config, skeleton, template)? else {
        return Ok((PairStatus::NoValidFit, Vec::new()));
    };
    let inputs = InputHashes {
        scene: scene_input.hash.clone(),
        labels: scene_input.labels_hash.clone(),
        motion: motion.hash.clone(),
        features: motion.features_hash.clone(),
    };
    std::fs::create_dir_all(dir)?;
    clear_previous(dir)?;
    let (_, files) = write_placements(dir, &fit, &inputs, Some(provenance), config, skeleton, template, false)?;
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().expect("placement files have names").to_string_lossy().into_owned())
        .collect();
    let status = if names.is_empty() { PairStatus::Rejected } else { PairStatus::Exported };
    Ok((status, names))
}
