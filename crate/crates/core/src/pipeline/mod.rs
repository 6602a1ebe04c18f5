//! End-to-end orchestration: register, disentangle, augment, synthesize
//! views and evaluate every input sample, then hash every artifact.

mod config;
mod fixtures;

pub use config::{AugmentConfig, MetricsConfig, PathsConfig, RunConfig, ViewsConfig};
pub use fixtures::{fixture_hash_list, generate_fixtures, FixtureConfig, FixtureSet, FACE_DEPTH, WALL_DEPTH};

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::{
    complete_depth, fit_texture, fuse_target_shape, pose_about_face, rotate_and_render_with, transform_shape, FuseParts, TextureParams,
};
use crate::error::{Error, Result};
use crate::imaging::{save_gray16_png, save_rgb_png, save_rgba_png, GrayImage};
use crate::math::Vec3;
use crate::mesh::{read_obj, write_obj, Mesh};
use crate::metrics::{align_reliable, build_correspondence, metric_dace, metric_nme, psd_distance_with, psd_views};
use crate::morphable::{disentangle_rigid, fit_rigid, rigid_project, CameraPose, MorphableModel, PoseRecord};
use crate::multiview::{build_image_mesh, mirror_register, synthesize_view_with};
use crate::par::{self, Exec};
use crate::registration::{nonrigid_icp_with, LandmarkSet, RgbdFrame, DEPTH_PNG_SCALE};
use crate::template::FaceTemplate;

/// One written file and its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output root, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample: String,
    pub stage: String,
    pub error: String,
}

/// A stage error with the stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub samples: Vec<String>,
    pub failures: Vec<SampleFailure>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub sample: String,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub timings: Vec<StageTiming>,
}

impl PipelineOutcome {
    pub fn failed(&self) -> usize {
        self.manifest.failures.len()
    }
}

/// Files written by the pipeline that are not content artifacts.
const MANIFEST: &str = "manifest.json";
const TIMINGS: &str = "timings.json";

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every file under `root` except the excluded top-level entries, sorted by
/// relative path.
pub fn list_artifacts(root: &Path, exclude: &[&Path]) -> Result<Vec<Artifact>> {
    fn walk(root: &Path, dir: &Path, exclude: &[&Path], out: &mut Vec<Artifact>) -> Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for path in entries {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            if exclude.contains(&rel) {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, exclude, out)?;
            } else {
                let bytes = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
                let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.push(Artifact { path: rel, sha256: hash_file(&path)?, bytes });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, exclude, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Inputs shared by every sample.
pub struct Assets {
    pub template: FaceTemplate,
    pub model: MorphableModel,
    pub donors: Vec<Mesh>,
}

impl Assets {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let template = FaceTemplate::load(&cfg.paths.template)?;
        let model = MorphableModel::read(&cfg.paths.model)?;
        if model.vertex_count() != template.mesh.vertex_count() {
            return Err(Error::Config("model and template vertex counts differ".into()));
        }
        let donors = cfg.paths.donors.iter().map(|p| read_obj(p)).collect::<Result<Vec<_>>>()?;
        if let Some(d) = donors.iter().find(|d| !d.same_topology(&template.mesh)) {
            return Err(Error::Config(format!("donor with {} vertices does not match the template", d.vertex_count())));
        }
        Ok(Assets { template, model, donors })
    }
}

/// An input sample directory.
pub struct Sample {
    pub name: String,
    pub frame: RgbdFrame,
    pub landmarks: LandmarkSet,
    /// Ground-truth shape in canonical pose, when available.
    pub gt: Option<Mesh>,
}

impl Sample {
    pub fn read(dir: &Path) -> Result<Self> {
        let name = dir.file_name().map_or_else(|| "sample".into(), |n| n.to_string_lossy().into_owned());
        let frame = RgbdFrame::read(&dir.join("image.png"), &dir.join("depth.png"))?;
        let lm_path = dir.join("landmarks.json");
        let text = std::fs::read_to_string(&lm_path).map_err(|e| Error::io(&lm_path, e))?;
        let gt_path = dir.join("gt_shape.obj");
        let gt = if gt_path.exists() { Some(read_obj(&gt_path)?) } else { None };
        Ok(Sample { name, frame, landmarks: LandmarkSet::from_json(&text)?, gt })
    }
}

/// Similarity placing the canonical template on the 3D landmark points
/// (landmark pixel plus frame depth).
pub fn initial_pose(template: &Mesh, frame: &RgbdFrame, landmarks: &LandmarkSet) -> Result<CameraPose> {
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) = landmarks
        .edge
        .iter()
        .filter_map(|l| {
            let (x, y) = (l.xy[0].floor(), l.xy[1].floor());
            if x < 0.0 || y < 0.0 || x >= frame.width() as f64 || y >= frame.height() as f64 {
                return None;
            }
            let (x, y) = (x as usize, y as usize);
            frame.valid.get(x, y).then(|| (template.vertices[l.vid], Vec3::new(l.xy[0], l.xy[1], *frame.depth.get(x, y))))
        })
        .unzip();
    fit_rigid(&src, &dst, None)
}

#[derive(Serialize)]
struct FitRecord<'a> {
    pose: PoseRecord,
    texture: &'a TextureParams,
}

#[derive(Serialize)]
struct PoseProvenance<'a> {
    source: &'a str,
    pitch: f64,
    yaw: f64,
}

#[derive(Serialize)]
struct ShapeProvenance<'a> {
    source: &'a str,
    /// Donor index per region: eyes, nose, mouth, cheek.
    donors: [usize; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nme: f64,
    pub dace: f64,
    pub psd: f64,
    pub interocular: f64,
    pub spatial_tol: f64,
    pub normal_tol: f64,
    pub reliable_pairs: usize,
    pub pairs: usize,
    pub alignment: PoseRecord,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_depth(depth: &GrayImage, path: &Path) -> Result<()> {
    save_gray16_png(depth, 0.0, 65535.0 / DEPTH_PNG_SCALE, path)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn angle_tag(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m").replace('.', "p")
}

struct Timer<'a> {
    sample: &'a str,
    log: &'a Mutex<Vec<StageTiming>>,
}

impl Timer<'_> {
    fn stage<T>(&self, stage: &str, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, StageError> {
        let start = Instant::now();
        let out = f().map_err(|error| StageError { stage: stage.into(), error });
        let seconds = start.elapsed().as_secs_f64();
        log::info!("stage={stage} sample={} seconds={seconds:.3} ok={}", self.sample, out.is_ok());
        self.log.lock().expect("timing log").push(StageTiming { sample: self.sample.into(), stage: stage.into(), seconds });
        out
    }
}

/// Runs every stage on one sample, writing under `out`.
pub fn process_sample(
    cfg: &RunConfig,
    assets: &Assets,
    index: usize,
    sample_dir: &Path,
    out: &Path,
    exec: Exec,
    log: &Mutex<Vec<StageTiming>>,
) -> std::result::Result<(), StageError> {
    let name = out.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let t = Timer { sample: &name, log };
    let sample = t.stage("load", || {
        if out.exists() {
            std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
        create_dir(out)?;
        Sample::read(sample_dir)
    })?;
    let canonical = &assets.template.mesh;
    let ann = &assets.template.annotations;

    let reg = t.stage("register", || {
        let start = rigid_project(canonical, &initial_pose(canonical, &sample.frame, &sample.landmarks)?);
        let reg = nonrigid_icp_with(&start, &ann.contour_band, &sample.frame, &sample.landmarks, &cfg.registration, exec)?;
        write_obj(&reg.registered, &out.join("registered.obj"))?;
        write_json(&out.join("report.json"), &reg.report)?;
        Ok(reg)
    })?;
    let registered = &reg.registered;

    let (shape, pose) = t.stage("disentangle", || {
        let (shape, pose) = disentangle_rigid(registered, canonical)?;
        write_obj(&shape, &out.join("shape.obj"))?;
        write_json(&out.join("pose.json"), &pose.to_record())?;
        Ok((shape, pose))
    })?;

    let tex = t.stage("texture", || {
        let fit = fit_texture(&sample.frame.color, registered, &assets.model, &cfg.texture)?;
        write_json(&out.join("fit.json"), &FitRecord { pose: pose.to_record(), texture: &fit.params })?;
        Ok(fit.params)
    })?;

    let aug = &cfg.augmentation;
    t.stage("augment_pose", || {
        let dense = complete_depth(&sample.frame, registered, aug.anchor_spacing, aug.smooth_weight)?;
        for (pitch, yaw) in aug.poses() {
            let target = pose_about_face(registered, pitch, yaw);
            let view = rotate_and_render_with(&sample.frame, registered, &dense.depth, &target, &assets.model, &tex, &aug.rotate, exec)?;
            let dir = out.join("pose").join(format!("p{}_y{}", angle_tag(pitch), angle_tag(yaw)));
            create_dir(&dir)?;
            save_rgb_png(&view.color, &dir.join("image.png"))?;
            save_depth(&view.depth, &dir.join("depth.png"))?;
            write_obj(&shape, &dir.join("gt_shape.obj"))?;
            write_json(&dir.join("fit.json"), &FitRecord { pose: target.compose(&pose).to_record(), texture: &tex })?;
            write_json(&dir.join("provenance.json"), &PoseProvenance { source: &sample.name, pitch, yaw })?;
        }
        Ok(())
    })?;

    t.stage("augment_shape", || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
        let n = assets.donors.len();
        for k in 0..aug.shape_count {
            let ids: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..n));
            let d = |i: usize| assets.donors[ids[i]].clone();
            let parts = FuseParts { eyes: d(0), nose: d(1), mouth: d(2), cheek: d(3) };
            let target = fuse_target_shape(&parts, &ann.regions, aug.blend_band)?;
            let res = transform_shape(&sample.frame, registered, &target, &tex, aug.anchor_spacing)?;
            let dir = out.join("shape").join(format!("s{k}"));
            create_dir(&dir)?;
            save_rgb_png(&res.color, &dir.join("image.png"))?;
            save_depth(&res.depth, &dir.join("depth.png"))?;
            write_obj(&target, &dir.join("gt_shape.obj"))?;
            let placed = fit_rigid(&target.vertices, &res.target.vertices, None)?;
            write_json(&dir.join("fit.json"), &FitRecord { pose: placed.to_record(), texture: &tex })?;
            write_json(&dir.join("provenance.json"), &ShapeProvenance { source: &sample.name, donors: ids })?;
        }
        Ok(())
    })?;

    t.stage("synth_views", || {
        let im = build_image_mesh(&sample.frame.color, registered, cfg.views.anchor_spacing)?;
        let flipped = mirror_register(&im)?;
        let dir = out.join("views");
        create_dir(&dir)?;
        for (i, &(pitch, yaw)) in cfg.views.views.iter().enumerate() {
            let v = synthesize_view_with(&im, &flipped, &im.view_pose(pitch, yaw), exec)?;
            save_rgba_png(&v.color, &v.alpha, &dir.join(format!("view_{i}.png")))?;
        }
        Ok(())
    })?;

    if let Some(gt) = &sample.gt {
        t.stage("eval", || {
            let m = &cfg.metrics;
            gt.check_same_topology(canonical, "ground-truth shape")?;
            let corr = build_correspondence(&assets.template, gt, gt, m.spatial_tol, m.normal_tol)?;
            let d = assets.template.interocular(gt);
            let report = MetricsReport {
                nme: metric_nme(&shape, gt, &corr, d)?,
                dace: metric_dace(&shape, gt, &corr, d)?,
                psd: psd_distance_with(&shape, gt, &psd_views(), m.psd_size, m.psd_size, exec).distance,
                interocular: d,
                spatial_tol: m.spatial_tol,
                normal_tol: m.normal_tol,
                reliable_pairs: corr.reliable_count(),
                pairs: corr.len(),
                alignment: align_reliable(&shape, gt, &corr)?.to_record(),
            };
            write_json(&out.join("metrics.json"), &report)
        })?;
    }
    Ok(())
}

/// Runs every sample; a failing sample is logged and recorded in the
/// manifest while the others continue.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    let assets = Assets::load(cfg)?;
    let root = &cfg.paths.output;
    create_dir(root)?;
    let exec = if cfg.workers == 1 { Exec::Sequential } else { Exec::Parallel };
    let log = Mutex::new(Vec::new());
    let names: Vec<String> = cfg
        .paths
        .inputs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{i:03}_{}", p.file_name().map_or_else(|| "sample".into(), |n| n.to_string_lossy().into_owned())))
        .collect();
    let jobs: Vec<usize> = (0..names.len()).collect();
    let run = || {
        par::map_slice(exec, &jobs, |&i| {
            process_sample(cfg, &assets, i, &cfg.paths.inputs[i], &root.join(&names[i]), exec, &log).map_err(|e| {
                log::error!("sample {} failed in {e}", names[i]);
                SampleFailure { sample: names[i].clone(), stage: e.stage, error: e.error.to_string() }
            })
        })
    };
    let results = run_with_workers(cfg.workers, run)?;
    let failures = results.into_iter().filter_map(|r| r.err()).collect();
    let mut timings = log.into_inner().expect("timing log");
    timings.sort_by(|a, b| a.sample.cmp(&b.sample));
    write_json(&root.join(TIMINGS), &timings)?;

    let artifacts = list_artifacts(root, &[Path::new(MANIFEST), Path::new(TIMINGS)])?;
    let manifest = Manifest { seed: cfg.seed, samples: names, failures, artifacts };
    let manifest_path = root.join(MANIFEST);
    write_json(&manifest_path, &manifest)?;
    Ok(PipelineOutcome { manifest, manifest_path, timings })
}

#[cfg(feature = "parallel")]
fn run_with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    // A one-thread pool keeps library kernels that default to parallel
    // execution on a single worker too.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn run_with_workers<T: Send>(_workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}
