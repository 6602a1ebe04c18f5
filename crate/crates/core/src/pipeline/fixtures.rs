//! Deterministic synthetic fixture sets.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Artifact, RunConfig};
use crate::augmentation::TextureParams;
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Mask};
use crate::math::Vec3;
use crate::mesh::write_obj;
use crate::morphable::synth::{synthetic_face, SynthConfig};
use crate::morphable::{evaluate_shape, rigid_project, MorphableModel, ShapeParams};
use crate::raster::{PhongParams, BACKGROUND};
use crate::registration::{synthetic_landmarks, RgbdFrame};
use crate::scene::{background_gradient, image_pose, render_over};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub samples: usize,
    pub donors: usize,
    /// Template lattice size.
    pub grid: usize,
    pub image_size: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig { samples: 1, donors: 4, grid: 24, image_size: 256 }
    }
}

/// Depth of the face centroid in fixture frames.
pub const FACE_DEPTH: f64 = 500.0;
/// Depth of the flat wall behind the face.
pub const WALL_DEPTH: f64 = 350.0;

/// Written fixture files, sorted by path relative to the fixture root.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub root: PathBuf,
    pub files: Vec<Artifact>,
    /// A ready-to-run pipeline config over the fixtures.
    pub config: PathBuf,
}

#[derive(Serialize)]
struct GroundTruth<'a> {
    params: &'a ShapeParams,
    pitch: f64,
    yaw: f64,
    pose: crate::morphable::PoseRecord,
    texture: &'a TextureParams,
}

fn random_params(rng: &mut ChaCha8Rng, model: &MorphableModel, scale: f64) -> ShapeParams {
    ShapeParams {
        alpha_id: (0..model.id_dims()).map(|_| rng.random_range(-scale..scale)).collect(),
        alpha_exp: (0..model.exp_dims()).map(|_| rng.random_range(-scale..scale)).collect(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the synthetic model, template, sample frames with landmarks and
/// ground truth, donor shapes and a pipeline config under `out_dir`.
pub fn generate_fixtures(seed: u64, out_dir: &Path, cfg: &FixtureConfig) -> Result<FixtureSet> {
    let face = synthetic_face(&SynthConfig { grid: cfg.grid, ..Default::default() }, seed);
    let model = &face.model;
    let template = &face.template;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c5);
    create_dir(out_dir)?;
    model.write(&out_dir.join("model.bin"))?;
    template.save(&out_dir.join("template.obj"))?;

    let w = cfg.image_size;
    let mut inputs = Vec::new();
    for s in 0..cfg.samples {
        let dir = out_dir.join("samples").join(format!("sample_{s:03}"));
        create_dir(&dir)?;
        let params = random_params(&mut rng, model, 0.6);
        let gt = evaluate_shape(model, &params)?;
        let (pitch, yaw) = (rng.random_range(-8.0..8.0), rng.random_range(-10.0..10.0));
        let pose = image_pose(&gt, w, w, pitch, yaw, FACE_DEPTH);
        let posed = rigid_project(&gt, &pose);
        let tex = TextureParams {
            beta: (0..model.tex_dims()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            phong: PhongParams {
                amb: Vec3::repeat(rng.random_range(0.35..0.45)),
                dir: Vec3::repeat(rng.random_range(0.45..0.55)),
                l: Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0).normalize(),
                k_s: 0.0,
                ..Default::default()
            },
        };
        let colors = tex.shade(model, &posed)?;
        let (color, buf) = render_over(&posed, &colors, &background_gradient(w, w))?;
        let depth = GrayImage::from_vec(w, w, buf.tri_index.iter().zip(&buf.depth).map(|(&t, &d)| if t == BACKGROUND { WALL_DEPTH } else { d }).collect())?;
        let frame = RgbdFrame::new(color, depth, Mask::filled(w, w, true))?;
        frame.write(&dir.join("image.png"), &dir.join("depth.png"))?;
        let ann = &template.annotations;
        let lm = synthetic_landmarks(&posed, &ann.edge_landmarks(), &ann.contour_band);
        std::fs::write(dir.join("landmarks.json"), lm.to_json()?).map_err(|e| Error::io(&dir, e))?;
        write_obj(&gt, &dir.join("gt_shape.obj"))?;
        write_json(&dir.join("gt.json"), &GroundTruth { params: &params, pitch, yaw, pose: pose.to_record(), texture: &tex })?;
        inputs.push(dir);
    }

    let donor_dir = out_dir.join("donors");
    create_dir(&donor_dir)?;
    let mut donors = Vec::new();
    for d in 0..cfg.donors {
        let mesh = evaluate_shape(model, &random_params(&mut rng, model, 1.0))?;
        let path = donor_dir.join(format!("donor_{d}.obj"));
        write_obj(&mesh, &path)?;
        donors.push(path);
    }

    let rel = |p: &Path| p.strip_prefix(out_dir).expect("inside fixture root").to_path_buf();
    let mut run = RunConfig {
        seed,
        workers: 1,
        paths: super::PathsConfig {
            template: PathBuf::from("template.obj"),
            model: PathBuf::from("model.bin"),
            inputs: inputs.iter().map(|p| rel(p)).collect(),
            donors: donors.iter().map(|p| rel(p)).collect(),
            output: PathBuf::from("out"),
        },
        registration: Default::default(),
        texture: Default::default(),
        augmentation: Default::default(),
        views: Default::default(),
        metrics: Default::default(),
    };
    if donors.is_empty() {
        run.augmentation.shape_count = 0;
    }
    let config = out_dir.join("pipeline.toml");
    std::fs::write(&config, run.to_toml()?).map_err(|e| Error::io(&config, e))?;

    let files = super::list_artifacts(out_dir, &[Path::new("out")])?;
    Ok(FixtureSet { root: out_dir.to_path_buf(), files, config })
}

/// Hash lines `<sha256>  <relative path>` for a fixture set.
pub fn fixture_hash_list(set: &FixtureSet) -> String {
    set.files.iter().map(|a| format!("{}  {}\n", a.sha256, a.path)).collect()
}
