//! `facekit` command-line front end.
//!
//! Exit codes: 0 success, 1 failure (or some pipeline samples failed),
//! 2 configuration or usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use facekit::augmentation::{complete_depth, fit_texture, fuse_target_shape, pose_about_face, rotate_and_render, transform_shape, FuseParts};
use facekit::imaging::{save_gray16_png, save_rgb_png, save_rgba_png};
use facekit::mesh::{read_obj, write_obj};
use facekit::metrics::{align_reliable, build_correspondence, metric_dace, metric_nme, normalize_weights, psd_distance, psd_views, vgd_weights};
use facekit::morphable::synth::{synthetic_face, SynthConfig};
use facekit::morphable::{disentangle_rigid, rigid_project, MorphableModel};
use facekit::multiview::{build_image_mesh, mirror_register, synthesize_view};
use facekit::pipeline::{fixture_hash_list, generate_fixtures, initial_pose, run_pipeline, FixtureConfig, RunConfig, Sample};
use facekit::registration::{nonrigid_icp, DEPTH_PNG_SCALE};
use facekit::template::FaceTemplate;
use facekit::Error;

#[derive(Parser)]
#[command(name = "facekit", version, about = "Data construction for single-image 3D face reconstruction")]
struct Cli {
    /// Log level (error, warn, info, debug); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Morphable model utilities.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Register the template to one RGB-D sample.
    Register(RegisterArgs),
    /// Pose or shape augmentation of one registered sample.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Render the multiview inputs of one registered sample.
    SynthViews(SynthViewsArgs),
    /// Shape losses between two meshes of the same topology.
    #[command(subcommand)]
    Loss(LossCommand),
    /// NME, DACE and plaster distance of a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Run every stage on every sample listed in a config.
    Pipeline(PipelineArgs),
    /// Write a deterministic synthetic fixture set.
    Fixtures(FixturesArgs),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write a synthetic model with its template and annotations.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Template lattice size.
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Stage parameters come from the matching sections of a pipeline config;
/// defaults apply without one.
#[derive(Args)]
struct ConfigArg {
    /// Pipeline config whose stage sections supply the parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Option<RunConfig>, Error> {
        self.config.as_deref().map(RunConfig::load).transpose()
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Template OBJ; annotations are read from the sibling `.json`.
    #[arg(long)]
    template: PathBuf,
    /// Sample directory with image.png, depth.png and landmarks.json.
    #[arg(long)]
    sample: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[command(flatten)]
    input: SampleArgs,
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisteredArgs {
    #[command(flatten)]
    input: SampleArgs,
    /// Morphable model file.
    #[arg(long)]
    model: PathBuf,
    /// Registered mesh in image space.
    #[arg(long)]
    registered: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AugmentCommand {
    /// Rotate and render the sample to new poses.
    Pose {
        #[command(flatten)]
        args: RegisteredArgs,
        /// Poses as `pitch,yaw` in degrees; the config schedule when absent.
        #[arg(long = "pose", value_parser = parse_pose, allow_hyphen_values = true)]
        poses: Vec<(f64, f64)>,
    },
    /// Replace the face shape by a fusion of donor shapes.
    Shape {
        #[command(flatten)]
        args: RegisteredArgs,
        /// Donors for the eyes, nose, mouth and cheek regions; one donor is
        /// used for every region.
        #[arg(long = "donor", required = true, num_args = 1..=4)]
        donors: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct SynthViewsArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    registered: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeshPair {
    /// Predicted mesh.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = facekit::metrics::PSD_SIZE)]
    size: usize,
}

#[derive(Subcommand)]
enum LossCommand {
    /// Plaster-shading distance over the five standard views.
    Psd {
        #[command(flatten)]
        meshes: MeshPair,
    },
    /// Vertex weights from inverse-rendered plaster errors.
    Vgd {
        #[command(flatten)]
        meshes: MeshPair,
        /// Scale the weights to mean 1.
        #[arg(long)]
        normalize: bool,
        /// Weights file (u32 count, then f32 little-endian values).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    template: PathBuf,
    /// Ground-truth scan.
    #[arg(long)]
    gt: PathBuf,
    /// Reconstruction in template topology.
    #[arg(long)]
    recon: PathBuf,
    /// Ground truth registered to the template; the scan itself when omitted.
    #[arg(long)]
    gt_registered: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    spatial_tol: f64,
    #[arg(long, default_value_t = 30.0)]
    normal_tol: f64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's worker count (0 uses every core).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    donors: usize,
    #[arg(long, default_value_t = 24)]
    grid: usize,
    /// Print the content hash of every file.
    #[arg(long)]
    hashes: bool,
}

fn parse_pose(s: &str) -> Result<(f64, f64), String> {
    let (p, y) = s.split_once(',').ok_or("expected pitch,yaw")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((parse(p)?, parse(y)?))
}

/// A command outcome: `Partial` means it ran but some work failed.
enum Status {
    Done,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn save_depth(depth: &facekit::imaging::GrayImage, path: &Path) -> Result<(), Error> {
    save_gray16_png(depth, 0.0, 65535.0 / DEPTH_PNG_SCALE, path)
}

fn run(command: Command) -> Result<Status, Error> {
    match command {
        Command::Model(ModelCommand::Synth { seed, grid, out }) => {
            create_dir(&out)?;
            let face = synthetic_face(&SynthConfig { grid, ..Default::default() }, seed);
            face.model.write(&out.join("model.bin"))?;
            face.template.save(&out.join("template.obj"))?;
            println!("{}", out.display());
        }
        Command::Register(a) => {
            let cfg = a.config.load()?;
            let template = FaceTemplate::load(&a.input.template)?;
            let sample = Sample::read(&a.input.sample)?;
            let start = rigid_project(&template.mesh, &initial_pose(&template.mesh, &sample.frame, &sample.landmarks)?);
            let nicp = cfg.map(|c| c.registration).unwrap_or_default();
            let reg = nonrigid_icp(&start, &template.annotations.contour_band, &sample.frame, &sample.landmarks, &nicp)?;
            create_dir(&a.out)?;
            write_obj(&reg.registered, &a.out.join("registered.obj"))?;
            write_json(&a.out.join("report.json"), &serde_json::to_value(&reg.report)?)?;
            let (shape, pose) = disentangle_rigid(&reg.registered, &template.mesh)?;
            write_obj(&shape, &a.out.join("shape.obj"))?;
            write_json(&a.out.join("pose.json"), &serde_json::to_value(pose.to_record())?)?;
        }
        Command::Augment(AugmentCommand::Pose { args: a, poses }) => {
            let cfg = a.config.load()?;
            let sample = Sample::read(&a.input.sample)?;
            let model = MorphableModel::read(&a.model)?;
            let registered = read_obj(&a.registered)?;
            let (texture, aug) = cfg.map(|c| (c.texture, c.augmentation)).unwrap_or_default();
            let poses = if poses.is_empty() { aug.poses() } else { poses };
            let tex = fit_texture(&sample.frame.color, &registered, &model, &texture)?.params;
            let dense = complete_depth(&sample.frame, &registered, aug.anchor_spacing, aug.smooth_weight)?;
            for (pitch, yaw) in poses {
                let target = pose_about_face(&registered, pitch, yaw);
                let view = rotate_and_render(&sample.frame, &registered, &dense.depth, &target, &model, &tex, &aug.rotate)?;
                let dir = a.out.join(format!("p{pitch}_y{yaw}"));
                create_dir(&dir)?;
                save_rgb_png(&view.color, &dir.join("image.png"))?;
                save_depth(&view.depth, &dir.join("depth.png"))?;
                write_obj(&view.registered, &dir.join("registered.obj"))?;
            }
        }
        Command::Augment(AugmentCommand::Shape { args: a, donors }) => {
            let cfg = a.config.load()?;
            let template = FaceTemplate::load(&a.input.template)?;
            let sample = Sample::read(&a.input.sample)?;
            let model = MorphableModel::read(&a.model)?;
            let registered = read_obj(&a.registered)?;
            let (texture, aug) = cfg.map(|c| (c.texture, c.augmentation)).unwrap_or_default();
            let meshes = donors.iter().map(|p| read_obj(p)).collect::<Result<Vec<_>, _>>()?;
            let d = |i: usize| meshes[i.min(meshes.len() - 1)].clone();
            let parts = FuseParts { eyes: d(0), nose: d(1), mouth: d(2), cheek: d(3) };
            let target = fuse_target_shape(&parts, &template.annotations.regions, aug.blend_band)?;
            let tex = fit_texture(&sample.frame.color, &registered, &model, &texture)?.params;
            let res = transform_shape(&sample.frame, &registered, &target, &tex, aug.anchor_spacing)?;
            create_dir(&a.out)?;
            save_rgb_png(&res.color, &a.out.join("image.png"))?;
            save_depth(&res.depth, &a.out.join("depth.png"))?;
            write_obj(&target, &a.out.join("gt_shape.obj"))?;
            write_obj(&res.target, &a.out.join("registered.obj"))?;
        }
        Command::SynthViews(a) => {
            let views = a.config.load()?.map(|c| c.views).unwrap_or_default();
            let image = facekit::imaging::load_rgb_png(&a.image)?;
            let registered = read_obj(&a.registered)?;
            let im = build_image_mesh(&image, &registered, views.anchor_spacing)?;
            let flipped = mirror_register(&im)?;
            create_dir(&a.out)?;
            for (i, &(pitch, yaw)) in views.views.iter().enumerate() {
                let v = synthesize_view(&im, &flipped, &im.view_pose(pitch, yaw))?;
                save_rgba_png(&v.color, &v.alpha, &a.out.join(format!("view_{i}.png")))?;
            }
        }
        Command::Loss(LossCommand::Psd { meshes: m }) => {
            let (output, gt) = (read_obj(&m.output)?, read_obj(&m.gt)?);
            output.check_same_topology(&gt, "loss psd")?;
            let r = psd_distance(&output, &gt, &psd_views(), m.size, m.size);
            println!("{}", json!({ "distance": r.distance, "per_view": r.per_view }));
        }
        Command::Loss(LossCommand::Vgd { meshes: m, normalize, out }) => {
            let (output, gt) = (read_obj(&m.output)?, read_obj(&m.gt)?);
            let mut w = vgd_weights(&output, &gt, &psd_views(), m.size, m.size)?;
            if normalize {
                w = normalize_weights(&w, None)?;
            }
            std::fs::write(&out, w.to_bytes()).map_err(|e| Error::io(&out, e))?;
            println!("{}", json!({ "vertices": w.len(), "total": w.total() }));
        }
        Command::Eval(a) => {
            let template = FaceTemplate::load(&a.template)?;
            let (scan, recon) = (read_obj(&a.gt)?, read_obj(&a.recon)?);
            let gt_reg = match &a.gt_registered {
                Some(p) => read_obj(p)?,
                None => scan.clone(),
            };
            let corr = build_correspondence(&template, &scan, &gt_reg, a.spatial_tol, a.normal_tol)?;
            let d = template.interocular(&gt_reg);
            let report = json!({
                "nme": metric_nme(&recon, &scan, &corr, d)?,
                "dace": metric_dace(&recon, &scan, &corr, d)?,
                "psd": if recon.same_topology(&gt_reg) { Some(psd_distance(&recon, &gt_reg, &psd_views(), facekit::metrics::PSD_SIZE, facekit::metrics::PSD_SIZE).distance) } else { None },
                "interocular": d,
                "reliable_pairs": corr.reliable_count(),
                "pairs": corr.len(),
                "alignment": align_reliable(&recon, &scan, &corr)?.to_record(),
            });
            match a.out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Pipeline(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(w) = a.workers {
                cfg.workers = w;
            }
            if let Some(out) = a.out {
                cfg.paths.output = out;
            }
            let outcome = run_pipeline(&cfg)?;
            println!("{}", outcome.manifest_path.display());
            if outcome.failed() > 0 {
                for f in &outcome.manifest.failures {
                    eprintln!("sample {} failed in {}: {}", f.sample, f.stage, f.error);
                }
                return Ok(Status::Partial);
            }
        }
        Command::Fixtures(a) => {
            let set = generate_fixtures(a.seed, &a.out, &FixtureConfig { samples: a.samples, donors: a.donors, grid: a.grid, ..Default::default() })?;
            if a.hashes {
                print!("{}", fixture_hash_list(&set));
            } else {
                println!("{}", set.config.display());
            }
        }
    }
    Ok(Status::Done)
}
