//! Run configuration (TOML, one section per stage).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::{RotateConfig, TextureFitConfig, DEPTH_SMOOTH_WEIGHT};
use crate::error::{Error, Result};
use crate::metrics::PSD_SIZE;
use crate::multiview::STANDARD_VIEWS;
use crate::registration::NicpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Template mesh (OBJ); its annotations live next to it as `<stem>.json`.
    pub template: PathBuf,
    pub model: PathBuf,
    /// Sample directories (image.png, depth.png, landmarks.json and
    /// optionally gt_shape.obj).
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Donor shapes for shape transformation, template topology.
    #[serde(default)]
    pub donors: Vec<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Yaw angles rendered at zero pitch, degrees.
    pub yaws: Vec<f64>,
    /// Pitch angles rendered at zero yaw, degrees.
    pub pitches: Vec<f64>,
    pub shape_count: usize,
    /// Background anchor spacing in pixels.
    pub anchor_spacing: f64,
    pub smooth_weight: f64,
    /// Cross-fade width between donor regions, mm.
    pub blend_band: f64,
    pub rotate: RotateConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            yaws: vec![-15.0, 15.0, 30.0, 45.0, 50.0],
            pitches: vec![15.0, -25.0],
            shape_count: 4,
            anchor_spacing: 16.0,
            smooth_weight: DEPTH_SMOOTH_WEIGHT,
            blend_band: 8.0,
            rotate: RotateConfig::default(),
        }
    }
}

impl AugmentConfig {
    /// Every (pitch, yaw) pair of the pose schedule, yaws first.
    pub fn poses(&self) -> Vec<(f64, f64)> {
        self.yaws.iter().map(|&y| (0.0, y)).chain(self.pitches.iter().map(|&p| (p, 0.0))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewsConfig {
    /// (pitch, yaw) in degrees.
    pub views: Vec<(f64, f64)>,
    pub anchor_spacing: f64,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        ViewsConfig { views: STANDARD_VIEWS.to_vec(), anchor_spacing: 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub spatial_tol: f64,
    pub normal_tol: f64,
    pub psd_size: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { spatial_tol: 4.0, normal_tol: 30.0, psd_size: PSD_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads over samples; 1 keeps every kernel on a single thread,
    /// 0 uses every core.
    #[serde(default = "one")]
    pub workers: usize,
    pub paths: PathsConfig,
    #[serde(default)]
    pub registration: NicpConfig,
    #[serde(default)]
    pub texture: TextureFitConfig,
    #[serde(default)]
    pub augmentation: AugmentConfig,
    #[serde(default)]
    pub views: ViewsConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn one() -> usize {
    1
}

impl RunConfig {
    /// Parses TOML; relative paths are taken from `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.template);
        fix(&mut cfg.paths.model);
        fix(&mut cfg.paths.output);
        cfg.paths.inputs.iter_mut().for_each(fix);
        cfg.paths.donors.iter_mut().for_each(fix);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        let mut required: Vec<&Path> = vec![&p.template, &p.model];
        required.extend(p.inputs.iter().map(PathBuf::as_path));
        required.extend(p.donors.iter().map(PathBuf::as_path));
        if let Some(missing) = required.iter().find(|q| !q.exists()) {
            return Err(Error::Config(format!("{} does not exist", missing.display())));
        }
        if !p.template.with_extension("json").exists() {
            return Err(Error::Config(format!("template annotations {} do not exist", p.template.with_extension("json").display())));
        }
        self.registration.validate()?;
        let a = &self.augmentation;
        if a.shape_count > 0 && p.donors.is_empty() {
            return Err(Error::Config("shape transformation needs at least one donor".into()));
        }
        if !(a.anchor_spacing > 0.0) || !(self.views.anchor_spacing > 0.0) {
            return Err(Error::Config("anchor spacing must be positive".into()));
        }
        if !(a.smooth_weight > 0.0) || !(a.blend_band >= 0.0) {
            return Err(Error::Config("smoothness weight must be positive and blend band nonnegative".into()));
        }
        if a.yaws.iter().chain(&a.pitches).any(|v| !v.is_finite()) {
            return Err(Error::Config("pose angles must be finite".into()));
        }
        let m = &self.metrics;
        if !(m.spatial_tol >= 0.0) || !(m.normal_tol >= 0.0) || m.psd_size == 0 {
            return Err(Error::Config("metric thresholds must be nonnegative and the PSD size positive".into()));
        }
        Ok(())
    }
}
