//! Deterministic synthetic face model.
//!
//! The template is the front patch of an ellipsoidal head (x right, y down,
//! z toward the viewer, millimetres) with a nose ridge, eye sockets and a
//! mouth bump. Shape and texture axes are smooth random fields over UV,
//! orthogonalized and scaled to a decaying per-vertex standard deviation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MorphableModel;
use crate::math::{Vec2, Vec3};
use crate::mesh::primitives::grid;
use crate::template::{FaceTemplate, Region, TemplateAnnotations};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Template is a `grid x grid` vertex lattice.
    pub grid: usize,
    pub id_dims: usize,
    pub exp_dims: usize,
    pub tex_dims: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { grid: 40, id_dims: 20, exp_dims: 10, tex_dims: 10 }
    }
}

impl SynthConfig {
    /// Smallest square lattice holding at least `vertices` vertices.
    pub fn with_vertices(vertices: usize) -> Self {
        let g = ((vertices as f64).sqrt().ceil() as usize).max(4);
        SynthConfig { grid: g, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFace {
    pub model: MorphableModel,
    pub template: FaceTemplate,
}

const HALF_WIDTH: f64 = 75.0;
const HALF_HEIGHT: f64 = 95.0;
const DEPTH: f64 = 70.0;
const MAX_AZIMUTH: f64 = 70.0;
const MAX_ELEVATION: f64 = 50.0;

pub const EYE_CENTRE: (f64, f64) = (32.0, -22.0);
pub const MOUTH_CENTRE: (f64, f64) = (0.0, 48.0);

fn gauss(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-(dx * dx) / (2.0 * sx * sx) - (dy * dy) / (2.0 * sy * sy)).exp()
}

/// Canonical template surface point at parameter `(u, v)`.
pub fn head_surface(u: f64, v: f64) -> Vec3 {
    let th = (2.0 * u - 1.0) * MAX_AZIMUTH.to_radians();
    let ph = (2.0 * v - 1.0) * MAX_ELEVATION.to_radians();
    let x = HALF_WIDTH * th.sin() * ph.cos();
    let y = HALF_HEIGHT * ph.sin();
    let mut z = DEPTH * th.cos() * ph.cos();
    z += 16.0 * gauss(x, y - 8.0, 8.0, 18.0);
    z -= 4.0 * (gauss(x - EYE_CENTRE.0, y - EYE_CENTRE.1, 10.0, 8.0) + gauss(x + EYE_CENTRE.0, y - EYE_CENTRE.1, 10.0, 8.0));
    z += 3.0 * gauss(x - MOUTH_CENTRE.0, y - MOUTH_CENTRE.1, 16.0, 7.0);
    Vec3::new(x, y, z)
}

fn region_of(p: &Vec3) -> Region {
    let eye = |cx: f64| ((p.x - cx) / 18.0).powi(2) + ((p.y - EYE_CENTRE.1) / 12.0).powi(2) < 1.0;
    if eye(EYE_CENTRE.0) || eye(-EYE_CENTRE.0) {
        Region::Eyes
    } else if p.x.abs() < 16.0 && p.y > -10.0 && p.y < 30.0 {
        Region::Nose
    } else if ((p.x - MOUTH_CENTRE.0) / 28.0).powi(2) + ((p.y - MOUTH_CENTRE.1) / 12.0).powi(2) < 1.0 {
        Region::Mouth
    } else {
        Region::Cheek
    }
}

/// Picks `count` distinct vertices nearest (in xy) to points on an ellipse.
fn ring_landmarks(points: &[Vec3], centre: (f64, f64), radii: (f64, f64), count: usize, taken: &mut Vec<bool>) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let a = std::f64::consts::TAU * k as f64 / count as f64;
        let target = Vec2::new(centre.0 + radii.0 * a.cos(), centre.1 + radii.1 * a.sin());
        let best = (0..points.len())
            .filter(|&i| !taken[i])
            .min_by(|&i, &j| {
                let di = (points[i].xy() - target).norm_squared();
                let dj = (points[j].xy() - target).norm_squared();
                di.total_cmp(&dj).then(i.cmp(&j))
            })
            .expect("template has enough vertices");
        taken[best] = true;
        out.push(best);
    }
    out
}

fn nearest_xy(points: &[Vec3], x: f64, y: f64) -> usize {
    let t = Vec2::new(x, y);
    (0..points.len())
        .min_by(|&i, &j| (points[i].xy() - t).norm_squared().total_cmp(&(points[j].xy() - t).norm_squared()))
        .unwrap()
}

fn smooth_field(rng: &mut ChaCha8Rng, uv: &[Vec2]) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0..3) as f64,
                rng.random_range(0..3) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    uv.iter()
        .map(|t| {
            terms
                .iter()
                .map(|&(a, p, q, ph)| a * (std::f64::consts::PI * (p * t.x + q * t.y) + ph).cos())
                .sum()
        })
        .collect()
}

/// Gram-Schmidt smooth random columns against `prior`, then scale column `j`
/// to per-vertex RMS `sigma0 / (1 + j/3)`.
fn smooth_basis(rng: &mut ChaCha8Rng, uv: &[Vec2], cols: usize, sigma0: f64, prior: &mut Vec<DVector<f64>>) -> DMatrix<f64> {
    let n = uv.len();
    let mut out = Vec::with_capacity(cols);
    while out.len() < cols {
        let fx = smooth_field(rng, uv);
        let fy = smooth_field(rng, uv);
        let fz = smooth_field(rng, uv);
        let mut c = DVector::from_iterator(3 * n, (0..n).flat_map(|i| [fx[i], fy[i], fz[i]]));
        for _ in 0..2 {
            for q in prior.iter() {
                let d = c.dot(q);
                c -= q * d;
            }
        }
        let norm = c.norm();
        if norm < 1e-6 * (n as f64).sqrt() {
            continue;
        }
        c /= norm;
        prior.push(c.clone());
        let j = out.len();
        out.push(c * (sigma0 / (1.0 + j as f64 / 3.0) * (n as f64).sqrt()));
    }
    DMatrix::from_columns(&out)
}

/// Builds the synthetic model and its annotated template from `seed`.
pub fn synthetic_face(cfg: &SynthConfig, seed: u64) -> SyntheticFace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = cfg.grid.max(4);
    let base = grid(g, g, 0.0, 0.0, 1.0, 1.0);
    let uv = base.uv.clone().unwrap();
    let points: Vec<Vec3> = uv.iter().map(|t| head_surface(t.x, t.y)).collect();

    let mut prior = Vec::new();
    let id_basis = smooth_basis(&mut rng, &uv, cfg.id_dims, 2.0, &mut prior);
    let exp_basis = smooth_basis(&mut rng, &uv, cfg.exp_dims, 1.5, &mut prior);
    let mut tex_prior = Vec::new();
    let tex_basis = smooth_basis(&mut rng, &uv, cfg.tex_dims, 0.04, &mut tex_prior);

    let regions: Vec<Region> = points.iter().map(region_of).collect();
    let mean_texture = DVector::from_iterator(
        3 * points.len(),
        regions.iter().flat_map(|r| match r {
            Region::Eyes => [0.30, 0.24, 0.22],
            Region::Mouth => [0.72, 0.36, 0.36],
            Region::Nose => [0.80, 0.62, 0.52],
            Region::Cheek => [0.76, 0.58, 0.48],
        }),
    );

    let on_border = |i: usize| {
        let (c, r) = (i % g, i / g);
        c == 0 || r == 0 || c == g - 1 || r == g - 1
    };
    let face_mask = (0..points.len()).map(|i| !on_border(i)).collect();
    let contour_band = (0..points.len())
        .filter(|&i| {
            let t = uv[i];
            let lateral = (2.0 * t.x - 1.0).abs();
            (lateral >= 0.55 && t.y > 0.25) || t.y >= 0.85
        })
        .collect();
    let mut taken = vec![false; points.len()];
    let left_eye = ring_landmarks(&points, (-EYE_CENTRE.0, EYE_CENTRE.1), (15.0, 8.0), 17, &mut taken);
    let right_eye = ring_landmarks(&points, EYE_CENTRE, (15.0, 8.0), 17, &mut taken);
    let mouth = ring_landmarks(&points, MOUTH_CENTRE, (24.0, 9.0), 20, &mut taken);
    let outer_eye_corners = [
        nearest_xy(&points, -EYE_CENTRE.0 - 18.0, EYE_CENTRE.1),
        nearest_xy(&points, EYE_CENTRE.0 + 18.0, EYE_CENTRE.1),
    ];

    let mean_shape = DVector::from_iterator(3 * points.len(), points.iter().flat_map(|p| [p.x, p.y, p.z]));
    let model = MorphableModel::new(mean_shape, id_basis, exp_basis, mean_texture, tex_basis, base.triangles.clone(), Some(uv))
        .expect("synthetic model is well formed");
    let annotations = TemplateAnnotations {
        regions,
        face_mask,
        contour_band,
        left_eye,
        right_eye,
        mouth,
        outer_eye_corners,
    };
    let template = FaceTemplate::new(model.mean_mesh(), annotations).expect("synthetic annotations are valid");
    SyntheticFace { model, template }
}
