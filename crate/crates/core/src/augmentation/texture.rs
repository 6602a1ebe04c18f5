//! Analysis-by-synthesis fit of the model texture and Phong lighting, and
//! re-shading for a new shape.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::math::Vec3;
use crate::mesh::{compute_vertex_normals, Mesh};
use crate::morphable::{CameraPose, MorphableModel};
use crate::raster::{phong_shade_with_normals, rasterize, PhongParams, BACKGROUND};

/// Lower bound on a fitted Phong exponent; `x^nu` stays differentiable at 0.
const MIN_SHININESS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub beta: Vec<f64>,
    pub phong: PhongParams,
}

impl TextureParams {
    pub fn neutral(model: &MorphableModel) -> Self {
        TextureParams { beta: vec![0.0; model.tex_dims()], phong: PhongParams::default() }
    }

    /// Shaded per-vertex colors of `mesh` under these parameters.
    pub fn shade(&self, model: &MorphableModel, mesh: &Mesh) -> Result<Vec<Vec3>> {
        let t = model.evaluate_texture(&self.beta)?;
        let n = compute_vertex_normals(mesh)?;
        phong_shade_with_normals(&n.normals, &t, &self.phong)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureFitConfig {
    pub iterations: usize,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
    /// Also fit the specular strength and exponent.
    pub fit_specular: bool,
    pub initial: PhongParams,
}

impl Default for TextureFitConfig {
    fn default() -> Self {
        TextureFitConfig { iterations: 60, damping: 1e-3, fit_specular: true, initial: PhongParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureFit {
    pub params: TextureParams,
    /// Mean squared residual of the best iterate after each iteration.
    pub trace: Vec<f64>,
    pub residual: f64,
}

/// Covered pixels of the registered face with their triangle corners and
/// barycentric weights.
struct Samples {
    vertices: Vec<[usize; 3]>,
    weights: Vec<[f64; 3]>,
    observed: Vec<Vec3>,
}

fn samples(image: &RgbImage, registered: &Mesh) -> Result<Samples> {
    let zeros = vec![Vec3::zeros(); registered.vertex_count()];
    let buf = rasterize(registered, &CameraPose::identity(), &zeros, image.width(), image.height())?;
    let mut s = Samples { vertices: Vec::new(), weights: Vec::new(), observed: Vec::new() };
    for (i, &t) in buf.tri_index.iter().enumerate() {
        if t != BACKGROUND {
            s.vertices.push(buf.triangles[t as usize]);
            s.weights.push(buf.bary[i]);
            s.observed.push(image.data()[i]);
        }
    }
    if s.observed.is_empty() {
        return Err(Error::InvalidParameter("registered mesh covers no pixel of the image".into()));
    }
    Ok(s)
}

impl Samples {
    fn predict(&self, colors: &[Vec3]) -> impl Iterator<Item = Vec3> + '_ {
        let colors = colors.to_vec();
        self.vertices.iter().zip(&self.weights).map(move |(v, b)| colors[v[0]] * b[0] + colors[v[1]] * b[1] + colors[v[2]] * b[2])
    }

    fn residual(&self, colors: &[Vec3]) -> f64 {
        let sum: f64 = self.predict(colors).zip(&self.observed).map(|(p, o)| (p - o).norm_squared()).sum();
        sum / (3 * self.observed.len()) as f64
    }
}

/// Phong shading without parameter validation, so finite differences may
/// probe outside the admissible range.
fn shade(normals: &[Vec3], texture: &[Vec3], p: &PhongParams) -> Vec<Vec3> {
    normals
        .iter()
        .zip(texture)
        .map(|(n, t)| {
            let nl = n.dot(&p.l);
            let r = 2.0 * nl * n - p.l;
            let spec = p.k_s * r.dot(&p.ve).max(0.0).powf(p.nu);
            let c = p.amb.component_mul(t) + p.dir.component_mul(t) * nl.max(0.0) + p.dir * spec;
            c.map(|x| x.clamp(0.0, 1.0))
        })
        .collect()
}

/// Parameter vector `[beta, amb, dir, du, dv, k_s, nu]`; the light
/// direction is perturbed in the tangent plane of the current one.
struct Layout {
    k: usize,
    specular: bool,
    e1: Vec3,
    e2: Vec3,
}

impl Layout {
    fn new(k: usize, specular: bool, l: &Vec3) -> Self {
        let helper = if l.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = l.cross(&helper).normalize();
        let e2 = l.cross(&e1);
        Layout { k, specular, e1, e2 }
    }

    fn len(&self) -> usize {
        self.k + 8 + if self.specular { 2 } else { 0 }
    }

    fn pack(&self, t: &TextureParams) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        v.rows_mut(0, self.k).copy_from_slice(&t.beta);
        v.fixed_rows_mut::<3>(self.k).copy_from(&t.phong.amb);
        v.fixed_rows_mut::<3>(self.k + 3).copy_from(&t.phong.dir);
        if self.specular {
            v[self.k + 8] = t.phong.k_s;
            v[self.k + 9] = t.phong.nu;
        }
        v
    }

    fn unpack(&self, v: &DVector<f64>, base: &TextureParams) -> TextureParams {
        let mut phong = base.phong.clone();
        phong.amb = v.fixed_rows::<3>(self.k).into_owned();
        phong.dir = v.fixed_rows::<3>(self.k + 3).into_owned();
        phong.l = (base.phong.l + self.e1 * v[self.k + 6] + self.e2 * v[self.k + 7]).normalize();
        if self.specular {
            phong.k_s = v[self.k + 8];
            phong.nu = v[self.k + 9];
        }
        TextureParams { beta: v.rows(0, self.k).iter().copied().collect(), phong }
    }

    /// Projects onto the admissible set.
    fn admissible(&self, mut t: TextureParams) -> TextureParams {
        t.phong.amb = t.phong.amb.map(|x| x.max(0.0));
        t.phong.dir = t.phong.dir.map(|x| x.max(0.0));
        t.phong.k_s = t.phong.k_s.max(0.0);
        t.phong.nu = t.phong.nu.max(MIN_SHININESS);
        t
    }
}

/// Mean squared per-pixel color residual between `image` and the shaded
/// model texture rendered on `registered`.
pub fn texture_residual(image: &RgbImage, registered: &Mesh, model: &MorphableModel, params: &TextureParams) -> Result<f64> {
    let s = samples(image, registered)?;
    Ok(s.residual(&params.shade(model, registered)?))
}

/// Fits texture coefficients and lighting to the image pixels covered by
/// `registered` (image coordinates, template topology).
///
/// Damped Gauss-Newton on all parameters jointly: the texture coefficients
/// and light intensities enter bilinearly, the light direction, specular
/// strength and exponent nonlinearly. Returns the best iterate.
pub fn fit_texture(image: &RgbImage, registered: &Mesh, model: &MorphableModel, config: &TextureFitConfig) -> Result<TextureFit> {
    if registered.vertex_count() != model.vertex_count() {
        return Err(Error::TopologyMismatch("registered mesh and model differ in vertex count".into()));
    }
    config.initial.validate()?;
    let s = samples(image, registered)?;
    let normals = compute_vertex_normals(registered)?.normals;
    let texture = |beta: &[f64]| model.evaluate_texture(beta).expect("beta length fixed by layout");
    let eval = |t: &TextureParams| shade(&normals, &texture(&t.beta), &t.phong);

    let mut best = TextureParams { beta: vec![0.0; model.tex_dims()], phong: config.initial.clone() };
    let mut best_res = s.residual(&eval(&best));
    let mut trace = vec![best_res];
    let mut trials = Vec::new();
    let mut lambda = config.damping;
    let mut growths = 0;
    let n_obs = 3 * s.observed.len();

    for it in 0..config.iterations {
        let layout = Layout::new(model.tex_dims(), config.fit_specular, &best.phong.l);
        let p0 = layout.pack(&best);
        let np = layout.len();
        // Per-vertex Jacobian by central differences.
        let h = 1e-6;
        let mut dv: Vec<Vec<Vec3>> = Vec::with_capacity(np);
        for j in 0..np {
            let mut hi = p0.clone();
            let mut lo = p0.clone();
            hi[j] += h;
            lo[j] -= h;
            let (ch, cl) = (eval(&layout.unpack(&hi, &best)), eval(&layout.unpack(&lo, &best)));
            dv.push(ch.iter().zip(&cl).map(|(a, b)| (a - b) / (2.0 * h)).collect());
        }
        let current = eval(&best);
        let mut jac = DMatrix::zeros(n_obs, np);
        let mut r = DVector::zeros(n_obs);
        for (q, ((v, b), o)) in s.vertices.iter().zip(&s.weights).zip(&s.observed).enumerate() {
            let pred = current[v[0]] * b[0] + current[v[1]] * b[1] + current[v[2]] * b[2];
            for c in 0..3 {
                r[3 * q + c] = o[c] - pred[c];
            }
            for (j, d) in dv.iter().enumerate() {
                let g = d[v[0]] * b[0] + d[v[1]] * b[1] + d[v[2]] * b[2];
                for c in 0..3 {
                    jac[(3 * q + c, j)] = g[c];
                }
            }
        }
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&r);
        if jtr.amax() < 1e-14 {
            break;
        }
        // Parameters the data does not constrain (e.g. the exponent while the
        // specular strength is zero) get a floor so the damped system stays
        // positive definite.
        let floor = 1e-9 * (0..np).map(|i| jtj[(i, i)]).fold(0.0, f64::max) + 1e-12;
        loop {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                growths += 1;
                if lambda > 1e12 {
                    return Err(Error::SingularSystem { iteration: it });
                }
                lambda *= 10.0;
                continue;
            };
            let negligible = step.norm() <= 1e-12 * (1.0 + p0.norm());
            let cand = layout.admissible(layout.unpack(&(&p0 + &step), &best));
            let res = s.residual(&eval(&cand));
            trials.push(res);
            if !res.is_finite() {
                return Err(Error::Diverged { trace: trials });
            }
            if res < best_res {
                best = cand;
                best_res = res;
                lambda = (lambda / 3.0).max(1e-12);
                growths = 0;
                break;
            }
            if negligible || res - best_res <= 1e-12 * best_res + 1e-20 {
                // No further progress possible at this precision.
                trace.push(best_res);
                debug!("texture fit converged after {it} iterations, residual {best_res:e}");
                return Ok(TextureFit { params: best, trace, residual: best_res });
            }
            growths += 1;
            if growths >= 5 && lambda > 1e8 {
                return Err(Error::Diverged { trace: trials });
            }
            lambda *= 10.0;
        }
        trace.push(best_res);
    }
    debug!("texture fit finished, residual {best_res:e}");
    Ok(TextureFit { params: best, trace, residual: best_res })
}

/// Per-vertex colors of `target` lit like the source: the given colors act
/// as the albedo, lighting and specular terms come from `tex`, normals and
/// reflections from the target shape.
pub fn adjust_shading(albedo: &[Vec3], source: &Mesh, target: &Mesh, tex: &TextureParams) -> Result<Vec<Vec3>> {
    if !source.same_topology(target) {
        return Err(Error::TopologyMismatch("source and target shapes differ".into()));
    }
    let n = compute_vertex_normals(target)?;
    phong_shade_with_normals(&n.normals, albedo, &tex.phong)
}

/// Inverse of the diffuse shading: `(C - spec) / (amb + dir <n, l>)` per
/// channel, an albedo estimate from shaded colors.
pub fn remove_shading(colors: &[Vec3], mesh: &Mesh, phong: &PhongParams) -> Result<Vec<Vec3>> {
    let n = compute_vertex_normals(mesh)?;
    if colors.len() != n.len() {
        return Err(Error::LengthMismatch { what: "colors", expected: n.len(), actual: colors.len() });
    }
    Ok(n.normals
        .iter()
        .zip(colors)
        .map(|(n, c)| {
            let nl = n.dot(&phong.l);
            let r = 2.0 * nl * n - phong.l;
            let spec = phong.dir * (phong.k_s * r.dot(&phong.ve).max(0.0).powf(phong.nu));
            let gain = phong.amb + phong.dir * nl.max(0.0);
            (c - spec).component_div(&gain.map(|g| g.max(1e-6))).map(|x| x.clamp(0.0, 1.0))
        })
        .collect())
}
