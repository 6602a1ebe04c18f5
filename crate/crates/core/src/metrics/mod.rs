//! Shape losses (MSE, plaster-shading distance, vertex gradient weights)
//! and the evaluation metrics NME and DACE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::math::{view_rotation, Mat3, Vec3};
use crate::mesh::{vertex_normals_or, Mesh};
use crate::morphable::{fit_rigid, CameraPose};
use crate::par::{self, Exec};
use crate::raster::{inverse_render, render_plaster_with, RenderBuffer};
use crate::spatial::PointIndex;
use crate::template::FaceTemplate;
use crate::weights::VertexWeightMap;

/// The five plaster views as (pitch, yaw) in degrees.
pub const PSD_VIEWS: [(f64, f64); 5] = [(0.0, 0.0), (0.0, 90.0), (0.0, -90.0), (30.0, 0.0), (-30.0, 0.0)];

pub const PSD_SIZE: usize = 256;

pub fn psd_views() -> Vec<Mat3> {
    PSD_VIEWS.iter().map(|&(p, y)| view_rotation(p, y)).collect()
}

/// `sum_k w_k |gt_k - coarse_k - delta_k|^2`, unit weights when absent.
pub fn loss_mse(gt: &Mesh, coarse: &Mesh, delta: &[Vec3], weights: Option<&VertexWeightMap>) -> Result<f64> {
    gt.check_same_topology(coarse, "loss_mse")?;
    let n = gt.vertex_count();
    if delta.len() != n {
        return Err(Error::LengthMismatch { what: "displacements", expected: n, actual: delta.len() });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::LengthMismatch { what: "vertex weights", expected: n, actual: w.len() });
        }
    }
    let w = |k: usize| weights.map_or(1.0, |w| w.as_slice()[k]);
    Ok((0..n).map(|k| w(k) * (gt.vertices[k] - coarse.vertices[k] - delta[k]).norm_squared()).sum())
}

/// Plaster-shading distance with its per-view parts.
#[derive(Debug, Clone)]
pub struct PsdResult {
    /// Sum over views of the L2 distance between the two renders.
    pub distance: f64,
    pub per_view: Vec<f64>,
    /// Per-pixel absolute shading difference for each view.
    pub errors: Vec<GrayImage>,
}

struct ViewPair {
    output: RenderBuffer,
    gt: RenderBuffer,
    error: GrayImage,
}

fn render_pairs(output: &Mesh, gt: &Mesh, views: &[Mat3], width: usize, height: usize, exec: Exec) -> Vec<ViewPair> {
    // Views fan out; each render then runs sequentially.
    let inner = if views.len() > 1 { Exec::Sequential } else { exec };
    par::map_slice(exec, views, |r| {
        let a = render_plaster_with(output, r, width, height, inner);
        let b = render_plaster_with(gt, r, width, height, inner);
        let diff = a.color.iter().zip(&b.color).map(|(p, q)| (p.x - q.x).abs()).collect();
        let error = GrayImage::from_vec(a.width, a.height, diff).expect("render size");
        ViewPair { output: a, gt: b, error }
    })
}

/// Sum over views of `|render(R_v output) - render(R_v gt)|_2` on plaster
/// renders.
pub fn psd_distance(output: &Mesh, gt: &Mesh, views: &[Mat3], width: usize, height: usize) -> PsdResult {
    psd_distance_with(output, gt, views, width, height, Exec::default())
}

pub fn psd_distance_with(output: &Mesh, gt: &Mesh, views: &[Mat3], width: usize, height: usize, exec: Exec) -> PsdResult {
    let pairs = render_pairs(output, gt, views, width, height, exec);
    let per_view: Vec<f64> = pairs.iter().map(|p| p.error.data().iter().map(|e| e * e).sum::<f64>().sqrt()).collect();
    PsdResult { distance: per_view.iter().sum(), per_view, errors: pairs.into_iter().map(|p| p.error).collect() }
}

/// Raw vertex gradient weights: each view's shading error map inverse
/// rendered through both the output's and the ground truth's pixel-vertex
/// traces, summed over views.
pub fn vgd_weights(output: &Mesh, gt: &Mesh, views: &[Mat3], width: usize, height: usize) -> Result<VertexWeightMap> {
    vgd_weights_with(output, gt, views, width, height, Exec::default())
}

pub fn vgd_weights_with(output: &Mesh, gt: &Mesh, views: &[Mat3], width: usize, height: usize, exec: Exec) -> Result<VertexWeightMap> {
    output.check_same_topology(gt, "vgd_weights")?;
    let n = output.vertex_count();
    let mut total = VertexWeightMap::zeros(n);
    for pair in render_pairs(output, gt, views, width, height, exec) {
        total.accumulate(&inverse_render(&pair.output, &pair.error, n)?);
        total.accumulate(&inverse_render(&pair.gt, &pair.error, n)?);
    }
    Ok(total)
}

/// Scales raw weights to mean 1 over `region` (all vertices when `None`).
/// All-zero weights over the region become uniform.
pub fn normalize_weights(raw: &VertexWeightMap, region: Option<&[bool]>) -> Result<VertexWeightMap> {
    let w = raw.as_slice();
    if let Some(r) = region {
        if r.len() != w.len() {
            return Err(Error::LengthMismatch { what: "region mask", expected: w.len(), actual: r.len() });
        }
    }
    let inside = |k: usize| region.is_none_or(|r| r[k]);
    let count = (0..w.len()).filter(|&k| inside(k)).count();
    let sum: f64 = (0..w.len()).filter(|&k| inside(k)).map(|k| w[k]).sum();
    if count == 0 || sum <= 0.0 {
        return Ok(VertexWeightMap::uniform(w.len()));
    }
    let s = count as f64 / sum;
    VertexWeightMap::new(w.iter().map(|x| x * s).collect())
}

/// Template-to-scan vertex pairs `(k, k_t)` with a reliability flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(usize, usize)>,
    pub reliable: Vec<bool>,
    /// Distance of each pair before any alignment.
    pub distances: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn reliable_count(&self) -> usize {
        self.reliable.iter().filter(|&&r| r).count()
    }

    fn check(&self, recon: &Mesh, scan: &Mesh) -> Result<()> {
        if self.reliable.len() != self.pairs.len() {
            return Err(Error::LengthMismatch { what: "reliability flags", expected: self.pairs.len(), actual: self.reliable.len() });
        }
        if let Some(&(k, kt)) = self.pairs.iter().find(|&&(k, kt)| k >= recon.vertex_count() || kt >= scan.vertex_count()) {
            return Err(Error::InvalidParameter(format!("correspondence ({k}, {kt}) out of range")));
        }
        Ok(())
    }
}

/// Pairs every registered vertex with its nearest scan vertex. A pair is
/// reliable when its distance is below `spatial_tol`, the angle between the
/// two vertex normals is below `normal_tol_deg`, and the vertex lies in the
/// template's face region.
pub fn build_correspondence(template: &FaceTemplate, gt_scan: &Mesh, registered: &Mesh, spatial_tol: f64, normal_tol_deg: f64) -> Result<CorrespondenceSet> {
    template.mesh.check_same_topology(registered, "build_correspondence")?;
    if gt_scan.vertices.is_empty() {
        return Err(Error::InvalidParameter("scan has no vertices".into()));
    }
    let index = PointIndex::new(&gt_scan.vertices);
    let scan_normals = vertex_normals_or(gt_scan, Vec3::zeros());
    let reg_normals = vertex_normals_or(registered, Vec3::zeros());
    let cos_tol = normal_tol_deg.to_radians().cos();
    let mut out = CorrespondenceSet { pairs: Vec::new(), reliable: Vec::new(), distances: Vec::new() };
    for (k, hit) in index.nearest_all(&registered.vertices, Exec::default()).into_iter().enumerate() {
        let (kt, d) = hit.expect("scan is not empty");
        let (a, b) = (reg_normals[k], scan_normals[kt]);
        let aligned = a.norm() > 0.0 && b.norm() > 0.0 && a.dot(&b) > cos_tol;
        out.pairs.push((k, kt));
        out.distances.push(d);
        out.reliable.push(d < spatial_tol && aligned && template.annotations.face_mask[k]);
    }
    Ok(out)
}

/// Similarity transform taking `recon` onto `scan` over the reliable pairs.
pub fn align_reliable(recon: &Mesh, scan: &Mesh, corr: &CorrespondenceSet) -> Result<CameraPose> {
    corr.check(recon, scan)?;
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) = corr
        .pairs
        .iter()
        .zip(&corr.reliable)
        .filter(|(_, &r)| r)
        .map(|(&(k, kt), _)| (recon.vertices[k], scan.vertices[kt]))
        .unzip();
    if src.len() < 3 {
        return Err(Error::TooFewCorrespondences { needed: 3, have: src.len() });
    }
    fit_rigid(&src, &dst, None)
}

fn check_normalizer(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("normalizing distance must be positive, got {d}")))
    }
}

/// Normalized mean error over all correspondence pairs after aligning
/// `recon` to `gt` on the reliable ones.
pub fn metric_nme(recon: &Mesh, gt: &Mesh, corr: &CorrespondenceSet, d: f64) -> Result<f64> {
    check_normalizer(d)?;
    let pose = align_reliable(recon, gt, corr)?;
    let sum: f64 = corr.pairs.iter().map(|&(k, kt)| (pose.apply(&recon.vertices[k]) - gt.vertices[kt]).norm()).sum();
    Ok(sum / corr.len() as f64 / d)
}

/// Densely aligned chamfer error: mean normalized distance from each aligned
/// reliable vertex to its nearest scan vertex.
pub fn metric_dace(recon: &Mesh, gt_scan: &Mesh, corr: &CorrespondenceSet, d: f64) -> Result<f64> {
    check_normalizer(d)?;
    let pose = align_reliable(recon, gt_scan, corr)?;
    let index = PointIndex::new(&gt_scan.vertices);
    let aligned: Vec<Vec3> = corr.pairs.iter().zip(&corr.reliable).filter(|(_, &r)| r).map(|(&(k, _), _)| pose.apply(&recon.vertices[k])).collect();
    let sum: f64 = index.nearest_all(&aligned, Exec::default()).into_iter().map(|h| h.expect("scan is not empty").1).sum();
    Ok(sum / aligned.len() as f64 / d)
}
