//! Rotate-and-render of a lifted RGB-D image with Poisson inpainting.

use serde::{Deserialize, Serialize};

use super::texture::TextureParams;
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Mask, RgbImage};
use crate::math::{view_rotation, Mat3, Vec3};
use crate::mesh::{compute_vertex_normals, Mesh};
use crate::morphable::{rigid_project, CameraPose, MorphableModel};
use crate::par::Exec;
use crate::raster::{rasterize_with, BACKGROUND};
use crate::registration::RgbdFrame;
use crate::sparse::NormalEquations;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotateConfig {
    /// Source-frame visibility (normal z) below which a face pixel counts
    /// as self-occluded; about cos 80 degrees.
    pub occlusion_threshold: f64,
    /// A face pixel belongs to the face layer if its depth is within this
    /// many millimetres of the front surface.
    pub depth_tolerance: f64,
}

impl Default for RotateConfig {
    fn default() -> Self {
        RotateConfig { occlusion_threshold: 0.17, depth_tolerance: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct RotatedView {
    pub color: RgbImage,
    /// Rendered depth, holes filled.
    pub depth: GrayImage,
    /// Pixels re-rendered from the model texture.
    pub occluded: Mask,
    /// The registered face moved by the target pose.
    pub registered: Mesh,
}

/// Pose turning the scene about the registered face's centroid.
pub fn pose_about_face(registered: &Mesh, pitch_deg: f64, yaw_deg: f64) -> CameraPose {
    CameraPose::about(&registered.centroid(), view_rotation(pitch_deg, yaw_deg))
}

/// Fills every uncovered cell from the nearest covered cell in its row,
/// then rows without any from the nearest filled cell in their column.
/// Ties go to the smaller index. `None` if nothing is covered.
pub fn fill_holes<T: Clone>(values: &[T], covered: &[bool], width: usize, height: usize) -> Option<Vec<T>> {
    let mut out: Vec<Option<T>> = values.iter().zip(covered).map(|(v, &c)| c.then(|| v.clone())).collect();
    let nearest = |line: &[Option<T>]| -> Vec<Option<T>> {
        let n = line.len();
        let mut left: Vec<Option<usize>> = vec![None; n];
        let mut right: Vec<Option<usize>> = vec![None; n];
        let mut last = None;
        for i in 0..n {
            if line[i].is_some() {
                last = Some(i);
            }
            left[i] = last;
        }
        last = None;
        for i in (0..n).rev() {
            if line[i].is_some() {
                last = Some(i);
            }
            right[i] = last;
        }
        (0..n)
            .map(|i| {
                let pick = match (left[i], right[i]) {
                    (Some(l), Some(r)) => Some(if i - l <= r - i { l } else { r }),
                    (l, r) => l.or(r),
                };
                pick.and_then(|k| line[k].clone())
            })
            .collect()
    };
    for y in 0..height {
        let row = nearest(&out[y * width..(y + 1) * width]);
        out[y * width..(y + 1) * width].clone_from_slice(&row);
    }
    for x in 0..width {
        let col: Vec<Option<T>> = (0..height).map(|y| out[y * width + x].clone()).collect();
        for (y, v) in nearest(&col).into_iter().enumerate() {
            out[y * width + x] = v;
        }
    }
    out.into_iter().collect()
}

/// Poisson image editing: inside `mask` the output keeps the gradients of
/// `source` and meets `target` on the mask boundary; outside it equals
/// `target`. Mask pixels on the image border are treated as boundary.
pub fn poisson_blend(target: &RgbImage, source: &RgbImage, mask: &Mask) -> Result<RgbImage> {
    if !target.same_size(source) || !target.same_size(mask) {
        return Err(Error::InvalidParameter("poisson_blend inputs differ in size".into()));
    }
    let (w, h) = (target.width(), target.height());
    let mut slot = vec![usize::MAX; w * h];
    let mut unknowns = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if *mask.get(x, y) {
                slot[y * w + x] = unknowns.len();
                unknowns.push((x, y));
            }
        }
    }
    if unknowns.is_empty() {
        return Ok(target.clone());
    }
    let (s, t) = (source.data(), target.data());
    let mut ne = NormalEquations::new(unknowns.len(), 3);
    for (k, &(x, y)) in unknowns.iter().enumerate() {
        let p = y * w + x;
        for q in [p - 1, p + 1, p - w, p + w] {
            let g = s[p] - s[q];
            match slot[q] {
                usize::MAX => {
                    let b = t[q] + g;
                    ne.add_row(&[(k, 1.0)], &[b.x, b.y, b.z], 1.0);
                }
                j if j > k => ne.add_difference(k, j, &[g.x, g.y, g.z], 1.0),
                _ => {}
            }
        }
    }
    let sol = ne.solve()?;
    let mut out = target.clone();
    for (k, &(x, y)) in unknowns.iter().enumerate() {
        out.set(x, y, Vec3::new(sol[(k, 0)], sol[(k, 1)], sol[(k, 2)]));
    }
    Ok(out)
}

/// Grid mesh over pixel centres plus a one-pixel replicated border, so a
/// render at the identity covers every pixel centre.
fn lift(frame: &RgbdFrame, depth: &GrayImage) -> Mesh {
    let (w, h) = (frame.width(), frame.height());
    let (gw, gh) = (w + 2, h + 2);
    let px = |i: usize, n: usize| i.saturating_sub(1).min(n - 1);
    let mut vertices = Vec::with_capacity(gw * gh);
    let mut colors = Vec::with_capacity(gw * gh);
    for j in 0..gh {
        for i in 0..gw {
            let (x, y) = (px(i, w), px(j, h));
            vertices.push(Vec3::new(i as f64 - 0.5, j as f64 - 0.5, *depth.get(x, y)));
            colors.push(*frame.color.get(x, y));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (gw - 1) * (gh - 1));
    for j in 0..gh - 1 {
        for i in 0..gw - 1 {
            let a = j * gw + i;
            triangles.push([a, a + 1, a + gw]);
            triangles.push([a + 1, a + gw + 1, a + gw]);
        }
    }
    Mesh { vertices, triangles, uv: None, colors: Some(colors) }
}

/// Visibility (normal z) of a lifted triangle before and after rotation `r`.
fn lifted_visibility(lifted: &Mesh, t: usize, r: &Mat3) -> (f64, f64) {
    let [a, b, c] = lifted.triangles[t].map(|k| lifted.vertices[k]);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len == 0.0 {
        return (1.0, 1.0);
    }
    // Lifted triangles face the source viewer.
    let n = n * (n.z.signum() / len);
    (n.z, (r * n).z)
}

/// Re-renders the frame from `target_pose` (applied to image-space points).
///
/// Every pixel is lifted with `dense_depth` and rendered with its own
/// color. Face pixels that were nearly edge-on in the source (visibility
/// below the threshold, either of the face surface turning toward the
/// viewer or of the lifted surface shown there) are replaced by the shaded model texture, Poisson-blended into the
/// surrounding render. Remaining holes take the nearest rendered pixel.
pub fn rotate_and_render(
    frame: &RgbdFrame,
    registered: &Mesh,
    dense_depth: &GrayImage,
    target_pose: &CameraPose,
    model: &MorphableModel,
    tex: &TextureParams,
    config: &RotateConfig,
) -> Result<RotatedView> {
    rotate_and_render_with(frame, registered, dense_depth, target_pose, model, tex, config, Exec::default())
}

#[allow(clippy::too_many_arguments)]
pub fn rotate_and_render_with(
    frame: &RgbdFrame,
    registered: &Mesh,
    dense_depth: &GrayImage,
    target_pose: &CameraPose,
    model: &MorphableModel,
    tex: &TextureParams,
    config: &RotateConfig,
    exec: Exec,
) -> Result<RotatedView> {
    let (w, h) = (frame.width(), frame.height());
    if !frame.color.same_size(dense_depth) {
        return Err(Error::InvalidParameter("dense depth does not match the frame".into()));
    }
    if dense_depth.data().iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter("dense depth has non-finite values".into()));
    }
    target_pose.validate()?;
    let lifted = lift(frame, dense_depth);
    let lifted_colors = lifted.colors.clone().expect("lift sets colors");
    let scene = rasterize_with(&lifted, target_pose, &lifted_colors, w, h, exec)?;
    let covered: Vec<bool> = scene.tri_index.iter().map(|&t| t != BACKGROUND).collect();
    let color = fill_holes(&scene.color, &covered, w, h).ok_or(Error::NoValidDepth)?;
    let depth = fill_holes(&scene.depth, &covered, w, h).ok_or(Error::NoValidDepth)?;

    // Face layer: visibility before and after the rotation, and the model texture.
    let normals = compute_vertex_normals(registered)?.normals;
    let r = target_pose.r;
    let vis_src: Vec<f64> = normals.iter().map(|n| n.z).collect();
    let vis_tgt: Vec<f64> = normals.iter().map(|n| (r * n).z).collect();
    let posed = rigid_project(registered, target_pose);
    let shaded = tex.shade(model, &posed)?;
    let face = rasterize_with(&posed, &CameraPose::identity(), &shaded, w, h, exec)?;
    let mut occluded = vec![false; w * h];
    let mut model_image = color.clone();
    for i in 0..w * h {
        let t = face.tri_index[i];
        if t == BACKGROUND || face.depth[i] < depth[i] - config.depth_tolerance {
            continue;
        }
        let tri = face.triangles[t as usize];
        let b = face.bary[i];
        let lerp = |v: &[f64]| b[0] * v[tri[0]] + b[1] * v[tri[1]] + b[2] * v[tri[2]];
        let (src, tgt) = (lerp(&vis_src), lerp(&vis_tgt));
        model_image[i] = face.color[i];
        // The lifted pixel shown here may itself have been seen edge-on, e.g.
        // the sheet stretched across the face outline.
        let grazing = covered[i] && {
            let (ls, lt) = lifted_visibility(&lifted, scene.tri_index[i] as usize, &r);
            ls < config.occlusion_threshold && lt > ls + 1e-9
        };
        occluded[i] = grazing || (src < config.occlusion_threshold && tgt > src + 1e-9);
    }
    let occluded = Mask::from_vec(w, h, occluded)?;
    let base = RgbImage::from_vec(w, h, color)?;
    let color = poisson_blend(&base, &RgbImage::from_vec(w, h, model_image)?, &occluded)?;
    Ok(RotatedView {
        color: color.map(|c| c.map(|x| x.clamp(0.0, 1.0))),
        depth: GrayImage::from_vec(w, h, depth)?,
        occluded,
        registered: posed,
    })
}
