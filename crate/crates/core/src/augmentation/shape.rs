//! Target-shape fusion and shape-transformed re-rendering.

use std::collections::VecDeque;

use super::texture::{adjust_shading, remove_shading, TextureParams};
use super::{anchor_graph, warp_background_anchors, AnchorGraph};
use crate::error::{Error, Result};
use crate::imaging::{sample_bilinear, GrayImage, RgbImage};
use crate::math::Vec3;
use crate::mesh::Mesh;
use crate::morphable::{fit_rigid, rigid_project};
use crate::multiview::{build_image_mesh, render_image_mesh};
use crate::par::Exec;
use crate::raster::BACKGROUND;
use crate::registration::RgbdFrame;
use crate::template::Region;

use super::rotate::fill_holes;

/// Donor meshes for each facial region, all in template topology and a
/// common frame.
#[derive(Debug, Clone)]
pub struct FuseParts {
    pub eyes: Mesh,
    pub nose: Mesh,
    pub mouth: Mesh,
    pub cheek: Mesh,
}

const REGIONS: [Region; 4] = [Region::Eyes, Region::Nose, Region::Mouth, Region::Cheek];

impl FuseParts {
    fn part(&self, r: Region) -> &Mesh {
        match r {
            Region::Eyes => &self.eyes,
            Region::Nose => &self.nose,
            Region::Mouth => &self.mouth,
            Region::Cheek => &self.cheek,
        }
    }
}

/// Edge-hop distance from every vertex to each region (order eyes, nose,
/// mouth, cheek); `usize::MAX` if unreachable.
pub fn region_hop_distances(mesh: &Mesh, regions: &[Region]) -> Vec<[usize; 4]> {
    let nbrs = mesh.vertex_neighbors();
    let mut out = vec![[usize::MAX; 4]; mesh.vertex_count()];
    for (slot, &region) in REGIONS.iter().enumerate() {
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (i, &r) in regions.iter().enumerate() {
            if r == region {
                out[i][slot] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let d = out[i][slot] + 1;
            for &j in &nbrs[i] {
                if out[j][slot] == usize::MAX {
                    out[j][slot] = d;
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

fn mean_edge_length(mesh: &Mesh) -> f64 {
    let edges = mesh.edges();
    edges.iter().map(|&(i, j)| (mesh.vertices[i] - mesh.vertices[j]).norm()).sum::<f64>() / edges.len().max(1) as f64
}

/// Per-vertex region selection with a linear cross-fade of width
/// `blend_band` millimetres (converted to edge hops with the mean edge
/// length of the cheek donor).
///
/// Each region's weight at a vertex is `max(0, 1 - hops / (band + 1))`,
/// where hops is the distance to that region; the output is the normalized
/// weighted mean of the donors, so a vertex farther than the band from any
/// other region takes its own donor's position exactly.
pub fn fuse_target_shape(parts: &FuseParts, regions: &[Region], blend_band: f64) -> Result<Mesh> {
    let base = &parts.cheek;
    for r in REGIONS {
        if !parts.part(r).same_topology(base) {
            return Err(Error::TopologyMismatch(format!("{r:?} donor does not share the template topology")));
        }
    }
    if regions.len() != base.vertex_count() {
        return Err(Error::LengthMismatch { what: "region labels", expected: base.vertex_count(), actual: regions.len() });
    }
    if !(blend_band >= 0.0) {
        return Err(Error::InvalidParameter(format!("blend band must be >= 0, got {blend_band}")));
    }
    let hops = (blend_band / mean_edge_length(base)).ceil();
    let dist = region_hop_distances(base, regions);
    let vertices = (0..base.vertex_count())
        .map(|i| {
            let mut sum = Vec3::zeros();
            let mut total = 0.0;
            for (slot, &r) in REGIONS.iter().enumerate() {
                let d = dist[i][slot];
                if d == usize::MAX {
                    continue;
                }
                let a = (1.0 - d as f64 / (hops + 1.0)).max(0.0);
                if a > 0.0 {
                    sum += parts.part(r).vertices[i] * a;
                    total += a;
                }
            }
            sum / total
        })
        .collect();
    base.with_positions(vertices)
}

/// A shape-transformed sample.
#[derive(Debug, Clone)]
pub struct ShapeTransform {
    pub color: RgbImage,
    pub depth: GrayImage,
    /// The target face rigidly aligned to the source face.
    pub target: Mesh,
    pub anchors: AnchorGraph,
}

/// Re-renders the frame with the face replaced by `target`.
///
/// `target` is first aligned to `source` (the registered face in image
/// coordinates) with a similarity transform. Background anchors follow the
/// new face contour, the face keeps the source pixels it covered, and its
/// shading is recomputed for the new normals.
pub fn transform_shape(frame: &RgbdFrame, source: &Mesh, target: &Mesh, tex: &TextureParams, anchor_spacing: f64) -> Result<ShapeTransform> {
    if !source.same_topology(target) {
        return Err(Error::TopologyMismatch("target shape does not share the source topology".into()));
    }
    let aligned = rigid_project(target, &fit_rigid(&target.vertices, &source.vertices, None)?);
    let mut im = build_image_mesh(&frame.color, source, anchor_spacing)?;
    let (graph, ids) = anchor_graph(&im, frame)?;
    let flagged: Vec<usize> = ids.iter().zip(&graph.contour).filter(|(_, &c)| c).map(|(&k, _)| k).collect();
    let src_contour = graph.contour_positions();
    let tgt_contour: Vec<_> = flagged.iter().map(|&k| aligned.vertices[k].xy()).collect();
    let warped = warp_background_anchors(&graph, &src_contour, &tgt_contour)?;

    let nf = im.face_count;
    im.mesh.vertices[..nf].copy_from_slice(&aligned.vertices);
    for (a, &k) in ids.iter().enumerate() {
        if k >= nf {
            let p = warped.positions[a];
            im.mesh.vertices[k].x = p.x;
            im.mesh.vertices[k].y = p.y;
        }
    }

    // Shading ratio per face vertex: new shading over the source shading.
    let sampled: Vec<Vec3> = source.vertices.iter().map(|v| sample_bilinear(&frame.color, v.x, v.y)).collect();
    let albedo = remove_shading(&sampled, source, &tex.phong)?;
    let before = adjust_shading(&albedo, source, source, tex)?;
    let after = adjust_shading(&albedo, source, &aligned, tex)?;
    let mut gain = vec![Vec3::repeat(1.0); im.mesh.vertex_count()];
    for k in 0..nf {
        gain[k] = after[k].zip_map(&before[k], |a, b| if b > 1e-6 { a / b } else { 1.0 });
    }

    let (w, h) = (frame.width(), frame.height());
    let r = render_image_mesh(&im, &crate::morphable::CameraPose::identity(), w, h, Exec::default())?;
    let mut color = r.color.data().to_vec();
    for (i, c) in color.iter_mut().enumerate() {
        let t = r.buffer.tri_index[i];
        if t == BACKGROUND {
            continue;
        }
        let tri = r.buffer.triangles[t as usize];
        let b = r.buffer.bary[i];
        let g = gain[tri[0]] * b[0] + gain[tri[1]] * b[1] + gain[tri[2]] * b[2];
        *c = c.component_mul(&g).map(|x| x.clamp(0.0, 1.0));
    }
    let covered = r.covered.data().to_vec();
    let color = fill_holes(&color, &covered, w, h).ok_or(Error::NoValidDepth)?;
    let depth = fill_holes(&r.buffer.depth, &covered, w, h).ok_or(Error::NoValidDepth)?;
    Ok(ShapeTransform {
        color: RgbImage::from_vec(w, h, color)?,
        depth: GrayImage::from_vec(w, h, depth)?,
        target: aligned,
        anchors: warped,
    })
}
