//! Pose and shape augmentation of single RGB-D samples.
//!
//! Pose: complete the background depth from sparse anchors, lift the image
//! to 3D, rotate and re-render, inpainting the self-occluded side with the
//! model texture. Shape: fuse donor regions into a new face, warp the
//! background anchors to its contour and re-shade.

mod rotate;
mod shape;
mod texture;

pub use rotate::{fill_holes, poisson_blend, pose_about_face, rotate_and_render, rotate_and_render_with, RotateConfig, RotatedView};
pub use shape::{fuse_target_shape, region_hop_distances, transform_shape, FuseParts, ShapeTransform};
pub use texture::{adjust_shading, fit_texture, remove_shading, texture_residual, TextureFit, TextureFitConfig, TextureParams};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::math::{Vec2, Vec3};
use crate::mesh::Mesh;
use crate::morphable::CameraPose;
use crate::multiview::{build_image_mesh, ImageMesh, VertexRegion};
use crate::raster::{rasterize, BACKGROUND};
use crate::registration::RgbdFrame;
use crate::sparse::{connected_components, NormalEquations};

/// Default smoothness weight of the depth completion.
pub const DEPTH_SMOOTH_WEIGHT: f64 = 1.0;

/// Sparse 2D anchors with optional observed depth.
///
/// `contour` flags the anchors that sit on the face outline; their order
/// among the flagged anchors is the order of the contour point lists passed
/// to [`warp_background_anchors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGraph {
    pub positions: Vec<Vec2>,
    /// Observed depth, `None` for hollow anchors.
    pub depth: Vec<Option<f64>>,
    pub contour: Vec<bool>,
    pub edges: Vec<(usize, usize)>,
}

impl AnchorGraph {
    pub fn new(positions: Vec<Vec2>, depth: Vec<Option<f64>>, contour: Vec<bool>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = positions.len();
        if depth.len() != n {
            return Err(Error::LengthMismatch { what: "anchor depths", expected: n, actual: depth.len() });
        }
        if contour.len() != n {
            return Err(Error::LengthMismatch { what: "anchor contour flags", expected: n, actual: contour.len() });
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
            return Err(Error::InvalidParameter(format!("bad anchor edge ({a}, {b})")));
        }
        Ok(AnchorGraph { positions, depth, contour, edges })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contour_positions(&self) -> Vec<Vec2> {
        self.positions.iter().zip(&self.contour).filter(|(_, &c)| c).map(|(p, _)| *p).collect()
    }

    fn require_connected(&self) -> Result<()> {
        match connected_components(self.len(), &self.edges) {
            1 => Ok(()),
            components => Err(Error::DisconnectedGraph { components }),
        }
    }
}

/// The background part of an image mesh as an anchor graph.
///
/// Anchors are the face boundary vertices (contour, depth from the face)
/// followed by the background vertices (depth read from the frame where
/// valid). Returns the graph and each anchor's image-mesh vertex index.
pub fn anchor_graph(image_mesh: &ImageMesh, frame: &RgbdFrame) -> Result<(AnchorGraph, Vec<usize>)> {
    let m = &image_mesh.mesh;
    let face = Mesh { vertices: m.vertices[..image_mesh.face_count].to_vec(), triangles: face_triangles(image_mesh), uv: None, colors: None };
    let mut ids = face.boundary_vertices();
    ids.extend((image_mesh.face_count..m.vertex_count()).filter(|&k| image_mesh.region[k] == VertexRegion::Background));
    let mut slot = vec![usize::MAX; m.vertex_count()];
    for (a, &k) in ids.iter().enumerate() {
        slot[k] = a;
    }
    let positions: Vec<Vec2> = ids.iter().map(|&k| m.vertices[k].xy()).collect();
    let depth = ids
        .iter()
        .map(|&k| {
            if k < image_mesh.face_count {
                return Some(m.vertices[k].z);
            }
            let p = m.vertices[k].xy();
            let (x, y) = ((p.x.floor() as i64).clamp(0, frame.width() as i64 - 1), (p.y.floor() as i64).clamp(0, frame.height() as i64 - 1));
            frame.valid.get(x as usize, y as usize).then(|| *frame.depth.get(x as usize, y as usize))
        })
        .collect();
    let contour = ids.iter().map(|&k| k < image_mesh.face_count).collect();
    let mut edges: Vec<(usize, usize)> = m
        .edges()
        .into_iter()
        .filter(|&(i, j)| slot[i] != usize::MAX && slot[j] != usize::MAX && !(i < image_mesh.face_count && j < image_mesh.face_count))
        .map(|(i, j)| (slot[i], slot[j]))
        .collect();
    // Consecutive boundary vertices stay linked through the face outline.
    edges.extend(face.boundary_edges().into_iter().map(|((i, j), _)| (slot[i], slot[j])));
    edges.sort_unstable();
    edges.dedup();
    Ok((AnchorGraph::new(positions, depth, contour, edges)?, ids))
}

fn face_triangles(image_mesh: &ImageMesh) -> Vec<[usize; 3]> {
    let nf = image_mesh.face_count;
    image_mesh.mesh.triangles.iter().filter(|t| t.iter().all(|&k| k < nf)).copied().collect()
}

/// Anchor depths minimizing `sum_valid (d_i - D_i)^2 + w sum_edges (d_i - d_j)^2`.
pub fn solve_anchor_depths(graph: &AnchorGraph, smooth_weight: f64) -> Result<Vec<f64>> {
    if !(smooth_weight > 0.0) {
        return Err(Error::InvalidParameter(format!("smoothness weight must be positive, got {smooth_weight}")));
    }
    graph.require_connected()?;
    if graph.depth.iter().all(Option::is_none) {
        return Err(Error::NoValidDepth);
    }
    let mut ne = NormalEquations::new(graph.len(), 1);
    for (i, d) in graph.depth.iter().enumerate() {
        if let Some(d) = d {
            ne.add_row(&[(i, 1.0)], &[*d], 1.0);
        }
    }
    for &(i, j) in &graph.edges {
        ne.add_difference(i, j, &[0.0], smooth_weight);
    }
    Ok(ne.solve()?.column(0).iter().copied().collect())
}

/// Anchor positions after pinning the contour anchors to `target_contour`
/// while preserving every edge's offset, in the least-squares sense.
pub fn warp_background_anchors(graph: &AnchorGraph, source_contour: &[Vec2], target_contour: &[Vec2]) -> Result<AnchorGraph> {
    let flagged: Vec<usize> = (0..graph.len()).filter(|&i| graph.contour[i]).collect();
    if source_contour.len() != flagged.len() || target_contour.len() != flagged.len() {
        return Err(Error::LengthMismatch { what: "contour points", expected: flagged.len(), actual: source_contour.len().min(target_contour.len()) });
    }
    if let Some(k) = (0..flagged.len()).find(|&k| (graph.positions[flagged[k]] - source_contour[k]).norm() > 1e-6) {
        return Err(Error::InvalidParameter(format!("source contour point {k} is not at its anchor")));
    }
    graph.require_connected()?;
    if flagged.is_empty() {
        return Err(Error::InvalidParameter("anchor graph has no contour anchors".into()));
    }
    let mut ne = NormalEquations::new(graph.len(), 2);
    for (k, &i) in flagged.iter().enumerate() {
        ne.add_row(&[(i, 1.0)], &[target_contour[k].x, target_contour[k].y], 1.0);
    }
    for &(i, j) in &graph.edges {
        let d = graph.positions[i] - graph.positions[j];
        ne.add_difference(i, j, &[d.x, d.y], 1.0);
    }
    let x = ne.solve()?;
    Ok(AnchorGraph { positions: (0..graph.len()).map(|i| Vec2::new(x[(i, 0)], x[(i, 1)])).collect(), ..graph.clone() })
}

/// Dense depth with its anchor graph and solved anchor depths.
#[derive(Debug, Clone)]
pub struct CompletedDepth {
    pub depth: GrayImage,
    pub graph: AnchorGraph,
    pub anchor_depth: Vec<f64>,
    /// Image-mesh vertex of each anchor.
    pub anchor_vertex: Vec<usize>,
    pub image_mesh: ImageMesh,
}

/// Fills the whole image with depth: the registered face's z-buffer on the
/// face, the triangulated anchor solution elsewhere.
pub fn complete_depth(frame: &RgbdFrame, registered: &Mesh, anchor_spacing: f64, smooth_weight: f64) -> Result<CompletedDepth> {
    let mut im = build_image_mesh(&frame.color, registered, anchor_spacing)?;
    let (graph, ids) = anchor_graph(&im, frame)?;
    let solved = solve_anchor_depths(&graph, smooth_weight)?;
    for (a, &k) in ids.iter().enumerate() {
        if k >= im.face_count {
            im.mesh.vertices[k].z = solved[a];
        }
    }
    let (w, h) = (frame.width(), frame.height());
    let zeros = vec![Vec3::zeros(); im.mesh.vertex_count()];
    let buf = rasterize(&im.mesh, &CameraPose::identity(), &zeros, w, h)?;
    let covered: Vec<bool> = buf.tri_index.iter().map(|&t| t != BACKGROUND).collect();
    let depth = fill_holes(&buf.depth, &covered, w, h).ok_or(Error::NoValidDepth)?;
    Ok(CompletedDepth {
        depth: GrayImage::from_vec(w, h, depth)?,
        graph,
        anchor_depth: solved,
        anchor_vertex: ids,
        image_mesh: im,
    })
}

#[cfg(test)]
mod tests;
