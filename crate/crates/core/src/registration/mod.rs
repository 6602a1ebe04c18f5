//! Landmark- and contour-constrained non-rigid registration of the template
//! to RGB-D frames.

mod nicp;

use std::path::Path;

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

pub use nicp::{
    contour_energy, edge_energy, nonrigid_icp, nonrigid_icp_with, IterationRecord, NicpConfig, Registration, RegistrationReport,
};

use crate::error::{Error, Result};
use crate::imaging::{load_gray16_png, load_rgb_png, save_gray16_png, save_rgb_png, GrayImage, Mask, RgbImage};
use crate::math::{closest_point_on_segment, Vec2, Vec3};
use crate::mesh::Mesh;
use crate::morphable::CameraPose;
use crate::raster::{RenderBuffer, BACKGROUND};

/// Depth stored at invalid pixels.
pub const DEPTH_SENTINEL: f64 = 0.0;
/// Valid depths lie strictly inside `(0, MAX_DEPTH)` millimetres.
pub const MAX_DEPTH: f64 = 1e4;
/// Depth PNGs store tenths of a millimetre; 0 marks invalid pixels.
pub const DEPTH_PNG_SCALE: f64 = 10.0;

/// Color plus pixel-aligned orthographic depth (z toward the viewer).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub color: RgbImage,
    pub depth: GrayImage,
    pub valid: Mask,
}

impl RgbdFrame {
    /// Builds a frame; pixels outside the mask get the sentinel depth.
    pub fn new(color: RgbImage, mut depth: GrayImage, valid: Mask) -> Result<Self> {
        if !color.same_size(&depth) || !color.same_size(&valid) {
            return Err(Error::InvalidParameter("color, depth and mask sizes differ".into()));
        }
        for (d, &ok) in depth.data_mut().iter_mut().zip(valid.data()) {
            if !ok {
                *d = DEPTH_SENTINEL;
            } else if !(*d > 0.0 && *d < MAX_DEPTH) {
                return Err(Error::InvalidParameter(format!("valid depth {d} outside (0, {MAX_DEPTH})")));
            }
        }
        Ok(RgbdFrame { color, depth, valid })
    }

    /// Frame from a render: z-buffer depth on foreground pixels.
    pub fn from_render(buf: &RenderBuffer, color: RgbImage) -> Result<Self> {
        let valid = Mask::from_vec(buf.width, buf.height, buf.tri_index.iter().map(|&t| t != BACKGROUND).collect())?;
        let depth = GrayImage::from_vec(buf.width, buf.height, buf.depth.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect())?;
        RgbdFrame::new(color, depth, valid)
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn write(&self, color_path: &Path, depth_path: &Path) -> Result<()> {
        save_rgb_png(&self.color, color_path)?;
        let hi = 65535.0 / DEPTH_PNG_SCALE;
        save_gray16_png(&self.depth, 0.0, hi, depth_path)
    }

    pub fn read(color_path: &Path, depth_path: &Path) -> Result<Self> {
        let color = load_rgb_png(color_path)?;
        let depth = load_gray16_png(depth_path, 0.0, 65535.0 / DEPTH_PNG_SCALE)?;
        let valid = depth.map(|&d| d > 0.0);
        RgbdFrame::new(color, depth, valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLandmark {
    pub xy: [f64; 2],
    pub vid: usize,
}

/// 2D landmarks: edge points tied to template vertices, and an ordered
/// face-contour polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub edge: Vec<EdgeLandmark>,
    pub contour: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if self.contour.len() < 2 {
            return Err(Error::InvalidParameter(format!("contour needs at least 2 points, got {}", self.contour.len())));
        }
        if let Some(l) = self.edge.iter().find(|l| l.vid >= vertex_count) {
            return Err(Error::InvalidParameter(format!("landmark vertex {} out of range", l.vid)));
        }
        Ok(())
    }

    pub fn contour_points(&self) -> Vec<Vec2> {
        self.contour.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One 3x4 affine `[L | t]` per template vertex: `v' = L v + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerVertexAffine {
    pub transforms: Vec<Matrix3x4<f64>>,
}

impl PerVertexAffine {
    pub fn identity(n: usize) -> Self {
        PerVertexAffine { transforms: vec![Matrix3x4::identity(); n] }
    }

    pub fn apply_to(&self, v: &Vec3, k: usize) -> Vec3 {
        self.transforms[k] * v.push(1.0)
    }

    pub fn apply(&self, mesh: &Mesh) -> Result<Mesh> {
        if mesh.vertex_count() != self.transforms.len() {
            return Err(Error::LengthMismatch { what: "affines", expected: mesh.vertex_count(), actual: self.transforms.len() });
        }
        mesh.with_positions(mesh.vertices.iter().enumerate().map(|(k, v)| self.apply_to(v, k)).collect())
    }

    /// Largest Frobenius distance between any two transforms.
    pub fn max_pairwise_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.transforms.iter().enumerate() {
            for b in &self.transforms[i + 1..] {
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }
}

/// Backprojected depth samples. Normals exist only where all four
/// neighbours are valid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Option<Vec3>>,
    pub pixels: Vec<(usize, usize)>,
}

/// Lifts every valid pixel to `(x + 0.5, y + 0.5, depth)`.
///
/// Normals are the normalized cross product of the central-difference
/// tangents, oriented toward the viewer.
pub fn backproject_depth(frame: &RgbdFrame) -> Result<PointCloud> {
    let (w, h) = (frame.width(), frame.height());
    let valid = |x: i64, y: i64| frame.valid.contains(x, y) && *frame.valid.get(x as usize, y as usize);
    let mut cloud = PointCloud { points: Vec::new(), normals: Vec::new(), pixels: Vec::new() };
    for y in 0..h {
        for x in 0..w {
            if !frame.valid.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            let d = |x: usize, y: usize| *frame.depth.get(x, y);
            let normal = (valid(xi - 1, yi) && valid(xi + 1, yi) && valid(xi, yi - 1) && valid(xi, yi + 1)).then(|| {
                let tx = Vec3::new(2.0, 0.0, d(x + 1, y) - d(x - 1, y));
                let ty = Vec3::new(0.0, 2.0, d(x, y + 1) - d(x, y - 1));
                tx.cross(&ty).normalize()
            });
            cloud.points.push(Vec3::new(x as f64 + 0.5, y as f64 + 0.5, d(x, y)));
            cloud.normals.push(normal);
            cloud.pixels.push((x, y));
        }
    }
    if cloud.points.is_empty() {
        return Err(Error::NoValidDepth);
    }
    Ok(cloud)
}

/// Closest point of the polyline to each query point (segment projection).
pub fn contour_correspondence(points: &[Vec2], curve: &[Vec2]) -> Vec<Vec2> {
    points.iter().map(|&p| closest_on_polyline(p, curve)).collect()
}

pub(crate) fn closest_on_polyline(p: Vec2, curve: &[Vec2]) -> Vec2 {
    if curve.len() == 1 {
        return curve[0];
    }
    let mut best = curve[0];
    let mut best_d = f64::INFINITY;
    for seg in curve.windows(2) {
        let q = closest_point_on_segment(p, seg[0], seg[1]);
        let d = (q - p).norm_squared();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Occluding-contour vertices: endpoints of interior edges whose two
/// triangles face opposite ways after projection. Restricted to `band`
/// when given; returned sorted.
pub fn select_contour_vertices(mesh: &Mesh, pose: &CameraPose, band: Option<&[usize]>) -> Vec<usize> {
    let posed: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
    let facing: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| (posed[b] - posed[a]).xy().perp(&(posed[c] - posed[a]).xy()) > 0.0)
        .collect();
    let mut owners: Vec<((usize, usize), usize)> = mesh
        .triangles
        .iter()
        .enumerate()
        .flat_map(|(t, &[a, b, c])| [((a, b), t), ((b, c), t), ((c, a), t)])
        .map(|((i, j), t)| (if i < j { (i, j) } else { (j, i) }, t))
        .collect();
    owners.sort_unstable();
    let mut hit = vec![false; mesh.vertex_count()];
    for pair in owners.windows(2) {
        if pair[0].0 == pair[1].0 && facing[pair[0].1] != facing[pair[1].1] {
            hit[pair[0].0 .0] = true;
            hit[pair[0].0 .1] = true;
        }
    }
    let allowed = band.map(|b| {
        let mut m = vec![false; mesh.vertex_count()];
        b.iter().for_each(|&i| m[i] = true);
        m
    });
    (0..mesh.vertex_count()).filter(|&i| hit[i] && allowed.as_ref().is_none_or(|m| m[i])).collect()
}

/// Landmarks read off a mesh already in image coordinates: the given edge
/// vertices at their projections, and the contour as the silhouette and
/// border vertices of `band` ordered clockwise from the top of the face.
pub fn synthetic_landmarks(mesh: &Mesh, edge_vertices: &[usize], band: &[usize]) -> LandmarkSet {
    let edge = edge_vertices.iter().map(|&vid| EdgeLandmark { xy: [mesh.vertices[vid].x, mesh.vertices[vid].y], vid }).collect();
    let mut ids = select_contour_vertices(mesh, &CameraPose::identity(), Some(band));
    let border = mesh.boundary_vertices();
    ids.extend(band.iter().filter(|i| border.contains(i)));
    ids.sort_unstable();
    ids.dedup();
    let c = mesh.centroid().xy();
    let mut pts: Vec<(f64, Vec2)> = ids
        .iter()
        .map(|&i| {
            let p = mesh.vertices[i].xy();
            (((p - c).y.atan2((p - c).x) + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::TAU), p)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    LandmarkSet { edge, contour: pts.iter().map(|(_, p)| [p.x, p.y]).collect() }
}
