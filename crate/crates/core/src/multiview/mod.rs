//! Virtual multiview synthesis from a single image.
//!
//! An image plus a fitted face mesh becomes an [`ImageMesh`]: the face keeps
//! its fitted 3D shape, the background is a sheet of anchors at the mean face
//! depth, and every vertex remembers where in the source image its texture
//! comes from. Its mirror image fills self-occlusions when rendering new views.

mod uv_warp;

use std::collections::HashMap;

use delaunator::{triangulate, Point};

pub use uv_warp::{warp_image_to_uv, warp_uv_to_image, UvChart};

use crate::error::{Error, Result};
use crate::imaging::{sample_bilinear, GrayImage, Mask, RgbImage};
use crate::math::{barycentric, convex_hull, distance_to_polygon, point_in_polygon, view_rotation, Vec2, Vec3};
use crate::mesh::{vertex_normals_or, Mesh};
use crate::morphable::{fit_rigid, CameraPose};
use crate::par::{self, Exec};
use crate::raster::{rasterize_with, RenderBuffer, BACKGROUND};

/// The five (pitch, yaw) views, in degrees, rendered for every sample.
pub const STANDARD_VIEWS: [(f64, f64); 5] = [(0.0, 0.0), (0.0, 25.0), (0.0, 50.0), (15.0, 0.0), (-25.0, 0.0)];

/// Alpha given to pixels filled from the mirrored mesh.
pub const FLIP_ALPHA: f64 = 0.5;

/// Visibility differences below this count as ties, which the original wins.
/// Absorbs the rounding left by the mirror alignment on symmetric inputs.
pub const VIS_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRegion {
    Face,
    Background,
}

/// An image lifted to a textured 3D mesh.
///
/// Vertices `0..face_count` are the fitted face in its own order; anchors
/// follow. `source_xy[k]` is the texture coordinate of vertex `k` in
/// `texture` (continuous pixel units).
#[derive(Debug, Clone)]
pub struct ImageMesh {
    pub mesh: Mesh,
    pub region: Vec<VertexRegion>,
    pub source_xy: Vec<Vec2>,
    pub texture: RgbImage,
    pub face_count: usize,
    /// Left-right partner of every vertex, when the face UV layout is symmetric.
    pub mirror: Option<Vec<usize>>,
}

impl ImageMesh {
    pub fn face_vertices(&self) -> &[Vec3] {
        &self.mesh.vertices[..self.face_count]
    }

    pub fn face_centroid(&self) -> Vec3 {
        self.face_vertices().iter().sum::<Vec3>() / self.face_count.max(1) as f64
    }

    /// Pose rotating the mesh about its face centroid.
    pub fn view_pose(&self, pitch_deg: f64, yaw_deg: f64) -> CameraPose {
        CameraPose::about(&self.face_centroid(), view_rotation(pitch_deg, yaw_deg))
    }
}

/// Partner of each vertex under `u -> 1 - u`, if every vertex has one.
pub fn uv_mirror_partners(uv: &[Vec2]) -> Option<Vec<usize>> {
    let key = |u: f64, v: f64| ((u * 1e6).round() as i64, (v * 1e6).round() as i64);
    let lookup: HashMap<(i64, i64), usize> = uv.iter().enumerate().map(|(i, t)| (key(t.x, t.y), i)).collect();
    uv.iter().map(|t| lookup.get(&key(1.0 - t.x, t.y)).copied()).collect()
}

/// Symmetric 1D anchor positions: `mid + k*spacing` inside `[0, len]` plus
/// both ends.
fn anchor_axis(len: f64, spacing: f64) -> Vec<f64> {
    let mid = len / 2.0;
    let k = (mid / spacing).floor() as i64;
    let mut xs: Vec<f64> = (-k..=k).map(|i| mid + i as f64 * spacing).collect();
    if xs[0] > 1e-9 {
        xs.insert(0, 0.0);
        xs.push(len);
    }
    xs
}

fn covered_by(p: Vec2, mesh: &Mesh, tris: &[usize]) -> bool {
    tris.iter().any(|&t| {
        let [a, b, c] = mesh.triangles[t];
        barycentric(mesh.vertices[a].xy(), mesh.vertices[b].xy(), mesh.vertices[c].xy(), p)
            .is_some_and(|w| w.iter().all(|&x| x >= -1e-12))
    })
}

/// Lifts `image` to 3D around the fitted face.
///
/// Anchors sit on a grid symmetric about the image's vertical midline, at the
/// mean face depth, and are kept only if neither they nor their mirror fall
/// within half a spacing of the face's projected convex hull. Face boundary
/// vertices and anchors are Delaunay-triangulated; triangles whose centroid
/// lies on the projected face are dropped.
pub fn build_image_mesh(image: &RgbImage, fitted: &Mesh, anchor_spacing: f64) -> Result<ImageMesh> {
    if !(anchor_spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("anchor spacing must be positive, got {anchor_spacing}")));
    }
    if fitted.triangles.is_empty() {
        return Err(Error::Degenerate("fitted mesh has no triangles".into()));
    }
    let (w, h) = (image.width() as f64, image.height() as f64);
    if fitted.vertices.iter().any(|v| !(v.x >= 0.0 && v.x <= w && v.y >= 0.0 && v.y <= h)) {
        return Err(Error::InvalidParameter("fitted mesh does not project inside the image".into()));
    }
    let nf = fitted.vertex_count();
    let mean_z = fitted.vertices.iter().map(|v| v.z).sum::<f64>() / nf as f64;
    let xy: Vec<Vec2> = fitted.vertices.iter().map(|v| v.xy()).collect();
    let hull = convex_hull(&xy);
    let margin = anchor_spacing / 2.0;
    let blocked = |p: Vec2| point_in_polygon(p, &hull) || distance_to_polygon(p, &hull) < margin;

    let mut anchors = Vec::new();
    for &y in &anchor_axis(h, anchor_spacing) {
        for &x in &anchor_axis(w, anchor_spacing) {
            let p = Vec2::new(x, y);
            if !blocked(p) && !blocked(Vec2::new(w - x, y)) {
                anchors.push(p);
            }
        }
    }
    if anchors.is_empty() {
        return Err(Error::NoAnchors);
    }

    let boundary = fitted.boundary_vertices();
    let mut pts: Vec<Point> = boundary.iter().map(|&i| Point { x: xy[i].x, y: xy[i].y }).collect();
    pts.extend(anchors.iter().map(|a| Point { x: a.x, y: a.y }));
    let global = |k: usize| if k < boundary.len() { boundary[k] } else { nf + k - boundary.len() };

    let mut vertices = fitted.vertices.clone();
    vertices.extend(anchors.iter().map(|a| Vec3::new(a.x, a.y, mean_z)));
    let face_tris: Vec<usize> = (0..fitted.triangles.len()).collect();
    let mut triangles = fitted.triangles.clone();
    for t in triangulate(&pts).triangles.chunks_exact(3) {
        let mut tri = [global(t[0]), global(t[1]), global(t[2])];
        let centroid = (vertices[tri[0]].xy() + vertices[tri[1]].xy() + vertices[tri[2]].xy()) / 3.0;
        if covered_by(centroid, fitted, &face_tris) {
            continue;
        }
        let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if (b - a).cross(&(c - a)).z < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }

    let source_xy: Vec<Vec2> = vertices.iter().map(|v| v.xy()).collect();
    let colors: Vec<Vec3> = source_xy.iter().map(|p| sample_bilinear(image, p.x, p.y)).collect();
    let mut region = vec![VertexRegion::Face; nf];
    region.extend(std::iter::repeat_n(VertexRegion::Background, anchors.len()));

    let mirror = fitted.uv.as_deref().and_then(uv_mirror_partners).and_then(|face| {
        let key = |p: Vec2| ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64);
        let lookup: HashMap<(i64, i64), usize> = anchors.iter().enumerate().map(|(i, p)| (key(*p), nf + i)).collect();
        let bg: Option<Vec<usize>> = anchors.iter().map(|p| lookup.get(&key(Vec2::new(w - p.x, p.y))).copied()).collect();
        bg.map(|bg| face.into_iter().chain(bg).collect())
    });

    let mesh = Mesh { vertices, triangles, uv: None, colors: Some(colors) };
    mesh.validate()?;
    Ok(ImageMesh { mesh, region, source_xy, texture: image.clone(), face_count: nf, mirror })
}

/// Visibility score per vertex in the mesh's own frame: `n_z`, plus 2 on
/// the face.
pub fn visibility_scores(mesh: &ImageMesh) -> Vec<f64> {
    vertex_normals_or(&mesh.mesh, Vec3::z())
        .iter()
        .zip(&mesh.region)
        .map(|(n, r)| match r {
            VertexRegion::Face => n.z + 2.0,
            VertexRegion::Background => n.z,
        })
        .collect()
}

/// A textured render: color per pixel sampled from the source texture.
#[derive(Debug, Clone)]
pub struct TexturedRender {
    pub color: RgbImage,
    pub covered: Mask,
    pub buffer: RenderBuffer,
}

/// Renders an image mesh by looking up its source texture per pixel.
pub fn render_image_mesh(mesh: &ImageMesh, pose: &CameraPose, width: usize, height: usize, exec: Exec) -> Result<TexturedRender> {
    let tex = mesh.mesh.colors.clone().unwrap_or_else(|| vec![Vec3::zeros(); mesh.mesh.vertex_count()]);
    let buffer = rasterize_with(&mesh.mesh, pose, &tex, width, height, exec)?;
    let colors = par::map_range(exec, width * height, |i| match buffer.tri_index[i] {
        BACKGROUND => Vec3::zeros(),
        t => {
            let tri = buffer.triangles[t as usize];
            let b = buffer.bary[i];
            let s = mesh.source_xy[tri[0]] * b[0] + mesh.source_xy[tri[1]] * b[1] + mesh.source_xy[tri[2]] * b[2];
            sample_bilinear(&mesh.texture, s.x, s.y)
        }
    });
    let covered = Mask::from_vec(width, height, buffer.tri_index.iter().map(|&t| t != BACKGROUND).collect())?;
    Ok(TexturedRender { color: RgbImage::from_vec(width, height, colors)?, covered, buffer })
}

/// One synthesized view and its blend bookkeeping.
#[derive(Debug, Clone)]
pub struct SynthesizedView {
    pub color: RgbImage,
    pub alpha: GrayImage,
    pub lambda: GrayImage,
    pub lambda_flip: GrayImage,
    /// Rendered visibility of each mesh; `-inf` where it does not cover.
    pub vis: GrayImage,
    pub vis_flip: GrayImage,
}

/// Renders both meshes at `view_pose` and blends them by visibility.
///
/// Where the original's rendered visibility is at least the mirror's (up to
/// [`VIS_TIE_EPS`]), the
/// original wins (`lambda = 1`); elsewhere the mirror fills in at half alpha
/// (`lambda_flip = 0.5`). Pixels covered by neither mesh take the original
/// branch with zero alpha.
pub fn synthesize_view(mesh: &ImageMesh, flipped: &ImageMesh, view_pose: &CameraPose) -> Result<SynthesizedView> {
    synthesize_view_with(mesh, flipped, view_pose, Exec::default())
}

pub fn synthesize_view_with(mesh: &ImageMesh, flipped: &ImageMesh, view_pose: &CameraPose, exec: Exec) -> Result<SynthesizedView> {
    mesh.mesh.check_same_topology(&flipped.mesh, "mirrored image mesh")?;
    let (w, h) = (mesh.texture.width(), mesh.texture.height());
    let a = render_image_mesh(mesh, view_pose, w, h, exec)?;
    let b = render_image_mesh(flipped, view_pose, w, h, exec)?;
    let vis = a.buffer.interpolate(&visibility_scores(mesh), f64::NEG_INFINITY);
    let vis_flip = b.buffer.interpolate(&visibility_scores(flipped), f64::NEG_INFINITY);

    let n = w * h;
    let mut color = vec![Vec3::zeros(); n];
    let mut alpha = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut lambda_flip = vec![0.0; n];
    for i in 0..n {
        if vis.data()[i] >= vis_flip.data()[i] - VIS_TIE_EPS {
            lambda[i] = 1.0;
            if a.covered.data()[i] {
                color[i] = a.color.data()[i];
                alpha[i] = 1.0;
            }
        } else {
            lambda_flip[i] = FLIP_ALPHA;
            color[i] = b.color.data()[i];
            alpha[i] = FLIP_ALPHA;
        }
    }
    Ok(SynthesizedView {
        color: RgbImage::from_vec(w, h, color)?,
        alpha: GrayImage::from_vec(w, h, alpha)?,
        lambda: GrayImage::from_vec(w, h, lambda)?,
        lambda_flip: GrayImage::from_vec(w, h, lambda_flip)?,
        vis,
        vis_flip,
    })
}

/// Mirrors the image mesh about the image's vertical midline and rigidly
/// aligns the mirrored face onto the original face.
///
/// Mirrored vertex `k` takes the position, color and texture coordinate of
/// its partner, reflected, so vertex semantics (left eye corner, ...) are
/// preserved and the triangle list is unchanged.
pub fn mirror_register(mesh: &ImageMesh) -> Result<ImageMesh> {
    let partner = mesh
        .mirror
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("mirror registration needs a left-right symmetric face UV layout".into()))?;
    let w = mesh.texture.width() as f64;
    let raw: Vec<Vec3> = partner
        .iter()
        .map(|&p| {
            let v = mesh.mesh.vertices[p];
            Vec3::new(w - v.x, v.y, v.z)
        })
        .collect();
    let nf = mesh.face_count;
    let pose = fit_rigid(&raw[..nf], &mesh.mesh.vertices[..nf], None)?;
    let vertices = raw.iter().map(|v| pose.apply(v)).collect();
    let colors = mesh.mesh.colors.as_ref().map(|c| partner.iter().map(|&p| c[p]).collect());
    Ok(ImageMesh {
        mesh: Mesh { vertices, triangles: mesh.mesh.triangles.clone(), uv: None, colors },
        region: mesh.region.clone(),
        source_xy: partner.iter().map(|&p| mesh.source_xy[p]).collect(),
        texture: mesh.texture.clone(),
        face_count: nf,
        mirror: mesh.mirror.clone(),
    })
}
