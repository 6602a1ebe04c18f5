//! Z-buffered software rasterizer under weak perspective.
//!
//! Screen coordinates are the x, y of the posed vertex, depth is its z and
//! larger z is nearer. A pixel is covered when its centre lies inside the
//! triangle; centres exactly on an edge go to the triangle for which that edge
//! is a top or left edge. No back-face culling, no anti-aliasing.

mod export;
mod phong;

pub use export::{export_render_buffer, RenderSidecar};
pub use phong::{phong_shade, phong_shade_with_normals, PhongParams};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, RgbImage};
use crate::math::{edge_function, Mat3, Vec2, Vec3};
use crate::mesh::{vertex_normals_or, Mesh};
use crate::morphable::CameraPose;
use crate::par::{self, Exec};
use crate::weights::VertexWeightMap;

/// Triangle index stored at background pixels.
pub const BACKGROUND: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fragment {
    depth: f64,
    tri: u32,
    bary: [f64; 3],
}

const EMPTY: Fragment = Fragment { depth: f64::NEG_INFINITY, tri: BACKGROUND, bary: [0.0; 3] };

/// Per-pixel color, depth, winning triangle and barycentric weights.
///
/// Barycentric weights are ordered like the triangle's vertex indices in the
/// source mesh, so `bary[k]` belongs to `triangles[tri][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffer {
    pub width: usize,
    pub height: usize,
    pub color: Vec<Vec3>,
    pub depth: Vec<f64>,
    pub tri_index: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
    /// Triangle list of the rendered mesh.
    pub triangles: Vec<[usize; 3]>,
}

/// One foreground pixel's triangle vertices and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub pixel: (usize, usize),
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
}

/// Pixel -> vertex attribution for every foreground pixel, in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVertexTrace {
    pub entries: Vec<TraceEntry>,
}

impl RenderBuffer {
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.tri_index[y * self.width + x] != BACKGROUND
    }

    pub fn foreground_count(&self) -> usize {
        self.tri_index.iter().filter(|&&t| t != BACKGROUND).count()
    }

    pub fn color_image(&self) -> RgbImage {
        RgbImage::from_vec(self.width, self.height, self.color.clone()).expect("buffer size")
    }

    pub fn depth_image(&self) -> GrayImage {
        GrayImage::from_vec(self.width, self.height, self.depth.clone()).expect("buffer size")
    }

    /// Barycentric interpolation of a per-vertex scalar; `background` elsewhere.
    pub fn interpolate(&self, attr: &[f64], background: f64) -> GrayImage {
        let data = (0..self.width * self.height)
            .map(|i| match self.tri_index[i] {
                BACKGROUND => background,
                t => {
                    let tri = self.triangles[t as usize];
                    let b = self.bary[i];
                    b[0] * attr[tri[0]] + b[1] * attr[tri[1]] + b[2] * attr[tri[2]]
                }
            })
            .collect();
        GrayImage::from_vec(self.width, self.height, data).expect("buffer size")
    }

    pub fn trace(&self) -> PixelVertexTrace {
        let mut entries = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let t = self.tri_index[i];
                if t != BACKGROUND {
                    entries.push(TraceEntry { pixel: (x, y), vertices: self.triangles[t as usize], weights: self.bary[i] });
                }
            }
        }
        PixelVertexTrace { entries }
    }
}

#[inline]
fn is_top_left(a: Vec2, b: Vec2) -> bool {
    let dy = b.y - a.y;
    dy < 0.0 || (dy == 0.0 && b.x - a.x > 0.0)
}

#[inline]
fn covers(w: f64, a: Vec2, b: Vec2) -> bool {
    w > 0.0 || (w == 0.0 && is_top_left(a, b))
}

struct SetupTriangle {
    // Positively oriented screen positions and depths.
    p: [Vec2; 3],
    z: [f64; 3],
    // Position in the source triangle of each oriented vertex.
    slot: [usize; 3],
    area: f64,
    cols: (usize, usize),
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then(|| (first as usize, last as usize))
}

/// Rasterizes `mesh` posed by `pose` into a `width x height` buffer.
pub fn rasterize(mesh: &Mesh, pose: &CameraPose, texture: &[Vec3], width: usize, height: usize) -> Result<RenderBuffer> {
    rasterize_with(mesh, pose, texture, width, height, Exec::default())
}

pub fn rasterize_with(
    mesh: &Mesh,
    pose: &CameraPose,
    texture: &[Vec3],
    width: usize,
    height: usize,
    exec: Exec,
) -> Result<RenderBuffer> {
    if texture.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch { what: "texture", expected: mesh.vertex_count(), actual: texture.len() });
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("render size must be positive".into()));
    }
    let posed: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
    let frags = raster_fragments(&posed, &mesh.triangles, width, height, exec);

    let color = frags
        .iter()
        .map(|f| match f.tri {
            BACKGROUND => Vec3::zeros(),
            t => {
                let tri = mesh.triangles[t as usize];
                texture[tri[0]] * f.bary[0] + texture[tri[1]] * f.bary[1] + texture[tri[2]] * f.bary[2]
            }
        })
        .collect();
    Ok(RenderBuffer {
        width,
        height,
        color,
        depth: frags.iter().map(|f| f.depth).collect(),
        tri_index: frags.iter().map(|f| f.tri).collect(),
        bary: frags.iter().map(|f| f.bary).collect(),
        triangles: mesh.triangles.clone(),
    })
}

fn raster_fragments(posed: &[Vec3], triangles: &[[usize; 3]], width: usize, height: usize, exec: Exec) -> Vec<Fragment> {
    let mut setups = Vec::with_capacity(triangles.len());
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); height];
    for (t, tri) in triangles.iter().enumerate() {
        let mut p = [posed[tri[0]].xy(), posed[tri[1]].xy(), posed[tri[2]].xy()];
        let mut z = [posed[tri[0]].z, posed[tri[1]].z, posed[tri[2]].z];
        let mut slot = [0, 1, 2];
        let mut area = edge_function(p[0], p[1], p[2]);
        if !(area.is_finite()) || area == 0.0 || z.iter().any(|v| !v.is_finite()) {
            setups.push(None);
            continue;
        }
        if area < 0.0 {
            p.swap(1, 2);
            z.swap(1, 2);
            slot.swap(1, 2);
            area = -area;
        }
        let (xmin, xmax) = (p[0].x.min(p[1].x).min(p[2].x), p[0].x.max(p[1].x).max(p[2].x));
        let (ymin, ymax) = (p[0].y.min(p[1].y).min(p[2].y), p[0].y.max(p[1].y).max(p[2].y));
        let (Some(cols), Some(rspan)) = (pixel_span(xmin, xmax, width), pixel_span(ymin, ymax, height)) else {
            setups.push(None);
            continue;
        };
        for row in &mut rows[rspan.0..=rspan.1] {
            row.push(t as u32);
        }
        setups.push(Some(SetupTriangle { p, z, slot, area, cols }));
    }

    let mut frags = vec![EMPTY; width * height];
    par::for_each_chunk_mut(exec, &mut frags, width, |y, row| {
        let py = y as f64 + 0.5;
        for &t in &rows[y] {
            let s = setups[t as usize].as_ref().expect("binned triangles are set up");
            for (x, frag) in row.iter_mut().enumerate().take(s.cols.1 + 1).skip(s.cols.0) {
                let q = Vec2::new(x as f64 + 0.5, py);
                let w0 = edge_function(s.p[1], s.p[2], q);
                let w1 = edge_function(s.p[2], s.p[0], q);
                let w2 = edge_function(s.p[0], s.p[1], q);
                if !(covers(w0, s.p[1], s.p[2]) && covers(w1, s.p[2], s.p[0]) && covers(w2, s.p[0], s.p[1])) {
                    continue;
                }
                let b = [w0 / s.area, w1 / s.area, w2 / s.area];
                let depth = b[0] * s.z[0] + b[1] * s.z[1] + b[2] * s.z[2];
                if depth > frag.depth {
                    let mut bary = [0.0; 3];
                    for k in 0..3 {
                        bary[s.slot[k]] = b[k];
                    }
                    *frag = Fragment { depth, tri: t, bary };
                }
            }
        }
    });
    frags
}

/// Pose used for plaster renders: unit scale, image-centred.
pub fn plaster_pose(view_rotation: &Mat3, width: usize, height: usize) -> CameraPose {
    CameraPose { f: 1.0, r: *view_rotation, t3d: Vec3::new(width as f64 / 2.0, height as f64 / 2.0, 0.0) }
}

/// Shading-only render: white albedo lit head-on along the view axis.
///
/// Per-vertex gray `max(0, n_z)` of the rotated normal, Gouraud-interpolated.
/// Any vertex colors on the mesh are ignored.
pub fn render_plaster(mesh: &Mesh, view_rotation: &Mat3, width: usize, height: usize) -> RenderBuffer {
    render_plaster_with(mesh, view_rotation, width, height, Exec::default())
}

pub fn render_plaster_with(mesh: &Mesh, view_rotation: &Mat3, width: usize, height: usize, exec: Exec) -> RenderBuffer {
    let pose = plaster_pose(view_rotation, width, height);
    let normals = vertex_normals_or(mesh, Vec3::zeros());
    let shade: Vec<Vec3> = normals
        .iter()
        .map(|n| {
            let g = (view_rotation * n).z.max(0.0);
            Vec3::new(g, g, g)
        })
        .collect();
    rasterize_with(mesh, &pose, &shade, width.max(1), height.max(1), exec).expect("texture sized to mesh")
}

/// Distributes each foreground pixel's error over its triangle's vertices by
/// barycentric weight. Errors on background pixels are dropped.
pub fn inverse_render(buffer: &RenderBuffer, pixel_error: &GrayImage, vertex_count: usize) -> Result<VertexWeightMap> {
    if pixel_error.width() != buffer.width || pixel_error.height() != buffer.height {
        return Err(Error::InvalidParameter(format!(
            "error map {}x{} does not match buffer {}x{}",
            pixel_error.width(),
            pixel_error.height(),
            buffer.width,
            buffer.height
        )));
    }
    let mut w = VertexWeightMap::zeros(vertex_count);
    for (i, &e) in pixel_error.data().iter().enumerate() {
        let t = buffer.tri_index[i];
        if t == BACKGROUND || e == 0.0 {
            continue;
        }
        if e < 0.0 {
            return Err(Error::InvalidParameter("pixel errors must be nonnegative".into()));
        }
        let tri = buffer.triangles[t as usize];
        let b = buffer.bary[i];
        for k in 0..3 {
            if tri[k] >= vertex_count {
                return Err(Error::LengthMismatch { what: "vertex_count", expected: tri[k] + 1, actual: vertex_count });
            }
            // Clamp the tiny negative weights allowed on edges.
            w.add(tri[k], e * b[k].max(0.0));
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests;
