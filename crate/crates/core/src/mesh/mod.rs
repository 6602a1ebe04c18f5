//! Triangle meshes, vertex normals and UV displacement maps.

mod obj;
pub mod primitives;
mod uv;

pub use obj::{read_obj, write_obj, parse_obj, format_obj};
pub use uv::{apply_displacement, sample_uv_map, UvDisplacementMap};

use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3, Mat3};

/// Triangles whose area falls below this are skipped when accumulating normals.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A topology-fixed triangulated surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub uv: Option<Vec<Vec2>>,
    pub colors: Option<Vec<Vec3>>,
}

impl Mesh {
    /// Builds a mesh, checking triangle indices.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Mesh { vertices, triangles, uv: None, colors: None };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_uv(mut self, uv: Vec<Vec2>) -> Result<Self> {
        if uv.len() != self.vertices.len() {
            return Err(Error::LengthMismatch { what: "uv", expected: self.vertices.len(), actual: uv.len() });
        }
        self.uv = Some(uv);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::LengthMismatch {
                what: "colors",
                expected: self.vertices.len(),
                actual: colors.len(),
            });
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                if i >= n {
                    return Err(Error::BadTriangleIndex { triangle: t, index: i, count: n });
                }
            }
        }
        if let Some(uv) = &self.uv {
            if uv.len() != n {
                return Err(Error::LengthMismatch { what: "uv", expected: n, actual: uv.len() });
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::LengthMismatch { what: "colors", expected: n, actual: c.len() });
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same topology and attributes, new positions.
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> Result<Mesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::LengthMismatch {
                what: "positions",
                expected: self.vertices.len(),
                actual: vertices.len(),
            });
        }
        Ok(Mesh { vertices, ..self.clone() })
    }

    /// Applies `f` to every vertex position.
    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> Mesh {
        Mesh { vertices: self.vertices.iter().map(f).collect(), ..self.clone() }
    }

    /// `R * v` for every vertex.
    pub fn rotated(&self, r: &Mat3) -> Mesh {
        self.map_positions(|v| r * v)
    }

    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles
    }

    pub fn check_same_topology(&self, other: &Mesh, what: &str) -> Result<()> {
        if self.same_topology(other) {
            Ok(())
        } else {
            Err(Error::TopologyMismatch(format!(
                "{what}: {} vs {} vertices, {} vs {} triangles",
                self.vertices.len(),
                other.vertices.len(),
                self.triangles.len(),
                other.triangles.len()
            )))
        }
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Unnormalized face normal; its length is twice the triangle area.
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Edges used by exactly one triangle, with their triangle.
    pub fn boundary_edges(&self) -> Vec<((usize, usize), usize)> {
        let mut e: Vec<((usize, usize), usize)> = self
            .triangles
            .iter()
            .enumerate()
            .flat_map(|(t, &[a, b, c])| [((a, b), t), ((b, c), t), ((c, a), t)])
            .map(|((i, j), t)| (if i < j { (i, j) } else { (j, i) }, t))
            .collect();
        e.sort_unstable();
        let mut out = Vec::new();
        let mut k = 0;
        while k < e.len() {
            let mut m = k + 1;
            while m < e.len() && e[m].0 == e[k].0 {
                m += 1;
            }
            if m - k == 1 {
                out.push(e[k]);
            }
            k = m;
        }
        out
    }

    /// Sorted vertices lying on a boundary edge.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary_edges().into_iter().flat_map(|((a, b), _)| [a, b]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Vertex adjacency lists built from the edge set.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Vertex -> incident triangle list.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                inc[v].push(t);
            }
        }
        inc
    }

    /// Reverses the winding of every triangle.
    pub fn flipped_winding(&self) -> Mesh {
        Mesh { triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(), ..self.clone() }
    }
}

/// One unit normal per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormalField {
    pub normals: Vec<Vec3>,
}

impl VertexNormalField {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

/// Area-weighted vertex normals.
///
/// Triangles with area below [`DEGENERATE_AREA`] are skipped. A vertex left
/// without any contributing triangle is an error.
pub fn compute_vertex_normals(mesh: &Mesh) -> Result<VertexNormalField> {
    let acc = accumulate_normals(mesh);
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                Ok(n / len)
            } else {
                Err(Error::IsolatedVertex { vertex: i })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VertexNormalField { normals })
}

/// Like [`compute_vertex_normals`] but substitutes `fallback` for vertices
/// without a contributing triangle. Used by renderers that must cope with
/// stray vertices.
pub fn vertex_normals_or(mesh: &Mesh, fallback: Vec3) -> Vec<Vec3> {
    accumulate_normals(mesh)
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() { n / len } else { fallback }
        })
        .collect()
}

fn accumulate_normals(mesh: &Mesh) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let cross = mesh.face_cross(t);
        if 0.5 * cross.norm() < DEGENERATE_AREA {
            continue;
        }
        for &v in tri {
            acc[v] += cross;
        }
    }
    acc
}
