//! Procedural meshes used by fixtures, tests and benches.

use std::collections::HashMap;

use super::Mesh;
use crate::math::{Vec2, Vec3};

/// Unit icosphere with outward-facing winding.
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh { vertices: verts, triangles: faces, uv: None, colors: None }
}

/// Regular `nx` x `ny` vertex grid spanning `[x0, x0+w] x [y0, y0+h]` in the
/// plane z = 0, normals +z, uv = normalized grid coordinates.
pub fn grid(nx: usize, ny: usize, x0: f64, y0: f64, w: f64, h: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let mut verts = Vec::with_capacity(nx * ny);
    let mut uv = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let u = i as f64 / (nx - 1) as f64;
            let v = j as f64 / (ny - 1) as f64;
            verts.push(Vec3::new(x0 + u * w, y0 + v * h, 0.0));
            uv.push(Vec2::new(u, v));
        }
    }
    let mut tris = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = a + 1;
            let c = a + nx;
            let d = c + 1;
            tris.push([a, b, c]);
            tris.push([b, d, c]);
        }
    }
    Mesh { vertices: verts, triangles: tris, uv: Some(uv), colors: None }
}

/// Flat disk in z = 0 centred at the origin, normals +z. Vertex 0 is the
/// centre; ring `r` (1-based) holds `segments` vertices at radius
/// `radius * r / rings`, starting at index `1 + (r-1) * segments`.
pub fn disk(rings: usize, segments: usize, radius: f64) -> Mesh {
    assert!(rings >= 1 && segments >= 3);
    let mut verts = vec![Vec3::zeros()];
    for r in 1..=rings {
        let rad = radius * r as f64 / rings as f64;
        for s in 0..segments {
            let a = std::f64::consts::TAU * (s as f64 + 0.5 * (r % 2) as f64) / segments as f64;
            verts.push(Vec3::new(rad * a.cos(), rad * a.sin(), 0.0));
        }
    }
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);
    let mut tris = Vec::new();
    for s in 0..segments {
        tris.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings {
        for s in 0..segments {
            // Odd rings are rotated half a segment; choose diagonals accordingly.
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            tris.push([a, c, d]);
            tris.push([a, d, b]);
        }
    }
    // Make all windings face +z regardless of the layout above.
    let mut m = Mesh { vertices: verts, triangles: tris, uv: None, colors: None };
    for t in 0..m.triangles.len() {
        if m.face_cross(t).z < 0.0 {
            let [a, b, c] = m.triangles[t];
            m.triangles[t] = [a, c, b];
        }
    }
    m
}
