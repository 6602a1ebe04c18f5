//! ASCII Wavefront OBJ reading and writing (`v`, `vt`, `f` records).
//!
//! UVs are stored per vertex; when a face corner references a `vt`, that
//! coordinate is attached to the corner's vertex. `v x y z r g b` lines are
//! accepted and written as per-vertex colors.

use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};

pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut verts = Vec::new();
    let mut colors = Vec::new();
    let mut texcoords = Vec::new();
    let mut corners: Vec<[(usize, Option<usize>); 3]> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let bad = |msg: &str| Error::format("OBJ", format!("line {}: {msg}", lineno + 1));
        let nums = |it: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            it.map(|s| s.parse::<f64>().map_err(|_| bad("bad number"))).collect()
        };
        match tag {
            "v" => {
                let n = nums(it)?;
                if n.len() < 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                verts.push(Vec3::new(n[0], n[1], n[2]));
                if n.len() >= 6 {
                    colors.push(Vec3::new(n[3], n[4], n[5]));
                }
            }
            "vt" => {
                let n = nums(it)?;
                if n.len() < 2 {
                    return Err(bad("vt needs 2 coordinates"));
                }
                texcoords.push(Vec2::new(n[0], n[1]));
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let resolve = |s: &str, count: usize| -> Result<usize> {
                        let i: i64 = s.parse().map_err(|_| bad("bad face index"))?;
                        let idx = if i < 0 { count as i64 + i } else { i - 1 };
                        if idx < 0 {
                            return Err(bad("face index out of range"));
                        }
                        Ok(idx as usize)
                    };
                    let v = resolve(parts.next().unwrap_or(""), verts.len())?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, texcoords.len())?),
                        _ => None,
                    };
                    poly.push((v, vt));
                }
                if poly.len() < 3 {
                    return Err(bad("face needs at least 3 corners"));
                }
                for k in 1..poly.len() - 1 {
                    corners.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }

    let n = verts.len();
    let mut uv: Option<Vec<Vec2>> = None;
    if corners.iter().flatten().any(|c| c.1.is_some()) {
        let mut per_vertex = vec![Vec2::zeros(); n];
        for &(v, vt) in corners.iter().flatten() {
            if let Some(t) = vt {
                let coord = *texcoords.get(t).ok_or_else(|| Error::format("OBJ", "vt index out of range"))?;
                if v < n {
                    per_vertex[v] = coord;
                }
            }
        }
        uv = Some(per_vertex);
    }
    let triangles = corners.iter().map(|c| [c[0].0, c[1].0, c[2].0]).collect();
    let mut mesh = Mesh::new(verts, triangles)?;
    mesh.uv = uv;
    if colors.len() == n && n > 0 {
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

pub fn format_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.colors {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c.x, c.y, c.z);
            }
            None => {
                let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
            }
        }
    }
    if let Some(uv) = &mesh.uv {
        for t in uv {
            let _ = writeln!(s, "vt {} {}", t.x, t.y);
        }
    }
    for &[a, b, c] in &mesh.triangles {
        if mesh.uv.is_some() {
            let _ = writeln!(s, "f {0}/{0} {1}/{1} {2}/{2}", a + 1, b + 1, c + 1);
        } else {
            let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
        }
    }
    s
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn write_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, format_obj(mesh)).map_err(|e| Error::io(path, e))
}
