use std::io::{Read, Write};
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};

const MAGIC: &[u8; 4] = b"UVDM";

/// Dense H x W grid of 3D displacements addressed by UV.
///
/// Grid nodes sit on the closed unit square: node `(row, col)` is at
/// `u = col / (W-1)`, `v = row / (H-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UvDisplacementMap {
    height: usize,
    width: usize,
    grid: Vec<Vec3>,
}

impl UvDisplacementMap {
    pub fn new(height: usize, width: usize, grid: Vec<Vec3>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("uv map must be at least 1x1".into()));
        }
        if grid.len() != height * width {
            return Err(Error::LengthMismatch { what: "uv map grid", expected: height * width, actual: grid.len() });
        }
        if grid.iter().any(|d| !d.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidParameter("uv map holds non-finite displacement".into()));
        }
        Ok(UvDisplacementMap { height, width, grid })
    }

    pub fn constant(height: usize, width: usize, value: Vec3) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Vec3 {
        self.grid[row * self.width + col]
    }

    pub fn grid(&self) -> &[Vec3] {
        &self.grid
    }

    /// Largest absolute per-component difference between horizontally
    /// (first) and vertically (second) adjacent nodes.
    pub fn max_adjacent_step(&self) -> (f64, f64) {
        let mut du: f64 = 0.0;
        let mut dv: f64 = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                if c + 1 < self.width {
                    du = du.max((self.get(r, c + 1) - self.get(r, c)).abs().max());
                }
                if r + 1 < self.height {
                    dv = dv.max((self.get(r + 1, c) - self.get(r, c)).abs().max());
                }
            }
        }
        (du, dv)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.grid.len() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for d in &self.grid {
            for k in 0..3 {
                out.extend_from_slice(&(d[k] as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::format("UVDM", "missing magic"));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let need = 12 + h * w * 12;
        if bytes.len() != need {
            return Err(Error::format("UVDM", format!("expected {need} bytes, got {}", bytes.len())));
        }
        let grid = bytes[12..]
            .chunks_exact(12)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
                Vec3::new(f(0), f(1), f(2))
            })
            .collect();
        Self::new(h, w, grid)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Bilinear lookup of the displacement at `uv`.
///
/// `uv` must lie in the closed unit square; `u = 1` / `v = 1` clamp to the
/// last cell.
pub fn sample_uv_map(map: &UvDisplacementMap, uv: Vec2) -> Result<Vec3> {
    if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
        return Err(Error::UvOutOfRange { u: uv.x, v: uv.y });
    }
    let (c0, tu) = cell(uv.x, map.width);
    let (r0, tv) = cell(uv.y, map.height);
    let c1 = (c0 + 1).min(map.width - 1);
    let r1 = (r0 + 1).min(map.height - 1);
    let top = map.get(r0, c0) * (1.0 - tu) + map.get(r0, c1) * tu;
    let bottom = map.get(r1, c0) * (1.0 - tu) + map.get(r1, c1) * tu;
    Ok(top * (1.0 - tv) + bottom * tv)
}

fn cell(t: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let x = t * (n - 1) as f64;
    let i = (x.floor() as usize).min(n - 2);
    (i, x - i as f64)
}

/// Adds the sampled UV displacement to every vertex of `coarse`.
pub fn apply_displacement(coarse: &Mesh, map: &UvDisplacementMap) -> Result<Mesh> {
    let uv = coarse.uv.as_ref().ok_or(Error::MissingUv)?;
    let vertices = coarse
        .vertices
        .iter()
        .zip(uv)
        .map(|(v, &t)| Ok(v + sample_uv_map(map, t)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mesh { vertices, ..coarse.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(seed: u64, h: usize, w: usize) -> UvDisplacementMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = (0..h * w)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        UvDisplacementMap::new(h, w, g).unwrap()
    }

    #[test]
    fn zero_and_constant_maps() {
        let z = UvDisplacementMap::constant(5, 7, Vec3::zeros()).unwrap();
        let c = UvDisplacementMap::constant(5, 7, Vec3::new(1.5, -2.0, 3.0)).unwrap();
        for &(u, v) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 1.0), (0.5, 0.0)] {
            assert_eq!(sample_uv_map(&z, Vec2::new(u, v)).unwrap(), Vec3::zeros());
            assert!((sample_uv_map(&c, Vec2::new(u, v)).unwrap() - Vec3::new(1.5, -2.0, 3.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_centre() {
        let m = UvDisplacementMap::new(
            2,
            2,
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(sample_uv_map(&m, Vec2::new(0.5, 0.5)).unwrap(), Vec3::new(0.5, 0.5, 0.0));
        assert_eq!(sample_uv_map(&m, Vec2::new(1.0, 1.0)).unwrap(), Vec3::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn out_of_range_uv() {
        let m = UvDisplacementMap::constant(2, 2, Vec3::zeros()).unwrap();
        assert!(matches!(sample_uv_map(&m, Vec2::new(1.01, 0.5)), Err(Error::UvOutOfRange { .. })));
        assert!(matches!(sample_uv_map(&m, Vec2::new(0.5, -1e-9)), Err(Error::UvOutOfRange { .. })));
    }

    #[test]
    fn displacement_application() {
        let coarse = grid(6, 5, -10.0, -8.0, 20.0, 16.0);
        let zero = UvDisplacementMap::constant(8, 8, Vec3::zeros()).unwrap();
        assert_eq!(apply_displacement(&coarse, &zero).unwrap(), coarse);
        let up = UvDisplacementMap::constant(8, 8, Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let out = apply_displacement(&coarse, &up).unwrap();
        for (a, b) in coarse.vertices.iter().zip(&out.vertices) {
            assert_eq!(b - a, Vec3::new(0.0, 0.0, 5.0));
        }
        // Round trip: output - coarse recovers the sampled displacement.
        let map = random_map(3, 9, 11);
        let out = apply_displacement(&coarse, &map).unwrap();
        assert_eq!(out.triangles, coarse.triangles);
        for ((a, b), t) in coarse.vertices.iter().zip(&out.vertices).zip(coarse.uv.as_ref().unwrap()) {
            let d = sample_uv_map(&map, *t).unwrap();
            assert!((b - a - d).norm() < 1e-12);
        }
        let mut no_uv = coarse.clone();
        no_uv.uv = None;
        assert!(matches!(apply_displacement(&no_uv, &zero), Err(Error::MissingUv)));
    }

    #[test]
    fn binary_layout() {
        let m = random_map(1, 3, 4);
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"UVDM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 4);
        assert_eq!(b.len(), 12 + 3 * 4 * 3 * 4);
        // Second node's y component, row-major.
        let y1 = f32::from_le_bytes(b[12 + 12 + 4..12 + 12 + 8].try_into().unwrap());
        assert_eq!(y1, m.get(0, 1).y as f32);
        let back = UvDisplacementMap::from_bytes(&b).unwrap();
        for (x, y) in back.grid().iter().zip(m.grid()) {
            assert!((x - y).norm() < 1e-6);
        }
        assert!(UvDisplacementMap::from_bytes(&b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn sampling_is_lipschitz(seed in 0u64..1000, u in 0.0..1.0f64, v in 0.0..1.0f64,
                                 du in -0.05..0.05f64, dv in -0.05..0.05f64) {
            let map = random_map(seed, 7, 9);
            let p = Vec2::new(u, v);
            let q = Vec2::new((u + du).clamp(0.0, 1.0), (v + dv).clamp(0.0, 1.0));
            let (su, sv) = map.max_adjacent_step();
            let lu = su * (map.width() - 1) as f64;
            let lv = sv * (map.height() - 1) as f64;
            let a = sample_uv_map(&map, p).unwrap();
            let b = sample_uv_map(&map, q).unwrap();
            let bound = lu * (q.x - p.x).abs() + lv * (q.y - p.y).abs();
            prop_assert!((a - b).abs().max() <= bound + 1e-12);
        }
    }
}
