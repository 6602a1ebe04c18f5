//! Exact nearest-neighbour queries over 3D point sets.

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::math::Vec3;
use crate::par::{self, Exec};

type Tree = ImmutableKdTree<f64, 3>;

/// Static k-d tree over a point set; items are indices into that set.
pub struct PointIndex {
    tree: Option<Tree>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = if raw.is_empty() { None } else { Tree::new_from_slice(&raw).ok() };
        PointIndex { tree, len: points.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of and Euclidean distance to the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        let tree = self.tree.as_ref()?;
        let r = tree.query(&[q.x, q.y, q.z]).nearest_one::<SquaredEuclidean<f64>>().execute();
        Some((r.item as usize, r.distance.sqrt()))
    }

    pub fn nearest_all(&self, queries: &[Vec3], exec: Exec) -> Vec<Option<(usize, f64)>> {
        par::map_slice(exec, queries, |q| self.nearest(q))
    }
}

/// Brute-force nearest neighbour; first index wins ties.
pub fn nearest_brute_force(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = (p - q).norm_squared();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, d)| (i, d.sqrt()))
}
