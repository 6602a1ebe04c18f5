use crate::error::{Error, Result};

/// Nonnegative per-vertex scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexWeightMap {
    weights: Vec<f64>,
}

impl VertexWeightMap {
    pub fn zeros(n: usize) -> Self {
        VertexWeightMap { weights: vec![0.0; n] }
    }

    pub fn uniform(n: usize) -> Self {
        VertexWeightMap { weights: vec![1.0; n] }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight {i} is {}", weights[i])));
        }
        Ok(VertexWeightMap { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn add(&mut self, i: usize, w: f64) {
        self.weights[i] += w;
    }

    pub(crate) fn accumulate(&mut self, other: &VertexWeightMap) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
    }

    /// f32 little-endian with a u32 count header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.weights.len());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for &w in &self.weights {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format("weights", "missing header"));
        }
        let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + 4 * n {
            return Err(Error::format("weights", format!("expected {} bytes, got {}", 4 + 4 * n, bytes.len())));
        }
        let w = bytes[4..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        Self::new(w)
    }
}
