//! Sparse linear least squares through the normal equations.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Accumulates `sum_r w_r (a_r . x - b_r)^2` for several right-hand sides
/// sharing one design matrix, then solves `A^T W A x = A^T W b`.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    n: usize,
    coo: CooMatrix<f64>,
    rhs: DMatrix<f64>,
}

impl NormalEquations {
    pub fn new(unknowns: usize, rhs_columns: usize) -> Self {
        NormalEquations { n: unknowns, coo: CooMatrix::new(unknowns, unknowns), rhs: DMatrix::zeros(unknowns, rhs_columns) }
    }

    pub fn unknowns(&self) -> usize {
        self.n
    }

    /// Adds one weighted residual row. `b` has one entry per right-hand side.
    pub fn add_row(&mut self, a: &[(usize, f64)], b: &[f64], weight: f64) {
        debug_assert_eq!(b.len(), self.rhs.ncols());
        for &(i, ai) in a {
            for &(j, aj) in a {
                self.coo.push(i, j, weight * ai * aj);
            }
            for (c, &bc) in b.iter().enumerate() {
                self.rhs[(i, c)] += weight * ai * bc;
            }
        }
    }

    /// Adds `weight * (x_i - x_j - b)^2`.
    pub fn add_difference(&mut self, i: usize, j: usize, b: &[f64], weight: f64) {
        self.add_row(&[(i, 1.0), (j, -1.0)], b, weight);
    }

    pub fn solve(&self) -> Result<DMatrix<f64>> {
        let csc = CscMatrix::from(&self.coo);
        let chol = CscCholesky::factor(&csc).map_err(|_| Error::SingularSystem { iteration: 0 })?;
        let x = chol.solve(&self.rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { iteration: 0 });
        }
        Ok(x)
    }
}

/// Number of connected components of an undirected graph.
pub fn connected_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut count = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            count -= 1;
        }
    }
    count
}
