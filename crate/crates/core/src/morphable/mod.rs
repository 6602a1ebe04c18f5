//! Linear shape/texture model, weak-perspective pose and rigid alignment.

mod pose;
pub mod synth;

pub use pose::{disentangle_rigid, fit_rigid, rigid_project, CameraPose, PoseRecord};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};
use crate::mesh::Mesh;

const MAGIC: &[u8; 4] = b"MM3D";

/// Mean shape and texture with identity, expression and texture axes.
///
/// Vectors are stacked `[x0, y0, z0, x1, ...]`; each basis has `3N` rows.
/// The template's triangles and UVs travel with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub mean_shape: DVector<f64>,
    pub id_basis: DMatrix<f64>,
    pub exp_basis: DMatrix<f64>,
    pub mean_texture: DVector<f64>,
    pub tex_basis: DMatrix<f64>,
    pub triangles: Vec<[usize; 3]>,
    pub uv: Option<Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapeParams {
    pub alpha_id: Vec<f64>,
    pub alpha_exp: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(model: &MorphableModel) -> Self {
        ShapeParams { alpha_id: vec![0.0; model.id_dims()], alpha_exp: vec![0.0; model.exp_dims()] }
    }
}

impl MorphableModel {
    pub fn new(
        mean_shape: DVector<f64>,
        id_basis: DMatrix<f64>,
        exp_basis: DMatrix<f64>,
        mean_texture: DVector<f64>,
        tex_basis: DMatrix<f64>,
        triangles: Vec<[usize; 3]>,
        uv: Option<Vec<Vec2>>,
    ) -> Result<Self> {
        let model = MorphableModel { mean_shape, id_basis, exp_basis, mean_texture, tex_basis, triangles, uv };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.mean_shape.len();
        if rows % 3 != 0 {
            return Err(Error::InvalidParameter(format!("mean shape length {rows} not divisible by 3")));
        }
        for (what, m) in [("id basis", &self.id_basis), ("exp basis", &self.exp_basis), ("tex basis", &self.tex_basis)] {
            if m.nrows() != rows {
                return Err(Error::LengthMismatch { what, expected: rows, actual: m.nrows() });
            }
            for (j, c) in m.column_iter().enumerate() {
                let n = c.norm();
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::InvalidParameter(format!("{what} column {j} has norm {n}")));
                }
            }
        }
        if self.mean_texture.len() != rows {
            return Err(Error::LengthMismatch { what: "mean texture", expected: rows, actual: self.mean_texture.len() });
        }
        // Topology check through Mesh validation.
        self.template_mesh(self.mean_shape.as_slice())?;
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len() / 3
    }

    pub fn id_dims(&self) -> usize {
        self.id_basis.ncols()
    }

    pub fn exp_dims(&self) -> usize {
        self.exp_basis.ncols()
    }

    pub fn tex_dims(&self) -> usize {
        self.tex_basis.ncols()
    }

    fn template_mesh(&self, stacked: &[f64]) -> Result<Mesh> {
        let mut m = Mesh::new(stack_to_points(stacked), self.triangles.clone())?;
        m.uv = self.uv.clone();
        m.validate()?;
        Ok(m)
    }

    pub fn mean_mesh(&self) -> Mesh {
        self.template_mesh(self.mean_shape.as_slice()).expect("validated model")
    }

    /// Mean texture plus `tex_basis * beta`, per vertex.
    pub fn evaluate_texture(&self, beta: &[f64]) -> Result<Vec<Vec3>> {
        if beta.len() != self.tex_dims() {
            return Err(Error::LengthMismatch { what: "beta", expected: self.tex_dims(), actual: beta.len() });
        }
        let t = &self.mean_texture + &self.tex_basis * DVector::from_column_slice(beta);
        Ok(stack_to_points(t.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let uv_flag = u32::from(self.uv.is_some());
        for d in [self.vertex_count(), self.id_dims(), self.exp_dims(), self.tex_dims(), self.triangles.len()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&uv_flag.to_le_bytes());
        let mut put = |xs: &[f64]| xs.iter().for_each(|&x| out.extend_from_slice(&(x as f32).to_le_bytes()));
        put(self.mean_shape.as_slice());
        put(self.id_basis.as_slice());
        put(self.exp_basis.as_slice());
        put(self.mean_texture.as_slice());
        put(self.tex_basis.as_slice());
        if let Some(uv) = &self.uv {
            let flat: Vec<f64> = uv.iter().flat_map(|t| [t.x, t.y]).collect();
            put(&flat);
        }
        for tri in &self.triangles {
            for &i in tri {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::format("MM3D", m);
        if bytes.len() < 28 || &bytes[..4] != MAGIC {
            return Err(err("missing magic"));
        }
        let mut pos = 4;
        let u32_at = |pos: &mut usize| -> Result<u32> {
            let b = bytes.get(*pos..*pos + 4).ok_or_else(|| err("truncated"))?;
            *pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()))
        };
        let n = u32_at(&mut pos)? as usize;
        let kid = u32_at(&mut pos)? as usize;
        let kexp = u32_at(&mut pos)? as usize;
        let ktex = u32_at(&mut pos)? as usize;
        let ntri = u32_at(&mut pos)? as usize;
        let has_uv = u32_at(&mut pos)? != 0;
        let rows = 3 * n;
        let floats = rows * (2 + kid + kexp + ktex) + if has_uv { 2 * n } else { 0 };
        let need = pos + 4 * floats + 12 * ntri;
        if bytes.len() != need {
            return Err(err(&format!("expected {need} bytes, got {}", bytes.len())));
        }
        let mut take = |count: usize| -> Vec<f64> {
            let v = bytes[pos..pos + 4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            pos += 4 * count;
            v
        };
        let mean_shape = DVector::from_vec(take(rows));
        let id_basis = DMatrix::from_vec(rows, kid, take(rows * kid));
        let exp_basis = DMatrix::from_vec(rows, kexp, take(rows * kexp));
        let mean_texture = DVector::from_vec(take(rows));
        let tex_basis = DMatrix::from_vec(rows, ktex, take(rows * ktex));
        let uv = has_uv.then(|| take(2 * n).chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect());
        let triangles = bytes[pos..]
            .chunks_exact(12)
            .map(|c| {
                let i = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap()) as usize;
                [i(0), i(1), i(2)]
            })
            .collect();
        MorphableModel::new(mean_shape, id_basis, exp_basis, mean_texture, tex_basis, triangles, uv)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&b)
    }
}

pub(crate) fn stack_to_points(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

#[cfg(test)]
pub(crate) fn points_to_stack(p: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(p.len() * 3, p.iter().flat_map(|v| [v.x, v.y, v.z]))
}

/// `S = mean + A_id * alpha_id + A_exp * alpha_exp`, on the template topology.
pub fn evaluate_shape(model: &MorphableModel, params: &ShapeParams) -> Result<Mesh> {
    if params.alpha_id.len() != model.id_dims() {
        return Err(Error::LengthMismatch { what: "alpha_id", expected: model.id_dims(), actual: params.alpha_id.len() });
    }
    if params.alpha_exp.len() != model.exp_dims() {
        return Err(Error::LengthMismatch {
            what: "alpha_exp",
            expected: model.exp_dims(),
            actual: params.alpha_exp.len(),
        });
    }
    let s = &model.mean_shape
        + &model.id_basis * DVector::from_column_slice(&params.alpha_id)
        + &model.exp_basis * DVector::from_column_slice(&params.alpha_exp);
    model.template_mesh(s.as_slice())
}

/// Per-vertex `gt - S(params)`: the displacement outside the linear span.
pub fn shape_residual(gt: &Mesh, model: &MorphableModel, params: &ShapeParams) -> Result<Vec<Vec3>> {
    let coarse = evaluate_shape(model, params)?;
    gt.check_same_topology(&coarse, "shape_residual")?;
    Ok(gt.vertices.iter().zip(&coarse.vertices).map(|(g, c)| g - c).collect())
}
