use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::{compute_vertex_normals, Mesh};

/// Phong lighting parameters. `amb` and `dir` hold the diagonals of the
/// ambient and directional light matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhongParams {
    pub amb: Vec3,
    pub dir: Vec3,
    pub l: Vec3,
    pub k_s: f64,
    pub ve: Vec3,
    pub nu: f64,
}

impl Default for PhongParams {
    fn default() -> Self {
        PhongParams {
            amb: Vec3::new(0.4, 0.4, 0.4),
            dir: Vec3::new(0.6, 0.6, 0.6),
            l: Vec3::z(),
            k_s: 0.0,
            ve: Vec3::z(),
            nu: 10.0,
        }
    }
}

impl PhongParams {
    pub fn validate(&self) -> Result<()> {
        if self.nu < 0.0 || !self.nu.is_finite() {
            return Err(Error::InvalidParameter(format!("shininess must be >= 0, got {}", self.nu)));
        }
        if self.k_s < 0.0 {
            return Err(Error::InvalidParameter(format!("specular reflectance must be >= 0, got {}", self.k_s)));
        }
        if self.amb.iter().chain(self.dir.iter()).any(|&d| d < 0.0) {
            return Err(Error::InvalidParameter("light intensities must be >= 0".into()));
        }
        if (self.l.norm() - 1.0).abs() > 1e-9 || (self.ve.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("light and view directions must be unit vectors".into()));
        }
        Ok(())
    }
}

/// Per-vertex Phong color from explicit normals.
///
/// `C = Amb*T + Dir*T*<n,l> + k_s*Dir*<r,ve>^nu` with `r = 2<n,l>n - l`,
/// both dot products clamped at zero and the result clamped to `[0, 1]`.
pub fn phong_shade_with_normals(normals: &[Vec3], texture: &[Vec3], light: &PhongParams) -> Result<Vec<Vec3>> {
    light.validate()?;
    if normals.len() != texture.len() {
        return Err(Error::LengthMismatch { what: "texture", expected: normals.len(), actual: texture.len() });
    }
    Ok(normals
        .iter()
        .zip(texture)
        .map(|(n, t)| {
            let nl = n.dot(&light.l);
            let r = 2.0 * nl * n - light.l;
            let diffuse = nl.max(0.0);
            let spec = light.k_s * r.dot(&light.ve).max(0.0).powf(light.nu);
            let c = light.amb.component_mul(t) + light.dir.component_mul(t) * diffuse + light.dir * spec;
            c.map(|x| x.clamp(0.0, 1.0))
        })
        .collect())
}

/// Per-vertex Phong color using the mesh's area-weighted normals.
pub fn phong_shade(mesh: &Mesh, texture: &[Vec3], light: &PhongParams) -> Result<Vec<Vec3>> {
    if texture.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch { what: "texture", expected: mesh.vertex_count(), actual: texture.len() });
    }
    let normals = compute_vertex_normals(mesh)?;
    phong_shade_with_normals(&normals.normals, texture, light)
}
