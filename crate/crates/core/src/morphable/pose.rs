use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::mesh::Mesh;

/// Weak-perspective camera: `x -> f * R * x + t3d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub f: f64,
    pub r: Mat3,
    pub t3d: Vec3,
}

/// JSON shape of a pose: rotation as 9 row-major entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub f: f64,
    pub r: [f64; 9],
    pub t3d: [f64; 3],
}

impl CameraPose {
    pub fn new(f: f64, r: Mat3, t3d: Vec3) -> Result<Self> {
        let pose = CameraPose { f, r, t3d };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        CameraPose { f: 1.0, r: Mat3::identity(), t3d: Vec3::zeros() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidParameter(format!("pose scale must be positive, got {}", self.f)));
        }
        let ortho = (self.r.transpose() * self.r - Mat3::identity()).abs().max();
        if ortho > 1e-9 || (self.r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("pose rotation is not a proper rotation".into()));
        }
        Ok(())
    }

    /// Rotation by `r` about the fixed point `center`, unit scale.
    pub fn about(center: &Vec3, r: Mat3) -> Self {
        CameraPose { f: 1.0, r, t3d: center - r * center }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &CameraPose) -> CameraPose {
        CameraPose { f: self.f * first.f, r: self.r * first.r, t3d: self.f * (self.r * first.t3d) + self.t3d }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.r.transpose();
        CameraPose { f: 1.0 / self.f, r: rt, t3d: -(rt * self.t3d) / self.f }
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.f * (self.r * v) + self.t3d
    }

    /// Inverse map `(1/f) R^T (x - t3d)`.
    #[inline]
    pub fn unapply(&self, x: &Vec3) -> Vec3 {
        self.r.transpose() * (x - self.t3d) / self.f
    }

    pub fn to_record(&self) -> PoseRecord {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[i * 3 + j] = self.r[(i, j)];
            }
        }
        PoseRecord { f: self.f, r, t3d: [self.t3d.x, self.t3d.y, self.t3d.z] }
    }

    pub fn from_record(rec: &PoseRecord) -> Result<Self> {
        CameraPose::new(rec.f, Matrix3::from_row_slice(&rec.r), Vec3::from(rec.t3d))
    }
}

/// Applies the pose to every vertex.
pub fn rigid_project(mesh: &Mesh, pose: &CameraPose) -> Mesh {
    mesh.map_positions(|v| pose.apply(v))
}

/// Closed-form weighted similarity alignment: the `(f, R, t)` minimizing
/// `sum_k w_k |f R s_k + t - t_k|^2`.
///
/// Cross-covariance SVD with reflection correction; the scale comes from the
/// ratio of the corrected singular-value trace to the source variance.
pub fn fit_rigid(source: &[Vec3], target: &[Vec3], weights: Option<&[f64]>) -> Result<CameraPose> {
    if source.len() != target.len() {
        return Err(Error::LengthMismatch { what: "fit_rigid target", expected: source.len(), actual: target.len() });
    }
    if let Some(w) = weights {
        if w.len() != source.len() {
            return Err(Error::LengthMismatch { what: "fit_rigid weights", expected: source.len(), actual: w.len() });
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("fit_rigid weights must be nonnegative".into()));
        }
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);
    let active = (0..source.len()).filter(|&k| weight(k) > 0.0).count();
    if active < 3 {
        return Err(Error::Degenerate(format!("need at least 3 weighted point pairs, got {active}")));
    }
    let total: f64 = (0..source.len()).map(weight).sum();
    let mut mu_s = Vec3::zeros();
    let mut mu_t = Vec3::zeros();
    for k in 0..source.len() {
        mu_s += weight(k) * source[k];
        mu_t += weight(k) * target[k];
    }
    mu_s /= total;
    mu_t /= total;

    let mut cov = Mat3::zeros();
    let mut var_s = 0.0;
    for k in 0..source.len() {
        let w = weight(k);
        let ds = source[k] - mu_s;
        let dt = target[k] - mu_t;
        cov += w * dt * ds.transpose();
        var_s += w * ds.norm_squared();
    }
    cov /= total;
    var_s /= total;

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv = svd.singular_values;
    // Singular values from nalgebra are sorted descending.
    let scale_ref = sv[0].max(var_s);
    if var_s <= 1e-300 || sv[1] <= 1e-12 * scale_ref {
        return Err(Error::Degenerate("point configuration is collinear or rank deficient".into()));
    }
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[2] = -1.0;
    }
    let r = u * Mat3::from_diagonal(&d) * v_t;
    let f = sv.component_mul(&d).sum() / var_s;
    if !(f > 0.0) {
        return Err(Error::Degenerate("non-positive similarity scale".into()));
    }
    let t = mu_t - f * (r * mu_s);
    Ok(CameraPose { f, r, t3d: t })
}

/// Splits a registered mesh into a canonical-pose shape and a pose.
///
/// The pose is the similarity fit from the template positions to the
/// registered positions; the shape is the registered mesh mapped back through
/// the inverse of that pose.
pub fn disentangle_rigid(registered: &Mesh, template: &Mesh) -> Result<(Mesh, CameraPose)> {
    registered.check_same_topology(template, "disentangle_rigid")?;
    let pose = fit_rigid(&template.vertices, &registered.vertices, None)?;
    let shape = registered.map_positions(|x| pose.unapply(x));
    Ok((shape, pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{rot_x, rot_y, rot_z};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect()
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        rot_z(rng.random_range(-3.1..3.1)) * rot_y(rng.random_range(-1.5..1.5)) * rot_x(rng.random_range(-3.1..3.1))
    }

    #[test]
    fn project_examples() {
        let m = Mesh::new(vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0)], vec![[0, 1, 2]]).unwrap();
        assert_eq!(rigid_project(&m, &CameraPose::identity()), m);
        let p = CameraPose::new(2.0, Mat3::identity(), Vec3::zeros()).unwrap();
        assert_eq!(rigid_project(&m, &p).vertices[0], Vec3::new(2.0, 2.0, 2.0));
        let p = CameraPose::new(1.0, rot_z(std::f64::consts::FRAC_PI_2), Vec3::new(10.0, 0.0, 0.0)).unwrap();
        assert!((rigid_project(&m, &p).vertices[1] - Vec3::new(10.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_validation() {
        assert!(CameraPose::new(0.0, Mat3::identity(), Vec3::zeros()).is_err());
        let mirror = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(CameraPose::new(1.0, mirror, Vec3::zeros()).is_err());
        let p = CameraPose::new(1.5, rot_y(0.4), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(CameraPose::from_record(&p.to_record()).unwrap(), p);
    }

    #[test]
    fn fit_identity_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = cloud(&mut rng, 20);
        let p = fit_rigid(&s, &s, None).unwrap();
        assert!((p.f - 1.0).abs() < 1e-10);
        assert!((p.r - Mat3::identity()).abs().max() < 1e-10);
        assert!(p.t3d.norm() < 1e-10);
        let t: Vec<Vec3> = s.iter().map(|x| 3.0 * x + Vec3::new(1.0, 2.0, 3.0)).collect();
        let p = fit_rigid(&s, &t, None).unwrap();
        assert!((p.f - 3.0).abs() < 1e-10);
        assert!((p.r - Mat3::identity()).abs().max() < 1e-10);
        assert!((p.t3d - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-9);
    }

    #[test]
    fn fit_recovers_noisy_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = cloud(&mut rng, 50);
            let truth = CameraPose::new(rng.random_range(0.5..3.0), random_rotation(&mut rng), Vec3::new(5.0, -3.0, 8.0)).unwrap();
            let t: Vec<Vec3> = s
                .iter()
                .map(|x| truth.apply(x) + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 1e-6)
                .collect();
            let p = fit_rigid(&s, &t, None).unwrap();
            assert!(crate::math::rotation_angle_between(&p.r, &truth.r) < 1e-4);
            assert!((p.f / truth.f - 1.0).abs() < 1e-4);
            assert!((p.t3d - truth.t3d).norm() < 1e-4);
        }
    }

    #[test]
    fn fit_rejects_degenerate() {
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_rigid(&line, &line, None), Err(Error::Degenerate(_))));
        let two = vec![Vec3::zeros(), Vec3::x()];
        assert!(fit_rigid(&two, &two, None).is_err());
        assert!(fit_rigid(&two, &line, None).is_err());
    }

    #[test]
    fn weights_select_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = cloud(&mut rng, 30);
        let truth = CameraPose::new(1.2, rot_x(0.3), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let mut t: Vec<Vec3> = s.iter().map(|x| truth.apply(x)).collect();
        let mut w = vec![1.0; 30];
        for k in 0..10 {
            t[k] += Vec3::new(100.0, -50.0, 20.0);
            w[k] = 0.0;
        }
        let p = fit_rigid(&s, &t, Some(&w)).unwrap();
        assert!((p.f - 1.2).abs() < 1e-9);
        assert!(crate::math::rotation_angle_between(&p.r, &truth.r) < 1e-9);
    }

    #[test]
    fn conjugation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let s = cloud(&mut rng, 25);
            let t: Vec<Vec3> = cloud(&mut rng, 25).iter().zip(&s).map(|(n, x)| 1.3 * (rot_y(0.7) * x) + 0.05 * n).collect();
            let q = random_rotation(&mut rng);
            let p0 = fit_rigid(&s, &t, None).unwrap();
            let qs: Vec<Vec3> = s.iter().map(|x| q * x).collect();
            let qt: Vec<Vec3> = t.iter().map(|x| q * x).collect();
            let p1 = fit_rigid(&qs, &qt, None).unwrap();
            assert!((p1.r - q * p0.r * q.transpose()).abs().max() < 1e-9);
            assert!((p1.f - p0.f).abs() < 1e-9);
            let res0: f64 = s.iter().zip(&t).map(|(a, b)| (p0.apply(a) - b).norm_squared()).sum();
            let res1: f64 = qs.iter().zip(&qt).map(|(a, b)| (p1.apply(a) - b).norm_squared()).sum();
            assert!((res0 - res1).abs() < 1e-7 * res0.max(1.0));
        }
    }
}
