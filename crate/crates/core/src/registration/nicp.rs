//! Optimal-step non-rigid ICP with edge-landmark and contour-curve terms.
//!
//! Unknowns are one 4x3 affine `X_i` per vertex acting on normalized
//! coordinates `[(v - c) / s, 1]` (`c` the template centroid, `s` its RMS
//! radius), so the stiffness is independent of where the face sits in the
//! image. The three output columns decouple: x and y share one system that
//! includes the 2D terms, z gets the 3D terms only.

use log::debug;
use nalgebra::{DMatrix, Matrix3x4, Matrix4x3};
use serde::{Deserialize, Serialize};

use super::{backproject_depth, closest_on_polyline, select_contour_vertices, LandmarkSet, PerVertexAffine, RgbdFrame};
use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};
use crate::mesh::{vertex_normals_or, Mesh};
use crate::morphable::CameraPose;
use crate::par::Exec;
use crate::spatial::PointIndex;
use crate::sparse::NormalEquations;

/// Tangent-plane feet farther than this from their cloud point fall back
/// to the point itself.
const FOOT_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NicpConfig {
    /// Descending stiffness levels.
    pub stiffness: Vec<f64>,
    /// Correspondence/solve rounds per stiffness level.
    pub inner_rounds: usize,
    pub w_data: f64,
    pub w_edge: f64,
    pub w_cont: f64,
    /// Closest-point pairs farther than this (mm) are rejected.
    pub max_distance: f64,
    /// Pairs whose normals differ by more than this (degrees) are rejected.
    pub max_normal_angle: f64,
    /// Weight of the translation row in the stiffness term.
    pub gamma: f64,
    /// Proximal weight pulling each solve toward the previous iterate.
    pub proximal: f64,
}

impl Default for NicpConfig {
    fn default() -> Self {
        NicpConfig {
            stiffness: vec![50.0, 20.0, 5.0, 2.0, 1.0],
            inner_rounds: 3,
            w_data: 1.0,
            w_edge: 5.0,
            w_cont: 2.0,
            max_distance: 10.0,
            max_normal_angle: 60.0,
            gamma: 1.0,
            proximal: 1e-6,
        }
    }
}

impl NicpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stiffness.is_empty() || self.stiffness.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("stiffness schedule must be a nonempty list of positive values".into()));
        }
        if self.stiffness.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("stiffness schedule must be descending".into()));
        }
        if [self.w_data, self.w_edge, self.w_cont, self.gamma, self.proximal].iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("registration weights must be nonnegative".into()));
        }
        if self.inner_rounds == 0 {
            return Err(Error::Config("inner_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Energies in mm^2 around one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub level: usize,
    pub stiffness: f64,
    pub round: usize,
    /// Total energy of the previous iterate under the new correspondences.
    pub energy_before: f64,
    /// Total energy after the solve (equal to `energy_before` if the step
    /// was rejected).
    pub energy_after: f64,
    pub data: f64,
    pub smooth: f64,
    pub edge: f64,
    pub contour: f64,
    pub accepted_pairs: usize,
    /// Pairs whose closest cloud point lies on the depth border.
    pub rejected_boundary: usize,
    pub rejected_distance: usize,
    pub rejected_normal: usize,
    /// Vertices that kept their previous pair because the new one was worse.
    pub retained_pairs: usize,
    pub contour_vertices: usize,
    pub step_accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub config: NicpConfig,
    pub iterations: Vec<IterationRecord>,
    /// Mean distance of accepted data pairs at the end (mm).
    pub final_data_residual: f64,
    /// Mean 2D edge-landmark reprojection error at the end (px).
    pub final_edge_residual: f64,
    pub final_contour_residual: f64,
}

impl RegistrationReport {
    /// True if the energy never increases between consecutive solves that
    /// share a stiffness level.
    pub fn is_monotone(&self) -> bool {
        self.iterations.windows(2).all(|w| w[0].level != w[1].level || w[1].energy_after <= w[0].energy_after)
            && self.iterations.iter().all(|r| r.energy_after <= r.energy_before)
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub registered: Mesh,
    pub transforms: PerVertexAffine,
    pub report: RegistrationReport,
}

#[derive(Clone, Copy)]
struct Pair {
    target: Vec3,
    accepted: bool,
}

struct Frame {
    c: Vec3,
    s: f64,
}

impl Frame {
    fn to_norm(&self, v: &Vec3) -> Vec3 {
        (v - self.c) / self.s
    }

    fn to_norm2(&self, p: &Vec2) -> Vec2 {
        (p - self.c.xy()) / self.s
    }

    fn from_norm(&self, v: &Vec3) -> Vec3 {
        v * self.s + self.c
    }
}

struct Problem<'a> {
    hat: Vec<[f64; 4]>,
    edges: Vec<(usize, usize)>,
    landmarks: Vec<(usize, Vec2)>,
    cfg: &'a NicpConfig,
    tau: f64,
}

#[derive(Clone, Copy)]
struct Energy {
    data: f64,
    smooth: f64,
    edge: f64,
    contour: f64,
}

impl Energy {
    fn total(&self) -> f64 {
        self.data + self.smooth + self.edge + self.contour
    }
}

fn transform(hat: &[f64; 4], x: &Matrix4x3<f64>) -> Vec3 {
    let row = nalgebra::RowVector4::from_row_slice(hat);
    (row * x).transpose()
}

impl Problem<'_> {
    fn energy(&self, xs: &[Matrix4x3<f64>], alpha: f64, pairs: &[Pair], contour: &[(usize, Vec2)]) -> Energy {
        let mut data = 0.0;
        for (i, p) in pairs.iter().enumerate() {
            data += if p.accepted { (transform(&self.hat[i], &xs[i]) - p.target).norm_squared() } else { self.tau * self.tau };
        }
        let g = [1.0, 1.0, 1.0, self.cfg.gamma * self.cfg.gamma];
        let mut smooth = 0.0;
        for &(i, j) in &self.edges {
            let d = xs[i] - xs[j];
            for r in 0..4 {
                smooth += g[r] * d.row(r).norm_squared();
            }
        }
        let two_d = |list: &[(usize, Vec2)]| -> f64 {
            list.iter().map(|(k, p)| (transform(&self.hat[*k], &xs[*k]).xy() - p).norm_squared()).sum()
        };
        Energy {
            data: self.cfg.w_data * data,
            smooth: alpha * smooth,
            edge: self.cfg.w_edge * two_d(&self.landmarks),
            contour: self.cfg.w_cont * two_d(contour),
        }
    }

    fn solve(
        &self,
        xs: &[Matrix4x3<f64>],
        alpha: f64,
        pairs: &[Pair],
        contour: &[(usize, Vec2)],
        iteration: usize,
    ) -> Result<Vec<Matrix4x3<f64>>> {
        let n = xs.len();
        let mut sys_xy = NormalEquations::new(4 * n, 2);
        let mut sys_z = NormalEquations::new(4 * n, 1);
        let row = |i: usize| -> [(usize, f64); 4] {
            let h = self.hat[i];
            [(4 * i, h[0]), (4 * i + 1, h[1]), (4 * i + 2, h[2]), (4 * i + 3, h[3])]
        };
        for (i, p) in pairs.iter().enumerate() {
            if p.accepted {
                sys_xy.add_row(&row(i), &[p.target.x, p.target.y], self.cfg.w_data);
                sys_z.add_row(&row(i), &[p.target.z], self.cfg.w_data);
            }
        }
        let g = [1.0, 1.0, 1.0, self.cfg.gamma * self.cfg.gamma];
        for &(i, j) in &self.edges {
            for r in 0..4 {
                sys_xy.add_difference(4 * i + r, 4 * j + r, &[0.0, 0.0], alpha * g[r]);
                sys_z.add_difference(4 * i + r, 4 * j + r, &[0.0], alpha * g[r]);
            }
        }
        for (k, p) in &self.landmarks {
            sys_xy.add_row(&row(*k), &[p.x, p.y], self.cfg.w_edge);
        }
        for (k, p) in contour {
            sys_xy.add_row(&row(*k), &[p.x, p.y], self.cfg.w_cont);
        }
        for (i, x) in xs.iter().enumerate() {
            for r in 0..4 {
                sys_xy.add_row(&[(4 * i + r, 1.0)], &[x[(r, 0)], x[(r, 1)]], self.cfg.proximal);
                sys_z.add_row(&[(4 * i + r, 1.0)], &[x[(r, 2)]], self.cfg.proximal);
            }
        }
        let fail = |_| Error::SingularSystem { iteration };
        let xy: DMatrix<f64> = sys_xy.solve().map_err(fail)?;
        let z: DMatrix<f64> = sys_z.solve().map_err(fail)?;
        Ok((0..n)
            .map(|i| {
                let mut m = Matrix4x3::zeros();
                for r in 0..4 {
                    m[(r, 0)] = xy[(4 * i + r, 0)];
                    m[(r, 1)] = xy[(4 * i + r, 1)];
                    m[(r, 2)] = z[(4 * i + r, 0)];
                }
                m
            })
            .collect())
    }
}

/// Registers `template` (already roughly posed in the frame's image
/// coordinates) to the RGB-D frame.
///
/// `contour_band` lists the template vertices eligible as face-contour
/// vertices; the contour set is re-selected at every stiffness level.
pub fn nonrigid_icp(
    template: &Mesh,
    contour_band: &[usize],
    frame: &RgbdFrame,
    landmarks: &LandmarkSet,
    config: &NicpConfig,
) -> Result<Registration> {
    nonrigid_icp_with(template, contour_band, frame, landmarks, config, Exec::default())
}

pub fn nonrigid_icp_with(
    template: &Mesh,
    contour_band: &[usize],
    frame: &RgbdFrame,
    landmarks: &LandmarkSet,
    config: &NicpConfig,
    exec: Exec,
) -> Result<Registration> {
    config.validate()?;
    landmarks.validate(template.vertex_count())?;
    let n = template.vertex_count();
    if n == 0 {
        return Err(Error::Degenerate("empty template".into()));
    }
    let cloud = backproject_depth(frame)?;
    let targets = &cloud.points;
    let (lo, hi) = template.vertices.iter().fold((Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)), |(lo, hi), v| {
        (lo.inf(&v.xy()), hi.sup(&v.xy()))
    });
    if !cloud.normals.iter().zip(targets).any(|(n, p)| n.is_some() && p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y) {
        return Err(Error::NoValidDepth);
    }
    let index = PointIndex::new(targets);

    let c = template.centroid();
    let s = (template.vertices.iter().map(|v| (v - c).norm_squared()).sum::<f64>() / n as f64).sqrt().max(1e-9);
    let fr = Frame { c, s };
    let curve: Vec<Vec2> = landmarks.contour_points().iter().map(|p| fr.to_norm2(p)).collect();
    let problem = Problem {
        hat: template.vertices.iter().map(|v| {
            let h = fr.to_norm(v);
            [h.x, h.y, h.z, 1.0]
        }).collect(),
        edges: template.edges(),
        landmarks: landmarks.edge.iter().map(|l| (l.vid, fr.to_norm2(&Vec2::new(l.xy[0], l.xy[1])))).collect(),
        cfg: config,
        tau: config.max_distance / s,
    };
    let cos_max = config.max_normal_angle.to_radians().cos();
    let mut xs: Vec<Matrix4x3<f64>> = vec![Matrix4x3::identity(); n];
    let mut pairs: Vec<Option<Pair>> = vec![None; n];
    let mut records = Vec::new();
    let positions = |xs: &[Matrix4x3<f64>]| -> Vec<Vec3> { (0..n).map(|i| fr.from_norm(&transform(&problem.hat[i], &xs[i]))).collect() };

    for (level, &alpha) in config.stiffness.iter().enumerate() {
        let current = template.with_positions(positions(&xs))?;
        let contour_ids = select_contour_vertices(&current, &CameraPose::identity(), Some(contour_band));
        let mut contour: Vec<(usize, Vec2)> = Vec::new();
        for round in 0..config.inner_rounds {
            let iteration = records.len();
            let pos = positions(&xs);
            let mesh = template.with_positions(pos.clone())?;
            let normals = vertex_normals_or(&mesh, Vec3::z());

            // Data correspondences, keeping the old pair where it is cheaper.
            let nearest = index.nearest_all(&pos, exec);
            let (mut acc, mut rej_b, mut rej_d, mut rej_n, mut kept) = (0, 0, 0, 0, 0);
            let tau2 = config.max_distance * config.max_distance;
            for i in 0..n {
                let (j, _) = nearest[i].expect("nonempty index");
                let p = targets[j];
                // Points without a normal sit on the cloud border.
                let (foot, normal_ok) = match cloud.normals[j] {
                    Some(pn) => {
                        let foot = pos[i] - (pos[i] - p).dot(&pn) * pn;
                        (if (foot - p).norm() > FOOT_RADIUS { p } else { foot }, Some(normals[i].dot(&pn) >= cos_max))
                    }
                    None => (p, None),
                };
                let d = (pos[i] - foot).norm();
                let accepted = d <= config.max_distance && normal_ok == Some(true);
                if !accepted {
                    if normal_ok.is_none() {
                        rej_b += 1;
                    } else if d > config.max_distance {
                        rej_d += 1;
                    } else {
                        rej_n += 1;
                    }
                }
                let cost_new = if accepted { d * d } else { tau2 };
                let candidate = Pair { target: fr.to_norm(&foot), accepted };
                pairs[i] = Some(match pairs[i] {
                    Some(old) => {
                        let cost_old = if old.accepted { (pos[i] - fr.from_norm(&old.target)).norm_squared() } else { tau2 };
                        if cost_old < cost_new {
                            kept += 1;
                            old
                        } else {
                            candidate
                        }
                    }
                    None => candidate,
                });
                if pairs[i].is_some_and(|p| p.accepted) {
                    acc += 1;
                }
            }

            // Contour correspondences on the fixed per-level vertex set.
            let fresh: Vec<(usize, Vec2)> = contour_ids
                .iter()
                .map(|&k| {
                    let p = fr.to_norm2(&pos[k].xy());
                    (k, closest_on_polyline(p, &curve))
                })
                .collect();
            contour = if contour.is_empty() {
                fresh
            } else {
                fresh
                    .into_iter()
                    .zip(&contour)
                    .map(|((k, q), &(_, q_old))| {
                        let p = fr.to_norm2(&pos[k].xy());
                        if (p - q_old).norm_squared() < (p - q).norm_squared() { (k, q_old) } else { (k, q) }
                    })
                    .collect()
            };

            let current_pairs: Vec<Pair> = pairs.iter().map(|p| p.expect("set above")).collect();
            let before = problem.energy(&xs, alpha, &current_pairs, &contour);
            let next = problem.solve(&xs, alpha, &current_pairs, &contour, iteration)?;
            let after = problem.energy(&next, alpha, &current_pairs, &contour);
            let step_accepted = after.total() <= before.total();
            let kept_energy = if step_accepted {
                xs = next;
                after
            } else {
                before
            };
            let s2 = s * s;
            let rec = IterationRecord {
                iteration,
                level,
                stiffness: alpha,
                round,
                energy_before: before.total() * s2,
                energy_after: kept_energy.total() * s2,
                data: kept_energy.data * s2,
                smooth: kept_energy.smooth * s2,
                edge: kept_energy.edge * s2,
                contour: kept_energy.contour * s2,
                accepted_pairs: acc,
                rejected_boundary: rej_b,
                rejected_distance: rej_d,
                rejected_normal: rej_n,
                retained_pairs: kept,
                contour_vertices: contour.len(),
                step_accepted,
            };
            debug!(
                "nicp level {level} round {round}: energy {:.4} -> {:.4}, accepted {acc}, gated {rej_b}+{rej_d}+{rej_n}, retained {kept}",
                rec.energy_before, rec.energy_after
            );
            records.push(rec);
        }
    }

    let pos = positions(&xs);
    let registered = template.with_positions(pos.clone())?;
    let transforms = PerVertexAffine {
        transforms: xs
            .iter()
            .map(|x| {
                let l = x.fixed_view::<3, 3>(0, 0).transpose();
                let t = x.row(3).transpose() * s + c - l * c;
                let mut m = Matrix3x4::zeros();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&l);
                m.set_column(3, &t);
                m
            })
            .collect(),
    };
    let accepted: Vec<f64> = pairs
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.filter(|p| p.accepted).map(|p| (pos[i] - fr.from_norm(&p.target)).norm()))
        .collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let edge_res: Vec<f64> = landmarks.edge.iter().map(|l| (pos[l.vid].xy() - Vec2::new(l.xy[0], l.xy[1])).norm()).collect();
    let raw_curve = landmarks.contour_points();
    let final_ids = select_contour_vertices(&registered, &CameraPose::identity(), Some(contour_band));
    let cont_res: Vec<f64> = final_ids.iter().map(|&k| (pos[k].xy() - closest_on_polyline(pos[k].xy(), &raw_curve)).norm()).collect();
    Ok(Registration {
        registered,
        transforms,
        report: RegistrationReport {
            config: config.clone(),
            iterations: records,
            final_data_residual: mean(&accepted),
            final_edge_residual: mean(&edge_res),
            final_contour_residual: mean(&cont_res),
        },
    })
}

/// Edge-landmark energy of per-vertex affines (first two rows only).
pub fn edge_energy(template: &Mesh, transforms: &PerVertexAffine, landmarks: &LandmarkSet) -> f64 {
    landmarks
        .edge
        .iter()
        .map(|l| {
            let m = &transforms.transforms[l.vid];
            let v = template.vertices[l.vid].push(1.0);
            let x = m.row(0).dot(&v.transpose());
            let y = m.row(1).dot(&v.transpose());
            (x - l.xy[0]).powi(2) + (y - l.xy[1]).powi(2)
        })
        .sum()
}

/// Contour-curve energy of per-vertex affines for the given contour vertices.
pub fn contour_energy(template: &Mesh, transforms: &PerVertexAffine, contour_vertices: &[usize], curve: &[Vec2]) -> f64 {
    contour_vertices
        .iter()
        .map(|&k| {
            let m = &transforms.transforms[k];
            let v = template.vertices[k].push(1.0);
            let p = Vec2::new(m.row(0).dot(&v.transpose()), m.row(1).dot(&v.transpose()));
            (p - closest_on_polyline(p, curve)).norm_squared()
        })
        .sum()
}
