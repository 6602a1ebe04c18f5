use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::imaging::{mean_abs_diff, Mask, RgbImage};
use crate::math::rot_x;
use crate::mesh::primitives::grid;
use crate::morphable::synth::{synthetic_face, SynthConfig, SyntheticFace};
use crate::morphable::{rigid_project, MorphableModel};
use crate::raster::{phong_shade, PhongParams};
use crate::scene::{background_gradient, image_pose, render_over};
use crate::template::Region;

const W: usize = 256;
const WALL: f64 = 250.0;

// Anchor-graph helpers

fn grid_graph(n: usize, depth: impl Fn(usize) -> Option<f64>, contour: impl Fn(usize) -> bool) -> AnchorGraph {
    let mut edges = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            if c + 1 < n {
                edges.push((i, i + 1));
            }
            if r + 1 < n {
                edges.push((i, i + n));
            }
        }
    }
    let positions = (0..n * n).map(|i| Vec2::new((i % n) as f64 * 10.0, (i / n) as f64 * 10.0)).collect();
    AnchorGraph::new(positions, (0..n * n).map(depth).collect(), (0..n * n).map(contour).collect(), edges).unwrap()
}

/// Dense least squares of explicit residual rows.
fn dense_lsq(rows: &[(Vec<(usize, f64)>, f64, f64)], n: usize) -> DVector<f64> {
    let mut a = DMatrix::zeros(rows.len(), n);
    let mut b = DVector::zeros(rows.len());
    for (r, (coeffs, rhs, w)) in rows.iter().enumerate() {
        for &(j, v) in coeffs {
            a[(r, j)] = v * w.sqrt();
        }
        b[r] = rhs * w.sqrt();
    }
    (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap()
}

fn gradient_inf_norm(rows: &[(Vec<(usize, f64)>, f64, f64)], x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    for (coeffs, rhs, w) in rows {
        let r: f64 = coeffs.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - rhs;
        for &(j, v) in coeffs {
            g[j] += 2.0 * w * r * v;
        }
    }
    g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn depth_rows(g: &AnchorGraph, w: f64) -> Vec<(Vec<(usize, f64)>, f64, f64)> {
    let mut rows: Vec<_> = g.depth.iter().enumerate().filter_map(|(i, d)| d.map(|d| (vec![(i, 1.0)], d, 1.0))).collect();
    rows.extend(g.edges.iter().map(|&(i, j)| (vec![(i, 1.0), (j, -1.0)], 0.0, w)));
    rows
}

#[test]
fn constant_background_depth_is_exact() {
    let g = grid_graph(5, |_| Some(37.5), |_| false);
    for d in solve_anchor_depths(&g, 1.0).unwrap() {
        assert!((d - 37.5).abs() < 1e-10);
    }
}

#[test]
fn hollow_anchor_takes_neighbour_average() {
    let g = grid_graph(3, |i| (i != 4).then_some(10.0), |_| false);
    let d = solve_anchor_depths(&g, 1.0).unwrap();
    assert!((d[4] - 10.0).abs() < 1e-10);
}

#[test]
fn depth_solve_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obs: Vec<Option<f64>> = (0..64).map(|_| (rng.random::<f64>() >= 0.3).then(|| rng.random_range(300.0..500.0))).collect();
    let g = grid_graph(8, |i| obs[i], |_| false);
    for w in [0.3, 1.0, 4.0] {
        let x = solve_anchor_depths(&g, w).unwrap();
        let rows = depth_rows(&g, w);
        let dense = dense_lsq(&rows, 64);
        for (a, b) in x.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(gradient_inf_norm(&rows, &x) < 1e-6);
    }
}

#[test]
fn disconnected_graph_is_rejected() {
    let g = AnchorGraph::new(
        vec![Vec2::zeros(), Vec2::x(), Vec2::y(), Vec2::new(1.0, 1.0)],
        vec![Some(1.0); 4],
        vec![true, false, true, false],
        vec![(0, 1), (2, 3)],
    )
    .unwrap();
    assert!(matches!(solve_anchor_depths(&g, 1.0), Err(Error::DisconnectedGraph { components: 2 })));
    let c = g.contour_positions();
    assert!(matches!(warp_background_anchors(&g, &c, &c), Err(Error::DisconnectedGraph { .. })));
}

#[test]
fn bad_edges_are_rejected() {
    assert!(AnchorGraph::new(vec![Vec2::zeros(); 2], vec![None; 2], vec![false; 2], vec![(0, 2)]).is_err());
    assert!(AnchorGraph::new(vec![Vec2::zeros(); 2], vec![None; 2], vec![false; 2], vec![(1, 1)]).is_err());
}

fn ring_contour(i: usize) -> bool {
    let (r, c) = (i / 10, i % 10);
    (3..=6).contains(&r) && (3..=6).contains(&c) && !((4..=5).contains(&r) && (4..=5).contains(&c))
}

#[test]
fn unchanged_contour_leaves_anchors() {
    let g = grid_graph(10, |_| None, ring_contour);
    let c = g.contour_positions();
    let out = warp_background_anchors(&g, &c, &c).unwrap();
    for (a, b) in out.positions.iter().zip(&g.positions) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn translated_contour_translates_everything() {
    let g = grid_graph(10, |_| None, ring_contour);
    let c = g.contour_positions();
    let t: Vec<Vec2> = c.iter().map(|p| p + Vec2::new(5.0, 0.0)).collect();
    let out = warp_background_anchors(&g, &c, &t).unwrap();
    for (a, b) in out.positions.iter().zip(&g.positions) {
        assert!((a - b - Vec2::new(5.0, 0.0)).norm() < 1e-9);
    }
}

#[test]
fn warp_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = grid_graph(10, |_| None, ring_contour);
    let c = g.contour_positions();
    let t: Vec<Vec2> = c.iter().map(|p| p + Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
    let out = warp_background_anchors(&g, &c, &t).unwrap();
    let flagged: Vec<usize> = (0..100).filter(|&i| g.contour[i]).collect();
    for axis in 0..2 {
        let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = flagged.iter().zip(&t).map(|(&i, p)| (vec![(i, 1.0)], p[axis], 1.0)).collect();
        rows.extend(g.edges.iter().map(|&(i, j)| (vec![(i, 1.0), (j, -1.0)], g.positions[i][axis] - g.positions[j][axis], 1.0)));
        let dense = dense_lsq(&rows, 100);
        let x: Vec<f64> = out.positions.iter().map(|p| p[axis]).collect();
        for (a, b) in x.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(gradient_inf_norm(&rows, &x) < 1e-6);
    }
}

#[test]
fn warp_checks_contour_lists() {
    let g = grid_graph(10, |_| None, ring_contour);
    let c = g.contour_positions();
    assert!(matches!(warp_background_anchors(&g, &c[1..], &c[1..]), Err(Error::LengthMismatch { .. })));
    let mut moved = c.clone();
    moved[0].x += 1.0;
    assert!(matches!(warp_background_anchors(&g, &moved, &c), Err(Error::InvalidParameter(_))));
}

// Poisson editing

fn smooth_image(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    RgbImage::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        Vec3::new(a * (3.0 * u).sin(), b * (2.0 * v).cos() + 0.5 * u * v, c * (u - v).powi(2))
    })
}

#[test]
fn poisson_identical_inputs_are_unchanged() {
    let img = smooth_image(20, 20, 1);
    let mask = Mask::from_fn(20, 20, |x, y| (4..15).contains(&x) && (5..16).contains(&y));
    let out = poisson_blend(&img, &img, &mask).unwrap();
    for (a, b) in out.data().iter().zip(img.data()) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn poisson_constant_source_gives_target() {
    let t = Vec3::new(0.2, 0.4, 0.6);
    let out = poisson_blend(&RgbImage::filled(20, 20, t), &RgbImage::filled(20, 20, Vec3::new(0.9, 0.1, 0.0)), &Mask::filled(20, 20, true)).unwrap();
    assert!(out.data().iter().all(|c| (c - t).norm() < 1e-10));
}

#[test]
fn poisson_empty_mask_returns_target() {
    let t = smooth_image(8, 8, 2);
    assert_eq!(poisson_blend(&t, &smooth_image(8, 8, 3), &Mask::filled(8, 8, false)).unwrap(), t);
}

#[test]
fn poisson_matches_dense_solve() {
    let (w, h) = (24, 24);
    let (t, s) = (smooth_image(w, h, 5), smooth_image(w, h, 6));
    let mask = Mask::from_fn(w, h, |x, y| (4..20).contains(&x) && (4..20).contains(&y));
    let out = poisson_blend(&t, &s, &mask).unwrap();
    // 4 f_p - sum_{q in mask} f_q = sum_{q not in mask} t_q + sum_q (s_p - s_q)
    let idx = |x: usize, y: usize| (y - 4) * 16 + (x - 4);
    for c in 0..3 {
        let mut a = DMatrix::zeros(256, 256);
        let mut b = DVector::zeros(256);
        for y in 4..20 {
            for x in 4..20 {
                let p = idx(x, y);
                a[(p, p)] = 4.0;
                for (qx, qy) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                    b[p] += s.get(x, y)[c] - s.get(qx, qy)[c];
                    if *mask.get(qx, qy) {
                        a[(p, idx(qx, qy))] = -1.0;
                    } else {
                        b[p] += t.get(qx, qy)[c];
                    }
                }
            }
        }
        let f = a.lu().solve(&b).unwrap();
        for y in 4..20 {
            for x in 4..20 {
                assert!((out.get(x, y)[c] - f[idx(x, y)]).abs() < 1e-6);
            }
        }
    }
    assert_eq!(out.get(2, 2), t.get(2, 2));
}

#[test]
fn fill_holes_row_then_column() {
    let v = vec![0, 1, 2, 3, 4, 5, 6, 7, 8];
    let covered = vec![false, true, false, false, false, false, false, false, true];
    // Row 1 has nothing: the column pass ties and takes row 0.
    assert_eq!(fill_holes(&v, &covered, 3, 3).unwrap(), vec![1, 1, 1, 1, 1, 1, 8, 8, 8]);
    assert!(fill_holes(&v, &[false; 9], 3, 3).is_none());
}

// Face fixtures

struct Scene {
    face: SyntheticFace,
    mesh: Mesh,
    frame: RgbdFrame,
    tex: TextureParams,
}

fn true_tex(model: &MorphableModel, seed: u64) -> TextureParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TextureParams {
        beta: (0..model.tex_dims()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        phong: PhongParams {
            amb: Vec3::new(0.35, 0.4, 0.45),
            dir: Vec3::new(0.55, 0.5, 0.45),
            l: Vec3::new(0.2, -0.3, 1.0).normalize(),
            k_s: 0.0,
            ..Default::default()
        },
    }
}

fn scene(pitch: f64, yaw: f64) -> Scene {
    deep_scene(pitch, yaw, 1.0)
}

/// The synthetic face with its depth relief multiplied by `depth_scale`.
fn deep_scene(pitch: f64, yaw: f64, depth_scale: f64) -> Scene {
    let face = synthetic_face(&SynthConfig { grid: 24, ..Default::default() }, 2);
    let canonical = face.template.mesh.map_positions(|v| Vec3::new(v.x, v.y, v.z * depth_scale));
    let mesh = rigid_project(&canonical, &image_pose(&canonical, W, W, pitch, yaw, 500.0));
    let tex = true_tex(&face.model, 9);
    let colors = tex.shade(&face.model, &mesh).unwrap();
    let (color, buf) = render_over(&mesh, &colors, &background_gradient(W, W)).unwrap();
    let depth = crate::imaging::GrayImage::from_fn(W, W, |x, y| {
        let i = y * W + x;
        if buf.tri_index[i] == crate::raster::BACKGROUND { WALL } else { buf.depth[i] }
    });
    let frame = RgbdFrame::new(color, depth, Mask::filled(W, W, true)).unwrap();
    Scene { face, mesh, frame, tex }
}

fn face_mask(mesh: &Mesh) -> Mask {
    let buf = crate::raster::rasterize(mesh, &CameraPose::identity(), &vec![Vec3::zeros(); mesh.vertex_count()], W, W).unwrap();
    Mask::from_vec(W, W, buf.tri_index.iter().map(|&t| t != crate::raster::BACKGROUND).collect()).unwrap()
}

#[test]
fn completed_depth_keeps_face_and_wall() {
    let s = scene(0.0, 0.0);
    let done = complete_depth(&s.frame, &s.mesh, 16.0, DEPTH_SMOOTH_WEIGHT).unwrap();
    let face = face_mask(&s.mesh);
    let mut far = 0;
    for y in 0..W {
        for x in 0..W {
            let d = *done.depth.get(x, y);
            assert!(d.is_finite());
            if *face.get(x, y) {
                assert!((d - s.frame.depth.get(x, y)).abs() < 1e-6);
            } else if (x < 16 || x >= W - 16) && (y < 16 || y >= W - 16) {
                // Corners are far from the face: close to the wall.
                assert!((d - WALL).abs() < 5.0, "corner depth {d}");
                far += 1;
            }
        }
    }
    assert!(far > 0);
    assert!(done.graph.contour.iter().any(|&c| c));
}

fn fit_scene() -> (SyntheticFace, Mesh, RgbImage, TextureParams) {
    let s = scene(0.0, 0.0);
    (s.face, s.mesh, s.frame.color, s.tex)
}

#[test]
fn texture_fit_recovers_synthesis() {
    let (face, mesh, image, truth) = fit_scene();
    let fit = fit_texture(&image, &mesh, &face.model, &TextureFitConfig::default()).unwrap();
    let num: f64 = fit.params.beta.iter().zip(&truth.beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = truth.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num / den < 1e-3, "relative beta error {}", num / den);
    assert!(fit.residual < 1e-4, "residual {}", fit.residual);
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn mean_texture_under_ambient_is_a_fixed_point() {
    let (face, mesh, _, _) = fit_scene();
    let tex = TextureParams {
        beta: vec![0.0; face.model.tex_dims()],
        phong: PhongParams { amb: Vec3::repeat(1.0), dir: Vec3::zeros(), ..Default::default() },
    };
    let colors = tex.shade(&face.model, &mesh).unwrap();
    let (image, _) = render_over(&mesh, &colors, &background_gradient(W, W)).unwrap();
    let fit = fit_texture(&image, &mesh, &face.model, &TextureFitConfig::default()).unwrap();
    assert!(fit.residual < 1e-6, "residual {}", fit.residual);
    assert!(fit.params.beta.iter().all(|b| b.abs() < 1e-3), "{:?}", fit.params.beta);
}

#[test]
fn texture_residual_is_zero_at_truth() {
    let (face, mesh, image, truth) = fit_scene();
    assert!(texture_residual(&image, &mesh, &face.model, &truth).unwrap() < 1e-20);
}

// Shading adjustment

fn plane_tex(dir: f64) -> TextureParams {
    TextureParams {
        beta: vec![],
        phong: PhongParams { amb: Vec3::repeat(0.2), dir: Vec3::repeat(dir), l: Vec3::z(), k_s: 0.0, ..Default::default() },
    }
}

fn albedo(n: usize) -> Vec<Vec3> {
    (0..n).map(|i| Vec3::new(0.3 + 0.01 * (i % 7) as f64, 0.5, 0.6)).collect()
}

#[test]
fn same_shape_gives_source_shading() {
    let (face, mesh, _, truth) = fit_scene();
    let t = face.model.evaluate_texture(&truth.beta).unwrap();
    assert_eq!(adjust_shading(&t, &mesh, &mesh, &truth).unwrap(), phong_shade(&mesh, &t, &truth.phong).unwrap());
}

#[test]
fn ambient_only_ignores_target_shape() {
    let p = grid(5, 5, 0.0, 0.0, 10.0, 10.0);
    let bent = p.map_positions(|v| Vec3::new(v.x, v.y, 0.1 * v.x * v.x));
    let a = albedo(p.vertex_count());
    let tex = plane_tex(0.0);
    assert_eq!(adjust_shading(&a, &p, &p, &tex).unwrap(), adjust_shading(&a, &p, &bent, &tex).unwrap());
}

#[test]
fn tilting_away_from_light_darkens() {
    let p = grid(5, 5, -5.0, -5.0, 10.0, 10.0);
    let tilted = p.rotated(&rot_x(0.5));
    let a = albedo(p.vertex_count());
    let tex = plane_tex(1.0);
    let flat = adjust_shading(&a, &p, &p, &tex).unwrap();
    let dark = adjust_shading(&a, &p, &tilted, &tex).unwrap();
    for (f, d) in flat.iter().zip(&dark) {
        assert!((0..3).all(|c| d[c] < f[c]));
    }
}

#[test]
fn shading_is_linear_in_albedo() {
    let p = grid(5, 5, -5.0, -5.0, 10.0, 10.0);
    let tilted = p.rotated(&rot_x(0.3));
    let a = albedo(p.vertex_count());
    let tex = TextureParams { phong: PhongParams { amb: Vec3::repeat(0.3), dir: Vec3::repeat(0.4), ..plane_tex(0.4).phong }, beta: vec![] };
    let base = adjust_shading(&a, &p, &tilted, &tex).unwrap();
    let half: Vec<Vec3> = a.iter().map(|c| c * 0.5).collect();
    for (x, y) in adjust_shading(&half, &p, &tilted, &tex).unwrap().iter().zip(&base) {
        assert!((x - y * 0.5).norm() < 1e-12);
    }
}

#[test]
fn remove_shading_inverts_diffuse() {
    let p = grid(5, 5, -5.0, -5.0, 10.0, 10.0).rotated(&rot_x(0.2));
    let a = albedo(p.vertex_count());
    let tex = plane_tex(0.6);
    let shaded = adjust_shading(&a, &p, &p, &tex).unwrap();
    for (x, y) in remove_shading(&shaded, &p, &tex.phong).unwrap().iter().zip(&a) {
        assert!((x - y).norm() < 1e-12);
    }
}

// Target-shape fusion

fn donors(seed: u64) -> (Mesh, Vec<Region>, FuseParts) {
    let face = synthetic_face(&SynthConfig { grid: 20, ..Default::default() }, seed);
    let m = face.template.mesh.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut donor = |_| {
        let off = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        m.map_positions(|v| v + off + Vec3::new(0.0, 0.0, 0.01 * v.x))
    };
    let parts = FuseParts { eyes: donor(0), nose: donor(1), mouth: donor(2), cheek: donor(3) };
    (m, face.template.annotations.regions.clone(), parts)
}

#[test]
fn identical_donors_fuse_to_themselves() {
    let (m, regions, _) = donors(1);
    let parts = FuseParts { eyes: m.clone(), nose: m.clone(), mouth: m.clone(), cheek: m.clone() };
    let out = fuse_target_shape(&parts, &regions, 8.0).unwrap();
    for (a, b) in out.vertices.iter().zip(&m.vertices) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn interior_vertices_come_from_their_donor() {
    let (m, regions, parts) = donors(2);
    let out = fuse_target_shape(&parts, &regions, 8.0).unwrap();
    let hops = (8.0 / {
        let e = m.edges();
        e.iter().map(|&(i, j)| (m.vertices[i] - m.vertices[j]).norm()).sum::<f64>() / e.len() as f64
    })
    .ceil() as usize;
    let dist = region_hop_distances(&m, &regions);
    let mut checked = 0;
    for i in 0..m.vertex_count() {
        if regions[i] == Region::Nose && (0..4).filter(|&r| r != 1).all(|r| dist[i][r] > hops) {
            assert_eq!(out.vertices[i], parts.nose.vertices[i]);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn two_donor_band_vertices_lie_on_the_segment() {
    let (m, regions, parts) = donors(3);
    let out = fuse_target_shape(&parts, &regions, 8.0).unwrap();
    let dist = region_hop_distances(&m, &regions);
    let e = m.edges();
    let mean = e.iter().map(|&(i, j)| (m.vertices[i] - m.vertices[j]).norm()).sum::<f64>() / e.len() as f64;
    let hops = (8.0 / mean).ceil() as usize;
    let all = [&parts.eyes, &parts.nose, &parts.mouth, &parts.cheek];
    let mut checked = 0;
    for i in 0..m.vertex_count() {
        let near: Vec<usize> = (0..4).filter(|&r| dist[i][r] <= hops).collect();
        if near.len() != 2 {
            continue;
        }
        let (a, b, p) = (all[near[0]].vertices[i], all[near[1]].vertices[i], out.vertices[i]);
        let t = (p - a).dot(&(b - a)) / (b - a).norm_squared();
        assert!((-1e-12..=1.0 + 1e-12).contains(&t));
        assert!((a + (b - a) * t - p).norm() < 1e-9);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn fusion_rejects_other_topology() {
    let (_, regions, mut parts) = donors(4);
    parts.nose = grid(3, 3, 0.0, 0.0, 1.0, 1.0);
    assert!(matches!(fuse_target_shape(&parts, &regions, 8.0), Err(Error::TopologyMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fused_vertices_stay_inside_donor_boxes(seed in 0u64..1000, band in 0.0..20.0f64) {
        let (_, regions, parts) = donors(seed);
        let out = fuse_target_shape(&parts, &regions, band).unwrap();
        let all = [&parts.eyes, &parts.nose, &parts.mouth, &parts.cheek];
        for (i, v) in out.vertices.iter().enumerate() {
            for c in 0..3 {
                let lo = all.iter().map(|m| m.vertices[i][c]).fold(f64::INFINITY, f64::min);
                let hi = all.iter().map(|m| m.vertices[i][c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v[c] >= lo - 1e-9 && v[c] <= hi + 1e-9);
            }
        }
    }
}

// Rotate and render

fn face_error(a: &RgbImage, b: &RgbImage, mask: &Mask) -> f64 {
    mean_abs_diff(a, b, |x, y| *mask.get(x, y)).unwrap()
}

#[test]
fn identity_rotation_reproduces_source() {
    let s = scene(0.0, 0.0);
    let done = complete_depth(&s.frame, &s.mesh, 16.0, DEPTH_SMOOTH_WEIGHT).unwrap();
    let out = rotate_and_render(&s.frame, &s.mesh, &done.depth, &CameraPose::identity(), &s.face.model, &s.tex, &RotateConfig::default()).unwrap();
    let err = mean_abs_diff(&out.color, &s.frame.color, |_, _| true).unwrap();
    assert!(err < 2.0 / 255.0, "{err}");
    assert!(out.occluded.data().iter().all(|&o| !o));
}

#[test]
fn yaw_round_trip_is_resampling_only() {
    let s = scene(0.0, 0.0);
    let cfg = RotateConfig::default();
    let done = complete_depth(&s.frame, &s.mesh, 16.0, DEPTH_SMOOTH_WEIGHT).unwrap();
    let there = pose_about_face(&s.mesh, 0.0, 15.0);
    let a = rotate_and_render(&s.frame, &s.mesh, &done.depth, &there, &s.face.model, &s.tex, &cfg).unwrap();
    let frame2 = RgbdFrame::new(a.color.clone(), a.depth.clone(), Mask::filled(W, W, true)).unwrap();
    let back = pose_about_face(&a.registered, 0.0, -15.0);
    let b = rotate_and_render(&frame2, &a.registered, &a.depth, &back, &s.face.model, &s.tex, &cfg).unwrap();
    let err = face_error(&b.color, &s.frame.color, &face_mask(&s.mesh));
    assert!(err < 6.0 / 255.0, "round trip error {}", err * 255.0);
}

#[test]
fn large_yaw_inpaints_and_leaves_no_holes() {
    // A deep face, so its sides are seen nearly edge-on from the front.
    let s = deep_scene(0.0, 0.0, 3.0);
    let done = complete_depth(&s.frame, &s.mesh, 16.0, DEPTH_SMOOTH_WEIGHT).unwrap();
    let pose = pose_about_face(&s.mesh, 0.0, 50.0);
    let out = rotate_and_render(&s.frame, &s.mesh, &done.depth, &pose, &s.face.model, &s.tex, &RotateConfig::default()).unwrap();
    let n = out.occluded.data().iter().filter(|&&o| o).count();
    assert!(n > 0);
    assert!(out.color.data().iter().all(|c| c.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))));
    assert!(out.depth.data().iter().all(|d| d.is_finite()));
}

// Shape transformation

#[test]
fn same_shape_transform_keeps_the_image() {
    let s = scene(0.0, 0.0);
    let out = transform_shape(&s.frame, &s.mesh, &s.face.template.mesh, &s.tex, 16.0).unwrap();
    assert!(mean_error(&out.target, &s.mesh) < 1e-6);
    let err = mean_abs_diff(&out.color, &s.frame.color, |_, _| true).unwrap();
    assert!(err < 2.0 / 255.0, "{}", err * 255.0);
}

#[test]
fn wider_face_pushes_background_out() {
    let s = scene(0.0, 0.0);
    let c = s.face.template.mesh.centroid();
    let wide = s.face.template.mesh.map_positions(|v| Vec3::new(c.x + 1.15 * (v.x - c.x), v.y, v.z));
    let out = transform_shape(&s.frame, &s.mesh, &wide, &s.tex, 16.0).unwrap();
    let src = complete_depth(&s.frame, &s.mesh, 16.0, 1.0).unwrap().graph;
    let mid = s.mesh.centroid().xy();
    let moved_out = src
        .positions
        .iter()
        .zip(&out.anchors.positions)
        .filter(|(a, b)| (b.x - mid.x).abs() > (a.x - mid.x).abs() + 1e-6)
        .count();
    assert!(moved_out > src.len() / 4);
}

fn mean_error(a: &Mesh, b: &Mesh) -> f64 {
    a.vertices.iter().zip(&b.vertices).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.vertex_count() as f64
}

