//! Sequential vs parallel execution of the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use facekit::math::Vec3;
use facekit::metrics::{psd_distance_with, psd_views};
use facekit::morphable::rigid_project;
use facekit::morphable::synth::{synthetic_face, SynthConfig};
use facekit::raster::rasterize_with;
use facekit::scene::image_pose;
use facekit::spatial::PointIndex;
use facekit::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn kernels(c: &mut Criterion) {
    let face = synthetic_face(&SynthConfig { grid: 64, ..Default::default() }, 0);
    let canonical = face.template.mesh.clone();
    let posed = rigid_project(&canonical, &image_pose(&canonical, 512, 512, 0.0, 20.0, 500.0));
    let colors = face.model.evaluate_texture(&vec![0.0; face.model.tex_dims()]).unwrap();
    let bumped = canonical.map_positions(|v| v + Vec3::new(0.0, 0.0, 0.03 * v.x));
    let index = PointIndex::new(&posed.vertices);
    let queries: Vec<Vec3> = posed.vertices.iter().map(|v| v + Vec3::new(0.3, -0.2, 0.1)).collect();

    let mut group = c.benchmark_group("kernels");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new("rasterize_512", name), &exec, |b, &e| {
            b.iter(|| rasterize_with(&posed, &facekit::morphable::CameraPose::identity(), &colors, 512, 512, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("psd_5_views", name), &exec, |b, &e| {
            b.iter(|| psd_distance_with(&bumped, &canonical, &psd_views(), 256, 256, e))
        });
        group.bench_with_input(BenchmarkId::new("nearest_neighbour", name), &exec, |b, &e| b.iter(|| index.nearest_all(&queries, e)));
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
