//! Helpers that place canonical meshes into images.

use crate::error::Result;
use crate::imaging::RgbImage;
use crate::math::{view_rotation, Vec3};
use crate::mesh::Mesh;
use crate::morphable::CameraPose;
use crate::raster::{rasterize, RenderBuffer, BACKGROUND};

/// Pose putting the centroid of `canonical` at the image centre and depth
/// `z`, rotated by (pitch, yaw) degrees, one pixel per model unit.
pub fn image_pose(canonical: &Mesh, width: usize, height: usize, pitch_deg: f64, yaw_deg: f64, z: f64) -> CameraPose {
    let r = view_rotation(pitch_deg, yaw_deg);
    let c = canonical.centroid();
    CameraPose { f: 1.0, r, t3d: Vec3::new(width as f64 / 2.0, height as f64 / 2.0, z) - r * c }
}

/// Smooth, non-symmetric color field used behind rendered faces.
pub fn background_gradient(width: usize, height: usize) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        Vec3::new(0.2 + 0.5 * u, 0.3 + 0.4 * v, 0.6 - 0.3 * u * v)
    })
}

/// Renders an image-frame mesh with per-vertex colors over `background`.
pub fn render_over(posed: &Mesh, colors: &[Vec3], background: &RgbImage) -> Result<(RgbImage, RenderBuffer)> {
    let buf = rasterize(posed, &CameraPose::identity(), colors, background.width(), background.height())?;
    let mut img = background.clone();
    for (i, c) in img.data_mut().iter_mut().enumerate() {
        if buf.tri_index[i] != BACKGROUND {
            *c = buf.color[i];
        }
    }
    Ok((img, buf))
}
