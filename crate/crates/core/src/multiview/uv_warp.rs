//! Geometric warps between the image plane and the UV plane.

use crate::error::{Error, Result};
use crate::imaging::{sample_bilinear, Mask, RgbImage};
use crate::math::{Vec2, Vec3};
use crate::mesh::Mesh;
use crate::morphable::CameraPose;
use crate::raster::{rasterize, RenderBuffer, BACKGROUND};

/// The template's UV chart rasterized once at a fixed resolution.
///
/// UV `(u, v)` maps to UV-raster coordinates `(u * width, v * height)`.
#[derive(Debug, Clone)]
pub struct UvChart {
    buffer: RenderBuffer,
    width: usize,
    height: usize,
}

impl UvChart {
    pub fn new(mesh: &Mesh, height: usize, width: usize) -> Result<Self> {
        let uv = mesh.uv.as_ref().ok_or(Error::MissingUv)?;
        let flat = Mesh {
            vertices: uv.iter().map(|t| Vec3::new(t.x * width as f64, t.y * height as f64, 0.0)).collect(),
            triangles: mesh.triangles.clone(),
            uv: None,
            colors: None,
        };
        let buffer = rasterize(&flat, &CameraPose::identity(), &vec![Vec3::zeros(); flat.vertex_count()], width, height)?;
        Ok(UvChart { buffer, width, height })
    }

    /// Cells covered by the chart.
    pub fn mask(&self) -> Mask {
        Mask::from_vec(self.width, self.height, self.buffer.tri_index.iter().map(|&t| t != BACKGROUND).collect()).expect("chart size")
    }

    /// Samples `image` through the fitted mesh into the UV plane; cells off
    /// the chart are zero.
    pub fn warp(&self, image: &RgbImage, fitted: &Mesh) -> Result<RgbImage> {
        if fitted.triangles != self.buffer.triangles {
            return Err(Error::TopologyMismatch("fitted mesh does not match the UV chart".into()));
        }
        let data = (0..self.width * self.height)
            .map(|i| match self.buffer.tri_index[i] {
                BACKGROUND => Vec3::zeros(),
                t => {
                    let tri = fitted.triangles[t as usize];
                    let b = self.buffer.bary[i];
                    let p: Vec2 = (0..3).map(|k| fitted.vertices[tri[k]].xy() * b[k]).sum();
                    sample_bilinear(image, p.x, p.y)
                }
            })
            .collect();
        RgbImage::from_vec(self.width, self.height, data)
    }
}

/// Image plane to UV plane at `height x width`.
pub fn warp_image_to_uv(image: &RgbImage, fitted: &Mesh, height: usize, width: usize) -> Result<RgbImage> {
    UvChart::new(fitted, height, width)?.warp(image, fitted)
}

/// UV plane back to a `width x height` image over the face; returns the
/// image and its face mask.
pub fn warp_uv_to_image(uv_image: &RgbImage, fitted: &Mesh, width: usize, height: usize) -> Result<(RgbImage, Mask)> {
    let uv = fitted.uv.as_ref().ok_or(Error::MissingUv)?;
    let buf = rasterize(fitted, &CameraPose::identity(), &vec![Vec3::zeros(); fitted.vertex_count()], width, height)?;
    let (uw, uh) = (uv_image.width() as f64, uv_image.height() as f64);
    let data = (0..width * height)
        .map(|i| match buf.tri_index[i] {
            BACKGROUND => Vec3::zeros(),
            t => {
                let tri = fitted.triangles[t as usize];
                let b = buf.bary[i];
                let p: Vec2 = (0..3).map(|k| uv[tri[k]] * b[k]).sum();
                sample_bilinear(uv_image, p.x * uw, p.y * uh)
            }
        })
        .collect();
    let mask = Mask::from_vec(width, height, buf.tri_index.iter().map(|&t| t != BACKGROUND).collect())?;
    Ok((RgbImage::from_vec(width, height, data)?, mask))
}
