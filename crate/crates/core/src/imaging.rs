//! Dense 2D grids (images, depth maps, masks) and PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Row-major `width x height` grid. Pixel `(x, y)` covers `[x, x+1) x [y, y+1)`
/// with its centre at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RgbImage = Grid<Vec3>;
pub type GrayImage = Grid<f64>;
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch { what: "grid data", expected: width * height, actual: data.len() });
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }
}

impl<T> Grid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let i = y * self.width + x;
        self.data[i] = v;
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

/// Bilinear sample at continuous image coordinates (pixel centres at +0.5),
/// clamping to the border.
pub fn sample_bilinear<T>(img: &Grid<T>, x: f64, y: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let fx = (x - 0.5).clamp(0.0, (img.width - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (img.height - 1) as f64);
    let x0 = (fx.floor() as usize).min(img.width.saturating_sub(2));
    let y0 = (fy.floor() as usize).min(img.height.saturating_sub(2));
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let top = *img.get(x0, y0) * (1.0 - tx) + *img.get(x1, y0) * tx;
    let bot = *img.get(x0, y1) * (1.0 - tx) + *img.get(x1, y1) * tx;
    top * (1.0 - ty) + bot * ty
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let buf: Vec<u8> = img.data.iter().flat_map(|c| [to_u8(c.x), to_u8(c.y), to_u8(c.z)]).collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ExtendedColorType::Rgb8)?;
    Ok(())
}

pub fn save_rgba_png(img: &RgbImage, alpha: &GrayImage, path: &Path) -> Result<()> {
    let buf: Vec<u8> = img
        .data
        .iter()
        .zip(&alpha.data)
        .flat_map(|(c, &a)| [to_u8(c.x), to_u8(c.y), to_u8(c.z), to_u8(a)])
        .collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ExtendedColorType::Rgba8)?;
    Ok(())
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    let buf: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ExtendedColorType::L8)?;
    Ok(())
}

/// 16-bit grayscale PNG of `values` affinely mapped from `[lo, hi]`.
pub fn save_gray16_png(img: &GrayImage, lo: f64, hi: f64, path: &Path) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px: Vec<u16> = img
        .data
        .iter()
        .map(|&v| if v.is_finite() { (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16 } else { 0 })
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(img.width as u32, img.height as u32, px)
        .ok_or_else(|| Error::format("PNG", "buffer size"))?;
    buf.save(path)?;
    Ok(())
}

/// Reads a 16-bit grayscale PNG and maps it back to `[lo, hi]`.
pub fn load_gray16_png(path: &Path, lo: f64, hi: f64) -> Result<GrayImage> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| lo + (hi - lo) * v as f64 / 65535.0).collect();
    GrayImage::from_vec(w as usize, h as usize, data)
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| Vec3::new(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0))
        .collect();
    RgbImage::from_vec(w as usize, h as usize, data)
}

/// Mean absolute per-channel difference over pixels where `mask` holds.
pub fn mean_abs_diff(a: &RgbImage, b: &RgbImage, mask: impl Fn(usize, usize) -> bool) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            if mask(x, y) {
                sum += (a.get(x, y) - b.get(x, y)).abs().sum() / 3.0;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}
