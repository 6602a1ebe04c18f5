use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RenderBuffer;
use crate::error::{Error, Result};
use crate::imaging::{save_gray16_png, save_rgb_png};

/// JSON sidecar written next to an exported render buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub width: usize,
    pub height: usize,
    pub depth_min: f64,
    pub depth_max: f64,
}

/// Writes `<stem>_color.png` (8-bit), `<stem>_depth.png` (16-bit, affine over
/// the foreground depth range), `<stem>_tri.u32` (little-endian row-major) and
/// `<stem>.json`.
pub fn export_render_buffer(buf: &RenderBuffer, dir: &Path, stem: &str) -> Result<RenderSidecar> {
    let finite = buf.depth.iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (0.0, 0.0) };
    save_rgb_png(&buf.color_image(), &dir.join(format!("{stem}_color.png")))?;
    save_gray16_png(&buf.depth_image(), lo, hi, &dir.join(format!("{stem}_depth.png")))?;
    let tri: Vec<u8> = buf.tri_index.iter().flat_map(|t| t.to_le_bytes()).collect();
    let tri_path = dir.join(format!("{stem}_tri.u32"));
    std::fs::write(&tri_path, tri).map_err(|e| Error::io(&tri_path, e))?;
    let sidecar = RenderSidecar { width: buf.width, height: buf.height, depth_min: lo, depth_max: hi };
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&json_path, e))?;
    Ok(sidecar)
}
