//! Geometry and data-construction toolkit for high-fidelity single-image 3D
//! face reconstruction.
//!
//! - [`mesh`]: triangle meshes, normals, UV displacement maps, OBJ I/O.
//! - [`morphable`]: linear shape/texture model, weak-perspective pose,
//!   closed-form similarity alignment.
//! - [`raster`]: z-buffered software rasterizer, plaster shading, inverse
//!   (pixel to vertex) attribution, Phong vertex shading.
//! - [`multiview`]: image meshes, mirrored completion, visibility-weighted view
//!   synthesis, image to UV warping.
//! - [`registration`]: landmark- and contour-constrained non-rigid ICP on RGB-D.
//! - [`augmentation`]: depth completion, rotate-and-render with Poisson
//!   inpainting, donor shape fusion, anchor warping, shading adjustment.
//! - [`metrics`]: MSE / plaster-sculpture / visual-guided losses, NME and DACE.
//! - [`pipeline`]: fixtures, configuration and end-to-end orchestration.

pub mod augmentation;
pub mod error;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod morphable;
pub mod multiview;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod registration;
pub mod scene;
pub mod spatial;
pub mod sparse;
pub mod imaging;
pub mod template;
pub mod weights;

pub use error::{Error, Result};
pub use par::Exec;
