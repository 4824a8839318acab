//! Omnidirectional radiance fields on a spherical, tensor-factorized voxel grid.
//!
//! The crate reconstructs a radiance field from posed equirectangular
//! panoramas and renders novel equirectangular or perspective views from it.
//! The scene lives on an `(r, θ, φ)` grid whose radial axis is log-warped so
//! that cells grow with distance from the scene center. Density and
//! appearance grids are stored as sums of vector ⊗ matrix components, and a
//! small MLP decodes axis-aligned positionally encoded appearance features to
//! RGB.
//!
//! Module map:
//!
//! - [`geom`]: coordinate conventions, cameras, ray sampling, radius warp.
//! - [`field`]: factored grids, interpolation and their exact gradients.
//! - [`encode`]: axis-aligned positional encoding of decoder inputs.
//! - [`decoder`]: the RGB MLP and the density activation.
//! - [`render`]: compositing, ray/image rendering and the backward pass.
//! - [`train`]: loss, AdamW, learning-rate schedule, training loop.
//! - [`data`]: datasets, manifests, synthetic scenes and the oracle renderer.
//! - [`eval`]: PSNR, SSIM and the evaluation harness.
//! - [`checkpoint`]: the versioned binary checkpoint format.
//! - [`bench`]: throughput and voxelization comparisons.
//! - [`cli`]: the command-line front end used by the `panorf` binary.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encode;
pub mod error;
pub mod eval;
pub mod field;
pub mod geom;
pub mod image;
pub mod real;
pub mod render;
pub mod train;

pub use config::{EncodingConfig, SceneConfig, TrainConfig, Voxelization};
pub use error::{Error, Result};
pub use field::{FactoredTensor3, FieldParams, GridQuery, RadianceField};
pub use geom::{EquirectCamera, Ray, SceneBounds, Vec3, Warp};
pub use real::Real;
