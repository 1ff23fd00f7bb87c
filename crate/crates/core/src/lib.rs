//! Inverse-rendering toolkit: learns density, latent appearance, microfacet
//! material parameters and a Laplacian-pyramid environment light from posed
//! images, then re-renders under novel lighting.

pub mod envlight;
pub mod error;
pub mod brdf;
pub mod config;
pub mod camera;
pub mod decoders;
pub mod encoding;
pub mod grid;
pub mod img;
pub mod loss;
pub mod march;
pub mod math;
pub mod num;
pub mod optim;
pub mod mlp;
pub mod param;
pub mod pipeline;
pub mod sampler;
pub mod scene;
pub mod shade;

pub use error::{Error, Result};
pub use num::Real;

/// Single-precision aliases used by the training pipeline and CLI.
pub type Vec3f = math::Vec3<f32>;
pub type Rgbf = math::Rgb<f32>;
pub type VmGridF = grid::VmGrid<f32>;

/// Double-precision aliases used by the verification suites.
pub type Vec3d = math::Vec3<f64>;
pub type Rgbd = math::Rgb<f64>;
pub type VmGridD = grid::VmGrid<f64>;
