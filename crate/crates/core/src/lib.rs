//! Training-free inpainting of voxel assets by optimizing the initial noise
//! of a two-stage rectified-flow generator.
//!
//! The generator is a desk-scale stand-in: a dense sparse-structure stage on a
//! `16^3 x 4` feature grid and a structured-latent stage attaching 8-channel
//! features to the active voxels, both driven by per-voxel velocity MLPs.

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod flownet;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod seedopt;
pub mod shapes;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{gaussian_grid, FeatureGrid, Latent, Position, SparseLatent, Stage};
pub use rng::Rng;
pub use spectral::{irfft3, rfft3, SpectralCoeffs};
pub use stats::{moments, MomentStats};
