//! Procedural 3D fractal video datasets from iterated function systems.
//!
//! An [`ifs::IfsSystem`] is a small set of affine contractions in R^3. Running the
//! chaos game on one produces a fractal point cloud; animating the cloud with a
//! smooth motion profile and rasterizing each frame produces a short video clip.
//! Doing that for thousands of independently sampled systems produces a labeled
//! synthetic video dataset.
//!
//! The interesting problem is rejecting degenerate systems *before* paying for
//! point generation. This crate ships several strategies side by side:
//!
//! - **Baseline**: sample naively, run the chaos game, keep systems whose point
//!   cloud has enough variance along every axis ([`filters::variance_filter`]).
//! - **SVD control**: construct maps directly from rotation/scale factors so
//!   every candidate is contractive by construction ([`ifs::sample_svd_controlled`]).
//! - **Learned filter**: score candidates with a random forest trained on
//!   singular-value features ([`filters::rf_filter`]).
//! - **Targeted smart filter**: two cheap spectral checks on the raw parameters
//!   ([`filters::tsf_filter`]) — no point generation, no model.
//!
//! The `examples/` directory demonstrates each stage end to end; the
//! `fractalforge` binary wraps the same library calls for batch use.

pub mod bench;
pub mod chaos;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod filters;
pub mod ifs;
pub mod linalg;
pub mod motion;
pub mod render;
pub mod rng;

pub use error::{Error, Result};
