//! Deblurred radiance fields from a few blurry views.
//!
//! A radiance field and a camera-motion blur kernel are optimized jointly.
//! Sparse-view training is regularized by surface smoothness on hidden and
//! unseen rays, modulated gradient scaling, and perceptual distillation
//! from pre-deblurred images.

pub mod autodiff;
pub mod blur;
pub mod data;
pub mod error;
pub mod field;
pub mod geometry;
pub mod regularize;
pub mod render;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
