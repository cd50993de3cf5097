//! Unsupervised change detection for bi-temporal SAR intensity images.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`di`]: weighted-average despeckling, log-ratio and a multi-scale
//!    superpixel reconstruction of the difference image.
//! 2. [`clustering`]: two parallel centre-constrained fuzzy c-means branches
//!    over Gabor features split pixels into changed, unchanged and hard.
//! 3. [`sampling`] + [`nets`]: pseudo-labelled patches around the easy pixels,
//!    minority class topped up by a DCGAN, train a wavelet-pooled CNN.
//! 4. [`eval`]: the CNN decides the hard pixels; the final map is scored.
//!
//! [`pipeline`] wires these together, [`synth`] generates speckled test
//! scenes with known ground truth.

pub mod clustering;
pub mod config;
pub mod di;
mod error;
pub mod eval;
pub mod features;
pub mod nets;
pub mod nn;
pub mod pgm;
pub mod pipeline;
pub mod raster;
pub mod sampling;
pub mod superpixel;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{Kernel, Raster};
