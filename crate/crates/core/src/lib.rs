//! Desk-scale frequency-shortcut analysis for image classifiers.
//!
//! The crate covers the full loop: synthesizing frequency-band-biased
//! datasets, training a compact residual CNN with plain SGD, measuring
//! class-wise spectrum statistics (ADCS), and identifying frequency
//! shortcuts by loss-increment frequency culling (dominant frequency maps),
//! together with the band-stop and DFM-filtered evaluation protocols.

pub mod dataset;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nnet;
pub mod spectrum;
pub mod synthgen;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use image::Image;
