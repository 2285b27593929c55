//! Visual numerosity laboratory.
//!
//! * [`morpho`]: deterministic shrink-and-count engine built from six 3x3
//!   hit-or-miss kernels, plus the boundary and erosion transforms.
//! * [`topology`]: union-find labeling, the ground-truth oracle.
//! * [`stimulus`]: reproducible synthetic scenes and datasets.
//! * [`neuralnet`]: a small CPU CNN stack (conv, pool, residual, FC).
//! * [`experiments`]: the generalization probes and reports.

pub mod error;
pub mod experiments;
pub mod image;
pub mod morpho;
pub mod neuralnet;
pub mod par;
pub mod stimulus;
pub mod topology;

pub use error::{Error, Result};
pub use image::BinaryImage;
