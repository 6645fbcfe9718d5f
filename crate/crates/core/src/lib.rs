//! Vector-tile generation and budgeted, distortion-aware tile reduction.

pub mod codec;
pub mod model;
pub mod raster;
pub mod metrics;
pub mod sparsify;
pub mod triage;
pub mod pipeline;
pub mod quality;
pub mod synth;
pub mod fixtures;
