pub mod budget;
pub mod config;
pub mod dcf;
pub mod error;
pub mod eval;
pub mod features;
pub mod fft;
pub mod fusion;
pub mod gbdt;
pub mod geometry;
pub mod heatmap;
pub mod image;
pub mod linalg;
pub mod pipeline;
pub mod regions;
pub mod scalar;
pub mod superpixel;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision tracker, the default numeric type.
pub type Tracker = pipeline::Tracker<f64>;
/// Single-precision tracker.
pub type TrackerF32 = pipeline::Tracker<f32>;
