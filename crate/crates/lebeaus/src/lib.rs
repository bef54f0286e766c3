//! Local background estimation for gas-plume hyperspectral imagery.
//!
//! Longwave-infrared gas detection whitens each pixel against the scene
//! background; a single global mean smears plumes that sit on spectrally
//! distinct surfaces. This crate estimates the background *locally*:
//!
//! 1. [`segment`] — a robust spectral gradient and watershed flooding
//!    over-segment the scene into materially pure regions.
//! 2. [`similarity`] — truncated spectral distances (TED between pixels,
//!    TAL between pixel sets) rank donor segments and gather gas-free
//!    "clean" pixels for every plume-covered segment.
//! 3. [`ibate`] — an alternating additive-model fit splits each segment's
//!    pixels into a background spectrum plus a scaled signal spectrum.
//! 4. [`stats`] / [`pipeline`] — pixels are whitened with their local
//!    background mean under the globally estimated covariance, scored
//!    against ground truth, and compared with the global-mean baseline
//!    across a hyperparameter sweep.
//!
//! [`sim`] generates physically grounded synthetic scenes (Planck
//! radiation, Gaussian plume dispersion, Beer–Lambert gas absorption) with
//! exact ground truth; [`io`] and [`report`] read and write every artifact.
//!
//! All numeric code is generic over the scalar type through [`Real`]
//! (default `f64`); `*64`/`*32` aliases at the crate root pin concrete
//! precisions.

pub mod cube;
pub mod error;
pub mod ibate;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod real;
pub mod report;
pub mod segment;
pub mod sim;
pub mod similarity;
pub mod stats;

pub use cube::{HsiCube, PixelMask, PixelTable, Spectrum};
pub use error::{Error, Result};
pub use ibate::{run_ibate, AdditiveFit, IbateProblem};
pub use linalg::SquareMatrix;
pub use pipeline::{
    evaluate_mse, global_baseline, lebeaus_run, sweep, whitened_background_mse, LebeausConfig,
    LocalWhitenResult, SceneContext, SweepGrid, SweepRecord,
};
pub use real::Real;
pub use report::emit_report;
pub use segment::{spectral_gradient, watershed, GradientMap, SegmentMap};
pub use sim::{run_simulation, synth_scene, SceneConfig, SceneRealization, SimulationTruth};
pub use similarity::{gather_clean_pixels, tal, ted, SimilarityParams};
pub use stats::{global_stats, inverse_sqrt, whiten, SceneStats, WhiteningTransform};

/// Double-precision aliases of the core data types.
pub type Spectrum64 = cube::Spectrum<f64>;
pub type HsiCube64 = cube::HsiCube<f64>;
pub type SquareMatrix64 = linalg::SquareMatrix<f64>;
pub type SceneStats64 = stats::SceneStats<f64>;
pub type WhiteningTransform64 = stats::WhiteningTransform<f64>;
pub type GradientMap64 = segment::GradientMap<f64>;
pub type SegmentMap64 = segment::SegmentMap<f64>;
pub type AdditiveFit64 = ibate::AdditiveFit<f64>;
pub type SimulationTruth64 = sim::SimulationTruth<f64>;
pub type LocalWhitenResult64 = pipeline::LocalWhitenResult<f64>;

/// Single-precision aliases of the core data types.
pub type Spectrum32 = cube::Spectrum<f32>;
pub type HsiCube32 = cube::HsiCube<f32>;
pub type SquareMatrix32 = linalg::SquareMatrix<f32>;
pub type SceneStats32 = stats::SceneStats<f32>;
pub type WhiteningTransform32 = stats::WhiteningTransform<f32>;
pub type GradientMap32 = segment::GradientMap<f32>;
pub type SegmentMap32 = segment::SegmentMap<f32>;
pub type AdditiveFit32 = ibate::AdditiveFit<f32>;
pub type SimulationTruth32 = sim::SimulationTruth<f32>;
pub type LocalWhitenResult32 = pipeline::LocalWhitenResult<f32>;
