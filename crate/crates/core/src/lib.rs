// SPDX-License-Identifier: MIT OR Apache-2.0
//! Multiple change-point detection for very long piecewise-constant
//! sequences using multi-stage intelligent sampling.
//!
//! A sparse strided pass locates change points roughly, a recalibration
//! pass on an offset subsample pins down localization quantiles, and dense
//! stump fits in small windows give the final estimates. Confidence
//! intervals come from Monte Carlo tables of the argmin of a two-sided
//! drifted random walk.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod rwdist;
pub mod segmentation;
pub mod stump;
pub mod synth;

pub use error::{Error, Result};
pub use io::{SequenceAccessor, SequenceFile};
pub use model::{PiecewiseConfig, Series, SubsampleGrid};
pub use pipeline::{detect, DetectionReport, PipelineConfig};
pub use rwdist::{LDistTable, NoiseSpec};
