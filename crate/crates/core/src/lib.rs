//! Scaling-law analysis for families of training curves.
//!
//! The pipeline: ingest run logs into a [`curves::CurveFamily`], estimate
//! compute-optimal allocation either from the efficient frontier
//! ([`frontier`]) or from a parametric loss surface ([`parametric`]), fit the
//! compute-optimal loss law, and turn the fits into allocation plans
//! ([`allocator`]). [`synth`] generates families with known ground truth and
//! provides the brute-force oracles the fits are checked against.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod allocator;
pub mod correlation;
pub mod curves;
pub mod error;
pub mod estimator;
pub mod frontier;
pub mod lm;
pub mod parametric;
pub mod report;
pub mod synth;

pub use accounting::{ArchitectureKind, ArchitectureProfile, ComputeBudget, Task};
pub use allocator::{AllocationPlan, PlanSource};
pub use curves::{CurveFamily, RunRecord, TrainingCurve};
pub use error::{Error, Result};
pub use estimator::{AllocationLaw, Estimator, EstimatorRegistry, EstimatorSettings};
pub use frontier::{FrontierEnvelope, FrontierLaw};
pub use parametric::{LossLaw, LossSurface, ParametricLaw};
pub use synth::{NoiseModel, SyntheticSpec};
