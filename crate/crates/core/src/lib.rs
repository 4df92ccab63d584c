//! Specification tests for parametric regression against nonparametric
//! alternatives: the loss-function statistic `q_n` (and its `SSR₀`-scaled
//! variant), the generalized likelihood ratio `λ_n` and the F statistic,
//! with asymptotic and conditional-bootstrap calibration, kernel constants,
//! Pitman efficiency, simulation designs and a Monte Carlo harness.

// `!(x > 0.0)` deliberately treats NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bootstrap;
pub mod dgp;
pub mod efficiency;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod loss;
pub mod methods;
pub mod quadrature;
pub mod sample;
pub mod seed;
pub mod smoothing;
pub mod stats;

pub use analysis::{Analysis, ObservedTest, Prepared};
pub use bootstrap::{BootstrapMode, BootstrapOutcome};
pub use error::{Error, Result};
pub use kernels::{Kernel, KernelConstants};
pub use loss::Loss;
pub use methods::{parse_test, SpecTest, TestRegistry};
pub use sample::{Regressors, Sample};
pub use smoothing::{parse_bandwidth, BandwidthSelector};
