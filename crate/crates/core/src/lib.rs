//! Sterile-insect release barriers for a bistable mosquito population model.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod experiment;
pub mod kinetics;
pub mod odesim;
pub mod params;
pub mod pdesim;
pub mod quadrature;
pub mod roots;
pub mod scalar;
pub mod tridiag;
pub mod waves;

pub use kinetics::ModelVariant;
pub use params::{ModelParameters, ParamError, DEFAULT_K};
pub use scalar::Scalar;

pub type Parameters = params::ModelParameters<f64>;
pub type Grid = pdesim::Grid<f64>;
pub type Field = pdesim::Field<f64>;
pub type SpaceTimeRecord = pdesim::SpaceTimeRecord<f64>;
pub type ReleaseProfile = pdesim::ReleaseProfile<f64>;
pub type VerdictOptions = pdesim::VerdictOptions<f64>;
pub type BlockingVerdict = pdesim::BlockingVerdict<f64>;
pub type PhasePlane = waves::PhasePlane<f64>;
pub type CriticalRelease = waves::CriticalRelease<f64>;
pub type Trajectory = odesim::Trajectory<f64>;

pub use experiment::{reproduce_figure, run_experiment, sweep, ExperimentConfig, SweepSpec};
