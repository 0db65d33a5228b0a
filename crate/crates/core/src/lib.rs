//! Local U-statistic density estimation for functions of several sample
//! variables, with its Hoeffding decomposition, closed-form limit quantities
//! and a Monte Carlo harness for the associated limit theorems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod harness;
pub mod hoeffding;
pub mod kernels;
pub mod models;
pub mod numeric;
pub mod par;
pub mod quadrature;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use kernels::Kernel;
pub use models::{BaseLaw, GSpec, Sample, SampleModel};
