//! Shallow univariate ReLU networks read as continuous piecewise-linear
//! splines: reparametrization, initialization densities, loss geometry,
//! gradient-flow dynamics and classical baselines.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod init;
pub mod net;
pub mod spline;

pub use error::{Error, Result};
pub use net::{Dataset, NetParams};
pub use spline::{BdsoParams, Knot, Orientation, PwlParams};
