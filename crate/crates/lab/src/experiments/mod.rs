pub mod hessian;
pub mod init_density;
pub mod gf_frames;
pub mod data_dependent_init;
pub mod segreg;
pub mod lonely;
pub mod roughness;
pub mod alpha_sweep;
pub mod spiky;

use serde::{Deserialize, Serialize};
use splinelens_core::init::{GaussianInitSpec, InitSpec, UniformInitSpec, DEFAULT_SIGMA_B};

/// Baseline initialization for a width-`H` univariate network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StandardInit {
    /// Common framework default: `w, b ~ U[−1, 1]`, `v ~ U[−1/√H, 1/√H]`.
    Default,
    /// He normal weights with `N(0, σ_b²)` biases.
    He { sigma_b: f64 },
}

impl StandardInit {
    pub const HE: StandardInit = StandardInit::He { sigma_b: DEFAULT_SIGMA_B };

    pub fn spec(self, h: usize) -> splinelens_core::Result<InitSpec> {
        Ok(match self {
            StandardInit::Default => UniformInitSpec::new(1.0, 1.0, 1.0 / (h as f64).sqrt())?.into(),
            StandardInit::He { sigma_b } => GaussianInitSpec::he(h, sigma_b)?.into(),
        })
    }
}
