//! Ground-truth functions used by the experiments.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFunction {
    Sine,
    Arctan,
    Sawtooth,
    Cubic,
    Quadratic,
    Exp,
    /// Step up across `[−0.5, 0.5]` that continues the slope on both sides.
    SmoothGap,
    /// Step up across `[−0.5, 0.5]` against the slope on both sides.
    SharpGap,
}

pub const GAP: (f64, f64) = (-0.5, 0.5);

impl TargetFunction {
    pub const ALL: [TargetFunction; 8] = [
        TargetFunction::Sine,
        TargetFunction::Arctan,
        TargetFunction::Sawtooth,
        TargetFunction::Cubic,
        TargetFunction::Quadratic,
        TargetFunction::Exp,
        TargetFunction::SmoothGap,
        TargetFunction::SharpGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetFunction::Sine => "sine",
            TargetFunction::Arctan => "arctan",
            TargetFunction::Sawtooth => "sawtooth",
            TargetFunction::Cubic => "cubic",
            TargetFunction::Quadratic => "quadratic",
            TargetFunction::Exp => "exp",
            TargetFunction::SmoothGap => "smooth_gap",
            TargetFunction::SharpGap => "sharp_gap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TargetFunction::Sine => x.sin(),
            TargetFunction::Arctan => x.atan(),
            TargetFunction::Sawtooth => sawtooth(x),
            TargetFunction::Cubic => x.powi(3) / 4.0 + x * x / 2.0 - x / 2.0,
            TargetFunction::Quadratic => x * x / 2.0,
            TargetFunction::Exp => (0.5 * x).exp(),
            TargetFunction::SmoothGap => 0.5 * x + 0.5 * side(x),
            TargetFunction::SharpGap => side(x) - 0.5 * x,
        }
    }

    /// Whether the training data leaves out the gap `[−0.5, 0.5]`.
    pub fn has_gap(self) -> bool {
        matches!(self, TargetFunction::SmoothGap | TargetFunction::SharpGap)
    }
}

fn side(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Triangle wave on `[−2, 2]` with troughs of −1 at the integers and peaks of
/// 1 at the half-integers; periodic outside.
fn sawtooth(x: f64) -> f64 {
    let t = (x + 2.0).rem_euclid(1.0);
    1.0 - 4.0 * (t - 0.5).abs()
}

/// `lo, lo + step, …` up to `hi` inclusive (within rounding).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}
