//! Experiment harness for the `splinelens` command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod manifest;
pub mod output;
pub mod runner;
pub mod stats;
pub mod targets;

pub use error::{LabError, LabResult};

/// Independent stream seed for the `stream`-th random component of a run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
