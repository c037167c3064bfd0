use serde::{Deserialize, Serialize};
use serde_json::Value;
use splinelens_core::init::RNG_NAME;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub rng: String,
    pub version: String,
    /// Left out of the CSV header line so that reruns are byte-identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl RunManifest {
    pub fn new(experiment: &str, config: Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            experiment: experiment.to_string(),
            config,
            seeds,
            rng: RNG_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: None,
        }
    }

    /// Single-line JSON without the wall-clock field.
    pub fn header_line(&self) -> String {
        let mut m = self.clone();
        m.wall_clock_s = None;
        serde_json::to_string(&m).expect("manifest serializes")
    }
}
