//! Decoupling experiments, the exact decoder and the finite-size checks of
//! thermalization and truncation.

mod checks;
mod cv;
mod decoder;
mod dv;

pub use checks::{
    run_passive_thermal_check, run_thermal_reduction_check, run_truncated_comparison, thermal_beats_uniform,
    EncodingComparison, PassiveThermalConfig, PassiveThermalReport, SmallScaleRun, ThermalReductionConfig,
    ThermalReductionEntry, ThermalReductionReport, TruncatedComparisonConfig, TruncatedComparisonReport,
};
pub use cv::{run_cv_decoupling, CvDetails, CvExperimentConfig, MarginalMode};
pub use decoder::{exact_decoder, random_decoupled_state, DecoderOutput, Partition, DEFAULT_DECOUPLING_TOLERANCE};
pub use dv::{run_dv_decoupling, DvDetails, DvExperimentConfig};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::ScalarEstimate;

pub const DEFAULT_SAMPLES: usize = 200;

/// Stream offset for draws that are not Monte-Carlo samples (calibration,
/// fixed inputs), keeping them disjoint from sample streams `0..M`.
pub const AUXILIARY_STREAM_BASE: u64 = 1 << 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentDetails {
    Dv(DvDetails),
    Cv(CvDetails),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub elapsed_seconds: f64,
}

/// Per-sample trace distances and their aggregate, with both bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub per_sample_distances: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub bound_exact: f64,
    pub bound_asymptotic: f64,
    pub gamma: f64,
    #[serde(rename = "Q")]
    pub capacity: f64,
    pub typical_dim: Option<usize>,
    pub details: ExperimentDetails,
    pub warnings: Vec<String>,
    pub metadata: ResultMetadata,
}

impl ExperimentResult {
    /// `mean <= bound_exact + z * std_error`.
    pub fn within_bound(&self, z: f64) -> bool {
        self.mean <= self.bound_exact + z * self.std_error
    }
}

pub(crate) fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn aggregate(distances: &[f64]) -> (f64, f64) {
    let e = ScalarEstimate::from_samples(distances);
    (e.mean, e.std_error)
}

pub(crate) fn config_value<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configs serialize")
}
