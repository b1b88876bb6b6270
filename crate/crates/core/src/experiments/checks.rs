use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_samples, run_cv_decoupling, run_dv_decoupling, CvExperimentConfig, DvExperimentConfig, ExperimentResult,
    MarginalMode,
};
use crate::error::{invalid, Result};
use crate::fock::{
    dephase, fixed_total_strings, thermal_entropy, thermal_probability, FockRegister, ThermalState, Truncation,
};
use crate::haar::{apply_passive_circuit, random_passive_circuit, RngStream};
use crate::operator::{DensityOperator, C64};
use crate::stats::{total_variation, ScalarEstimate};

fn thermal_series(n_bar: f64, levels: usize) -> Vec<f64> {
    (0..levels as u32).map(|n| thermal_probability(n_bar, n)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveThermalConfig {
    pub n_bar: f64,
    pub n_modes: Vec<usize>,
    #[serde(default = "default_passive_samples")]
    pub samples: usize,
    pub seed: u64,
    /// Photon cap of the simulated register.
    #[serde(default = "default_cutoff")]
    pub cutoff: u32,
}

fn default_passive_samples() -> usize {
    100
}

fn default_cutoff() -> u32 {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassiveThermalEntry {
    pub n_modes: usize,
    /// Single-photon probability of the input mode, `n̄/(n̄+1)²`.
    pub p1: f64,
    pub p1_over_n: f64,
    /// Single-photon probability of `thermal(n̄/N)`.
    pub q1: f64,
    /// `None` when `n̄ = 0`, where both vanish.
    pub differ: Option<bool>,
    /// TV distance to `thermal(n̄/N)`, averaged over modes, per sample.
    pub per_sample_tv: Vec<f64>,
    pub tv: ScalarEstimate,
    /// The same distance for the input mode alone.
    pub first_mode_tv: ScalarEstimate,
    /// Largest off-diagonal element of the scrambled state before and
    /// after dephasing, over all samples.
    pub coherence_max: f64,
    pub dephased_offdiag_max: f64,
    /// Input norm kept by the photon cap.
    pub captured_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassiveThermalReport {
    pub n_bar: f64,
    pub entries: Vec<PassiveThermalEntry>,
}

struct PassiveSample {
    tv_mean: f64,
    tv_first: f64,
    coherence: f64,
    dephased: f64,
}

fn passive_sample(
    phi: &DMatrix<C64>,
    reg: &FockRegister,
    target: &[f64],
    rng_stream: RngStream,
) -> Result<PassiveSample> {
    let n = reg.n_modes();
    let mut rng = rng_stream.rng();
    let circuit = random_passive_circuit(n, &mut rng)?;
    let mut evolved = phi.clone();
    apply_passive_circuit(&circuit, reg, &mut evolved)?;
    let rho = DensityOperator::from_parts(&evolved * evolved.adjoint(), reg.spec());
    let offdiag = |m: &DMatrix<C64>| {
        let mut best = 0.0f64;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if i != j {
                    best = best.max(m[(i, j)].norm());
                }
            }
        }
        best
    };
    let dephased = dephase(&rho, reg)?;
    let levels = reg.max_occupancy() as usize + 1;
    let mut marginals = vec![vec![0.0; levels]; n];
    for (i, occ) in reg.basis().iter().enumerate() {
        let w = dephased.matrix()[(i, i)].re;
        for (mode, &k) in occ.iter().enumerate() {
            marginals[mode][k as usize] += w;
        }
    }
    let tvs: Vec<f64> = marginals.iter().map(|p| total_variation(p, target)).collect();
    Ok(PassiveSample {
        tv_mean: tvs.iter().sum::<f64>() / n as f64,
        tv_first: tvs[0],
        coherence: offdiag(rho.matrix()),
        dephased: offdiag(dephased.matrix()),
    })
}

/// Thermal light in one mode, vacuum elsewhere, spread by random passive
/// circuits: single-mode marginals compared with `thermal(n̄/N)`.
pub fn run_passive_thermal_check(cfg: &PassiveThermalConfig) -> Result<PassiveThermalReport> {
    if !(cfg.n_bar >= 0.0 && cfg.n_bar.is_finite()) {
        return Err(invalid("n_bar", format!("must be finite and >= 0, got {}", cfg.n_bar)));
    }
    if cfg.n_modes.iter().any(|&n| n < 2) || cfg.n_modes.is_empty() {
        return Err(invalid("n_modes", "every entry must be at least 2"));
    }
    check_samples(cfg.samples)?;
    let input = ThermalState::new(cfg.n_bar, cfg.cutoff, false)?.probabilities();
    let captured: f64 = input.iter().sum();
    let mut entries = Vec::with_capacity(cfg.n_modes.len());
    for &n in &cfg.n_modes {
        let reg = FockRegister::total_photon(n, cfg.cutoff)?;
        let mut phi = DMatrix::<C64>::zeros(reg.dim(), input.len());
        for (k, p) in input.iter().enumerate() {
            let mut s = vec![0u32; n];
            s[0] = k as u32;
            phi[(reg.index_of(&s).expect("within cap"), k)] = C64::new((p / captured).sqrt(), 0.0);
        }
        let nb = cfg.n_bar / n as f64;
        let target = thermal_series(nb, cfg.cutoff as usize + 1);
        let samples = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|k| passive_sample(&phi, &reg, &target, RngStream::new(cfg.seed, k)))
            .collect::<Result<Vec<_>>>()?;
        let per_sample_tv: Vec<f64> = samples.iter().map(|s| s.tv_mean).collect();
        let first: Vec<f64> = samples.iter().map(|s| s.tv_first).collect();
        let p1 = cfg.n_bar / (cfg.n_bar + 1.0).powi(2);
        let q1 = nb / (nb + 1.0).powi(2);
        let p1_over_n = p1 / n as f64;
        entries.push(PassiveThermalEntry {
            n_modes: n,
            p1,
            p1_over_n,
            q1,
            differ: (cfg.n_bar > 0.0).then(|| (p1_over_n - q1).abs() > 1e-12),
            tv: ScalarEstimate::from_samples(&per_sample_tv),
            first_mode_tv: ScalarEstimate::from_samples(&first),
            per_sample_tv,
            coherence_max: samples.iter().map(|s| s.coherence).fold(0.0, f64::max),
            dephased_offdiag_max: samples.iter().map(|s| s.dephased).fold(0.0, f64::max),
            captured_probability: captured,
        });
    }
    Ok(PassiveThermalReport { n_bar: cfg.n_bar, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalReductionConfig {
    pub n_modes: Vec<usize>,
    pub photons_per_mode: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReductionEntry {
    pub n_modes: usize,
    pub total_photons: u32,
    pub sector_dim: usize,
    /// Single-mode occupancy distribution of the uniform mixture.
    pub marginal: Vec<f64>,
    /// Geometric distribution with the same mean, on the same levels.
    pub thermal: Vec<f64>,
    pub mean: f64,
    pub tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReductionReport {
    pub photons_per_mode: u32,
    pub entries: Vec<ThermalReductionEntry>,
    /// Strictly decreasing TV along the entries with `N >= 2`.
    pub decreasing: bool,
}

/// Exact single-mode marginal of the maximally mixed state on the shell of
/// `total` photons in `n` modes.
pub fn thermal_reduction(n: usize, total: u32) -> Result<ThermalReductionEntry> {
    if n == 0 {
        return Err(invalid("n_modes", "must be at least 1"));
    }
    let strings = fixed_total_strings(n, total);
    let mut counts = vec![0usize; total as usize + 1];
    for s in &strings {
        counts[s[0] as usize] += 1;
    }
    let dim = strings.len();
    let marginal: Vec<f64> = counts.iter().map(|&c| c as f64 / dim as f64).collect();
    let mean = total as f64 / n as f64;
    let thermal = thermal_series(mean, marginal.len());
    Ok(ThermalReductionEntry {
        n_modes: n,
        total_photons: total,
        sector_dim: dim,
        tv: total_variation(&marginal, &thermal),
        marginal,
        thermal,
        mean,
    })
}

pub fn run_thermal_reduction_check(cfg: &ThermalReductionConfig) -> Result<ThermalReductionReport> {
    if cfg.n_modes.is_empty() {
        return Err(invalid("n_modes", "needs at least one entry"));
    }
    let entries = cfg
        .n_modes
        .iter()
        .map(|&n| thermal_reduction(n, cfg.photons_per_mode * n as u32))
        .collect::<Result<Vec<_>>>()?;
    let trend: Vec<f64> = entries.iter().filter(|e| e.n_modes >= 2).map(|e| e.tv).collect();
    let decreasing = trend.windows(2).all(|w| w[1] < w[0]);
    Ok(ThermalReductionReport { photons_per_mode: cfg.photons_per_mode, entries, decreasing })
}

/// `g((n_c - 1)/2) >= log2 n_c`: at equal mean photon number a thermal
/// mode carries at least as much entropy as a uniform `n_c`-level one.
pub fn thermal_beats_uniform(n_c: usize) -> Result<EncodingComparison> {
    if n_c < 1 {
        return Err(invalid("n_c", "must be at least 1"));
    }
    let n_bar = (n_c as f64 - 1.0) / 2.0;
    let truncated_rate = (n_c as f64).log2();
    let thermal = thermal_entropy(n_bar);
    Ok(EncodingComparison { n_c, n_bar, truncated_rate, thermal_entropy: thermal, holds: thermal >= truncated_rate })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingComparison {
    pub n_c: usize,
    pub n_bar: f64,
    pub truncated_rate: f64,
    pub thermal_entropy: f64,
    pub holds: bool,
}

/// Small decoupling runs of both encodings at matched mean photon number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallScaleRun {
    pub n_c: usize,
    pub n: usize,
    pub k: usize,
    pub erased_count: usize,
    pub max_photons: u32,
    #[serde(default = "default_small_delta")]
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
}

fn default_small_delta() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedComparisonConfig {
    #[serde(default = "default_nc_values")]
    pub n_c_values: Vec<usize>,
    #[serde(default)]
    pub small_scale: Option<SmallScaleRun>,
}

fn default_nc_values() -> Vec<usize> {
    (2..=10).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedComparisonReport {
    pub comparisons: Vec<EncodingComparison>,
    pub all_hold: bool,
    pub truncated_run: Option<ExperimentResult>,
    pub thermal_run: Option<ExperimentResult>,
}

pub fn run_truncated_comparison(cfg: &TruncatedComparisonConfig) -> Result<TruncatedComparisonReport> {
    let comparisons = cfg.n_c_values.iter().map(|&n_c| thermal_beats_uniform(n_c)).collect::<Result<Vec<_>>>()?;
    let all_hold = comparisons.iter().all(|c| c.holds);
    let (truncated_run, thermal_run) = match &cfg.small_scale {
        None => (None, None),
        Some(run) => {
            let dv = DvExperimentConfig {
                local_dim: run.n_c,
                n: run.n,
                k: run.k,
                erased_count: run.erased_count,
                samples: run.samples,
                seed: run.seed,
            };
            let n_bar = (run.n_c as f64 - 1.0) / 2.0;
            let cv = CvExperimentConfig {
                n: run.n,
                k: run.k,
                r: n_bar.sqrt().asinh(),
                truncation: Truncation::TotalPhoton(run.max_photons),
                delta: run.delta,
                erased_count: run.erased_count,
                samples: run.samples,
                seed: run.seed,
                marginal_mode: MarginalMode::Empirical,
                calibration_samples: 50,
            };
            (Some(run_dv_decoupling(&dv)?), Some(run_cv_decoupling(&cv)?))
        }
    };
    Ok(TruncatedComparisonReport { comparisons, all_hold, truncated_run, thermal_run })
}
