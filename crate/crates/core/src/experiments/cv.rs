use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate, check_samples, config_value, ExperimentDetails, ExperimentResult, ResultMetadata, AUXILIARY_STREAM_BASE,
};
use crate::erasure::{cv_capacity, decoupling_bound, finite_dim_bound, rate, CodingParameters};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    typical_projector, DiagonalModeDistribution, FockRegister, ModeSplit, ThermalState, Truncation, TypicalSubspaceSpec,
};
use crate::haar::{apply_passive_circuit, haar_unitary_on_subspace, random_passive_circuit, RngStream};
use crate::operator::{hermitian_trace_norm, C64, DENSE_LIMIT};

/// Source of the single-mode distribution that defines the typical set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// Dephased single-mode marginal after passive scrambling, averaged over
    /// calibration circuits and modes.
    #[default]
    Empirical,
    /// Thermal distribution with mean `K sinh²r / N`.
    AnalyticThermal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub truncation: Truncation,
    pub delta: f64,
    pub erased_count: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub marginal_mode: MarginalMode,
    #[serde(default = "default_calibration")]
    pub calibration_samples: usize,
}

fn default_samples() -> usize {
    super::DEFAULT_SAMPLES
}

fn default_calibration() -> usize {
    50
}

const CAPTURE_WARNING: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvDetails {
    pub dim_r: usize,
    /// Dimension of the truncated register on `A`.
    pub sector_dim: usize,
    /// Distinct `A2` / `A1` substrings in the whole register.
    pub sector_dim_a2: usize,
    pub sector_dim_a1: usize,
    /// Typical-restricted dimensions used by the exact bound.
    pub d_a2: usize,
    pub d_a1: usize,
    /// Typical strings that exceed the photon cap.
    pub typical_dropped: usize,
    /// Base probability of the (unrestricted) typical set.
    pub typical_probability: f64,
    pub marginal: Vec<f64>,
    pub marginal_entropy: f64,
    /// Norm of the input before renormalization onto the register.
    pub captured_probability: f64,
    pub r0: f64,
    pub capacity_raw: f64,
}

impl CvExperimentConfig {
    fn max_photons(&self) -> Result<u32> {
        match self.truncation {
            Truncation::TotalPhoton(m) => Ok(m),
            Truncation::PerMode(_) => Err(invalid("truncation", "passive scrambling requires total_photon truncation")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(invalid("k", format!("need 1 <= K <= N, got K = {}, N = {}", self.k, self.n)));
        }
        if self.erased_count > self.n {
            return Err(invalid("erased_count", format!("{} exceeds N = {}", self.erased_count, self.n)));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("r", format!("must be finite and >= 0, got {}", self.r)));
        }
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        check_samples(self.samples)?;
        if self.marginal_mode == MarginalMode::Empirical && self.calibration_samples == 0 {
            return Err(invalid("calibration_samples", "must be at least 1 in empirical mode"));
        }
        self.max_photons()?;
        Ok(())
    }
}

/// The `K` squeezed pairs as an `A`-register-by-`R`-register amplitude
/// matrix, and the probability captured by the photon cap.
fn input_state(cfg: &CvExperimentConfig, reg_r: &FockRegister, reg_a: &FockRegister) -> Result<(DMatrix<C64>, f64)> {
    let (t, c) = (cfg.r.tanh(), 1.0 / cfg.r.cosh());
    let mut phi = DMatrix::<C64>::zeros(reg_a.dim(), reg_r.dim());
    let mut captured = 0.0;
    for (col, s) in reg_r.basis().iter().enumerate() {
        let amp: f64 = s.iter().map(|&n| c * t.powi(n as i32)).product();
        let mut full = s.clone();
        full.resize(cfg.n, 0);
        let row = reg_a.index_of(&full).expect("same photon cap");
        phi[(row, col)] = C64::new(amp, 0.0);
        captured += amp * amp;
    }
    if captured <= 0.0 {
        return Err(invalid("r", "no amplitude survives the truncation"));
    }
    phi /= C64::new(captured.sqrt(), 0.0);
    Ok((phi, captured))
}

/// Average dephased single-mode distribution of `phi` over all modes.
fn mode_marginal(phi: &DMatrix<C64>, reg: &FockRegister, levels: usize) -> Vec<f64> {
    let mut p = vec![0.0; levels];
    for (row, occ) in reg.basis().iter().enumerate() {
        let weight: f64 = phi.row(row).iter().map(|z| z.norm_sqr()).sum();
        for &n in occ {
            p[n as usize] += weight;
        }
    }
    let n_modes = reg.n_modes() as f64;
    p.iter_mut().for_each(|x| *x /= n_modes);
    p
}

fn base_distribution(cfg: &CvExperimentConfig, phi: &DMatrix<C64>, reg_a: &FockRegister) -> Result<Vec<f64>> {
    let m = cfg.max_photons()?;
    let probs = match cfg.marginal_mode {
        MarginalMode::AnalyticThermal => {
            let n_bar = cfg.k as f64 * cfg.r.sinh().powi(2) / cfg.n as f64;
            ThermalState::new(n_bar, m, true)?.probabilities()
        }
        MarginalMode::Empirical => {
            let draws = (0..cfg.calibration_samples as u64)
                .into_par_iter()
                .map(|j| {
                    let mut rng = RngStream::new(cfg.seed, AUXILIARY_STREAM_BASE + j).rng();
                    let circuit = random_passive_circuit(cfg.n, &mut rng)?;
                    let mut evolved = phi.clone();
                    apply_passive_circuit(&circuit, reg_a, &mut evolved)?;
                    Ok(mode_marginal(&evolved, reg_a, m as usize + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut p = vec![0.0; m as usize + 1];
            for d in &draws {
                p.iter_mut().zip(d).for_each(|(a, b)| *a += b);
            }
            p
        }
    };
    let total: f64 = probs.iter().sum();
    Ok(probs.into_iter().map(|x| x / total).collect())
}

struct Typical {
    indices: Vec<usize>,
    dropped: usize,
    probability: f64,
    /// Diagonal of `tr_{A1}[Π_typ] / d` on the kept strings of the split.
    pi_a2: Vec<f64>,
    d_a2: usize,
}

fn typical_subspace(
    cfg: &CvExperimentConfig,
    base: &DiagonalModeDistribution,
    reg_a: &FockRegister,
    split: &ModeSplit,
) -> Result<Typical> {
    let spec = TypicalSubspaceSpec { base: base.clone(), n_modes: cfg.n, delta: cfg.delta };
    let set = typical_projector(&spec)?;
    let (indices, dropped) = set.restrict_to(reg_a);
    if indices.is_empty() {
        return Err(Error::EmptyTypicalSet { n_modes: cfg.n, delta: cfg.delta, entropy: set.entropy });
    }
    let d = indices.len() as f64;
    let mut pi_a2 = vec![0.0; split.kept_strings.len()];
    for &i in &indices {
        pi_a2[split.pairs[i].0] += 1.0 / d;
    }
    let d_a2 = pi_a2.iter().filter(|&&x| x > 0.0).count();
    Ok(Typical { indices, dropped, probability: set.probability, pi_a2, d_a2 })
}

pub fn run_cv_decoupling(cfg: &CvExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let m = cfg.max_photons()?;
    let reg_r = FockRegister::total_photon(cfg.k, m)?;
    let reg_a = FockRegister::total_photon(cfg.n, m)?;
    if reg_a.dim() > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: reg_a.dim(), limit: DENSE_LIMIT });
    }
    let mut warnings = Vec::new();
    let (phi, captured) = input_state(cfg, &reg_r, &reg_a)?;
    if captured < CAPTURE_WARNING {
        warnings.push(format!("photon cap {m} captures only {captured:.4} of the input norm; raise the truncation"));
    }

    let kept: Vec<usize> = (cfg.n - cfg.erased_count..cfg.n).collect();
    let split = reg_a.split(&kept)?;
    let marginal = base_distribution(cfg, &phi, &reg_a)?;
    let base = DiagonalModeDistribution::new(marginal.clone())?;
    let typical = typical_subspace(cfg, &base, &reg_a, &split)?;
    if typical.dropped > 0 {
        warnings.push(format!("{} typical strings exceed the photon cap and were dropped", typical.dropped));
    }

    let psi = phi.transpose();
    let rho_r = &psi * psi.adjoint();
    let reference = rho_r.kronecker(&DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        typical.pi_a2.len(),
        typical.pi_a2.iter().map(|&x| C64::new(x, 0.0)),
    )));

    let per_sample_distances = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(cfg.seed, k).rng();
            let circuit = random_passive_circuit(cfg.n, &mut rng)?;
            let mut evolved = phi.clone();
            apply_passive_circuit(&circuit, &reg_a, &mut evolved)?;
            let u_t = haar_unitary_on_subspace(&typical.indices, reg_a.dim(), &mut rng)?;
            let scrambled = &u_t.matrix * evolved;
            let rho = split.reduce_pure(&scrambled.transpose());
            hermitian_trace_norm(&(rho.matrix() - &reference))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = aggregate(&per_sample_distances);

    let d = typical.indices.len();
    let d_a1 = d.div_ceil(typical.d_a2);
    let params = CodingParameters::new(cfg.n, cfg.k, cfg.erased_count, cfg.r)?;
    let capacity = cv_capacity(params.p(), params.r0)?;
    if capacity.clamped {
        warnings.push(format!("capacity {:.6} is negative and was clamped to 0", capacity.raw));
    }
    let details = CvDetails {
        dim_r: reg_r.dim(),
        sector_dim: reg_a.dim(),
        sector_dim_a2: split.kept_strings.len(),
        sector_dim_a1: split.traced_strings.len(),
        d_a2: typical.d_a2,
        d_a1,
        typical_dropped: typical.dropped,
        typical_probability: typical.probability,
        marginal_entropy: base.entropy(),
        marginal,
        captured_probability: captured,
        r0: params.r0,
        capacity_raw: capacity.raw,
    };
    Ok(ExperimentResult {
        per_sample_distances,
        mean,
        std_error,
        bound_exact: finite_dim_bound(reg_r.dim(), d_a1, typical.d_a2, 1.0)?,
        bound_asymptotic: decoupling_bound(&params)?,
        gamma: rate(cfg.k, cfg.n, cfg.r)?,
        capacity: capacity.value,
        typical_dim: Some(d),
        details: ExperimentDetails::Cv(details),
        warnings,
        metadata: ResultMetadata {
            experiment: "decouple-cv".into(),
            config: config_value(cfg),
            seed: cfg.seed,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::tmss_state;

    fn cfg(n: usize, k: usize, erased_count: usize, r: f64, m: u32) -> CvExperimentConfig {
        CvExperimentConfig {
            n,
            k,
            r,
            truncation: Truncation::TotalPhoton(m),
            delta: 100.0,
            erased_count,
            samples: 20,
            seed: 5,
            marginal_mode: MarginalMode::Empirical,
            calibration_samples: 10,
        }
    }

    fn details(res: &ExperimentResult) -> &CvDetails {
        match &res.details {
            ExperimentDetails::Cv(d) => d,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vacuum_input_stays_decoupled() {
        for mode in [MarginalMode::Empirical, MarginalMode::AnalyticThermal] {
            let mut c = cfg(2, 1, 1, 0.0, 3);
            c.marginal_mode = mode;
            let res = run_cv_decoupling(&c).unwrap();
            assert!(res.per_sample_distances.iter().all(|&d| d < 1e-12), "{mode:?}");
            assert_eq!(res.typical_dim, Some(1));
        }
    }

    #[test]
    fn single_pair_input_matches_tmss() {
        let c = cfg(1, 1, 0, 0.6, 6);
        let reg = FockRegister::total_photon(1, 6).unwrap();
        let (phi, captured) = input_state(&c, &reg, &reg).unwrap();
        let tmss = tmss_state(0.6, 6, false).unwrap();
        let mut norm = 0.0;
        for n in 0..=6 {
            let a = tmss.amplitudes()[n * 7 + n];
            norm += a.norm_sqr();
            assert!((phi[(n, n)] * captured.sqrt() - a).norm() < 1e-14);
        }
        assert!((captured - norm).abs() < 1e-14);
    }

    #[test]
    fn empirical_marginal_conserves_mean() {
        let c = cfg(2, 1, 1, 1f64.asinh(), 6);
        let reg = FockRegister::total_photon(2, 6).unwrap();
        let reg_r = FockRegister::total_photon(1, 6).unwrap();
        let (phi, _) = input_state(&c, &reg_r, &reg).unwrap();
        let p = base_distribution(&c, &phi, &reg).unwrap();
        let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
        // passive circuits conserve total photons; per-mode mean = total / N
        let total: f64 = (0..reg.dim())
            .map(|row| {
                let w: f64 = phi.row(row).iter().map(|z| z.norm_sqr()).sum();
                w * reg.occupation(row).iter().sum::<u32>() as f64
            })
            .sum();
        assert!((mean - total / 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_typical_set_dimensions() {
        let res = run_cv_decoupling(&cfg(3, 1, 1, 1f64.asinh(), 4)).unwrap();
        let d = details(&res);
        assert_eq!(res.typical_dim, Some(35));
        assert_eq!((d.d_a2, d.d_a1, d.dim_r), (5, 7, 5));
        assert!((res.bound_exact - (25.0f64 / 7.0).sqrt()).abs() < 1e-14);
        assert!(res.within_bound(2.0));
        assert!(res.per_sample_distances.iter().all(|&x| (0.0..=2.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn narrow_typical_set_and_empty_error() {
        let mut c = cfg(3, 1, 1, 1f64.asinh(), 4);
        c.marginal_mode = MarginalMode::AnalyticThermal;
        c.delta = 0.3;
        let res = run_cv_decoupling(&c).unwrap();
        assert!(res.typical_dim.unwrap() < 35);
        c.n = 1;
        c.erased_count = 0;
        c.delta = 0.0;
        assert!(matches!(run_cv_decoupling(&c), Err(Error::EmptyTypicalSet { .. })));
    }

    #[test]
    fn low_cap_warns() {
        let res = run_cv_decoupling(&cfg(2, 1, 1, 1.5, 2)).unwrap();
        assert!(res.warnings.iter().any(|w| w.contains("captures")));
    }

    #[test]
    fn reproducible_and_validated() {
        let a = run_cv_decoupling(&cfg(2, 1, 1, 0.5, 3)).unwrap();
        let b = run_cv_decoupling(&cfg(2, 1, 1, 0.5, 3)).unwrap();
        assert_eq!(a.per_sample_distances, b.per_sample_distances);

        let mut bad = cfg(2, 1, 1, 0.5, 3);
        bad.truncation = Truncation::PerMode(3);
        assert!(run_cv_decoupling(&bad).is_err());
        assert!(run_cv_decoupling(&cfg(2, 3, 1, 0.5, 3)).is_err());
        assert!(run_cv_decoupling(&cfg(2, 1, 3, 0.5, 3)).is_err());
    }
}
