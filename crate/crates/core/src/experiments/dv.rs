use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, check_samples, config_value, ExperimentDetails, ExperimentResult, ResultMetadata};
use crate::erasure::{finite_dim_bound, truncated_bound};
use crate::error::{invalid, Error, Result};
use crate::haar::{haar_matrix, RngStream};
use crate::operator::{hermitian_trace_norm, C64, DENSE_LIMIT};

/// `K` qudit pairs maximally entangled with a reference, spread by a Haar
/// unitary over `N` qudits, of which the last `erased_count` are lost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DvExperimentConfig {
    pub local_dim: usize,
    pub n: usize,
    pub k: usize,
    pub erased_count: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
}

fn default_samples() -> usize {
    super::DEFAULT_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvDetails {
    pub dim_r: usize,
    pub dim_a1: usize,
    pub dim_a2: usize,
}

impl DvExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_dim < 2 {
            return Err(invalid("local_dim", "must be at least 2"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(invalid("k", format!("need 1 <= K <= N, got K = {}, N = {}", self.k, self.n)));
        }
        if self.erased_count > self.n {
            return Err(invalid("erased_count", format!("{} exceeds N = {}", self.erased_count, self.n)));
        }
        check_samples(self.samples)?;
        let dim = pow_checked(self.local_dim, self.n)?;
        pow_checked(self.local_dim, self.k)?;
        if dim > DENSE_LIMIT {
            return Err(Error::TooLarge { dim, limit: DENSE_LIMIT });
        }
        Ok(())
    }
}

fn pow_checked(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or(Error::TooLarge { dim: usize::MAX, limit: DENSE_LIMIT })
}

/// Trace distance between `tr_{A1}` of the scrambled state and
/// `ρ_R ⊗ I/q^e` for one unitary `u` on `A`.
fn sample_distance(cfg: &DvExperimentConfig, psi: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<f64> {
    let q = cfg.local_dim;
    let dim_r = psi.nrows();
    let dim_a2 = q.pow(cfg.erased_count as u32);
    let dim_a1 = psi.ncols() / dim_a2;
    // rows of psi index R, columns index A; the evolved state is psi U^T
    let evolved = psi * u.transpose();
    let mut m = DMatrix::<C64>::zeros(dim_r * dim_a2, dim_a1);
    for r in 0..dim_r {
        for a1 in 0..dim_a1 {
            for a2 in 0..dim_a2 {
                m[(r * dim_a2 + a2, a1)] = evolved[(r, a1 * dim_a2 + a2)];
            }
        }
    }
    let mut diff = &m * m.adjoint();
    let level = C64::new(1.0 / (dim_r * dim_a2) as f64, 0.0);
    for i in 0..diff.nrows() {
        diff[(i, i)] -= level;
    }
    hermitian_trace_norm(&diff)
}

/// Input state as a `q^K x q^N` amplitude matrix.
fn input_state(cfg: &DvExperimentConfig) -> DMatrix<C64> {
    let dim_r = cfg.local_dim.pow(cfg.k as u32);
    let rest = cfg.local_dim.pow((cfg.n - cfg.k) as u32);
    let amp = C64::new(1.0 / (dim_r as f64).sqrt(), 0.0);
    let mut psi = DMatrix::zeros(dim_r, dim_r * rest);
    for j in 0..dim_r {
        psi[(j, j * rest)] = amp;
    }
    psi
}

pub fn run_dv_decoupling(cfg: &DvExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let q = cfg.local_dim;
    let psi = input_state(cfg);
    let dim_a = psi.ncols();
    let per_sample_distances = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let u = haar_matrix(dim_a, &mut RngStream::new(cfg.seed, k).rng());
            sample_distance(cfg, &psi, &u)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = aggregate(&per_sample_distances);

    let dim_r = psi.nrows();
    let dim_a2 = q.pow(cfg.erased_count as u32);
    let dim_a1 = dim_a / dim_a2;
    let p = cfg.erased_count as f64 / cfg.n as f64;
    let truncated = truncated_bound(cfg.n, cfg.k, p, q)?;
    Ok(ExperimentResult {
        per_sample_distances,
        mean,
        std_error,
        bound_exact: finite_dim_bound(dim_r, dim_a1, dim_a2, 1.0)?,
        bound_asymptotic: truncated.value,
        gamma: truncated.gamma,
        capacity: truncated.capacity.max(0.0),
        typical_dim: None,
        details: ExperimentDetails::Dv(DvDetails { dim_r, dim_a1, dim_a2 }),
        warnings: Vec::new(),
        metadata: ResultMetadata {
            experiment: "decouple-dv".into(),
            config: config_value(cfg),
            seed: cfg.seed,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{trace_norm, DensityOperator, HilbertSpec, PureState};
    use nalgebra::DVector;

    fn cfg(n: usize, k: usize, erased_count: usize, samples: usize) -> DvExperimentConfig {
        DvExperimentConfig { local_dim: 2, n, k, erased_count, samples, seed: 17 }
    }

    #[test]
    fn nothing_erased_means_nothing_learned() {
        let res = run_dv_decoupling(&cfg(3, 1, 0, 20)).unwrap();
        assert!(res.per_sample_distances.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn single_qubit_matches_brute_force() {
        let c = cfg(1, 1, 1, 5);
        let res = run_dv_decoupling(&c).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = DVector::from_vec(vec![C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)]);
        let spec = HilbertSpec::new(vec![2, 2]).unwrap();
        let bell = PureState::new(bell, spec.clone()).unwrap().density();
        let mixed = DensityOperator::maximally_mixed(spec);
        for (k, &d) in res.per_sample_distances.iter().enumerate() {
            let u = haar_matrix(2, &mut RngStream::new(c.seed, k as u64).rng());
            let full = DMatrix::<C64>::identity(2, 2).kronecker(&u);
            let out = &full * bell.matrix() * full.adjoint();
            let expected = trace_norm(&(out - mixed.matrix())).unwrap();
            assert!((d - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_and_aggregate() {
        let res = run_dv_decoupling(&cfg(6, 1, 2, 40)).unwrap();
        assert!((res.bound_exact - 0.5f64.sqrt()).abs() < 1e-15);
        let mean = res.per_sample_distances.iter().sum::<f64>() / 40.0;
        assert!((res.mean - mean).abs() < 1e-15);
        assert!(res.within_bound(2.0));
        assert!(res.per_sample_distances.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn reproducible() {
        let a = run_dv_decoupling(&cfg(4, 1, 1, 16)).unwrap();
        let b = run_dv_decoupling(&cfg(4, 1, 1, 16)).unwrap();
        assert_eq!(a.per_sample_distances, b.per_sample_distances);
    }

    #[test]
    fn validation() {
        assert!(run_dv_decoupling(&cfg(2, 3, 0, 1)).is_err());
        assert!(run_dv_decoupling(&cfg(2, 1, 3, 1)).is_err());
        assert!(run_dv_decoupling(&cfg(2, 1, 1, 0)).is_err());
        assert!(matches!(run_dv_decoupling(&cfg(13, 1, 1, 1)), Err(Error::TooLarge { .. })));
    }
}
