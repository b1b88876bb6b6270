//! Exact one- and two-copy Haar twirls, with Monte-Carlo validators.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::haar::{haar_matrix, RngStream};
use crate::operator::{swap_operator, DensityOperator, C64};
use crate::stats::ScalarEstimate;

/// Weingarten values for `k = 2` on `U(d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeingartenTable2 {
    pub d: usize,
    pub wg_same: f64,
    pub wg_cross: f64,
}

impl WeingartenTable2 {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid("d", "two-copy Weingarten values need d >= 2"));
        }
        let df = d as f64;
        Ok(Self { d, wg_same: 1.0 / (df * df - 1.0), wg_cross: -1.0 / (df * (df * df - 1.0)) })
    }

    /// `E|U_00|^2`, equal to `1/d`.
    pub fn second_moment(&self) -> f64 {
        1.0 / self.d as f64
    }

    /// `E|U_00|^4 = 2 (wg_same + wg_cross)`.
    pub fn fourth_moment(&self) -> f64 {
        2.0 * (self.wg_same + self.wg_cross)
    }

    /// `d^2 wg_same + d wg_cross`, which is 1.
    pub fn orthogonality_sum(&self) -> f64 {
        let d = self.d as f64;
        d * d * self.wg_same + d * self.wg_cross
    }
}

/// The one-copy twirl sends every state to `I/d`.
pub fn twirl_single(rho: &DensityOperator) -> DensityOperator {
    DensityOperator::maximally_mixed(rho.spec().clone())
}

/// Coefficients `(c_I, c_F)` of the two-copy twirl of an operator with
/// traces `tr X` and `tr(XF)`.
pub fn twirl_double_coefficients(tr_x: C64, tr_xf: C64, d: usize) -> Result<(C64, C64)> {
    let wg = WeingartenTable2::new(d)?;
    Ok((tr_x * wg.wg_same + tr_xf * wg.wg_cross, tr_x * wg.wg_cross + tr_xf * wg.wg_same))
}

/// `∫ dU (U⊗U) X (U⊗U)†` for `X` on two copies of `C^d`.
pub fn twirl_double(x: &DMatrix<C64>, d: usize) -> Result<DMatrix<C64>> {
    if !x.is_square() {
        return Err(Error::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    if x.nrows() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: x.nrows() });
    }
    let f = swap_operator(d);
    let tr_xf = (x * &f).trace();
    let (ci, cf) = twirl_double_coefficients(x.trace(), tr_xf, d)?;
    Ok(DMatrix::identity(d * d, d * d) * ci + f * cf)
}

/// `X = I_{A1 A1'} ⊗ F_{A2 A2'}` on two copies of `A = A1 ⊗ A2`, written in
/// the copy-major order `(A1, A2, A1', A2')`.
pub fn split_swap_operator(d1: usize, d2: usize) -> DMatrix<C64> {
    let d = d1 * d2;
    let mut x = DMatrix::zeros(d * d, d * d);
    for a1 in 0..d1 {
        for b1 in 0..d1 {
            for a2 in 0..d2 {
                for b2 in 0..d2 {
                    // |a1 a2, b1 b2> -> |a1 b2, b1 a2>
                    let col = (a1 * d2 + a2) * d + b1 * d2 + b2;
                    let row = (a1 * d2 + b2) * d + b1 * d2 + a2;
                    x[(row, col)] = C64::new(1.0, 0.0);
                }
            }
        }
    }
    x
}

/// Two-copy twirl of [`split_swap_operator`] and the looser pair of
/// coefficients that bounds it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitTwirl {
    pub d1: usize,
    pub d2: usize,
    pub coeff_identity: f64,
    pub coeff_swap: f64,
    /// `1/d2`
    pub bound_identity: f64,
    /// `1/d1`
    pub bound_swap: f64,
}

impl SplitTwirl {
    pub fn dim(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn operator(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::identity(d * d, d * d) * C64::new(self.coeff_identity, 0.0)
            + swap_operator(d) * C64::new(self.coeff_swap, 0.0)
    }
}

pub fn twirl_double_split(d1: usize, d2: usize) -> Result<SplitTwirl> {
    if d1 == 0 || d2 == 0 {
        return Err(invalid("d1, d2", "dimensions must be positive"));
    }
    if d1 * d2 < 2 {
        return Err(invalid("d1, d2", "total dimension must be at least 2"));
    }
    let (a, b) = (d1 as f64, d2 as f64);
    let d = a * b;
    let denom = 1.0 - 1.0 / (d * d);
    Ok(SplitTwirl {
        d1,
        d2,
        coeff_identity: (1.0 / b) * (1.0 - 1.0 / (a * a)) / denom,
        coeff_swap: (1.0 / a) * (1.0 - 1.0 / (b * b)) / denom,
        bound_identity: 1.0 / b,
        bound_swap: 1.0 / a,
    })
}

/// Sample mean and elementwise standard error of a matrix-valued estimator.
///
/// The error of a complex entry is `sqrt(E|z - mean|^2 / M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixEstimate {
    pub mean: DMatrix<C64>,
    pub std_error: DMatrix<f64>,
    pub samples: usize,
}

impl MatrixEstimate {
    fn from_samples(samples: &[DMatrix<C64>]) -> Self {
        let m = samples.len();
        let (r, c) = samples[0].shape();
        let mut mean = DMatrix::<C64>::zeros(r, c);
        for s in samples {
            mean += s;
        }
        mean /= C64::new(m as f64, 0.0);
        let mut var = DMatrix::<f64>::zeros(r, c);
        for s in samples {
            for (v, (z, mu)) in var.iter_mut().zip(s.iter().zip(mean.iter())) {
                *v += (z - mu).norm_sqr();
            }
        }
        let denom = (m.max(2) - 1) as f64 * m as f64;
        let std_error = var.map(|v| (v / denom).sqrt());
        Self { mean, std_error, samples: m }
    }

    /// Largest `|mean - target|` over entries.
    pub fn max_abs_delta(&self, target: &DMatrix<C64>) -> f64 {
        self.mean.iter().zip(target.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Whether every entry lies within `z` standard errors of `target`.
    /// Entries whose error is zero must match to `floor`.
    pub fn within(&self, target: &DMatrix<C64>, z: f64, floor: f64) -> bool {
        self.mean
            .iter()
            .zip(target.iter())
            .zip(self.std_error.iter())
            .all(|((a, b), se)| (a - b).norm() <= z * se + floor)
    }

    /// Largest `|mean - target| / se`, skipping entries with no spread.
    pub fn max_z_score(&self, target: &DMatrix<C64>) -> f64 {
        self.mean
            .iter()
            .zip(target.iter())
            .zip(self.std_error.iter())
            .filter(|(_, se)| **se > 0.0)
            .map(|((a, b), se)| (a - b).norm() / se)
            .fold(0.0, f64::max)
    }
}

/// Evaluates `f(U)` for `samples` independent Haar draws on `U(d)`; draw
/// `k` uses stream `k`, results are in sample order.
fn sample_haar<T, F>(d: usize, samples: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DMatrix<C64>) -> T + Sync,
{
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    Ok((0..samples as u64).into_par_iter().map(|k| f(&haar_matrix(d, &mut RngStream::new(seed, k).rng()))).collect())
}

/// Monte-Carlo estimate of `∫ dU U rho U†`.
pub fn mc_twirl_single(rho: &DensityOperator, samples: usize, seed: u64) -> Result<MatrixEstimate> {
    let m = rho.matrix();
    let draws = sample_haar(rho.dim(), samples, seed, |u| u * m * u.adjoint())?;
    Ok(MatrixEstimate::from_samples(&draws))
}

/// Monte-Carlo estimate of `∫ dU (U⊗U) X (U⊗U)†`.
pub fn mc_twirl_double(x: &DMatrix<C64>, d: usize, samples: usize, seed: u64) -> Result<MatrixEstimate> {
    if x.nrows() != d * d || !x.is_square() {
        return Err(Error::DimensionMismatch { expected: d * d, found: x.nrows() });
    }
    let draws = sample_haar(d, samples, seed, |u| {
        let uu = u.kronecker(u);
        &uu * x * uu.adjoint()
    })?;
    Ok(MatrixEstimate::from_samples(&draws))
}

/// Monte-Carlo estimates of `E|U_00|^2` and `E|U_00|^4`.
pub fn mc_haar_moments(d: usize, samples: usize, seed: u64) -> Result<(ScalarEstimate, ScalarEstimate)> {
    let draws = sample_haar(d, samples, seed, |u| u[(0, 0)].norm_sqr())?;
    let fourth: Vec<f64> = draws.iter().map(|x| x * x).collect();
    Ok((ScalarEstimate::from_samples(&draws), ScalarEstimate::from_samples(&fourth)))
}

/// Analytic-versus-sampled comparison for one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwirlCheck {
    pub d: usize,
    pub samples: usize,
    pub seed: u64,
    /// Largest entrywise deviation of the sampled two-copy twirl.
    pub double_max_abs_delta: f64,
    /// The same deviation in units of its standard error.
    pub double_max_z: f64,
    pub double_within_3se: bool,
    /// `‖mean - I/d‖_1` for the one-copy twirl of a random pure state.
    pub single_trace_distance: f64,
    /// `3 sqrt(d) sqrt(sum se^2)`, a trace-norm tolerance from the
    /// entrywise errors.
    pub single_tolerance: f64,
    pub second_moment: ScalarEstimate,
    pub second_moment_exact: f64,
    pub fourth_moment: ScalarEstimate,
    pub fourth_moment_exact: f64,
    pub passed: bool,
}

/// Runs every sampled validator at dimension `d` against the closed forms.
/// The two-copy input is a random Hermitian operator drawn from stream
/// `u64::MAX` of `seed`, disjoint from the Haar draws.
pub fn twirl_check(d: usize, samples: usize, seed: u64) -> Result<TwirlCheck> {
    let table = WeingartenTable2::new(d)?;
    let mut rng = RngStream::new(seed, u64::MAX).rng();
    let x = crate::random::random_hermitian(d * d, &mut rng);
    let exact = twirl_double(&x, d)?;
    let double = mc_twirl_double(&x, d, samples, seed)?;

    let spec = crate::operator::HilbertSpec::single(d)?;
    let rho = crate::random::random_pure(&spec, &mut rng).density();
    let single = mc_twirl_single(&rho, samples, seed)?;
    let target = twirl_single(&rho);
    let single_trace_distance = crate::operator::trace_norm(&(&single.mean - target.matrix()))?;
    let single_tolerance = 3.0 * (d as f64).sqrt() * single.std_error.iter().map(|s| s * s).sum::<f64>().sqrt();

    let (m2, m4) = mc_haar_moments(d, samples, seed)?;
    let double_within_3se = double.within(&exact, 3.0, 1e-12);
    let passed = double_within_3se
        && single_trace_distance <= single_tolerance
        && m2.z_score(table.second_moment()) <= 3.0
        && m4.z_score(table.fourth_moment()) <= 3.0;
    Ok(TwirlCheck {
        d,
        samples,
        seed,
        double_max_abs_delta: double.max_abs_delta(&exact),
        double_max_z: double.max_z_score(&exact),
        double_within_3se,
        single_trace_distance,
        single_tolerance,
        second_moment: m2,
        second_moment_exact: table.second_moment(),
        fourth_moment: m4,
        fourth_moment_exact: table.fourth_moment(),
        passed,
    })
}
