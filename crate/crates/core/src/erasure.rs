//! Erasure channels and the capacity, rate and decoupling-bound formulas.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{r0_from, tmss_entanglement};
use crate::operator::{DensityOperator, HilbertSpec, C64};

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid("p", format!("erasure probability must lie in [0, 1], got {p}")))
    }
}

/// `ρ -> (1-p) ρ ⊕ 0 + p |e><e|`, with the flag `|e>` at index `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvErasureChannel {
    d: usize,
    p: f64,
}

impl DvErasureChannel {
    pub fn new(d: usize, p: f64) -> Result<Self> {
        check_probability(p)?;
        if d == 0 {
            return Err(invalid("d", "input dimension must be at least 1"));
        }
        Ok(Self { d, p })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn output_dim(&self) -> usize {
        self.d + 1
    }

    /// Linear action on an arbitrary `d x d` matrix.
    pub fn apply_matrix(&self, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        if x.shape() != (self.d, self.d) {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.nrows() });
        }
        let mut out = DMatrix::zeros(self.d + 1, self.d + 1);
        out.view_mut((0, 0), (self.d, self.d)).copy_from(&(x * C64::new(1.0 - self.p, 0.0)));
        out[(self.d, self.d)] = x.trace() * self.p;
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let out = self.apply_matrix(rho.matrix())?;
        Ok(DensityOperator::from_parts(out, HilbertSpec::single(self.d + 1)?))
    }

    pub fn choi(&self) -> DMatrix<C64> {
        choi_matrix(self.d, |x| self.apply_matrix(x).expect("shape checked"))
    }
}

/// `ρ -> (1-p) ρ ⊗ |↑><↑| + p |0><0| ⊗ |↓><↓|` on a mode truncated at
/// `cutoff` photons. The flag is the second factor, `↑ = 0` and `↓ = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvErasureChannel {
    cutoff: u32,
    p: f64,
}

pub const FLAG_TRANSMITTED: usize = 0;
pub const FLAG_ERASED: usize = 1;

impl CvErasureChannel {
    pub fn new(cutoff: u32, p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self { cutoff, p })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn output_spec(&self) -> HilbertSpec {
        HilbertSpec::new(vec![self.cutoff as usize + 1, 2]).expect("positive dims")
    }

    pub fn apply_matrix(&self, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let d = self.cutoff as usize + 1;
        if x.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: x.nrows() });
        }
        let mut out = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                out[(2 * i + FLAG_TRANSMITTED, 2 * j + FLAG_TRANSMITTED)] = x[(i, j)] * (1.0 - self.p);
            }
        }
        out[(FLAG_ERASED, FLAG_ERASED)] = x.trace() * self.p;
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let out = self.apply_matrix(rho.matrix())?;
        Ok(DensityOperator::from_parts(out, self.output_spec()))
    }

    pub fn choi(&self) -> DMatrix<C64> {
        choi_matrix(self.cutoff as usize + 1, |x| self.apply_matrix(x).expect("shape checked"))
    }
}

/// `J = sum_ij |i><j| ⊗ Φ(|i><j|)`.
pub fn choi_matrix<F>(d_in: usize, channel: F) -> DMatrix<C64>
where
    F: Fn(&DMatrix<C64>) -> DMatrix<C64>,
{
    let mut blocks = Vec::with_capacity(d_in * d_in);
    for i in 0..d_in {
        for j in 0..d_in {
            let mut e = DMatrix::zeros(d_in, d_in);
            e[(i, j)] = C64::new(1.0, 0.0);
            blocks.push(channel(&e));
        }
    }
    let d_out = blocks[0].nrows();
    let mut choi = DMatrix::zeros(d_in * d_out, d_in * d_out);
    for i in 0..d_in {
        for j in 0..d_in {
            choi.view_mut((i * d_out, j * d_out), (d_out, d_out)).copy_from(&blocks[i * d_in + j]);
        }
    }
    choi
}

/// `max{(1-2p) log2 d, 0}` bits per use.
pub fn dv_capacity(p: f64, d: usize) -> Result<f64> {
    check_probability(p)?;
    if d < 2 {
        return Err(invalid("d", "capacity needs d >= 2"));
    }
    Ok(((1.0 - 2.0 * p) * (d as f64).log2()).max(0.0))
}

/// Energy-constrained capacity per mode. Negative raw values are clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCapacity {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `(1-2p) E(r0)`, clamped at zero.
pub fn cv_capacity(p: f64, r0: f64) -> Result<CvCapacity> {
    check_probability(p)?;
    if r0.is_nan() || r0 < 0.0 {
        return Err(invalid("r0", format!("must be >= 0, got {r0}")));
    }
    let raw = (1.0 - 2.0 * p) * tmss_entanglement(r0);
    Ok(CvCapacity { value: raw.max(0.0), raw, clamped: raw < 0.0 })
}

/// `K E(r) / N` bits per mode.
pub fn rate(k: usize, n: usize, r: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid("K", format!("need 1 <= K <= N, got K = {k}, N = {n}")));
    }
    if r.is_nan() || r < 0.0 {
        return Err(invalid("r", format!("must be >= 0, got {r}")));
    }
    Ok(k as f64 * tmss_entanglement(r) / n as f64)
}

/// `N` modes carrying `K` squeezed pairs of strength `r`, of which
/// `erased_count` are erased.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodingParameters {
    pub n: usize,
    pub k: usize,
    pub erased_count: usize,
    pub r: f64,
    pub r0: f64,
}

impl CodingParameters {
    /// Derives `r0` from `sinh²r0 = K sinh²r / N`.
    pub fn new(n: usize, k: usize, erased_count: usize, r: f64) -> Result<Self> {
        if erased_count > n {
            return Err(invalid("erased_count", format!("{erased_count} exceeds N = {n}")));
        }
        let r0 = r0_from(k, n, r)?;
        Ok(Self { n, k, erased_count, r, r0 })
    }

    pub fn p(&self) -> f64 {
        self.erased_count as f64 / self.n as f64
    }

    pub fn gamma(&self) -> Result<f64> {
        rate(self.k, self.n, self.r)
    }

    /// Unclamped `(1-2p) E(r0)`.
    pub fn capacity(&self) -> f64 {
        (1.0 - 2.0 * self.p()) * tmss_entanglement(self.r0)
    }

    fn check_r0(&self) -> Result<()> {
        let found = self.r0.sinh().powi(2);
        let expected = self.k as f64 * self.r.sinh().powi(2) / self.n as f64;
        if (found - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::InconsistentSqueezing { found, expected });
        }
        Ok(())
    }
}

const FORM_AGREEMENT: f64 = 1e-12;

/// `2^{(K/2)E(r) - (1/2 - p) N E(r0)}`, which equals
/// `2^{-[(1/2 - p)E(r0) - γ/2] N}`; both are evaluated and must agree.
pub fn decoupling_bound(params: &CodingParameters) -> Result<f64> {
    if params.k == 0 || params.k > params.n || params.erased_count > params.n {
        return Err(invalid("params", format!("{params:?} violates 1 <= K <= N, pN <= N")));
    }
    params.check_r0()?;
    let (n, k, p) = (params.n as f64, params.k as f64, params.p());
    let e_r = tmss_entanglement(params.r);
    let e_r0 = tmss_entanglement(params.r0);
    let gamma = params.gamma()?;
    let first = (0.5 * k * e_r - (0.5 - p) * n * e_r0).exp2();
    let second = (-((0.5 - p) * e_r0 - 0.5 * gamma) * n).exp2();
    if (first - second).abs() > FORM_AGREEMENT * first.abs().max(second.abs()).max(1.0) {
        return Err(Error::InconsistentBound { first, second });
    }
    Ok(first)
}

/// `sqrt(d_R d_A2 / d_A1 · tr ρ²)`.
pub fn finite_dim_bound(d_r: usize, d_a1: usize, d_a2: usize, purity: f64) -> Result<f64> {
    if d_r == 0 || d_a1 == 0 || d_a2 == 0 {
        return Err(invalid("dimensions", "must all be at least 1"));
    }
    if !(purity > 0.0 && purity <= 1.0 + 1e-12) {
        return Err(invalid("purity", format!("must lie in (0, 1], got {purity}")));
    }
    Ok((d_r as f64 * d_a2 as f64 / d_a1 as f64 * purity).sqrt())
}

/// Decoupling bound for `K` truncated Bell pairs of local dimension `n_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedBound {
    /// `sqrt(n_c^{K + pN} / n_c^{(1-p)N})`.
    pub value: f64,
    /// `log2` of `value`, equal to `-N (Q - γ) / 2`.
    pub log2_value: f64,
    pub gamma: f64,
    pub capacity: f64,
    /// `2^{-N (Q - γ)}`: the same expression without the square root.
    pub unrooted_form: f64,
}

pub fn truncated_bound(n: usize, k: usize, p: f64, n_c: usize) -> Result<TruncatedBound> {
    check_probability(p)?;
    if n_c < 2 {
        return Err(invalid("n_c", "truncation dimension must be at least 2"));
    }
    if k == 0 || k > n {
        return Err(invalid("K", format!("need 1 <= K <= N, got K = {k}, N = {n}")));
    }
    let (nf, kf) = (n as f64, k as f64);
    let log_nc = (n_c as f64).log2();
    let log2_value = 0.5 * (kf + p * nf - (1.0 - p) * nf) * log_nc;
    let gamma = kf / nf * log_nc;
    let capacity = (1.0 - 2.0 * p) * log_nc;
    Ok(TruncatedBound {
        value: log2_value.exp2(),
        log2_value,
        gamma,
        capacity,
        unrooted_form: (-nf * (capacity - gamma)).exp2(),
    })
}
