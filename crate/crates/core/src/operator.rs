//! Dense complex operators over multi-factor Hilbert spaces.
//!
//! Every space is an ordered list of local dimensions and all index
//! arithmetic is row-major over that list: the first factor is the most
//! significant digit. Entropies are in bits.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Tolerance for the Hermiticity, trace and PSD checks on density operators.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Eigenvalues in `[-CLIP_TOL, 0)` are treated as zero; anything more
/// negative is reported as an error.
pub const CLIP_TOL: f64 = 1e-10;

/// Largest total dimension the dense routines accept.
pub const DENSE_LIMIT: usize = 4096;

/// Ordered list of local dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    factors: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if let Some(pos) = factors.iter().position(|&d| d == 0) {
            return Err(crate::error::invalid("factors", format!("factor {pos} has dimension 0")));
        }
        Ok(Self { factors })
    }

    /// A single factor of dimension `d`.
    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn concat(&self, other: &HilbertSpec) -> HilbertSpec {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        HilbertSpec { factors }
    }

    /// Row-major strides: `strides[i]` is the index step of factor `i`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for i in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.factors[i + 1];
        }
        strides
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.factors.len());
        digits.iter().zip(&self.factors).fold(0, |acc, (&digit, &dim)| acc * dim + digit)
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.factors.len()];
        for (slot, &dim) in digits.iter_mut().zip(&self.factors).rev() {
            *slot = index % dim;
            index /= dim;
        }
        digits
    }

    /// Sorted, validated copy of a factor index set.
    fn checked_subset(&self, set: &[usize]) -> Result<Vec<usize>> {
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateIndex(pair[0]));
            }
        }
        if let Some(&index) = sorted.iter().find(|&&i| i >= self.factors.len()) {
            return Err(Error::FactorOutOfRange { index, n_factors: self.factors.len() });
        }
        Ok(sorted)
    }

    /// Flat-index offsets of every multi-index over `set`, in row-major
    /// order of the set.
    fn offsets(&self, set: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &f in set {
            let mut next = Vec::with_capacity(out.len() * self.factors[f]);
            for &base in &out {
                for digit in 0..self.factors[f] {
                    next.push(base + digit * strides[f]);
                }
            }
            out = next;
        }
        out
    }

    /// Splits the space into kept and traced factors. Returns the kept spec
    /// and the offset tables for both parts.
    fn split(&self, keep: &[usize]) -> Result<(HilbertSpec, Vec<usize>, Vec<usize>)> {
        let keep = self.checked_subset(keep)?;
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let traced: Vec<usize> = (0..self.factors.len()).filter(|i| !keep.contains(i)).collect();
        let kept_spec = HilbertSpec { factors: keep.iter().map(|&i| self.factors[i]).collect() };
        Ok((kept_spec, self.offsets(&keep), self.offsets(&traced)))
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: DVector<C64>,
    spec: HilbertSpec,
}

impl PureState {
    pub fn new(amplitudes: DVector<C64>, spec: HilbertSpec) -> Result<Self> {
        let state = Self::from_raw_amplitudes(amplitudes, spec)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(state)
    }

    /// Builds a vector without the unit-norm check. Used for raw truncated
    /// states whose norm deficit is itself the quantity of interest.
    pub fn from_raw_amplitudes(amplitudes: DVector<C64>, spec: HilbertSpec) -> Result<Self> {
        if amplitudes.len() != spec.total_dim() {
            return Err(Error::DimensionMismatch { expected: spec.total_dim(), found: amplitudes.len() });
        }
        Ok(Self { amplitudes, spec })
    }

    pub fn basis(spec: HilbertSpec, index: usize) -> Result<Self> {
        let dim = spec.total_dim();
        if index >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: index });
        }
        let mut amplitudes = DVector::zeros(dim);
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes, spec })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState { amplitudes: self.amplitudes.kronecker(&other.amplitudes), spec: self.spec.concat(&other.spec) }
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator { matrix: &self.amplitudes * self.amplitudes.adjoint(), spec: self.spec.clone() }
    }

    /// Reduced state on `keep`, computed as `M M†` from the reshaped
    /// amplitude matrix rather than through the full projector.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOperator> {
        let (kept_spec, kept, traced) = self.spec.split(keep)?;
        let m = DMatrix::from_fn(kept.len(), traced.len(), |a, t| self.amplitudes[kept[a] + traced[t]]);
        Ok(DensityOperator { matrix: &m * m.adjoint(), spec: kept_spec })
    }
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
    spec: HilbertSpec,
}

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity before accepting
    /// the matrix.
    pub fn new(matrix: DMatrix<C64>, spec: HilbertSpec) -> Result<Self> {
        check_shape(&matrix, spec.total_dim())?;
        let asym = max_abs_diff(&matrix, &matrix.adjoint());
        if asym > VALIDATION_TOL {
            return Err(Error::InvalidDensity(format!("not Hermitian (max |A - A†| = {asym:e})")));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > VALIDATION_TOL || trace.im.abs() > VALIDATION_TOL {
            return Err(Error::InvalidDensity(format!("trace {trace} differs from 1")));
        }
        let min = hermitian_eigenvalues(&matrix).into_iter().fold(f64::INFINITY, f64::min);
        if min < -VALIDATION_TOL {
            return Err(Error::InvalidDensity(format!("eigenvalue {min:e} is negative")));
        }
        Ok(Self { matrix, spec })
    }

    /// Skips validation. Callers guarantee the invariants by construction.
    pub(crate) fn from_parts(matrix: DMatrix<C64>, spec: HilbertSpec) -> Self {
        debug_assert_eq!(matrix.nrows(), spec.total_dim());
        Self { matrix, spec }
    }

    pub fn maximally_mixed(spec: HilbertSpec) -> Self {
        let d = spec.total_dim();
        Self { matrix: DMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0), spec }
    }

    /// Diagonal operator with the given probabilities.
    pub fn diagonal(probs: &[f64], spec: HilbertSpec) -> Result<Self> {
        let matrix =
            DMatrix::from_diagonal(&DVector::from_iterator(probs.len(), probs.iter().map(|&p| C64::new(p, 0.0))));
        Self::new(matrix, spec)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator { matrix: self.matrix.kronecker(&other.matrix), spec: self.spec.concat(&other.spec) }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        partial_trace(self, keep)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }
}

/// Kronecker product for both state kinds.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Self {
        PureState::tensor(self, other)
    }
}

impl Tensor for DensityOperator {
    fn tensor(&self, other: &Self) -> Self {
        DensityOperator::tensor(self, other)
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Partial trace keeping the factors in `keep` (order of the original
/// space is preserved regardless of the order given).
pub fn partial_trace(op: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let (matrix, spec) = partial_trace_matrix(&op.matrix, &op.spec, keep)?;
    Ok(DensityOperator { matrix, spec })
}

/// Partial trace of an arbitrary square operator.
pub fn partial_trace_matrix(
    matrix: &DMatrix<C64>,
    spec: &HilbertSpec,
    keep: &[usize],
) -> Result<(DMatrix<C64>, HilbertSpec)> {
    check_shape(matrix, spec.total_dim())?;
    let (kept_spec, kept, traced) = spec.split(keep)?;
    let out = DMatrix::from_fn(kept.len(), kept.len(), |a, b| {
        traced.iter().map(|&t| matrix[(kept[a] + t, kept[b] + t)]).sum::<C64>()
    });
    Ok((out, kept_spec))
}

/// Sum of singular values.
pub fn trace_norm(x: &DMatrix<C64>) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(x.clone().singular_values().sum())
}

/// Trace norm of a Hermitian matrix via its spectrum. Faster than the SVD
/// route and exact for the difference operators used in the experiments.
pub fn hermitian_trace_norm(x: &DMatrix<C64>) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    Ok(hermitian_eigenvalues(x).iter().map(|l| l.abs()).sum())
}

/// Hilbert-Schmidt norm `sqrt(tr X†X)`.
pub fn hs_norm(x: &DMatrix<C64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Swap operator on `[d, d]`: `F|i>|j> = |j>|i>`.
pub fn swap_operator(d: usize) -> DMatrix<C64> {
    let mut f = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            f[(j * d + i, i * d + j)] = C64::new(1.0, 0.0);
        }
    }
    f
}

/// `-sum λ log2 λ` with tiny negative eigenvalues clipped to zero.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let mut entropy = 0.0;
    for lambda in rho.eigenvalues() {
        if lambda < -CLIP_TOL {
            return Err(Error::NegativeEigenvalue(lambda));
        }
        if lambda > 0.0 {
            entropy -= lambda * lambda.log2();
        }
    }
    Ok(entropy.max(0.0))
}

/// `tr ρ²`. For Hermitian ρ this is the squared Hilbert-Schmidt norm.
pub fn purity(rho: &DensityOperator) -> f64 {
    hs_norm(&rho.matrix).powi(2)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest entry of `|U†U - I|`.
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &DMatrix::identity(n, n))
}

fn check_shape(matrix: &DMatrix<C64>, dim: usize) -> Result<()> {
    if !matrix.is_square() {
        return Err(Error::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
    }
    if matrix.nrows() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_hermitian, random_pure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn bell() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(DVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]), HilbertSpec::new(vec![2, 2]).unwrap())
            .unwrap()
    }

    #[test]
    fn spec_rejects_zero_factor() {
        assert!(HilbertSpec::new(vec![2, 0]).is_err());
        assert_eq!(HilbertSpec::new(vec![]).unwrap().total_dim(), 1);
    }

    #[test]
    fn digits_round_trip() {
        let spec = HilbertSpec::new(vec![2, 3, 4]).unwrap();
        for i in 0..spec.total_dim() {
            assert_eq!(spec.index_of(&spec.digits_of(i)), i);
        }
        assert_eq!(spec.index_of(&[1, 0, 0]), 12);
        assert_eq!(spec.strides(), vec![12, 4, 1]);
    }

    #[test]
    fn tensor_of_mixed_is_mixed() {
        let half = DensityOperator::maximally_mixed(HilbertSpec::single(2).unwrap());
        let quarter = half.tensor(&half);
        assert_eq!(quarter.spec().factors(), &[2, 2]);
        assert!(max_abs_diff(quarter.matrix(), &(DMatrix::identity(4, 4) * c(0.25))) < 1e-15);
    }

    #[test]
    fn tensor_of_basis_states() {
        let q = HilbertSpec::single(2).unwrap();
        let zero = PureState::basis(q.clone(), 0).unwrap();
        let one = PureState::basis(q, 1).unwrap();
        let joint = tensor(&zero, &one);
        assert_eq!(joint, PureState::basis(HilbertSpec::new(vec![2, 2]).unwrap(), 1).unwrap());
    }

    #[test]
    fn tensor_trace_is_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rho = random_density(2, &mut rng);
        let sigma = random_density(2, &mut rng);
        let joint = rho.tensor(&sigma);
        // direct multiply-and-trace: sum_i rho_ii * sum_j sigma_jj
        let expected = rho.trace() * sigma.trace();
        assert!((joint.trace() - expected).norm() < 1e-14);
        assert!((joint.trace() - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn bell_reduces_to_mixed() {
        let reduced = bell().density().partial_trace(&[0]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), &(DMatrix::identity(2, 2) * c(0.5))) < 1e-15);
        let via_pure = bell().reduced(&[1]).unwrap();
        assert!(max_abs_diff(via_pure.matrix(), reduced.matrix()) < 1e-15);
    }

    #[test]
    fn product_factorizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let rho = random_density(3, &mut rng);
        let sigma = random_density(2, &mut rng);
        let joint = rho.tensor(&sigma);
        assert!(max_abs_diff(joint.partial_trace(&[0]).unwrap().matrix(), rho.matrix()) < 1e-14);
        assert!(max_abs_diff(joint.partial_trace(&[1]).unwrap().matrix(), sigma.matrix()) < 1e-14);
    }

    #[test]
    fn reduced_spectrum_matches_schmidt_coefficients() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let psi = random_pure(&HilbertSpec::new(vec![2, 3]).unwrap(), &mut rng);
        let reduced = psi.density().partial_trace(&[1]).unwrap();
        // SVD oracle on the 2x3 amplitude matrix
        let m = DMatrix::from_fn(2, 3, |i, j| psi.amplitudes()[i * 3 + j]);
        let mut schmidt: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
        schmidt.push(0.0);
        schmidt.sort_by(f64::total_cmp);
        for (a, b) in reduced.eigenvalues().iter().zip(&schmidt) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn partial_trace_errors() {
        let rho = bell().density();
        assert_eq!(rho.partial_trace(&[]).unwrap_err(), Error::EmptyKeep);
        assert!(matches!(rho.partial_trace(&[2]), Err(Error::FactorOutOfRange { .. })));
        assert!(matches!(rho.partial_trace(&[0, 0]), Err(Error::DuplicateIndex(0))));
    }

    #[test]
    fn keep_order_is_normalized() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let psi = random_pure(&HilbertSpec::new(vec![2, 3, 2]).unwrap(), &mut rng);
        let a = psi.reduced(&[2, 0]).unwrap();
        let b = psi.reduced(&[0, 2]).unwrap();
        assert_eq!(a.spec().factors(), &[2, 2]);
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-15);
    }

    #[test]
    fn trace_norm_cases() {
        let zero = DMatrix::<C64>::zeros(3, 3);
        assert_eq!(trace_norm(&zero).unwrap(), 0.0);
        let diff = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)]));
        assert!((trace_norm(&diff).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(trace_norm(&DMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn trace_norm_matches_eigenvalues_for_hermitian() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for d in [2, 3, 5] {
            let x = random_hermitian(d, &mut rng);
            let by_eig: f64 = hermitian_eigenvalues(&x).iter().map(|l| l.abs()).sum();
            assert!((trace_norm(&x).unwrap() - by_eig).abs() < 1e-12);
            assert!((hermitian_trace_norm(&x).unwrap() - by_eig).abs() < 1e-12);
        }
    }

    #[test]
    fn hs_norm_cases() {
        assert_eq!(hs_norm(&DMatrix::zeros(2, 2)), 0.0);
        assert!((hs_norm(&DMatrix::identity(5, 5)) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn swap_properties() {
        assert_eq!(swap_operator(1), DMatrix::from_element(1, 1, c(1.0)));
        for d in 1..=4 {
            let f = swap_operator(d);
            assert!((f.trace() - c(d as f64)).norm() < 1e-15);
            assert!(max_abs_diff(&(&f * &f), &DMatrix::identity(d * d, d * d)) < 1e-15);
            assert!(max_abs_diff(&f, &f.adjoint()) < 1e-15);
        }
        let spec = HilbertSpec::new(vec![3, 3]).unwrap();
        let f = swap_operator(3);
        for i in 0..3 {
            for j in 0..3 {
                let v = PureState::basis(spec.clone(), i * 3 + j).unwrap();
                let w = PureState::basis(spec.clone(), j * 3 + i).unwrap();
                assert_eq!(&f * v.amplitudes(), *w.amplitudes());
            }
        }
    }

    #[test]
    fn swap_trick_purity() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let sigma = random_density(3, &mut rng);
        let lhs = purity(&sigma);
        let rhs = (sigma.matrix().kronecker(sigma.matrix()) * swap_operator(3)).trace();
        assert!((rhs.re - lhs).abs() < 1e-12 && rhs.im.abs() < 1e-12);
    }

    #[test]
    fn entropy_cases() {
        assert!(von_neumann_entropy(&bell().density()).unwrap().abs() < 1e-10);
        let mixed = DensityOperator::maximally_mixed(HilbertSpec::single(8).unwrap());
        assert!((von_neumann_entropy(&mixed).unwrap() - 3.0).abs() < 1e-12);
        let bad = DensityOperator::from_parts(
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.1), c(-0.1)])),
            HilbertSpec::single(2).unwrap(),
        );
        assert!(matches!(von_neumann_entropy(&bad), Err(Error::NegativeEigenvalue(_))));
        let clipped = DensityOperator::from_parts(
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0 + 1e-11), c(-1e-11)])),
            HilbertSpec::single(2).unwrap(),
        );
        assert!(von_neumann_entropy(&clipped).unwrap() < 1e-9);
    }

    #[test]
    fn purity_cases() {
        assert!((purity(&bell().density()) - 1.0).abs() < 1e-14);
        let mixed = DensityOperator::maximally_mixed(HilbertSpec::single(5).unwrap());
        assert!((purity(&mixed) - 0.2).abs() < 1e-15);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let rho = random_density(4, &mut rng);
        let by_eig: f64 = rho.eigenvalues().iter().map(|l| l * l).sum();
        assert!((purity(&rho) - by_eig).abs() < 1e-12);
    }

    #[test]
    fn density_validation() {
        let spec = HilbertSpec::single(2).unwrap();
        let not_herm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.0), c(0.5)]);
        assert!(DensityOperator::new(not_herm, spec.clone()).is_err());
        let not_unit = DMatrix::identity(2, 2) * c(0.4);
        assert!(DensityOperator::new(not_unit, spec.clone()).is_err());
        let negative = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.5), c(-0.5)]));
        assert!(DensityOperator::new(negative, spec.clone()).is_err());
        assert!(DensityOperator::new(DMatrix::identity(3, 3), spec).is_err());
    }
}
