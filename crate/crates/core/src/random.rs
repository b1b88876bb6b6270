//! Random states and matrices for tests, validators and demos.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operator::{DensityOperator, HilbertSpec, PureState, C64};

/// Standard complex normal: real and imaginary parts are independent
/// N(0, 1/2), so `E|z|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Uniformly distributed pure state (normalized complex Gaussian vector).
pub fn random_pure<R: Rng + ?Sized>(spec: &HilbertSpec, rng: &mut R) -> PureState {
    let mut v = DVector::from_fn(spec.total_dim(), |_, _| complex_normal(rng));
    v /= C64::new(v.norm(), 0.0);
    PureState::new(v, spec.clone()).expect("normalized by construction")
}

/// Full-rank mixed state `G G† / tr(G G†)` with Ginibre `G`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(d, d, rng);
    let mut m = &g * g.adjoint();
    let tr = m.trace();
    m /= tr;
    // symmetrize away rounding so validation sees an exactly Hermitian matrix
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    DensityOperator::new(m, HilbertSpec::single(d).expect("d > 0")).expect("valid by construction")
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let g = ginibre(d, d, rng);
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}
