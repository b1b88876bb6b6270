use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::haar::{haar_matrix, RngStream};
use crate::operator::{hermitian_trace_norm, DensityOperator, HilbertSpec, PureState, C64};

pub const DEFAULT_DECOUPLING_TOLERANCE: f64 = 1e-8;

/// Eigenvalues at or below this are treated as outside the support.
const SUPPORT_TOL: f64 = 1e-12;

/// Groups of factor indices forming the reference, the receiver and the
/// environment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub r: Vec<usize>,
    pub b: Vec<usize>,
    pub e: Vec<usize>,
}

impl Partition {
    /// Factors `0`, `1`, `2` of a three-factor space.
    pub fn tripartite() -> Self {
        Self { r: vec![0], b: vec![1], e: vec![2] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput {
    /// Decoded state on `R ⊗ B`.
    pub state: DensityOperator,
    /// Overlap with `sum_k sqrt(λ_k) |k>_R |k>_B`.
    pub fidelity: f64,
    /// `‖ρ_RE - ρ_R ⊗ ρ_E‖_1` of the input.
    pub violation: f64,
    /// Number of nonzero eigenvalues of `ρ_R` and `ρ_E`.
    pub rank_r: usize,
    pub rank_e: usize,
}

/// Amplitudes arranged as `psi[(r, b, e)]` with each group row-major in
/// its listed factor order.
fn regroup(psi: &PureState, part: &Partition) -> Result<(Vec<C64>, [usize; 3])> {
    let spec = psi.spec();
    let n = spec.n_factors();
    let mut seen = vec![false; n];
    for &f in part.r.iter().chain(&part.b).chain(&part.e) {
        if f >= n {
            return Err(Error::FactorOutOfRange { index: f, n_factors: n });
        }
        if std::mem::replace(&mut seen[f], true) {
            return Err(Error::DuplicateIndex(f));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(invalid("partition", "every factor must belong to R, B or E"));
    }
    if part.r.is_empty() || part.b.is_empty() {
        return Err(invalid("partition", "R and B must be nonempty"));
    }
    let dims = |g: &[usize]| g.iter().map(|&f| spec.factors()[f]).product::<usize>();
    let shape = [dims(&part.r), dims(&part.b), dims(&part.e)];
    let group_index =
        |digits: &[usize], g: &[usize]| g.iter().fold(0usize, |acc, &f| acc * spec.factors()[f] + digits[f]);
    let mut out = vec![C64::new(0.0, 0.0); spec.total_dim()];
    for (i, &a) in psi.amplitudes().iter().enumerate() {
        let digits = spec.digits_of(i);
        let (r, b, e) = (group_index(&digits, &part.r), group_index(&digits, &part.b), group_index(&digits, &part.e));
        out[(r * shape[1] + b) * shape[2] + e] = a;
    }
    Ok((out, shape))
}

/// Eigenpairs of a Hermitian matrix with eigenvalue above the support
/// threshold, largest first.
fn support(m: &DMatrix<C64>) -> Vec<(f64, DVector<C64>)> {
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<C64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(&l, _)| l > SUPPORT_TOL)
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Orthonormal completion: `vectors` followed by enough standard basis
/// vectors, Gram-Schmidt orthonormalized, as the columns of a unitary.
fn complete_basis(vectors: &[DVector<C64>], dim: usize) -> Result<DMatrix<C64>> {
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(dim);
    let candidates = vectors.iter().cloned().chain((0..dim).map(|i| {
        let mut e = DVector::zeros(dim);
        e[i] = C64::new(1.0, 0.0);
        e
    }));
    for (n, mut v) in candidates.enumerate() {
        if basis.len() == dim {
            break;
        }
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if n < vectors.len() {
            if norm < 0.5 {
                return Err(invalid("psi", "Schmidt vectors are not orthogonal; state is not decoupled"));
            }
        } else if norm < 1e-6 {
            continue;
        }
        basis.push(v / C64::new(norm, 0.0));
    }
    Ok(DMatrix::from_columns(&basis))
}

/// Recovers the reference's entanglement from `B` alone, given that `R`
/// and `E` are decoupled: measure which environment eigenvector `l` the
/// state is correlated with, then rotate `φ_kl -> |k>`.
pub fn exact_decoder(psi: &PureState, partition: &Partition, tolerance: f64) -> Result<DecoderOutput> {
    let (amps, [dr, db, de]) = regroup(psi, partition)?;
    let at = |r: usize, b: usize, e: usize| amps[(r * db + b) * de + e];

    // reduced states from the (R, B, E) amplitudes
    let m_re = DMatrix::from_fn(dr * de, db, |row, b| at(row / de, b, row % de));
    let rho_re = DensityOperator::from_parts(&m_re * m_re.adjoint(), HilbertSpec::new(vec![dr, de])?);
    let m_rb = DMatrix::from_fn(dr * db, de, |row, e| at(row / db, row % db, e));
    let rho_rb = &m_rb * m_rb.adjoint();
    let rho_r = rho_re.partial_trace(&[0])?;
    let rho_e = rho_re.partial_trace(&[1])?;

    let violation = hermitian_trace_norm(&(rho_re.matrix() - rho_r.tensor(&rho_e).matrix()))?;
    if violation > tolerance {
        return Err(Error::DecouplingViolated { violation, tolerance });
    }

    let spec_r = support(rho_r.matrix());
    let spec_e = support(rho_e.matrix());
    let (rank_r, rank_e) = (spec_r.len(), spec_e.len());
    if rank_r * rank_e > db {
        return Err(invalid("psi", format!("B has dimension {db} < rank(ρ_R) rank(ρ_E) = {}", rank_r * rank_e)));
    }

    // φ_kl = (<k| ⊗ I ⊗ <l|) ψ / sqrt(λ_k μ_l), l-major
    let mut phis = Vec::with_capacity(rank_r * rank_e);
    for (mu, w) in &spec_e {
        for (lambda, v) in &spec_r {
            let scale = C64::new(1.0 / (lambda * mu).sqrt(), 0.0);
            let phi = DVector::from_fn(db, |b, _| {
                let mut s = C64::new(0.0, 0.0);
                for r in 0..dr {
                    for e in 0..de {
                        s += v[r].conj() * w[e].conj() * at(r, b, e);
                    }
                }
                s * scale
            });
            phis.push(phi);
        }
    }
    let frame = complete_basis(&phis, db)?;

    // target: |k>_B is the standard basis vector k
    let identity_b = DMatrix::<C64>::identity(db, db);
    let mut projected_total = DMatrix::<C64>::zeros(db, db);
    let mut decoded = DMatrix::<C64>::zeros(dr * db, dr * db);
    let id_r = DMatrix::<C64>::identity(dr, dr);
    for l in 0..rank_e {
        let block = frame.columns(l * rank_r, rank_r);
        let proj = block * block.adjoint();
        projected_total += &proj;
        // U_l sends column l*rank_r + k of the frame to e_k, then the rest
        // of the frame to the remaining basis vectors in order
        let mut order: Vec<usize> = (l * rank_r..(l + 1) * rank_r).collect();
        order.extend((0..db).filter(|c| !(l * rank_r..(l + 1) * rank_r).contains(c)));
        let reordered = DMatrix::from_columns(&order.iter().map(|&c| frame.column(c).into_owned()).collect::<Vec<_>>());
        let u_l = reordered.adjoint();
        let kraus = id_r.kronecker(&(&u_l * &proj));
        decoded += &kraus * &rho_rb * kraus.adjoint();
    }
    let perp = id_r.kronecker(&(identity_b - projected_total));
    decoded += &perp * &rho_rb * perp.adjoint();

    let mut target = DVector::<C64>::zeros(dr * db);
    for (k, (lambda, v)) in spec_r.iter().enumerate() {
        for r in 0..dr {
            target[r * db + k] += v[r] * lambda.sqrt();
        }
    }
    let fidelity = target.dotc(&(&decoded * &target)).re;
    let decoded = (&decoded + decoded.adjoint()) * C64::new(0.5, 0.0);
    Ok(DecoderOutput {
        state: DensityOperator::from_parts(decoded, HilbertSpec::new(vec![dr, db])?),
        fidelity,
        violation,
        rank_r,
        rank_e,
    })
}

/// `sum_kl sqrt(λ_k μ_l) |k>_R |φ_kl>_B |l>_E` on `R ⊗ B ⊗ E` with random
/// spectra, random eigenbases and orthonormal `φ_kl`. Needs `dr de <= db`.
pub fn random_decoupled_state(dr: usize, db: usize, de: usize, seed: u64) -> Result<PureState> {
    if dr == 0 || de == 0 || dr * de > db {
        return Err(invalid("dims", format!("need 1 <= dr, de and dr de <= db, got {dr}x{db}x{de}")));
    }
    let mut rng = RngStream::new(seed, 0).rng();
    let mut weights = |n: usize| {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect::<Vec<_>>()
    };
    let (lambda, mu) = (weights(dr), weights(de));
    let mut rng = RngStream::new(seed, 1).rng();
    let (vr, vb, ve) = (haar_matrix(dr, &mut rng), haar_matrix(db, &mut rng), haar_matrix(de, &mut rng));
    let mut amps = DVector::from_element(dr * db * de, C64::new(0.0, 0.0));
    for k in 0..dr {
        for l in 0..de {
            let c = C64::new((lambda[k] * mu[l]).sqrt(), 0.0);
            let phi = vb.column(l * dr + k);
            for r in 0..dr {
                for b in 0..db {
                    for e in 0..de {
                        amps[(r * db + b) * de + e] += vr[(r, k)] * phi[b] * ve[(e, l)] * c;
                    }
                }
            }
        }
    }
    PureState::new(amps, HilbertSpec::new(vec![dr, db, de])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(amps: Vec<C64>, dims: Vec<usize>) -> PureState {
        PureState::new(DVector::from_vec(amps), HilbertSpec::new(dims).unwrap()).unwrap()
    }

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn decoupled(dr: usize, db: usize, de: usize, seed: u64) -> PureState {
        random_decoupled_state(dr, db, de, seed).unwrap()
    }

    #[test]
    fn product_state_is_recovered() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // |+>_R ⊗ |0>_B |0>_E
        let psi = state(vec![re(h), re(0.0), re(0.0), re(0.0), re(h), re(0.0), re(0.0), re(0.0)], vec![2, 2, 2]);
        let out = exact_decoder(&psi, &Partition::tripartite(), DEFAULT_DECOUPLING_TOLERANCE).unwrap();
        assert!((out.fidelity - 1.0).abs() < 1e-12);
        assert_eq!(out.rank_r, 1);
    }

    #[test]
    fn bell_pair_with_idle_environment() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![re(0.0); 8];
        amps[0] = re(h); // |000>
        amps[6] = re(h); // |110>
        let out = exact_decoder(&state(amps, vec![2, 2, 2]), &Partition::tripartite(), 1e-8).unwrap();
        assert!((out.fidelity - 1.0).abs() < 1e-12);
        assert!(out.violation < 1e-14);
    }

    #[test]
    fn random_decoupled_states() {
        for (i, (dr, db, de)) in
            [(2, 4, 2), (4, 4, 1), (1, 4, 4), (2, 3, 1), (3, 4, 1), (2, 2, 1)].into_iter().enumerate()
        {
            let psi = decoupled(dr, db, de, 100 + i as u64);
            let out = exact_decoder(&psi, &Partition::tripartite(), 1e-8).unwrap();
            assert!(out.fidelity >= 1.0 - 1e-10, "{dr}x{db}x{de}: {}", out.fidelity);
            assert!((out.state.trace() - re(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn degenerate_spectrum() {
        // maximally entangled R-B with a maximally mixed E purified in B
        let (dr, db, de) = (2, 4, 2);
        let mut amps = vec![re(0.0); dr * db * de];
        for k in 0..dr {
            for l in 0..de {
                amps[(k * db + l * dr + k) * de + l] = re(0.5);
            }
        }
        let out = exact_decoder(&state(amps, vec![dr, db, de]), &Partition::tripartite(), 1e-8).unwrap();
        assert!((out.fidelity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ghz_violates() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![re(0.0); 8];
        amps[0] = re(h);
        amps[7] = re(h);
        match exact_decoder(&state(amps, vec![2, 2, 2]), &Partition::tripartite(), 1e-8) {
            Err(Error::DecouplingViolated { violation, .. }) => assert!((violation - 1.0).abs() < 1e-12),
            other => panic!("expected a violation, got {other:?}"),
        }
    }

    #[test]
    fn partition_reorders_factors() {
        let psi = decoupled(2, 4, 2, 7);
        // the same state with factors stored as (E, R, B)
        let mut amps = vec![re(0.0); 16];
        for r in 0..2 {
            for b in 0..4 {
                for e in 0..2 {
                    amps[(e * 2 + r) * 4 + b] = psi.amplitudes()[(r * 4 + b) * 2 + e];
                }
            }
        }
        let moved = state(amps, vec![2, 2, 4]);
        let part = Partition { r: vec![1], b: vec![2], e: vec![0] };
        let a = exact_decoder(&psi, &Partition::tripartite(), 1e-8).unwrap();
        let b = exact_decoder(&moved, &part, 1e-8).unwrap();
        assert!((a.fidelity - b.fidelity).abs() < 1e-12);

        let bad = Partition { r: vec![0], b: vec![0], e: vec![2] };
        assert!(matches!(exact_decoder(&psi, &bad, 1e-8), Err(Error::DuplicateIndex(0))));
    }
}
