//! Seeded Haar sampling, passive linear-optical circuits and their exact
//! action on truncated Fock registers.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{FockRegister, Truncation};
use crate::operator::{HilbertSpec, C64};
use crate::random::ginibre;

/// Deterministic random stream: `(seed, stream_index)` fixes every byte.
///
/// Sample `k` of a Monte-Carlo run draws from `stream_index = k`, so
/// samples can be generated in any order or in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// A sampled unitary, optionally confined to a subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitarySample {
    pub matrix: DMatrix<C64>,
    pub spec: HilbertSpec,
    /// Basis indices of the invariant subspace; identity acts on the rest.
    pub restriction: Option<Vec<usize>>,
}

impl UnitarySample {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Haar-distributed `d x d` unitary: Ginibre matrix, QR, then each column of
/// `Q` multiplied by the phase of the matching diagonal entry of `R`.
/// Without the phase fix the distribution is not Haar.
pub fn haar_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = ginibre(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 { rjj / norm } else { C64::new(1.0, 0.0) };
        col *= phase;
    }
    q
}

pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<UnitarySample> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    Ok(UnitarySample { matrix: haar_matrix(d, rng), spec: HilbertSpec::single(d)?, restriction: None })
}

/// Haar unitary on the span of `basis`, identity on its complement.
pub fn haar_unitary_on_subspace<R: Rng + ?Sized>(
    basis: &[usize],
    full_dim: usize,
    rng: &mut R,
) -> Result<UnitarySample> {
    let mut seen = vec![false; full_dim];
    for &i in basis {
        if i >= full_dim {
            return Err(Error::DimensionMismatch { expected: full_dim, found: i });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    if basis.is_empty() {
        return Err(invalid("basis", "subspace must be nonempty"));
    }
    let block = haar_matrix(basis.len(), rng);
    let mut matrix = DMatrix::identity(full_dim, full_dim);
    for (a, &i) in basis.iter().enumerate() {
        for (b, &j) in basis.iter().enumerate() {
            matrix[(i, j)] = block[(a, b)];
        }
    }
    Ok(UnitarySample { matrix, spec: HilbertSpec::single(full_dim)?, restriction: Some(basis.to_vec()) })
}

/// Elementary passive gate.
///
/// `BeamSplitter` acts on modes `(i, j)` as
/// `[[e^{iφ} cos θ, -sin θ], [e^{iφ} sin θ, cos θ]]`, i.e. a phase on mode
/// `i` followed by a real rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    BeamSplitter { mode_i: usize, mode_j: usize, theta: f64, phi: f64 },
    PhaseShifter { mode: usize, phase: f64 },
}

impl Gate {
    fn block(theta: f64, phi: f64) -> [[C64; 2]; 2] {
        let e = C64::from_polar(1.0, phi);
        let (s, c) = theta.sin_cos();
        [[e * c, C64::new(-s, 0.0)], [e * s, C64::new(c, 0.0)]]
    }

    /// Left-multiplies the `n x n` mode matrix `m` by this gate.
    fn apply_to_modes(&self, m: &mut DMatrix<C64>) {
        match *self {
            Gate::PhaseShifter { mode, phase } => {
                let e = C64::from_polar(1.0, phase);
                for col in 0..m.ncols() {
                    m[(mode, col)] *= e;
                }
            }
            Gate::BeamSplitter { mode_i, mode_j, theta, phi } => {
                let b = Self::block(theta, phi);
                for col in 0..m.ncols() {
                    let (x, y) = (m[(mode_i, col)], m[(mode_j, col)]);
                    m[(mode_i, col)] = b[0][0] * x + b[0][1] * y;
                    m[(mode_j, col)] = b[1][0] * x + b[1][1] * y;
                }
            }
        }
    }
}

/// Ordered gate list on `n_modes` modes; gates apply first to last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassiveCircuit {
    n_modes: usize,
    gates: Vec<Gate>,
}

impl PassiveCircuit {
    pub fn new(n_modes: usize, gates: Vec<Gate>) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes", "must be at least 1"));
        }
        for gate in &gates {
            let ok = match *gate {
                Gate::PhaseShifter { mode, .. } => mode < n_modes,
                Gate::BeamSplitter { mode_i, mode_j, .. } => mode_i < n_modes && mode_j < n_modes && mode_i != mode_j,
            };
            if !ok {
                return Err(invalid("gates", format!("{gate:?} is invalid on {n_modes} modes")));
            }
        }
        Ok(Self { n_modes, gates })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// The induced `N x N` transformation of creation operators:
    /// `a†_k -> sum_l U_lk a†_l`.
    pub fn mode_matrix(&self) -> DMatrix<C64> {
        let mut m = DMatrix::identity(self.n_modes, self.n_modes);
        for gate in &self.gates {
            gate.apply_to_modes(&mut m);
        }
        m
    }

    /// Rectangular-mesh (Clements) factorization of a unitary into beam
    /// splitters followed by a column of output phase shifters.
    pub fn from_unitary(u: &DMatrix<C64>) -> Result<Self> {
        let n = u.nrows();
        if !u.is_square() || n == 0 {
            return Err(Error::NotSquare { rows: u.nrows(), cols: u.ncols() });
        }
        let mut work = u.clone();
        // (mode, theta, phi) of T factors applied as `work * T^{-1}`
        let mut right = Vec::new();
        // ... and as `T * work`
        let mut left = Vec::new();
        for i in 1..n {
            if i % 2 == 1 {
                for j in 0..i {
                    let (row, k) = (n - 1 - j, i - j - 1);
                    let (a, b) = (work[(row, k)], work[(row, k + 1)]);
                    let theta = a.norm().atan2(b.norm());
                    let phi = a.arg() - b.arg();
                    apply_inverse_right(&mut work, k, theta, phi);
                    right.push((k, theta, phi));
                }
            } else {
                for j in 1..=i {
                    let (row, col) = (n + j - i - 1, j - 1);
                    let (a, b) = (work[(row - 1, col)], work[(row, col)]);
                    let theta = b.norm().atan2(a.norm());
                    let phi = PI + b.arg() - a.arg();
                    Gate::BeamSplitter { mode_i: row - 1, mode_j: row, theta, phi }.apply_to_modes(&mut work);
                    left.push((row - 1, theta, phi));
                }
            }
        }
        // work is now diagonal: U = L_1^-1 ... L_m^-1 D R_m ... R_1.
        // Push D to the far left using T^-1(θ,φ) D = D' T(θ, α - β + π).
        let mut phases: Vec<f64> = (0..n).map(|i| work[(i, i)].arg()).collect();
        let mut moved = Vec::with_capacity(left.len());
        for &(m, theta, phi) in left.iter().rev() {
            let (alpha, beta) = (phases[m], phases[m + 1]);
            phases[m] = beta - phi + PI;
            moved.push((m, theta, alpha - beta + PI));
        }
        // gate order: R_1 .. R_m, then the moved factors in push order, then the output phases
        let mut gates: Vec<Gate> = right
            .into_iter()
            .map(|(k, theta, phi)| Gate::BeamSplitter { mode_i: k, mode_j: k + 1, theta, phi })
            .collect();
        gates.extend(moved.into_iter().map(|(m, theta, phi)| Gate::BeamSplitter {
            mode_i: m,
            mode_j: m + 1,
            theta,
            phi,
        }));
        gates.extend(phases.into_iter().enumerate().map(|(mode, phase)| Gate::PhaseShifter { mode, phase }));
        Self::new(n, gates)
    }
}

/// `work <- work * T(θ, φ)^{-1}` on columns `(k, k + 1)`.
fn apply_inverse_right(work: &mut DMatrix<C64>, k: usize, theta: f64, phi: f64) {
    let e = C64::from_polar(1.0, -phi);
    let (s, c) = theta.sin_cos();
    for row in 0..work.nrows() {
        let (x, y) = (work[(row, k)], work[(row, k + 1)]);
        work[(row, k)] = e * c * x - y * s;
        work[(row, k + 1)] = e * s * x + y * c;
    }
}

/// Random passive circuit whose mode matrix is Haar on `U(N)`: an exact
/// mesh factorization of a Haar sample.
pub fn random_passive_circuit<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> Result<PassiveCircuit> {
    if n_modes == 0 {
        return Err(invalid("n_modes", "must be at least 1"));
    }
    PassiveCircuit::from_unitary(&haar_matrix(n_modes, rng))
}

/// Applies `circuit` to the rows of `target`, whose rows are indexed by the
/// register basis. Works gate by gate within each fixed-photon block, so
/// the action is exact and never leaves the register.
pub fn apply_passive_circuit(
    circuit: &PassiveCircuit,
    register: &FockRegister,
    target: &mut DMatrix<C64>,
) -> Result<()> {
    if circuit.n_modes() != register.n_modes() {
        return Err(Error::ModeCountMismatch { circuit: circuit.n_modes(), register: register.n_modes() });
    }
    if !matches!(register.truncation(), Truncation::TotalPhoton(_)) {
        return Err(invalid("register", "passive lifting requires total-photon truncation"));
    }
    if target.nrows() != register.dim() {
        return Err(Error::DimensionMismatch { expected: register.dim(), found: target.nrows() });
    }
    for gate in circuit.gates() {
        match *gate {
            Gate::PhaseShifter { mode, phase } => {
                for (row, occ) in register.basis().iter().enumerate() {
                    let e = C64::from_polar(1.0, phase * occ[mode] as f64);
                    for col in 0..target.ncols() {
                        target[(row, col)] *= e;
                    }
                }
            }
            Gate::BeamSplitter { mode_i, mode_j, theta, phi } => {
                apply_two_mode(register, mode_i, mode_j, &Gate::block(theta, phi), target);
            }
        }
    }
    Ok(())
}

/// Occupations of the untouched modes and the photon count in the pair.
type BlockKey = (Vec<u32>, u32);

/// Lifts a 2x2 mode transformation to every fixed-photon block of the
/// register pair `(i, j)`.
fn apply_two_mode(register: &FockRegister, i: usize, j: usize, u: &[[C64; 2]; 2], target: &mut DMatrix<C64>) {
    // group rows by the occupations of all other modes plus n_i + n_j
    let mut groups: HashMap<BlockKey, Vec<(u32, usize)>> = HashMap::new();
    for (row, occ) in register.basis().iter().enumerate() {
        let mut rest = occ.clone();
        rest[i] = 0;
        rest[j] = 0;
        groups.entry((rest, occ[i] + occ[j])).or_default().push((occ[i], row));
    }
    let mut blocks: HashMap<u32, DMatrix<C64>> = HashMap::new();
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort();
    for key in keys {
        let members = &groups[&key];
        let m = key.1;
        if m == 0 {
            continue;
        }
        let block = blocks.entry(m).or_insert_with(|| lifted_block(u, m));
        let mut rows = vec![0usize; m as usize + 1];
        for &(ni, row) in members {
            rows[ni as usize] = row;
        }
        debug_assert_eq!(members.len(), m as usize + 1);
        for col in 0..target.ncols() {
            let old: Vec<C64> = rows.iter().map(|&r| target[(r, col)]).collect();
            for (x, &row) in rows.iter().enumerate() {
                target[(row, col)] = (0..=m as usize).map(|k| block[(x, k)] * old[k]).sum();
            }
        }
    }
}

/// Matrix of a two-mode transformation on the `m`-photon block, indexed by
/// the photon count in the first mode. From the binomial expansion of
/// `(u00 a† + u10 b†)^k (u01 a† + u11 b†)^(m-k)`.
fn lifted_block(u: &[[C64; 2]; 2], m: u32) -> DMatrix<C64> {
    let m = m as usize;
    let fact: Vec<f64> = std::iter::once(1.0)
        .chain((1..=m).scan(1.0, |acc, n| {
            *acc *= n as f64;
            Some(*acc)
        }))
        .collect();
    let binom = |n: usize, k: usize| fact[n] / (fact[k] * fact[n - k]);
    let (u00, u01, u10, u11) = (u[0][0], u[0][1], u[1][0], u[1][1]);
    DMatrix::from_fn(m + 1, m + 1, |x, k| {
        let mut amp = C64::new(0.0, 0.0);
        for p in 0..=k.min(x) {
            let q = x - p;
            if q > m - k {
                continue;
            }
            amp += u00.powu(p as u32)
                * u10.powu((k - p) as u32)
                * u01.powu(q as u32)
                * u11.powu((m - k - q) as u32)
                * (binom(k, p) * binom(m - k, q));
        }
        amp * ((fact[x] * fact[m - x]) / (fact[k] * fact[m - k])).sqrt()
    })
}

/// The full block-diagonal Fock-space unitary of `circuit`.
pub fn lift_passive_to_fock(circuit: &PassiveCircuit, register: &FockRegister) -> Result<UnitarySample> {
    let mut matrix = DMatrix::identity(register.dim(), register.dim());
    apply_passive_circuit(circuit, register, &mut matrix)?;
    Ok(UnitarySample { matrix, spec: HilbertSpec::single(register.dim())?, restriction: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{max_abs_diff, unitarity_defect};

    #[test]
    fn stream_is_deterministic_and_distinct() {
        let a = haar_matrix(3, &mut RngStream::new(9, 0).rng());
        let b = haar_matrix(3, &mut RngStream::new(9, 0).rng());
        let c = haar_matrix(3, &mut RngStream::new(9, 1).rng());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = RngStream::new(1, 0).rng();
        for d in 1..=12 {
            assert!(unitarity_defect(&haar_unitary(d, &mut rng).unwrap().matrix) < 1e-10);
        }
        assert!(haar_unitary(0, &mut rng).is_err());
        let u1 = haar_unitary(1, &mut rng).unwrap().matrix[(0, 0)];
        assert!((u1.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subspace_embedding() {
        let mut rng = RngStream::new(2, 0).rng();
        let u = haar_unitary_on_subspace(&[1, 3], 4, &mut rng).unwrap();
        assert!(unitarity_defect(&u.matrix) < 1e-10);
        assert_eq!(u.matrix[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(u.matrix[(2, 2)], C64::new(1.0, 0.0));
        assert_eq!(u.matrix[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(u.restriction.as_deref(), Some(&[1, 3][..]));

        let single = haar_unitary_on_subspace(&[2], 3, &mut rng).unwrap();
        assert!((single.matrix[(2, 2)].norm() - 1.0).abs() < 1e-14);
        assert_eq!(single.matrix[(0, 0)], C64::new(1.0, 0.0));

        assert!(matches!(haar_unitary_on_subspace(&[0, 0], 3, &mut rng), Err(Error::DuplicateIndex(0))));
        assert!(haar_unitary_on_subspace(&[3], 3, &mut rng).is_err());
    }

    #[test]
    fn full_restriction_is_plain_haar() {
        let full = haar_unitary_on_subspace(&[0, 1, 2], 3, &mut RngStream::new(4, 0).rng()).unwrap();
        let plain = haar_unitary(3, &mut RngStream::new(4, 0).rng()).unwrap();
        assert_eq!(full.matrix, plain.matrix);
    }

    #[test]
    fn mesh_reconstructs_unitary() {
        let mut rng = RngStream::new(3, 0).rng();
        for n in 1..=7 {
            for _ in 0..5 {
                let u = haar_matrix(n, &mut rng);
                let circuit = PassiveCircuit::from_unitary(&u).unwrap();
                assert_eq!(
                    circuit.gates().iter().filter(|g| matches!(g, Gate::BeamSplitter { .. })).count(),
                    n * (n - 1) / 2
                );
                assert!(max_abs_diff(&circuit.mode_matrix(), &u) < 1e-10, "n = {n}");
            }
        }
    }

    #[test]
    fn single_mode_circuit_is_one_phase_shifter() {
        let c = random_passive_circuit(1, &mut RngStream::new(5, 0).rng()).unwrap();
        assert_eq!(c.gates().len(), 1);
        assert!(matches!(c.gates()[0], Gate::PhaseShifter { mode: 0, .. }));
    }

    #[test]
    fn mesh_is_nearest_neighbour() {
        let c = random_passive_circuit(5, &mut RngStream::new(6, 0).rng()).unwrap();
        for g in c.gates() {
            if let Gate::BeamSplitter { mode_i, mode_j, .. } = *g {
                assert_eq!(mode_j, mode_i + 1);
            }
        }
    }

    #[test]
    fn circuit_validation() {
        let bad = Gate::BeamSplitter { mode_i: 0, mode_j: 0, theta: 0.1, phi: 0.0 };
        assert!(PassiveCircuit::new(2, vec![bad]).is_err());
        assert!(PassiveCircuit::new(2, vec![Gate::PhaseShifter { mode: 2, phase: 0.0 }]).is_err());
    }

    fn fifty_fifty() -> PassiveCircuit {
        PassiveCircuit::new(2, vec![Gate::BeamSplitter { mode_i: 0, mode_j: 1, theta: PI / 4.0, phi: 0.0 }]).unwrap()
    }

    #[test]
    fn vacuum_is_invariant() {
        let reg = FockRegister::total_photon(3, 3).unwrap();
        let circuit = random_passive_circuit(3, &mut RngStream::new(7, 0).rng()).unwrap();
        let u = lift_passive_to_fock(&circuit, &reg).unwrap();
        assert!((u.matrix[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(u.matrix.column(0).iter().skip(1).all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_photon_beam_splitter() {
        let reg = FockRegister::total_photon(2, 1).unwrap();
        let u = lift_passive_to_fock(&fifty_fifty(), &reg).unwrap();
        // |1,0> is basis index 2, |0,1> index 1
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((u.matrix[(2, 2)].norm() - h).abs() < 1e-14);
        assert!((u.matrix[(1, 2)].norm() - h).abs() < 1e-14);
    }

    #[test]
    fn hong_ou_mandel_adjacent() {
        let reg = FockRegister::total_photon(2, 2).unwrap();
        let u = lift_passive_to_fock(&fifty_fifty(), &reg).unwrap();
        let input = reg.index_of(&[2, 0]).unwrap();
        let probs: Vec<f64> =
            [[2, 0], [1, 1], [0, 2]].iter().map(|s| u.matrix[(reg.index_of(s).unwrap(), input)].norm_sqr()).collect();
        for (p, e) in probs.iter().zip([0.25, 0.5, 0.25]) {
            assert!((p - e).abs() < 1e-14);
        }
        // and the bunching dip: |1,1> never leaves as |1,1>
        let one_one = reg.index_of(&[1, 1]).unwrap();
        assert!(u.matrix[(one_one, one_one)].norm() < 1e-14);
    }

    #[test]
    fn lift_is_unitary_and_matches_single_photon_sector() {
        let mut rng = RngStream::new(8, 0).rng();
        for n in 2..=4 {
            let reg = FockRegister::total_photon(n, 3).unwrap();
            let circuit = random_passive_circuit(n, &mut rng).unwrap();
            let u = lift_passive_to_fock(&circuit, &reg).unwrap();
            assert!(unitarity_defect(&u.matrix) < 1e-10);
            let mode = circuit.mode_matrix();
            let one: Vec<usize> = (0..n)
                .map(|k| {
                    let mut s = vec![0; n];
                    s[k] = 1;
                    reg.index_of(&s).unwrap()
                })
                .collect();
            for a in 0..n {
                for b in 0..n {
                    assert!((u.matrix[(one[a], one[b])] - mode[(a, b)]).norm() < 1e-12);
                }
            }
            // photon number is conserved exactly
            for (row, s) in reg.basis().iter().enumerate() {
                for (col, t) in reg.basis().iter().enumerate() {
                    if s.iter().sum::<u32>() != t.iter().sum::<u32>() {
                        assert_eq!(u.matrix[(row, col)], C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn lift_errors() {
        let circuit = fifty_fifty();
        let reg3 = FockRegister::total_photon(3, 2).unwrap();
        assert!(matches!(
            lift_passive_to_fock(&circuit, &reg3),
            Err(Error::ModeCountMismatch { circuit: 2, register: 3 })
        ));
        let per_mode = FockRegister::per_mode(2, 2).unwrap();
        assert!(lift_passive_to_fock(&circuit, &per_mode).is_err());
    }
}
