//! Truncated bosonic registers and the single-mode state families.
//!
//! Occupation strings are enumerated in lexicographic order. Under per-mode
//! truncation this coincides with row-major indexing of `[n_c + 1; N]`;
//! under total-photon truncation the register is a direct sum of
//! fixed-photon sectors and has no tensor-product structure, so reductions
//! go through [`ModeSplit`].

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{von_neumann_entropy, DensityOperator, HilbertSpec, PureState, C64, VALIDATION_TOL};

/// How the infinite Fock space of each mode is cut off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// At most `n_c` photons in every mode.
    PerMode(u32),
    /// At most `M` photons in total across all modes.
    TotalPhoton(u32),
}

#[derive(Clone, Debug)]
pub struct FockRegister {
    n_modes: usize,
    truncation: Truncation,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl PartialEq for FockRegister {
    fn eq(&self, other: &Self) -> bool {
        self.n_modes == other.n_modes && self.truncation == other.truncation
    }
}

impl FockRegister {
    pub fn new(n_modes: usize, truncation: Truncation) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes", "must be at least 1"));
        }
        let basis = match truncation {
            Truncation::PerMode(cap) => bounded_strings(n_modes, cap, u32::MAX),
            Truncation::TotalPhoton(total) => bounded_strings(n_modes, total, total),
        };
        let index = basis.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { n_modes, truncation, basis, index })
    }

    pub fn per_mode(n_modes: usize, cutoff: u32) -> Result<Self> {
        Self::new(n_modes, Truncation::PerMode(cutoff))
    }

    pub fn total_photon(n_modes: usize, max_total: u32) -> Result<Self> {
        Self::new(n_modes, Truncation::TotalPhoton(max_total))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn occupation(&self, index: usize) -> &[u32] {
        &self.basis[index]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Largest occupancy any single mode can hold.
    pub fn max_occupancy(&self) -> u32 {
        match self.truncation {
            Truncation::PerMode(cap) | Truncation::TotalPhoton(cap) => cap,
        }
    }

    /// Tensor-product view for per-mode registers, one factor otherwise.
    pub fn spec(&self) -> HilbertSpec {
        match self.truncation {
            Truncation::PerMode(cap) => {
                HilbertSpec::new(vec![cap as usize + 1; self.n_modes]).expect("positive factors")
            }
            Truncation::TotalPhoton(_) => HilbertSpec::single(self.dim()).expect("nonempty basis"),
        }
    }

    /// Partition of the modes into `keep` and the rest.
    pub fn split(&self, keep: &[usize]) -> Result<ModeSplit> {
        let mut kept_modes = keep.to_vec();
        kept_modes.sort_unstable();
        for pair in kept_modes.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateIndex(pair[0]));
            }
        }
        if let Some(&index) = kept_modes.iter().find(|&&m| m >= self.n_modes) {
            return Err(Error::FactorOutOfRange { index, n_factors: self.n_modes });
        }
        let traced_modes: Vec<usize> = (0..self.n_modes).filter(|m| !kept_modes.contains(m)).collect();
        let project = |s: &[u32], modes: &[usize]| modes.iter().map(|&m| s[m]).collect::<Vec<_>>();

        let kept_strings: Vec<Vec<u32>> =
            self.basis.iter().map(|s| project(s, &kept_modes)).collect::<BTreeSet<_>>().into_iter().collect();
        let traced_strings: Vec<Vec<u32>> =
            self.basis.iter().map(|s| project(s, &traced_modes)).collect::<BTreeSet<_>>().into_iter().collect();
        let kept_index: HashMap<&[u32], usize> =
            kept_strings.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        let traced_index: HashMap<&[u32], usize> =
            traced_strings.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        let pairs = self
            .basis
            .iter()
            .map(|s| {
                (kept_index[project(s, &kept_modes).as_slice()], traced_index[project(s, &traced_modes).as_slice()])
            })
            .collect();
        Ok(ModeSplit { kept_modes, traced_modes, kept_strings, traced_strings, pairs })
    }
}

/// Lexicographic enumeration of strings with every entry `<= cap` and the
/// sum `<= total`.
fn bounded_strings(n_modes: usize, cap: u32, total: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, cap: u32, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for v in 0..=cap.min(budget) {
            prefix.push(v);
            rec(prefix, left - 1, cap, budget - v, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n_modes), n_modes, cap, total, &mut out);
    out
}

/// All strings of `n_modes` occupancies summing to exactly `total`, in
/// lexicographic order.
pub fn fixed_total_strings(n_modes: usize, total: u32) -> Vec<Vec<u32>> {
    bounded_strings(n_modes, total, total).into_iter().filter(|s| s.iter().sum::<u32>() == total).collect()
}

/// Kept/traced decomposition of a register's basis.
#[derive(Clone, Debug)]
pub struct ModeSplit {
    pub kept_modes: Vec<usize>,
    pub traced_modes: Vec<usize>,
    /// Distinct kept substrings, lexicographic.
    pub kept_strings: Vec<Vec<u32>>,
    /// Distinct traced substrings, lexicographic.
    pub traced_strings: Vec<Vec<u32>>,
    /// `pairs[i]` = (kept index, traced index) of register basis state `i`.
    pub pairs: Vec<(usize, usize)>,
}

impl ModeSplit {
    /// Reduces pure states stored as the rows-by-register matrix `psi`
    /// (row `o` = outer index, e.g. a reference system) to the outer system
    /// together with the kept modes. Result index is `o * n_kept + kept`.
    pub fn reduce_pure(&self, psi: &DMatrix<C64>) -> DensityOperator {
        let outer = psi.nrows();
        let n_kept = self.kept_strings.len();
        let mut m = DMatrix::<C64>::zeros(outer * n_kept, self.traced_strings.len());
        for (col, &(k, t)) in self.pairs.iter().enumerate() {
            for o in 0..outer {
                m[(o * n_kept + k, t)] = psi[(o, col)];
            }
        }
        let spec = HilbertSpec::new(vec![outer, n_kept]).expect("positive dims");
        DensityOperator::from_parts(&m * m.adjoint(), spec)
    }

    /// Reduces a register density operator to the kept modes.
    pub fn reduce_density(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let dim = self.pairs.len();
        if rho.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: rho.dim() });
        }
        let n_kept = self.kept_strings.len();
        let mut out = DMatrix::<C64>::zeros(n_kept, n_kept);
        // group register indices by traced substring
        let mut by_traced: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.traced_strings.len()];
        for (i, &(k, t)) in self.pairs.iter().enumerate() {
            by_traced[t].push((k, i));
        }
        let m = rho.matrix();
        for group in &by_traced {
            for &(ka, ia) in group {
                for &(kb, ib) in group {
                    out[(ka, kb)] += m[(ia, ib)];
                }
            }
        }
        Ok(DensityOperator::from_parts(out, HilbertSpec::single(n_kept)?))
    }
}

/// Two-mode squeezed vacuum truncated at `cutoff` photons per mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoModeSqueezedState {
    pub r: f64,
    pub cutoff: u32,
    pub renormalized: bool,
}

impl TwoModeSqueezedState {
    pub fn new(r: f64, cutoff: u32, renormalized: bool) -> Result<Self> {
        if r.is_nan() || r < 0.0 || !r.is_finite() {
            return Err(invalid("r", format!("squeeze strength must be finite and >= 0, got {r}")));
        }
        Ok(Self { r, cutoff, renormalized })
    }

    /// `tanh^n(r) / cosh(r)` for `n = 0..=cutoff`, rescaled to unit norm
    /// when renormalized.
    pub fn schmidt_coefficients(&self) -> Vec<f64> {
        let raw = raw_tmss_coefficients(self.r, self.cutoff);
        if self.renormalized {
            let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
            raw.into_iter().map(|c| c / norm).collect()
        } else {
            raw
        }
    }

    /// `1 - sum_n c_n^2` of the raw truncation.
    pub fn norm_deficit(&self) -> f64 {
        1.0 - raw_tmss_coefficients(self.r, self.cutoff).iter().map(|c| c * c).sum::<f64>()
    }

    pub fn state(&self) -> PureState {
        let d = self.cutoff as usize + 1;
        let spec = HilbertSpec::new(vec![d, d]).expect("positive dims");
        let mut amplitudes = DVector::zeros(d * d);
        for (n, c) in self.schmidt_coefficients().into_iter().enumerate() {
            amplitudes[n * d + n] = C64::new(c, 0.0);
        }
        PureState::from_raw_amplitudes(amplitudes, spec).expect("length matches spec")
    }
}

fn raw_tmss_coefficients(r: f64, cutoff: u32) -> Vec<f64> {
    let (t, c) = (r.tanh(), r.cosh());
    (0..=cutoff).map(|n| t.powi(n as i32) / c).collect()
}

/// Truncated two-mode squeezed state on `[cutoff + 1, cutoff + 1]`.
pub fn tmss_state(r: f64, cutoff: u32, renormalized: bool) -> Result<PureState> {
    Ok(TwoModeSqueezedState::new(r, cutoff, renormalized)?.state())
}

/// Thermal (geometric) photon-number distribution truncated at `cutoff`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub n_bar: f64,
    pub cutoff: u32,
    pub renormalized: bool,
}

impl ThermalState {
    pub fn new(n_bar: f64, cutoff: u32, renormalized: bool) -> Result<Self> {
        if n_bar.is_nan() || n_bar < 0.0 || !n_bar.is_finite() {
            return Err(invalid("n_bar", format!("must be finite and >= 0, got {n_bar}")));
        }
        Ok(Self { n_bar, cutoff, renormalized })
    }

    /// `p_n = n̄^n / (n̄ + 1)^(n+1)` for `n = 0..=cutoff`.
    pub fn probabilities(&self) -> Vec<f64> {
        let raw = thermal_probability_series(self.n_bar, self.cutoff);
        if self.renormalized {
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / total).collect()
        } else {
            raw
        }
    }

    pub fn distribution(&self) -> Result<DiagonalModeDistribution> {
        DiagonalModeDistribution::new(self.probabilities())
    }

    pub fn density(&self) -> Result<DensityOperator> {
        let probs = self.probabilities();
        let spec = HilbertSpec::single(probs.len())?;
        DensityOperator::diagonal(&probs, spec)
    }
}

fn thermal_probability_series(n_bar: f64, cutoff: u32) -> Vec<f64> {
    let ratio = n_bar / (n_bar + 1.0);
    (0..=cutoff).map(|n| ratio.powi(n as i32) / (n_bar + 1.0)).collect()
}

/// Geometric probability of occupancy `n` at mean `n_bar`, untruncated.
pub fn thermal_probability(n_bar: f64, n: u32) -> f64 {
    (n_bar / (n_bar + 1.0)).powi(n as i32) / (n_bar + 1.0)
}

/// Single-mode state diagonal in the Fock basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalModeDistribution {
    probs: Vec<f64>,
}

impl DiagonalModeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("probs", "empty distribution"));
        }
        if let Some(p) = probs.iter().find(|p| p.is_nan() || **p < 0.0) {
            return Err(invalid("probs", format!("negative or NaN entry {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(invalid("probs", format!("sums to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Entanglement of the two-mode squeezed vacuum in bits:
/// `cosh²r log2 cosh²r - sinh²r log2 sinh²r`.
pub fn tmss_entanglement(r: f64) -> f64 {
    let s2 = r.sinh().powi(2);
    let c2 = r.cosh().powi(2);
    let sinh_term = if s2 > 0.0 { s2 * s2.log2() } else { 0.0 };
    c2 * c2.log2() - sinh_term
}

/// Entropy of a thermal mode in bits, `g(n̄) = (n̄+1)log2(n̄+1) - n̄ log2 n̄`.
pub fn thermal_entropy(n_bar: f64) -> f64 {
    if n_bar <= 0.0 {
        return 0.0;
    }
    (n_bar + 1.0) * (n_bar + 1.0).log2() - n_bar * n_bar.log2()
}

/// `2^S(ρ)`.
pub fn effective_dimension(rho: &DensityOperator) -> Result<f64> {
    Ok(von_neumann_entropy(rho)?.exp2())
}

/// Squeeze strength after spreading `K` pairs' photons over `N` modes:
/// `sinh²r₀ = K sinh²r / N`.
pub fn r0_from(k: usize, n: usize, r: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid("K", format!("need 1 <= K <= N, got K = {k}, N = {n}")));
    }
    if r.is_nan() || r < 0.0 {
        return Err(invalid("r", format!("must be >= 0, got {r}")));
    }
    Ok((k as f64 * r.sinh().powi(2) / n as f64).sqrt().asinh())
}

/// Removes every coherence between occupation strings. Equivalent to an
/// independent uniformly random phase on each mode.
pub fn dephase(rho: &DensityOperator, register: &FockRegister) -> Result<DensityOperator> {
    let all: Vec<usize> = (0..register.n_modes()).collect();
    dephase_modes(rho, register, &all)
}

/// Zeroes the elements between strings that differ in any of `modes`.
pub fn dephase_modes(rho: &DensityOperator, register: &FockRegister, modes: &[usize]) -> Result<DensityOperator> {
    if rho.dim() != register.dim() {
        return Err(Error::DimensionMismatch { expected: register.dim(), found: rho.dim() });
    }
    if let Some(&index) = modes.iter().find(|&&m| m >= register.n_modes()) {
        return Err(Error::FactorOutOfRange { index, n_factors: register.n_modes() });
    }
    let mut m = rho.matrix().clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let (a, b) = (register.occupation(i), register.occupation(j));
            if modes.iter().any(|&k| a[k] != b[k]) {
                m[(i, j)] = C64::new(0.0, 0.0);
            }
        }
    }
    Ok(DensityOperator::from_parts(m, rho.spec().clone()))
}

/// Floating-point slack on the typicality inequality.
const TYPICALITY_SLACK: f64 = 1e-12;

/// Upper bound on the number of candidate strings enumerated.
const TYPICAL_ENUMERATION_LIMIT: usize = 1 << 24;

/// Base distribution, mode count and half-width (bits per mode) of a typical set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalSubspaceSpec {
    pub base: DiagonalModeDistribution,
    pub n_modes: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypicalSet {
    /// Member occupation strings, lexicographic.
    pub strings: Vec<Vec<u32>>,
    /// Row-major indices into `[base.len(); N]`.
    pub indices: Vec<usize>,
    /// Total base probability of the members.
    pub probability: f64,
    /// Entropy of the base distribution in bits.
    pub entropy: f64,
}

impl TypicalSet {
    pub fn dimension(&self) -> usize {
        self.strings.len()
    }

    /// Register indices of the members that fit in `register`, plus the
    /// number of members that do not.
    pub fn restrict_to(&self, register: &FockRegister) -> (Vec<usize>, usize) {
        let inside: Vec<usize> = self.strings.iter().filter_map(|s| register.index_of(s)).collect();
        let dropped = self.strings.len() - inside.len();
        (inside, dropped)
    }
}

/// Strings `s` with `|-(1/N) sum_j log2 p(s_j) - H| <= delta`. Strings
/// containing a zero-probability occupancy are never typical.
pub fn typical_projector(spec: &TypicalSubspaceSpec) -> Result<TypicalSet> {
    if spec.delta.is_nan() || spec.delta < 0.0 {
        return Err(invalid("delta", format!("must be >= 0, got {}", spec.delta)));
    }
    if spec.n_modes == 0 {
        return Err(invalid("n_modes", "must be at least 1"));
    }
    let probs = spec.base.probs();
    let entropy = spec.base.entropy();
    let levels = probs.len();
    let support: Vec<usize> = (0..levels).filter(|&n| probs[n] > 0.0).collect();
    let candidates = support.len().checked_pow(spec.n_modes as u32);
    match candidates {
        Some(c) if c <= TYPICAL_ENUMERATION_LIMIT => {}
        _ => return Err(Error::TooLarge { dim: candidates.unwrap_or(usize::MAX), limit: TYPICAL_ENUMERATION_LIMIT }),
    }
    let surprisal: Vec<f64> = probs.iter().map(|&p| -p.log2()).collect();
    let n = spec.n_modes;
    let mut strings = Vec::new();
    let mut indices = Vec::new();
    let mut probability = 0.0;
    // odometer over the support, most significant digit first
    let mut digits = vec![0usize; n];
    loop {
        let rate = digits.iter().map(|&d| surprisal[support[d]]).sum::<f64>() / n as f64;
        if (rate - entropy).abs() <= spec.delta + TYPICALITY_SLACK {
            let s: Vec<u32> = digits.iter().map(|&d| support[d] as u32).collect();
            indices.push(s.iter().fold(0usize, |acc, &v| acc * levels + v as usize));
            probability += s.iter().map(|&v| probs[v as usize]).product::<f64>();
            strings.push(s);
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                if strings.is_empty() {
                    return Err(Error::EmptyTypicalSet { n_modes: n, delta: spec.delta, entropy });
                }
                return Ok(TypicalSet { strings, indices, probability, entropy });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < support.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}
