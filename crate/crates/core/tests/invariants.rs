use nalgebra::DMatrix;
use proptest::prelude::*;

use decoupler_core::erasure::{cv_capacity, dv_capacity, finite_dim_bound, CvErasureChannel, DvErasureChannel};
use decoupler_core::experiments::{run_dv_decoupling, DvExperimentConfig};
use decoupler_core::fock::{fixed_total_strings, typical_projector, FockRegister, ThermalState, TypicalSubspaceSpec};
use decoupler_core::haar::{haar_unitary, lift_passive_to_fock, random_passive_circuit, PassiveCircuit, RngStream};
use decoupler_core::operator::{
    hermitian_eigenvalues, hs_norm, max_abs_diff, partial_trace, trace_norm, unitarity_defect,
};
use decoupler_core::random::{random_density, random_hermitian};
use decoupler_core::twirl::twirl_double;
use decoupler_core::{DensityOperator, Error, HilbertSpec, C64};

fn state_on(dims: &[usize], seed: u64) -> DensityOperator {
    let d: usize = dims.iter().product();
    let rho = random_density(d, &mut RngStream::new(seed, 0).rng());
    DensityOperator::new(rho.into_matrix(), HilbertSpec::new(dims.to_vec()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_traces_compose(a in 1usize..4, b in 1usize..4, c in 1usize..4, seed in any::<u64>()) {
        let rho = state_on(&[a, b, c], seed);
        let stepwise = partial_trace(&partial_trace(&rho, &[0, 1]).unwrap(), &[0]).unwrap();
        let direct = partial_trace(&rho, &[0]).unwrap();
        prop_assert!(max_abs_diff(stepwise.matrix(), direct.matrix()) < 1e-12);
        prop_assert!((direct.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_recovers_factor(a in 1usize..5, b in 1usize..5, seed in any::<u64>()) {
        let x = state_on(&[a], seed);
        let y = state_on(&[b], seed ^ 0x5555);
        let xy = x.tensor(&y);
        prop_assert!(max_abs_diff(partial_trace(&xy, &[0]).unwrap().matrix(), x.matrix()) < 1e-12);
        prop_assert!(max_abs_diff(partial_trace(&xy, &[1]).unwrap().matrix(), y.matrix()) < 1e-12);
    }

    #[test]
    fn norm_chain(d in 1usize..8, seed in any::<u64>()) {
        let x = random_hermitian(d, &mut RngStream::new(seed, 0).rng());
        let t = trace_norm(&x).unwrap();
        let h = hs_norm(&x);
        prop_assert!(h <= t * (1.0 + 1e-12) + 1e-15);
        prop_assert!(t <= (d as f64).sqrt() * h * (1.0 + 1e-12));
    }

    #[test]
    fn haar_samples_are_unitary(d in 1usize..10, seed in any::<u64>()) {
        let u = haar_unitary(d, &mut RngStream::new(seed, 0).rng()).unwrap();
        prop_assert!(unitarity_defect(&u.matrix) < 1e-12);
    }

    #[test]
    fn passive_circuits_round_trip_and_lift_unitarily(n in 1usize..5, m in 0u32..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0).rng();
        let circuit = random_passive_circuit(n, &mut rng).unwrap();
        let u = circuit.mode_matrix();
        let rebuilt = PassiveCircuit::from_unitary(&u).unwrap();
        prop_assert!(max_abs_diff(&rebuilt.mode_matrix(), &u) < 1e-10);

        let reg = FockRegister::total_photon(n, m).unwrap();
        let lifted = lift_passive_to_fock(&circuit, &reg).unwrap();
        prop_assert!(unitarity_defect(&lifted.matrix) < 1e-10);
        // photon number is conserved
        for (i, a) in reg.basis().iter().enumerate() {
            for (j, b) in reg.basis().iter().enumerate() {
                if a.iter().sum::<u32>() != b.iter().sum::<u32>() {
                    prop_assert!(lifted.matrix[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn double_twirl_is_invariant(d in 2usize..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0).rng();
        let x = random_hermitian(d * d, &mut rng);
        let v = haar_unitary(d, &mut rng).unwrap().matrix;
        let vv = v.kronecker(&v);
        let rotated = &vv * &x * vv.adjoint();
        let a = twirl_double(&x, d).unwrap();
        let b = twirl_double(&rotated, d).unwrap();
        prop_assert!(max_abs_diff(&a, &b) < 1e-10);
        let again = twirl_double(&a, d).unwrap();
        prop_assert!(max_abs_diff(&a, &again) < 1e-10);
    }

    #[test]
    fn erasure_channels_are_cptp(d in 1usize..5, cutoff in 0u32..3, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let dv = DvErasureChannel::new(d, p).unwrap();
        let choi = dv.choi();
        prop_assert!(hermitian_eigenvalues(&choi).iter().all(|&l| l > -1e-12));
        let rho = random_density(d, &mut RngStream::new(seed, 0).rng());
        let out = dv.apply(&rho).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-12);

        let cv = CvErasureChannel::new(cutoff, p).unwrap();
        prop_assert!(hermitian_eigenvalues(&cv.choi()).iter().all(|&l| l > -1e-12));
        let x = DMatrix::<C64>::identity(cutoff as usize + 1, cutoff as usize + 1);
        let y = cv.apply_matrix(&x).unwrap();
        prop_assert!((y.trace().re - (cutoff as f64 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn capacities_fall_with_erasure(p in 0.0f64..0.99, dp in 0.001f64..0.01, d in 2usize..9, r0 in 0.0f64..2.0) {
        let q = p + dp;
        prop_assert!(dv_capacity(q, d).unwrap() <= dv_capacity(p, d).unwrap());
        prop_assert!(cv_capacity(q, r0).unwrap().value <= cv_capacity(p, r0).unwrap().value + 1e-15);
        prop_assert!(cv_capacity(p, r0).unwrap().value >= 0.0);
    }

    #[test]
    fn typical_sets_are_bounded(n_bar in 0.1f64..2.0, modes in 1usize..5, delta in 0.0f64..1.0) {
        let base = ThermalState::new(n_bar, 5, true).unwrap().distribution().unwrap();
        let set = match typical_projector(&TypicalSubspaceSpec { base, n_modes: modes, delta }) {
            Ok(set) => set,
            Err(Error::EmptyTypicalSet { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(set.probability <= 1.0 + 1e-12);
        let cap = (modes as f64 * (set.entropy + delta)).exp2();
        prop_assert!(set.dimension() as f64 <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn shell_strings_are_counted(n in 1usize..6, total in 0u32..6) {
        let strings = fixed_total_strings(n, total);
        let expected = (1..n as u64).fold(1u64, |acc, i| acc * (total as u64 + i) / i);
        prop_assert_eq!(strings.len() as u64, expected);
        prop_assert!(strings.iter().all(|s| s.iter().sum::<u32>() == total));
    }

    #[test]
    fn finite_bound_scales(d_r in 1usize..6, d_a1 in 1usize..6, d_a2 in 1usize..6) {
        let b = finite_dim_bound(d_r, d_a1, d_a2, 1.0).unwrap();
        prop_assert!((b * b - (d_r * d_a2) as f64 / d_a1 as f64).abs() < 1e-12 * b * b);
    }
}

/// More erasures never help: the mean distance grows with the erased count.
#[test]
fn dv_distance_grows_with_erasures() {
    let means: Vec<f64> = (0..=3)
        .map(|e| {
            run_dv_decoupling(&DvExperimentConfig { local_dim: 2, n: 5, k: 1, erased_count: e, samples: 60, seed: 3 })
                .unwrap()
                .mean
        })
        .collect();
    assert!(means[0] < 1e-10);
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}
