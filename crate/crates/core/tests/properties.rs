use dpqca::dkca::{dk_density_trace, DkcaLattice};
use dpqca::experiment::{fit_delta, FitMethod};
use dpqca::linalg::{self, max_abs_diff, CMat, ONE, ZERO};
use dpqca::model::{dp_quantum_rates, dp_site_rule, steady_state_3cell, stationarity_residuals, NeighborhoodLabel};
use dpqca::mps::{truncate, FiniteMPS, RoundEvolution, RoundPropagator, TruncationConfig};
use dpqca::observables::{concurrence, reduce_density, schmidt_entropy, Sites};
use dpqca::oracle::{assemble_chain_liouvillian, integrate, Boundary, DenseState, TrotterChain};
use dpqca::superop::{build_round_gates, ScheduleConfig};
use faer::Mat;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

/// `AA^dag / tr` for a complex matrix given by its real and imaginary parts.
fn density_from(entries: &[(f64, f64)], dim: usize) -> CMat {
    let a = Mat::from_fn(dim, dim, |i, j| C64::new(entries[i * dim + j].0, entries[i * dim + j].1));
    let rho = linalg::matmul(a.as_ref(), linalg::adjoint(a.as_ref()).as_ref());
    let tr: C64 = (0..dim).map(|i| rho[(i, i)]).sum();
    linalg::scale(rho.as_ref(), ONE / tr)
}

fn qubit_unitary(a: f64, b: f64, c: f64) -> CMat {
    let (ca, sa) = ((a / 2.0).cos(), (a / 2.0).sin());
    let e = |x: f64| C64::from_polar(1.0, x);
    let m = [[e((b + c) / 2.0) * ca, -e((b - c) / 2.0) * sa], [e(-(b - c) / 2.0) * sa, e(-(b + c) / 2.0) * ca]];
    Mat::from_fn(2, 2, |i, j| m[i][j])
}

fn row_major(rho: &CMat) -> Vec<C64> {
    let d = rho.nrows();
    (0..d * d).map(|k| rho[(k / d, k % d)]).collect()
}

fn full() -> CMat {
    Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO })
}

/// Rates of the coherent model where they exist.
fn physical(p: f64, omega: f64) -> Option<dpqca::model::ThreeCellParams> {
    dp_quantum_rates(p, omega).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_gates_preserve_trace(p in 0.05f64..0.95, omega in 0.0f64..0.1, tau in 0.05f64..10.0) {
        let Some(params) = physical(p, omega) else { return Ok(()) };
        let (v, w) = build_round_gates(&params, &ScheduleConfig::discrete(tau).unwrap()).unwrap();
        prop_assert!(v.trace_defect() < 1e-12, "{}", v.trace_defect());
        prop_assert!(w.trace_defect() < 1e-12, "{}", w.trace_defect());
    }

    #[test]
    fn closed_form_steady_states_are_stationary(p in 0.05f64..0.95, omega in 0.0f64..0.1) {
        let Some(params) = physical(p, omega) else { return Ok(()) };
        for label in NeighborhoodLabel::ALL {
            let rates = params.get(label);
            let s = steady_state_3cell(rates).unwrap();
            let worst = stationarity_residuals(rates, &s).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(worst < 1e-9, "{label}: {worst:e}");
        }
    }

    #[test]
    fn concurrence_is_local_unitary_invariant(
        entries in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
        angles in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 6),
    ) {
        let rho = density_from(&entries, 4);
        let u = linalg::kron(
            qubit_unitary(angles[0], angles[1], angles[2]).as_ref(),
            qubit_unitary(angles[3], angles[4], angles[5]).as_ref(),
        );
        let rotated = linalg::matmul(linalg::matmul(u.as_ref(), rho.as_ref()).as_ref(), linalg::adjoint(u.as_ref()).as_ref());
        let a = concurrence(&rho).unwrap();
        let b = concurrence(&rotated).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        prop_assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn product_states_carry_no_concurrence(
        x in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        y in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
    ) {
        let rho = linalg::kron(density_from(&x, 2).as_ref(), density_from(&y, 2).as_ref());
        prop_assert!(concurrence(&rho).unwrap() < 1e-7);
    }

    #[test]
    fn site_dp_couples_monotonically(p in 0.3f64..0.9, dp in 0.0f64..0.1, seed in 0u64..1000) {
        let (lo, hi) = (dp_site_rule(p).unwrap(), dp_site_rule((p + dp).min(1.0)).unwrap());
        let mut a = DkcaLattice::full(64, seed).unwrap();
        let mut b = DkcaLattice::full(64, seed).unwrap();
        for _ in 0..50 {
            a.round(&lo);
            b.round(&hi);
            prop_assert!(a.cells.iter().zip(&b.cells).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn discarded_weight_is_dropped_fraction(
        mut values in proptest::collection::vec(0.0f64..1.0, 1..40),
        max_bond in 1usize..20,
    ) {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let cfg = TruncationConfig { max_bond, tolerance: 1e-12 };
        let (keep, discarded) = truncate(&values, &cfg);
        prop_assert!(keep >= 1 && keep <= max_bond.max(1));
        let total: f64 = values.iter().map(|s| s * s).sum();
        if total > 0.0 {
            let expected = values[keep..].iter().map(|s| s * s).sum::<f64>() / total;
            prop_assert!((discarded - expected).abs() < 1e-14);
        }
        prop_assert!((0.0..=1.0).contains(&discarded));
    }

    #[test]
    fn schmidt_entropy_is_bounded(values in proptest::collection::vec(0.0f64..1.0, 1..64)) {
        let s = schmidt_entropy(&values);
        prop_assert!(s >= 0.0);
        prop_assert!(s <= (values.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn power_law_fit_is_exact(delta in 0.01f64..2.0, amplitude in 0.01f64..10.0, points in 20usize..400) {
        let t: Vec<f64> = (1..=points).map(|r| r as f64 * 0.37).collect();
        let n: Vec<f64> = t.iter().map(|x| amplitude * x.powf(-delta)).collect();
        let fit = fit_delta(&t, &n, 0.5, FitMethod::PowerLaw).unwrap();
        prop_assert!((fit.delta - delta).abs() < 1e-6, "{} vs {delta}", fit.delta);
    }

    #[test]
    fn power_law_fit_tolerates_small_noise(
        delta in 0.05f64..1.0,
        noise in proptest::collection::vec(-0.01f64..0.01, 400),
    ) {
        let t: Vec<f64> = (1..=400).map(|r| r as f64).collect();
        let n: Vec<f64> = t.iter().zip(&noise).map(|(x, e)| x.powf(-delta) * (1.0 + e)).collect();
        let fit = fit_delta(&t, &n, 0.5, FitMethod::PowerLaw).unwrap();
        prop_assert!((fit.delta - delta).abs() < 0.01, "{} vs {delta}", fit.delta);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dense_flow_is_a_semigroup(p in 0.5f64..0.95, omega in 0.0f64..0.1, t1 in 0.01f64..0.5, t2 in 0.01f64..0.5) {
        let params = dp_quantum_rates(p, omega).unwrap();
        let l = assemble_chain_liouvillian(&params, 3, Boundary::Open).unwrap();
        let start = DenseState::product(3, &full()).unwrap();
        let joint = integrate(&start, &l, t1 + t2).unwrap();
        let split = integrate(&integrate(&start, &l, t1).unwrap(), &l, t2).unwrap();
        prop_assert!(max_abs_diff(joint.rho.as_ref(), split.rho.as_ref()) < 1e-10);
        // Same flow by a dense matrix exponential of the generator.
        let prop = linalg::expm(l.to_dense().as_ref(), t1 + t2).unwrap();
        let direct = linalg::mat_vec(prop.as_ref(), &row_major(&start.rho));
        let reference = row_major(&joint.rho);
        let diff = direct.iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-10, "{diff:e}");
    }

    #[test]
    fn empty_chain_is_a_fixed_point(p in 0.0f64..1.0, omega in 0.0f64..0.1, tau in 0.1f64..10.0) {
        let Some(params) = physical(p, omega) else { return Ok(()) };
        let chain = TrotterChain::new(&params, 5, &ScheduleConfig::discrete(tau).unwrap()).unwrap();
        let empty = DenseState::basis(&[0; 5]).unwrap();
        let after = chain.round(&empty);
        prop_assert!(max_abs_diff(after.rho.as_ref(), empty.rho.as_ref()) < 1e-12);
    }

    #[test]
    fn mps_reduced_matrices_are_hermitian(p in 0.55f64..0.95, omega in 0.0f64..0.1, tau in 0.2f64..2.0) {
        let params = dp_quantum_rates(p, omega).unwrap();
        let (v, w) = build_round_gates(&params, &ScheduleConfig::discrete(tau).unwrap()).unwrap();
        let mut mps = FiniteMPS::product(4, &full(), TruncationConfig::new(8).unwrap()).unwrap();
        let prop = RoundPropagator::new(&v, &w, &mps.active).unwrap();
        for _ in 0..3 {
            mps.advance(&prop).unwrap();
        }
        for q in 0..mps.n_qubits() - 1 {
            let rho = reduce_density(&mps, Sites::Pair(q)).unwrap();
            prop_assert!(max_abs_diff(rho.as_ref(), linalg::adjoint(rho.as_ref()).as_ref()) < 1e-8);
        }
    }
}

#[test]
fn fixed_seeds_give_identical_csv() {
    let rule = dp_site_rule(0.7).unwrap();
    let render = || {
        let mut buf = Vec::new();
        dk_density_trace(&rule, 128, 40, &[3, 1, 4, 1, 5]).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(render(), render());
}
