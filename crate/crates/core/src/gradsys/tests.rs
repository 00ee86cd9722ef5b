use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::linalg::{Matrix, Vector};

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn quad_1d(a: f64, k: f64) -> GradientSystem {
    GradientSystem::new(
        Space::euclidean(1, "R"),
        Arc::new(QuadraticEnergy::new(Matrix::from_element(1, 1, a), v(&[0.0])).unwrap()),
        Arc::new(QuadraticDual::new(Matrix::from_element(1, 1, k)).unwrap()),
    )
    .unwrap()
}

fn l1_1d() -> GradientSystem {
    GradientSystem::new(
        Space::euclidean(1, "R"),
        Arc::new(QuadraticEnergy::new(Matrix::from_element(1, 1, 1.0), v(&[0.0])).unwrap()),
        Arc::new(L1QuadraticDual {
            dim: 1,
            sigma: 1.0,
            nu: 1.0,
        }),
    )
    .unwrap()
}

#[test]
fn conjugate_of_quadratic() {
    let r = |x: &Vector| x[0] * x[0];
    let c = legendre_conjugate(&r, &v(&[2.0]), &ConjugateOptions::default()).unwrap();
    assert!((c.value - 1.0).abs() < 1e-9);
    let c0 = legendre_conjugate(&r, &v(&[0.0]), &ConjugateOptions::default()).unwrap();
    assert!(c0.value.abs() < 1e-12);
}

#[test]
fn conjugate_of_l1_quadratic_below_threshold() {
    let r = |x: &Vector| x[0].abs() + 0.5 * x[0] * x[0];
    let c = legendre_conjugate(&r, &v(&[0.5]), &ConjugateOptions::default()).unwrap();
    assert!(c.value.abs() < 1e-10);
}

#[test]
fn conjugate_flags_linear_growth() {
    let r = |x: &Vector| x[0].abs();
    let res = legendre_conjugate(&r, &v(&[2.0]), &ConjugateOptions::default());
    assert!(matches!(res, Err(Error::Unbounded { .. })));
}

#[test]
fn fenchel_triple_examples() {
    let r = QuadraticDual::new(Matrix::from_element(1, 1, 1.0)).unwrap();
    let u = v(&[0.0]);
    assert!(check_fenchel_triple(&r, &u, &v(&[1.0]), &v(&[1.0]), 1e-12).unwrap());
    assert!(!check_fenchel_triple(&r, &u, &v(&[1.0]), &v(&[0.0]), 1e-12).unwrap());
    assert!(check_fenchel_triple(&r, &u, &v(&[0.0]), &v(&[0.0]), 1e-12).unwrap());
}

#[test]
fn fenchel_needs_primal() {
    struct NoPrimal;
    impl DualDissipation for NoPrimal {
        fn dim(&self) -> usize {
            1
        }
        fn dual_value(&self, _: &Vector, xi: &Vector) -> Result<f64> {
            Ok(0.5 * xi[0] * xi[0])
        }
        fn velocity(&self, _: &Vector, xi: &Vector) -> Result<Vector> {
            Ok(xi.clone())
        }
    }
    let z = v(&[0.0]);
    assert!(matches!(
        check_fenchel_triple(&NoPrimal, &z, &z, &z, 1e-9),
        Err(Error::MissingPrimal)
    ));
}

#[test]
fn flow_rhs_examples() {
    assert_eq!(gradient_flow_rhs(&quad_1d(1.0, 1.0), &v(&[2.0])).unwrap()[0], -2.0);
    assert_eq!(gradient_flow_rhs(&quad_1d(1.0, 1.0), &v(&[0.0])).unwrap()[0], 0.0);
    assert_eq!(gradient_flow_rhs(&l1_1d(), &v(&[0.5])).unwrap()[0], 0.0);
}

#[test]
fn dissipation_function_quadratic_and_cosh() {
    let gs = quad_1d(1.0, 3.0);
    let u = v(&[0.3]);
    let xi = v(&[0.7]);
    let phi = eval_dissipation_function(&gs, &u, &xi).unwrap();
    assert!((phi - 2.0 * gs.dissipation.dual_value(&u, &xi).unwrap()).abs() < 1e-14);
    assert_eq!(eval_dissipation_function(&gs, &u, &v(&[0.0])).unwrap(), 0.0);
    for z in [-3.0, -0.4, 0.1, 2.5] {
        let phi = 1.7 * z * cstar_prime(z);
        assert!(phi >= 0.0);
        assert!((phi - 1.7 * z * 2.0 * (z / 2.0f64).sinh()).abs() < 1e-12);
    }
}

#[test]
fn equilibrium_is_constant() {
    let gs = quad_1d(1.0, 1.0);
    let tr = integrate_gradient_flow(&gs, &v(&[0.0]), 1.0, &StepControl::default()).unwrap();
    assert!(tr.states.iter().all(|s| s[0] == 0.0));
    assert_eq!(edi_residual(&gs, &tr).unwrap(), 0.0);
}

#[test]
fn linear_decay_matches_exponential() {
    let gs = quad_1d(1.0, 1.0);
    let tr = integrate_gradient_flow(&gs, &v(&[1.0]), 1.0, &StepControl::fixed(1e-4)).unwrap();
    assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-4);
    let e: Vec<f64> = tr.states.iter().map(|s| gs.energy.value(s).unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn edi_residual_is_first_order_and_detects_perturbation() {
    let gs = quad_1d(1.0, 1.0);
    let r1 = edi_residual(&gs, &integrate_gradient_flow(&gs, &v(&[1.0]), 1.0, &StepControl::fixed(1e-2)).unwrap()).unwrap();
    let r2 = edi_residual(&gs, &integrate_gradient_flow(&gs, &v(&[1.0]), 1.0, &StepControl::fixed(5e-3)).unwrap()).unwrap();
    assert!(r1.abs() < 1e-3 && r2.abs() < r1.abs());
    let mut tr = integrate_gradient_flow(&gs, &v(&[1.0]), 1.0, &StepControl::fixed(1e-2)).unwrap();
    for (k, s) in tr.states.iter_mut().enumerate() {
        s[0] += 0.1 * (k as f64 * 0.3).sin();
    }
    assert!(edi_residual(&gs, &tr).unwrap() > 1e-3);
}

#[test]
fn fixed_steps_leave_no_roundoff_sliver() {
    let gs = quad_1d(1.0, 1.0);
    let tr = integrate_gradient_flow(&gs, &v(&[1.0]), 1.0, &StepControl::fixed(0.01 / 16.0)).unwrap();
    assert_eq!(tr.len(), 1601);
    let dt_min = tr.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    assert!(dt_min > 0.5 * 0.01 / 16.0);
    assert_eq!(*tr.times.last().unwrap(), 1.0);
}

#[test]
fn on_times_grid() {
    let gs = quad_1d(2.0, 0.5);
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let tr = integrate_on_times(&gs, &v(&[1.0]), &times, &StepControl::default()).unwrap();
    assert_eq!(tr.len(), 21);
    assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 2e-2);
}

#[test]
fn boltzmann_gradient_consistent() {
    let e = BoltzmannEnergy::new(v(&[1.0, 2.0])).unwrap();
    assert!(energy_gradient_error(&e, &v(&[0.4, 3.1])).unwrap() < 1e-8);
    assert!(!e.in_domain(&v(&[0.0, 1.0])));
}

#[test]
fn lambda_b_values() {
    assert_eq!(lambda_b(1.0).unwrap(), 0.0);
    assert!((lambda_b(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
    assert!(lambda_b(-1.0).is_err());
}

#[test]
fn cstar_log_identity() {
    for alpha in [0.5f64, 2.0, 10.0] {
        let rhs = 2.0 * (alpha.powf(0.25) - alpha.powf(-0.25)).powi(2);
        assert!((cstar(alpha.ln()) - rhs).abs() < 1e-13);
        assert!((cstar(alpha.ln()) - (4.0 * (alpha.ln() / 2.0).cosh() - 4.0)).abs() < 1e-12);
    }
}

fn registered() -> Vec<Box<dyn DualDissipation>> {
    let k = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    vec![
        Box::new(QuadraticDual::new(k).unwrap()),
        Box::new(L1QuadraticDual {
            dim: 2,
            sigma: 0.3,
            nu: 1.5,
        }),
    ]
}

proptest! {
    #[test]
    fn dissipations_are_convex_and_anchored(
        a in prop::array::uniform2(-5.0f64..5.0),
        b in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let u = v(&[0.0, 0.0]);
        for r in registered() {
            prop_assert_eq!(r.dual_value(&u, &v(&[0.0, 0.0])).unwrap(), 0.0);
            let fa = r.dual_value(&u, &v(&a)).unwrap();
            let fb = r.dual_value(&u, &v(&b)).unwrap();
            let mid = r.dual_value(&u, &((v(&a) + v(&b)) * 0.5)).unwrap();
            prop_assert!(fa >= 0.0 && fb >= 0.0);
            prop_assert!(mid <= 0.5 * (fa + fb) + 1e-12);
            let g = r.velocity(&u, &v(&a)).unwrap();
            prop_assert!(velocity_error(r.as_ref(), &u, &v(&a)).unwrap() <= 1e-6 * (1.0 + g.amax()));
        }
    }

    #[test]
    fn quadratic_energy_gradient(x in prop::array::uniform2(-3.0f64..3.0)) {
        let e = QuadraticEnergy::new(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]), v(&[0.5, -1.0])).unwrap();
        let g = e.gradient(&v(&x)).unwrap();
        prop_assert!(energy_gradient_error(&e, &v(&x)).unwrap() <= 1e-6 * (1.0 + g.amax()));
    }

    #[test]
    fn biconjugate_recovers_primal(x in -3.0f64..3.0) {
        let primal = |y: &Vector| 0.5 * y[0].abs() + 0.75 * y[0] * y[0];
        let opts = ConjugateOptions::default();
        let dual = |xi: &Vector| legendre_conjugate(&primal, xi, &opts).unwrap().value;
        let back = legendre_conjugate(&dual, &v(&[x]), &ConjugateOptions { bound: 20.0, tol: 1e-9, ..opts.clone() }).unwrap();
        prop_assert!((back.value - primal(&v(&[x]))).abs() < 1e-6);
    }

    #[test]
    fn flow_energy_monotone(u0 in prop::array::uniform2(-4.0f64..4.0)) {
        let gs = GradientSystem::new(
            Space::euclidean(2, "R2"),
            Arc::new(QuadraticEnergy::new(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]), v(&[0.5, -1.0])).unwrap()),
            Arc::new(L1QuadraticDual { dim: 2, sigma: 0.3, nu: 1.0 }),
        ).unwrap();
        let tr = integrate_gradient_flow(&gs, &v(&u0), 0.5, &StepControl::default()).unwrap();
        let e: Vec<f64> = tr.states.iter().map(|s| gs.energy.value(s).unwrap()).collect();
        prop_assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
