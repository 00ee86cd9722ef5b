use proptest::prelude::*;

use super::*;
use crate::bfunction::{extract_ber, BerPlan, BredOptions};
use crate::gradsys::{gradient_flow_rhs, integrate_gradient_flow, Energy, StepControl};
use crate::numerics::{fd_gradient, golden_section};
use crate::slowfast::{bred_numeric, integrate_slow_fast, solve_fast_ness, FastNessOptions};

fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

fn cfg() -> FourSpeciesConfig {
    FourSpeciesConfig::default()
}

fn state(a: f64, b: f64, c: f64, d: f64) -> ConcentrationState {
    ConcentrationState { a, b, c, d }
}

fn slow_force(cfg: &FourSpeciesConfig, u: &Vector) -> Vector {
    v(&[
        -(u[0] / cfg.a_star).ln(),
        -(u[1] / cfg.b_star).ln(),
        -(u[2] / cfg.c_star).ln(),
    ])
}

#[test]
fn scalar_special_values() {
    assert_eq!(lambda_b(1.0).unwrap(), 0.0);
    assert!((lambda_b(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
    assert!(lambda_b(-1.0).is_err());
    assert_eq!(cstar_fn(0.0), 0.0);
    for alpha in [0.5f64, 2.0, 10.0] {
        let expect = 2.0 * (alpha.powf(0.25) - alpha.powf(-0.25)).powi(2);
        assert!((cstar_fn(alpha.ln()) - expect).abs() < 1e-13);
        assert_eq!(cstar_fn(alpha.ln()), cstar_fn(-alpha.ln()));
    }
}

#[test]
fn equilibrium_has_zero_rates() {
    let c = cfg();
    for eps in [1.0, 0.1, 0.01] {
        let s = state(c.a_star, c.b_star, c.c_star, eps * c.w_star);
        assert!(rre_rhs(&c, eps, &s).unwrap().amax() < 1e-14);
    }
}

#[test]
fn rates_conserve_left_null_vectors() {
    let c = cfg();
    let null = crate::linalg::null_space(&four_species_stoichiometry().transpose());
    assert_eq!(null.ncols(), 2);
    let r = rre_rhs(&c, 0.1, &state(0.3, 1.7, 0.9, 0.05)).unwrap();
    assert!((null.transpose() * r).amax() < 1e-14);
}

#[test]
fn rates_linear_in_first_coefficient() {
    let c = cfg();
    let s = state(0.3, 1.7, 0.9, 0.05);
    let doubled = FourSpeciesConfig { kappa1: 2.0 * c.kappa1, ..c };
    let c0 = FourSpeciesConfig { kappa1: 1e-300, ..c };
    let first = rre_rhs(&c, 0.1, &s).unwrap() - rre_rhs(&c0, 0.1, &s).unwrap();
    let first2 = rre_rhs(&doubled, 0.1, &s).unwrap() - rre_rhs(&c0, 0.1, &s).unwrap();
    assert!((first2 - first * 2.0).amax() < 1e-12);
}

#[test]
fn cosh_dual_generates_mass_action() {
    let c = cfg();
    let eps = 0.2;
    let entropy = four_species_entropy(&c, eps).unwrap();
    for k in 0..10 {
        let h = crate::numerics::halton(k + 1, 4);
        let s = state(0.2 + 2.0 * h[0], 0.2 + 2.0 * h[1], 0.2 + 2.0 * h[2], eps * (0.2 + 2.0 * h[3]));
        assert_eq!(cosh_dual_r(&c, eps, &s, &Vector::zeros(4)).unwrap(), 0.0);
        let xi = -entropy.gradient(&s.to_vector()).unwrap();
        let dual = |x: &Vector| cosh_dual_r(&c, eps, &s, x).unwrap();
        let vel = fd_gradient(&dual, &xi);
        assert!((vel - rre_rhs(&c, eps, &s).unwrap()).amax() < 1e-7);
    }
}

#[test]
fn w_infimum_against_line_search() {
    assert_eq!(w_infimum(1.0, 2.0, 0.0), 0.0);
    assert_eq!(w_infimum(0.0, 2.0, 1.3), 0.0);
    let (g, h, rho) = (1.0, 2.0, 1.0);
    let f = |z: f64| g * cstar(z) + h * cstar(rho - z);
    let (_, m) = golden_section(&f, -10.0, 10.0, 1e-12);
    assert!((w_infimum(g, h, rho) - m).abs() < 1e-9);
    assert!((w_infimum(g, h, rho) - (4.0 * w_function(g, h, rho) - 4.0 * (g + h))).abs() < 1e-13);
}

#[test]
fn kappa_eff_values() {
    let c = cfg();
    assert_eq!(kappa_eff(&c, 0.0), c.kappa2);
    let sym = FourSpeciesConfig {
        kappa1: 3.0,
        kappa2: 3.0,
        ..c
    };
    assert!((kappa_eff(&sym, sym.a_star) - 1.5).abs() < 1e-15);
    let mut last = f64::INFINITY;
    for a in [0.01, 0.1, 1.0, 10.0] {
        let k = kappa_eff(&c, a);
        assert!(k > 0.0 && k < c.kappa2 && k < last);
        last = k;
    }
}

#[test]
fn fast_ness_closed_form() {
    let c = cfg();
    assert!((fast_ness_w(&c, &c.slow_equilibrium()).unwrap() - c.w_star).abs() < 1e-15);
    let sf = to_slow_fast(&c).unwrap();
    for k in 0..20 {
        let h = crate::numerics::halton(k + 1, 3);
        let u = v(&[0.1 + 3.0 * h[0], 0.1 + 3.0 * h[1], 0.1 + 3.0 * h[2]]);
        let w = fast_ness_w(&c, &u).unwrap();
        let rates = rre_rhs(&c, 1.0, &ConcentrationState::from_slow_fast(&u, w, 1.0)).unwrap();
        assert!(rates[3].abs() < 1e-12);
        // Rows 1-3 at the fast NESS are the ternary rates.
        assert!((rates.rows(0, 3) - reduced_ternary_rhs(&c, &u).unwrap()).amax() < 1e-10);
        if k < 5 {
            let n = solve_fast_ness(&sf, &u, &FastNessOptions::default()).unwrap();
            assert!((n.w[0] - w).abs() < 1e-8);
        }
    }
}

#[test]
fn ternary_rates_conserve_and_vanish_at_equilibrium() {
    let c = cfg();
    assert!(reduced_ternary_rhs(&c, &c.slow_equilibrium()).unwrap().amax() < 1e-15);
    let null = crate::linalg::null_space(&Matrix::from_row_slice(1, 3, &[2.0, 1.0, -1.0]));
    let r = reduced_ternary_rhs(&c, &v(&[0.4, 2.0, 0.3])).unwrap();
    assert!((null.transpose() * r).amax() < 1e-14);
}

#[test]
fn bred_explicit_properties() {
    let c = cfg();
    let u = v(&[0.4, 2.0, 0.3]);
    assert!(bred_explicit(&c, &u, &slow_force(&c, &u)).unwrap().abs() < 1e-13);
    let (a, b, cc) = (0.4 / c.a_star, 2.0 / c.b_star, 0.3 / c.c_star);
    let zero = -2.0 * kappa_eff(&c, 0.4) * ((a * a * b).sqrt() - cc.sqrt()).powi(2);
    assert!((bred_explicit(&c, &u, &Vector::zeros(3)).unwrap() - zero).abs() < 1e-14);
    let xi = v(&[0.3, -0.2, 0.5]);
    let diff = bred_explicit(&c, &u, &xi).unwrap() - bred_explicit(&c, &u, &Vector::zeros(3)).unwrap();
    assert!((effective_cosh_r(&c, &u, &xi).unwrap() - diff).abs() < 1e-14);
    assert_eq!(effective_cosh_r(&c, &u, &Vector::zeros(3)).unwrap(), 0.0);
}

#[test]
fn bred_numeric_agrees_with_explicit() {
    let c = cfg();
    let sf = to_slow_fast(&c).unwrap();
    for u in [v(&[0.5, 1.0, 1.5]), v(&[2.0, 0.3, 0.7])] {
        for xi in [v(&[0.0, 0.0, 0.0]), v(&[0.4, -0.3, 0.2]), slow_force(&c, &u)] {
            let num = bred_numeric(&sf, &u, &xi, &BredOptions::default()).unwrap();
            let exact = bred_explicit(&c, &u, &xi).unwrap();
            assert!((num - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{num} vs {exact}");
        }
    }
}

#[test]
fn effective_gradient_reproduces_ternary_rates() {
    let c = cfg();
    let gs = effective_gs(&c).unwrap();
    let u = v(&[0.4, 2.0, 0.3]);
    let xi = slow_force(&c, &u);
    let r = |x: &Vector| effective_cosh_r(&c, &u, x).unwrap();
    assert!((fd_gradient(&r, &xi) - reduced_ternary_rhs(&c, &u).unwrap()).amax() < 1e-7);
    assert!((gradient_flow_rhs(&gs, &u).unwrap() - reduced_ternary_rhs(&c, &u).unwrap()).amax() < 1e-12);
}

#[test]
fn network_reproduces_four_species_rates() {
    let c = cfg();
    let net = four_species_network(&c).unwrap();
    let u = v(&[0.3, 1.7, 0.9, 0.5]);
    for eps in [1.0, 0.05] {
        let s = ConcentrationState::from_slow_fast(&u.rows(0, 3).into_owned(), u[3], eps);
        assert!((general_mass_action_rhs(&net, &u).unwrap() - rre_rhs(&c, eps, &s).unwrap()).amax() < 1e-13);
    }
    let xi = -net.entropy().gradient(&u).unwrap();
    assert!((net.velocity(&u, &xi).unwrap() - general_mass_action_rhs(&net, &u).unwrap()).amax() < 1e-13);
    assert!(general_mass_action_rhs(&net, &net.c_star.clone()).unwrap().amax() < 1e-15);
    let x = v(&[0.2, -0.1, 0.4, 0.3]);
    let w4 = net.weights(&u).unwrap();
    let expect = w4[0] * cstar(x[0] + x[1] - x[3]) + w4[1] * cstar(x[0] - x[2] + x[3]);
    assert!((general_cosh_dual(&net, &u, &x).unwrap() - expect).abs() < 1e-14);
}

#[test]
fn single_isomerization_by_hand() {
    let net = ReactionNetwork::new(
        vec![Reaction {
            alpha: vec![1, 0],
            beta: vec![0, 1],
            mu: 1.0,
        }],
        v(&[1.0, 1.0]),
    )
    .unwrap();
    // sqrt(ab) * 2 sinh(log(b/a)/2) = b - a.
    let r = general_mass_action_rhs(&net, &v(&[4.0, 1.0])).unwrap();
    assert!((r - v(&[-3.0, 3.0])).amax() < 1e-14);
    let xi = -net.entropy().gradient(&v(&[4.0, 1.0])).unwrap();
    assert!((net.velocity(&v(&[4.0, 1.0]), &xi).unwrap() - v(&[-3.0, 3.0])).amax() < 1e-14);
}

#[test]
fn fenchel_equality_for_networks() {
    let net = four_species_network(&cfg()).unwrap();
    let u = v(&[0.3, 1.7, 0.9, 0.5]);
    let xi = v(&[0.2, -0.1, 0.4, 0.3]);
    let vel = net.velocity(&u, &xi).unwrap();
    let gap = net.primal_value(&u, &vel).unwrap() + net.dual_value(&u, &xi).unwrap() - xi.dot(&vel);
    assert!(gap.abs() < 1e-12);
    let back = net.primal_force(&u, &vel).unwrap();
    assert!((net.velocity(&u, &back).unwrap() - &vel).amax() < 1e-12);
    assert_eq!(net.primal_value(&u, &v(&[1.0, 0.0, 0.0, 0.0])).unwrap(), f64::INFINITY);
    let tern = TernaryCoshDual { cfg: cfg() };
    let us = v(&[0.4, 2.0, 0.3]);
    let xs = v(&[0.3, -0.2, 0.5]);
    let vs = tern.velocity(&us, &xs).unwrap();
    let gap = tern.primal_value(&us, &vs).unwrap() + tern.dual_value(&us, &xs).unwrap() - xs.dot(&vs);
    assert!(gap.abs() < 1e-12);
}

#[test]
fn redundant_network_primal_minimizes_over_cycles() {
    // A <-> B listed twice: the flux splits by weight.
    let r = |mu| Reaction {
        alpha: vec![1, 0],
        beta: vec![0, 1],
        mu,
    };
    let net = ReactionNetwork::new(vec![r(1.0), r(2.0)], v(&[1.0, 1.0])).unwrap();
    let single = ReactionNetwork::new(vec![r(3.0)], v(&[1.0, 1.0])).unwrap();
    let u = v(&[2.0, 0.5]);
    let vel = v(&[0.7, -0.7]);
    let xi = v(&[0.3, -0.2]);
    assert!((net.dual_value(&u, &xi).unwrap() - single.dual_value(&u, &xi).unwrap()).abs() < 1e-13);
    assert!((net.primal_value(&u, &vel).unwrap() - single.primal_value(&u, &vel).unwrap()).abs() < 1e-9);
}

#[test]
fn ber_conditions_hold_for_explicit_bred() {
    let c = cfg();
    let plan = BerPlan {
        states: vec![v(&[0.5, 1.0, 1.5]), v(&[2.0, 0.3, 0.7]), v(&[1.0, 1.0, 1.0])],
        forces: vec![v(&[0.5, 0.0, 0.0]), v(&[-0.4, 0.3, 0.2]), v(&[0.0, 0.0, 1.0])],
    };
    let energy = Arc::new(BoltzmannEnergy::new(c.slow_equilibrium()).unwrap());
    let ber = extract_ber(move |u: &Vector, x: &Vector| bred_explicit(&c, u, x), energy, &plan, 1e-10).unwrap();
    assert!(ber.report.null_force <= 1e-12);
    let u = v(&[0.5, 1.0, 1.5]);
    let x = v(&[0.4, -0.3, 0.2]);
    assert!((ber.r_eff_dual(&u, &x).unwrap() - effective_cosh_r(&c, &u, &x).unwrap()).abs() < 1e-13);
}

#[test]
fn stiff_integration_stays_positive_and_dissipates() {
    let c = cfg();
    let sf = to_slow_fast(&c).unwrap();
    let eps = 0.01;
    let tr = integrate_slow_fast(&sf, eps, &v(&[2.0, 1.5, 0.2]), &v(&[0.1]), 2.0, &StepControl::default()).unwrap();
    let entropy = |k: usize| {
        BoltzmannEnergy::new(c.slow_equilibrium()).unwrap().value(&tr.slow(k)).unwrap()
            + eps * BoltzmannEnergy::new(v(&[c.w_star])).unwrap().value(&tr.fast(k)).unwrap()
    };
    for k in 0..tr.traj.len() {
        assert!(tr.traj.states[k].iter().all(|&x| x > 0.0));
        if k > 0 {
            assert!(entropy(k) <= entropy(k - 1) + 1e-12);
        }
    }
    let eff = integrate_gradient_flow(&effective_gs(&c).unwrap(), &v(&[2.0, 1.5, 0.2]), 2.0, &StepControl::default()).unwrap();
    let e: Vec<f64> = eff.states.iter().map(|u| effective_gs(&c).unwrap().energy.value(u).unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bred_null_saddle_sweep(a in 0.05f64..5.0, b in 0.05f64..5.0, c3 in 0.05f64..5.0) {
        let c = cfg();
        let u = v(&[a, b, c3]);
        prop_assert!(bred_explicit(&c, &u, &slow_force(&c, &u)).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn entropy_production_nonnegative(a in 0.05f64..5.0, b in 0.05f64..5.0, c3 in 0.05f64..5.0, w in 0.05f64..5.0) {
        let c = cfg();
        let eps = 0.1;
        let s = ConcentrationState::from_slow_fast(&v(&[a, b, c3]), w, eps);
        let dh = four_species_entropy(&c, eps).unwrap().gradient(&s.to_vector()).unwrap();
        prop_assert!(dh.dot(&rre_rhs(&c, eps, &s).unwrap()) <= 1e-12);
    }
}
