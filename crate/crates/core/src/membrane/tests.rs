use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradsys::{gradient_flow_rhs, Scheme};
use crate::linalg::{Matrix, Vector};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn variable_profile() -> MembraneProfile {
    MembraneProfile::scalar(
        PiecewiseCoefficient {
            left: Coefficient::Constant(1.2),
            membrane: Coefficient::function(|x| 1.0 + 0.3 * x * x),
            right: Coefficient::Constant(0.8),
        },
        PiecewiseCoefficient::two_level(0.5, 1.5),
        PiecewiseCoefficient {
            left: Coefficient::Constant(1.0),
            membrane: Coefficient::function(|x| 0.7 + 0.2 * x),
            right: Coefficient::Constant(2.0),
        },
    )
    .unwrap()
}

/// Variable coefficients with `A_bar` continuous at the interfaces.
fn continuous_a_profile() -> MembraneProfile {
    let mut p = variable_profile();
    p.a_bar = MatrixCoefficient::scalar(PiecewiseCoefficient {
        left: Coefficient::function(|x| 1.3 + 0.1 * (x + 1.0)),
        membrane: Coefficient::function(|x| 1.0 + 0.3 * x * x),
        right: Coefficient::Constant(1.3),
    });
    p
}

#[test]
fn maps_hit_breakpoints_and_invert() {
    let eps = 0.1;
    assert!(close(psi_eps(1.0, eps).unwrap(), eps, 1e-15));
    assert!(close(psi_eps(-1.0, eps).unwrap(), -eps, 1e-15));
    assert!(close(phi_eps(eps, eps).unwrap(), 1.0, 1e-15));
    assert!(close(phi_eps(-eps, eps).unwrap(), -1.0, 1e-15));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let x: f64 = rng.random_range(-2.0..2.0);
        assert!((phi_eps(psi_eps(x, eps).unwrap(), eps).unwrap() - x).abs() < 1e-14);
        assert_eq!(psi_eps(x, 1.0).unwrap(), x);
    }
    assert!(matches!(psi_eps(2.5, eps), Err(Error::OutOfDomain(_))));
    assert!(matches!(phi_eps(1.2, eps), Err(Error::OutOfDomain(_))));
}

#[test]
fn grids_place_interfaces_on_edges() {
    let g = Grid1D::physical(16, 0.05).unwrap();
    assert_eq!(g.interfaces, [16, 32]);
    assert!((g.edges[16] + 0.05).abs() < 1e-15 && (g.edges[32] - 0.05).abs() < 1e-15);
    assert_eq!(g.region(20), Region::Membrane);
    assert!(Grid1D::from_edges(vec![-2.0, -1.5, -1.5, 2.0], Domain::Reference).is_err());
}

#[test]
fn profile_rejects_nonpositive_coefficients() {
    let bad = MembraneProfile::constant(1.0, 1.0, 0.0);
    assert!(matches!(bad, Err(Error::SingularCoefficient(_))));
    let neg_b = MembraneProfile::constant(1.0, -0.1, 1.0);
    assert!(matches!(neg_b, Err(Error::SingularCoefficient(_))));
}

#[test]
fn table_coefficient_interpolates() {
    let c = Coefficient::Table(vec![(-1.0, 1.0), (0.0, 3.0), (1.0, 2.0)]);
    assert_eq!(c.eval(-0.5), 2.0);
    assert_eq!(c.eval(0.5), 2.5);
    assert_eq!(c.eval(5.0), 2.0);
}

#[test]
fn hk_fixtures() {
    let p = MembraneProfile::new(
        MatrixCoefficient::diagonal(vec![PiecewiseCoefficient::constant(1.0); 2]),
        MatrixCoefficient::diagonal(vec![PiecewiseCoefficient::constant(3.0); 2]),
        PiecewiseCoefficient::constant(0.0),
    )
    .unwrap();
    let h = transmission_hk(&p).unwrap();
    assert!((h - Matrix::identity(2, 2) * 1.5).amax() < 1e-12);
    let split = MembraneProfile::scalar(
        PiecewiseCoefficient::constant(1.0),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient {
            left: Coefficient::Constant(1.0),
            membrane: Coefficient::function(|x| if x < 0.0 { 2.0 } else { 5.0 }),
            right: Coefficient::Constant(1.0),
        },
    )
    .unwrap();
    assert!(close(transmission_hk(&split).unwrap()[(0, 0)], 1.0 / (0.5 + 0.2), 1e-9));
    let lorentz = MembraneProfile::scalar(
        PiecewiseCoefficient::constant(1.0),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient::uniform(Coefficient::function(|x| 1.0 / (1.0 + x * x))),
    )
    .unwrap();
    assert!(close(transmission_hk(&lorentz).unwrap()[(0, 0)], 3.0 / 8.0, 1e-10));
}

#[test]
fn hk_is_independent_of_a() {
    let p1 = variable_profile();
    let mut p2 = p1.clone();
    p2.a_bar = MatrixCoefficient::scalar(PiecewiseCoefficient::constant(4.0));
    assert_eq!(transmission_hk(&p1).unwrap(), transmission_hk(&p2).unwrap());
    assert!((otto_keff(&p1).unwrap() - otto_keff(&p2).unwrap()).abs() > 1e-3);
}

#[test]
fn keff_fixtures() {
    assert!(close(otto_keff(&MembraneProfile::constant(2.0, 0.0, 3.0).unwrap()).unwrap(), 0.75, 1e-12));
    let same = |x: f64| 1.0 + 0.5 * x.sin().powi(2);
    let p = MembraneProfile::scalar(
        PiecewiseCoefficient::uniform(Coefficient::function(same)),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient::uniform(Coefficient::function(same)),
    )
    .unwrap();
    assert!(close(otto_keff(&p).unwrap(), 0.5, 1e-12));
    let q = MembraneProfile::scalar(
        PiecewiseCoefficient::uniform(Coefficient::function(|x| 1.0 + x * x)),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient::constant(1.0),
    )
    .unwrap();
    assert!(close(otto_keff(&q).unwrap(), 3.0 / 8.0, 1e-10));
}

#[test]
fn pde_needs_sixteen_cells() {
    let p = MembraneProfile::constant(1.0, 0.0, 1.0).unwrap();
    assert!(matches!(assemble_quadratic_pde(&p, 0.1, 8), Err(Error::GridMismatch(_))));
}

#[test]
fn flat_potential_is_stationary() {
    let p = variable_profile();
    let pde = assemble_quadratic_pde(&p, 0.1, 16).unwrap();
    let u = Vector::from_iterator(pde.cells(), pde.a.iter().map(|a| 2.0 / a[(0, 0)]));
    assert!(pde.rhs(&u).amax() < 1e-12);
}

#[test]
fn fv_matches_its_gradient_system() {
    let p = variable_profile();
    let pde = assemble_quadratic_pde(&p, 0.2, 16).unwrap();
    let gs = pde.gradient_system().unwrap();
    let u = Vector::from_fn(pde.cells(), |i, _| 1.0 + 0.3 * (i as f64 * 0.4).sin());
    let a = pde.rhs(&u);
    let b = gradient_flow_rhs(&gs, &u).unwrap();
    assert!((a - b).amax() < 1e-10);
    assert!(close(gs.energy.value(&u).unwrap(), pde.energy(&u), 1e-12));
}

#[test]
fn implicit_steps_conserve_mass() {
    let p = MembraneProfile::new(
        MatrixCoefficient::full(
            2,
            vec![
                PiecewiseCoefficient::constant(1.0),
                PiecewiseCoefficient::constant(0.2),
                PiecewiseCoefficient::constant(0.2),
                PiecewiseCoefficient::two_level(1.0, 2.0),
            ],
        )
        .unwrap(),
        MatrixCoefficient::diagonal(vec![PiecewiseCoefficient::two_level(1.0, 0.3), PiecewiseCoefficient::constant(0.7)]),
        PiecewiseCoefficient::constant(0.0),
    )
    .unwrap();
    let pde = assemble_quadratic_pde(&p, 0.05, 20).unwrap();
    let mut u = Vector::from_fn(pde.dim(), |i, _| 1.0 + (i as f64 * 0.37).cos());
    let m0 = pde.total_mass(&u);
    for _ in 0..20 {
        let next = pde.step(&u, 0.01, Scheme::Extrapolated).unwrap();
        let m = pde.total_mass(&next);
        let prev = pde.total_mass(&u);
        for k in 0..2 {
            assert!((m[k] - prev[k]).abs() <= 1e-13 * prev[k].abs());
        }
        assert!(pde.energy(&next) <= pde.energy(&u) + 1e-14);
        u = next;
    }
    assert!((pde.total_mass(&u) - m0).amax() < 1e-12);
}

#[test]
fn neumann_spectrum_of_the_heat_equation() {
    let p = MembraneProfile::constant(1.0, 0.0, 1.0).unwrap();
    let mut errs = Vec::new();
    for n in [32, 64] {
        let pde = assemble_quadratic_pde(&p, 1.0, n).unwrap();
        let gs = pde.gradient_system().unwrap();
        // Generator of u' = -K A u with A = diag(m), K = M^-1 G M^-1: similar to M^-1/2 G M^-1/2.
        let u = Vector::zeros(pde.cells());
        let k = gs.dissipation.dual_hessian(&u, &u).unwrap();
        let a = gs.energy.hessian(&u).unwrap();
        let mhalf = Matrix::from_diagonal(&a.diagonal().map(f64::sqrt));
        let sym = &mhalf * k * &mhalf;
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ev[0].abs() < 1e-10);
        let err: f64 = (1..4)
            .map(|k| {
                let exact = (k as f64 * std::f64::consts::PI / 4.0).powi(2);
                (ev[k] - exact).abs() / exact
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    assert!(errs[1] < errs[0] / 3.0 && errs[1] < 1e-3);
}

fn slow_initial(limit: &LinearFv) -> Vector {
    Vector::from_iterator(
        limit.cells(),
        limit.centers.iter().map(|&x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos() + 0.3 * x),
    )
}

#[test]
fn limit_flow_is_stationary_for_matched_potentials() {
    let p = MembraneProfile::scalar(
        PiecewiseCoefficient::two_level(1.0, 3.0),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient::two_level(1.0, 0.2),
    )
    .unwrap();
    let limit = quadratic_limit(&p, 16).unwrap();
    let u = Vector::from_element(limit.cells(), 0.7);
    assert!(limit.rhs(&u).amax() < 1e-13);
}

#[test]
fn limit_interface_flux_is_hk_times_jump() {
    let p = variable_profile();
    let n = 64;
    let limit = quadratic_limit(&p, n).unwrap();
    // Steady state has no flux at all, so check the interface law on a linear-in-cell state.
    let u = slow_initial(&limit);
    let j = limit.face_fluxes(&u);
    let mu = limit.potentials(&u);
    let jl = &j[n - 2];
    let jr = &j[n];
    let joint = j[n - 1][0];
    let hk = transmission_hk(&p).unwrap()[(0, 0)];
    // Traces by linear extrapolation of the potentials from each side.
    let h = 1.0 / n as f64;
    let _ = (jl, jr);
    let trace_l = mu[n - 1][0] + 0.5 * (mu[n - 1][0] - mu[n - 2][0]);
    let trace_r = mu[n][0] - 0.5 * (mu[n + 1][0] - mu[n][0]);
    assert!(close(joint, -hk * (trace_r - trace_l), 20.0 * h));
}

#[test]
fn large_membrane_conductance_gives_continuous_potential() {
    let p = MembraneProfile::scalar(
        PiecewiseCoefficient::two_level(1.0, 2.0),
        PiecewiseCoefficient::constant(0.0),
        PiecewiseCoefficient::two_level(1.0, 1e6),
    )
    .unwrap();
    let n = 32;
    let limit = quadratic_limit(&p, n).unwrap();
    let u0 = slow_initial(&limit);
    let traj = limit
        .integrate(&u0, 200.0, &FvOptions { steps: 400, scheme: Scheme::ImplicitEuler })
        .unwrap();
    let mu = limit.potentials(traj.last());
    assert!((mu[n][0] - mu[n - 1][0]).abs() < 1e-5);
    assert!((mu[0][0] - mu[2 * n - 1][0]).abs() < 1e-5);
}

#[test]
fn eps_sweep_decreases_monotonically() {
    let p = variable_profile();
    let n = 64;
    let limit = quadratic_limit(&p, n).unwrap();
    let u0 = slow_initial(&limit);
    let errs = quadratic_eps_sweep(&p, &[0.2, 0.1, 0.05, 0.025], n, &u0, 0.5, &FvOptions { steps: 200, scheme: Scheme::Extrapolated }).unwrap();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    assert!(errs[3] < 0.4 * errs[0]);
}

#[test]
fn well_prepared_membrane_is_a_fast_steady_state() {
    let p = variable_profile();
    let pde = assemble_quadratic_pde(&p, 0.1, 16).unwrap();
    let slow = Vector::from_fn(32, |i, _| 1.0 + 0.02 * i as f64);
    let u = pde.well_prepared(&slow).unwrap();
    let r = pde.rhs(&u);
    for i in 16..32 {
        assert!(r[i].abs() < 1e-10);
    }
    assert_eq!(pde.slow_part(&u).unwrap(), slow);
}

fn gaussian_grid(n: usize, s: f64) -> (Grid1D, Vec<f64>) {
    let g = Grid1D::reference(n).unwrap();
    let u = g
        .centers
        .iter()
        .map(|&x| (-x * x / (2.0 * s * s)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s))
        .collect();
    (g, u)
}

#[test]
fn otto_dual_r_basic_values() {
    let p = variable_profile();
    let g = Grid1D::reference(16).unwrap();
    let u = vec![1.0; g.cells()];
    assert_eq!(otto_dual_r(&u, &vec![0.7; g.cells()], &p, &g).unwrap(), 0.0);
    // u vanishing on the left region: the left faces contribute nothing.
    let mut u0 = vec![1.0; g.cells()];
    for v in u0.iter_mut().take(17) {
        *v = 0.0;
    }
    let xi: Vec<f64> = (0..g.cells()).map(|i| if i < 16 { i as f64 } else { 0.0 }).collect();
    assert_eq!(otto_dual_r(&u0, &xi, &p, &g).unwrap(), 0.0);
    let mut up = vec![0.0; g.cells()];
    up[40] = 1.0;
    assert!(otto_slope(&up, &p, &g).unwrap().is_finite());
}

#[test]
fn otto_slope_matches_gaussian_fisher_information() {
    let p = MembraneProfile::constant(1.0, 0.0, 1.0).unwrap();
    let s: f64 = 0.3;
    let exact = 1.0 / (2.0 * s * s);
    let mut errs = Vec::new();
    for n in [64, 128] {
        let (g, u) = gaussian_grid(n, s);
        errs.push((otto_slope(&u, &p, &g).unwrap() - exact).abs() / exact);
    }
    assert!(errs[1] < 1e-3 && errs[1] < errs[0] / 3.0, "{errs:?}");
}

#[test]
fn slope_equals_dual_r_at_the_driving_force() {
    let p = continuous_a_profile();
    let g = Grid1D::physical(16, 0.2).unwrap();
    let u: Vec<f64> = g.centers.iter().map(|y| 1.0 + 0.4 * y.sin()).collect();
    let xi: Vec<f64> = (0..g.cells())
        .map(|i| -((p.a_scalar(g.region(i), g.reference_center(i))) * u[i]).ln())
        .collect();
    let a = otto_dual_r(&u, &xi, &p, &g).unwrap();
    let b = otto_slope(&u, &p, &g).unwrap();
    // Different face averages; agree to grid order.
    assert!((a - b).abs() < 0.05 * b);
}

#[test]
fn saddle_value_fixtures() {
    let p = variable_profile();
    let (am, ap) = p.a_membrane_ends();
    let w_minus = 1.3;
    let w_plus = am * w_minus / ap;
    assert!(membrane_saddle_value(w_minus, w_plus, 0.4, 0.4, &p).unwrap().abs() < 1e-13);
    assert!(membrane_saddle_value(0.0, 1.0, 0.0, 0.0, &p).is_err());
}

#[test]
fn saddle_value_is_null_at_the_driving_force() {
    let p = variable_profile();
    let (am, ap) = p.a_membrane_ends();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let wm: f64 = rng.random_range(0.05..5.0);
        let wp: f64 = rng.random_range(0.05..5.0);
        let v = membrane_saddle_value(wm, wp, -(am * wm).ln(), -(ap * wp).ln(), &p).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }
}

#[test]
fn closed_form_saddle_matches_the_bvp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for p in [MembraneProfile::constant(1.5, 0.0, 0.8).unwrap(), variable_profile()] {
        for _ in 0..20 {
            let d = BoundaryData {
                w_minus: rng.random_range(0.1..3.0),
                w_plus: rng.random_range(0.1..3.0),
                zeta_minus: rng.random_range(-2.0..2.0),
                zeta_plus: rng.random_range(-2.0..2.0),
            };
            let oracle = membrane_saddle_oracle(&d, &p, false, 400).unwrap();
            let closed = membrane_saddle_value(d.w_minus, d.w_plus, d.zeta_minus, d.zeta_plus, &p).unwrap();
            assert!(close(closed, oracle, 1e-7), "{closed} vs {oracle}");
        }
    }
}

#[test]
fn oracle_trivial_data() {
    let p = MembraneProfile::constant(1.0, 0.8, 1.0).unwrap();
    let d = BoundaryData {
        w_minus: 1.0,
        w_plus: 1.0,
        zeta_minus: 0.0,
        zeta_plus: 0.0,
    };
    assert!(membrane_saddle_oracle(&d, &p, true, 64).unwrap().abs() < 1e-13);
    assert!(membrane_saddle_oracle(&d, &p, false, 64).unwrap().abs() < 1e-13);
}

#[test]
fn hpm_linear_without_sorption() {
    let p = MembraneProfile::constant(2.0, 0.0, 3.0).unwrap();
    let s = solve_hpm(&p, 64).unwrap();
    for (k, &x) in s.x.iter().enumerate() {
        assert!((s.h_plus[k] - 0.5 * (1.0 + x)).abs() < 1e-13);
        assert!((s.h_minus[k] - 0.5 * (1.0 - x)).abs() < 1e-13);
    }
    assert!(matches!(solve_hpm(&p, 32), Err(Error::GridMismatch(_))));
}

#[test]
fn hpm_bounds_monotonicity_and_wronskian() {
    let p = variable_profile();
    let s = solve_hpm(&p, 256).unwrap();
    for k in 0..s.x.len() {
        assert!((0.0..=1.0).contains(&s.h_plus[k]) && (0.0..=1.0).contains(&s.h_minus[k]));
        if k > 0 {
            assert!(s.h_plus[k] > s.h_plus[k - 1] && s.h_minus[k] < s.h_minus[k - 1]);
        }
    }
    assert!(s.dh_plus.0 > 0.0 && s.dh_minus.1 < 0.0);
    assert!(s.wronskian_drift() <= 1e-6);
}

#[test]
fn hpm_constant_coefficients_are_sinh() {
    let p = MembraneProfile::constant(1.0, 1.0, 1.0).unwrap();
    let s = solve_hpm(&p, 2048).unwrap();
    let sigma: f64 = 1.0;
    let mut err: f64 = 0.0;
    for (k, &x) in s.x.iter().enumerate() {
        err = err.max((s.h_plus[k] - (sigma * (1.0 + x)).sinh() / (2.0 * sigma).sinh()).abs());
        err = err.max((s.h_minus[k] - (sigma * (1.0 - x)).sinh() / (2.0 * sigma).sinh()).abs());
    }
    // Second order: 2048 cells gives about 1e-8.
    assert!(err < 2e-8, "{err}");
}

#[test]
fn sorption_coeffs_without_sorption_reduce_to_keff() {
    let mut p = variable_profile();
    p.b_bar = PiecewiseCoefficient::constant(0.0);
    let c = sorption_coeffs(&p, 128).unwrap();
    assert_eq!(c.m_minus, 0.0);
    assert_eq!(c.m_plus, 0.0);
    assert!(close(c.m_eff, otto_keff(&p).unwrap(), 1e-8));
}

#[test]
fn sorption_coeffs_match_closed_form() {
    for (a, b, k) in [(1.0, 1.0, 1.0), (2.0, 9.0 * 3.0 / 2f64.sqrt(), 3.0), (0.5, 2.0, 1.5)] {
        let bvp = sorption_coeffs(&MembraneProfile::constant(a, b, k).unwrap(), 512).unwrap();
        let cf = sorption_coeffs_const(a, b, k).unwrap();
        assert!(close(bvp.m_eff, cf.m_eff, 1e-8), "{} vs {}", bvp.m_eff, cf.m_eff);
        assert!(close(bvp.m_minus, cf.m_minus, 1e-8));
        assert!(close(bvp.m_plus, cf.m_plus, 1e-8));
        if let CoeffProvenance::Bvp { m_eff_mismatch, .. } = bvp.provenance {
            assert!(m_eff_mismatch < 1e-8);
        } else {
            panic!("expected BVP provenance");
        }
    }
}

#[test]
fn unit_constants_pin_the_corrected_meff() {
    // sigma = 1: M_eff = sigma / sinh(2 sigma), and sigma cosh(2 sigma) / sinh(2 sigma) is M_eff + M_+.
    let cf = sorption_coeffs_const(1.0, 1.0, 1.0).unwrap();
    let two = 2f64;
    assert!(close(cf.m_eff, 1.0 / two.sinh(), 1e-14));
    assert!(close(cf.m_plus, (two.cosh() - 1.0) / two.sinh(), 1e-14));
    assert!(close(cf.m_eff + cf.m_plus, two.cosh() / two.sinh(), 1e-14));
    let bvp = sorption_coeffs(&MembraneProfile::constant(1.0, 1.0, 1.0).unwrap(), 512).unwrap();
    assert!(close(bvp.m_eff, 1.0 / two.sinh(), 1e-8));
}

#[test]
fn small_sigma_series() {
    let cf = sorption_coeffs_const(2.0, 1e-12, 3.0).unwrap();
    assert!(close(cf.m_eff, 0.75, 1e-12));
    assert!(close(cf.m_plus, 1e-12 / 2f64.sqrt(), 1e-12));
    // Branch continuity at 1e-4 and against the BVP at sigma = 1e-6.
    let b_at = |sigma: f64| sigma * sigma * 3.0 / 2f64.sqrt();
    let (s_lo, s_hi) = (0.999_999e-4, 1.000_001e-4);
    let lo = sorption_coeffs_const(2.0, b_at(s_lo), 3.0).unwrap();
    let hi = sorption_coeffs_const(2.0, b_at(s_hi), 3.0).unwrap();
    assert!(close(lo.m_eff, hi.m_eff, 1e-12));
    let factor = |c: &TransmissionCoeffs, sigma: f64| c.m_plus / (b_at(sigma) / 2f64.sqrt());
    assert!((factor(&lo, s_lo) - factor(&hi, s_hi)).abs() < 1e-12);
    let b = b_at(1e-6);
    let bvp = sorption_coeffs(&MembraneProfile::constant(2.0, b, 3.0).unwrap(), 256).unwrap();
    let cf = sorption_coeffs_const(2.0, b, 3.0).unwrap();
    assert!(close(bvp.m_eff, cf.m_eff, 1e-9));
    assert!(close(bvp.m_plus, cf.m_plus, 1e-6));
}

#[test]
fn ry_star_fixtures() {
    let c = sorption_coeffs_const(1.0, 0.7, 1.3).unwrap();
    assert_eq!(ry_star_sorption(1.0, 2.0, 0.0, 0.0, &c, 1.0, 1.0).unwrap(), 0.0);
    assert!(ry_star_sorption(1.0, 2.0, 0.3, -0.2, &c, 1.0, 1.0).unwrap() > 0.0);
    let mut nob = c.clone();
    nob.m_minus = 0.0;
    nob.m_plus = 0.0;
    let v = ry_star_sorption(1.0, 2.0, 0.3, -0.2, &nob, 1.5, 0.5).unwrap();
    assert!(close(v, nob.m_eff * (1.5f64 * 1.0 * 0.5 * 2.0).sqrt() * crate::gradsys::cstar(-0.5), 1e-14));
    assert!(ry_star_sorption(-1.0, 2.0, 0.0, 0.0, &c, 1.0, 1.0).is_err());
}

/// `R*_Y(zeta) - R*_Y(-log(a w))`.
fn sorption_b_value(d: &BoundaryData, c: &TransmissionCoeffs, am: f64, ap: f64) -> f64 {
    ry_star_sorption(d.w_minus, d.w_plus, d.zeta_minus, d.zeta_plus, c, am, ap).unwrap()
        - ry_star_sorption(d.w_minus, d.w_plus, -(am * d.w_minus).ln(), -(ap * d.w_plus).ln(), c, am, ap).unwrap()
}

#[test]
fn sorption_b_value_matches_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let constant = MembraneProfile::constant(1.4, 0.9, 0.6).unwrap();
    for (p, c) in [
        (constant.clone(), sorption_coeffs_const(1.4, 0.9, 0.6).unwrap()),
        (variable_profile(), sorption_coeffs(&variable_profile(), 512).unwrap()),
    ] {
        let (am, ap) = p.a_membrane_ends();
        for _ in 0..10 {
            let d = BoundaryData {
                w_minus: rng.random_range(0.2..3.0),
                w_plus: rng.random_range(0.2..3.0),
                zeta_minus: rng.random_range(-1.5..1.5),
                zeta_plus: rng.random_range(-1.5..1.5),
            };
            let oracle = membrane_saddle_oracle(&d, &p, true, 400).unwrap();
            let b = sorption_b_value(&d, &c, am, ap);
            assert!(close(b, oracle, 1e-6), "{b} vs {oracle}");
        }
    }
}

#[test]
fn effective_quadratic_flux_is_linear_in_the_jump() {
    let p = variable_profile();
    let c = transmission_coeffs(&p, 128).unwrap();
    let eff = effective_membrane_gs(&p, &c, Structure::Quadratic, 16).unwrap();
    let (l, r) = eff.interface;
    let mut u = Vector::from_element(eff.grid.len(), 0.0);
    for j in 0..eff.grid.len() {
        u[j] = 1.0 / eff.grid.a[j][(0, 0)];
    }
    u[r] *= 1.3;
    let v = gradient_flow_rhs(&eff.gs, &u).unwrap();
    // Interface node l only exchanges with r and its left neighbour (at equal potential).
    let flux = v[l] * eff.grid.mass[l];
    let mu_jump = eff.grid.a[r][(0, 0)] * u[r] - eff.grid.a[l][(0, 0)] * u[l];
    assert!(close(flux, c.h_k[(0, 0)] * mu_jump, 1e-12));
    let j = eff.interface_flux(&u, &p, &c, Structure::Quadratic).unwrap();
    assert!(close(j[0], -flux, 1e-12));
}

#[test]
fn effective_otto_linearizes_to_keff() {
    let p = variable_profile();
    let c = transmission_coeffs(&p, 128).unwrap();
    let eff = effective_membrane_gs(&p, &c, Structure::Otto, 16).unwrap();
    let (l, r) = eff.interface;
    let mut u = Vector::from_fn(eff.grid.len(), |j, _| 1.0 / eff.grid.a[j][(0, 0)]);
    let delta: f64 = 1e-5;
    u[r] *= delta.exp();
    let v = gradient_flow_rhs(&eff.gs, &u).unwrap();
    let flux = v[l] * eff.grid.mass[l];
    let (am, ap) = p.a_membrane_ends();
    let lin = c.k_eff * (am * u[l] * ap * u[r]).sqrt() * delta;
    assert!(close(flux, lin, 1e-5 * lin.abs()));
}

#[test]
fn effective_sorption_without_b_is_otto() {
    let mut p = variable_profile();
    p.b_bar = PiecewiseCoefficient::constant(0.0);
    let c = transmission_coeffs(&p, 128).unwrap();
    let otto = effective_membrane_gs(&p, &c, Structure::Otto, 16).unwrap();
    let sorp = effective_membrane_gs(&p, &c, Structure::Sorption, 16).unwrap();
    let u = Vector::from_fn(otto.grid.len(), |j, _| 0.5 + 0.1 * j as f64);
    let a = gradient_flow_rhs(&otto.gs, &u).unwrap();
    let b = gradient_flow_rhs(&sorp.gs, &u).unwrap();
    // M_eff comes from the BVP, K_eff from quadrature.
    assert!((&a - b).amax() < 1e-9 * (1.0 + a.amax()));
}

#[test]
fn node_dual_derivatives_match_finite_differences() {
    let p = variable_profile();
    let c = transmission_coeffs(&p, 128).unwrap();
    let eff = effective_membrane_gs(&p, &c, Structure::Sorption, 8).unwrap();
    let r = &eff.gs.dissipation;
    let n = eff.grid.len();
    let u = Vector::from_fn(n, |j, _| 0.6 + 0.05 * j as f64);
    let xi = Vector::from_fn(n, |j, _| 0.02 * ((j as f64) * 0.9).sin());
    let g = crate::numerics::fd_gradient(&|x: &Vector| r.dual_value(&u, x).unwrap(), &xi);
    let v = r.velocity(&u, &xi).unwrap();
    assert!((g - &v).amax() < 1e-6 * (1.0 + v.amax()));
    let h = r.dual_hessian(&u, &xi).unwrap();
    let hfd = crate::numerics::fd_jacobian(&|x: &Vector| r.velocity(&u, x).unwrap(), &xi, n);
    assert!((h - hfd).amax() < 1e-5 * (1.0 + v.amax()));
    assert!(r.strictly_convex());
    let otto = effective_membrane_gs(&p, &c, Structure::Otto, 8).unwrap();
    let q = otto.gs.dissipation.velocity_range(&u).expect("mass conserving");
    assert_eq!(q.ncols(), n - 1);
}

#[test]
fn otto_slow_fast_bred_is_null_and_matches_closed_form() {
    let p = continuous_a_profile();
    let sys = otto_slow_fast(&p, 8, 64, false).unwrap();
    let n = sys.slow_grid.len();
    let u = Vector::from_fn(n, |j, _| 0.8 + 0.07 * j as f64);
    let xi = -sys.sf.energy.gradient(&u).unwrap();
    let opts = crate::bfunction::BredOptions::default();
    let b0 = crate::slowfast::bred_numeric(&sys.sf, &u, &xi, &opts).unwrap();
    assert!(b0.abs() < 1e-6, "{b0}");
    // Off the driving force the discrete B_red approaches the saddle value.
    let (l, r) = sys.slow_interface;
    let mut xi2 = xi.clone();
    xi2[l] += 0.3 * sys.slow_grid.mass[l];
    xi2[r] -= 0.2 * sys.slow_grid.mass[r];
    let b = crate::slowfast::bred_numeric(&sys.sf, &u, &xi2, &opts).unwrap();
    let zl = xi2[l] / sys.slow_grid.mass[l];
    let zr = xi2[r] / sys.slow_grid.mass[r];
    let closed = membrane_saddle_value(u[l], u[r], zl, zr, &p).unwrap();
    assert!(close(b, closed, 1e-3), "{b} vs {closed}");
}

#[test]
fn rd_rhs_vanishes_at_equilibrium_and_conserves_mass() {
    let p = variable_profile();
    let g = Grid1D::physical(16, 0.1).unwrap();
    let coeffs = RdCoefficients::sorption(&p, &g).unwrap();
    let net = sorption_network();
    let r = rd_pde_rhs(&coeffs.c_star, &coeffs, &net, &g).unwrap();
    assert!(r.iter().all(|v| v.amax() < 1e-12));
    let mut no_reaction = coeffs.clone();
    no_reaction.reaction_scale = vec![0.0; g.cells()];
    let c: Vec<Vector> = (0..g.cells()).map(|i| Vector::from_element(1, 1.0 + 0.1 * i as f64)).collect();
    let r = rd_pde_rhs(&c, &no_reaction, &net, &g).unwrap();
    let total: f64 = (0..g.cells()).map(|i| g.width(i) * r[i][0]).sum();
    assert!(total.abs() < 1e-12);
}

#[test]
fn rd_sorption_transforms_with_the_coordinate_map() {
    let p = variable_profile();
    let eps = 0.15;
    let gy = Grid1D::physical(16, eps).unwrap();
    let gx = Grid1D::reference(16).unwrap();
    let net = sorption_network();
    let cy = RdCoefficients::sorption(&p, &gy).unwrap();
    let cx = RdCoefficients::sorption(&p, &gx).unwrap();
    let u: Vec<Vector> = gx.centers.iter().map(|x| Vector::from_element(1, 1.0 + 0.3 * x.cos())).collect();
    let ry = rd_pde_rhs(&u, &cy, &net, &gy).unwrap();
    let rx = rd_pde_rhs(&u, &cx, &net, &gx).unwrap();
    for i in 0..gx.cells() {
        let jac = psi_eps_prime(gx.region(i), eps);
        assert!((ry[i][0] - rx[i][0] / jac).abs() < 1e-10 * (1.0 + ry[i][0].abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn saddle_null_holds_for_random_constants(a in 0.2f64..4.0, k in 0.2f64..4.0, wm in 0.05f64..5.0, wp in 0.05f64..5.0) {
        let p = MembraneProfile::constant(a, 0.0, k).unwrap();
        let v = membrane_saddle_value(wm, wp, -(a * wm).ln(), -(a * wp).ln(), &p).unwrap();
        prop_assert!(v.abs() < 1e-9);
    }

    #[test]
    fn ry_star_is_nonnegative(zm in -3.0f64..3.0, zp in -3.0f64..3.0, b in 0.0f64..3.0) {
        let c = sorption_coeffs_const(1.0, b, 1.0).unwrap();
        prop_assert!(ry_star_sorption(0.5, 1.5, zm, zp, &c, 1.0, 1.0).unwrap() >= 0.0);
    }
}

#[test]
fn steady_membrane_flux_is_hk_times_jump() {
    let p = MembraneProfile::new(
        MatrixCoefficient::diagonal(vec![PiecewiseCoefficient::constant(1.0); 2]),
        MatrixCoefficient::full(
            2,
            vec![
                PiecewiseCoefficient::uniform(Coefficient::function(|x| 1.0 / (1.0 + x * x))),
                PiecewiseCoefficient::constant(0.1),
                PiecewiseCoefficient::constant(0.1),
                PiecewiseCoefficient::two_level(1.0, 0.4),
            ],
        )
        .unwrap(),
        PiecewiseCoefficient::constant(0.0),
    )
    .unwrap();
    let (lo, hi) = (Vector::from_row_slice(&[0.3, -0.2]), Vector::from_row_slice(&[1.1, 0.5]));
    let j = membrane_steady_flux(&p, 32, &lo, &hi).unwrap();
    let expect = -(transmission_hk(&p).unwrap() * (&hi - &lo));
    assert!((j - expect).amax() < 1e-9);
}

#[test]
fn entropic_primal_is_the_legendre_dual() {
    let p = continuous_a_profile();
    let c = transmission_coeffs(&p, 128).unwrap();
    for structure in [Structure::Otto, Structure::Sorption] {
        let eff = effective_membrane_gs(&p, &c, structure, 6).unwrap();
        let r = &eff.gs.dissipation;
        let n = eff.grid.len();
        let u = Vector::from_fn(n, |j, _| 0.6 + 0.05 * j as f64);
        let xi = Vector::from_fn(n, |j, _| 0.3 * ((j as f64) * 0.9).sin());
        let v = r.velocity(&u, &xi).unwrap();
        assert!(crate::gradsys::check_fenchel_triple(r.as_ref(), &u, &v, &xi, 1e-9).unwrap());
    }
    let eff = effective_membrane_gs(&p, &c, Structure::Otto, 6).unwrap();
    let n = eff.grid.len();
    let u = Vector::from_element(n, 1.0);
    assert_eq!(eff.gs.dissipation.primal_value(&u, &Vector::from_element(n, 1.0)).unwrap(), f64::INFINITY);
}
