use super::ness::{default_start, solve_ness, NessOptions, NessRoute};
use super::{eval_b, join, PortGradientSystem};
use crate::error::{Error, Result};
use crate::linalg::{null_space, pinv, AffineConstraint, Matrix, Vector};
use crate::numerics::{fd_gradient, halton, newton_system};
use crate::saddle::{minimize_local, solve_saddle, MinimizeOptions, Objective, SaddleOptions, SaddleProblem, SaddleResult};

/// The state constraint `{u : P* DE(u) = -eta}`.
pub struct ForceLevelSet<'a> {
    pgs: &'a PortGradientSystem,
    eta: Vector,
}

impl<'a> ForceLevelSet<'a> {
    pub fn new(pgs: &'a PortGradientSystem, eta: &Vector) -> Self {
        Self { pgs, eta: eta.clone() }
    }

    pub fn residual(&self, u: &Vector) -> Result<Vector> {
        Ok(&self.pgs.port_out * self.pgs.gs.energy.gradient(u)? + &self.eta)
    }

    /// `P* D^2E(u)`, the constraint Jacobian.
    pub fn jacobian(&self, u: &Vector) -> Result<Matrix> {
        Ok(&self.pgs.port_out * self.pgs.gs.energy.hessian(u)?)
    }

    /// Gauss-Newton projection onto the level set.
    pub fn project(&self, u0: &Vector) -> Result<Vector> {
        let mut u = u0.clone();
        if self.pgs.port_dim() == 0 {
            return Ok(u);
        }
        let gs = &self.pgs.gs;
        for _ in 0..100 {
            let c = self.residual(&u)?;
            let cn = c.amax();
            if cn <= 1e-13 * (1.0 + self.eta.amax()) {
                return Ok(u);
            }
            let d = -(pinv(&self.jacobian(&u)?) * &c);
            let mut t = 1.0;
            loop {
                let un = &u + &d * t;
                if gs.check(&un).is_ok() {
                    if let Ok(cnew) = self.residual(&un) {
                        if cnew.amax() < (1.0 - 1e-4 * t) * cn {
                            u = un;
                            break;
                        }
                    }
                }
                t *= 0.5;
                if t < 1e-12 {
                    return Err(Error::Infeasible);
                }
            }
        }
        Err(Error::Infeasible)
    }

    /// Orthonormal tangent basis at `u`.
    pub fn tangent(&self, u: &Vector) -> Result<Matrix> {
        Ok(null_space(&self.jacobian(u)?))
    }
}

#[derive(Debug, Clone)]
pub struct CsppOptions {
    pub saddle: SaddleOptions,
    pub u0: Option<Vector>,
    pub tol: f64,
}

impl Default for CsppOptions {
    fn default() -> Self {
        Self {
            saddle: SaddleOptions::default(),
            u0: None,
            tol: 1e-9,
        }
    }
}

/// Constrained saddle of `B` over `{P* DE(u) = -eta} x {P* xi = eta}`.
/// Affine `DE` is eliminated exactly; otherwise KKT Newton from the NESS.
pub fn solve_cspp(pgs: &PortGradientSystem, eta: &Vector, opts: &CsppOptions) -> Result<SaddleResult> {
    let gs = &pgs.gs;
    let n = gs.dim();
    let cy = AffineConstraint::new(pgs.port_out.clone(), eta.clone())?;
    cy.parametrize().map_err(|_| Error::Infeasible)?;
    let level = ForceLevelSet::new(pgs, eta);
    let start = opts.u0.clone().unwrap_or_else(|| default_start(pgs));
    let u0 = level.project(&start)?;
    let b = |u: &Vector, xi: &Vector| eval_b(gs, u, xi).unwrap_or(f64::NAN);
    if gs.energy.is_quadratic() {
        let a = gs.energy.hessian(&u0)?;
        let de0 = gs.energy.gradient(&u0)?;
        let cx = AffineConstraint::new(&pgs.port_out * &a, &pgs.port_out * (&a * &u0 - de0) - eta)?;
        cx.parametrize().map_err(|_| Error::Infeasible)?;
        let r = &gs.dissipation;
        let state_free = r.state_independent();
        let p = SaddleProblem::new(n, n, b)
            .with_gradients(
                |u: &Vector, xi: &Vector| {
                    if state_free {
                        let v = r.velocity(u, &(-gs.energy.gradient(u).unwrap())).unwrap();
                        &a * v
                    } else {
                        fd_gradient(&|x: &Vector| eval_b(gs, x, xi).unwrap_or(f64::NAN), u)
                    }
                },
                |u: &Vector, xi: &Vector| r.velocity(u, xi).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)),
            )
            .with_constraints(Some(cx), Some(cy));
        let xi0 = -gs.energy.gradient(&u0)?;
        return solve_saddle(&p, &u0, &xi0, &opts.saddle).map_err(Error::from);
    }
    kkt_newton(pgs, eta, &u0, opts)
}

fn kkt_newton(pgs: &PortGradientSystem, eta: &Vector, u0: &Vector, opts: &CsppOptions) -> Result<SaddleResult> {
    let gs = &pgs.gs;
    let n = gs.dim();
    let m = pgs.port_dim();
    let ness = solve_ness(
        pgs,
        eta,
        NessRoute::EulerLagrange,
        &NessOptions {
            u0: Some(u0.clone()),
            ..Default::default()
        },
    )?;
    let level = ForceLevelSet::new(pgs, eta);
    let xi0 = -gs.energy.gradient(&ness.u_bar)?;
    // z = (u, xi, lambda, Lambda)
    let f = |z: &Vector| -> Option<Vector> {
        let u = z.rows(0, n).into_owned();
        let xi = z.rows(n, n).into_owned();
        let lam = z.rows(2 * n, m).into_owned();
        let big = z.rows(2 * n + m, m).into_owned();
        gs.check(&u).ok()?;
        let gu = fd_gradient(&|x: &Vector| eval_b(gs, x, &xi).unwrap_or(f64::NAN), &u);
        let jac = level.jacobian(&u).ok()?;
        let r1 = gu - jac.transpose() * &lam;
        let r2 = level.residual(&u).ok()?;
        let r3 = gs.dissipation.velocity(&u, &xi).ok()? - pgs.port_out.transpose() * &big;
        let r4 = &pgs.port_out * &xi - eta;
        let parts = [r1, r2, r3, r4];
        Some(Vector::from_iterator(2 * n + 2 * m, parts.iter().flat_map(|p| p.iter().copied())))
    };
    let z0 = join(&join(&ness.u_bar, &xi0), &join(&ness.y_bar, &ness.y_bar));
    let z = newton_system(&f, None, &z0, opts.tol, 50).unwrap_or(z0);
    let res = f(&z).map(|r| r.amax()).unwrap_or(f64::INFINITY);
    let u = z.rows(0, n).into_owned();
    let xi = z.rows(n, n).into_owned();
    let value = eval_b(gs, &u, &xi)?;
    let si = inner_inf(pgs, &u, eta, &xi)?;
    let is = manifold_sup(pgs, &level, &u, &xi)?;
    Ok(SaddleResult {
        x_star: u,
        y_star: xi,
        value,
        si_estimate: si,
        is_estimate: is,
        gap: is - si,
        grad_residual: res,
        iterations: 0,
        converged: res <= 1e-7,
    })
}

fn inner_inf(pgs: &PortGradientSystem, u: &Vector, eta: &Vector, xi0: &Vector) -> Result<f64> {
    let gs = &pgs.gs;
    let c = AffineConstraint::new(pgs.port_out.clone(), eta.clone())?;
    let obj = Objective::new(|xi: &Vector| eval_b(gs, u, xi).unwrap_or(f64::INFINITY))
        .with_gradient(|xi: &Vector| gs.dissipation.velocity(u, xi).unwrap());
    let m = minimize_local(&obj, Some(&c), xi0, &MinimizeOptions { tol: 1e-11, ..Default::default() })?;
    Ok(m.value)
}

/// Local sup of `B(., xi)` over the level set through `u`.
fn manifold_sup(pgs: &PortGradientSystem, level: &ForceLevelSet, u: &Vector, xi: &Vector) -> Result<f64> {
    let gs = &pgs.gs;
    let basis = level.tangent(u)?;
    let eval = |s: &Vector| -> f64 {
        match level.project(&(u + &basis * s)) {
            Ok(p) => -eval_b(gs, &p, xi).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let obj = Objective::new(eval);
    let m = minimize_local(&obj, None, &Vector::zeros(basis.ncols()), &MinimizeOptions { tol: 1e-9, ..Default::default() })?;
    Ok(-m.value)
}

#[derive(Debug, Clone)]
pub struct NullSaddleReport {
    pub is_null: bool,
    pub value: f64,
    /// `|xi + DE(u)|_inf`.
    pub xi_mismatch: f64,
    /// Largest violation of the two saddle inequalities among sampled competitors.
    pub max_violation: f64,
    pub feasibility: f64,
}

/// Null-saddle test against sampled feasible competitors.
pub fn is_null_saddle(pgs: &PortGradientSystem, u: &Vector, xi: &Vector, eta: &Vector, tol: f64) -> Result<NullSaddleReport> {
    let gs = &pgs.gs;
    let level = ForceLevelSet::new(pgs, eta);
    let value = eval_b(gs, u, xi)?;
    let feasibility = level.residual(u)?.amax().max((&pgs.port_out * xi - eta).amax());
    let xi_mismatch = (xi + gs.energy.gradient(u)?).amax();
    let nu = level.tangent(u)?;
    let nxi = null_space(&pgs.port_out);
    let mut worst: f64 = 0.0;
    for &radius in &[1e-3, 0.1, 1.0] {
        for k in 1..=24 {
            let h = halton(k, nu.ncols() + nxi.ncols());
            let su = Vector::from_iterator(nu.ncols(), (0..nu.ncols()).map(|i| radius * (2.0 * h[i] - 1.0)));
            let sx = Vector::from_iterator(nxi.ncols(), (0..nxi.ncols()).map(|i| radius * (2.0 * h[nu.ncols() + i] - 1.0)));
            if let Ok(uc) = level.project(&(u + &nu * su)) {
                if let Ok(bv) = eval_b(gs, &uc, xi) {
                    worst = worst.max(bv - value);
                }
            }
            let xc = xi + &nxi * sx;
            if let Ok(bv) = eval_b(gs, u, &xc) {
                worst = worst.max(value - bv);
            }
        }
    }
    Ok(NullSaddleReport {
        is_null: value.abs() <= tol && worst <= tol && feasibility <= tol.max(1e-9),
        value,
        xi_mismatch,
        max_violation: worst,
        feasibility,
    })
}

/// Least-squares residual of `D_xi R*(u, -DE(u))` against `range(P)`.
pub fn port_range_residual(pgs: &PortGradientSystem, u: &Vector) -> Result<f64> {
    let gs = &pgs.gs;
    let v = gs.dissipation.velocity(u, &gs.driving_force(u)?)?;
    let y = pinv(&pgs.port_in) * &v;
    Ok((&pgs.port_in * y - v).amax())
}

