use super::cspp::ForceLevelSet;
use super::{join, ness_residual, split, PortGradientSystem};
use crate::error::{Error, Result};
use crate::linalg::{pinv, AffineConstraint, Matrix, Vector};
use crate::numerics::newton_system;
use crate::saddle::{constrained_conjugate, minimize_local, ConjugateRouteOptions, MinimizeOptions, Objective};

/// Which characterization of the steady state to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NessRoute {
    /// Newton on the NESS equations in `(u, y)`.
    EulerLagrange,
    /// Null-minimization of `R(u, P y) + R*(u, -DE(u)) - <eta, y>` on `{P* DE(u) = -eta}`.
    Minimization,
}

#[derive(Debug, Clone)]
pub struct NessOptions {
    pub u0: Option<Vector>,
    pub tol: f64,
    pub max_iter: usize,
    /// Largest optimal value still accepted as a null-minimizer.
    pub null_tol: f64,
}

impl Default for NessOptions {
    fn default() -> Self {
        Self {
            u0: None,
            tol: 1e-11,
            max_iter: 100,
            null_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NessResult {
    pub u_bar: Vector,
    pub y_bar: Vector,
    pub eta: Vector,
    /// `<eta, y>`.
    pub dissipated_power: f64,
    pub residual: f64,
}

pub(crate) fn default_start(pgs: &PortGradientSystem) -> Vector {
    let gs = &pgs.gs;
    gs.energy.equilibrium().unwrap_or_else(|| {
        if gs.space.positive {
            Vector::from_element(gs.dim(), 1.0)
        } else {
            Vector::zeros(gs.dim())
        }
    })
}

pub fn solve_ness(pgs: &PortGradientSystem, eta: &Vector, route: NessRoute, opts: &NessOptions) -> Result<NessResult> {
    if eta.len() != pgs.port_dim() {
        return Err(Error::Dimension {
            expected: pgs.port_dim(),
            got: eta.len(),
        });
    }
    let level = ForceLevelSet::new(pgs, eta);
    let start = opts.u0.clone().unwrap_or_else(|| default_start(pgs));
    let u0 = level.project(&start).map_err(|_| Error::Infeasible)?;
    let (u, y) = match route {
        NessRoute::EulerLagrange => euler_lagrange(pgs, eta, &u0, opts)?,
        NessRoute::Minimization => minimization(pgs, eta, &u0, opts)?,
    };
    let residual = ness_residual(pgs, &u, &y, eta)?.amax();
    Ok(NessResult {
        dissipated_power: eta.dot(&y),
        u_bar: u,
        y_bar: y,
        eta: eta.clone(),
        residual,
    })
}

fn euler_lagrange(pgs: &PortGradientSystem, eta: &Vector, u0: &Vector, opts: &NessOptions) -> Result<(Vector, Vector)> {
    let n = pgs.gs.dim();
    let p = pinv(&pgs.port_in);
    let de = -pgs.gs.energy.gradient(u0)?;
    let y0 = &p * pgs.gs.dissipation.velocity(u0, &de)?;
    let f = |z: &Vector| {
        let (u, y) = split(z, n);
        ness_residual(pgs, &u, &y, eta).ok()
    };
    let tol = opts.tol * (1.0 + eta.amax());
    let z = newton_system(&f, None, &join(u0, &y0), tol, opts.max_iter).map_err(|e| match e {
        Error::NewtonDivergence { residual } => Error::NoConvergence {
            iterations: opts.max_iter,
            residual,
        },
        other => other,
    })?;
    Ok(split(&z, n))
}

fn minimization(pgs: &PortGradientSystem, eta: &Vector, u0: &Vector, opts: &NessOptions) -> Result<(Vector, Vector)> {
    let gs = &pgs.gs;
    let r = &gs.dissipation;
    if !r.has_primal() {
        return Err(Error::MissingPrimal);
    }
    let n = gs.dim();
    let m = pgs.port_dim();
    // Linear constraints on z = (u, y): the force constraint when DE is affine and
    // `P y` inside the velocity range when the primal is +inf off a subspace.
    let mut rows: Vec<(Vector, f64)> = Vec::new();
    if gs.energy.is_quadratic() {
        let a = gs.energy.hessian(u0)?;
        let de0 = gs.energy.gradient(u0)?;
        let op = &pgs.port_out * &a;
        let tgt = &pgs.port_out * (&a * u0 - de0) - eta;
        for i in 0..m {
            rows.push((join(&op.row(i).transpose(), &Vector::zeros(m)), tgt[i]));
        }
    }
    if let Some(q) = r.velocity_range(u0) {
        let comp = (Matrix::identity(n, n) - &q * q.transpose()) * &pgs.port_in;
        for i in 0..n {
            if comp.row(i).amax() > 1e-12 {
                rows.push((join(&Vector::zeros(n), &comp.row(i).transpose()), 0.0));
            }
        }
    }
    let z0 = join(u0, &Vector::zeros(m));
    let chart = if rows.is_empty() {
        crate::linalg::AffineChart::identity(n + m)
    } else {
        let mut op = Matrix::zeros(rows.len(), n + m);
        let mut tgt = Vector::zeros(rows.len());
        for (i, (row, t)) in rows.iter().enumerate() {
            op.set_row(i, &row.transpose());
            tgt[i] = *t;
        }
        AffineConstraint::new(op, tgt)?.parametrize().map_err(|_| Error::Infeasible)?
    };
    let objective = |z: &Vector| -> f64 {
        let (u, y) = split(z, n);
        if gs.check(&u).is_err() {
            return f64::INFINITY;
        }
        let v = &pgs.port_in * &y;
        match (r.primal_value(&u, &v), gs.slope(&u)) {
            (Ok(a), Ok(b)) => a + b - eta.dot(&y),
            _ => f64::INFINITY,
        }
    };
    let nonlinear = !gs.energy.is_quadratic() && m > 0;
    let constraint = |z: &Vector| -> Option<Vector> {
        let (u, _) = split(z, n);
        gs.energy.gradient(&u).ok().map(|g| &pgs.port_out * g + eta)
    };
    let mut lambda = Vector::zeros(m);
    let mut rho = 10.0;
    let mut s = chart.coords(&z0);
    let mut prev = f64::INFINITY;
    let mopts = MinimizeOptions {
        tol: 1e-9,
        max_iter: 300,
        ..Default::default()
    };
    for _ in 0..40 {
        let lam = lambda.clone();
        let rho_k = rho;
        let aug = Objective::new(|s: &Vector| {
            let z = chart.embed(s);
            let base = objective(&z);
            if !nonlinear || !base.is_finite() {
                return base;
            }
            match constraint(&z) {
                Some(c) => base + lam.dot(&c) + 0.5 * rho_k * c.norm_squared(),
                None => f64::INFINITY,
            }
        });
        let res = minimize_local(&aug, None, &s, &mopts)?;
        s = res.x;
        if !nonlinear {
            if !res.converged {
                return Err(Error::NoConvergence {
                    iterations: res.iterations,
                    residual: res.grad_residual,
                });
            }
            break;
        }
        let c = constraint(&chart.embed(&s)).ok_or(Error::Infeasible)?;
        let cn = c.amax();
        if cn <= opts.tol * 10.0 && res.converged {
            break;
        }
        lambda += &c * rho;
        if cn > 0.25 * prev {
            rho *= 4.0;
        }
        prev = cn;
    }
    let z = chart.embed(&s);
    let value = objective(&z);
    if value > opts.null_tol * (1.0 + value.abs()) {
        return Err(Error::NotNullMinimizer { value });
    }
    Ok(split(&z, n))
}

/// Port relation `eta -> y`. For state-independent dissipation this is
/// `D R_Y*(eta)` with `R_Y*(eta) = inf_{P* xi = eta} R*(xi)`, independent of `E`;
/// otherwise the flux of the steady state.
pub fn port_relation(pgs: &PortGradientSystem, eta: &Vector, opts: &NessOptions) -> Result<Vector> {
    let gs = &pgs.gs;
    let r = &gs.dissipation;
    if !r.state_independent() {
        return Ok(solve_ness(pgs, eta, NessRoute::EulerLagrange, opts)?.y_bar);
    }
    let n = gs.dim();
    let u = Vector::zeros(n);
    let psi_star = Objective::new(|xi: &Vector| r.dual_value(&u, xi).unwrap_or(f64::INFINITY))
        .with_gradient(|xi: &Vector| r.velocity(&u, xi).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)))
        .with_hessian(|xi: &Vector| {
            r.dual_hessian(&u, xi)
                .unwrap_or_else(|_| Matrix::from_element(n, n, f64::NAN))
        });
    let adjoint = (&pgs.port_out - pgs.port_in.transpose()).amax() <= 1e-14;
    if r.has_primal() && r.velocity_range(&u).is_none() && adjoint {
        let psi = Objective::new(|v: &Vector| r.primal_value(&u, v).unwrap_or(f64::INFINITY))
            .with_gradient(|v: &Vector| r.primal_force(&u, v).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)));
        let cc = constrained_conjugate(&psi, &psi_star, &pgs.port_out, eta, &ConjugateRouteOptions::default())?;
        return Ok(cc.multiplier);
    }
    // Direct route: minimize R* on the force constraint and read off the flux.
    let c = AffineConstraint::new(pgs.port_out.clone(), eta.clone())?;
    let start = pinv(&pgs.port_out) * eta;
    let mopts = MinimizeOptions {
        tol: 1e-12,
        max_iter: 300,
        ..Default::default()
    };
    let m = crate::saddle::minimize_convex(&psi_star, Some(&c), &start, &mopts)?;
    let v = r.velocity(&u, &m.x)?;
    Ok(pinv(&pgs.port_in) * v)
}
