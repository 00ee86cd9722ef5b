//! Damped Newton minimization on an affine chart, with a projected-gradient
//! path for box-bounded problems.

use crate::error::{Error, Result};
use crate::linalg::{AffineChart, AffineConstraint, Matrix, Vector};
use crate::numerics::{fd_gradient, fd_hessian_from_gradient};

const STALL_LIMIT: usize = 5;

type ScalarFn<'a> = Box<dyn Fn(&Vector) -> f64 + 'a>;
type VectorFn<'a> = Box<dyn Fn(&Vector) -> Vector + 'a>;
type MatrixFn<'a> = Box<dyn Fn(&Vector) -> Matrix + 'a>;

/// A smooth objective. Values outside the domain are reported as `+inf`.
pub struct Objective<'a> {
    value: ScalarFn<'a>,
    gradient: Option<VectorFn<'a>>,
    hessian: Option<MatrixFn<'a>>,
}

impl<'a> Objective<'a> {
    pub fn new(value: impl Fn(&Vector) -> f64 + 'a) -> Self {
        Self {
            value: Box::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Vector) -> Vector + 'a) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&Vector) -> Matrix + 'a) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let v = (self.value)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(&|y: &Vector| (self.value)(y), x),
        }
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        match &self.hessian {
            Some(h) => h(x),
            None => fd_hessian_from_gradient(&|y: &Vector| self.gradient(y), x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Tolerance on the gradient residual (sup norm) on the tangent space.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on the length of a single step.
    pub max_step: f64,
    /// Optional box `lo <= x <= hi` (only used without an affine constraint).
    pub bounds: Option<(Vector, Vector)>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            max_step: f64::INFINITY,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vector,
    pub value: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_box(x: &mut Vector, bounds: &Option<(Vector, Vector)>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    }
}

/// Local minimization; does not fail on non-convergence but reports it.
pub fn minimize_local(
    f: &Objective,
    constraint: Option<&AffineConstraint>,
    x0: &Vector,
    opts: &MinimizeOptions,
) -> Result<Minimum> {
    let n = x0.len();
    let chart = AffineChart::from_constraint(n, constraint)?;
    if opts.bounds.is_some() && constraint.is_none() {
        return projected_gradient(f, x0, opts);
    }
    let mut s = chart.coords(x0);
    let mut x = chart.embed(&s);
    let mut fx = f.value(&x);
    if !fx.is_finite() {
        return Err(Error::Domain("minimization start outside the domain".into()));
    }
    let basis = &chart.basis;
    let mut gs = basis.transpose() * f.gradient(&x);
    let mut gn = gs.amax();
    let mut it = 0;
    // Accepted steps that neither change the value nor shrink the gradient.
    let mut stalled = 0;
    while it < opts.max_iter {
        if gn <= opts.tol || chart.dim() == 0 || stalled >= STALL_LIMIT {
            break;
        }
        it += 1;
        let (f_prev, g_prev) = (fx, gn);
        let h = basis.transpose() * f.hessian(&x) * basis;
        let dir = newton_direction(&h, &gs);
        let mut d = dir;
        let dn = d.norm();
        if dn > opts.max_step {
            d *= opts.max_step / dn;
        }
        let slope = gs.dot(&d);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-14 {
            let s_try = &s + &d * t;
            let x_try = chart.embed(&s_try);
            let f_try = f.value(&x_try);
            if f_try.is_finite() && f_try <= fx + 1e-4 * t * slope {
                s = s_try;
                x = x_try;
                fx = f_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Near the optimum value decrease is swamped by roundoff; accept
            // a full step if it reduces the gradient residual.
            let s_try = &s + &d;
            let x_try = chart.embed(&s_try);
            let f_try = f.value(&x_try);
            let g_try = basis.transpose() * f.gradient(&x_try);
            if f_try.is_finite() && g_try.amax() < 0.9 * gn && f_try <= fx + 1e-12 * (1.0 + fx.abs()) {
                s = s_try;
                x = x_try;
                fx = f_try;
                gs = g_try;
                gn = gs.amax();
                continue;
            }
            break;
        }
        gs = basis.transpose() * f.gradient(&x);
        gn = gs.amax();
        if (f_prev - fx).abs() <= 1e-15 * (1.0 + fx.abs()) && gn > 0.9 * g_prev {
            stalled += 1;
        } else {
            stalled = 0;
        }
    }
    Ok(Minimum {
        converged: gn <= opts.tol,
        x,
        value: fx,
        grad_residual: gn,
        iterations: it,
    })
}

/// Newton direction with Levenberg regularization, falling back to steepest descent.
pub(crate) fn newton_direction(h: &Matrix, g: &Vector) -> Vector {
    let n = g.len();
    let scale = h.amax().max(1e-300);
    let mut lambda = 0.0;
    for _ in 0..40 {
        let reg = h + Matrix::identity(n, n) * lambda;
        if let Some(ch) = reg.clone().cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) && g.dot(&d) < 0.0 {
                return d;
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
    }
    -g.clone()
}

fn projected_gradient(f: &Objective, x0: &Vector, opts: &MinimizeOptions) -> Result<Minimum> {
    let mut x = x0.clone();
    clamp_box(&mut x, &opts.bounds);
    let mut fx = f.value(&x);
    if !fx.is_finite() {
        return Err(Error::Domain("minimization start outside the domain".into()));
    }
    let natural = |x: &Vector, g: &Vector| {
        let mut y = x - g;
        clamp_box(&mut y, &opts.bounds);
        (x - y).amax()
    };
    let mut g = f.gradient(&x);
    let mut res = natural(&x, &g);
    let mut step = 1.0;
    let mut it = 0;
    while it < opts.max_iter && res > opts.tol {
        it += 1;
        let mut accepted = false;
        while step > 1e-16 {
            let mut y = &x - &g * step;
            clamp_box(&mut y, &opts.bounds);
            let fy = f.value(&y);
            let dec = g.dot(&(&y - &x));
            if fy.is_finite() && fy <= fx + 1e-4 * dec {
                x = y;
                fx = fy;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e6);
        g = f.gradient(&x);
        res = natural(&x, &g);
    }
    Ok(Minimum {
        converged: res <= opts.tol,
        x,
        value: fx,
        grad_residual: res,
        iterations: it,
    })
}

/// Minimize a convex function on an affine set; errors if not converged.
pub fn minimize_convex(
    f: &Objective,
    constraint: Option<&AffineConstraint>,
    x0: &Vector,
    opts: &MinimizeOptions,
) -> Result<Minimum> {
    let m = minimize_local(f, constraint, x0, opts)?;
    if m.converged {
        Ok(m)
    } else {
        Err(Error::NoConvergence {
            iterations: m.iterations,
            residual: m.grad_residual,
        })
    }
}
