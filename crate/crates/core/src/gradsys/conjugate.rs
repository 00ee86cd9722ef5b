//! Numerical Legendre-Fenchel conjugates.

use super::DualDissipation;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::numerics::brent_minimize;
use crate::saddle::{minimize_local, MinimizeOptions, Objective};

#[derive(Debug, Clone)]
pub struct ConjugateOptions {
    /// Half-width of the search box.
    pub bound: f64,
    pub tol: f64,
    /// Values above this cap are reported as unbounded.
    pub value_cap: f64,
    pub max_cycles: usize,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self {
            bound: 50.0,
            tol: 1e-11,
            value_cap: 1e12,
            max_cycles: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConjugateResult {
    pub value: f64,
    pub argmax: Vector,
}

fn check_bounded(value: f64, x: &Vector, opts: &ConjugateOptions) -> Result<()> {
    if !value.is_finite() || value > opts.value_cap || x.amax() >= opts.bound * (1.0 - 1e-6) {
        return Err(Error::Unbounded { value });
    }
    Ok(())
}

/// `sup_x <arg, x> - f(x)` over the search box by cyclic coordinate Brent
/// searches. Suitable for convex, possibly non-smooth `f`.
pub fn legendre_conjugate(f: &dyn Fn(&Vector) -> f64, arg: &Vector, opts: &ConjugateOptions) -> Result<ConjugateResult> {
    let n = arg.len();
    let mut x = Vector::zeros(n);
    let phi = |x: &Vector| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v - arg.dot(x)
        }
    };
    if !phi(&x).is_finite() {
        return Err(Error::Domain("conjugate base point outside the domain".into()));
    }
    for _ in 0..opts.max_cycles {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let base = x.clone();
            let line = |t: f64| {
                let mut y = base.clone();
                y[i] = t;
                phi(&y)
            };
            let (t, _) = brent_minimize(&line, -opts.bound, opts.bound, 1e-12, 500);
            change = change.max((t - x[i]).abs());
            x[i] = t;
        }
        if change <= opts.tol * (1.0 + x.amax()) || n == 1 {
            break;
        }
    }
    let value = -phi(&x);
    check_bounded(value, &x, opts)?;
    Ok(ConjugateResult { value, argmax: x })
}

/// `R(u, v) = sup_xi <xi, v> - R*(u, xi)` by damped Newton on the dual potential.
pub fn primal_from_dual(r: &dyn DualDissipation, u: &Vector, v: &Vector, opts: &ConjugateOptions) -> Result<ConjugateResult> {
    let obj = Objective::new(|xi: &Vector| match r.dual_value(u, xi) {
        Ok(val) => val - xi.dot(v),
        Err(_) => f64::INFINITY,
    })
    .with_gradient(|xi: &Vector| match r.velocity(u, xi) {
        Ok(g) => g - v,
        Err(_) => Vector::from_element(xi.len(), f64::NAN),
    })
    .with_hessian(|xi: &Vector| {
        r.dual_hessian(u, xi)
            .unwrap_or_else(|_| crate::linalg::Matrix::from_element(xi.len(), xi.len(), f64::NAN))
    });
    let mopts = MinimizeOptions {
        tol: opts.tol * (1.0 + v.amax()),
        max_iter: 400,
        max_step: opts.bound,
        bounds: None,
    };
    let m = minimize_local(&obj, None, &Vector::zeros(v.len()), &mopts)?;
    let value = -m.value;
    check_bounded(value, &m.x, opts)?;
    Ok(ConjugateResult { value, argmax: m.x })
}
