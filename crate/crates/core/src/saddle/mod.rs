//! Concave-convex saddle problems: `sup_x inf_y L(x, y)` with optional affine
//! constraints and boxes, the duality-gap diagnostic, and constrained conjugates.

mod minimize;

pub use minimize::{minimize_convex, minimize_local, MinimizeOptions, Minimum, Objective};

use crate::error::{Error, Result};
use crate::linalg::{pinv, AffineChart, AffineConstraint, Matrix, Vector};
use crate::numerics::{fd_gradient, fd_jacobian, halton};

type SaddleFn<'a> = Box<dyn Fn(&Vector, &Vector) -> f64 + 'a>;
type SaddleGrad<'a> = Box<dyn Fn(&Vector, &Vector) -> Vector + 'a>;

/// `L(x, y)` maximized in `x` and minimized in `y`.
pub struct SaddleProblem<'a> {
    pub dim_x: usize,
    pub dim_y: usize,
    objective: SaddleFn<'a>,
    grad_x: Option<SaddleGrad<'a>>,
    grad_y: Option<SaddleGrad<'a>>,
    pub constraint_x: Option<AffineConstraint>,
    pub constraint_y: Option<AffineConstraint>,
    pub bounds_x: Option<(Vector, Vector)>,
    pub bounds_y: Option<(Vector, Vector)>,
}

impl<'a> SaddleProblem<'a> {
    pub fn new(dim_x: usize, dim_y: usize, objective: impl Fn(&Vector, &Vector) -> f64 + 'a) -> Self {
        Self {
            dim_x,
            dim_y,
            objective: Box::new(objective),
            grad_x: None,
            grad_y: None,
            constraint_x: None,
            constraint_y: None,
            bounds_x: None,
            bounds_y: None,
        }
    }

    pub fn with_gradients(
        mut self,
        gx: impl Fn(&Vector, &Vector) -> Vector + 'a,
        gy: impl Fn(&Vector, &Vector) -> Vector + 'a,
    ) -> Self {
        self.grad_x = Some(Box::new(gx));
        self.grad_y = Some(Box::new(gy));
        self
    }

    pub fn with_constraints(mut self, cx: Option<AffineConstraint>, cy: Option<AffineConstraint>) -> Self {
        self.constraint_x = cx;
        self.constraint_y = cy;
        self
    }

    pub fn with_bounds(mut self, bx: Option<(Vector, Vector)>, by: Option<(Vector, Vector)>) -> Self {
        self.bounds_x = bx;
        self.bounds_y = by;
        self
    }

    pub fn value(&self, x: &Vector, y: &Vector) -> f64 {
        (self.objective)(x, y)
    }

    pub fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        match &self.grad_x {
            Some(g) => g(x, y),
            None => fd_gradient(&|xx: &Vector| (self.objective)(xx, y), x),
        }
    }

    pub fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        match &self.grad_y {
            Some(g) => g(x, y),
            None => fd_gradient(&|yy: &Vector| (self.objective)(x, yy), y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Residual below which Newton steps on the joint system are attempted.
    pub newton_switch: f64,
    /// Number of starts; the first is the supplied point.
    pub starts: usize,
    /// Half-width of the start box when no bounds are given.
    pub start_radius: f64,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2000,
            newton_switch: 1e-2,
            starts: 1,
            start_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleResult {
    pub x_star: Vector,
    pub y_star: Vector,
    pub value: f64,
    pub si_estimate: f64,
    pub is_estimate: f64,
    pub gap: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Failure of the saddle solver, carrying the best iterate found.
#[derive(Debug, Clone)]
pub struct SaddleFailure {
    pub best: Box<SaddleResult>,
    pub error: Error,
}

impl std::fmt::Display for SaddleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (gap {:.3e})", self.error, self.best.gap)
    }
}

impl std::error::Error for SaddleFailure {}

impl From<SaddleFailure> for Error {
    fn from(f: SaddleFailure) -> Self {
        f.error
    }
}

struct Charts {
    cx: AffineChart,
    cy: AffineChart,
}

fn project(z: &mut Vector, bounds: &Option<(Vector, Vector)>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..z.len() {
            z[i] = z[i].clamp(lo[i], hi[i]);
        }
    }
}

impl SaddleProblem<'_> {
    fn charts(&self) -> Result<Charts> {
        if self.constraint_x.is_some() && self.bounds_x.is_some() {
            return Err(Error::Invalid("box bounds and affine constraint on the same variable".into()));
        }
        if self.constraint_y.is_some() && self.bounds_y.is_some() {
            return Err(Error::Invalid("box bounds and affine constraint on the same variable".into()));
        }
        Ok(Charts {
            cx: AffineChart::from_constraint(self.dim_x, self.constraint_x.as_ref())?,
            cy: AffineChart::from_constraint(self.dim_y, self.constraint_y.as_ref())?,
        })
    }
}

/// Joint iteration state in chart coordinates `z = (s, t)`.
struct Joint<'p, 'a> {
    p: &'p SaddleProblem<'a>,
    ch: Charts,
    ns: usize,
}

impl Joint<'_, '_> {
    fn split(&self, z: &Vector) -> (Vector, Vector) {
        let s = z.rows(0, self.ns).into_owned();
        let t = z.rows(self.ns, z.len() - self.ns).into_owned();
        (self.ch.cx.embed(&s), self.ch.cy.embed(&t))
    }

    fn join(&self, x: &Vector, y: &Vector) -> Vector {
        let s = self.ch.cx.coords(x);
        let t = self.ch.cy.coords(y);
        let mut z = Vector::zeros(s.len() + t.len());
        z.rows_mut(0, s.len()).copy_from(&s);
        z.rows_mut(s.len(), t.len()).copy_from(&t);
        z
    }

    /// Gradient of the objective in chart coordinates.
    fn gradient(&self, z: &Vector) -> Vector {
        let (x, y) = self.split(z);
        let gs = self.ch.cx.basis.transpose() * self.p.grad_x(&x, &y);
        let gt = self.ch.cy.basis.transpose() * self.p.grad_y(&x, &y);
        let mut g = Vector::zeros(z.len());
        g.rows_mut(0, self.ns).copy_from(&gs);
        g.rows_mut(self.ns, z.len() - self.ns).copy_from(&gt);
        g
    }

    /// Descent field: ascent in x, descent in y.
    fn field(&self, z: &Vector) -> Vector {
        let mut f = self.gradient(z);
        for i in 0..self.ns {
            f[i] = -f[i];
        }
        f
    }

    fn project(&self, z: &mut Vector) {
        let (mut x, mut y) = self.split(z);
        if self.p.bounds_x.is_some() || self.p.bounds_y.is_some() {
            project(&mut x, &self.p.bounds_x);
            project(&mut y, &self.p.bounds_y);
            *z = self.join(&x, &y);
        }
    }

    fn residual(&self, z: &Vector) -> f64 {
        let mut w = z - self.field(z);
        self.project(&mut w);
        (z - w).amax()
    }

    fn has_bounds(&self) -> bool {
        self.p.bounds_x.is_some() || self.p.bounds_y.is_some()
    }

    fn newton_step(&self, z: &Vector) -> Vector {
        let g = self.gradient(z);
        let jac = fd_jacobian(&|zz: &Vector| self.gradient(zz), z, z.len());
        let jac = (&jac + jac.transpose()) * 0.5;
        -(pinv(&jac) * g)
    }
}

fn run_single(p: &SaddleProblem, x0: &Vector, y0: &Vector, opts: &SaddleOptions) -> Result<SaddleResult> {
    let ch = p.charts()?;
    let ns = ch.cx.dim();
    let jt = Joint { p, ch, ns };
    let mut z = jt.join(x0, y0);
    jt.project(&mut z);
    let mut res = jt.residual(&z);
    let mut tau: f64 = 1.0;
    let mut it = 0;
    while it < opts.max_iter {
        if res <= opts.tol {
            break;
        }
        it += 1;
        if res <= opts.newton_switch {
            let d = jt.newton_step(&z);
            let mut lam = 1.0;
            let mut took = false;
            while lam > 1e-3 {
                let mut zn = &z + &d * lam;
                jt.project(&mut zn);
                let rn = jt.residual(&zn);
                if rn.is_finite() && rn < (1.0 - 0.25 * lam) * res {
                    z = zn;
                    res = rn;
                    took = true;
                    break;
                }
                lam *= 0.5;
            }
            if took {
                continue;
            }
        }
        // Extragradient step with backtracking on the local Lipschitz estimate.
        let f0 = jt.field(&z);
        loop {
            let mut zh = &z - &f0 * tau;
            jt.project(&mut zh);
            let fh = jt.field(&zh);
            let dz = (&zh - &z).norm();
            let df = (&fh - &f0).norm();
            if !fh.iter().all(|v| v.is_finite()) || (tau * df > 0.9 * dz && dz > 0.0) {
                tau *= 0.5;
                if tau < 1e-14 {
                    break;
                }
                continue;
            }
            let mut zn = &z - &fh * tau;
            jt.project(&mut zn);
            z = zn;
            tau = (tau * 1.5).min(1e4);
            break;
        }
        res = jt.residual(&z);
        if !res.is_finite() {
            break;
        }
    }
    let (x, y) = jt.split(&z);
    let value = p.value(&x, &y);
    let (si, is) = one_sided_estimates(p, &x, &y, None)?;
    // A small residual far from any stationary point (per the Newton
    // correction) signals a run-away iterate rather than a saddle.
    let newton_len = if !res.is_finite() {
        f64::INFINITY
    } else if jt.has_bounds() {
        // Active bounds make the unconstrained Newton correction meaningless.
        0.0
    } else {
        jt.newton_step(&z).norm()
    };
    let converged = res <= opts.tol && newton_len <= 1e-6 * (1.0 + z.norm());
    Ok(SaddleResult {
        x_star: x,
        y_star: y,
        value,
        si_estimate: si,
        is_estimate: is,
        gap: is - si,
        grad_residual: res,
        iterations: it,
        converged,
    })
}

/// Sampling configuration for the one-sided inner solves.
#[derive(Debug, Clone)]
pub struct GapSampling {
    pub radius: f64,
    pub samples: usize,
}

impl Default for GapSampling {
    fn default() -> Self {
        Self { radius: 20.0, samples: 64 }
    }
}

fn inner_extremum(
    p: &SaddleProblem,
    fixed: &Vector,
    start: &Vector,
    over_x: bool,
    sampling: Option<&GapSampling>,
) -> Result<f64> {
    let (constraint, bounds) = if over_x {
        (p.constraint_x.as_ref(), p.bounds_x.clone())
    } else {
        (p.constraint_y.as_ref(), p.bounds_y.clone())
    };
    let sign = if over_x { -1.0 } else { 1.0 };
    let eval = |v: &Vector| {
        if over_x {
            sign * p.value(v, fixed)
        } else {
            sign * p.value(fixed, v)
        }
    };
    let chart = AffineChart::from_constraint(start.len(), constraint)?;
    let mut best_pt = start.clone();
    let mut best = eval(start);
    let mut local_bounds = bounds.clone();
    if let Some(sm) = sampling {
        let k = chart.dim();
        let s0 = chart.coords(start);
        if local_bounds.is_none() && constraint.is_none() {
            let lo = start.map(|v| v - sm.radius);
            let hi = start.map(|v| v + sm.radius);
            local_bounds = Some((lo, hi));
        }
        for i in 1..=sm.samples {
            let h = halton(i, k);
            let s = Vector::from_iterator(k, h.iter().enumerate().map(|(j, &u)| s0[j] + sm.radius * (2.0 * u - 1.0)));
            let mut pt = chart.embed(&s);
            project(&mut pt, &local_bounds);
            let v = eval(&pt);
            if v < best {
                best = v;
                best_pt = pt;
            }
        }
    }
    let obj = Objective::new(|v: &Vector| {
        let r = eval(v);
        if r.is_nan() {
            f64::INFINITY
        } else {
            r
        }
    })
    .with_gradient(|v: &Vector| {
        if over_x {
            p.grad_x(v, fixed) * sign
        } else {
            p.grad_y(fixed, v) * sign
        }
    });
    let mopts = MinimizeOptions {
        tol: 1e-10,
        max_iter: 200,
        bounds: local_bounds,
        ..Default::default()
    };
    let m = minimize_local(&obj, constraint, &best_pt, &mopts)?;
    Ok(sign * m.value.min(best))
}

/// `(inf_y L(x*, y), sup_x L(x, y*))` from inner solves anchored at the candidate.
fn one_sided_estimates(p: &SaddleProblem, x: &Vector, y: &Vector, sampling: Option<&GapSampling>) -> Result<(f64, f64)> {
    let si = inner_extremum(p, x, y, false, sampling)?;
    let is = inner_extremum(p, y, x, true, sampling)?;
    Ok((si, is))
}

/// Duality gap `IS - SI` estimated at a feasible candidate.
pub fn duality_gap(p: &SaddleProblem, x: &Vector, y: &Vector, sampling: &GapSampling) -> Result<f64> {
    let (si, is) = one_sided_estimates(p, x, y, Some(sampling))?;
    Ok(is - si)
}

/// Extragradient-then-Newton saddle solver with optional multi-start.
pub fn solve_saddle(
    p: &SaddleProblem,
    x0: &Vector,
    y0: &Vector,
    opts: &SaddleOptions,
) -> std::result::Result<SaddleResult, SaddleFailure> {
    let wrap = |e: Error| SaddleFailure {
        best: Box::new(SaddleResult {
            x_star: x0.clone(),
            y_star: y0.clone(),
            value: f64::NAN,
            si_estimate: f64::NAN,
            is_estimate: f64::NAN,
            gap: f64::NAN,
            grad_residual: f64::INFINITY,
            iterations: 0,
            converged: false,
        }),
        error: e,
    };
    let mut runs = Vec::new();
    for k in 0..opts.starts.max(1) {
        let (xs, ys) = if k == 0 {
            (x0.clone(), y0.clone())
        } else {
            (start_point(x0, &p.bounds_x, k, opts.start_radius, 0), start_point(y0, &p.bounds_y, k, opts.start_radius, x0.len()))
        };
        runs.push(run_single(p, &xs, &ys, opts).map_err(wrap)?);
    }
    let best = select_best(runs);
    if best.converged {
        Ok(best)
    } else {
        Err(SaddleFailure {
            error: Error::NoConvergence {
                iterations: best.iterations,
                residual: best.grad_residual,
            },
            best: Box::new(best),
        })
    }
}

fn start_point(center: &Vector, bounds: &Option<(Vector, Vector)>, k: usize, radius: f64, offset: usize) -> Vector {
    let h = halton(k, center.len() + offset);
    let h = &h[offset..];
    match bounds {
        Some((lo, hi)) => Vector::from_iterator(center.len(), (0..center.len()).map(|i| lo[i] + h[i] * (hi[i] - lo[i]))),
        None => Vector::from_iterator(center.len(), (0..center.len()).map(|i| center[i] + radius * (2.0 * h[i] - 1.0))),
    }
}

/// Converged runs first, then largest lower estimate, ties by smallest norm.
fn select_best(runs: Vec<SaddleResult>) -> SaddleResult {
    let mut best: Option<SaddleResult> = None;
    for r in runs {
        best = Some(match best {
            None => r,
            Some(b) => {
                if r.converged != b.converged {
                    if r.converged {
                        r
                    } else {
                        b
                    }
                } else if !r.converged {
                    if r.grad_residual < b.grad_residual {
                        r
                    } else {
                        b
                    }
                } else if (r.si_estimate - b.si_estimate).abs() <= 1e-9 * (1.0 + b.si_estimate.abs()) {
                    let nr = r.x_star.norm_squared() + r.y_star.norm_squared();
                    let nb = b.x_star.norm_squared() + b.y_star.norm_squared();
                    if nr < nb {
                        r
                    } else {
                        b
                    }
                } else if r.si_estimate > b.si_estimate {
                    r
                } else {
                    b
                }
            }
        });
    }
    best.expect("at least one run")
}

/// Both routes of the constrained conjugate identity.
#[derive(Debug, Clone)]
pub struct ConstrainedConjugate {
    /// `sup_L <L, z> - psi(B^T L)`.
    pub value: f64,
    /// `inf_{B xi = z} psi*(xi)`.
    pub direct_value: f64,
    pub multiplier: Vector,
    pub minimizer: Vector,
}

#[derive(Debug, Clone)]
pub struct ConjugateRouteOptions {
    pub tol: f64,
    pub match_tol: f64,
    pub divergence_cap: f64,
}

impl Default for ConjugateRouteOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            match_tol: 1e-7,
            divergence_cap: 1e12,
        }
    }
}

/// Evaluate `sup_L (<L, z> - psi(B^T L))` and cross-check against
/// `inf_{B xi = z} psi*(xi)`. `psi` and `psi_star` carry gradients.
pub fn constrained_conjugate(
    psi: &Objective,
    psi_star: &Objective,
    b: &Matrix,
    z: &Vector,
    opts: &ConjugateRouteOptions,
) -> Result<ConstrainedConjugate> {
    let m = b.nrows();
    let bt = b.transpose();
    let dual = Objective::new(|l: &Vector| psi.value(&(&bt * l)) - l.dot(z))
        .with_gradient(|l: &Vector| b * psi.gradient(&(&bt * l)) - z)
        .with_hessian(|l: &Vector| b * psi.hessian(&(&bt * l)) * &bt);
    let mopts = MinimizeOptions {
        tol: opts.tol,
        max_iter: 300,
        ..Default::default()
    };
    let route1 = minimize_local(&dual, None, &Vector::zeros(m), &mopts)?;
    if route1.x.norm() > opts.divergence_cap || -route1.value > opts.divergence_cap {
        return Err(Error::Unbounded { value: -route1.value });
    }
    let c = AffineConstraint::new(b.clone(), z.clone())?;
    let start = pinv(b) * z;
    let route2 = minimize_local(psi_star, Some(&c), &start, &mopts)?;
    let value = -route1.value;
    let direct = route2.value;
    if (value - direct).abs() > opts.match_tol * (1.0 + value.abs()) {
        return Err(Error::DualityMismatch { primal: direct, dual: value });
    }
    Ok(ConstrainedConjugate {
        value,
        direct_value: direct,
        multiplier: route1.x,
        minimizer: route2.x,
    })
}
