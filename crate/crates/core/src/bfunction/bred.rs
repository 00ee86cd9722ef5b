use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gradsys::{Energy, GradientSystem};
use crate::linalg::{pinv, AffineChart, AffineConstraint, Matrix, Vector};
use crate::numerics::{fd_gradient, halton};
use crate::saddle::{minimize_local, MinimizeOptions, Objective};

#[derive(Debug, Clone)]
pub struct BredOptions {
    /// Outer starts (the first one is `u0` or the chart origin).
    pub starts: usize,
    pub start_radius: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub u0: Option<Vector>,
    /// Optimize the free coordinates in `log u` (requires a coordinate-selecting `P`).
    pub log_coordinates: bool,
}

impl Default for BredOptions {
    fn default() -> Self {
        Self {
            starts: 1,
            start_radius: 1.0,
            inner_tol: 1e-12,
            outer_tol: 1e-9,
            u0: None,
            log_coordinates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BredValue {
    pub value: f64,
    pub u_star: Vector,
    pub xi_star: Vector,
    pub converged: bool,
}

enum OuterChart {
    Affine(AffineChart),
    Log { base: Vector, free: Vec<usize> },
}

impl OuterChart {
    fn dim(&self) -> usize {
        match self {
            OuterChart::Affine(c) => c.dim(),
            OuterChart::Log { free, .. } => free.len(),
        }
    }
    fn embed(&self, s: &Vector) -> Vector {
        match self {
            OuterChart::Affine(c) => c.embed(s),
            OuterChart::Log { base, free } => {
                let mut u = base.clone();
                for (k, &i) in free.iter().enumerate() {
                    u[i] = s[k].exp();
                }
                u
            }
        }
    }
    /// Chain rule `d/ds f(embed(s))` from the state gradient `g` at `u = embed(s)`.
    fn pull_back(&self, u: &Vector, g: &Vector) -> Vector {
        match self {
            OuterChart::Affine(c) => c.basis.transpose() * g,
            OuterChart::Log { free, .. } => Vector::from_iterator(free.len(), free.iter().map(|&i| g[i] * u[i])),
        }
    }
    fn coords(&self, u: &Vector) -> Vector {
        match self {
            OuterChart::Affine(c) => c.coords(u),
            OuterChart::Log { free, .. } => Vector::from_iterator(free.len(), free.iter().map(|&i| u[i].max(1e-300).ln())),
        }
    }
}

/// Rows of `p` that are unit vectors: returns (fixed index per row, free indices).
fn coordinate_selector(p: &Matrix) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut fixed = Vec::new();
    for i in 0..p.nrows() {
        let nz: Vec<usize> = (0..p.ncols()).filter(|&j| p[(i, j)] != 0.0).collect();
        if nz.len() != 1 || p[(i, nz[0])] != 1.0 {
            return None;
        }
        fixed.push(nz[0]);
    }
    let free = (0..p.ncols()).filter(|j| !fixed.contains(j)).collect();
    Some((fixed, free))
}

/// `sup_{P u = y} inf_{P* xi = eta} B(u, xi)`.
pub fn reduce_bred(gs: &GradientSystem, p: &Matrix, p_star: &Matrix, y: &Vector, eta: &Vector, opts: &BredOptions) -> Result<f64> {
    Ok(reduce_bred_detailed(gs, p, p_star, y, eta, opts)?.value)
}

pub fn reduce_bred_detailed(
    gs: &GradientSystem,
    p: &Matrix,
    p_star: &Matrix,
    y: &Vector,
    eta: &Vector,
    opts: &BredOptions,
) -> Result<BredValue> {
    let n = gs.dim();
    let cu = AffineConstraint::new(p.clone(), y.clone())?;
    let affine = cu.parametrize().map_err(|_| Error::Infeasible)?;
    let chart = if opts.log_coordinates {
        let (fixed, free) = coordinate_selector(p).ok_or_else(|| Error::Invalid("log coordinates need a coordinate-selecting port".into()))?;
        let mut base = Vector::from_element(n, 1.0);
        for (i, &j) in fixed.iter().enumerate() {
            base[j] = y[i];
        }
        OuterChart::Log { base, free }
    } else {
        OuterChart::Affine(affine)
    };
    let cxi = AffineConstraint::new(p_star.clone(), eta.clone())?;
    cxi.parametrize().map_err(|_| Error::Infeasible)?;
    let xi_start = pinv(p_star) * eta;
    let r = &gs.dissipation;
    let inner = |u: &Vector| -> Result<(f64, Vector)> {
        let obj = Objective::new(|xi: &Vector| r.dual_value(u, xi).unwrap_or(f64::INFINITY))
            .with_gradient(|xi: &Vector| r.velocity(u, xi).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)))
            .with_hessian(|xi: &Vector| r.dual_hessian(u, xi).unwrap_or_else(|_| Matrix::from_element(n, n, f64::NAN)));
        let m = minimize_local(
            &obj,
            Some(&cxi),
            &xi_start,
            &MinimizeOptions {
                tol: opts.inner_tol,
                max_iter: 200,
                ..Default::default()
            },
        )?;
        Ok((m.value - gs.slope(u)?, m.x))
    };
    let outer = |s: &Vector| -> f64 {
        let u = chart.embed(s);
        if gs.check(&u).is_err() {
            return f64::INFINITY;
        }
        match inner(&u) {
            Ok((v, _)) => -v,
            Err(_) => f64::INFINITY,
        }
    };
    // Envelope gradient: the inner minimizer is held fixed.
    let outer_grad = |s: &Vector| -> Vector {
        let u = chart.embed(s);
        let k = chart.dim();
        let Ok((_, xi)) = inner(&u) else {
            return Vector::from_element(k, f64::NAN);
        };
        let b = |x: &Vector| match (r.dual_value(x, &xi), gs.slope(x)) {
            (Ok(a), Ok(c)) => a - c,
            _ => f64::NAN,
        };
        let gu = -fd_gradient(&b, &u);
        chart.pull_back(&u, &gu)
    };
    let k = chart.dim();
    let center = match &opts.u0 {
        Some(u0) => chart.coords(u0),
        None => Vector::zeros(k),
    };
    let obj = Objective::new(outer).with_gradient(outer_grad);
    let mopts = MinimizeOptions {
        tol: opts.outer_tol,
        max_iter: 200,
        ..Default::default()
    };
    let mut best: Option<(f64, Vector, bool)> = None;
    for j in 0..opts.starts.max(1) {
        let s0 = if j == 0 {
            center.clone()
        } else {
            let h = halton(j, k);
            Vector::from_iterator(k, (0..k).map(|i| center[i] + opts.start_radius * (2.0 * h[i] - 1.0)))
        };
        if !obj.value(&s0).is_finite() {
            continue;
        }
        let m = if k == 0 {
            crate::saddle::Minimum {
                value: obj.value(&s0),
                x: s0,
                grad_residual: 0.0,
                iterations: 0,
                converged: true,
            }
        } else {
            minimize_local(&obj, None, &s0, &mopts)?
        };
        let val = -m.value;
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, m.x, m.converged));
        }
    }
    let (value, s, converged) = best.ok_or(Error::Infeasible)?;
    let u_star = chart.embed(&s);
    let (_, xi_star) = inner(&u_star)?;
    Ok(BredValue {
        value,
        u_star,
        xi_star,
        converged,
    })
}

/// Sample plan: every state is paired with every force direction.
#[derive(Debug, Clone, Default)]
pub struct BerPlan {
    pub states: Vec<Vector>,
    pub forces: Vec<Vector>,
}

/// Worst observed values of the three BER conditions (all should be `<= tol`).
#[derive(Debug, Clone, Copy, Default)]
pub struct BerReport {
    /// `max K(y, 0) - K(y, eta)`.
    pub anchored: f64,
    /// `max K(y, (a+b)/2) - (K(y, a) + K(y, b))/2`.
    pub convexity: f64,
    /// `max |K(y, -DE(y))|`.
    pub null_force: f64,
}

type Sampler = Arc<dyn Fn(&Vector, &Vector) -> Result<f64> + Send + Sync>;

/// `R*(y, eta) = K(y, eta) - K(y, 0)` together with its condition report.
#[derive(Clone)]
pub struct BerDecomposition {
    pub energy: Arc<dyn Energy>,
    sampler: Sampler,
    pub report: BerReport,
}

impl std::fmt::Debug for BerDecomposition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BerDecomposition").field("report", &self.report).finish()
    }
}

impl BerDecomposition {
    pub fn r_eff_dual(&self, y: &Vector, eta: &Vector) -> Result<f64> {
        Ok((self.sampler)(y, eta)? - (self.sampler)(y, &Vector::zeros(eta.len()))?)
    }

    pub fn sample(&self, y: &Vector, eta: &Vector) -> Result<f64> {
        (self.sampler)(y, eta)
    }
}

/// Check the BER conditions for `K` on the plan and return the decomposition.
pub fn extract_ber(
    sampler: impl Fn(&Vector, &Vector) -> Result<f64> + Send + Sync + 'static,
    energy: Arc<dyn Energy>,
    plan: &BerPlan,
    tol: f64,
) -> Result<BerDecomposition> {
    let mut report = BerReport::default();
    let mut idx = 0usize;
    for (i, y) in plan.states.iter().enumerate() {
        let k0 = sampler(y, &Vector::zeros(y.len()))?;
        let null = sampler(y, &(-energy.gradient(y)?))?.abs();
        report.null_force = report.null_force.max(null);
        if null > tol {
            return Err(Error::BerViolation {
                condition: "null force",
                witness: i,
                excess: null,
            });
        }
        let vals: Vec<f64> = plan.forces.iter().map(|f| sampler(y, f)).collect::<Result<_>>()?;
        for (j, v) in vals.iter().enumerate() {
            let ex = k0 - v;
            report.anchored = report.anchored.max(ex);
            if ex > tol {
                return Err(Error::BerViolation {
                    condition: "anchored minimum",
                    witness: idx + j,
                    excess: ex,
                });
            }
        }
        for a in 0..plan.forces.len() {
            for b in a + 1..plan.forces.len() {
                let mid = (&plan.forces[a] + &plan.forces[b]) * 0.5;
                let ex = sampler(y, &mid)? - 0.5 * (vals[a] + vals[b]);
                report.convexity = report.convexity.max(ex);
                if ex > tol {
                    return Err(Error::BerViolation {
                        condition: "convexity",
                        witness: i,
                        excess: ex,
                    });
                }
            }
        }
        idx += plan.forces.len();
    }
    Ok(BerDecomposition {
        energy,
        sampler: Arc::new(sampler),
        report,
    })
}

