use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{Coupling, SlowFastSystem};
use crate::bfunction::{eval_b, extract_ber, reduce_bred_detailed, BerDecomposition, BerPlan, BerReport, BredOptions};
use crate::error::{Error, Result};
use crate::gradsys::{DualDissipation, GradientSystem};
use crate::linalg::{pinv, Matrix, Vector};
use crate::numerics::newton_system;

#[derive(Debug, Clone)]
pub struct FastNessOptions {
    pub w0: Option<Vector>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FastNessOptions {
    fn default() -> Self {
        Self {
            w0: None,
            tol: 1e-12,
            max_iter: 60,
        }
    }
}

/// Fast steady state `w~(U)`; `flux` is the port multiplier `y` in the constrained case.
#[derive(Debug, Clone)]
pub struct FastNess {
    pub w: Vector,
    pub flux: Option<Vector>,
    pub residual: f64,
}

fn fast_admissible(sf: &SlowFastSystem, w: &Vector) -> bool {
    sf.fast.check(w).is_ok() && sf.fast_energy.in_domain(w)
}

fn no_convergence(e: Error, iterations: usize) -> Error {
    match e {
        Error::NewtonDivergence { residual } => Error::NoConvergence { iterations, residual },
        other => other,
    }
}

/// Fast block of `D R_bar*(U, w; -DE(U), -De(w))` (product case).
fn product_velocity(sf: &SlowFastSystem, r: &dyn DualDissipation, big_u: &Vector, w: &Vector) -> Result<Vector> {
    let xi = -sf.join(&sf.energy.gradient(big_u)?, &sf.fast_energy.gradient(w)?);
    r.velocity(&sf.join(big_u, w), &xi)
}

pub fn solve_fast_ness(sf: &SlowFastSystem, big_u: &Vector, opts: &FastNessOptions) -> Result<FastNess> {
    sf.slow.check(big_u)?;
    let ns = sf.slow_dim();
    let nf = sf.fast_dim();
    let w0 = opts.w0.clone().unwrap_or_else(|| sf.fast_start());
    let tol = opts.tol * (1.0 + big_u.amax());
    match &sf.coupling {
        Coupling::Product(r) => {
            let f = |w: &Vector| -> Option<Vector> {
                if !fast_admissible(sf, w) {
                    return None;
                }
                let v = product_velocity(sf, r.as_ref(), big_u, w).ok()?;
                Some(v.rows(ns, nf).into_owned())
            };
            let w = newton_system(&f, None, &w0, tol, opts.max_iter).map_err(|e| no_convergence(e, opts.max_iter))?;
            let residual = f(&w).map(|r| r.amax()).unwrap_or(f64::INFINITY);
            Ok(FastNess { w, flux: None, residual })
        }
        Coupling::Port(p) => {
            let m = p.port_dim();
            let inject = p.inject_fast();
            let target = &p.p_slow * big_u;
            // 0 = D R_fast*(w, -De(w)) - P_fast y,  P_fast w = P_slow U.
            let f = |z: &Vector| -> Option<Vector> {
                let w = z.rows(0, nf).into_owned();
                let y = z.rows(nf, m).into_owned();
                if !fast_admissible(sf, &w) {
                    return None;
                }
                let xi = -sf.fast_energy.gradient(&w).ok()?;
                let v = p.r_fast.velocity(&w, &xi).ok()? - &inject * &y;
                let c = &p.p_fast * &w - &target;
                Some(Vector::from_iterator(nf + m, v.iter().chain(c.iter()).copied()))
            };
            // Start on the constraint.
            let shift = pinv(&p.p_fast) * (&target - &p.p_fast * &w0);
            let mut w_start = &w0 + shift;
            if !fast_admissible(sf, &w_start) {
                w_start = w0.clone();
            }
            let z0 = Vector::from_iterator(nf + m, w_start.iter().copied().chain(std::iter::repeat_n(0.0, m)));
            let z = newton_system(&f, None, &z0, tol, opts.max_iter).map_err(|e| no_convergence(e, opts.max_iter))?;
            let residual = f(&z).map(|r| r.amax()).unwrap_or(f64::INFINITY);
            Ok(FastNess {
                w: z.rows(0, nf).into_owned(),
                flux: Some(z.rows(nf, m).into_owned()),
                residual,
            })
        }
    }
}

/// Slow velocity with the fast variable in its NESS.
pub fn reduced_rhs(sf: &SlowFastSystem, big_u: &Vector, opts: &FastNessOptions) -> Result<Vector> {
    let ness = solve_fast_ness(sf, big_u, opts)?;
    let ns = sf.slow_dim();
    match &sf.coupling {
        Coupling::Product(r) => Ok(product_velocity(sf, r.as_ref(), big_u, &ness.w)?.rows(0, ns).into_owned()),
        Coupling::Port(p) => {
            let xi = -sf.energy.gradient(big_u)?;
            let y = ness.flux.unwrap_or_else(|| Vector::zeros(p.port_dim()));
            Ok(p.r_slow.velocity(big_u, &xi)? + p.inject_slow() * y)
        }
    }
}

fn is_selector(p: &Matrix) -> bool {
    (0..p.nrows()).all(|i| {
        let nz: Vec<f64> = p.row(i).iter().copied().filter(|&x| x != 0.0).collect();
        nz.len() == 1 && nz[0] == 1.0
    })
}

fn slow_selector(sf: &SlowFastSystem) -> Matrix {
    let ns = sf.slow_dim();
    let mut p = Matrix::zeros(ns, ns + sf.fast_dim());
    p.view_mut((0, 0), (ns, ns)).fill_with_identity();
    p
}

/// Fill in a start on the fast NESS and log coordinates for positive fast spaces.
fn prepared_options(sf: &SlowFastSystem, big_u: &Vector, opts: &BredOptions) -> BredOptions {
    let mut o = opts.clone();
    if o.u0.is_none() {
        let w = solve_fast_ness(sf, big_u, &FastNessOptions::default())
            .map(|n| n.w)
            .unwrap_or_else(|_| sf.fast_start());
        o.u0 = Some(match &sf.coupling {
            Coupling::Product(_) => sf.join(big_u, &w),
            Coupling::Port(_) => w,
        });
    }
    if sf.fast.positive {
        o.log_coordinates = match &sf.coupling {
            Coupling::Product(_) => true,
            Coupling::Port(p) => is_selector(&p.p_fast),
        };
    }
    o
}

/// Value together with its `Xi`-gradient by the envelope theorem.
fn bred_with_gradient(sf: &SlowFastSystem, big_u: &Vector, xi: &Vector, opts: &BredOptions) -> Result<(f64, Vector)> {
    let o = prepared_options(sf, big_u, opts);
    match &sf.coupling {
        Coupling::Product(r) => {
            let p = slow_selector(sf);
            let gs = sf.bar_gs()?;
            let b = reduce_bred_detailed(&gs, &p, &p, big_u, xi, &o)?;
            let v = r.velocity(&b.u_star, &b.xi_star)?;
            Ok((b.value, v.rows(0, sf.slow_dim()).into_owned()))
        }
        Coupling::Port(p) => {
            let gs = sf.fast_gs()?;
            let y = &p.p_slow * big_u;
            let eta = &p.p_slow_star * xi;
            let b = reduce_bred_detailed(&gs, &p.p_fast, &p.p_fast_star, &y, &eta, &o)?;
            let v = p.r_fast.velocity(&b.u_star, &b.xi_star)?;
            let lambda = pinv(&p.inject_fast()) * v;
            Ok((b.value, p.inject_slow() * lambda))
        }
    }
}

/// `B_red(U, Xi)`: sup over the fast state, inf over the fast force.
pub fn bred_numeric(sf: &SlowFastSystem, big_u: &Vector, xi: &Vector, opts: &BredOptions) -> Result<f64> {
    Ok(bred_with_gradient(sf, big_u, xi, opts)?.0)
}

/// `B_eff(U, Xi) = B_{E, R_slow}(U, Xi) + B_red(U, Xi)` for the constrained case.
pub fn case2_beff(sf: &SlowFastSystem, big_u: &Vector, xi: &Vector, opts: &BredOptions) -> Result<f64> {
    if sf.port().is_none() {
        return Err(Error::Invalid("case2_beff needs a port-constrained system".into()));
    }
    Ok(eval_b(&sf.slow_gs()?, big_u, xi)? + bred_numeric(sf, big_u, xi, opts)?)
}

/// The reduced function whose BER structure defines the effective system:
/// `B_red` in the product case, `B_eff` in the constrained case.
pub fn reduced_b(sf: &SlowFastSystem, big_u: &Vector, xi: &Vector, opts: &BredOptions) -> Result<f64> {
    match &sf.coupling {
        Coupling::Product(_) => bred_numeric(sf, big_u, xi, opts),
        Coupling::Port(_) => case2_beff(sf, big_u, xi, opts),
    }
}

fn reduced_b_with_gradient(sf: &SlowFastSystem, big_u: &Vector, xi: &Vector, opts: &BredOptions) -> Result<(f64, Vector)> {
    let (b, g) = bred_with_gradient(sf, big_u, xi, opts)?;
    match &sf.coupling {
        Coupling::Product(_) => Ok((b, g)),
        Coupling::Port(p) => {
            let slow = sf.slow_gs()?;
            Ok((eval_b(&slow, big_u, xi)? + b, p.r_slow.velocity(big_u, xi)? + g))
        }
    }
}

/// `R*_eff(U, Xi) = K(U, Xi) - K(U, 0)` with `K(U, 0)` memoized on a `1e-12` grid.
pub struct EffectiveDual {
    sf: Arc<SlowFastSystem>,
    opts: BredOptions,
    anchors: Mutex<HashMap<Vec<i64>, f64>>,
}

impl EffectiveDual {
    pub fn new(sf: Arc<SlowFastSystem>, opts: BredOptions) -> Self {
        Self {
            sf,
            opts,
            anchors: Mutex::new(HashMap::new()),
        }
    }

    fn anchor(&self, big_u: &Vector) -> Result<f64> {
        let key: Vec<i64> = big_u.iter().map(|x| (x * 1e12).round() as i64).collect();
        if let Some(v) = self.anchors.lock().expect("anchor cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = reduced_b(&self.sf, big_u, &Vector::zeros(big_u.len()), &self.opts)?;
        self.anchors.lock().expect("anchor cache poisoned").insert(key, v);
        Ok(v)
    }
}

impl DualDissipation for EffectiveDual {
    fn dim(&self) -> usize {
        self.sf.slow_dim()
    }
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        Ok(reduced_b(&self.sf, u, xi, &self.opts)? - self.anchor(u)?)
    }
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(reduced_b_with_gradient(&self.sf, u, xi, &self.opts)?.1)
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub route: &'static str,
    pub states: usize,
    pub forces: usize,
}

/// `(X_slow, E, R_eff)` with its BER report.
#[derive(Clone)]
pub struct EffectiveSystem {
    pub gs: GradientSystem,
    pub ber: BerDecomposition,
    pub report: BerReport,
    pub provenance: Provenance,
}

pub fn build_effective(sf: &SlowFastSystem, plan: &BerPlan, opts: &BredOptions, tol: f64) -> Result<EffectiveSystem> {
    let shared = Arc::new(sf.clone());
    let sampler_sf = shared.clone();
    let sampler_opts = opts.clone();
    let sampler = move |y: &Vector, eta: &Vector| reduced_b(&sampler_sf, y, eta, &sampler_opts);
    let ber = extract_ber(sampler, sf.energy.clone(), plan, tol)?;
    let dual = EffectiveDual::new(shared, opts.clone());
    let gs = GradientSystem::new(sf.slow.clone(), sf.energy.clone(), Arc::new(dual))?;
    Ok(EffectiveSystem {
        gs,
        report: ber.report,
        ber,
        provenance: Provenance {
            route: if sf.is_product() {
                "sup-inf over the fast variable"
            } else {
                "slow B-function plus port-constrained reduction"
            },
            states: plan.states.len(),
            forces: plan.forces.len(),
        },
    })
}
