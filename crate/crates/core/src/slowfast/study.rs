use super::{Coupling, SlowFastSystem};
use super::reduce::{solve_fast_ness, FastNessOptions};
use crate::error::{Error, Result};
use crate::gradsys::{integrate_on_times, GradientSystem, ImplicitSystem, Scheme, StepControl, Trajectory};
use crate::linalg::{pinv, Vector};

/// Trajectory of `u = (U, w)`; `flux` holds the port multiplier per sample (constrained case).
#[derive(Debug, Clone)]
pub struct SlowFastTrajectory {
    pub traj: Trajectory,
    pub flux: Vec<Vector>,
    pub slow_dim: usize,
}

impl SlowFastTrajectory {
    pub fn slow(&self, k: usize) -> Vector {
        self.traj.states[k].rows(0, self.slow_dim).into_owned()
    }

    pub fn fast(&self, k: usize) -> Vector {
        let u = &self.traj.states[k];
        u.rows(self.slow_dim, u.len() - self.slow_dim).into_owned()
    }
}

fn admissible(sf: &SlowFastSystem, big_u: &Vector, w: &Vector) -> bool {
    sf.slow.check(big_u).is_ok()
        && sf.fast.check(w).is_ok()
        && sf.energy.in_domain(big_u)
        && sf.fast_energy.in_domain(w)
}

/// Velocities of both blocks at `-DE`, without the port flux.
fn block_velocities(sf: &SlowFastSystem, big_u: &Vector, w: &Vector) -> Option<(Vector, Vector)> {
    if !admissible(sf, big_u, w) {
        return None;
    }
    let xs = -sf.energy.gradient(big_u).ok()?;
    let xf = -sf.fast_energy.gradient(w).ok()?;
    match &sf.coupling {
        Coupling::Product(r) => {
            let v = r.velocity(&sf.join(big_u, w), &sf.join(&xs, &xf)).ok()?;
            let (a, b) = sf.split(&v);
            Some((a, b))
        }
        Coupling::Port(p) => Some((p.r_slow.velocity(big_u, &xs).ok()?, p.r_fast.velocity(w, &xf).ok()?)),
    }
}

/// `M z' = F(z)` with `z = (U, w)` or `(U, w, y)`.
fn slow_fast_system(sf: &SlowFastSystem, eps: f64) -> ImplicitSystem<'_> {
    let ns = sf.slow_dim();
    let nf = sf.fast_dim();
    let m = sf.port().map_or(0, |p| p.port_dim());
    let mass = Vector::from_iterator(
        ns + nf + m,
        (0..ns + nf + m).map(|i| if i < ns { 1.0 } else if i < ns + nf { eps } else { 0.0 }),
    );
    let energy = move |z: &Vector| -> Option<f64> {
        let u = z.rows(0, ns).into_owned();
        let w = z.rows(ns, nf).into_owned();
        Some(sf.energy.value(&u).ok()? + eps * sf.fast_energy.value(&w).ok()?)
    };
    ImplicitSystem::new(mass, move |z: &Vector| {
        let u = z.rows(0, ns).into_owned();
        let w = z.rows(ns, nf).into_owned();
        let (vs, vf) = block_velocities(sf, &u, &w)?;
        match sf.port() {
            None => Some(sf.join(&vs, &vf)),
            Some(p) => {
                let y = z.rows(ns + nf, m).into_owned();
                let a = vs + p.inject_slow() * &y;
                let b = vf - p.inject_fast() * &y;
                let c = &p.p_slow * &u - &p.p_fast * &w;
                Some(Vector::from_iterator(
                    ns + nf + m,
                    a.iter().chain(b.iter()).chain(c.iter()).copied(),
                ))
            }
        }
    })
    .with_acceptance(move |a: &Vector, b: &Vector| match (energy(a), energy(b)) {
        (Some(e0), Some(e1)) => e1 <= e0 + 1e-12 * (1.0 + e0.abs()),
        _ => false,
    })
}

/// Consistent initial multiplier `y0` from `d/dt (P_slow U - P_fast w) = 0`.
fn initial_flux(sf: &SlowFastSystem, eps: f64, big_u: &Vector, w: &Vector) -> Result<Vector> {
    let p = sf.port().expect("constrained case");
    let (vs, vf) = block_velocities(sf, big_u, w).ok_or(Error::Domain("initial state outside the domain".into()))?;
    let lhs = &p.p_slow * p.inject_slow() + &p.p_fast * p.inject_fast() / eps;
    let rhs = &p.p_fast * vf / eps - &p.p_slow * vs;
    Ok(pinv(&lhs) * rhs)
}

fn prepare(sf: &SlowFastSystem, eps: f64, u0: &Vector, w0: &Vector) -> Result<Vector> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    if !admissible(sf, u0, w0) {
        return Err(Error::Domain("initial state outside the domain".into()));
    }
    let res = sf.constraint_residual(u0, w0);
    if res > 1e-9 {
        return Err(Error::ConstraintInfeasible { residual: res });
    }
    let mut z = sf.join(u0, w0);
    if sf.port().is_some() {
        let y0 = initial_flux(sf, eps, u0, w0)?;
        z = Vector::from_iterator(z.len() + y0.len(), z.iter().chain(y0.iter()).copied());
    }
    Ok(z)
}

fn assemble(sf: &SlowFastSystem, eps: f64, times: Vec<f64>, states: Vec<Vector>) -> Result<SlowFastTrajectory> {
    let ns = sf.slow_dim();
    let nf = sf.fast_dim();
    let mut us = Vec::with_capacity(states.len());
    let mut flux = Vec::new();
    for z in &states {
        let u = z.rows(0, ns).into_owned();
        let w = z.rows(ns, nf).into_owned();
        let drift = sf.constraint_residual(&u, &w);
        if drift > 1e-9 * (1.0 + u.amax()) {
            return Err(Error::ConstraintDrift { residual: drift });
        }
        if sf.port().is_some() {
            flux.push(z.rows(ns + nf, z.len() - ns - nf).into_owned());
        }
        us.push(z.rows(0, ns + nf).into_owned());
    }
    let mut velocities = Vec::with_capacity(us.len());
    let (vs, vf) = block_velocities(sf, &us[0].rows(0, ns).into_owned(), &us[0].rows(ns, nf).into_owned())
        .ok_or(Error::Domain("initial state outside the domain".into()))?;
    let v0 = match sf.port() {
        None => sf.join(&vs, &(vf / eps)),
        Some(p) => {
            let y = &flux[0];
            sf.join(&(vs + p.inject_slow() * y), &((vf - p.inject_fast() * y) / eps))
        }
    };
    velocities.push(v0);
    for k in 1..us.len() {
        velocities.push((&us[k] - &us[k - 1]) / (times[k] - times[k - 1]));
    }
    Ok(SlowFastTrajectory {
        traj: Trajectory {
            times,
            states: us,
            velocities,
        },
        flux,
        slow_dim: ns,
    })
}

/// Adaptive implicit integration of the eps-system; the first step is at most `eps / 10`.
pub fn integrate_slow_fast(
    sf: &SlowFastSystem,
    eps: f64,
    u0: &Vector,
    w0: &Vector,
    t_final: f64,
    ctrl: &StepControl,
) -> Result<SlowFastTrajectory> {
    let z0 = prepare(sf, eps, u0, w0)?;
    let mut c = ctrl.clone();
    c.h0 = c.h0.min(eps / 10.0);
    let (times, states) = slow_fast_system(sf, eps).integrate(&z0, t_final, &c)?;
    assemble(sf, eps, times, states)
}

/// Integration onto a prescribed time grid.
pub fn integrate_slow_fast_on(
    sf: &SlowFastSystem,
    eps: f64,
    u0: &Vector,
    w0: &Vector,
    times: &[f64],
    ctrl: &StepControl,
) -> Result<SlowFastTrajectory> {
    let z0 = prepare(sf, eps, u0, w0)?;
    let states = slow_fast_system(sf, eps).integrate_on(&z0, times, ctrl)?;
    assemble(sf, eps, times.to_vec(), states)
}

#[derive(Debug, Clone)]
pub enum InitialFast {
    Given(Vector),
    /// `w0 = w~(U0)`.
    WellPrepared,
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Uniform steps on `[0, T]` for both the eps-systems and the reference.
    pub steps: usize,
    pub ctrl: StepControl,
    pub threads: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            ctrl: StepControl::default().with_scheme(Scheme::Extrapolated),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub sup_error: f64,
    /// Log-ratio against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub order_last_pair: Option<f64>,
    /// Least-squares slope of `log error` against `log eps` over the last three rows.
    pub order_last_three: Option<f64>,
}

impl ConvergenceReport {
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// `sup_t |U_eps(t) - U_eff(t)|` for each eps against the reference slow flow.
pub fn convergence_study(
    sf: &SlowFastSystem,
    eps_list: &[f64],
    u0: &Vector,
    init: &InitialFast,
    t_final: f64,
    reference: &GradientSystem,
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Invalid("eps values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("eps list must be strictly decreasing".into()));
    }
    let times: Vec<f64> = (0..=opts.steps).map(|k| t_final * k as f64 / opts.steps as f64).collect();
    let reference_traj = integrate_on_times(reference, u0, &times, &opts.ctrl)?;
    let w0 = match init {
        InitialFast::Given(w) => w.clone(),
        InitialFast::WellPrepared => solve_fast_ness(sf, u0, &FastNessOptions::default())?.w,
    };
    let row_error = |eps: f64| -> Result<f64> {
        let tr = integrate_slow_fast_on(sf, eps, u0, &w0, &times, &opts.ctrl)?;
        Ok((0..times.len())
            .map(|k| (tr.slow(k) - &reference_traj.states[k]).amax())
            .fold(0.0, f64::max))
    };
    let threads = opts.threads.max(1).min(eps_list.len());
    let errors: Vec<Result<f64>> = if threads == 1 {
        eps_list.iter().map(|&e| row_error(e)).collect()
    } else {
        let mut out: Vec<Option<Result<f64>>> = (0..eps_list.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let chunks: Vec<Vec<usize>> = (0..threads)
                .map(|t| (t..eps_list.len()).step_by(threads).collect())
                .collect();
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|idx| {
                    let row_error = &row_error;
                    scope.spawn(move || idx.into_iter().map(|i| (i, row_error(eps_list[i]))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("convergence worker panicked") {
                    out[i] = Some(r);
                }
            }
        });
        out.into_iter().map(|r| r.expect("row computed")).collect()
    };
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(eps_list.len());
    for (i, (eps, err)) in eps_list.iter().zip(errors).enumerate() {
        let sup_error = err?;
        let order = (i > 0).then(|| (rows[i - 1].sup_error / sup_error).ln() / (rows[i - 1].eps / eps).ln());
        rows.push(ConvergenceRow {
            eps: *eps,
            sup_error,
            order,
        });
    }
    let order_last_pair = rows.last().and_then(|r| r.order);
    let order_last_three = (rows.len() >= 3).then(|| {
        let pts: Vec<(f64, f64)> = rows[rows.len() - 3..].iter().map(|r| (r.eps, r.sup_error)).collect();
        log_slope(&pts)
    });
    Ok(ConvergenceReport {
        rows,
        order_last_pair,
        order_last_three,
    })
}
