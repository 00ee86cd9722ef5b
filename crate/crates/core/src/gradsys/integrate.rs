//! Implicit integration of gradient flows and of linearly implicit systems
//! `M x' = F(x)` with diagonal (possibly singular) `M`.

use super::{gradient_flow_rhs, GradientSystem, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::numerics::newton_system;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    /// Richardson extrapolation of implicit Euler (`2 x_{h/2,h/2} - x_h`): L-stable, second order.
    Extrapolated,
}

#[derive(Debug, Clone)]
pub struct StepControl {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub growth: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub scheme: Scheme,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            h0: 1e-3,
            h_min: 1e-12,
            h_max: 1e-2,
            growth: 1.5,
            newton_tol: 1e-12,
            max_newton: 40,
            scheme: Scheme::ImplicitEuler,
        }
    }
}

impl StepControl {
    pub fn fixed(h: f64) -> Self {
        Self {
            h0: h,
            h_max: h,
            growth: 1.0,
            ..Default::default()
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

type Rhs<'a> = Box<dyn Fn(&Vector) -> Option<Vector> + 'a>;
type Acceptance<'a> = Box<dyn Fn(&Vector, &Vector) -> bool + 'a>;

/// `M x' = F(x)`; `F` returns `None` outside its domain.
pub struct ImplicitSystem<'a> {
    pub mass: Vector,
    rhs: Rhs<'a>,
    accept: Acceptance<'a>,
}

impl<'a> ImplicitSystem<'a> {
    pub fn new(mass: Vector, rhs: impl Fn(&Vector) -> Option<Vector> + 'a) -> Self {
        Self {
            mass,
            rhs: Box::new(rhs),
            accept: Box::new(|_, _| true),
        }
    }

    /// Extra step acceptance test `(old, new) -> bool`, e.g. energy decrease.
    pub fn with_acceptance(mut self, accept: impl Fn(&Vector, &Vector) -> bool + 'a) -> Self {
        self.accept = Box::new(accept);
        self
    }

    pub fn rhs(&self, x: &Vector) -> Option<Vector> {
        (self.rhs)(x)
    }

    fn euler(&self, u: &Vector, h: f64, ctrl: &StepControl) -> Result<Vector> {
        let g = |x: &Vector| -> Option<Vector> {
            let f = (self.rhs)(x)?;
            Some((x - u).component_mul(&self.mass) - f * h)
        };
        let tol = ctrl.newton_tol * (1.0 + u.amax());
        newton_system(&g, None, u, tol, ctrl.max_newton)
    }

    /// One step of the configured scheme.
    pub fn step(&self, u: &Vector, h: f64, ctrl: &StepControl) -> Result<Vector> {
        match ctrl.scheme {
            Scheme::ImplicitEuler => self.euler(u, h, ctrl),
            Scheme::Extrapolated => {
                let full = self.euler(u, h, ctrl)?;
                let half = self.euler(u, 0.5 * h, ctrl)?;
                let half = self.euler(&half, 0.5 * h, ctrl)?;
                let x = half * 2.0 - full;
                (self.rhs)(&x).ok_or(Error::Domain("extrapolated step left the domain".into()))?;
                Ok(x)
            }
        }
    }

    fn accepted_step(&self, u: &Vector, h: f64, ctrl: &StepControl) -> Result<Option<Vector>> {
        match self.step(u, h, ctrl) {
            Ok(x) if (self.accept)(u, &x) => Ok(Some(x)),
            Ok(_) | Err(Error::Domain(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Adaptive stepping on `[0, T]`; every accepted step is recorded.
    pub fn integrate(&self, u0: &Vector, t_final: f64, ctrl: &StepControl) -> Result<(Vec<f64>, Vec<Vector>)> {
        let mut times = vec![0.0];
        let mut states = vec![u0.clone()];
        let mut t = 0.0;
        let mut u = u0.clone();
        let mut h = ctrl.h0.min(ctrl.h_max);
        while t < t_final * (1.0 - 1e-14) {
            // Absorb a remainder that is only accumulated roundoff.
            let rest = t_final - t;
            let h_try = if rest <= h * (1.0 + 1e-9) { rest } else { h };
            let step = self.accepted_step(&u, h_try, ctrl);
            match step {
                Ok(Some(x)) => {
                    t += h_try;
                    u = x;
                    times.push(t);
                    states.push(u.clone());
                    h = (h_try * ctrl.growth).min(ctrl.h_max).max(h);
                }
                other => {
                    h = h_try * 0.5;
                    if h < ctrl.h_min {
                        return Err(match other {
                            Err(e) => e,
                            _ => Error::StepUnderflow { step: h },
                        });
                    }
                }
            }
        }
        Ok((times, states))
    }

    /// Stepping onto a prescribed grid, halving sub-steps on failure.
    pub fn integrate_on(&self, u0: &Vector, times: &[f64], ctrl: &StepControl) -> Result<Vec<Vector>> {
        let mut states = vec![u0.clone()];
        let mut u = u0.clone();
        let mut parts = 1usize;
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            let x = loop {
                let h = dt / parts as f64;
                let mut x = u.clone();
                let mut ok = true;
                for _ in 0..parts {
                    match self.accepted_step(&x, h, ctrl) {
                        Ok(Some(y)) => x = y,
                        Ok(None) | Err(Error::NewtonDivergence { .. }) => {
                            ok = false;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if ok {
                    break x;
                }
                parts *= 2;
                if dt / (parts as f64) < ctrl.h_min {
                    return Err(Error::StepUnderflow { step: dt / parts as f64 });
                }
            };
            states.push(x.clone());
            u = x;
        }
        Ok(states)
    }
}

fn flow_system(gs: &GradientSystem) -> ImplicitSystem<'_> {
    ImplicitSystem::new(Vector::from_element(gs.dim(), 1.0), move |x: &Vector| {
        if gs.check(x).is_err() {
            return None;
        }
        gradient_flow_rhs(gs, x).ok()
    })
    .with_acceptance(move |u: &Vector, x: &Vector| match (gs.energy.value(u), gs.energy.value(x)) {
        (Ok(e0), Ok(e1)) => e1 <= e0 + 1e-12 * (1.0 + e0.abs()),
        _ => false,
    })
}

/// One implicit Euler step `x = u + h D_xi R*(x, -DE(x))`.
pub fn implicit_euler_step(gs: &GradientSystem, u: &Vector, h: f64, ctrl: &StepControl) -> Result<Vector> {
    flow_system(gs).euler(u, h, ctrl)
}

fn difference_velocities(times: &[f64], states: &[Vector], v0: Vector) -> Vec<Vector> {
    let mut vel = vec![v0];
    for k in 1..states.len() {
        vel.push((&states[k] - &states[k - 1]) / (times[k] - times[k - 1]));
    }
    vel
}

/// Adaptive integration of the gradient flow on `[0, T]` with energy-monotone acceptance.
pub fn integrate_gradient_flow(gs: &GradientSystem, u0: &Vector, t_final: f64, ctrl: &StepControl) -> Result<Trajectory> {
    gs.check(u0)?;
    let v0 = gradient_flow_rhs(gs, u0)?;
    let (times, states) = flow_system(gs).integrate(u0, t_final, ctrl)?;
    let velocities = difference_velocities(&times, &states, v0);
    Ok(Trajectory {
        times,
        states,
        velocities,
    })
}

/// Gradient flow sampled on a prescribed time grid.
pub fn integrate_on_times(gs: &GradientSystem, u0: &Vector, times: &[f64], ctrl: &StepControl) -> Result<Trajectory> {
    gs.check(u0)?;
    let v0 = gradient_flow_rhs(gs, u0)?;
    let states = flow_system(gs).integrate_on(u0, times, ctrl)?;
    let velocities = difference_velocities(times, &states, v0);
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        velocities,
    })
}
