//! Gradient systems `(X, E, R)`: energies, dual dissipation potentials,
//! gradient-flow integration and the energy-dissipation balance.

mod conjugate;
mod integrate;
mod potentials;

pub use conjugate::{legendre_conjugate, primal_from_dual, ConjugateOptions, ConjugateResult};
pub use integrate::{implicit_euler_step, integrate_gradient_flow, integrate_on_times, ImplicitSystem, Scheme, StepControl};
pub use potentials::{
    cstar, cstar_conj, cstar_prime, lambda_b, BoltzmannEnergy, FnEnergy, L1QuadraticDual, QuadraticDual, QuadraticEnergy,
    ScaledEnergy, SumEnergy,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::numerics::{fd_gradient, fd_jacobian};

/// Default positivity floor for entropic states.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Description of the ambient state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    pub dim: usize,
    pub tag: String,
    /// States must be componentwise positive (entropy-driven systems).
    pub positive: bool,
}

impl Space {
    pub fn euclidean(dim: usize, tag: &str) -> Self {
        Self {
            dim,
            tag: tag.to_string(),
            positive: false,
        }
    }

    pub fn positive(dim: usize, tag: &str) -> Self {
        Self {
            dim,
            tag: tag.to_string(),
            positive: true,
        }
    }

    pub fn check(&self, u: &Vector) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite state in {}", self.tag)));
        }
        if self.positive && u.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain(format!("non-positive state in {}", self.tag)));
        }
        Ok(())
    }
}

/// Energy functional `E` with gradient `DE`.
pub trait Energy: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, u: &Vector) -> Result<f64>;
    fn gradient(&self, u: &Vector) -> Result<Vector>;

    fn hessian(&self, u: &Vector) -> Result<Matrix> {
        self.gradient(u)?;
        let g = |v: &Vector| self.gradient(v).unwrap_or_else(|_| Vector::from_element(v.len(), f64::NAN));
        let j = fd_jacobian(&g, u, u.len());
        Ok((&j + j.transpose()) * 0.5)
    }

    fn in_domain(&self, u: &Vector) -> bool {
        u.len() == self.dim() && u.iter().all(|v| v.is_finite())
    }

    /// True when `DE` is affine (constant Hessian).
    fn is_quadratic(&self) -> bool {
        false
    }

    /// A state at which `DE` vanishes, when known.
    fn equilibrium(&self) -> Option<Vector> {
        None
    }
}

/// Dual dissipation potential `R*(u, xi)` with velocity `D_xi R*`.
pub trait DualDissipation: Send + Sync {
    fn dim(&self) -> usize;
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64>;
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector>;

    /// `D_xi^2 R*(u, xi)`.
    fn dual_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        self.velocity(u, xi)?;
        let g = |x: &Vector| self.velocity(u, x).unwrap_or_else(|_| Vector::from_element(x.len(), f64::NAN));
        let j = fd_jacobian(&g, xi, xi.len());
        Ok((&j + j.transpose()) * 0.5)
    }

    /// Primal potential `R(u, v)`; `+inf` outside its effective domain.
    fn primal_value(&self, _u: &Vector, _v: &Vector) -> Result<f64> {
        Err(Error::MissingPrimal)
    }

    /// `D_v R(u, v)`, the force conjugate to `v`.
    fn primal_force(&self, _u: &Vector, _v: &Vector) -> Result<Vector> {
        Err(Error::MissingPrimal)
    }

    fn has_primal(&self) -> bool {
        false
    }

    /// Orthonormal basis of the range of `D_xi R*(u, .)` when it is a proper
    /// subspace (the primal is `+inf` off it). `None` means the whole space.
    fn velocity_range(&self, _u: &Vector) -> Option<Matrix> {
        None
    }

    fn state_independent(&self) -> bool {
        false
    }

    fn strictly_convex(&self) -> bool {
        true
    }
}

/// The triple `(X, E, R)`.
#[derive(Clone)]
pub struct GradientSystem {
    pub space: Space,
    pub energy: Arc<dyn Energy>,
    pub dissipation: Arc<dyn DualDissipation>,
}

impl std::fmt::Debug for GradientSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradientSystem").field("space", &self.space).finish()
    }
}

impl GradientSystem {
    pub fn new(space: Space, energy: Arc<dyn Energy>, dissipation: Arc<dyn DualDissipation>) -> Result<Self> {
        if energy.dim() != space.dim || dissipation.dim() != space.dim {
            return Err(Error::Dimension {
                expected: space.dim,
                got: if energy.dim() != space.dim {
                    energy.dim()
                } else {
                    dissipation.dim()
                },
            });
        }
        Ok(Self {
            space,
            energy,
            dissipation,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn check(&self, u: &Vector) -> Result<()> {
        self.space.check(u)?;
        if !self.energy.in_domain(u) {
            return Err(Error::Domain("state outside the energy domain".into()));
        }
        Ok(())
    }

    /// `-DE(u)`.
    pub fn driving_force(&self, u: &Vector) -> Result<Vector> {
        self.check(u)?;
        Ok(-self.energy.gradient(u)?)
    }

    /// Slope `R*(u, -DE(u))`.
    pub fn slope(&self, u: &Vector) -> Result<f64> {
        let xi = self.driving_force(u)?;
        self.dissipation.dual_value(u, &xi)
    }
}

/// `D_xi R*(u, -DE(u))`.
pub fn gradient_flow_rhs(gs: &GradientSystem, u: &Vector) -> Result<Vector> {
    let xi = gs.driving_force(u)?;
    gs.dissipation.velocity(u, &xi)
}

/// Dissipation function `<xi, D_xi R*(u, xi)>`.
pub fn eval_dissipation_function(gs: &GradientSystem, u: &Vector, xi: &Vector) -> Result<f64> {
    gs.check(u)?;
    Ok(xi.dot(&gs.dissipation.velocity(u, xi)?))
}

/// True iff `R(u,v) + R*(u,xi) <= <xi, v> + tol`.
pub fn check_fenchel_triple(r: &dyn DualDissipation, u: &Vector, v: &Vector, xi: &Vector, tol: f64) -> Result<bool> {
    if !r.has_primal() {
        return Err(Error::MissingPrimal);
    }
    let lhs = r.primal_value(u, v)? + r.dual_value(u, xi)?;
    Ok(lhs <= xi.dot(v) + tol)
}

/// Sampled trajectory `t -> u(t)` with per-step velocity estimates.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub velocities: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("non-empty trajectory")
    }

    /// Piecewise-linear interpolation at time `t`.
    pub fn at(&self, t: f64) -> Vector {
        let k = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.states[k].clone(),
            Err(k) => k,
        };
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.times.len() {
            return self.last().clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let th = (t - t0) / (t1 - t0);
        &self.states[k - 1] * (1.0 - th) + &self.states[k] * th
    }

    /// Map every state through `f` (e.g. restriction to slow coordinates).
    pub fn map(&self, f: impl Fn(&Vector) -> Vector) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(&f).collect(),
            velocities: self.velocities.iter().map(&f).collect(),
        }
    }
}

/// `E(u(T)) + int [R(u, u') + R*(u, -DE(u))] dt - E(u(0))` by the trapezoidal rule
/// on the piecewise-linear interpolant of the trajectory.
pub fn edi_residual(gs: &GradientSystem, traj: &Trajectory) -> Result<f64> {
    if !gs.dissipation.has_primal() {
        return Err(Error::MissingPrimal);
    }
    let n = traj.len();
    if n == 0 {
        return Ok(0.0);
    }
    let r = &gs.dissipation;
    let slopes: Vec<f64> = traj.states.iter().map(|u| gs.slope(u)).collect::<Result<_>>()?;
    let mut integral = 0.0;
    for k in 0..n - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        let v = (&traj.states[k + 1] - &traj.states[k]) / dt;
        let r0 = r.primal_value(&traj.states[k], &v)?;
        let r1 = r.primal_value(&traj.states[k + 1], &v)?;
        integral += 0.5 * dt * (r0 + r1 + slopes[k] + slopes[k + 1]);
    }
    let e0 = gs.energy.value(&traj.states[0])?;
    let e1 = gs.energy.value(&traj.states[n - 1])?;
    Ok(e1 + integral - e0)
}

/// Central-difference check of `DE` against `E` at `u`; returns the sup error.
pub fn energy_gradient_error(e: &dyn Energy, u: &Vector) -> Result<f64> {
    let g = e.gradient(u)?;
    let fd = fd_gradient(&|v: &Vector| e.value(v).unwrap_or(f64::NAN), u);
    Ok((g - fd).amax())
}

/// Central-difference check of `D_xi R*` against `R*` at `(u, xi)`.
pub fn velocity_error(r: &dyn DualDissipation, u: &Vector, xi: &Vector) -> Result<f64> {
    let g = r.velocity(u, xi)?;
    let fd = fd_gradient(&|x: &Vector| r.dual_value(u, x).unwrap_or(f64::NAN), xi);
    Ok((g - fd).amax())
}

#[cfg(test)]
mod tests;
