//! B-functions `R*(u, xi) - R*(u, -DE(u))`, port gradient systems and their
//! steady states (NESS), constrained saddle problems, and BER extraction.

mod bred;
mod cspp;
mod ness;

pub use bred::{extract_ber, reduce_bred, reduce_bred_detailed, BerDecomposition, BerPlan, BerReport, BredOptions, BredValue};
pub use cspp::{is_null_saddle, port_range_residual, solve_cspp, CsppOptions, ForceLevelSet, NullSaddleReport};
pub use ness::{port_relation, solve_ness, NessOptions, NessResult, NessRoute};

use crate::error::{Error, Result};
use crate::gradsys::GradientSystem;
use crate::linalg::{Matrix, Vector};
use crate::numerics::fd_gradient;

/// `(X, E, R, P)` with injection `port_in: Y -> X` and read-out `port_out: X* -> Y*`.
#[derive(Debug, Clone)]
pub struct PortGradientSystem {
    pub gs: GradientSystem,
    /// `n x m`.
    pub port_in: Matrix,
    /// `m x n`.
    pub port_out: Matrix,
}

impl PortGradientSystem {
    pub fn new(gs: GradientSystem, port_in: Matrix, port_out: Matrix) -> Result<Self> {
        let n = gs.dim();
        if port_in.nrows() != n || port_out.ncols() != n || port_in.ncols() != port_out.nrows() {
            return Err(Error::Dimension {
                expected: n,
                got: port_in.nrows(),
            });
        }
        Ok(Self { gs, port_in, port_out })
    }

    /// Ports with `P* = P^T`.
    pub fn adjoint(gs: GradientSystem, port_in: Matrix) -> Result<Self> {
        let out = port_in.transpose();
        Self::new(gs, port_in, out)
    }

    /// System with trivial port space `Y = {0}`.
    pub fn unported(gs: GradientSystem) -> Self {
        let n = gs.dim();
        Self {
            gs,
            port_in: Matrix::zeros(n, 0),
            port_out: Matrix::zeros(0, n),
        }
    }

    pub fn port_dim(&self) -> usize {
        self.port_in.ncols()
    }

    /// `max |<P* xi, y> - <xi, P y>|` over the given pairs.
    pub fn adjoint_defect(&self, pairs: &[(Vector, Vector)]) -> f64 {
        pairs
            .iter()
            .map(|(xi, y)| ((&self.port_out * xi).dot(y) - xi.dot(&(&self.port_in * y))).abs())
            .fold(0.0, f64::max)
    }
}

/// `B(u, xi) = R*(u, xi) - R*(u, -DE(u))`.
pub fn eval_b(gs: &GradientSystem, u: &Vector, xi: &Vector) -> Result<f64> {
    let slope = gs.slope(u)?;
    Ok(gs.dissipation.dual_value(u, xi)? - slope)
}

/// Stacked residual `[D_xi R*(u, -DE(u)) - P y ; P* DE(u) + eta]`.
pub fn ness_residual(pgs: &PortGradientSystem, u: &Vector, y: &Vector, eta: &Vector) -> Result<Vector> {
    let gs = &pgs.gs;
    let de = gs.energy.gradient(u)?;
    gs.check(u)?;
    let v = gs.dissipation.velocity(u, &(-&de))? - &pgs.port_in * y;
    let c = &pgs.port_out * &de + eta;
    Ok(Vector::from_iterator(v.len() + c.len(), v.iter().chain(c.iter()).copied()))
}

/// `R*(u, xi) + <xi, V(u)> - R*(u, -DE(u)) + <DE(u), V(u)>` for the perturbed flow
/// `u' = D_xi R*(u, -DE(u)) + V(u)`. Steady states `u*` make `(u*, -DE(u*))`
/// stationary with value 0.
pub fn perturbed_b(gs: &GradientSystem, field: &dyn Fn(&Vector) -> Vector, u: &Vector, xi: &Vector) -> Result<f64> {
    let de = gs.energy.gradient(u)?;
    let vf = field(u);
    Ok(gs.dissipation.dual_value(u, xi)? + xi.dot(&vf) - gs.slope(u)? + de.dot(&vf))
}

/// Both sides of the equivalence "(u, -DE(u)) is critical for B" iff "u is steady".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criticality {
    pub critical: bool,
    pub steady: bool,
    pub gradient_norm: f64,
    pub velocity_norm: f64,
}

impl Criticality {
    pub fn consistent(&self) -> bool {
        self.critical == self.steady
    }
}

pub fn check_steady_state_criticality(gs: &GradientSystem, u: &Vector, tol: f64) -> Result<Criticality> {
    let xi = gs.driving_force(u)?;
    let velocity = gs.dissipation.velocity(u, &xi)?;
    let bu = fd_gradient(&|x: &Vector| eval_b(gs, x, &xi).unwrap_or(f64::NAN), u);
    let gradient_norm = bu.amax().max(velocity.amax());
    let velocity_norm = velocity.amax();
    Ok(Criticality {
        critical: gradient_norm <= tol,
        steady: velocity_norm <= tol,
        gradient_norm,
        velocity_norm,
    })
}

pub(crate) fn split(z: &Vector, n: usize) -> (Vector, Vector) {
    (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
}

pub(crate) fn join(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}
