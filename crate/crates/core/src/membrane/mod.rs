//! One-dimensional membrane problems: the thin-layer family on `]-1-eps, 1+eps[`
//! rescaled to `]-2, 2[`, its transmission limits and the effective interface
//! coefficients for the quadratic, entropic (Otto) and sorption structures.

mod bvp;
mod entropic;
mod linear;
mod profile;
mod rd;

pub use bvp::{
    membrane_saddle_oracle, ry_star_sorption, solve_hpm, sorption_coeffs, sorption_coeffs_const, BoundaryData, HpmSolution,
};
pub use entropic::{
    effective_membrane_gs, membrane_saddle_value, otto_dual_r, otto_keff, otto_slope, otto_slow_fast, transmission_coeffs,
    EffectiveMembrane, InterfaceKinetics, MembraneSlowFast, NodeBoltzmannEnergy, NodeEntropicDual, NodeGrid, Structure,
};
pub use linear::{
    assemble_quadratic_pde, membrane_steady_flux, quadratic_eps_sweep, quadratic_limit, solve_limit_quadratic, transmission_hk, FvOptions, LinearFv,
};
pub use profile::{Coefficient, MatrixCoefficient, MembraneProfile, PiecewiseCoefficient, Region, Side};
pub use rd::{rd_pde_rhs, sorption_network, RdCoefficients};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Effective interface coefficients.
#[derive(Debug, Clone)]
pub struct TransmissionCoeffs {
    /// `H_K`, symmetric positive definite.
    pub h_k: Matrix,
    pub k_eff: f64,
    pub m_eff: f64,
    pub m_minus: f64,
    pub m_plus: f64,
    pub provenance: CoeffProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoeffProvenance {
    ClosedForm,
    /// Second-order BVP on `grid`, `2 grid` and `4 grid` cells, extrapolated.
    Bvp {
        grid: usize,
        /// Largest change of a coefficient under the extrapolation.
        richardson_change: f64,
        /// Relative drift of the discrete Wronskian.
        wronskian_drift: f64,
        /// Relative difference of the two end-point expressions for `M_eff`.
        m_eff_mismatch: f64,
    },
}

const TOUCH: f64 = 1e-14;

/// `psi_eps: [-2, 2] -> [-1-eps, 1+eps]`, `eps x` on the membrane and a shift outside.
pub fn psi_eps(x: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(x.abs() <= 2.0 + TOUCH) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(if x.abs() <= 1.0 { eps * x } else { x - x.signum() * (1.0 - eps) })
}

/// Inverse of [`psi_eps`].
pub fn phi_eps(y: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(y.abs() <= 1.0 + eps + TOUCH) {
        return Err(Error::OutOfDomain(y));
    }
    Ok(if y.abs() <= eps { y / eps } else { y + y.signum() * (1.0 - eps) })
}

/// `psi_eps'` on the region containing `x`.
pub fn psi_eps_prime(region: Region, eps: f64) -> f64 {
    match region {
        Region::Membrane => eps,
        _ => 1.0,
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEps(eps));
    }
    Ok(())
}

/// Which coordinate a [`Grid1D`] lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `]-2, 2[`.
    Reference,
    /// `]-1-eps, 1+eps[`.
    Physical { eps: f64 },
}

/// Cell-centred grid whose edges contain the two membrane interfaces.
#[derive(Debug, Clone)]
pub struct Grid1D {
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub domain: Domain,
    /// Edge indices of the interfaces `x = -1, 1` (resp. `y = -eps, eps`).
    pub interfaces: [usize; 2],
}

impl Grid1D {
    /// `n` uniform cells on each of `[-2,-1]`, `[-1,1]`, `[1,2]`.
    pub fn reference(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::GridMismatch("need at least one cell per subinterval".into()));
        }
        let mut edges = Vec::with_capacity(3 * n + 1);
        for (lo, hi) in [(-2.0, -1.0), (-1.0, 1.0), (1.0, 2.0)] {
            for k in 0..n {
                edges.push(lo + (hi - lo) * k as f64 / n as f64);
            }
        }
        edges.push(2.0);
        Self::from_edges(edges, Domain::Reference)
    }

    /// The image of [`Grid1D::reference`] under `psi_eps`.
    pub fn physical(n: usize, eps: f64) -> Result<Self> {
        let r = Self::reference(n)?;
        let edges = r.edges.iter().map(|&x| psi_eps(x, eps)).collect::<Result<Vec<_>>>()?;
        Self::from_edges(edges, Domain::Physical { eps })
    }

    pub fn from_edges(edges: Vec<f64>, domain: Domain) -> Result<Self> {
        if edges.len() < 4 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("edges must be strictly increasing".into()));
        }
        let m = match domain {
            Domain::Reference => 1.0,
            Domain::Physical { eps } => eps,
        };
        let find = |v: f64| {
            edges
                .iter()
                .position(|&e| (e - v).abs() <= 1e-12)
                .ok_or_else(|| Error::GridMismatch(format!("no edge at {v}")))
        };
        let interfaces = [find(-m)?, find(m)?];
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            edges,
            centers,
            domain,
            interfaces,
        })
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn region(&self, i: usize) -> Region {
        if i < self.interfaces[0] {
            Region::Left
        } else if i < self.interfaces[1] {
            Region::Membrane
        } else {
            Region::Right
        }
    }

    /// Reference coordinate of cell centre `i`.
    pub fn reference_center(&self, i: usize) -> f64 {
        match self.domain {
            Domain::Reference => self.centers[i],
            Domain::Physical { eps } => phi_eps(self.centers[i], eps).expect("centre inside the domain"),
        }
    }
}

#[cfg(test)]
mod tests;
