use super::profile::MembraneProfile;
use super::{psi_eps_prime, Domain, Grid1D};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::reactions::{mass_action_rhs_at, Reaction, ReactionNetwork};

/// Cellwise coefficients of `c_i' = div(K_i c*_i grad(c_i / c*_i)) + reactions`.
#[derive(Debug, Clone)]
pub struct RdCoefficients {
    /// `K_i` per cell and species.
    pub diffusion: Vec<Vector>,
    pub c_star: Vec<Vector>,
    /// Factor applied to every `mu_r` in a cell.
    pub reaction_scale: Vec<f64>,
}

impl RdCoefficients {
    /// Single species with sorption `A <-> 0`: `c* = 1 / A`, rate `B / A^{1/2}`,
    /// in the coordinates of `grid` (the `eps`-scaled coefficients on a physical grid).
    pub fn sorption(profile: &MembraneProfile, grid: &Grid1D) -> Result<Self> {
        profile.require_scalar()?;
        let mut out = Self {
            diffusion: Vec::new(),
            c_star: Vec::new(),
            reaction_scale: Vec::new(),
        };
        for i in 0..grid.cells() {
            let region = grid.region(i);
            let x = grid.reference_center(i);
            let jac = match grid.domain {
                Domain::Reference => 1.0,
                Domain::Physical { eps } => psi_eps_prime(region, eps),
            };
            let a = profile.a_scalar(region, x);
            out.diffusion.push(Vector::from_element(1, profile.k_scalar(region, x) * jac));
            out.c_star.push(Vector::from_element(1, 1.0 / a));
            out.reaction_scale.push(profile.b_bar.eval_in(region, x) / jac / a.sqrt());
        }
        Ok(out)
    }
}

/// `A <-> 0` with unit rate.
pub fn sorption_network() -> ReactionNetwork {
    ReactionNetwork::new(
        vec![Reaction {
            alpha: vec![1],
            beta: vec![0],
            mu: 1.0,
        }],
        Vector::from_element(1, 1.0),
    )
    .expect("valid single-species network")
}

/// Finite-volume reaction-diffusion rates with no-flux ends. Face
/// transmissibilities are harmonic means of `K c*` over the two half cells.
pub fn rd_pde_rhs(c: &[Vector], coeffs: &RdCoefficients, net: &ReactionNetwork, grid: &Grid1D) -> Result<Vec<Vector>> {
    let n = grid.cells();
    let s = net.species();
    for len in [c.len(), coeffs.diffusion.len(), coeffs.c_star.len(), coeffs.reaction_scale.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let mut out = c
        .iter()
        .zip(&coeffs.c_star)
        .zip(&coeffs.reaction_scale)
        .map(|((ci, si), &scale)| mass_action_rhs_at(net, ci, si, scale))
        .collect::<Result<Vec<_>>>()?;
    for f in 0..n - 1 {
        let (i, j) = (f, f + 1);
        for k in 0..s {
            let ri = 0.5 * grid.width(i) / (coeffs.diffusion[i][k] * coeffs.c_star[i][k]);
            let rj = 0.5 * grid.width(j) / (coeffs.diffusion[j][k] * coeffs.c_star[j][k]);
            let flux = -(c[j][k] / coeffs.c_star[j][k] - c[i][k] / coeffs.c_star[i][k]) / (ri + rj);
            out[i][k] -= flux / grid.width(i);
            out[j][k] += flux / grid.width(j);
        }
    }
    Ok(out)
}
