//! Mass-action kinetics with cosh dissipation: the four-species system
//! `A + B <-> D`, `A + D <-> C` with a fast unstable species `D`, its reduction
//! to the ternary reaction `2A + B <-> C`, and general detailed-balance networks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gradsys::{cstar, cstar_conj, cstar_prime, BoltzmannEnergy, DualDissipation, GradientSystem, Space};
use crate::linalg::{null_space, pinv, range_basis, Matrix, Vector};
use crate::saddle::{minimize_convex, MinimizeOptions, Objective};
use crate::slowfast::SlowFastSystem;

pub use crate::gradsys::lambda_b;

/// `C*(zeta) = 4 cosh(zeta/2) - 4`.
pub fn cstar_fn(zeta: f64) -> f64 {
    cstar(zeta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourSpeciesConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub c_star: f64,
    /// Rescaled equilibrium of the fast species, `d_eps = eps w_star`.
    pub w_star: f64,
}

impl FourSpeciesConfig {
    pub fn new(kappa1: f64, kappa2: f64, a_star: f64, b_star: f64, c_star: f64, w_star: f64) -> Result<Self> {
        let cfg = Self {
            kappa1,
            kappa2,
            a_star,
            b_star,
            c_star,
            w_star,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa1, self.kappa2, self.a_star, self.b_star, self.c_star, self.w_star];
        if all.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Invalid("reaction coefficients and equilibria must be positive".into()));
        }
        Ok(())
    }

    pub fn slow_equilibrium(&self) -> Vector {
        Vector::from_row_slice(&[self.a_star, self.b_star, self.c_star])
    }
}

impl Default for FourSpeciesConfig {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 2.0,
            a_star: 1.0,
            b_star: 0.5,
            c_star: 2.0,
            w_star: 1.0,
        }
    }
}

/// Densities `(a, b, c, d)` of the four-species system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationState {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ConcentrationState {
    /// `(U, w)` with `d = eps w`.
    pub fn from_slow_fast(big_u: &Vector, w: f64, eps: f64) -> Self {
        Self {
            a: big_u[0],
            b: big_u[1],
            c: big_u[2],
            d: eps * w,
        }
    }

    pub fn to_vector(self) -> Vector {
        Vector::from_row_slice(&[self.a, self.b, self.c, self.d])
    }

    fn check(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d].iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Domain(format!("densities {self:?}")));
        }
        Ok(())
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    Ok(())
}

fn check_slow(big_u: &Vector) -> Result<()> {
    if big_u.len() != 3 {
        return Err(Error::Dimension { expected: 3, got: big_u.len() });
    }
    if big_u.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("slow densities {}", big_u.transpose())));
    }
    Ok(())
}

/// Stoichiometric vectors `(1, 1, 0, -1)` and `(1, 0, -1, 1)`.
pub fn four_species_stoichiometry() -> Matrix {
    Matrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, -1.0, -1.0, 1.0])
}

/// Mass-action rates of `(a, b, c, d)`.
pub fn rre_rhs(cfg: &FourSpeciesConfig, eps: f64, s: &ConcentrationState) -> Result<Vector> {
    check_eps(eps)?;
    s.check()?;
    let d_eps = eps * cfg.w_star;
    let r1 = cfg.kappa1 * (s.d / d_eps - s.a * s.b / (cfg.a_star * cfg.b_star));
    let r2 = cfg.kappa2 * (s.c / cfg.c_star - s.a * s.d / (cfg.a_star * d_eps));
    Ok(four_species_stoichiometry() * Vector::from_row_slice(&[r1, r2]))
}

/// Cosh dual dissipation in the original `(a, b, c, d)` coordinates.
pub fn cosh_dual_r(cfg: &FourSpeciesConfig, eps: f64, s: &ConcentrationState, xi: &Vector) -> Result<f64> {
    check_eps(eps)?;
    s.check()?;
    if xi.len() != 4 {
        return Err(Error::Dimension { expected: 4, got: xi.len() });
    }
    let d_eps = eps * cfg.w_star;
    let g1 = cfg.kappa1 * (s.a * s.b * s.d / (cfg.a_star * cfg.b_star * d_eps)).sqrt();
    let g2 = cfg.kappa2 * (s.a * s.c * s.d / (cfg.a_star * cfg.c_star * d_eps)).sqrt();
    Ok(g1 * cstar(xi[0] + xi[1] - xi[3]) + g2 * cstar(xi[0] - xi[2] + xi[3]))
}

/// Entropy `E_eps` on `(a, b, c, d)`.
pub fn four_species_entropy(cfg: &FourSpeciesConfig, eps: f64) -> Result<BoltzmannEnergy> {
    check_eps(eps)?;
    BoltzmannEnergy::new(Vector::from_row_slice(&[cfg.a_star, cfg.b_star, cfg.c_star, eps * cfg.w_star]))
}

/// `W(g, h, rho) = ((g + h)^2 + g h C*(rho) / 2)^{1/2}`.
pub fn w_function(g: f64, h: f64, rho: f64) -> f64 {
    ((g + h).powi(2) + 0.5 * g * h * cstar(rho)).sqrt()
}

/// `inf_zeta g C*(zeta) + h C*(rho - zeta) = 4 W - 4 (g + h)`.
pub fn w_infimum(g: f64, h: f64, rho: f64) -> f64 {
    let w = w_function(g, h, rho);
    let s = w + g + h;
    if s == 0.0 {
        return 0.0;
    }
    // 4 (W^2 - (g+h)^2) / (W + g + h) without cancellation.
    2.0 * g * h * cstar(rho) / s
}

/// `kappa_1 kappa_2 a_* / (kappa_1 a_* + kappa_2 a)`.
pub fn kappa_eff(cfg: &FourSpeciesConfig, a: f64) -> f64 {
    cfg.kappa1 * cfg.kappa2 * cfg.a_star / (cfg.kappa1 * cfg.a_star + cfg.kappa2 * a)
}

/// Fast steady state `w` of the last row of the slow-fast system.
pub fn fast_ness_w(cfg: &FourSpeciesConfig, big_u: &Vector) -> Result<f64> {
    check_slow(big_u)?;
    let (a, b, c) = (big_u[0], big_u[1], big_u[2]);
    let num = cfg.kappa1 * a * b / (cfg.a_star * cfg.b_star) + cfg.kappa2 * c / cfg.c_star;
    Ok(cfg.w_star * num / (cfg.kappa1 + cfg.kappa2 * a / cfg.a_star))
}

/// Hatted slow densities `(a/a_*, b/b_*, c/c_*)`.
fn hats(cfg: &FourSpeciesConfig, big_u: &Vector) -> (f64, f64, f64) {
    (big_u[0] / cfg.a_star, big_u[1] / cfg.b_star, big_u[2] / cfg.c_star)
}

/// Rates of the ternary reaction `2A + B <-> C`.
pub fn reduced_ternary_rhs(cfg: &FourSpeciesConfig, big_u: &Vector) -> Result<Vector> {
    check_slow(big_u)?;
    let (a, b, c) = hats(cfg, big_u);
    let r = kappa_eff(cfg, big_u[0]) * (c - a * a * b);
    Ok(Vector::from_row_slice(&[2.0 * r, r, -r]))
}

/// Closed-form `B_red(U, Xi)`.
pub fn bred_explicit(cfg: &FourSpeciesConfig, big_u: &Vector, xi: &Vector) -> Result<f64> {
    check_slow(big_u)?;
    let k = kappa_eff(cfg, big_u[0]);
    let (a, b, c) = hats(cfg, big_u);
    let rho = 2.0 * xi[0] + xi[1] - xi[2];
    let gap = (a * a * b).sqrt() - c.sqrt();
    Ok(k * (a * a * b * c).sqrt() * cstar(rho) - 2.0 * k * gap * gap)
}

/// `R*_eff(U, Xi) = kappa_eff(a) (a^2 b c / (a_*^2 b_* c_*))^{1/2} C*(2 xi_1 + xi_2 - xi_3)`.
pub fn effective_cosh_r(cfg: &FourSpeciesConfig, big_u: &Vector, xi: &Vector) -> Result<f64> {
    check_slow(big_u)?;
    let (a, b, c) = hats(cfg, big_u);
    Ok(kappa_eff(cfg, big_u[0]) * (a * a * b * c).sqrt() * cstar(2.0 * xi[0] + xi[1] - xi[2]))
}

/// One reversible reaction `alpha <-> beta` with rate coefficient `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub mu: f64,
}

/// Detailed-balance mass-action network with rates written relative to `c_star`.
#[derive(Debug, Clone)]
pub struct ReactionNetwork {
    pub reactions: Vec<Reaction>,
    pub c_star: Vector,
    gamma: Matrix,
}

impl ReactionNetwork {
    pub fn new(reactions: Vec<Reaction>, c_star: Vector) -> Result<Self> {
        let n = c_star.len();
        if c_star.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Invalid("equilibrium must be positive".into()));
        }
        for r in &reactions {
            if r.alpha.len() != n || r.beta.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.alpha.len().min(r.beta.len()),
                });
            }
            if !(r.mu > 0.0 && r.mu.is_finite()) {
                return Err(Error::Invalid("rate coefficients must be positive".into()));
            }
        }
        let mut gamma = Matrix::zeros(n, reactions.len());
        for (j, r) in reactions.iter().enumerate() {
            for i in 0..n {
                gamma[(i, j)] = r.alpha[i] as f64 - r.beta[i] as f64;
            }
        }
        Ok(Self { reactions, c_star, gamma })
    }

    pub fn species(&self) -> usize {
        self.c_star.len()
    }

    /// Columns `alpha^r - beta^r`.
    pub fn stoichiometry(&self) -> &Matrix {
        &self.gamma
    }

    /// Orthonormal basis of the linear conserved quantities.
    pub fn conserved_quantities(&self) -> Matrix {
        null_space(&self.gamma.transpose())
    }

    pub fn entropy(&self) -> BoltzmannEnergy {
        BoltzmannEnergy::new(self.c_star.clone()).expect("validated equilibrium")
    }

    fn check_state(&self, c: &Vector) -> Result<()> {
        if c.len() != self.species() {
            return Err(Error::Dimension {
                expected: self.species(),
                got: c.len(),
            });
        }
        if c.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Domain(format!("densities {}", c.transpose())));
        }
        Ok(())
    }

    fn monomial(&self, c: &Vector, powers: &[u32]) -> f64 {
        powers
            .iter()
            .enumerate()
            .map(|(i, &p)| (c[i] / self.c_star[i]).powi(p as i32))
            .product()
    }

    /// `mu_r (c^alpha c^beta)^{1/2}` in hatted densities.
    pub fn weights(&self, c: &Vector) -> Result<Vector> {
        self.check_state(c)?;
        Ok(Vector::from_iterator(
            self.reactions.len(),
            self.reactions
                .iter()
                .map(|r| r.mu * (self.monomial(c, &r.alpha) * self.monomial(c, &r.beta)).sqrt()),
        ))
    }

    fn edge_forces(&self, xi: &Vector) -> Vector {
        self.gamma.transpose() * xi
    }
}

/// Mass-action rates `sum_r mu_r (c^beta - c^alpha) (alpha - beta)` in hatted densities.
pub fn general_mass_action_rhs(net: &ReactionNetwork, c: &Vector) -> Result<Vector> {
    mass_action_rhs_at(net, c, &net.c_star, 1.0)
}

/// Mass-action rates with a local equilibrium `c_star` and all `mu_r` scaled by `scale`.
pub fn mass_action_rhs_at(net: &ReactionNetwork, c: &Vector, c_star: &Vector, scale: f64) -> Result<Vector> {
    net.check_state(c)?;
    if c_star.len() != net.species() {
        return Err(Error::Dimension {
            expected: net.species(),
            got: c_star.len(),
        });
    }
    let monomial = |powers: &[u32]| -> f64 {
        powers
            .iter()
            .enumerate()
            .map(|(i, &p)| (c[i] / c_star[i]).powi(p as i32))
            .product()
    };
    let fluxes = Vector::from_iterator(
        net.reactions.len(),
        net.reactions
            .iter()
            .map(|r| scale * r.mu * (monomial(&r.beta) - monomial(&r.alpha))),
    );
    Ok(&net.gamma * fluxes)
}

pub fn general_cosh_dual(net: &ReactionNetwork, c: &Vector, xi: &Vector) -> Result<f64> {
    net.dual_value(c, xi)
}

impl DualDissipation for ReactionNetwork {
    fn dim(&self) -> usize {
        self.species()
    }
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        let g = self.weights(u)?;
        let z = self.edge_forces(xi);
        Ok(g.iter().zip(z.iter()).map(|(g, z)| g * cstar(*z)).sum())
    }
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        let g = self.weights(u)?;
        let z = self.edge_forces(xi);
        let j = Vector::from_iterator(g.len(), g.iter().zip(z.iter()).map(|(g, z)| g * cstar_prime(*z)));
        Ok(&self.gamma * j)
    }
    fn dual_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        let g = self.weights(u)?;
        let z = self.edge_forces(xi);
        let d = Vector::from_iterator(g.len(), g.iter().zip(z.iter()).map(|(g, z)| g * (z / 2.0).cosh()));
        Ok(&self.gamma * Matrix::from_diagonal(&d) * self.gamma.transpose())
    }
    fn primal_value(&self, u: &Vector, v: &Vector) -> Result<f64> {
        let g = self.weights(u)?;
        let Some(j) = self.edge_flux(&g, v)? else {
            return Ok(f64::INFINITY);
        };
        Ok(edge_primal(&g, &j))
    }
    fn primal_force(&self, u: &Vector, v: &Vector) -> Result<Vector> {
        let g = self.weights(u)?;
        let j = self.edge_flux(&g, v)?.ok_or(Error::Domain("velocity outside the reaction range".into()))?;
        let z = Vector::from_iterator(
            g.len(),
            g.iter().zip(j.iter()).map(|(g, j)| 2.0 * (j / (2.0 * g)).asinh()),
        );
        Ok(pinv(&self.gamma.transpose()) * z)
    }
    fn has_primal(&self) -> bool {
        true
    }
    fn velocity_range(&self, _u: &Vector) -> Option<Matrix> {
        Some(range_basis(&self.gamma))
    }
    fn state_independent(&self) -> bool {
        false
    }
    fn strictly_convex(&self) -> bool {
        false
    }
}

/// `sum_r g_r C(j_r / g_r)`, infinite where a weight vanishes under a nonzero flux.
fn edge_primal(g: &Vector, j: &Vector) -> f64 {
    g.iter()
        .zip(j.iter())
        .map(|(&g, &j)| {
            if g > 0.0 {
                g * cstar_conj(j / g)
            } else if j == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

impl ReactionNetwork {
    /// Optimal edge fluxes `j` with `Gamma j = v`, or `None` off the range.
    fn edge_flux(&self, g: &Vector, v: &Vector) -> Result<Option<Vector>> {
        let j0 = pinv(&self.gamma) * v;
        if (&self.gamma * &j0 - v).amax() > 1e-10 * (1.0 + v.amax()) {
            return Ok(None);
        }
        let kernel = null_space(&self.gamma);
        if kernel.ncols() == 0 {
            return Ok(Some(j0));
        }
        let f = Objective::new(|s: &Vector| edge_primal(g, &(&j0 + &kernel * s)));
        let opts = MinimizeOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let m = minimize_convex(&f, None, &Vector::zeros(kernel.ncols()), &opts)?;
        Ok(Some(&j0 + &kernel * m.x))
    }
}

/// `R_bar*` of the four-species system in `(a, b, c, w)` with `d = eps w`.
pub fn four_species_network(cfg: &FourSpeciesConfig) -> Result<ReactionNetwork> {
    cfg.validate()?;
    ReactionNetwork::new(
        vec![
            Reaction {
                alpha: vec![1, 1, 0, 0],
                beta: vec![0, 0, 0, 1],
                mu: cfg.kappa1,
            },
            Reaction {
                alpha: vec![1, 0, 0, 1],
                beta: vec![0, 0, 1, 0],
                mu: cfg.kappa2,
            },
        ],
        Vector::from_row_slice(&[cfg.a_star, cfg.b_star, cfg.c_star, cfg.w_star]),
    )
}

/// Slow `(a, b, c)`, fast `w`, entropies `E`, `e` and the product dissipation.
pub fn to_slow_fast(cfg: &FourSpeciesConfig) -> Result<SlowFastSystem> {
    SlowFastSystem::product(
        Space::positive(3, "X_slow"),
        Space::positive(1, "X_fast"),
        Arc::new(BoltzmannEnergy::new(cfg.slow_equilibrium())?),
        Arc::new(BoltzmannEnergy::new(Vector::from_element(1, cfg.w_star))?),
        Arc::new(four_species_network(cfg)?),
    )
}

/// The effective cosh dissipation of the ternary reaction.
#[derive(Debug, Clone)]
pub struct TernaryCoshDual {
    pub cfg: FourSpeciesConfig,
}

impl TernaryCoshDual {
    const GAMMA: [f64; 3] = [2.0, 1.0, -1.0];

    fn gamma() -> Vector {
        Vector::from_row_slice(&Self::GAMMA)
    }

    fn weight(&self, u: &Vector) -> Result<f64> {
        check_slow(u)?;
        let (a, b, c) = hats(&self.cfg, u);
        Ok(kappa_eff(&self.cfg, u[0]) * (a * a * b * c).sqrt())
    }
}

impl DualDissipation for TernaryCoshDual {
    fn dim(&self) -> usize {
        3
    }
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        Ok(self.weight(u)? * cstar(Self::gamma().dot(xi)))
    }
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(Self::gamma() * (self.weight(u)? * cstar_prime(Self::gamma().dot(xi))))
    }
    fn dual_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        let g = Self::gamma();
        Ok(&g * g.transpose() * (self.weight(u)? * (g.dot(xi) / 2.0).cosh()))
    }
    fn primal_value(&self, u: &Vector, v: &Vector) -> Result<f64> {
        let g = Self::gamma();
        let j = g.dot(v) / g.norm_squared();
        if (&g * j - v).amax() > 1e-10 * (1.0 + v.amax()) {
            return Ok(f64::INFINITY);
        }
        Ok(edge_primal(&Vector::from_element(1, self.weight(u)?), &Vector::from_element(1, j)))
    }
    fn primal_force(&self, u: &Vector, v: &Vector) -> Result<Vector> {
        let g = Self::gamma();
        let j = g.dot(v) / g.norm_squared();
        let z = 2.0 * (j / (2.0 * self.weight(u)?)).asinh();
        Ok(g * (z / Self::gamma().norm_squared()))
    }
    fn has_primal(&self) -> bool {
        true
    }
    fn velocity_range(&self, _u: &Vector) -> Option<Matrix> {
        let g = Self::gamma();
        Some(Matrix::from_column_slice(3, 1, (g.clone() / g.norm()).as_slice()))
    }
    fn state_independent(&self) -> bool {
        false
    }
    fn strictly_convex(&self) -> bool {
        false
    }
}

/// `(X_slow, E, R_eff)` for the ternary reaction.
pub fn effective_gs(cfg: &FourSpeciesConfig) -> Result<GradientSystem> {
    GradientSystem::new(
        Space::positive(3, "X_slow"),
        Arc::new(BoltzmannEnergy::new(cfg.slow_equilibrium())?),
        Arc::new(TernaryCoshDual { cfg: *cfg }),
    )
}

#[cfg(test)]
mod tests;
