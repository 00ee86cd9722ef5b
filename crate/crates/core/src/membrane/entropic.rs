//! Entropic (Otto) and sorption structures on node-based grids, the closed-form
//! membrane saddle value and the effective slow systems.

use std::sync::Arc;

use super::linear::transmission_hk;
use super::profile::{MembraneProfile, Region};
use super::{Domain, Grid1D, TransmissionCoeffs};
use crate::error::{Error, Result};
use crate::gradsys::{
    cstar, cstar_prime, DualDissipation, Energy, GradientSystem, QuadraticDual, QuadraticEnergy, Space, POSITIVITY_FLOOR,
};
use crate::linalg::{null_space, Matrix, Vector};
use crate::numerics::adaptive_simpson;
use crate::slowfast::{PortCoupling, SlowFastSystem};

const QUAD_TOL: f64 = 1e-10;

/// `K_eff = (int_{-1}^{1} A_bar / K_bar)^{-1}`.
pub fn otto_keff(profile: &MembraneProfile) -> Result<f64> {
    profile.require_scalar()?;
    let r = adaptive_simpson(
        &|x| profile.a_scalar(Region::Membrane, x) / profile.k_scalar(Region::Membrane, x),
        -1.0,
        1.0,
        QUAD_TOL,
    );
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::SingularCoefficient("int A_bar / K_bar".into()));
    }
    Ok(1.0 / r)
}

/// `K_eff sqrt(a- w- a+ w+) C*(zeta+ - zeta-) - 2 K_eff (sqrt(a+ w+) - sqrt(a- w-))^2`
/// with `a-+` the membrane-side limits of `A_bar`.
pub fn membrane_saddle_value(w_minus: f64, w_plus: f64, zeta_minus: f64, zeta_plus: f64, profile: &MembraneProfile) -> Result<f64> {
    if !(w_minus > 0.0 && w_plus > 0.0) {
        return Err(Error::Domain(format!("boundary densities ({w_minus}, {w_plus})")));
    }
    let k = otto_keff(profile)?;
    let (am, ap) = profile.a_membrane_ends();
    let (vm, vp) = (am * w_minus, ap * w_plus);
    let d = vp.sqrt() - vm.sqrt();
    Ok(k * (vm * vp).sqrt() * cstar(zeta_plus - zeta_minus) - 2.0 * k * d * d)
}

/// Physical coefficient `K_eps` and `A_eps` in cell `i` of a grid.
fn cell_coefficients(profile: &MembraneProfile, grid: &Grid1D, i: usize) -> (f64, f64) {
    let region = grid.region(i);
    let x = grid.reference_center(i);
    let scale = match grid.domain {
        Domain::Reference => 1.0,
        Domain::Physical { eps } => super::psi_eps_prime(region, eps),
    };
    (profile.k_scalar(region, x) * scale, profile.a_scalar(region, x))
}

/// Face transmissibilities `(sum over half cells of width / coefficient)^{-1}`.
fn transmissibilities(grid: &Grid1D, coeff: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..grid.cells() - 1)
        .map(|i| 1.0 / (0.5 * grid.width(i) / coeff(i) + 0.5 * grid.width(i + 1) / coeff(i + 1)))
        .collect()
}

/// Cell-centred `int (K/2) |xi'|^2 u`. Faces use the arithmetic mean of `u`.
pub fn otto_dual_r(u: &[f64], xi: &[f64], profile: &MembraneProfile, grid: &Grid1D) -> Result<f64> {
    profile.require_scalar()?;
    check_fields(grid, &[u.len(), xi.len()])?;
    let t = transmissibilities(grid, |i| cell_coefficients(profile, grid, i).0);
    Ok(t.iter()
        .enumerate()
        .map(|(f, tf)| {
            let d = xi[f + 1] - xi[f];
            0.25 * tf * (u[f] + u[f + 1]) * d * d
        })
        .sum())
}

/// Slope `int (K/2) u |(log A u)'|^2` written as `int (2K/A) |(sqrt(A u))'|^2`,
/// which stays finite where `u` vanishes.
pub fn otto_slope(u: &[f64], profile: &MembraneProfile, grid: &Grid1D) -> Result<f64> {
    profile.require_scalar()?;
    check_fields(grid, &[u.len()])?;
    if u.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("negative density".into()));
    }
    let t = transmissibilities(grid, |i| {
        let (k, a) = cell_coefficients(profile, grid, i);
        k / a
    });
    let root: Vec<f64> = (0..grid.cells())
        .map(|i| (cell_coefficients(profile, grid, i).1 * u[i]).sqrt())
        .collect();
    Ok(t.iter()
        .enumerate()
        .map(|(f, tf)| {
            let d = root[f + 1] - root[f];
            2.0 * tf * d * d
        })
        .sum())
}

fn check_fields(grid: &Grid1D, lens: &[usize]) -> Result<()> {
    for &l in lens {
        if l != grid.cells() {
            return Err(Error::Dimension {
                expected: grid.cells(),
                got: l,
            });
        }
    }
    Ok(())
}

/// Lumped-mass nodal grid on one or more disjoint pieces. Coefficients at a
/// piece's end nodes are the one-sided limits from inside the piece.
#[derive(Debug, Clone)]
pub struct NodeGrid {
    pub nodes: Vec<f64>,
    pub mass: Vec<f64>,
    /// `A_bar` at the nodes, `species x species`.
    pub a: Vec<Matrix>,
    pub b: Vec<f64>,
    /// `(i, j, C)` with `C = (int_{x_i}^{x_j} K_bar^{-1})^{-1}`.
    pub faces: Vec<(usize, usize, Matrix)>,
}

impl NodeGrid {
    pub fn piece(profile: &MembraneProfile, region: Region, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridMismatch("need at least two cells per piece".into()));
        }
        let h = (hi - lo) / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|k| if k == n { hi } else { lo + h * k as f64 }).collect();
        let mass = (0..=n).map(|k| if k == 0 || k == n { 0.5 * h } else { h }).collect();
        let a = nodes.iter().map(|&x| profile.a_bar.eval_in(region, x)).collect();
        let b = nodes.iter().map(|&x| profile.b_bar.eval_in(region, x)).collect();
        let s = profile.species();
        let mut faces = Vec::with_capacity(n);
        for k in 0..n {
            let (x0, x1) = (nodes[k], nodes[k + 1]);
            let r = if s == 1 {
                Matrix::from_element(
                    1,
                    1,
                    adaptive_simpson(&|x| 1.0 / profile.k_scalar(region, x), x0, x1, QUAD_TOL * h),
                )
            } else {
                let mut r = Matrix::zeros(s, s);
                for p in 0..s {
                    for q in 0..s {
                        r[(p, q)] = adaptive_simpson(
                            &|x| {
                                profile
                                    .k_bar
                                    .eval_in(region, x)
                                    .try_inverse()
                                    .map_or(f64::NAN, |m| m[(p, q)])
                            },
                            x0,
                            x1,
                            QUAD_TOL * h,
                        );
                    }
                }
                r
            };
            let c = r
                .try_inverse()
                .filter(|c| c.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::SingularCoefficient(format!("K_bar on [{x0}, {x1}]")))?;
            faces.push((k, k + 1, c));
        }
        Ok(Self {
            nodes,
            mass,
            a,
            b,
            faces,
        })
    }

    /// Disjoint union; indices of `other` are shifted.
    pub fn concat(mut self, other: NodeGrid) -> Self {
        let off = self.nodes.len();
        self.nodes.extend(other.nodes);
        self.mass.extend(other.mass);
        self.a.extend(other.a);
        self.b.extend(other.b);
        self.faces.extend(other.faces.into_iter().map(|(i, j, c)| (i + off, j + off, c)));
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn a_scalar(&self) -> Vec<f64> {
        self.a.iter().map(|m| m[(0, 0)]).collect()
    }

    /// `Omega_slow`: `n` cells on each side; interface nodes are `n` and `n + 1`.
    pub fn slow(profile: &MembraneProfile, n: usize) -> Result<(Self, usize, usize)> {
        let left = Self::piece(profile, Region::Left, -2.0, -1.0, n)?;
        let right = Self::piece(profile, Region::Right, 1.0, 2.0, n)?;
        Ok((left.concat(right), n, n + 1))
    }
}

/// Relative Boltzmann entropy `sum m_j lambda_B(A_j u_j) / A_j` on a nodal grid.
#[derive(Debug, Clone)]
pub struct NodeBoltzmannEnergy {
    pub mass: Vec<f64>,
    pub a: Vec<f64>,
}

impl NodeBoltzmannEnergy {
    pub fn new(grid: &NodeGrid) -> Self {
        Self {
            mass: grid.mass.clone(),
            a: grid.a_scalar(),
        }
    }
}

impl Energy for NodeBoltzmannEnergy {
    fn dim(&self) -> usize {
        self.mass.len()
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        let mut s = 0.0;
        for j in 0..self.dim() {
            s += self.mass[j] * crate::gradsys::lambda_b(self.a[j] * u[j])? / self.a[j];
        }
        Ok(s)
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        if u.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Domain("negative density".into()));
        }
        Ok(Vector::from_fn(self.dim(), |j, _| {
            self.mass[j] * (self.a[j] * u[j].max(POSITIVITY_FLOOR)).ln()
        }))
    }
    fn hessian(&self, u: &Vector) -> Result<Matrix> {
        Ok(Matrix::from_diagonal(&Vector::from_fn(self.dim(), |j, _| {
            self.mass[j] / u[j].max(POSITIVITY_FLOOR)
        })))
    }
    fn in_domain(&self, u: &Vector) -> bool {
        u.len() == self.dim() && u.iter().all(|&x| x > 0.0 && x.is_finite())
    }
    fn equilibrium(&self) -> Option<Vector> {
        Some(Vector::from_iterator(self.dim(), self.a.iter().map(|a| 1.0 / a)))
    }
}

/// Two-point cosh kinetics between nodes `left` and `right`:
/// `m_eff sqrt(a- u_L a+ u_R) C*(xi_R - xi_L) + m- sqrt(a- u_L) C*(xi_L) + m+ sqrt(a+ u_R) C*(xi_R)`
/// in point values `xi = Xi / m`.
#[derive(Debug, Clone)]
pub struct InterfaceKinetics {
    pub left: usize,
    pub right: usize,
    pub m_eff: f64,
    pub m_minus: f64,
    pub m_plus: f64,
    pub a_minus: f64,
    pub a_plus: f64,
}

/// `R*(u, Xi) = sum_f 1/2 C_f u_f (xi_j - xi_i)^2 + sum_j m_j B_j sqrt(u_j) C*(xi_j)`
/// plus optional interface kinetics, with nodal point values `xi = Xi / m`.
#[derive(Debug, Clone)]
pub struct NodeEntropicDual {
    pub mass: Vec<f64>,
    pub faces: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub interface: Option<InterfaceKinetics>,
}

impl NodeEntropicDual {
    pub fn new(grid: &NodeGrid, sorption: bool, interface: Option<InterfaceKinetics>) -> Self {
        Self {
            mass: grid.mass.clone(),
            faces: grid.faces.iter().map(|(i, j, c)| (*i, *j, c[(0, 0)])).collect(),
            b: if sorption { grid.b.clone() } else { vec![0.0; grid.len()] },
            interface,
        }
    }

    fn hat(&self, xi: &Vector) -> Vec<f64> {
        (0..xi.len()).map(|j| xi[j] / self.mass[j]).collect()
    }

    fn check(&self, u: &Vector, xi: &Vector) -> Result<()> {
        let n = self.mass.len();
        for l in [u.len(), xi.len()] {
            if l != n {
                return Err(Error::Dimension { expected: n, got: l });
            }
        }
        if u.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain("negative density".into()));
        }
        Ok(())
    }

    /// Value, gradient and Hessian in the point values.
    fn eval(&self, u: &Vector, xi: &Vector, want_hessian: bool) -> (f64, Vec<f64>, Option<Matrix>) {
        let n = self.mass.len();
        let x = self.hat(xi);
        let mut val = 0.0;
        let mut g = vec![0.0; n];
        let mut h = want_hessian.then(|| Matrix::zeros(n, n));
        for &(i, j, c) in &self.faces {
            let w = 0.5 * c * (u[i] + u[j]);
            let d = x[j] - x[i];
            val += 0.5 * w * d * d;
            g[j] += w * d;
            g[i] -= w * d;
            if let Some(h) = h.as_mut() {
                h[(i, i)] += w;
                h[(j, j)] += w;
                h[(i, j)] -= w;
                h[(j, i)] -= w;
            }
        }
        for j in 0..n {
            if self.b[j] > 0.0 {
                let w = self.mass[j] * self.b[j] * u[j].sqrt();
                val += w * cstar(x[j]);
                g[j] += w * cstar_prime(x[j]);
                if let Some(h) = h.as_mut() {
                    h[(j, j)] += w * (x[j] / 2.0).cosh();
                }
            }
        }
        if let Some(k) = &self.interface {
            let (l, r) = (k.left, k.right);
            let vl = k.a_minus * u[l];
            let vr = k.a_plus * u[r];
            let we = k.m_eff * (vl * vr).sqrt();
            let d = x[r] - x[l];
            val += we * cstar(d);
            g[r] += we * cstar_prime(d);
            g[l] -= we * cstar_prime(d);
            let wl = k.m_minus * vl.sqrt();
            let wr = k.m_plus * vr.sqrt();
            val += wl * cstar(x[l]) + wr * cstar(x[r]);
            g[l] += wl * cstar_prime(x[l]);
            g[r] += wr * cstar_prime(x[r]);
            if let Some(h) = h.as_mut() {
                let c = we * (d / 2.0).cosh();
                h[(l, l)] += c + wl * (x[l] / 2.0).cosh();
                h[(r, r)] += c + wr * (x[r] / 2.0).cosh();
                h[(l, r)] -= c;
                h[(r, l)] -= c;
            }
        }
        (val, g, h)
    }

    /// Nodes connected through faces or the interface link, grouped.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.mass.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        let mut links: Vec<(usize, usize)> = self.faces.iter().map(|&(i, j, _)| (i, j)).collect();
        if let Some(k) = &self.interface {
            if k.m_eff > 0.0 {
                links.push((k.left, k.right));
            }
        }
        for (i, j) in links {
            let (a, b) = (root(&mut parent, i), root(&mut parent, j));
            parent[a] = b;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = root(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Components whose dissipation has no reactive term: the velocity conserves their mass.
    fn conserved_components(&self) -> Vec<Vec<usize>> {
        let reactive = |j: usize| {
            self.b[j] > 0.0
                || self.interface.as_ref().is_some_and(|k| {
                    (j == k.left && k.m_minus > 0.0) || (j == k.right && k.m_plus > 0.0)
                })
        };
        self.components().into_iter().filter(|c| !c.iter().any(|&j| reactive(j))).collect()
    }
}

impl NodeEntropicDual {
    /// Maximizer of `<Xi, v> - R*(u, Xi)`, normalized to zero mean on conserved components.
    fn legendre(&self, u: &Vector, v: &Vector) -> Result<Option<(f64, Vector)>> {
        let n = self.mass.len();
        self.check(u, v)?;
        let scale = 1.0 + v.amax();
        let mut kernel = Vec::new();
        for c in self.conserved_components() {
            let mut k = Vector::zeros(n);
            for &j in &c {
                k[j] = self.mass[j];
            }
            if k.dot(v).abs() > 1e-10 * scale * k.sum() {
                return Ok(None);
            }
            kernel.push(k.normalize());
        }
        let phi = |xi: &Vector| xi.dot(v) - self.eval(u, xi, false).0;
        let mut xi = Vector::zeros(n);
        let mut val = phi(&xi);
        for _ in 0..100 {
            let g = v - self.velocity(u, &xi)?;
            if g.amax() <= 1e-13 * scale {
                return Ok(Some((val, xi)));
            }
            let mut h = self.dual_hessian(u, &xi)?;
            for k in &kernel {
                h += k * k.transpose();
            }
            let d = h.lu().solve(&g).ok_or(Error::SingularBlock("primal Newton"))?;
            let mut t = 1.0;
            loop {
                let trial = &xi + &d * t;
                let tv = phi(&trial);
                if tv.is_finite() && tv >= val - 1e-15 * (1.0 + val.abs()) {
                    xi = trial;
                    val = tv;
                    break;
                }
                t *= 0.5;
                if t < 1e-14 {
                    return Err(Error::NoConvergence {
                        iterations: 100,
                        residual: g.amax(),
                    });
                }
            }
        }
        let res = (v - self.velocity(u, &xi)?).amax();
        if res <= 1e-9 * scale {
            return Ok(Some((val, xi)));
        }
        Err(Error::NoConvergence {
            iterations: 100,
            residual: res,
        })
    }
}

impl DualDissipation for NodeEntropicDual {
    fn dim(&self) -> usize {
        self.mass.len()
    }
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        self.check(u, xi)?;
        Ok(self.eval(u, xi, false).0)
    }
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        self.check(u, xi)?;
        let g = self.eval(u, xi, false).1;
        Ok(Vector::from_fn(g.len(), |j, _| g[j] / self.mass[j]))
    }
    fn dual_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        self.check(u, xi)?;
        let h = self.eval(u, xi, true).2.expect("hessian requested");
        Ok(Matrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] / (self.mass[i] * self.mass[j])))
    }
    /// `sup_Xi <Xi, v> - R*(u, Xi)` by damped Newton, `+inf` off the velocity range.
    fn primal_value(&self, u: &Vector, v: &Vector) -> Result<f64> {
        Ok(self.legendre(u, v)?.map_or(f64::INFINITY, |(value, _)| value))
    }
    fn primal_force(&self, u: &Vector, v: &Vector) -> Result<Vector> {
        self.legendre(u, v)?
            .map(|(_, xi)| xi)
            .ok_or_else(|| Error::Domain("velocity outside the range of the dissipation".into()))
    }
    fn has_primal(&self) -> bool {
        true
    }
    fn velocity_range(&self, _u: &Vector) -> Option<Matrix> {
        let comps = self.conserved_components();
        if comps.is_empty() {
            return None;
        }
        let n = self.mass.len();
        let mut rows = Matrix::zeros(comps.len(), n);
        for (r, c) in comps.iter().enumerate() {
            for &j in c {
                rows[(r, j)] = self.mass[j];
            }
        }
        Some(null_space(&rows))
    }
    fn strictly_convex(&self) -> bool {
        self.conserved_components().is_empty()
    }
}

/// Which membrane structure an effective system carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Quadratic,
    Otto,
    Sorption,
}

/// Effective slow system on the nodal grid of `Omega_slow`.
#[derive(Debug, Clone)]
pub struct EffectiveMembrane {
    pub gs: GradientSystem,
    pub grid: NodeGrid,
    pub species: usize,
    /// Interface nodes at `x = -1` and `x = 1`.
    pub interface: (usize, usize),
}

impl EffectiveMembrane {
    /// Flux through the interface in the `+x` direction at state `u`.
    pub fn interface_flux(&self, u: &Vector, profile: &MembraneProfile, coeffs: &TransmissionCoeffs, structure: Structure) -> Result<Vector> {
        let (l, r) = self.interface;
        let s = self.species;
        match structure {
            Structure::Quadratic => {
                let mu = |j: usize| &self.grid.a[j] * u.rows(j * s, s);
                Ok(-(&coeffs.h_k * (mu(r) - mu(l))))
            }
            Structure::Otto | Structure::Sorption => {
                let (am, ap) = profile.a_membrane_ends();
                let (vl, vr) = (am * u[l], ap * u[r]);
                let xl = -(self.grid.a[l][(0, 0)] * u[l]).ln();
                let xr = -(self.grid.a[r][(0, 0)] * u[r]).ln();
                let m_eff = match structure {
                    Structure::Otto => coeffs.k_eff,
                    _ => coeffs.m_eff,
                };
                Ok(Vector::from_element(1, m_eff * (vl * vr).sqrt() * cstar_prime(xr - xl)))
            }
        }
    }
}

/// Effective gradient system on `Omega_slow` with `n` cells per side.
pub fn effective_membrane_gs(
    profile: &MembraneProfile,
    coeffs: &TransmissionCoeffs,
    structure: Structure,
    n: usize,
) -> Result<EffectiveMembrane> {
    let (grid, l, r) = NodeGrid::slow(profile, n)?;
    let s = profile.species();
    let nodes = grid.len();
    let gs = match structure {
        Structure::Quadratic => {
            let d = s * nodes;
            let mut a = Matrix::zeros(d, d);
            for j in 0..nodes {
                a.view_mut((j * s, j * s), (s, s)).copy_from(&(&grid.a[j] * grid.mass[j]));
            }
            let mut k = Matrix::zeros(d, d);
            let mut link = |i: usize, j: usize, c: &Matrix| {
                let (mi, mj) = (grid.mass[i], grid.mass[j]);
                for (p, q, w) in [(i, i, 1.0 / (mi * mi)), (j, j, 1.0 / (mj * mj)), (i, j, -1.0 / (mi * mj)), (j, i, -1.0 / (mi * mj))] {
                    let mut v = k.view_mut((p * s, q * s), (s, s));
                    v += c * w;
                }
            };
            for (i, j, c) in &grid.faces {
                link(*i, *j, c);
            }
            link(l, r, &coeffs.h_k);
            GradientSystem::new(
                Space::euclidean(d, "membrane-effective"),
                Arc::new(QuadraticEnergy::new(a, Vector::zeros(d))?),
                Arc::new(QuadraticDual::new(k)?),
            )?
        }
        Structure::Otto | Structure::Sorption => {
            profile.require_scalar()?;
            let sorption = structure == Structure::Sorption;
            let (a_minus, a_plus) = profile.a_membrane_ends();
            let kinetics = InterfaceKinetics {
                left: l,
                right: r,
                m_eff: if sorption { coeffs.m_eff } else { coeffs.k_eff },
                m_minus: if sorption { coeffs.m_minus } else { 0.0 },
                m_plus: if sorption { coeffs.m_plus } else { 0.0 },
                a_minus,
                a_plus,
            };
            GradientSystem::new(
                Space::positive(nodes, "membrane-effective"),
                Arc::new(NodeBoltzmannEnergy::new(&grid)),
                Arc::new(NodeEntropicDual::new(&grid, sorption, Some(kinetics))),
            )?
        }
    };
    Ok(EffectiveMembrane {
        gs,
        grid,
        species: s,
        interface: (l, r),
    })
}

/// Nodal slow-fast system with the membrane as the fast part, coupled through
/// the interface states `U(+-1) = w(+-1)` and point forces.
#[derive(Debug, Clone)]
pub struct MembraneSlowFast {
    pub sf: SlowFastSystem,
    pub slow_grid: NodeGrid,
    pub fast_grid: NodeGrid,
    pub slow_interface: (usize, usize),
}

pub fn otto_slow_fast(profile: &MembraneProfile, n_slow: usize, n_fast: usize, sorption: bool) -> Result<MembraneSlowFast> {
    profile.require_scalar()?;
    let (slow_grid, l, r) = NodeGrid::slow(profile, n_slow)?;
    let fast_grid = NodeGrid::piece(profile, Region::Membrane, -1.0, 1.0, n_fast)?;
    let ns = slow_grid.len();
    let nf = fast_grid.len();
    let mut p_slow = Matrix::zeros(2, ns);
    p_slow[(0, l)] = 1.0;
    p_slow[(1, r)] = 1.0;
    let mut p_fast = Matrix::zeros(2, nf);
    p_fast[(0, 0)] = 1.0;
    p_fast[(1, nf - 1)] = 1.0;
    let mut p_slow_star = Matrix::zeros(2, ns);
    p_slow_star[(0, l)] = 1.0 / slow_grid.mass[l];
    p_slow_star[(1, r)] = 1.0 / slow_grid.mass[r];
    let mut p_fast_star = Matrix::zeros(2, nf);
    p_fast_star[(0, 0)] = 1.0 / fast_grid.mass[0];
    p_fast_star[(1, nf - 1)] = 1.0 / fast_grid.mass[nf - 1];
    let coupling = PortCoupling {
        r_slow: Arc::new(NodeEntropicDual::new(&slow_grid, sorption, None)),
        r_fast: Arc::new(NodeEntropicDual::new(&fast_grid, sorption, None)),
        p_slow,
        p_fast,
        p_slow_star,
        p_fast_star,
    };
    let sf = SlowFastSystem::port_constrained(
        Space::positive(ns, "membrane-slow"),
        Space::positive(nf, "membrane-fast"),
        Arc::new(NodeBoltzmannEnergy::new(&slow_grid)),
        Arc::new(NodeBoltzmannEnergy::new(&fast_grid)),
        coupling,
    )?;
    Ok(MembraneSlowFast {
        sf,
        slow_grid,
        fast_grid,
        slow_interface: (l, r),
    })
}

/// `H_K`, `K_eff` and the sorption coefficients in one record (BVP route).
pub fn transmission_coeffs(profile: &MembraneProfile, n: usize) -> Result<TransmissionCoeffs> {
    let mut c = super::sorption_coeffs(profile, n)?;
    c.h_k = transmission_hk(profile)?;
    Ok(c)
}
