//! Linear parabolic membrane problem with quadratic energy, on the reference
//! coordinate, and its transmission limit.

use std::sync::Arc;

use super::profile::{MembraneProfile, Region};
use super::{psi_eps_prime, Grid1D};
use crate::error::{Error, Result};
use crate::gradsys::{GradientSystem, QuadraticDual, QuadraticEnergy, Scheme, Space, Trajectory};
use crate::linalg::{solve_block_tridiagonal, Matrix, Vector};
use crate::numerics::adaptive_simpson;

const QUAD_TOL: f64 = 1e-10;

/// Cell-centred finite volumes for `m_i u_i' = sum of face fluxes C_f (mu_j - mu_i)`,
/// `mu_i = A_i u_i`. The state is cell-major with `species` entries per cell.
#[derive(Debug, Clone)]
pub struct LinearFv {
    pub species: usize,
    /// Cell masses (width times the local Jacobian of the coordinate map).
    pub mass: Vec<f64>,
    pub a: Vec<Matrix>,
    /// Face conductances between consecutive cells, `cells - 1` of them.
    pub conductance: Vec<Matrix>,
    /// Reference coordinates of the cell centres.
    pub centers: Vec<f64>,
    /// Reference widths.
    pub widths: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FvOptions {
    pub steps: usize,
    pub scheme: Scheme,
}

impl Default for FvOptions {
    fn default() -> Self {
        Self {
            steps: 400,
            scheme: Scheme::Extrapolated,
        }
    }
}

impl LinearFv {
    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn dim(&self) -> usize {
        self.species * self.cells()
    }

    fn block(&self, u: &Vector, i: usize) -> Vector {
        u.rows(i * self.species, self.species).into_owned()
    }

    pub fn potentials(&self, u: &Vector) -> Vec<Vector> {
        (0..self.cells()).map(|i| &self.a[i] * self.block(u, i)).collect()
    }

    /// Flux through each face in the `+x` direction.
    pub fn face_fluxes(&self, u: &Vector) -> Vec<Vector> {
        let mu = self.potentials(u);
        self.conductance
            .iter()
            .enumerate()
            .map(|(f, c)| -(c * (&mu[f + 1] - &mu[f])))
            .collect()
    }

    pub fn rhs(&self, u: &Vector) -> Vector {
        let s = self.species;
        let j = self.face_fluxes(u);
        let mut out = Vector::zeros(self.dim());
        for i in 0..self.cells() {
            let mut net = Vector::zeros(s);
            if i > 0 {
                net += &j[i - 1];
            }
            if i + 1 < self.cells() {
                net -= &j[i];
            }
            out.rows_mut(i * s, s).copy_from(&(net / self.mass[i]));
        }
        out
    }

    pub fn total_mass(&self, u: &Vector) -> Vector {
        (0..self.cells()).fold(Vector::zeros(self.species), |acc, i| acc + self.block(u, i) * self.mass[i])
    }

    pub fn energy(&self, u: &Vector) -> f64 {
        (0..self.cells())
            .map(|i| {
                let ui = self.block(u, i);
                0.5 * self.mass[i] * ui.dot(&(&self.a[i] * &ui))
            })
            .sum()
    }

    /// Implicit Euler: `(M + tau G A) u+ = M u`.
    pub fn step_implicit(&self, u: &Vector, tau: f64) -> Result<Vector> {
        let n = self.cells();
        let s = self.species;
        let eye = Matrix::identity(s, s);
        let mut diag = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        let mut upper = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut d = &eye * self.mass[i];
            if i > 0 {
                d += &self.conductance[i - 1] * &self.a[i] * tau;
            }
            if i + 1 < n {
                d += &self.conductance[i] * &self.a[i] * tau;
                upper.push(-(&self.conductance[i] * &self.a[i + 1]) * tau);
                lower.push(-(&self.conductance[i] * &self.a[i]) * tau);
            }
            diag.push(d);
        }
        let rhs: Vec<Vector> = (0..n).map(|i| self.block(u, i) * self.mass[i]).collect();
        let sol = solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
        Ok(Vector::from_iterator(self.dim(), sol.iter().flat_map(|b| b.iter().copied())))
    }

    pub fn step(&self, u: &Vector, tau: f64, scheme: Scheme) -> Result<Vector> {
        match scheme {
            Scheme::ImplicitEuler => self.step_implicit(u, tau),
            Scheme::Extrapolated => {
                let half = self.step_implicit(&self.step_implicit(u, 0.5 * tau)?, 0.5 * tau)?;
                let full = self.step_implicit(u, tau)?;
                Ok(half * 2.0 - full)
            }
        }
    }

    /// Uniform steps on `[0, t_end]`, every step recorded.
    pub fn integrate(&self, u0: &Vector, t_end: f64, opts: &FvOptions) -> Result<Trajectory> {
        if u0.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: u0.len(),
            });
        }
        let steps = opts.steps.max(1);
        let tau = t_end / steps as f64;
        let mut traj = Trajectory::default();
        let mut u = u0.clone();
        for k in 0..=steps {
            if k > 0 {
                u = self.step(&u, tau, opts.scheme)?;
            }
            traj.times.push(tau * k as f64);
            traj.velocities.push(self.rhs(&u));
            traj.states.push(u.clone());
        }
        Ok(traj)
    }

    /// Dense gradient system `(X, E, R*)` of the same flow: `E = 1/2 sum m_i u_i A_i u_i`,
    /// `R*(Xi) = 1/2 sum_f (xi^_j - xi^_i) C_f (xi^_j - xi^_i)` with `xi^_i = Xi_i / m_i`.
    pub fn gradient_system(&self) -> Result<GradientSystem> {
        let n = self.cells();
        let s = self.species;
        let d = self.dim();
        let mut a = Matrix::zeros(d, d);
        for i in 0..n {
            a.view_mut((i * s, i * s), (s, s)).copy_from(&(&self.a[i] * self.mass[i]));
        }
        let mut k = Matrix::zeros(d, d);
        for (f, c) in self.conductance.iter().enumerate() {
            let (i, j) = (f, f + 1);
            let (mi, mj) = (self.mass[i], self.mass[j]);
            let mut add = |r: usize, q: usize, w: f64| {
                let mut v = k.view_mut((r * s, q * s), (s, s));
                v += c * w;
            };
            add(i, i, 1.0 / (mi * mi));
            add(j, j, 1.0 / (mj * mj));
            add(i, j, -1.0 / (mi * mj));
            add(j, i, -1.0 / (mi * mj));
        }
        GradientSystem::new(
            Space::euclidean(d, "membrane-fv"),
            Arc::new(QuadraticEnergy::new(a, Vector::zeros(d))?),
            Arc::new(QuadraticDual::new(k)?),
        )
    }
}

/// `int_a^b K^{-1}(x) dx` entrywise on one region.
fn resistance(profile: &MembraneProfile, region: Region, a: f64, b: f64) -> Result<Matrix> {
    let s = profile.species();
    if s == 1 {
        let r = adaptive_simpson(&|x| 1.0 / profile.k_scalar(region, x), a, b, QUAD_TOL);
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::SingularCoefficient(format!("K_bar on [{a}, {b}]")));
        }
        return Ok(Matrix::from_element(1, 1, r));
    }
    let inv_at = |x: f64| profile.k_bar.eval_in(region, x).try_inverse();
    for x in [a, 0.5 * (a + b), b] {
        if inv_at(x).is_none() {
            return Err(Error::SingularCoefficient(format!("K_bar at x = {x}")));
        }
    }
    let mut out = Matrix::zeros(s, s);
    for p in 0..s {
        for q in p..s {
            let v = adaptive_simpson(
                &|x| inv_at(x).map_or(f64::NAN, |m| 0.5 * (m[(p, q)] + m[(q, p)])),
                a,
                b,
                QUAD_TOL,
            );
            if !v.is_finite() {
                return Err(Error::SingularCoefficient(format!("K_bar on [{a}, {b}]")));
            }
            out[(p, q)] = v;
            out[(q, p)] = v;
        }
    }
    Ok(out)
}

fn invert(m: Matrix, what: &str) -> Result<Matrix> {
    m.try_inverse().ok_or_else(|| Error::SingularCoefficient(what.into()))
}

/// `H_K = (int_{-1}^{1} K_bar^{-1})^{-1}`.
pub fn transmission_hk(profile: &MembraneProfile) -> Result<Matrix> {
    let h = invert(resistance(profile, Region::Membrane, -1.0, 1.0)?, "int K_bar^{-1}")?;
    Ok((&h + h.transpose()) * 0.5)
}

/// The eps-family on the reference grid with `n` cells per subinterval. Face
/// conductances are exact inverse resistances between neighbouring centres,
/// which is the harmonic mean across a jump of `K_bar`.
pub fn assemble_quadratic_pde(profile: &MembraneProfile, eps: f64, n: usize) -> Result<LinearFv> {
    super::check_eps(eps)?;
    if n < 16 {
        return Err(Error::GridMismatch(format!("{n} cells per subinterval, need at least 16")));
    }
    let grid = Grid1D::reference(n)?;
    let cells = grid.cells();
    let mut mass = Vec::with_capacity(cells);
    let mut a = Vec::with_capacity(cells);
    for i in 0..cells {
        let region = grid.region(i);
        mass.push(grid.width(i) * psi_eps_prime(region, eps));
        a.push(profile.a_bar.eval_in(region, grid.centers[i]));
    }
    let mut conductance = Vec::with_capacity(cells - 1);
    for i in 0..cells - 1 {
        let e = grid.edges[i + 1];
        let r = resistance(profile, grid.region(i), grid.centers[i], e)?
            + resistance(profile, grid.region(i + 1), e, grid.centers[i + 1])?;
        conductance.push(invert(r, "face resistance")?);
    }
    Ok(LinearFv {
        species: profile.species(),
        mass,
        a,
        conductance,
        centers: grid.centers.clone(),
        widths: (0..cells).map(|i| grid.width(i)).collect(),
    })
}

/// Transmission limit on the `2n` slow cells. The face joining the last left
/// and first right cell carries the series resistance
/// `int_{c_L}^{-1} K^{-1} + H_K^{-1} + int_1^{c_R} K^{-1}`.
pub fn quadratic_limit(profile: &MembraneProfile, n: usize) -> Result<LinearFv> {
    if n < 16 {
        return Err(Error::GridMismatch(format!("{n} cells per subinterval, need at least 16")));
    }
    let grid = Grid1D::reference(n)?;
    let slow: Vec<usize> = (0..grid.cells()).filter(|&i| grid.region(i) != Region::Membrane).collect();
    let mut mass = Vec::new();
    let mut a = Vec::new();
    for &i in &slow {
        mass.push(grid.width(i));
        a.push(profile.a_bar.eval_in(grid.region(i), grid.centers[i]));
    }
    let hk_inv = resistance(profile, Region::Membrane, -1.0, 1.0)?;
    let mut conductance = Vec::new();
    for w in slow.windows(2) {
        let (i, j) = (w[0], w[1]);
        let r = if j == i + 1 {
            let e = grid.edges[j];
            resistance(profile, grid.region(i), grid.centers[i], e)? + resistance(profile, grid.region(j), e, grid.centers[j])?
        } else {
            resistance(profile, Region::Left, grid.centers[i], -1.0)?
                + &hk_inv
                + resistance(profile, Region::Right, 1.0, grid.centers[j])?
        };
        conductance.push(invert(r, "face resistance")?);
    }
    Ok(LinearFv {
        species: profile.species(),
        mass,
        a,
        conductance,
        centers: slow.iter().map(|&i| grid.centers[i]).collect(),
        widths: slow.iter().map(|&i| grid.width(i)).collect(),
    })
}

pub fn solve_limit_quadratic(
    profile: &MembraneProfile,
    u0: &Vector,
    t_end: f64,
    n: usize,
    opts: &FvOptions,
) -> Result<Trajectory> {
    quadratic_limit(profile, n)?.integrate(u0, t_end, opts)
}

/// Cells of a `3n`-cell reference discretization that lie in the membrane.
fn membrane_cells(pde: &LinearFv) -> Result<std::ops::Range<usize>> {
    let n = pde.cells();
    if !n.is_multiple_of(3) {
        return Err(Error::GridMismatch("expected three equal subintervals".into()));
    }
    Ok(n / 3..2 * n / 3)
}

impl LinearFv {
    /// Restriction of a full eps-state to the slow cells.
    pub fn slow_part(&self, u: &Vector) -> Result<Vector> {
        let m = membrane_cells(self)?;
        let s = self.species;
        let left = u.rows(0, m.start * s);
        let right = u.rows(m.end * s, (self.cells() - m.end) * s);
        Ok(Vector::from_iterator(
            left.len() + right.len(),
            left.iter().chain(right.iter()).copied(),
        ))
    }

    /// Full eps-state from slow data, with the membrane at its steady state
    /// for the given slow potentials.
    pub fn well_prepared(&self, slow: &Vector) -> Result<Vector> {
        let m = membrane_cells(self)?;
        let s = self.species;
        let nm = m.len();
        if slow.len() != (self.cells() - nm) * s {
            return Err(Error::Dimension {
                expected: (self.cells() - nm) * s,
                got: slow.len(),
            });
        }
        let mut u = Vector::zeros(self.dim());
        u.rows_mut(0, m.start * s).copy_from(&slow.rows(0, m.start * s));
        u.rows_mut(m.end * s, (self.cells() - m.end) * s)
            .copy_from(&slow.rows(m.start * s, (self.cells() - m.end) * s));
        let mu_left = &self.a[m.start - 1] * self.block(&u, m.start - 1);
        let mu_right = &self.a[m.end] * self.block(&u, m.end);
        // Membrane potentials solve the discrete Laplace problem between the two slow neighbours.
        let (mut lower, mut diag, mut upper, mut rhs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, i) in m.clone().enumerate() {
            let cl = &self.conductance[i - 1];
            let cr = &self.conductance[i];
            diag.push(cl + cr);
            let mut r = Vector::zeros(s);
            if k == 0 {
                r += cl * &mu_left;
            } else {
                lower.push(-cl.clone());
            }
            if k + 1 == nm {
                r += cr * &mu_right;
            } else {
                upper.push(-cr.clone());
            }
            rhs.push(r);
        }
        let mu = solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
        for (k, i) in m.enumerate() {
            let ui = self.a[i].clone().lu().solve(&mu[k]).ok_or(Error::SingularBlock("A_bar"))?;
            u.rows_mut(i * s, s).copy_from(&ui);
        }
        Ok(u)
    }
}

/// Sup-in-time `L^2(Omega_slow)` distance between the eps-solutions and the
/// transmission solution, one entry per `eps`, computed in parallel.
pub fn quadratic_eps_sweep(
    profile: &MembraneProfile,
    eps_list: &[f64],
    n: usize,
    slow0: &Vector,
    t_end: f64,
    opts: &FvOptions,
) -> Result<Vec<f64>> {
    let limit = quadratic_limit(profile, n)?;
    let reference = limit.integrate(slow0, t_end, opts)?;
    let s = limit.species;
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| {
                let reference = &reference;
                let limit = &limit;
                scope.spawn(move || -> Result<f64> {
                    let pde = assemble_quadratic_pde(profile, eps, n)?;
                    let traj = pde.integrate(&pde.well_prepared(slow0)?, t_end, opts)?;
                    let mut worst: f64 = 0.0;
                    for (k, state) in traj.states.iter().enumerate() {
                        let d = pde.slow_part(state)? - &reference.states[k];
                        let l2: f64 = (0..limit.cells())
                            .map(|i| limit.widths[i] * d.rows(i * s, s).norm_squared())
                            .sum();
                        worst = worst.max(l2.sqrt());
                    }
                    Ok(worst)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    results.into_iter().collect()
}

/// Steady flux in `+x` through the discretized membrane held at interface
/// potentials `mu_minus` (at `x = -1`) and `mu_plus` (at `x = 1`).
pub fn membrane_steady_flux(profile: &MembraneProfile, n: usize, mu_minus: &Vector, mu_plus: &Vector) -> Result<Vector> {
    if n < 16 {
        return Err(Error::GridMismatch(format!("{n} cells per subinterval, need at least 16")));
    }
    let s = profile.species();
    let grid = Grid1D::reference(n)?;
    let cells: Vec<usize> = (0..grid.cells()).filter(|&i| grid.region(i) == Region::Membrane).collect();
    let c = &grid.centers;
    // Conductances: boundary half cell, inner faces, boundary half cell.
    let mut cond = Vec::with_capacity(cells.len() + 1);
    cond.push(invert(resistance(profile, Region::Membrane, -1.0, c[cells[0]])?, "face resistance")?);
    for w in cells.windows(2) {
        cond.push(invert(resistance(profile, Region::Membrane, c[w[0]], c[w[1]])?, "face resistance")?);
    }
    let last = *cells.last().expect("membrane cells");
    cond.push(invert(resistance(profile, Region::Membrane, c[last], 1.0)?, "face resistance")?);
    let m = cells.len();
    let (mut lower, mut diag, mut upper, mut rhs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..m {
        diag.push(&cond[k] + &cond[k + 1]);
        let mut r = Vector::zeros(s);
        if k == 0 {
            r += &cond[0] * mu_minus;
        } else {
            lower.push(-cond[k].clone());
        }
        if k + 1 == m {
            r += &cond[m] * mu_plus;
        } else {
            upper.push(-cond[k + 1].clone());
        }
        rhs.push(r);
    }
    let mu = solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok(-(&cond[0] * (&mu[0] - mu_minus)))
}
