//! Two-point boundary value problems on the membrane `[-1, 1]`: the auxiliary
//! functions `H_+-`, the sorption coefficients and the saddle-value oracle.

use super::entropic::otto_keff;
use super::linear::transmission_hk;
use super::profile::MembraneProfile;
use super::{CoeffProvenance, TransmissionCoeffs};
use crate::error::{Error, Result};
use crate::gradsys::cstar;
use crate::linalg::{solve_tridiagonal, Matrix};

/// Densities and port forces at the two membrane ends.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryData {
    pub w_minus: f64,
    pub w_plus: f64,
    pub zeta_minus: f64,
    pub zeta_plus: f64,
}

struct Bvp {
    x: Vec<f64>,
    sol: Vec<f64>,
    h: f64,
    kappa_face: Vec<f64>,
}

/// Second-order finite differences for `-(kappa u')' + beta u = f`, Dirichlet ends.
fn solve_dirichlet(
    kappa: &dyn Fn(f64) -> f64,
    beta: &dyn Fn(f64) -> f64,
    f: &dyn Fn(f64) -> f64,
    left: f64,
    right: f64,
    n: usize,
) -> Result<Bvp> {
    let h = 2.0 / n as f64;
    let x: Vec<f64> = (0..=n).map(|k| if k == n { 1.0 } else { -1.0 + h * k as f64 }).collect();
    let kappa_face: Vec<f64> = (0..n).map(|k| kappa(-1.0 + h * (k as f64 + 0.5))).collect();
    if kappa_face.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::BvpSingular);
    }
    let m = n - 1;
    let mut lower = vec![0.0; m.saturating_sub(1)];
    let mut upper = vec![0.0; m.saturating_sub(1)];
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let h2 = h * h;
    for r in 0..m {
        let k = r + 1;
        let (kl, kr) = (kappa_face[k - 1], kappa_face[k]);
        diag[r] = (kl + kr) / h2 + beta(x[k]);
        rhs[r] = f(x[k]);
        if r > 0 {
            lower[r - 1] = -kl / h2;
        } else {
            rhs[r] += kl / h2 * left;
        }
        if r + 1 < m {
            upper[r] = -kr / h2;
        } else {
            rhs[r] += kr / h2 * right;
        }
    }
    let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs).map_err(|_| Error::BvpSingular)?;
    let mut sol = Vec::with_capacity(n + 1);
    sol.push(left);
    sol.extend(inner);
    sol.push(right);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::BvpSingular);
    }
    Ok(Bvp { x, sol, h, kappa_face })
}

impl Bvp {
    /// One-sided three-point derivatives at `(-1, 1)`.
    fn end_derivatives(&self) -> (f64, f64) {
        let u = &self.sol;
        let n = u.len() - 1;
        let h = self.h;
        (
            (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h),
            (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h),
        )
    }

    /// Conservative end fluxes `kappa u'` at `(-1, 1)` for `-(kappa u')' = f - beta u`.
    fn end_fluxes(&self, beta: &dyn Fn(f64) -> f64, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
        let u = &self.sol;
        let n = u.len() - 1;
        let h = self.h;
        let src = |k: usize| beta(self.x[k]) * u[k] - f(self.x[k]);
        let left = self.kappa_face[0] * (u[1] - u[0]) / h - 0.5 * h * src(0);
        let right = self.kappa_face[n - 1] * (u[n] - u[n - 1]) / h + 0.5 * h * src(n);
        (left, right)
    }
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// `H_-` and `H_+` on a uniform grid with their end derivatives.
#[derive(Debug, Clone)]
pub struct HpmSolution {
    pub x: Vec<f64>,
    pub h_minus: Vec<f64>,
    pub h_plus: Vec<f64>,
    /// `(H_-'(-1), H_-'(1))`.
    pub dh_minus: (f64, f64),
    /// `(H_+'(-1), H_+'(1))`.
    pub dh_plus: (f64, f64),
    /// Discrete Wronskian on each cell.
    pub wronskian: Vec<f64>,
}

impl HpmSolution {
    /// `(max - min) / |mean|` of the discrete Wronskian.
    pub fn wronskian_drift(&self) -> f64 {
        let max = self.wronskian.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.wronskian.iter().cloned().fold(f64::MAX, f64::min);
        let mean = self.wronskian.iter().sum::<f64>() / self.wronskian.len() as f64;
        (max - min) / mean.abs()
    }
}

/// `(kappa_bar H')' = beta_bar H` with `H_+-(+-1) = 1`, `H_+-(-+1) = 0`.
pub fn solve_hpm(profile: &MembraneProfile, n: usize) -> Result<HpmSolution> {
    profile.require_scalar()?;
    if n < 64 {
        return Err(Error::GridMismatch(format!("{n} cells, need at least 64")));
    }
    let kappa = |x: f64| profile.kappa_bar(x);
    let beta = |x: f64| profile.beta_bar(x);
    let zero = |_: f64| 0.0;
    let minus = solve_dirichlet(&kappa, &beta, &zero, 1.0, 0.0, n)?;
    let plus = solve_dirichlet(&kappa, &beta, &zero, 0.0, 1.0, n)?;
    let wronskian = (0..n)
        .map(|k| {
            let (hp, hm) = (&plus.sol, &minus.sol);
            minus.kappa_face[k] * (hp[k + 1] * hm[k] - hm[k + 1] * hp[k]) / minus.h
        })
        .collect();
    Ok(HpmSolution {
        dh_minus: minus.end_derivatives(),
        dh_plus: plus.end_derivatives(),
        x: minus.x,
        h_minus: minus.sol,
        h_plus: plus.sol,
        wronskian,
    })
}

struct RawCoeffs {
    m_eff_left: f64,
    m_eff_right: f64,
    m_minus: f64,
    m_plus: f64,
    drift: f64,
}

fn raw_coeffs(profile: &MembraneProfile, n: usize) -> Result<RawCoeffs> {
    let s = solve_hpm(profile, n)?;
    let h = 2.0 / n as f64;
    let quad = |v: &[f64]| {
        let g = |k: usize| profile.beta_bar(s.x[k]) * v[k];
        h * ((1..n).map(g).sum::<f64>() + 0.5 * (g(0) + g(n)))
    };
    Ok(RawCoeffs {
        m_eff_left: profile.kappa_bar(-1.0) * s.dh_plus.0,
        m_eff_right: -profile.kappa_bar(1.0) * s.dh_minus.1,
        m_minus: quad(&s.h_minus),
        m_plus: quad(&s.h_plus),
        drift: s.wronskian_drift(),
    })
}

/// Removes the `h^2` and `h^3` terms from values on `n`, `2n`, `4n` cells.
/// One-sided end stencils carry an `h^3` term, so one Richardson stage is not enough.
fn extrapolate(v: [f64; 3]) -> f64 {
    let r1 = richardson(v[0], v[1]);
    let r2 = richardson(v[1], v[2]);
    (8.0 * r2 - r1) / 7.0
}

/// `M_eff` from both end-point expressions and `M_+- = int beta_bar H_+-`,
/// extrapolated from `n`, `2n` and `4n` cells.
pub fn sorption_coeffs(profile: &MembraneProfile, n: usize) -> Result<TransmissionCoeffs> {
    let levels = [raw_coeffs(profile, n)?, raw_coeffs(profile, 2 * n)?, raw_coeffs(profile, 4 * n)?];
    let drift = levels.iter().map(|l| l.drift).fold(0.0, f64::max);
    if drift > 1e-6 {
        return Err(Error::WronskianDrift { drift });
    }
    let pick = |f: fn(&RawCoeffs) -> f64| [f(&levels[0]), f(&levels[1]), f(&levels[2])];
    let series = [
        pick(|c| c.m_eff_left),
        pick(|c| c.m_eff_right),
        pick(|c| c.m_minus),
        pick(|c| c.m_plus),
    ];
    let ex: Vec<f64> = series.iter().map(|v| extrapolate(*v)).collect();
    let change = series.iter().zip(&ex).map(|(v, e)| (e - v[2]).abs()).fold(0.0, f64::max);
    let mismatch = (ex[0] - ex[1]).abs() / ex[0].abs();
    Ok(TransmissionCoeffs {
        h_k: transmission_hk(profile)?,
        k_eff: otto_keff(profile)?,
        m_eff: 0.5 * (ex[0] + ex[1]),
        m_minus: ex[2],
        m_plus: ex[3],
        provenance: CoeffProvenance::Bvp {
            grid: n,
            richardson_change: change,
            wronskian_drift: drift,
            m_eff_mismatch: mismatch,
        },
    })
}

/// Constant coefficients: `sigma^2 = A^{1/2} B / K`,
/// `M_eff = (K/A) sigma / sinh(2 sigma)`, `M_+- = (B / A^{1/2}) tanh(sigma) / sigma`.
pub fn sorption_coeffs_const(a_bar: f64, b_bar: f64, k_bar: f64) -> Result<TransmissionCoeffs> {
    if !(a_bar > 0.0 && k_bar > 0.0 && b_bar >= 0.0) {
        return Err(Error::SingularCoefficient(format!("constants A={a_bar}, B={b_bar}, K={k_bar}")));
    }
    let kappa = k_bar / a_bar;
    let beta = b_bar / a_bar.sqrt();
    let sigma = (a_bar.sqrt() * b_bar / k_bar).sqrt();
    let (eff_factor, port_factor) = if sigma < 1e-4 {
        let s2 = sigma * sigma;
        (0.5 * (1.0 - 2.0 * s2 / 3.0), 1.0 - s2 / 3.0)
    } else {
        (sigma / (2.0 * sigma).sinh(), sigma.tanh() / sigma)
    };
    Ok(TransmissionCoeffs {
        h_k: Matrix::from_element(1, 1, 0.5 * k_bar),
        k_eff: 0.5 * kappa,
        m_eff: kappa * eff_factor,
        m_minus: beta * port_factor,
        m_plus: beta * port_factor,
        provenance: CoeffProvenance::ClosedForm,
    })
}

/// `M_eff sqrt(a- w- a+ w+) C*(zeta+ - zeta-) + M- sqrt(a- w-) C*(zeta-) + M+ sqrt(a+ w+) C*(zeta+)`.
pub fn ry_star_sorption(
    w_minus: f64,
    w_plus: f64,
    zeta_minus: f64,
    zeta_plus: f64,
    coeffs: &TransmissionCoeffs,
    a_minus: f64,
    a_plus: f64,
) -> Result<f64> {
    if !(w_minus > 0.0 && w_plus > 0.0) {
        return Err(Error::Domain(format!("boundary densities ({w_minus}, {w_plus})")));
    }
    let (vm, vp) = (a_minus * w_minus, a_plus * w_plus);
    Ok(coeffs.m_eff * (vm * vp).sqrt() * cstar(zeta_plus - zeta_minus)
        + coeffs.m_minus * vm.sqrt() * cstar(zeta_minus)
        + coeffs.m_plus * vp.sqrt() * cstar(zeta_plus))
}

fn oracle_raw(data: &BoundaryData, profile: &MembraneProfile, sorption: bool, n: usize) -> Result<f64> {
    let (am, ap) = profile.a_membrane_ends();
    let (vm, vp) = (am * data.w_minus, ap * data.w_plus);
    let em = vm.sqrt() * (-0.5 * data.zeta_minus).exp();
    let ep = vp.sqrt() * (-0.5 * data.zeta_plus).exp();
    let kappa = |x: f64| profile.kappa_bar(x);
    let beta = |x: f64| if sorption { profile.beta_bar(x) } else { 0.0 };
    let bvp = solve_dirichlet(&kappa, &beta, &beta, em, ep, n)?;
    let (fl, fr) = bvp.end_fluxes(&beta, &beta);
    Ok(2.0 * fl * (vm / em - 1.0) + 2.0 * fr * (1.0 - vp / ep))
}

/// Saddle value of the membrane B-function at boundary data, through the
/// transformed variables `v = A w`, `eta^2 = v e^{-zeta}`: solve
/// `-(kappa eta')' + beta eta = beta` and evaluate the boundary fluxes.
pub fn membrane_saddle_oracle(data: &BoundaryData, profile: &MembraneProfile, sorption: bool, n: usize) -> Result<f64> {
    profile.require_scalar()?;
    if !(data.w_minus > 0.0 && data.w_plus > 0.0) {
        return Err(Error::Domain(format!("boundary densities ({}, {})", data.w_minus, data.w_plus)));
    }
    if n < 8 {
        return Err(Error::GridMismatch(format!("{n} cells")));
    }
    Ok(richardson(
        oracle_raw(data, profile, sorption, n)?,
        oracle_raw(data, profile, sorption, 2 * n)?,
    ))
}
