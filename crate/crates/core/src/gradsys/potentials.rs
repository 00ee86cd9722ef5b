//! Concrete energies and dissipation potentials.

use std::sync::Arc;

use super::{DualDissipation, Energy, POSITIVITY_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{pinv, Matrix, Vector};

/// Boltzmann function `z log z - z + 1`.
pub fn lambda_b(z: f64) -> Result<f64> {
    if z < 0.0 || !z.is_finite() {
        return Err(Error::Domain(format!("lambda_b({z})")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    Ok(z * z.ln() - z + 1.0)
}

/// Cosh potential `4 cosh(zeta/2) - 4`.
pub fn cstar(zeta: f64) -> f64 {
    // 2 (e^{z/4} - e^{-z/4})^2 avoids cancellation near zero.
    let s = (zeta / 4.0).sinh();
    8.0 * s * s
}

/// Derivative `2 sinh(zeta/2)`.
pub fn cstar_prime(zeta: f64) -> f64 {
    2.0 * (zeta / 2.0).sinh()
}

/// Legendre conjugate of `cstar`: `2 v asinh(v/2) - 4 sqrt(1 + v^2/4) + 4`.
pub fn cstar_conj(v: f64) -> f64 {
    let a = (v / 2.0).asinh();
    // 4 sqrt(1+v^2/4) - 4 = 4 (cosh(a) - 1) = 8 sinh^2(a/2)
    let s = (a / 2.0).sinh();
    2.0 * v * a - 8.0 * s * s
}

/// `E(u) = 1/2 <A u, u> - <mu, u>`.
#[derive(Debug, Clone)]
pub struct QuadraticEnergy {
    pub a: Matrix,
    pub mu: Vector,
}

impl QuadraticEnergy {
    pub fn new(a: Matrix, mu: Vector) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != mu.len() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: mu.len(),
            });
        }
        Ok(Self { a, mu })
    }
}

impl Energy for QuadraticEnergy {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        Ok(0.5 * u.dot(&(&self.a * u)) - self.mu.dot(u))
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        Ok(&self.a * u - &self.mu)
    }
    fn hessian(&self, _u: &Vector) -> Result<Matrix> {
        Ok(self.a.clone())
    }
    fn is_quadratic(&self) -> bool {
        true
    }
    fn equilibrium(&self) -> Option<Vector> {
        self.a.clone().lu().solve(&self.mu)
    }
}

/// Relative Boltzmann entropy `sum c*_i lambda_B(u_i / c*_i)`.
#[derive(Debug, Clone)]
pub struct BoltzmannEnergy {
    pub reference: Vector,
}

impl BoltzmannEnergy {
    pub fn new(reference: Vector) -> Result<Self> {
        if reference.iter().any(|&c| c <= 0.0) {
            return Err(Error::Invalid("equilibrium densities must be positive".into()));
        }
        Ok(Self { reference })
    }
}

impl Energy for BoltzmannEnergy {
    fn dim(&self) -> usize {
        self.reference.len()
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        let mut s = 0.0;
        for (x, c) in u.iter().zip(self.reference.iter()) {
            s += c * lambda_b(x / c)?;
        }
        Ok(s)
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        if u.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Domain("negative density".into()));
        }
        Ok(Vector::from_iterator(
            u.len(),
            u.iter().zip(self.reference.iter()).map(|(x, c)| (x.max(POSITIVITY_FLOOR) / c).ln()),
        ))
    }
    fn hessian(&self, u: &Vector) -> Result<Matrix> {
        Ok(Matrix::from_diagonal(&u.map(|x| 1.0 / x.max(POSITIVITY_FLOOR))))
    }
    fn in_domain(&self, u: &Vector) -> bool {
        u.len() == self.dim() && u.iter().all(|&x| x > 0.0 && x.is_finite())
    }
    fn equilibrium(&self) -> Option<Vector> {
        Some(self.reference.clone())
    }
}

type EnergyFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type EnergyGrad = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Energy given by closures.
#[derive(Clone)]
pub struct FnEnergy {
    dim: usize,
    value: EnergyFn,
    gradient: EnergyGrad,
}

impl FnEnergy {
    pub fn new(
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl Energy for FnEnergy {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        Ok((self.value)(u))
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        Ok((self.gradient)(u))
    }
}

/// `scale * inner(u)`.
#[derive(Clone)]
pub struct ScaledEnergy {
    pub inner: Arc<dyn Energy>,
    pub scale: f64,
}

impl Energy for ScaledEnergy {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        Ok(self.scale * self.inner.value(u)?)
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        Ok(self.inner.gradient(u)? * self.scale)
    }
    fn hessian(&self, u: &Vector) -> Result<Matrix> {
        Ok(self.inner.hessian(u)? * self.scale)
    }
    fn in_domain(&self, u: &Vector) -> bool {
        self.inner.in_domain(u)
    }
    fn is_quadratic(&self) -> bool {
        self.inner.is_quadratic()
    }
    fn equilibrium(&self) -> Option<Vector> {
        self.inner.equilibrium()
    }
}

/// `E(U) + scale * e(w)` on the product of two spaces, `u = (U, w)`.
#[derive(Clone)]
pub struct SumEnergy {
    pub slow: Arc<dyn Energy>,
    pub fast: Arc<dyn Energy>,
    pub fast_scale: f64,
}

impl SumEnergy {
    fn split(&self, u: &Vector) -> (Vector, Vector) {
        let ns = self.slow.dim();
        (u.rows(0, ns).into_owned(), u.rows(ns, u.len() - ns).into_owned())
    }
}

impl Energy for SumEnergy {
    fn dim(&self) -> usize {
        self.slow.dim() + self.fast.dim()
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        let (a, b) = self.split(u);
        Ok(self.slow.value(&a)? + self.fast_scale * self.fast.value(&b)?)
    }
    fn gradient(&self, u: &Vector) -> Result<Vector> {
        let (a, b) = self.split(u);
        let ga = self.slow.gradient(&a)?;
        let gb = self.fast.gradient(&b)? * self.fast_scale;
        Ok(Vector::from_iterator(u.len(), ga.iter().chain(gb.iter()).copied()))
    }
    fn hessian(&self, u: &Vector) -> Result<Matrix> {
        let (a, b) = self.split(u);
        let ns = a.len();
        let mut h = Matrix::zeros(u.len(), u.len());
        h.view_mut((0, 0), (ns, ns)).copy_from(&self.slow.hessian(&a)?);
        h.view_mut((ns, ns), (b.len(), b.len()))
            .copy_from(&(self.fast.hessian(&b)? * self.fast_scale));
        Ok(h)
    }
    fn in_domain(&self, u: &Vector) -> bool {
        let (a, b) = self.split(u);
        self.slow.in_domain(&a) && self.fast.in_domain(&b)
    }
    fn is_quadratic(&self) -> bool {
        self.slow.is_quadratic() && self.fast.is_quadratic()
    }
    fn equilibrium(&self) -> Option<Vector> {
        let a = self.slow.equilibrium()?;
        let b = self.fast.equilibrium()?;
        Some(Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied()))
    }
}

/// State-independent quadratic potential `R*(xi) = 1/2 <xi, K xi>` with `K` symmetric psd.
#[derive(Debug, Clone)]
pub struct QuadraticDual {
    pub k: Matrix,
    k_pinv: Matrix,
    definite: bool,
}

impl QuadraticDual {
    pub fn new(k: Matrix) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::Dimension {
                expected: k.nrows(),
                got: k.ncols(),
            });
        }
        let sym = (&k + k.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1e-300);
        let min = eig.eigenvalues.min();
        if min < -1e-12 * scale {
            return Err(Error::Invalid("mobility matrix is not positive semidefinite".into()));
        }
        Ok(Self {
            k_pinv: pinv(&sym),
            definite: min > 1e-12 * scale,
            k: sym,
        })
    }

    fn in_range(&self, v: &Vector) -> bool {
        let back = &self.k * (&self.k_pinv * v);
        (back - v).norm() <= 1e-8 * (1.0 + v.norm())
    }
}

impl DualDissipation for QuadraticDual {
    fn dim(&self) -> usize {
        self.k.nrows()
    }
    fn dual_value(&self, _u: &Vector, xi: &Vector) -> Result<f64> {
        Ok(0.5 * xi.dot(&(&self.k * xi)))
    }
    fn velocity(&self, _u: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(&self.k * xi)
    }
    fn dual_hessian(&self, _u: &Vector, _xi: &Vector) -> Result<Matrix> {
        Ok(self.k.clone())
    }
    fn primal_value(&self, _u: &Vector, v: &Vector) -> Result<f64> {
        if !self.in_range(v) {
            return Ok(f64::INFINITY);
        }
        Ok(0.5 * v.dot(&(&self.k_pinv * v)))
    }
    fn primal_force(&self, _u: &Vector, v: &Vector) -> Result<Vector> {
        Ok(&self.k_pinv * v)
    }
    fn velocity_range(&self, _u: &Vector) -> Option<Matrix> {
        if self.definite {
            return None;
        }
        let eig = self.k.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        let cols: Vec<usize> = (0..self.k.nrows()).filter(|&i| eig.eigenvalues[i] > 1e-12 * scale).collect();
        let mut q = Matrix::zeros(self.k.nrows(), cols.len());
        for (j, &i) in cols.iter().enumerate() {
            q.set_column(j, &eig.eigenvectors.column(i));
        }
        Some(q)
    }
    fn has_primal(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        true
    }
    fn strictly_convex(&self) -> bool {
        self.definite
    }
}

/// `R(v) = sigma |v|_1 + nu/2 |v|^2`, `R*(xi) = sum max(|xi_i| - sigma, 0)^2 / (2 nu)`.
#[derive(Debug, Clone)]
pub struct L1QuadraticDual {
    pub dim: usize,
    pub sigma: f64,
    pub nu: f64,
}

impl DualDissipation for L1QuadraticDual {
    fn dim(&self) -> usize {
        self.dim
    }
    fn dual_value(&self, _u: &Vector, xi: &Vector) -> Result<f64> {
        Ok(xi
            .iter()
            .map(|&x| {
                let e = (x.abs() - self.sigma).max(0.0);
                e * e / (2.0 * self.nu)
            })
            .sum())
    }
    fn velocity(&self, _u: &Vector, xi: &Vector) -> Result<Vector> {
        Ok(xi.map(|x| x.signum() * (x.abs() - self.sigma).max(0.0) / self.nu))
    }
    fn dual_hessian(&self, _u: &Vector, xi: &Vector) -> Result<Matrix> {
        Ok(Matrix::from_diagonal(
            &xi.map(|x| if x.abs() > self.sigma { 1.0 / self.nu } else { 0.0 }),
        ))
    }
    fn primal_value(&self, _u: &Vector, v: &Vector) -> Result<f64> {
        Ok(self.sigma * v.lp_norm(1) + 0.5 * self.nu * v.norm_squared())
    }
    fn primal_force(&self, _u: &Vector, v: &Vector) -> Result<Vector> {
        Ok(v.map(|x| if x == 0.0 { 0.0 } else { self.sigma * x.signum() + self.nu * x }))
    }
    fn has_primal(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        true
    }
    fn strictly_convex(&self) -> bool {
        false
    }
}
