use std::sync::Arc;

use super::PortCoupling;
use crate::error::Result;
use crate::gradsys::{DualDissipation, Energy};
use crate::linalg::{pinv, AffineConstraint, Matrix, Vector};
use crate::saddle::{minimize_convex, MinimizeOptions, Objective};

/// `R*_eps(u; Xi, mu) = R_bar*(u; Xi, mu / eps)` on `X_slow x X_fast`.
#[derive(Clone)]
pub struct EpsDual {
    pub inner: Arc<dyn DualDissipation>,
    pub slow_dim: usize,
    pub eps: f64,
}

impl EpsDual {
    pub fn new(inner: Arc<dyn DualDissipation>, slow_dim: usize, eps: f64) -> Self {
        Self { inner, slow_dim, eps }
    }

    /// Diagonal of `S = diag(1, 1/eps)`.
    fn scaling(&self) -> Vector {
        let n = self.inner.dim();
        Vector::from_iterator(n, (0..n).map(|i| if i < self.slow_dim { 1.0 } else { 1.0 / self.eps }))
    }
}

impl DualDissipation for EpsDual {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn dual_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        self.inner.dual_value(u, &xi.component_mul(&self.scaling()))
    }
    fn velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        let s = self.scaling();
        Ok(self.inner.velocity(u, &xi.component_mul(&s))?.component_mul(&s))
    }
    fn dual_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        let s = self.scaling();
        let sm = Matrix::from_diagonal(&s);
        Ok(&sm * self.inner.dual_hessian(u, &xi.component_mul(&s))? * &sm)
    }
    fn primal_value(&self, u: &Vector, v: &Vector) -> Result<f64> {
        self.inner.primal_value(u, &v.component_div(&self.scaling()))
    }
    fn primal_force(&self, u: &Vector, v: &Vector) -> Result<Vector> {
        let s = self.scaling();
        Ok(self.inner.primal_force(u, &v.component_div(&s))?.component_div(&s))
    }
    fn has_primal(&self) -> bool {
        self.inner.has_primal()
    }
    fn velocity_range(&self, u: &Vector) -> Option<Matrix> {
        let q = self.inner.velocity_range(u)?;
        let scaled = Matrix::from_diagonal(&self.scaling()) * q;
        Some(scaled.qr().q())
    }
    fn state_independent(&self) -> bool {
        self.inner.state_independent()
    }
    fn strictly_convex(&self) -> bool {
        self.inner.strictly_convex()
    }
}

/// `E(basis s)` on chart coordinates of a linear subspace.
#[derive(Clone)]
pub struct ChartEnergy {
    pub inner: Arc<dyn Energy>,
    pub basis: Matrix,
}

impl ChartEnergy {
    pub fn new(inner: Arc<dyn Energy>, basis: Matrix) -> Self {
        Self { inner, basis }
    }
}

impl Energy for ChartEnergy {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }
    fn value(&self, s: &Vector) -> Result<f64> {
        self.inner.value(&(&self.basis * s))
    }
    fn gradient(&self, s: &Vector) -> Result<Vector> {
        Ok(self.basis.transpose() * self.inner.gradient(&(&self.basis * s))?)
    }
    fn hessian(&self, s: &Vector) -> Result<Matrix> {
        Ok(self.basis.transpose() * self.inner.hessian(&(&self.basis * s))? * &self.basis)
    }
    fn in_domain(&self, s: &Vector) -> bool {
        s.len() == self.dim() && self.inner.in_domain(&(&self.basis * s))
    }
    fn is_quadratic(&self) -> bool {
        self.inner.is_quadratic()
    }
    fn equilibrium(&self) -> Option<Vector> {
        let e = self.inner.equilibrium()?;
        let s = self.basis.transpose() * &e;
        ((&self.basis * &s - &e).amax() <= 1e-12 * (1.0 + e.amax())).then_some(s)
    }
}

/// Dual dissipation of the port-constrained eps-system on `ker Q`:
/// `R*(s; sigma) = inf { R_slow*(U; Xi) + R_fast*(w; xi_f / eps) : N^T xi = sigma,
/// P*_fast xi_f / eps = P*_slow Xi }` with `(U, w) = N s`.
#[derive(Clone)]
pub struct ConstrainedEpsDual {
    ports: PortCoupling,
    slow_dim: usize,
    eps: f64,
    basis: Matrix,
    /// `[-P*_slow, P*_fast / eps]`.
    coupling_rows: Matrix,
}

impl ConstrainedEpsDual {
    pub fn new(ports: PortCoupling, slow_dim: usize, eps: f64, basis: Matrix) -> Self {
        let n = basis.nrows();
        let m = ports.port_dim();
        let mut c = Matrix::zeros(m, n);
        c.view_mut((0, 0), (m, slow_dim)).copy_from(&(-&ports.p_slow_star));
        c.view_mut((0, slow_dim), (m, n - slow_dim)).copy_from(&(&ports.p_fast_star / eps));
        Self {
            ports,
            slow_dim,
            eps,
            basis,
            coupling_rows: c,
        }
    }

    fn split(&self, x: &Vector) -> (Vector, Vector) {
        let ns = self.slow_dim;
        (x.rows(0, ns).into_owned(), x.rows(ns, x.len() - ns).into_owned())
    }

    fn join(a: &Vector, b: &Vector) -> Vector {
        Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
    }

    fn full_value(&self, u: &Vector, xi: &Vector) -> Result<f64> {
        let (bu, w) = self.split(u);
        let (bx, xf) = self.split(xi);
        Ok(self.ports.r_slow.dual_value(&bu, &bx)? + self.ports.r_fast.dual_value(&w, &(xf / self.eps))?)
    }

    fn full_velocity(&self, u: &Vector, xi: &Vector) -> Result<Vector> {
        let (bu, w) = self.split(u);
        let (bx, xf) = self.split(xi);
        let vs = self.ports.r_slow.velocity(&bu, &bx)?;
        let vf = self.ports.r_fast.velocity(&w, &(xf / self.eps))? / self.eps;
        Ok(Self::join(&vs, &vf))
    }

    fn full_hessian(&self, u: &Vector, xi: &Vector) -> Result<Matrix> {
        let (bu, w) = self.split(u);
        let (bx, xf) = self.split(xi);
        let ns = self.slow_dim;
        let nf = w.len();
        let mut h = Matrix::zeros(ns + nf, ns + nf);
        h.view_mut((0, 0), (ns, ns)).copy_from(&self.ports.r_slow.dual_hessian(&bu, &bx)?);
        let hf = self.ports.r_fast.dual_hessian(&w, &(xf / self.eps))? / (self.eps * self.eps);
        h.view_mut((ns, ns), (nf, nf)).copy_from(&hf);
        Ok(h)
    }

    /// Minimizing full force for chart force `sigma`.
    pub fn lift_force(&self, s: &Vector, sigma: &Vector) -> Result<Vector> {
        let u = &self.basis * s;
        let n = u.len();
        let k = self.basis.ncols();
        let m = self.coupling_rows.nrows();
        let mut op = Matrix::zeros(k + m, n);
        op.view_mut((0, 0), (k, n)).copy_from(&self.basis.transpose());
        op.view_mut((k, 0), (m, n)).copy_from(&self.coupling_rows);
        let target = Self::join(sigma, &Vector::zeros(m));
        let c = AffineConstraint::new(op.clone(), target.clone())?;
        let start = pinv(&op) * &target;
        let obj = Objective::new(|xi: &Vector| self.full_value(&u, xi).unwrap_or(f64::INFINITY))
            .with_gradient(|xi: &Vector| {
                self.full_velocity(&u, xi)
                    .unwrap_or_else(|_| Vector::from_element(n, f64::NAN))
            })
            .with_hessian(|xi: &Vector| {
                self.full_hessian(&u, xi)
                    .unwrap_or_else(|_| Matrix::from_element(n, n, f64::NAN))
            });
        let scale = 1.0 + obj.gradient(&start).amax();
        let opts = MinimizeOptions {
            tol: 1e-12 * scale,
            max_iter: 100,
            ..Default::default()
        };
        Ok(minimize_convex(&obj, Some(&c), &start, &opts)?.x)
    }
}

impl DualDissipation for ConstrainedEpsDual {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }
    fn dual_value(&self, s: &Vector, sigma: &Vector) -> Result<f64> {
        let xi = self.lift_force(s, sigma)?;
        self.full_value(&(&self.basis * s), &xi)
    }
    fn velocity(&self, s: &Vector, sigma: &Vector) -> Result<Vector> {
        let xi = self.lift_force(s, sigma)?;
        let v = self.full_velocity(&(&self.basis * s), &xi)?;
        // D R_eps(xi) = N lambda + C^T nu; the chart velocity is lambda.
        let k = self.basis.ncols();
        let m = self.coupling_rows.nrows();
        let mut stacked = Matrix::zeros(v.len(), k + m);
        stacked.view_mut((0, 0), (v.len(), k)).copy_from(&self.basis);
        stacked
            .view_mut((0, k), (v.len(), m))
            .copy_from(&self.coupling_rows.transpose());
        let coef = pinv(&stacked) * v;
        Ok(coef.rows(0, k).into_owned())
    }
    fn state_independent(&self) -> bool {
        self.ports.r_slow.state_independent() && self.ports.r_fast.state_independent()
    }
}
