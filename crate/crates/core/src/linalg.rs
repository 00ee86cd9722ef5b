//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse.
pub fn pinv(a: &Matrix) -> Matrix {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Matrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Orthonormal basis of the kernel of `b` (columns). `b` has `n` columns.
pub fn null_space(b: &Matrix) -> Matrix {
    let n = b.ncols();
    if b.nrows() == 0 {
        return Matrix::identity(n, n);
    }
    let proj = Matrix::identity(n, n) - pinv(b) * b;
    let svd = proj.svd(true, false);
    let u = svd.u.unwrap();
    let cols: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] > 0.5).collect();
    let mut basis = Matrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        basis.set_column(j, &u.column(k));
    }
    basis
}

/// Orthonormal basis of the range of `a` (columns).
pub fn range_basis(a: &Matrix) -> Matrix {
    let n = a.nrows();
    if a.ncols() == 0 {
        return Matrix::zeros(n, 0);
    }
    let proj = a * pinv(a);
    let svd = proj.svd(true, false);
    let u = svd.u.unwrap();
    let cols: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] > 0.5).collect();
    let mut basis = Matrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        basis.set_column(j, &u.column(k));
    }
    basis
}

/// An affine constraint `B x = z`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub operator: Matrix,
    pub target: Vector,
}

impl AffineConstraint {
    pub fn new(operator: Matrix, target: Vector) -> Result<Self> {
        if operator.nrows() != target.len() {
            return Err(Error::Dimension {
                expected: operator.nrows(),
                got: target.len(),
            });
        }
        Ok(Self { operator, target })
    }

    pub fn residual(&self, x: &Vector) -> f64 {
        (&self.operator * x - &self.target).norm()
    }

    /// Parametrization `x = particular + basis * s` of the feasible set.
    pub fn parametrize(&self) -> Result<AffineChart> {
        let p = pinv(&self.operator);
        let particular = &p * &self.target;
        let res = self.residual(&particular);
        let scale = 1.0 + self.target.norm();
        if res > 1e-10 * scale {
            return Err(Error::ConstraintInfeasible { residual: res });
        }
        Ok(AffineChart {
            particular,
            basis: null_space(&self.operator),
        })
    }
}

/// Affine chart `x = particular + basis * s` with orthonormal `basis`.
#[derive(Debug, Clone)]
pub struct AffineChart {
    pub particular: Vector,
    pub basis: Matrix,
}

impl AffineChart {
    pub fn identity(n: usize) -> Self {
        Self {
            particular: Vector::zeros(n),
            basis: Matrix::identity(n, n),
        }
    }

    pub fn from_constraint(n: usize, c: Option<&AffineConstraint>) -> Result<Self> {
        match c {
            None => Ok(Self::identity(n)),
            Some(c) => {
                if c.operator.ncols() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: c.operator.ncols(),
                    });
                }
                c.parametrize()
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn embed(&self, s: &Vector) -> Vector {
        &self.particular + &self.basis * s
    }

    /// Coordinates of the orthogonal projection of `x` onto the chart.
    pub fn coords(&self, x: &Vector) -> Vector {
        self.basis.transpose() * (x - &self.particular)
    }
}

/// Solve a tridiagonal system with the Thomas algorithm.
/// `lower[i]` couples row i+1 to i, `upper[i]` couples row i to i+1.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(Error::SingularBlock("tridiagonal pivot"));
    }
    if n > 1 {
        c[0] = upper[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i - 1] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::SingularBlock("tridiagonal pivot"));
        }
        if i + 1 < n {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Block-tridiagonal solve. Blocks are square of equal size.
pub fn solve_block_tridiagonal(
    lower: &[Matrix],
    diag: &[Matrix],
    upper: &[Matrix],
    rhs: &[Vector],
) -> Result<Vec<Vector>> {
    let n = diag.len();
    let mut cmat: Vec<Matrix> = Vec::with_capacity(n);
    let mut dvec: Vec<Vector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut piv = diag[i].clone();
        let mut r = rhs[i].clone();
        if i > 0 {
            piv -= &lower[i - 1] * &cmat[i - 1];
            r -= &lower[i - 1] * &dvec[i - 1];
        }
        let lu = piv.lu();
        if i + 1 < n {
            let ci = lu
                .solve(&upper[i])
                .ok_or(Error::SingularBlock("block tridiagonal pivot"))?;
            cmat.push(ci);
        }
        let di = lu.solve(&r).ok_or(Error::SingularBlock("block tridiagonal pivot"))?;
        dvec.push(di);
    }
    for i in (0..n - 1).rev() {
        let corr = &cmat[i] * &dvec[i + 1];
        dvec[i] -= corr;
    }
    Ok(dvec)
}

/// Cholesky factorization that fails loudly on a non-positive pivot.
pub fn cholesky(a: &Matrix, what: &'static str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.clone().cholesky().ok_or(Error::SingularBlock(what))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthonormal_kernel() {
        let b = Matrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 2.0]);
        let n = null_space(&b);
        assert_eq!(n.ncols(), 2);
        assert!((&b * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - Matrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn chart_reproduces_constraint() {
        let c = AffineConstraint::new(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), Vector::from_vec(vec![2.0])).unwrap();
        let chart = c.parametrize().unwrap();
        assert!((chart.particular.clone() - Vector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
        let x = chart.embed(&Vector::from_vec(vec![3.0]));
        assert!(c.residual(&x) < 1e-13);
    }

    #[test]
    fn inconsistent_constraint_is_rejected() {
        let c = AffineConstraint::new(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            Vector::from_vec(vec![1.0, 3.0]),
        )
        .unwrap();
        assert!(matches!(c.parametrize(), Err(Error::ConstraintInfeasible { .. })));
    }

    #[test]
    fn thomas_matches_dense() {
        let lower = [1.0, -0.5, 0.25];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [0.3, 1.0, -1.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let mut a = Matrix::zeros(4, 4);
        for i in 0..4 {
            a[(i, i)] = diag[i];
        }
        for i in 0..3 {
            a[(i + 1, i)] = lower[i];
            a[(i, i + 1)] = upper[i];
        }
        let r = a * Vector::from_vec(x) - Vector::from_row_slice(&rhs);
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn block_thomas_matches_dense() {
        let blk = |v: [f64; 4]| Matrix::from_row_slice(2, 2, &v);
        let diag = vec![blk([4.0, 1.0, 0.5, 5.0]), blk([6.0, 0.0, 1.0, 4.0]), blk([3.0, 0.2, 0.1, 3.0])];
        let lower = vec![blk([1.0, 0.0, 0.3, 1.0]), blk([0.5, 0.1, 0.0, 0.7])];
        let upper = vec![blk([0.2, 0.1, 0.0, 1.0]), blk([1.0, 0.0, 0.4, 0.3])];
        let rhs: Vec<Vector> = (0..3).map(|i| Vector::from_vec(vec![i as f64, 1.0])).collect();
        let x = solve_block_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let mut a = Matrix::zeros(6, 6);
        for (i, d) in diag.iter().enumerate() {
            a.view_mut((2 * i, 2 * i), (2, 2)).copy_from(d);
        }
        for i in 0..2 {
            a.view_mut((2 * i + 2, 2 * i), (2, 2)).copy_from(&lower[i]);
            a.view_mut((2 * i, 2 * i + 2), (2, 2)).copy_from(&upper[i]);
        }
        let xs = Vector::from_iterator(6, x.iter().flat_map(|v| v.iter().copied()));
        let bs = Vector::from_iterator(6, rhs.iter().flat_map(|v| v.iter().copied()));
        assert!((a * xs - bs).norm() < 1e-12);
    }
}
