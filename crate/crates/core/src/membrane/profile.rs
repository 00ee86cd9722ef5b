use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Scalar coefficient on one closed subinterval.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// Piecewise-linear interpolation of increasing `(x, value)` knots, constant beyond the ends.
    Table(Vec<(f64, f64)>),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Table(t) => write!(f, "Table({t:?})"),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl Coefficient {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Table(knots) => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let k = knots.partition_point(|p| p.0 <= x).max(1);
                let (x0, y0) = knots[k - 1];
                let (x1, y1) = knots[k];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
            Self::Function(f) => f(x),
        }
    }
}

/// Which one-sided limit to take at a breakpoint `x = +-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Limit from the left, `f(x-)`.
    Below,
    /// Limit from the right, `f(x+)`.
    Above,
}

/// Subinterval of `[-2, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Left,
    Membrane,
    Right,
}

impl Region {
    pub fn locate(x: f64, side: Side) -> Region {
        let below = side == Side::Below;
        if x < -1.0 || (x == -1.0 && below) {
            Region::Left
        } else if x > 1.0 || (x == 1.0 && !below) {
            Region::Right
        } else {
            Region::Membrane
        }
    }
}

/// Scalar coefficient with continuous extensions on `[-2,-1]`, `[-1,1]` and `[1,2]`.
#[derive(Debug, Clone)]
pub struct PiecewiseCoefficient {
    pub left: Coefficient,
    pub membrane: Coefficient,
    pub right: Coefficient,
}

impl PiecewiseCoefficient {
    pub fn constant(c: f64) -> Self {
        Self::uniform(Coefficient::Constant(c))
    }

    pub fn uniform(c: Coefficient) -> Self {
        Self {
            left: c.clone(),
            membrane: c.clone(),
            right: c,
        }
    }

    /// Constant `outer` on the slow region and `inner` in the membrane.
    pub fn two_level(outer: f64, inner: f64) -> Self {
        Self {
            left: Coefficient::Constant(outer),
            membrane: Coefficient::Constant(inner),
            right: Coefficient::Constant(outer),
        }
    }

    pub fn eval(&self, x: f64, side: Side) -> f64 {
        match Region::locate(x, side) {
            Region::Left => self.left.eval(x),
            Region::Membrane => self.membrane.eval(x),
            Region::Right => self.right.eval(x),
        }
    }

    /// Value in a given region (its continuous extension at the ends).
    pub fn eval_in(&self, region: Region, x: f64) -> f64 {
        match region {
            Region::Left => self.left.eval(x),
            Region::Membrane => self.membrane.eval(x),
            Region::Right => self.right.eval(x),
        }
    }
}

/// Symmetric matrix-valued piecewise coefficient, stored row-major.
#[derive(Debug, Clone)]
pub struct MatrixCoefficient {
    pub dim: usize,
    pub entries: Vec<PiecewiseCoefficient>,
}

impl MatrixCoefficient {
    pub fn scalar(c: PiecewiseCoefficient) -> Self {
        Self { dim: 1, entries: vec![c] }
    }

    pub fn diagonal(diag: Vec<PiecewiseCoefficient>) -> Self {
        let n = diag.len();
        let mut entries = vec![PiecewiseCoefficient::constant(0.0); n * n];
        for (i, d) in diag.into_iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self { dim: n, entries }
    }

    pub fn full(dim: usize, entries: Vec<PiecewiseCoefficient>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn eval_in(&self, region: Region, x: f64) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.entries[i * self.dim + j].eval_in(region, x))
    }

    pub fn eval(&self, x: f64, side: Side) -> Matrix {
        self.eval_in(Region::locate(x, side), x)
    }
}

/// Coefficients `A_bar`, `B_bar`, `K_bar` of the membrane problems.
#[derive(Debug, Clone)]
pub struct MembraneProfile {
    pub a_bar: MatrixCoefficient,
    pub k_bar: MatrixCoefficient,
    /// Scalar sorption rate; only used for a single species.
    pub b_bar: PiecewiseCoefficient,
}

impl MembraneProfile {
    pub fn new(a_bar: MatrixCoefficient, k_bar: MatrixCoefficient, b_bar: PiecewiseCoefficient) -> Result<Self> {
        if a_bar.dim != k_bar.dim {
            return Err(Error::Dimension {
                expected: a_bar.dim,
                got: k_bar.dim,
            });
        }
        let p = Self { a_bar, k_bar, b_bar };
        p.validate()?;
        Ok(p)
    }

    pub fn scalar(a: PiecewiseCoefficient, b: PiecewiseCoefficient, k: PiecewiseCoefficient) -> Result<Self> {
        Self::new(MatrixCoefficient::scalar(a), MatrixCoefficient::scalar(k), b)
    }

    pub fn constant(a: f64, b: f64, k: f64) -> Result<Self> {
        Self::scalar(
            PiecewiseCoefficient::constant(a),
            PiecewiseCoefficient::constant(b),
            PiecewiseCoefficient::constant(k),
        )
    }

    pub fn species(&self) -> usize {
        self.a_bar.dim
    }

    pub fn is_scalar(&self) -> bool {
        self.species() == 1
    }

    pub(crate) fn require_scalar(&self) -> Result<()> {
        if !self.is_scalar() {
            return Err(Error::Invalid("this construction needs a single species".into()));
        }
        Ok(())
    }

    /// Uniform positivity of `A_bar`, `K_bar` and nonnegativity of `B_bar`, probed on a grid.
    pub fn validate(&self) -> Result<()> {
        let regions = [(Region::Left, -2.0, -1.0), (Region::Membrane, -1.0, 1.0), (Region::Right, 1.0, 2.0)];
        for (region, lo, hi) in regions {
            for k in 0..=200 {
                let x = lo + (hi - lo) * k as f64 / 200.0;
                for (m, what) in [(&self.a_bar, "A_bar"), (&self.k_bar, "K_bar")] {
                    let v = m.eval_in(region, x);
                    let sym = (&v + v.transpose()) * 0.5;
                    let min = sym.symmetric_eigen().eigenvalues.min();
                    if !(min > 0.0) || (&v - v.transpose()).amax() > 1e-12 * (1.0 + v.amax()) {
                        return Err(Error::SingularCoefficient(format!("{what} at x = {x}")));
                    }
                }
                let b = self.b_bar.eval_in(region, x);
                if !(b >= 0.0) {
                    return Err(Error::SingularCoefficient(format!("B_bar < 0 at x = {x}")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn a_scalar(&self, region: Region, x: f64) -> f64 {
        self.a_bar.entries[0].eval_in(region, x)
    }

    pub(crate) fn k_scalar(&self, region: Region, x: f64) -> f64 {
        self.k_bar.entries[0].eval_in(region, x)
    }

    /// `kappa_bar = K_bar / A_bar` in the membrane.
    pub fn kappa_bar(&self, x: f64) -> f64 {
        self.k_scalar(Region::Membrane, x) / self.a_scalar(Region::Membrane, x)
    }

    /// `beta_bar = B_bar / A_bar^{1/2}` in the membrane.
    pub fn beta_bar(&self, x: f64) -> f64 {
        self.b_bar.eval_in(Region::Membrane, x) / self.a_scalar(Region::Membrane, x).sqrt()
    }

    /// Membrane-side limits `(A_bar(-1+), A_bar(1-))`.
    pub fn a_membrane_ends(&self) -> (f64, f64) {
        (self.a_scalar(Region::Membrane, -1.0), self.a_scalar(Region::Membrane, 1.0))
    }

    /// Slow-side limits `(A_bar(-1-), A_bar(1+))`.
    pub fn a_slow_ends(&self) -> (f64, f64) {
        (self.a_scalar(Region::Left, -1.0), self.a_scalar(Region::Right, 1.0))
    }
}
