//! Closed forms for the quadratic slow-fast system
//! `E(U) = 1/2 <A_s U, U> - <mu_s, U>`, `e(w) = 1/2 <A_f w, w> - <mu_f, w>`,
//! `R_bar*(Xi, zeta) = 1/2 <(Xi, zeta), K (Xi, zeta)>`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gradsys::{GradientSystem, QuadraticDual, QuadraticEnergy, Space};
use crate::linalg::{cholesky, Matrix, Vector};
use crate::slowfast::SlowFastSystem;

#[derive(Debug, Clone)]
pub struct QuadSlowFastConfig {
    pub a_s: Matrix,
    pub a_f: Matrix,
    pub mu_s: Vector,
    pub mu_f: Vector,
    pub k_ss: Matrix,
    pub k_sf: Matrix,
    /// Equal to `k_sf^T` for Onsager-symmetric mobilities.
    pub k_fs: Matrix,
    pub k_ff: Matrix,
}

impl QuadSlowFastConfig {
    /// Symmetric configuration with `K_fs = K_sf^T`.
    pub fn symmetric(a_s: Matrix, a_f: Matrix, mu_s: Vector, mu_f: Vector, k: Matrix) -> Result<Self> {
        let ns = a_s.nrows();
        let nf = a_f.nrows();
        if k.nrows() != ns + nf || k.ncols() != ns + nf || mu_s.len() != ns || mu_f.len() != nf {
            return Err(Error::Dimension {
                expected: ns + nf,
                got: k.nrows(),
            });
        }
        let cfg = Self {
            k_ss: k.view((0, 0), (ns, ns)).into_owned(),
            k_sf: k.view((0, ns), (ns, nf)).into_owned(),
            k_fs: k.view((ns, 0), (nf, ns)).into_owned(),
            k_ff: k.view((ns, ns), (nf, nf)).into_owned(),
            a_s,
            a_f,
            mu_s,
            mu_f,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn slow_dim(&self) -> usize {
        self.a_s.nrows()
    }

    pub fn fast_dim(&self) -> usize {
        self.a_f.nrows()
    }

    pub fn is_onsager(&self) -> bool {
        (&self.k_fs - self.k_sf.transpose()).amax() <= 1e-14 * (1.0 + self.k_sf.amax())
    }

    pub fn validate(&self) -> Result<()> {
        for (m, what) in [(&self.a_s, "A_s"), (&self.a_f, "A_f")] {
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(Error::Invalid(format!("{what} is not symmetric")));
            }
        }
        cholesky(&self.k_ff, "K_ff")?;
        Ok(())
    }

    /// Full block mobility `K`.
    pub fn mobility(&self) -> Matrix {
        let ns = self.slow_dim();
        let nf = self.fast_dim();
        let mut k = Matrix::zeros(ns + nf, ns + nf);
        k.view_mut((0, 0), (ns, ns)).copy_from(&self.k_ss);
        k.view_mut((0, ns), (ns, nf)).copy_from(&self.k_sf);
        k.view_mut((ns, 0), (nf, ns)).copy_from(&self.k_fs);
        k.view_mut((ns, ns), (nf, nf)).copy_from(&self.k_ff);
        k
    }

    pub fn slow_energy(&self) -> Result<QuadraticEnergy> {
        QuadraticEnergy::new(self.a_s.clone(), self.mu_s.clone())
    }

    pub fn fast_energy(&self) -> Result<QuadraticEnergy> {
        QuadraticEnergy::new(self.a_f.clone(), self.mu_f.clone())
    }
}

/// `K_eff = K_ss - K_sf K_ff^{-1} K_fs`.
pub fn schur_keff(cfg: &QuadSlowFastConfig) -> Result<Matrix> {
    let ch = cholesky(&cfg.k_ff, "K_ff")?;
    Ok(&cfg.k_ss - &cfg.k_sf * ch.solve(&cfg.k_fs))
}

/// NESS for the slow force `Xi`: `A_f w - mu_f = K_ff^{-1} K_fs Xi`, flux `y = K_eff Xi`.
pub fn analytic_ness(cfg: &QuadSlowFastConfig, xi: &Vector) -> Result<(Vector, Vector)> {
    let kff = cholesky(&cfg.k_ff, "K_ff")?;
    let af = cholesky(&cfg.a_f, "A_f")?;
    let rhs = &cfg.mu_f + kff.solve(&(&cfg.k_fs * xi));
    Ok((af.solve(&rhs), schur_keff(cfg)? * xi))
}

/// `B_red(U, Xi) = 1/2 <Xi, K_eff Xi> - 1/2 <mu_s - A_s U, K_eff (mu_s - A_s U)>`.
pub fn bred_quadratic(cfg: &QuadSlowFastConfig, big_u: &Vector, xi: &Vector) -> Result<f64> {
    let keff = schur_keff(cfg)?;
    let f = &cfg.mu_s - &cfg.a_s * big_u;
    let kf = &keff * &f;
    Ok(0.5 * xi.dot(&(&keff * xi)) - 0.5 * f.dot(&kf))
}

/// Fast NESS along the reduced flow, `w~(U)`.
pub fn fast_manifold(cfg: &QuadSlowFastConfig, big_u: &Vector) -> Result<Vector> {
    analytic_ness(cfg, &(&cfg.mu_s - &cfg.a_s * big_u)).map(|(w, _)| w)
}

pub fn to_slow_fast(cfg: &QuadSlowFastConfig) -> Result<SlowFastSystem> {
    if !cfg.is_onsager() {
        return Err(Error::Invalid("gradient structure needs K_fs = K_sf^T".into()));
    }
    SlowFastSystem::product(
        Space::euclidean(cfg.slow_dim(), "X_slow"),
        Space::euclidean(cfg.fast_dim(), "X_fast"),
        Arc::new(cfg.slow_energy()?),
        Arc::new(cfg.fast_energy()?),
        Arc::new(QuadraticDual::new(cfg.mobility())?),
    )
}

/// `(X_slow, E, 1/2 <Xi, K_eff Xi>)`.
pub fn effective_gs(cfg: &QuadSlowFastConfig) -> Result<GradientSystem> {
    GradientSystem::new(
        Space::euclidean(cfg.slow_dim(), "X_slow"),
        Arc::new(cfg.slow_energy()?),
        Arc::new(QuadraticDual::new(schur_keff(cfg)?)?),
    )
}

/// A fixed two-slow, one-fast configuration used by tests, benches and the CLI defaults.
pub fn reference_config() -> QuadSlowFastConfig {
    QuadSlowFastConfig::symmetric(
        Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        Matrix::from_row_slice(1, 1, &[1.5]),
        Vector::from_row_slice(&[1.0, -0.5]),
        Vector::from_row_slice(&[0.3]),
        Matrix::from_row_slice(3, 3, &[1.0, 0.2, 0.4, 0.2, 0.8, -0.3, 0.4, -0.3, 1.0]),
    )
    .expect("reference configuration is valid")
}
