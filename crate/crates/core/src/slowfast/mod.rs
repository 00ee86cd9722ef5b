//! Slow-fast gradient systems `E(U) + eps e(w)` in the product case and the
//! port-constrained case, their eps-families, fast-NESS elimination, reduced
//! B-functions and the eps-convergence harness.

mod dual;
mod reduce;
mod study;

pub use dual::{ChartEnergy, ConstrainedEpsDual, EpsDual};
pub use reduce::{
    bred_numeric, build_effective, case2_beff, reduced_b, reduced_rhs, solve_fast_ness, EffectiveDual, EffectiveSystem, FastNess,
    FastNessOptions, Provenance,
};
pub use study::{
    convergence_study, integrate_slow_fast, integrate_slow_fast_on, ConvergenceReport, ConvergenceRow, InitialFast,
    SlowFastTrajectory, StudyOptions,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gradsys::{DualDissipation, Energy, GradientSystem, Space, SumEnergy};
use crate::linalg::{null_space, Matrix, Vector};

/// Port data of the constrained case: states couple through `P_slow U = P_fast w`,
/// forces through `P*_fast zeta = P*_slow Xi`. Flux injections are the transposes
/// of the force read-outs.
#[derive(Clone)]
pub struct PortCoupling {
    pub r_slow: Arc<dyn DualDissipation>,
    pub r_fast: Arc<dyn DualDissipation>,
    /// `m x n_slow`.
    pub p_slow: Matrix,
    /// `m x n_fast`.
    pub p_fast: Matrix,
    /// `m x n_slow`.
    pub p_slow_star: Matrix,
    /// `m x n_fast`.
    pub p_fast_star: Matrix,
}

impl PortCoupling {
    pub fn port_dim(&self) -> usize {
        self.p_slow.nrows()
    }

    /// `P_slow: Y -> X_slow` on fluxes.
    pub fn inject_slow(&self) -> Matrix {
        self.p_slow_star.transpose()
    }

    pub fn inject_fast(&self) -> Matrix {
        self.p_fast_star.transpose()
    }
}

#[derive(Clone)]
pub enum Coupling {
    /// `R_bar*(U, w; Xi, zeta)` on `X_slow x X_fast`.
    Product(Arc<dyn DualDissipation>),
    Port(PortCoupling),
}

#[derive(Clone)]
pub struct SlowFastSystem {
    pub slow: Space,
    pub fast: Space,
    /// `E` on `X_slow`.
    pub energy: Arc<dyn Energy>,
    /// `e` on `X_fast`.
    pub fast_energy: Arc<dyn Energy>,
    pub coupling: Coupling,
}

impl std::fmt::Debug for SlowFastSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlowFastSystem")
            .field("slow", &self.slow)
            .field("fast", &self.fast)
            .field("product", &self.is_product())
            .finish()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

impl SlowFastSystem {
    pub fn product(
        slow: Space,
        fast: Space,
        energy: Arc<dyn Energy>,
        fast_energy: Arc<dyn Energy>,
        rbar: Arc<dyn DualDissipation>,
    ) -> Result<Self> {
        check_dim(slow.dim, energy.dim())?;
        check_dim(fast.dim, fast_energy.dim())?;
        check_dim(slow.dim + fast.dim, rbar.dim())?;
        Ok(Self {
            slow,
            fast,
            energy,
            fast_energy,
            coupling: Coupling::Product(rbar),
        })
    }

    pub fn port_constrained(
        slow: Space,
        fast: Space,
        energy: Arc<dyn Energy>,
        fast_energy: Arc<dyn Energy>,
        coupling: PortCoupling,
    ) -> Result<Self> {
        check_dim(slow.dim, energy.dim())?;
        check_dim(fast.dim, fast_energy.dim())?;
        check_dim(slow.dim, coupling.r_slow.dim())?;
        check_dim(fast.dim, coupling.r_fast.dim())?;
        let m = coupling.port_dim();
        for (mat, cols) in [
            (&coupling.p_slow, slow.dim),
            (&coupling.p_fast, fast.dim),
            (&coupling.p_slow_star, slow.dim),
            (&coupling.p_fast_star, fast.dim),
        ] {
            check_dim(m, mat.nrows())?;
            check_dim(cols, mat.ncols())?;
        }
        Ok(Self {
            slow,
            fast,
            energy,
            fast_energy,
            coupling: Coupling::Port(coupling),
        })
    }

    pub fn slow_dim(&self) -> usize {
        self.slow.dim
    }

    pub fn fast_dim(&self) -> usize {
        self.fast.dim
    }

    pub fn is_product(&self) -> bool {
        matches!(self.coupling, Coupling::Product(_))
    }

    pub fn port(&self) -> Option<&PortCoupling> {
        match &self.coupling {
            Coupling::Port(p) => Some(p),
            Coupling::Product(_) => None,
        }
    }

    pub fn split(&self, u: &Vector) -> (Vector, Vector) {
        let ns = self.slow_dim();
        (u.rows(0, ns).into_owned(), u.rows(ns, u.len() - ns).into_owned())
    }

    pub fn join(&self, big_u: &Vector, w: &Vector) -> Vector {
        Vector::from_iterator(big_u.len() + w.len(), big_u.iter().chain(w.iter()).copied())
    }

    /// `|P_slow U - P_fast w|`, zero in the product case.
    pub fn constraint_residual(&self, big_u: &Vector, w: &Vector) -> f64 {
        match &self.coupling {
            Coupling::Product(_) => 0.0,
            Coupling::Port(p) => (&p.p_slow * big_u - &p.p_fast * w).amax(),
        }
    }

    /// `E(U) + scale e(w)`.
    pub fn combined_energy(&self, scale: f64) -> SumEnergy {
        SumEnergy {
            slow: self.energy.clone(),
            fast: self.fast_energy.clone(),
            fast_scale: scale,
        }
    }

    pub fn product_space(&self) -> Space {
        let n = self.slow_dim() + self.fast_dim();
        if self.slow.positive && self.fast.positive {
            Space::positive(n, "X_slow x X_fast")
        } else {
            Space::euclidean(n, "X_slow x X_fast")
        }
    }

    /// `(X, E + e, R_bar)` of the product case.
    pub fn bar_gs(&self) -> Result<GradientSystem> {
        match &self.coupling {
            Coupling::Product(r) => GradientSystem::new(self.product_space(), Arc::new(self.combined_energy(1.0)), r.clone()),
            Coupling::Port(_) => Err(Error::Invalid("no product dissipation in the port-constrained case".into())),
        }
    }

    /// `(X_slow, E, R_slow)` of the port-constrained case.
    pub fn slow_gs(&self) -> Result<GradientSystem> {
        let p = self.port().ok_or_else(|| Error::Invalid("product case has no separate slow dissipation".into()))?;
        GradientSystem::new(self.slow.clone(), self.energy.clone(), p.r_slow.clone())
    }

    /// `(X_fast, e, R_fast)` of the port-constrained case.
    pub fn fast_gs(&self) -> Result<GradientSystem> {
        let p = self.port().ok_or_else(|| Error::Invalid("product case has no separate fast dissipation".into()))?;
        GradientSystem::new(self.fast.clone(), self.fast_energy.clone(), p.r_fast.clone())
    }

    /// Starting guess for the fast variable.
    pub(crate) fn fast_start(&self) -> Vector {
        self.fast_energy.equilibrium().unwrap_or_else(|| {
            if self.fast.positive {
                Vector::from_element(self.fast_dim(), 1.0)
            } else {
                Vector::zeros(self.fast_dim())
            }
        })
    }
}

/// The eps-member of the family. In the port-constrained case the state space is
/// `ker Q` and `gs` acts on coordinates `s` with `u = basis s`.
#[derive(Clone, Debug)]
pub struct EpsSystem {
    pub gs: GradientSystem,
    pub basis: Option<Matrix>,
}

impl EpsSystem {
    /// Map a full state `(U, w)` to the coordinates of `gs`.
    pub fn coords(&self, u: &Vector) -> Vector {
        match &self.basis {
            None => u.clone(),
            Some(b) => b.transpose() * u,
        }
    }

    pub fn state(&self, s: &Vector) -> Vector {
        match &self.basis {
            None => s.clone(),
            Some(b) => b * s,
        }
    }
}

pub fn assemble_eps_gs(sf: &SlowFastSystem, eps: f64) -> Result<EpsSystem> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    let energy = Arc::new(sf.combined_energy(eps));
    match &sf.coupling {
        Coupling::Product(r) => {
            let dual = EpsDual::new(r.clone(), sf.slow_dim(), eps);
            let gs = GradientSystem::new(sf.product_space(), energy, Arc::new(dual))?;
            Ok(EpsSystem { gs, basis: None })
        }
        Coupling::Port(p) => {
            let q = {
                let ns = sf.slow_dim();
                let nf = sf.fast_dim();
                let mut q = Matrix::zeros(p.port_dim(), ns + nf);
                q.view_mut((0, 0), (p.port_dim(), ns)).copy_from(&p.p_slow);
                q.view_mut((0, ns), (p.port_dim(), nf)).copy_from(&(-&p.p_fast));
                q
            };
            let basis = null_space(&q);
            let k = basis.ncols();
            let chart_energy = ChartEnergy::new(energy, basis.clone());
            let dual = ConstrainedEpsDual::new(p.clone(), sf.slow_dim(), eps, basis.clone());
            let gs = GradientSystem::new(Space::euclidean(k, "ker Q"), Arc::new(chart_energy), Arc::new(dual))?;
            Ok(EpsSystem { gs, basis: Some(basis) })
        }
    }
}
