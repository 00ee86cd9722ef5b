//! Fixtures shared by the benchmarks in `benches/`.

use nessedp_core::membrane::{Coefficient, MembraneProfile, PiecewiseCoefficient};
use nessedp_core::Vector;

/// Variable scalar profile with `A_bar` continuous at `x = +-1`.
pub fn layered_profile() -> MembraneProfile {
    MembraneProfile::scalar(
        PiecewiseCoefficient {
            left: Coefficient::function(|x| 1.3 + 0.1 * (x + 1.0)),
            membrane: Coefficient::function(|x| 1.0 + 0.3 * x * x),
            right: Coefficient::Constant(1.3),
        },
        PiecewiseCoefficient::two_level(0.5, 1.5),
        PiecewiseCoefficient {
            left: Coefficient::Constant(1.0),
            membrane: Coefficient::function(|x| 0.7 + 0.2 * x),
            right: Coefficient::Constant(2.0),
        },
    )
    .expect("valid profile")
}

/// Smooth positive state sampled at `x`.
pub fn smooth_state(x: &[f64]) -> Vector {
    Vector::from_iterator(x.len(), x.iter().map(|&x| 1.0 + 0.4 * (0.8 * x).sin()))
}
