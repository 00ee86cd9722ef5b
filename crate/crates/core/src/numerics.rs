//! Finite differences, quadrature, one-dimensional search and low-discrepancy points.

use crate::linalg::{Matrix, Vector};

/// Central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: &dyn Fn(&Vector) -> f64, x: &Vector) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector function; column j is dF/dx_j.
pub fn fd_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, rows: usize) -> Matrix {
    let mut jac = Matrix::zeros(rows, x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Symmetrized central-difference Hessian built from a gradient.
pub fn fd_hessian_from_gradient(g: &dyn Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let jac = fd_jacobian(g, x, x.len());
    (&jac + jac.transpose()) * 0.5
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson integral over `[a,b]` split at interior breakpoints so that
/// piecewise-smooth integrands are handled without crossing a kink.
pub fn simpson_piecewise(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    let n = breaks.len();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Sample strictly inside so one-sided values are used at the ends.
        let span = b - a;
        let g = |x: f64| f(x.clamp(a + 1e-14 * span, b - 1e-14 * span));
        total += adaptive_simpson(&g, a, b, tol / (n as f64));
    }
    total
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + c.abs() + d.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Brent's method for one-dimensional minimization on `[a, b]`.
pub fn brent_minimize(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let golden = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + golden * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-14;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Point `index` (1-based recommended) of the Halton sequence in `dim` dimensions, in `[0,1)^dim`.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Damped Newton for `F(x) = 0`. `f` returns `None` outside the domain.
/// The Jacobian defaults to central differences.
pub fn newton_system(
    f: &dyn Fn(&Vector) -> Option<Vector>,
    jac: Option<&dyn Fn(&Vector) -> Matrix>,
    x0: &Vector,
    tol: f64,
    max_iter: usize,
) -> crate::error::Result<Vector> {
    use crate::error::Error;
    let mut x = x0.clone();
    let mut fx = f(&x).ok_or_else(|| Error::Domain("Newton start outside the domain".into()))?;
    let mut res = fx.amax();
    let rows = fx.len();
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        let j = match jac {
            Some(j) => j(&x),
            None => {
                let g = |y: &Vector| f(y).unwrap_or_else(|| Vector::from_element(rows, f64::NAN));
                fd_jacobian(&g, &x, rows)
            }
        };
        let d = match j.clone().lu().solve(&(-&fx)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => -(crate::linalg::pinv(&j) * &fx),
        };
        let mut lam = 1.0;
        let mut accepted = false;
        while lam > 1e-10 {
            let xn = &x + &d * lam;
            if let Some(fnew) = f(&xn) {
                let rn = fnew.amax();
                if rn.is_finite() && (rn <= (1.0 - 1e-4 * lam) * res || rn <= tol) {
                    x = xn;
                    fx = fnew;
                    res = rn;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence { residual: res });
        }
    }
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::NewtonDivergence { residual: res })
    }
}
