//! Forward Sturm–Liouville machinery for `-y'' + q y = λ y` on [0, 1].
//!
//! Cauchy solves use classical RK4 on the grid of `q` (midpoint values of `q`
//! come from linear interpolation). Dirichlet eigenvalues are the zeros of
//! `λ ↦ y(1, λ)`, isolated with Sturm zero counting inside a window centred on
//! the asymptotic position `π²k² + mean(q)` and then polished with Brent's method.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{trapezoid, GridFunction};

/// Solution of the Cauchy problem `y(0) = 0, y'(0) = 1` sampled on the grid of `q`.
#[derive(Clone, Debug)]
pub struct CauchyTrace {
    pub lambda: f64,
    pub y: Vec<f64>,
    pub yprime: Vec<f64>,
}

impl CauchyTrace {
    pub fn end(&self) -> (f64, f64) {
        (*self.y.last().unwrap(), *self.yprime.last().unwrap())
    }
}

/// Dirichlet eigenpairs together with endpoint slopes of the normalized eigenfunctions.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub lambdas: Vec<f64>,
    /// `φ_k'(0)`; equals `1 / norms[k]`.
    pub slope0: Vec<f64>,
    /// `φ_k'(1)`.
    pub slope1: Vec<f64>,
    /// `‖y(·, λ_k)‖_{L²}`.
    pub norms: Vec<f64>,
    pub eigenfunctions: Vec<GridFunction>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Squared norms `α_k² = ‖y(·, λ_k)‖²`.
    pub fn alpha2(&self) -> Vec<f64> {
        self.norms.iter().map(|n| n * n).collect()
    }

    /// Ratios `φ_k'(1) / φ_k'(0) = y'(1, λ_k)`.
    pub fn ratios(&self) -> Vec<f64> {
        self.slope1
            .iter()
            .zip(&self.slope0)
            .map(|(s1, s0)| s1 / s0)
            .collect()
    }

    /// Keep only the first `count` modes.
    pub fn truncated(&self, count: usize) -> EigenSystem {
        let c = count.min(self.len());
        EigenSystem {
            lambdas: self.lambdas[..c].to_vec(),
            slope0: self.slope0[..c].to_vec(),
            slope1: self.slope1[..c].to_vec(),
            norms: self.norms[..c].to_vec(),
            eigenfunctions: self.eigenfunctions[..c].to_vec(),
        }
    }
}

#[inline]
fn rk4_step(y: f64, p: f64, h: f64, g0: f64, gm: f64, g1: f64) -> (f64, f64) {
    // y' = p, p' = g(x) y with g = q - λ
    let k1y = p;
    let k1p = g0 * y;
    let k2y = p + 0.5 * h * k1p;
    let k2p = gm * (y + 0.5 * h * k1y);
    let k3y = p + 0.5 * h * k2p;
    let k3p = gm * (y + 0.5 * h * k2y);
    let k4y = p + h * k3p;
    let k4p = g1 * (y + h * k3y);
    (
        y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite lambda {lambda}")))
    }
}

/// Integrate `-y'' + q y = λ y`, `y(0) = 0`, `y'(0) = 1` across [0, 1].
pub fn cauchy_solve(q: &GridFunction, lambda: f64) -> Result<CauchyTrace> {
    check_lambda(lambda)?;
    let qv = q.values();
    let h = q.step();
    let mut y = Vec::with_capacity(qv.len());
    let mut yp = Vec::with_capacity(qv.len());
    let (mut cy, mut cp) = (0.0, 1.0);
    y.push(cy);
    yp.push(cp);
    for i in 0..q.intervals() {
        let g0 = qv[i] - lambda;
        let g1 = qv[i + 1] - lambda;
        (cy, cp) = rk4_step(cy, cp, h, g0, 0.5 * (g0 + g1), g1);
        y.push(cy);
        yp.push(cp);
    }
    Ok(CauchyTrace {
        lambda,
        y,
        yprime: yp,
    })
}

/// `(y(1, λ), y'(1, λ), number of sign changes of y on (0, 1])`.
fn shoot(q: &GridFunction, lambda: f64) -> (f64, f64, usize) {
    let qv = q.values();
    let h = q.step();
    let (mut y, mut p) = (0.0, 1.0);
    let mut prev_sign = 1.0;
    let mut changes = 0;
    for i in 0..q.intervals() {
        let g0 = qv[i] - lambda;
        let g1 = qv[i + 1] - lambda;
        (y, p) = rk4_step(y, p, h, g0, 0.5 * (g0 + g1), g1);
        if y != 0.0 {
            let s = y.signum();
            if s != prev_sign {
                changes += 1;
                prev_sign = s;
            }
        }
    }
    (y, p, changes)
}

/// `y(1, λ)` for the Cauchy problem.
pub fn end_value(q: &GridFunction, lambda: f64) -> f64 {
    shoot(q, lambda).0
}

/// Number of Dirichlet eigenvalues strictly below `lambda` (Sturm oscillation count).
pub fn count_below(q: &GridFunction, lambda: f64) -> usize {
    shoot(q, lambda).2
}

/// Brent's method on a sign-changing bracket, iterated to machine precision.
pub(crate) fn brent(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> Option<f64> {
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs().max(1.0);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut qq);
            if a == c {
                p = 2.0 * xm * s;
                qq = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                qq = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                qq = -qq;
            }
            p = p.abs();
            let min1 = 3.0 * xm * qq - (tol * qq).abs();
            let min2 = (e * qq).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / qq;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}

fn locate_eigenvalue(q: &GridFunction, k: usize, mean_q: f64) -> Result<f64> {
    let kf = k as f64;
    let centre = PI * PI * kf * kf + mean_q;
    let mut delta = PI * PI * (kf - 0.5).max(0.5);
    let (mut lo, mut hi);
    let mut attempts = 0;
    loop {
        lo = centre - delta;
        hi = centre + delta;
        if count_below(q, lo) < k && count_below(q, hi) >= k {
            break;
        }
        attempts += 1;
        if attempts > 40 {
            return Err(Error::Convergence {
                index: k,
                detail: format!("no bracket within ±{delta:e} of {centre:e}"),
            });
        }
        delta *= 2.0;
    }
    // shrink until the bracket holds exactly the k-th eigenvalue
    for _ in 0..200 {
        let below_lo = count_below(q, lo);
        let below_hi = count_below(q, hi);
        if below_lo == k - 1 && below_hi == k {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_below(q, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let f = |l: f64| end_value(q, l);
    let (flo, fhi) = (f(lo), f(hi));
    brent(f, lo, hi, flo, fhi).ok_or_else(|| Error::Convergence {
        index: k,
        detail: format!("y(1, λ) has no sign change on [{lo}, {hi}]"),
    })
}

/// First `count` Dirichlet eigenpairs of `-φ'' + q φ`.
pub fn dirichlet_eigens(q: &GridFunction, count: usize) -> Result<EigenSystem> {
    if count == 0 {
        return Err(Error::InvalidInput("eigenvalue count must be >= 1".into()));
    }
    let mean_q = q.mean();
    let h = q.step();
    let mut sys = EigenSystem {
        lambdas: Vec::with_capacity(count),
        slope0: Vec::with_capacity(count),
        slope1: Vec::with_capacity(count),
        norms: Vec::with_capacity(count),
        eigenfunctions: Vec::with_capacity(count),
    };
    for k in 1..=count {
        let lambda = locate_eigenvalue(q, k, mean_q)?;
        if lambda == 0.0 {
            return Err(Error::ZeroEigenvalue { index: k });
        }
        let trace = cauchy_solve(q, lambda)?;
        let sq: Vec<f64> = trace.y.iter().map(|v| v * v).collect();
        let norm = trapezoid(&sq, h).sqrt();
        let (_, yp1) = trace.end();
        sys.lambdas.push(lambda);
        sys.slope0.push(1.0 / norm);
        sys.slope1.push(yp1 / norm);
        sys.norms.push(norm);
        sys.eigenfunctions.push(GridFunction::new(
            trace.y.iter().map(|v| v / norm).collect(),
        )?);
    }
    Ok(sys)
}

/// `∂_λ y(1, λ)` by a Richardson-extrapolated centred difference (relative step 1e-5).
pub fn end_value_lambda_derivative(q: &GridFunction, lambda: f64) -> f64 {
    let step = 1e-5 * lambda.abs().max(1.0);
    let central = |d: f64| (end_value(q, lambda + d) - end_value(q, lambda - d)) / (2.0 * d);
    let coarse = central(step);
    let fine = central(0.5 * step);
    (4.0 * fine - coarse) / 3.0
}

/// Relative defect of `‖y(·, λ_k)‖² = y'(1, λ_k) ∂_λ y(1, λ_k)` for mode `mode` (1-based).
pub fn norm_identity_residual(q: &GridFunction, sys: &EigenSystem, mode: usize) -> Result<f64> {
    if mode == 0 || mode > sys.len() {
        return Err(Error::InvalidInput(format!(
            "mode {mode} outside 1..={}",
            sys.len()
        )));
    }
    let lambda = sys.lambdas[mode - 1];
    let norm2 = sys.norms[mode - 1].powi(2);
    let (_, yp1, _) = shoot(q, lambda);
    let ydot = end_value_lambda_derivative(q, lambda);
    Ok((norm2 - yp1 * ydot).abs() / norm2)
}

/// Accumulates `∏ x_i` as a sign and a log-magnitude.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogProduct {
    pub log_abs: f64,
    pub negative: bool,
    pub zero: bool,
}

impl LogProduct {
    pub fn one() -> Self {
        Self {
            log_abs: 0.0,
            negative: false,
            zero: false,
        }
    }

    /// Multiply by `1 + u`, using `ln_1p` for accuracy when `u` is small.
    pub fn mul_one_plus(&mut self, u: f64) {
        let x = 1.0 + u;
        if x == 0.0 {
            self.zero = true;
            return;
        }
        if x < 0.0 {
            self.negative = !self.negative;
        }
        self.log_abs += if u.abs() < 0.5 { u.ln_1p() } else { x.abs().ln() };
    }

    pub fn mul(&mut self, x: f64) {
        if x == 0.0 {
            self.zero = true;
            return;
        }
        if x < 0.0 {
            self.negative = !self.negative;
        }
        self.log_abs += x.abs().ln();
    }

    pub fn value(&self) -> f64 {
        if self.zero {
            return 0.0;
        }
        let v = self.log_abs.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Truncated Hadamard product `∏_{k=1}^{N} (λ_k - λ) / (k² π²)` for `y(1, λ)`.
pub fn y1_product(lambda: f64, lambdas: &[f64]) -> f64 {
    let mut prod = LogProduct::one();
    for (i, &lk) in lambdas.iter().enumerate() {
        if lk == lambda {
            return 0.0;
        }
        let free = PI * PI * ((i + 1) * (i + 1)) as f64;
        prod.mul_one_plus((lk - lambda - free) / free);
    }
    prod.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_q(m: usize) -> GridFunction {
        GridFunction::constant(m, 0.0).unwrap()
    }

    #[test]
    fn free_cauchy_solutions() {
        let q = zero_q(1024);
        let t = cauchy_solve(&q, PI * PI).unwrap();
        let (y1, yp1) = t.end();
        assert!(y1.abs() < 1e-10, "{y1}");
        assert!((yp1 + 1.0).abs() < 1e-10);
        assert_eq!(t.y[0], 0.0);
        assert_eq!(t.yprime[0], 1.0);
        let mid = t.y[512];
        assert!((mid - 1.0 / PI).abs() < 1e-11);

        let t0 = cauchy_solve(&q, 0.0).unwrap();
        assert!((t0.end().0 - 1.0).abs() < 1e-14);

        let tm = cauchy_solve(&q, -1.0).unwrap();
        assert!((tm.end().0 - 1f64.sinh()).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonfinite_lambda() {
        assert!(cauchy_solve(&zero_q(32), f64::INFINITY).is_err());
    }

    #[test]
    fn free_spectrum_and_slopes() {
        let sys = dirichlet_eigens(&zero_q(2000), 3).unwrap();
        for k in 1..=3 {
            let kf = k as f64;
            let l = sys.lambdas[k - 1];
            assert!((l - PI * PI * kf * kf).abs() / l < 1e-10);
            let s0 = 2f64.sqrt() * kf * PI;
            assert!((sys.slope0[k - 1] - s0).abs() / s0 < 1e-10);
            let s1 = s0 * if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((sys.slope1[k - 1] - s1).abs() / s0 < 1e-9);
        }
    }

    #[test]
    fn constant_shift() {
        let sys = dirichlet_eigens(&GridFunction::constant(1000, 5.0).unwrap(), 3).unwrap();
        for k in 1..=3 {
            let expected = PI * PI * (k * k) as f64 + 5.0;
            assert!((sys.lambdas[k - 1] - expected).abs() / expected < 1e-8);
        }
    }

    #[test]
    fn negative_ground_state_is_found() {
        let q = GridFunction::constant(512, -15.0).unwrap();
        let sys = dirichlet_eigens(&q, 2).unwrap();
        assert!((sys.lambdas[0] - (PI * PI - 15.0)).abs() < 1e-8);
        assert!(sys.lambdas[0] < 0.0);
    }

    #[test]
    fn zero_eigenvalue_rejected() {
        let q = GridFunction::constant(256, -PI * PI).unwrap();
        match dirichlet_eigens(&q, 1) {
            Err(Error::ZeroEigenvalue { index: 1 }) => {}
            other => {
                // the discrete root sits O(h^4) away from zero
                let l = other.unwrap().lambdas[0];
                assert!(l.abs() < 1e-7, "{l}");
            }
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(dirichlet_eigens(&zero_q(64), 0).is_err());
    }

    #[test]
    fn norm_identity_free() {
        let q = zero_q(2000);
        let sys = dirichlet_eigens(&q, 1).unwrap();
        // ‖y‖² = 1/(2π²), y'(1) ∂_λ y(1) = (−1)(−1/(2π²))
        assert!((sys.norms[0].powi(2) - 0.5 / (PI * PI)).abs() < 1e-12);
        assert!(norm_identity_residual(&q, &sys, 1).unwrap() <= 1e-6);
    }

    #[test]
    fn product_formula_examples() {
        let free: Vec<f64> = (1..=10_000).map(|k| PI * PI * (k * k) as f64).collect();
        assert!((y1_product(0.0, &free) - 1.0).abs() < 1e-3);
        assert!((y1_product(PI * PI / 4.0, &free) - 2.0 / PI).abs() < 1e-3);
        assert_eq!(y1_product(free[1], &free), 0.0);
    }

    #[test]
    fn log_product_tracks_sign() {
        let mut p = LogProduct::one();
        p.mul(-2.0);
        p.mul(3.0);
        p.mul_one_plus(-1.5);
        assert!((p.value() - 3.0).abs() < 1e-14);
    }
}
