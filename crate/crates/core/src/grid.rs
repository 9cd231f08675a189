//! Uniform grid functions on the unit interval.

use crate::error::{Error, Result};

/// Minimum number of intervals accepted for a grid function.
pub const MIN_INTERVALS: usize = 16;

/// Real samples of a function on the uniform partition of [0, 1] into `m` intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_INTERVALS + 1 {
            return Err(Error::InvalidInput(format!(
                "grid function needs at least {} intervals, got {}",
                MIN_INTERVALS,
                values.len().saturating_sub(1)
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite grid value at node {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_fn(intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / intervals as f64;
        Self::new((0..=intervals).map(|i| f(i as f64 * h)).collect())
    }

    pub fn constant(intervals: usize, c: f64) -> Result<Self> {
        Self::from_fn(intervals, |_| c)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.node(i))
    }

    /// Piecewise-linear interpolation; arguments outside [0, 1] are clamped.
    pub fn interpolate(&self, x: f64) -> f64 {
        let m = self.intervals();
        let s = (x.clamp(0.0, 1.0) * m as f64).min(m as f64);
        let i = (s.floor() as usize).min(m - 1);
        let frac = s - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Composite trapezoid rule over [0, 1].
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.step())
    }

    pub fn mean(&self) -> f64 {
        self.integral()
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        trapezoid(&sq, self.step()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Resample onto a grid with `intervals` intervals by linear interpolation.
    pub fn resample(&self, intervals: usize) -> Result<Self> {
        if intervals == self.intervals() {
            return Ok(self.clone());
        }
        Self::from_fn(intervals, |x| self.interpolate(x))
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(
            self.values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(self.node(i), v))
                .collect(),
        )
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        }
    }
}

/// Running trapezoid primitive, `out[i] = ∫_0^{x_i} f`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// `sup_{t in [a,b]} |∫_a^t (f - g)|`, evaluated on the grid of `f` with `g`
/// interpolated onto it.
pub fn primitive_error(f: &GridFunction, g: &GridFunction, a: f64, b: f64) -> f64 {
    let h = f.step();
    let lo = (a / h).round() as usize;
    let hi = ((b / h).round() as usize).min(f.intervals());
    if hi <= lo {
        return 0.0;
    }
    let diff: Vec<f64> = (lo..=hi)
        .map(|i| f.values()[i] - g.interpolate(f.node(i)))
        .collect();
    cumulative_trapezoid(&diff, h)
        .into_iter()
        .fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `sup_{t in [a,b]} |∫_0^t (f - g)|` on the grid of `f`.
pub fn primitive_error_from_origin(f: &GridFunction, g: &GridFunction, a: f64, b: f64) -> f64 {
    let diff: Vec<f64> = f
        .nodes()
        .zip(f.values())
        .map(|(x, v)| v - g.interpolate(x))
        .collect();
    cumulative_trapezoid(&diff, f.step())
        .into_iter()
        .zip(f.nodes())
        .filter(|(_, x)| *x >= a - 1e-12 && *x <= b + 1e-12)
        .fold(0.0, |acc, (v, _)| acc.max(v.abs()))
}

/// Mean of `f` over [a, b] by trapezoid on the grid nodes inside the window.
pub fn window_mean(f: &GridFunction, a: f64, b: f64) -> f64 {
    let h = f.step();
    let lo = (a / h).round() as usize;
    let hi = ((b / h).round() as usize).min(f.intervals());
    let span = (hi - lo) as f64 * h;
    trapezoid(&f.values()[lo..=hi], h) / span
}

/// Sup-norm of `f - g` over grid nodes of `f` lying in [a, b].
pub fn window_sup_diff(f: &GridFunction, g: &GridFunction, a: f64, b: f64) -> f64 {
    f.nodes()
        .zip(f.values())
        .filter(|(x, _)| *x >= a - 1e-12 && *x <= b + 1e-12)
        .fold(0.0, |acc, (x, v)| acc.max((v - g.interpolate(x)).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_or_nonfinite() {
        assert!(GridFunction::new(vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 33];
        v[5] = f64::NAN;
        assert!(GridFunction::new(v).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let g = GridFunction::from_fn(32, |x| 3.0 * x + 1.0).unwrap();
        assert!((g.integral() - 2.5).abs() < 1e-14);
        assert!((g.interpolate(0.3) - 1.9).abs() < 1e-14);
    }

    #[test]
    fn primitive_error_of_constant_offset() {
        let f = GridFunction::constant(100, 5.1).unwrap();
        let g = GridFunction::constant(100, 5.0).unwrap();
        let e = primitive_error(&f, &g, 0.1, 0.9);
        assert!((e - 0.08).abs() < 1e-12);
        assert!((window_mean(&f, 0.1, 0.9) - 5.1).abs() < 1e-12);
    }

    #[test]
    fn primitive_from_origin_includes_left_part() {
        let f = GridFunction::from_fn(100, |x| if x < 0.1 { 1.0 } else { 0.0 }).unwrap();
        let g = GridFunction::constant(100, 0.0).unwrap();
        let e = primitive_error_from_origin(&f, &g, 0.2, 0.9);
        assert!((e - 0.095).abs() < 1e-12, "{e}");
        assert_eq!(primitive_error(&f, &g, 0.2, 0.9), 0.0);
    }
}
