//! Spectral data `{λ_k, A_k}` and norming coefficients from truncated products.
//!
//! With `A_k = φ_k'(1)/φ_k'(0) = y'(1, λ_k)` and `B_k = ẏ(1, λ_k)` the norming
//! coefficient is `α_k² = A_k B_k`. `B_k` comes from the Hadamard product for
//! `y(1, λ)`, truncated after `N` factors:
//! `B̃_{n,N} = -(1/(n²π²)) ∏_{k≤N, k≠n} (λ_k - λ_n)/(k²π²)`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_extract::ExtractedData;
use crate::sl_forward::LogProduct;

/// Modes beyond the measured count summed explicitly before switching to the
/// Euler–Maclaurin tail.
const DIRECT_TAIL: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    #[serde(rename = "lambda")]
    pub lambdas: Vec<f64>,
    #[serde(rename = "A")]
    pub ratios: Vec<f64>,
    pub alpha2: Vec<f64>,
    #[serde(rename = "N")]
    pub n_used: usize,
    #[serde(rename = "epsilon")]
    pub epsilon_used: f64,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.alpha2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha2.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alpha2.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if self.lambdas.len() < n || self.ratios.len() < n {
            return Err(Error::Schema("spectral arrays have inconsistent lengths".into()));
        }
        if let Some((i, a)) = self.alpha2.iter().enumerate().find(|(_, a)| !(**a > 0.0)) {
            return Err(Error::SignConsistency { index: i + 1, value: *a });
        }
        if let Some(w) = self.lambdas.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateSpectrum(w[0]));
        }
        Ok(())
    }
}

/// `A_k = p1_k / p0_k`, required to be real up to `1e-3` relative.
pub fn trace_ratios(data: &ExtractedData) -> Result<Vec<f64>> {
    data.modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if m.p0.norm() == 0.0 {
                return Err(Error::Consistency(format!("left product of mode {} vanishes", i + 1)));
            }
            let a = m.p1 / m.p0;
            if a.im.abs() > 1e-3 * a.norm() {
                return Err(Error::Consistency(format!(
                    "ratio of mode {} is not real: {a}",
                    i + 1
                )));
            }
            Ok(a.re)
        })
        .collect()
}

/// `B̃_{n,N}` with `N = lambdas.len()`; `n` is 1-based.
pub fn truncated_b(n: usize, lambdas: &[f64]) -> Result<f64> {
    if n == 0 || n > lambdas.len() {
        return Err(Error::InvalidInput(format!(
            "mode {n} outside 1..={}",
            lambdas.len()
        )));
    }
    let ln = lambdas[n - 1];
    let mut prod = LogProduct::one();
    prod.mul(-1.0 / (PI * PI * (n * n) as f64));
    for (i, &lk) in lambdas.iter().enumerate() {
        if i + 1 == n {
            continue;
        }
        if lk == ln {
            return Err(Error::DegenerateSpectrum(lk));
        }
        let free = PI * PI * ((i + 1) * (i + 1)) as f64;
        prod.mul_one_plus((lk - ln - free) / free);
    }
    Ok(prod.value())
}

/// `(ε, N)` with `n²|1 - e^{-ε}| ≤ δ/2` and `n²/N ≤ ε/(2 ln 2)`.
pub fn truncation_schedule(delta: f64, n: usize) -> Result<(f64, usize)> {
    if n == 0 {
        return Err(Error::InvalidInput("schedule needs n >= 1".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("delta = {delta}")));
    }
    let n2 = (n * n) as f64;
    let ratio = delta / (2.0 * n2);
    if ratio >= 1.0 {
        return Err(Error::InfeasibleSchedule { ratio });
    }
    let mut eps = (-(-ratio).ln_1p()).min(1.0 - f64::EPSILON);
    while n2 * (-(-eps).exp_m1()) > 0.5 * delta {
        eps = eps.next_down();
    }
    Ok((eps, samples_for_epsilon(eps, n)?))
}

/// Smallest `N` with `n²/N ≤ ε/(2 ln 2)`.
pub fn samples_for_epsilon(eps: f64, n: usize) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon = {eps} not in (0,1)")));
    }
    let n2 = (n * n) as f64;
    let bound = 2.0 * LN_2 * n2 / eps;
    if bound > 1e15 {
        return Err(Error::InvalidInput(format!("schedule asks for N = {bound:.3e}")));
    }
    let mut big_n = bound.ceil() as usize;
    while n2 / big_n as f64 > eps / (2.0 * LN_2) {
        big_n += 1;
    }
    Ok(big_n.max(n))
}

/// Measured eigenvalues continued by `π²k² + c̄`.
#[derive(Clone, Debug)]
pub struct EigenTail<'a> {
    pub measured: &'a [f64],
    pub shift: f64,
}

impl<'a> EigenTail<'a> {
    /// `c̄` is the mean of `λ_j - π²j²` over measured modes, skipping `j = 1`
    /// when more than one mode is available.
    pub fn new(measured: &'a [f64]) -> Result<Self> {
        if measured.is_empty() {
            return Err(Error::EmptyData);
        }
        let skip = usize::from(measured.len() > 1);
        let offsets: Vec<f64> = measured
            .iter()
            .enumerate()
            .skip(skip)
            .map(|(i, l)| l - PI * PI * ((i + 1) * (i + 1)) as f64)
            .collect();
        let shift = offsets.iter().sum::<f64>() / offsets.len() as f64;
        Ok(Self { measured, shift })
    }

    /// `λ_k`, 1-based.
    pub fn lambda(&self, k: usize) -> f64 {
        if k <= self.measured.len() {
            self.measured[k - 1]
        } else {
            PI * PI * (k * k) as f64 + self.shift
        }
    }
}

/// `Σ_{k=a}^{b} ln(1 - z/k²)` by Euler–Maclaurin; accurate for `a² ≫ |z|`.
pub fn log_tail_sum(z: f64, a: usize, b: usize) -> f64 {
    if b < a {
        return 0.0;
    }
    let (af, bf) = (a as f64, b as f64);
    let f = |k: f64| (-z / (k * k)).ln_1p();
    let mut integral = 0.0;
    let mut d1 = 0.0;
    let mut d3 = 0.0;
    let mut zj = 1.0;
    for j in 1..=12 {
        zj *= z;
        let jf = j as f64;
        let e = 1.0 - 2.0 * jf;
        integral -= zj / (jf * (2.0 * jf - 1.0)) * (af.powf(e) - bf.powf(e));
        let p1 = |k: f64| 2.0 * zj * k.powf(-2.0 * jf - 1.0);
        let p3 = |k: f64| 2.0 * (2.0 * jf + 1.0) * (2.0 * jf + 2.0) * zj * k.powf(-2.0 * jf - 3.0);
        d1 += p1(bf) - p1(af);
        d3 += p3(bf) - p3(af);
        if (zj / af.powi(2 * j)).abs() < 1e-20 {
            break;
        }
    }
    integral + 0.5 * (f(af) + f(bf)) + d1 / 12.0 - d3 / 720.0
}

/// `B̃_{n,N}` over the tail-completed spectrum, `n` 1-based.
pub fn truncated_b_with_tail(n: usize, tail: &EigenTail<'_>, big_n: usize) -> Result<f64> {
    if n == 0 || n > big_n {
        return Err(Error::InvalidInput(format!("mode {n} outside 1..={big_n}")));
    }
    let ln = tail.lambda(n);
    let z = (ln - tail.shift) / (PI * PI);
    let direct_end = big_n.min(
        (tail.measured.len() + DIRECT_TAIL).max(n + DIRECT_TAIL).max((10.0 * z.abs().sqrt()) as usize),
    );
    let mut prod = LogProduct::one();
    prod.mul(-1.0 / (PI * PI * (n * n) as f64));
    for k in 1..=direct_end {
        if k == n {
            continue;
        }
        let lk = tail.lambda(k);
        if lk == ln {
            return Err(Error::DegenerateSpectrum(lk));
        }
        let free = PI * PI * (k * k) as f64;
        prod.mul_one_plus((lk - ln - free) / free);
    }
    prod.log_abs += log_tail_sum(z, direct_end + 1, big_n);
    Ok(prod.value())
}

/// `α̃_k² = A_k B̃_{k,N}` for `k = 1..=n`.
pub fn norming_coefficients(ratios: &[f64], measured: &[f64], n: usize, big_n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > ratios.len() || n > measured.len() {
        return Err(Error::InvalidInput(format!(
            "n = {n} with {} ratios and {} eigenvalues",
            ratios.len(),
            measured.len()
        )));
    }
    if n > big_n {
        return Err(Error::InvalidInput(format!("n = {n} exceeds N = {big_n}")));
    }
    if let Some(w) = measured.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::DegenerateSpectrum(w[0]));
    }
    let tail = EigenTail::new(measured)?;
    (1..=n)
        .map(|k| {
            let a2 = ratios[k - 1] * truncated_b_with_tail(k, &tail, big_n)?;
            if a2 > 0.0 && a2.is_finite() {
                Ok(a2)
            } else {
                Err(Error::SignConsistency { index: k, value: a2 })
            }
        })
        .collect()
}

/// How the truncation level is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Schedule from a kernel accuracy target `δ`.
    Delta(f64),
    /// Fixed `ε`, `N` from the sample-count bound.
    Epsilon(f64),
    /// Explicit product length.
    Fixed(usize),
}

/// Full step from extracted modes to spectral data with `n` modes.
pub fn spectral_data(data: &ExtractedData, n: Option<usize>, truncation: Truncation) -> Result<SpectralData> {
    let lambdas = data.lambdas();
    let ratios = trace_ratios(data)?;
    spectral_from_parts(lambdas, ratios, n, truncation)
}

/// As [`spectral_data`], from eigenvalues and ratios directly.
pub fn spectral_from_parts(
    lambdas: Vec<f64>,
    ratios: Vec<f64>,
    n: Option<usize>,
    truncation: Truncation,
) -> Result<SpectralData> {
    if lambdas.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = n.unwrap_or(lambdas.len());
    let (epsilon_used, n_used) = match truncation {
        Truncation::Delta(d) => truncation_schedule(d, n)?,
        Truncation::Epsilon(e) => (e, samples_for_epsilon(e, n)?),
        Truncation::Fixed(big_n) => (f64::NAN, big_n),
    };
    let alpha2 = norming_coefficients(&ratios, &lambdas, n, n_used)?;
    Ok(SpectralData {
        lambdas: lambdas[..n].to_vec(),
        ratios: ratios[..n].to_vec(),
        alpha2,
        n_used,
        epsilon_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(n: usize) -> Vec<f64> {
        (1..=n).map(|k| PI * PI * (k * k) as f64).collect()
    }

    #[test]
    fn free_b_values() {
        let l = free(10_000);
        let b1 = truncated_b(1, &l).unwrap();
        assert!((b1 + 1.0 / (2.0 * PI * PI)).abs() < 1e-3 / (2.0 * PI * PI));
        let b2 = truncated_b(2, &l).unwrap();
        assert!((b2 - 1.0 / (8.0 * PI * PI)).abs() < 1e-3 / (8.0 * PI * PI));
        assert!(truncated_b(3, &l[..3]).unwrap().is_finite());
    }

    #[test]
    fn duplicate_eigenvalues_rejected() {
        assert!(matches!(truncated_b(1, &[1.0, 1.0]), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn schedules() {
        assert_eq!(samples_for_epsilon(0.1, 3).unwrap(), 125);
        let (eps, n) = truncation_schedule(0.02, 1).unwrap();
        assert!((eps - 0.01005033585350145).abs() < 1e-12);
        assert_eq!(n, 138);
        assert!(matches!(truncation_schedule(2.0, 1), Err(Error::InfeasibleSchedule { .. })));
        assert!(truncation_schedule(1.999, 1).is_ok());
    }

    #[test]
    fn tail_sum_matches_direct_sum() {
        for &z in &[25.0, 1600.0, -30.0] {
            let (a, b) = (5000usize, 400_000usize);
            let direct: f64 = (a..=b).map(|k| (-z / (k * k) as f64).ln_1p()).sum();
            let fast = log_tail_sum(z, a, b);
            assert!((direct - fast).abs() < 1e-12 * direct.abs().max(1e-6), "{z}: {direct} {fast}");
        }
    }

    #[test]
    fn tail_completion_matches_full_product() {
        let full: Vec<f64> = (1..=20_000).map(|k| PI * PI * (k * k) as f64 + 5.0).collect();
        let tail = EigenTail::new(&full[..12]).unwrap();
        assert!((tail.shift - 5.0).abs() < 1e-12);
        for n in [1, 4, 9] {
            let direct = truncated_b(n, &full).unwrap();
            let fast = truncated_b_with_tail(n, &tail, full.len()).unwrap();
            assert!((direct - fast).abs() < 1e-11 * direct.abs(), "{n}");
        }
    }

    #[test]
    fn free_norming_coefficients() {
        let (_, big_n) = truncation_schedule(0.05, 3).unwrap();
        let ratios: Vec<f64> = (1..=3).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a2 = norming_coefficients(&ratios, &free(3), 3, big_n).unwrap();
        for (k, a) in a2.iter().enumerate() {
            let exact = 1.0 / (2.0 * PI * PI * ((k + 1) * (k + 1)) as f64);
            assert!((a - exact).abs() < 3e-3 * exact, "{k} {a} {exact}");
        }
    }

    #[test]
    fn wrong_sign_ratio_is_reported() {
        let r = vec![1.0, 1.0];
        assert!(matches!(
            norming_coefficients(&r, &free(2), 2, 100),
            Err(Error::SignConsistency { index: 1, .. })
        ));
    }
}
