//! Regularized response function and connecting kernel built from finite
//! spectral data.
//!
//! Each measured mode contributes a jump `1/α̃_k²` at `λ_k`; the free spectrum
//! `π²k²` with jumps `2π²k²` is subtracted mode by mode.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::norming::SpectralData;

/// `sin(√λ t)/√λ`, continued analytically to `λ ≤ 0`.
pub fn s_lambda(lambda: f64, t: f64) -> f64 {
    let x = lambda * t * t;
    if x.abs() < 1e-8 {
        return t * (1.0 - x / 6.0 + x * x / 120.0);
    }
    if lambda > 0.0 {
        let w = lambda.sqrt();
        (w * t).sin() / w
    } else {
        let w = (-lambda).sqrt();
        (w * t).sinh() / w
    }
}

/// `∫_0^x s_lambda(λ, s) ds = (1 - cos √λ x)/λ`.
pub fn s_lambda_integral(lambda: f64, x: f64) -> f64 {
    let h = s_lambda(lambda, 0.5 * x);
    2.0 * h * h
}

/// Same integral through the cosine form; used as an independent check.
fn s_lambda_integral_cos(lambda: f64, x: f64) -> f64 {
    let y = lambda * x * x;
    if y.abs() < 1e-4 {
        return x * x * (0.5 - y / 24.0 + y * y / 720.0 - y * y * y / 40320.0);
    }
    if lambda > 0.0 {
        (1.0 - (lambda.sqrt() * x).cos()) / lambda
    } else {
        (1.0 - ((-lambda).sqrt() * x).cosh()) / lambda
    }
}

/// One spectral term: `weight · s(λ, ·) s(λ, ·)` paired with its free counterpart.
#[derive(Clone, Copy, Debug)]
struct Term {
    lambda: f64,
    weight: f64,
    free_lambda: f64,
    free_weight: f64,
}

fn terms(sd: &SpectralData) -> Result<Vec<Term>> {
    if sd.is_empty() {
        return Err(Error::EmptyData);
    }
    sd.alpha2
        .iter()
        .zip(&sd.lambdas)
        .enumerate()
        .map(|(i, (&a2, &lambda))| {
            if lambda == 0.0 {
                return Err(Error::UnsupportedSpectrum { index: i + 1 });
            }
            if !(a2 > 0.0) {
                return Err(Error::SignConsistency { index: i + 1, value: a2 });
            }
            let k = (i + 1) as f64;
            let free_lambda = std::f64::consts::PI.powi(2) * k * k;
            Ok(Term {
                lambda,
                weight: 1.0 / a2,
                free_lambda,
                free_weight: 2.0 * free_lambda,
            })
        })
        .collect()
}

/// `r_n(t)`.
pub fn restricted_response(sd: &SpectralData, t: f64) -> Result<f64> {
    Ok(terms(sd)?
        .iter()
        .map(|c| c.weight * s_lambda(c.lambda, t) - c.free_weight * s_lambda(c.free_lambda, t))
        .sum())
}

/// `p_n(x) = ½ ∫_0^{|x|} r_n`.
pub fn restricted_p(sd: &SpectralData, x: f64) -> Result<f64> {
    let x = x.abs();
    Ok(0.5
        * terms(sd)?
            .iter()
            .map(|c| {
                c.weight * s_lambda_integral(c.lambda, x)
                    - c.free_weight * s_lambda_integral(c.free_lambda, x)
            })
            .sum::<f64>())
}

/// Symmetric kernel sampled on `t_i = iτ/m`, `i = 0..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelGrid {
    pub tau: f64,
    pub m: usize,
    pub values: DMatrix<f64>,
}

impl KernelGrid {
    pub fn step(&self) -> f64 {
        self.tau / self.m as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn sup_diff(&self, other: &KernelGrid) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_le_bytes())?;
        for i in 0..=self.m {
            for j in 0..=self.m {
                w.write_all(&self.values[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let tau = f64::from_le_bytes(b8);
        if m == 0 || m > 1 << 16 || !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Schema(format!("kernel header m = {m}, tau = {tau}")));
        }
        let mut data = vec![0u8; (m + 1) * (m + 1) * 8];
        r.read_exact(&mut data)?;
        let vals: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite kernel value".into()));
        }
        Ok(Self {
            tau,
            m,
            values: DMatrix::from_row_slice(m + 1, m + 1, &vals),
        })
    }
}

fn check_grid(tau: f64, m: usize) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidInput(format!("tau = {tau} not in (0,1]")));
    }
    if m < 32 {
        return Err(Error::InvalidInput(format!("kernel grid m = {m} < 32")));
    }
    Ok(())
}

fn symmetric_from(m: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..=m)
        .into_par_iter()
        .map(|i| (i..=m).map(|j| f(i, j)).collect())
        .collect();
    let mut values = DMatrix::zeros(m + 1, m + 1);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            values[(i, i + off)] = v;
            values[(i + off, i)] = v;
        }
    }
    values
}

/// `c̃(t, s) = Σ_k [s(λ_k, τ-t) s(λ_k, τ-s)/α̃_k² − s(π²k², τ-t) s(π²k², τ-s) 2π²k²]`.
pub fn restricted_kernel(sd: &SpectralData, tau: f64, m: usize) -> Result<KernelGrid> {
    check_grid(tau, m)?;
    let terms = terms(sd)?;
    let h = tau / m as f64;
    let sample = |lambda: f64| -> Vec<f64> { (0..=m).map(|i| s_lambda(lambda, tau - i as f64 * h)).collect() };
    let tables: Vec<(f64, Vec<f64>, f64, Vec<f64>)> = terms
        .iter()
        .map(|c| (c.weight, sample(c.lambda), c.free_weight, sample(c.free_lambda)))
        .collect();
    let values = symmetric_from(m, |i, j| {
        tables
            .iter()
            .map(|(w, s, w0, s0)| w * s[i] * s[j] - w0 * s0[i] * s0[j])
            .sum()
    });
    Ok(KernelGrid { tau, m, values })
}

/// `c(t, s) = p(2τ − t − s) − p(t − s)` with `p` in closed form.
pub fn kernel_via_p(sd: &SpectralData, tau: f64, m: usize) -> Result<KernelGrid> {
    check_grid(tau, m)?;
    let h = tau / m as f64;
    let p: Vec<f64> = (0..=2 * m)
        .map(|i| restricted_p(sd, i as f64 * h))
        .collect::<Result<_>>()?;
    let values = symmetric_from(m, |i, j| p[2 * m - i - j] - p[j - i]);
    Ok(KernelGrid { tau, m, values })
}

/// `max_i |c(t_i, t_i) − ½ ∫_0^{2(τ−t_i)} r_n|`, the integral taken termwise.
pub fn diagonal_residual(kg: &KernelGrid, sd: &SpectralData) -> Result<f64> {
    let terms = terms(sd)?;
    let mut worst = 0.0f64;
    for i in 0..=kg.m {
        let x = 2.0 * (kg.tau - kg.node(i));
        let half_integral: f64 = 0.5
            * terms
                .iter()
                .map(|c| {
                    c.weight * s_lambda_integral_cos(c.lambda, x)
                        - c.free_weight * s_lambda_integral_cos(c.free_lambda, x)
                })
                .sum::<f64>();
        worst = worst.max((kg.values[(i, i)] - half_integral).abs());
    }
    Ok(worst)
}
