//! Potential recovery from the connecting kernel.
//!
//! Gelfand–Levitan: for every `y` on the kernel grid solve
//! `V(y,t) + c(y,t) + ∫_y^τ c(t,s) V(y,s) ds = 0` and differentiate the diagonal.
//! Boundary control: for a family of `τ` solve `(I + C^τ) f = τ − t`,
//! set `μ(τ) = f^τ(0)` and take `q = μ''/μ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trapezoid_weights, GridFunction};
use crate::kernel::{restricted_kernel, KernelGrid};
use crate::linalg::{solve_symmetric, symmetric_inverse_norm2};
use crate::norming::SpectralData;
use crate::smoothing::local_poly_derivative;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gl,
    Bcm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    /// Kernel grid intervals on `[0, 1]`.
    pub m: usize,
    /// Nodes in the local least-squares window.
    pub window: usize,
    pub cond_limit: f64,
    /// Number of `τ` nodes for the boundary-control family.
    pub tau_points: usize,
    /// Smallest kernel grid used for a single `τ`.
    pub min_tau_intervals: usize,
    /// `|μ|` below which `q = μ''/μ` is not evaluated.
    pub mu_mask: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            m: 256,
            window: 9,
            cond_limit: 1e8,
            tau_points: 64,
            min_tau_intervals: 32,
            mu_mask: 1e-3,
        }
    }
}

/// Solution of `(I + W^{1/2} C W^{1/2}) u = W^{1/2} b`, lifted back to
/// `f = b − C W^{1/2} u`, i.e. the Nyström solution of `f + ∫ c f = b`.
struct NystromSolve {
    f: Vec<f64>,
    cond1: f64,
    residual: f64,
}

fn nystrom(c: &DMatrix<f64>, weights: &[f64], b: &[f64]) -> Option<NystromSolve> {
    let n = b.len();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let v = sw[i] * c[(i, j)] * sw[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let rhs = DVector::from_fn(n, |i, _| sw[i] * b[i]);
    let rep = solve_symmetric(&a, &rhs)?;
    let f = (0..n)
        .map(|i| b[i] - (0..n).map(|l| c[(i, l)] * sw[l] * rep.x[l]).sum::<f64>())
        .collect();
    Some(NystromSolve {
        f,
        cond1: rep.cond1,
        residual: rep.relative_residual,
    })
}

/// `V(y_i, t_j)` for `j ≥ i`, with per-row diagnostics.
#[derive(Clone, Debug)]
pub struct GlSolution {
    pub tau: f64,
    pub m: usize,
    /// `rows[i][j - i] = V(y_i, t_j)`.
    pub rows: Vec<Vec<f64>>,
    /// `V(y_i, y_i)`.
    pub diag: Vec<f64>,
    pub cond: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl GlSolution {
    pub fn sup_norm(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn gl_solve(kg: &KernelGrid, cond_limit: f64) -> Result<GlSolution> {
    let m = kg.m;
    let h = kg.step();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..=m)
        .into_par_iter()
        .map(|i| {
            let n = m - i + 1;
            let c = kg.values.view((i, i), (n, n)).into_owned();
            let w = trapezoid_weights(n, h);
            let b: Vec<f64> = (i..=m).map(|j| -kg.values[(i, j)]).collect();
            let y = kg.node(i);
            let sol = nystrom(&c, &w, &b).ok_or(Error::IllConditioned {
                at: "y",
                position: y,
                cond: f64::INFINITY,
            })?;
            if !(sol.cond1 <= cond_limit) {
                return Err(Error::IllConditioned {
                    at: "y",
                    position: y,
                    cond: sol.cond1,
                });
            }
            Ok((sol.f, sol.cond1, sol.residual))
        })
        .collect::<Result<_>>()?;
    let diag = rows.iter().map(|r| r.0[0]).collect();
    let cond = rows.iter().map(|r| r.1).collect();
    let residuals = rows.iter().map(|r| r.2).collect();
    Ok(GlSolution {
        tau: kg.tau,
        m,
        rows: rows.into_iter().map(|r| r.0).collect(),
        diag,
        cond,
        residuals,
    })
}

/// `q̂(x) = 2 d/dx V(τ−x, τ−x)`; requires `τ = 1`.
pub fn gl_potential(sol: &GlSolution, window: usize) -> Result<GridFunction> {
    if (sol.tau - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "potential grid needs tau = 1, got {}",
            sol.tau
        )));
    }
    let h = sol.tau / sol.m as f64;
    let d = local_poly_derivative(&sol.diag, h, window, 2, 1);
    GridFunction::new((0..=sol.m).map(|j| -2.0 * d[sol.m - j]).collect())
}

/// `τ_k = k/points` for `k = 1..=points`.
pub fn bcm_tau_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|k| k as f64 / points as f64).collect()
}

/// One kernel per `τ` on `[0, τ]` with `max(min, round(τ m))` intervals.
pub fn bcm_kernels(sd: &SpectralData, opts: &ReconstructOptions) -> Result<Vec<KernelGrid>> {
    bcm_tau_grid(opts.tau_points)
        .into_par_iter()
        .map(|tau| {
            let m_tau = ((tau * opts.m as f64).round() as usize).max(opts.min_tau_intervals);
            restricted_kernel(sd, tau, m_tau)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct BcmMu {
    pub tau: Vec<f64>,
    pub mu: Vec<f64>,
    pub cond: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// `μ(τ) = f^τ(0)` where `(I + C^τ) f^τ = τ − t`.
pub fn bcm_mu(kernels: &[KernelGrid], cond_limit: f64) -> Result<BcmMu> {
    let out: Vec<(f64, f64, f64, f64)> = kernels
        .par_iter()
        .map(|kg| {
            let n = kg.m + 1;
            let w = trapezoid_weights(n, kg.step());
            let b: Vec<f64> = (0..n).map(|i| kg.tau - kg.node(i)).collect();
            let sol = nystrom(&kg.values, &w, &b).ok_or(Error::IllConditioned {
                at: "tau",
                position: kg.tau,
                cond: f64::INFINITY,
            })?;
            if !(sol.cond1 <= cond_limit) {
                return Err(Error::IllConditioned {
                    at: "tau",
                    position: kg.tau,
                    cond: sol.cond1,
                });
            }
            Ok((kg.tau, sol.f[0], sol.cond1, sol.residual))
        })
        .collect::<Result<_>>()?;
    Ok(BcmMu {
        tau: out.iter().map(|o| o.0).collect(),
        mu: out.iter().map(|o| o.1).collect(),
        cond: out.iter().map(|o| o.2).collect(),
        residuals: out.iter().map(|o| o.3).collect(),
    })
}

/// `q̂ = μ''/μ` on the uniform grid `τ_k = k/(len−1)`, `mu[0] = μ(0)`.
///
/// `μ''` comes from a local quartic fit. Nodes with `|μ| < mask` take the value
/// of the nearest unmasked node; a masked node away from the ends is an error.
pub fn bcm_potential(mu: &[f64], window: usize, mask: f64) -> Result<GridFunction> {
    let n = mu.len();
    if n < 17 {
        return Err(Error::InvalidInput("mu grid too short".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let d2 = local_poly_derivative(mu, h, window, 4, 2);
    let edge = window / 2;
    let mut q: Vec<Option<f64>> = vec![None; n];
    for i in 0..n {
        if mu[i].abs() >= mask {
            q[i] = Some(d2[i] / mu[i]);
        } else if i > edge && i + edge < n - 1 {
            return Err(Error::SingularDivision { tau: i as f64 * h });
        }
    }
    let known: Vec<usize> = (0..n).filter(|&i| q[i].is_some()).collect();
    if known.is_empty() {
        return Err(Error::SingularDivision { tau: 0.0 });
    }
    let filled = (0..n)
        .map(|i| {
            q[i].unwrap_or_else(|| {
                let j = *known
                    .iter()
                    .min_by_key(|&&j| j.abs_diff(i))
                    .expect("nonempty");
                q[j].expect("known")
            })
        })
        .collect();
    GridFunction::new(filled)
}

/// `K = (M‖c‖_∞ + 1)(1 + ‖V‖_∞)` with `M = ‖(I + C)^{-1}‖₂` on the full interval.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub inverse_norm: f64,
    pub kernel_sup: f64,
    pub solution_sup: f64,
    pub constant: f64,
}

pub fn stability_report(kg: &KernelGrid, sol: &GlSolution) -> StabilityReport {
    let n = kg.m + 1;
    let sw: Vec<f64> = trapezoid_weights(n, kg.step()).iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let v = sw[i] * kg.values[(i, j)] * sw[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let inverse_norm = symmetric_inverse_norm2(&a);
    let kernel_sup = kg.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let solution_sup = sol.sup_norm();
    StabilityReport {
        inverse_norm,
        kernel_sup,
        solution_sup,
        constant: (inverse_norm * kernel_sup + 1.0) * (1.0 + solution_sup),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub cond_max: f64,
    pub residual_max: f64,
    /// Per-`y` (GL) or per-`τ` (BCM) positions of the solved systems.
    pub positions: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cond: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub qhat: GridFunction,
    pub diagnostics: Diagnostics,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Kernel assembly, solve and differentiation for either back-end.
pub fn reconstruct(sd: &SpectralData, method: Method, opts: &ReconstructOptions) -> Result<ReconstructionResult> {
    sd.validate()?;
    match method {
        Method::Gl => {
            let kg = restricted_kernel(sd, 1.0, opts.m)?;
            let sol = gl_solve(&kg, opts.cond_limit)?;
            let qhat = gl_potential(&sol, opts.window)?;
            let stability = stability_report(&kg, &sol);
            Ok(ReconstructionResult {
                qhat,
                diagnostics: Diagnostics {
                    method,
                    cond_max: max_of(&sol.cond),
                    residual_max: max_of(&sol.residuals),
                    positions: (0..=kg.m).map(|i| kg.node(i)).collect(),
                    residuals: sol.residuals,
                    cond: sol.cond,
                    mu: None,
                    stability: Some(stability),
                },
            })
        }
        Method::Bcm => {
            let kernels = bcm_kernels(sd, opts)?;
            let res = bcm_mu(&kernels, opts.cond_limit)?;
            let mut mu = Vec::with_capacity(res.mu.len() + 1);
            mu.push(0.0);
            mu.extend_from_slice(&res.mu);
            let qhat = bcm_potential(&mu, opts.window, opts.mu_mask)?;
            Ok(ReconstructionResult {
                qhat,
                diagnostics: Diagnostics {
                    method,
                    cond_max: max_of(&res.cond),
                    residual_max: max_of(&res.residuals),
                    positions: res.tau,
                    residuals: res.residuals,
                    cond: res.cond,
                    mu: Some(mu),
                    stability: None,
                },
            })
        }
    }
}
