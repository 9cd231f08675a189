//! Truncation and convergence study over a `(δ, n)` grid against exact
//! spectral data of a known potential.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{parse_potential, Config};
use super::run::{schedule_holds, AtStage, Stage, StageResult, METRIC_WINDOW};
use crate::error::{Error, Result};
use crate::grid::{primitive_error_from_origin, GridFunction};
use crate::kernel::restricted_kernel;
use crate::norming::{norming_coefficients, truncation_schedule, SpectralData};
use crate::reconstruct::{reconstruct, Method};
use crate::sl_forward::{dirichlet_eigens, EigenSystem};

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub n: usize,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    /// `max_k |α_k − α̃_k|`.
    pub alpha_gap: f64,
    /// `4|1 − e^{−ε}|`.
    pub alpha_bound: f64,
    pub alpha_ok: bool,
    /// `‖c_n − c̃_{n,N}‖_∞` at `τ = 1`.
    pub kernel_gap: f64,
    pub kernel_gap_over_delta: f64,
    /// `sup_{t ∈ [0.1, 0.9]} |∫_0^t (q̂ − q)|`.
    pub hinv_proxy: f64,
    pub schedule_ok: bool,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Per `δ`: is the proxy column strictly decreasing in `n`?
    pub proxy_decreasing: Vec<(f64, bool)>,
}

impl ConvergenceReport {
    pub fn violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status != "ok" || !r.alpha_ok || !r.schedule_ok)
            .count()
    }
}

fn exact_spectral(sys: &EigenSystem, n: usize) -> SpectralData {
    SpectralData {
        lambdas: sys.lambdas[..n].to_vec(),
        ratios: sys.ratios()[..n].to_vec(),
        alpha2: sys.alpha2()[..n].to_vec(),
        n_used: n,
        epsilon_used: f64::NAN,
    }
}

fn row(
    q: &GridFunction,
    sys: &EigenSystem,
    delta: f64,
    n: usize,
    m: usize,
) -> Result<ConvergenceRow> {
    let (epsilon, big_n) = truncation_schedule(delta, n)?;
    let ratios = sys.ratios();
    let alpha2 = norming_coefficients(&ratios, &sys.lambdas, n, big_n)?;
    let exact = exact_spectral(sys, n);
    let alpha_gap = exact
        .alpha2
        .iter()
        .zip(&alpha2)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).abs())
        .fold(0.0, f64::max);
    let alpha_bound = 4.0 * (-(-epsilon).exp_m1()).abs();
    let approx = SpectralData {
        alpha2,
        n_used: big_n,
        epsilon_used: epsilon,
        ..exact.clone()
    };
    let kernel_gap = restricted_kernel(&exact, 1.0, m)?.sup_diff(&restricted_kernel(&approx, 1.0, m)?);
    let opts = crate::reconstruct::ReconstructOptions {
        m,
        ..Default::default()
    };
    let qhat = reconstruct(&approx, Method::Gl, &opts)?.qhat;
    let (a, b) = METRIC_WINDOW;
    Ok(ConvergenceRow {
        delta,
        n,
        epsilon,
        big_n,
        alpha_gap,
        alpha_bound,
        alpha_ok: alpha_gap <= alpha_bound,
        kernel_gap,
        kernel_gap_over_delta: kernel_gap / delta,
        hinv_proxy: primitive_error_from_origin(&qhat, q, a, b),
        schedule_ok: schedule_holds(n, big_n, epsilon),
        status: "ok".into(),
    })
}

fn failed_row(delta: f64, n: usize, e: &Error) -> ConvergenceRow {
    ConvergenceRow {
        delta,
        n,
        epsilon: f64::NAN,
        big_n: 0,
        alpha_gap: f64::NAN,
        alpha_bound: f64::NAN,
        alpha_ok: false,
        kernel_gap: f64::NAN,
        kernel_gap_over_delta: f64::NAN,
        hinv_proxy: f64::NAN,
        schedule_ok: false,
        status: e.to_string().replace(',', ";"),
    }
}

/// Rows for every `(δ, n)`; failures are recorded in the row and the
/// study continues.
pub fn convergence_experiment(cfg: &Config) -> StageResult<ConvergenceReport> {
    let c = &cfg.converge;
    let max_n = c.ns.iter().copied().max().unwrap_or(0);
    if max_n == 0 || c.deltas.is_empty() {
        return Err(Error::Schema("converge.ns and converge.deltas must be non-empty".into())).at(Stage::Config);
    }
    let q = parse_potential(&cfg.simulate.potential, cfg.simulate.q_intervals).at(Stage::Converge)?;
    let sys = dirichlet_eigens(&q, c.exact_modes.max(max_n)).at(Stage::Converge)?;
    let mut rows = Vec::new();
    let mut proxy_decreasing = Vec::new();
    for &delta in &c.deltas {
        let start = rows.len();
        for &n in &c.ns {
            rows.push(row(&q, &sys, delta, n, cfg.kernel.m).unwrap_or_else(|e| failed_row(delta, n, &e)));
        }
        let decreasing = rows[start..].windows(2).all(|w| w[1].hinv_proxy < w[0].hinv_proxy);
        proxy_decreasing.push((delta, decreasing));
    }
    Ok(ConvergenceReport {
        rows,
        proxy_decreasing,
    })
}

pub fn write_report_csv(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "delta,n,epsilon,N,alpha_gap,alpha_bound,alpha_ok,kernel_gap,kernel_gap_over_delta,hinv_proxy,schedule_ok,status"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{:.16e},{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{}",
            r.delta,
            r.n,
            r.epsilon,
            r.big_n,
            r.alpha_gap,
            r.alpha_bound,
            r.alpha_ok,
            r.kernel_gap,
            r.kernel_gap_over_delta,
            r.hinv_proxy,
            r.schedule_ok,
            r.status
        )?;
    }
    w.flush()?;
    Ok(())
}
