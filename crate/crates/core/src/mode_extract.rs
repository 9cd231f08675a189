//! Spectrum and endpoint products from boundary traces.
//!
//! For a trace `r(t) = Σ c_k e^{iλ_k t}` the Hankel-type operator
//! `(K f)(t) = ∫_0^T r(2T - t - τ) f(τ) dτ` is a finite sum of separable terms,
//! and the pencil `K̇ f = μ K f` (with `K̇` built from `ṙ`) has eigenvalues
//! `μ = iλ_k`. Both operators are projected on the leading singular subspace of
//! `K` before the dense eigen-solve. Eigenvectors of the conjugated pencil give
//! the dual family used to normalize and to read off `c_k` as `γ_k β_k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::trapezoid_weights;
use crate::linalg::{complex_eigen, truncated_svd, CMatrix, CVector};
use crate::trace_sim::ComplexTrace;

/// Discretized `C_0^T` (or its derivative analogue) with trapezoid weights folded in.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub entries: CMatrix,
    pub weights: Vec<f64>,
    pub t_final: f64,
}

impl DiscreteOperator {
    pub fn size(&self) -> usize {
        self.weights.len()
    }

    /// Sesquilinear form `(K f, g) = Σ_i w_i conj(g_i) (K f)_i`.
    pub fn form(&self, f: &CVector, g: &CVector) -> Complex64 {
        let kf = &self.entries * f;
        kf.iter()
            .zip(g.iter())
            .zip(&self.weights)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    }
}

/// Accepted eigenpairs of one pencil and the numerical rank used.
#[derive(Clone, Debug)]
pub struct PencilModes {
    pub modes: Vec<RawMode>,
    pub rank: usize,
}

/// Raw solution of the generalized problem before pairing.
#[derive(Clone, Debug)]
pub struct RawMode {
    pub mu: Complex64,
    pub vector: CVector,
    pub residual: f64,
}

/// Normalized `(f_n, g_n)` pair.
#[derive(Clone, Debug)]
pub struct ModePair {
    pub lambda: f64,
    pub mu: Complex64,
    pub f: CVector,
    pub g: CVector,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Biorthonormal {
    pub pairs: Vec<ModePair>,
    /// `max |(C f_n, g_k) − δ_nk|`.
    pub gram_deviation: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedMode {
    pub lambda: f64,
    pub p0: Complex64,
    pub p1: Complex64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ExtractedData {
    pub modes: Vec<ExtractedMode>,
    pub rank_left: usize,
    pub rank_right: usize,
    pub gram_deviation: f64,
    pub warnings: Vec<String>,
}

impl ExtractedData {
    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn left_products(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.p0).collect()
    }

    pub fn right_products(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.p1).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExtractOptions {
    pub svd_cut: f64,
    pub residual_tol: f64,
    pub re_tol: f64,
    pub match_tol: f64,
    pub max_rank: usize,
    /// Map eigenvalues through the inverse of the finite-difference symbol.
    pub dispersion_correction: bool,
    /// Drop the samples whose derivative uses one-sided stencils.
    pub trim_stencil_edges: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            svd_cut: 1e-8,
            residual_tol: 1e-4,
            re_tol: 1e-3,
            match_tol: 1e-3,
            max_rank: 64,
            dispersion_correction: true,
            trim_stencil_edges: true,
        }
    }
}

/// Fourth-order finite differences: centred inside, one-sided at the two
/// samples nearest each end.
pub fn numeric_time_derivative(r: &ComplexTrace) -> Result<ComplexTrace> {
    let s = &r.samples;
    let n = s.len();
    if n < crate::trace_sim::MIN_SAMPLES + 1 {
        return Err(Error::InvalidInput("trace too short to differentiate".into()));
    }
    let inv = 1.0 / (12.0 * r.dt());
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    d[0] = (s[0] * -25.0 + s[1] * 48.0 - s[2] * 36.0 + s[3] * 16.0 - s[4] * 3.0) * inv;
    d[1] = (s[0] * -3.0 - s[1] * 10.0 + s[2] * 18.0 - s[3] * 6.0 + s[4]) * inv;
    for i in 2..n - 2 {
        d[i] = (s[i - 2] - s[i - 1] * 8.0 + s[i + 1] * 8.0 - s[i + 2]) * inv;
    }
    let e = n - 1;
    d[e] = (s[e] * 25.0 - s[e - 1] * 48.0 + s[e - 2] * 36.0 - s[e - 3] * 16.0 + s[e - 4] * 3.0) * inv;
    d[e - 1] = (s[e] * 3.0 + s[e - 1] * 10.0 - s[e - 2] * 18.0 + s[e - 3] * 6.0 - s[e - 4]) * inv;
    ComplexTrace::new(r.t_obs, d)
}

fn grid_steps(r: &ComplexTrace, t_final: f64) -> Result<usize> {
    if !(t_final > 0.0) || t_final > 0.5 * r.t_obs * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "T = {t_final} must lie in (0, T_obs/2 = {}]",
            0.5 * r.t_obs
        )));
    }
    let steps_f = t_final / r.dt();
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) || steps == 0 {
        return Err(Error::Domain(format!(
            "T = {t_final} is not a multiple of the sampling step {}",
            r.dt()
        )));
    }
    Ok(steps)
}

/// `K_ij = r(2T − t_i − τ_j) w_j` on the uniform grid of `[0, T]`.
pub fn convolution_operator(r: &ComplexTrace, t_final: f64) -> Result<DiscreteOperator> {
    let steps = grid_steps(r, t_final)?;
    let n = steps + 1;
    let weights = trapezoid_weights(n, r.dt());
    let entries = CMatrix::from_fn(n, n, |i, j| r.samples[2 * steps - i - j] * weights[j]);
    Ok(DiscreteOperator {
        entries,
        weights,
        t_final,
    })
}

/// Solve `K̇ f = μ K f` on the leading singular subspace of `K`.
pub fn generalized_modes(
    kdot: &DiscreteOperator,
    k: &DiscreteOperator,
    opts: &ExtractOptions,
) -> Result<PencilModes> {
    if kdot.size() != k.size() {
        return Err(Error::InvalidInput("operator sizes differ".into()));
    }
    if !(opts.svd_cut > 0.0 && opts.svd_cut < 1.0) {
        return Err(Error::InvalidInput(format!("svd_cut {} not in (0,1)", opts.svd_cut)));
    }
    let svd = truncated_svd(&k.entries, opts.svd_cut, opts.max_rank);
    let rank = svd.sigma.len();
    if rank == 0 {
        return Err(Error::EmptyData);
    }
    let mut reduced = svd.u.ad_mul(&(&kdot.entries * &svd.v));
    for (i, s) in svd.sigma.iter().enumerate() {
        reduced.row_mut(i).scale_mut(1.0 / s);
    }
    let (values, vectors) = complex_eigen(&reduced)
        .ok_or_else(|| Error::Consistency("Schur iteration did not converge".into()))?;
    let mut out = Vec::new();
    for (mu, y) in values.into_iter().zip(vectors) {
        let f = &svd.v * y;
        let kf = &k.entries * &f;
        let denom = (&kf * mu).norm();
        if denom == 0.0 {
            continue;
        }
        let residual = (&kdot.entries * &f - &kf * mu).norm() / denom;
        if residual <= opts.residual_tol && mu.re.abs() <= opts.re_tol * mu.norm() {
            out.push(RawMode {
                mu,
                vector: f,
                residual,
            });
        }
    }
    out.sort_by(|a, b| a.mu.im.total_cmp(&b.mu.im));
    Ok(PencilModes { modes: out, rank })
}

fn matches(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Pair `f_n` (from `r`) with `g_n` (from `conj r`) and scale so `(C f_n, g_n) = 1`.
///
/// Both families are first brought to unit norm, then the normalization is split
/// evenly between them and the pair is rotated so that `γ_n` is real positive.
pub fn biorthonormalize(
    fs: &[RawMode],
    gs: &[RawMode],
    k: &DiscreteOperator,
    r: &ComplexTrace,
    match_tol: f64,
) -> Result<Biorthonormal> {
    let steps = grid_steps(r, k.t_final)?;
    let mut used = vec![false; gs.len()];
    let mut orphans = Vec::new();
    let mut pairs = Vec::new();
    for fm in fs {
        let lf = fm.mu.im;
        let best = gs
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, gm)| (j, (-gm.mu.im - lf).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, _)) if matches(lf, -gs[j].mu.im, match_tol) => {
                used[j] = true;
                let gm = &gs[j];
                let f = &fm.vector / Complex64::new(fm.vector.norm(), 0.0);
                let g = &gm.vector / Complex64::new(gm.vector.norm(), 0.0);
                let s = k.form(&f, &g);
                let gamma = gamma_of(r, steps, &k.weights, &f);
                if s.norm() == 0.0 || gamma.norm() == 0.0 {
                    return Err(Error::Consistency(format!(
                        "mode at λ = {lf} has vanishing normalization"
                    )));
                }
                let a = Complex64::from_polar(s.norm().powf(-0.5), -gamma.arg());
                let b = (Complex64::new(1.0, 0.0) / (s * a)).conj();
                pairs.push(ModePair {
                    lambda: 0.5 * (lf - gm.mu.im),
                    mu: fm.mu,
                    f: f * a,
                    g: g * b,
                    residual: fm.residual.max(gm.residual),
                });
            }
            _ => orphans.push(lf),
        }
    }
    orphans.extend(
        gs.iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(g, _)| -g.mu.im),
    );
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    let kf: Vec<CVector> = pairs.iter().map(|p| &k.entries * &p.f).collect();
    let mut gram_deviation = 0.0f64;
    let mut off_diag = 0.0f64;
    for (n, kfn) in kf.iter().enumerate() {
        for (m, q) in pairs.iter().enumerate() {
            let v: Complex64 = kfn
                .iter()
                .zip(q.g.iter())
                .zip(&k.weights)
                .map(|((a, b), w)| a * b.conj() * *w)
                .sum();
            let target = if n == m { 1.0 } else { 0.0 };
            let dev = (v - target).norm();
            gram_deviation = gram_deviation.max(dev);
            if n != m {
                off_diag = off_diag.max(dev);
            }
        }
    }
    let mut warnings = Vec::new();
    if off_diag > 1e-3 {
        warnings.push(format!(
            "biorthogonality degraded: max off-diagonal Gram entry {off_diag:.3e}"
        ));
    }
    Ok(Biorthonormal {
        pairs,
        gram_deviation,
        warnings,
    })
}

fn gamma_of(r: &ComplexTrace, steps: usize, weights: &[f64], f: &CVector) -> Complex64 {
    f.iter()
        .enumerate()
        .map(|(j, fj)| r.samples[steps - j] * fj * weights[j])
        .sum()
}

/// `γ_k β_k = a_k φ_k'(endpoint)` for every normalized pair.
pub fn endpoint_products(r: &ComplexTrace, pairs: &[ModePair], t_final: f64) -> Result<Vec<Complex64>> {
    let steps = grid_steps(r, t_final)?;
    let weights = trapezoid_weights(steps + 1, r.dt());
    Ok(pairs
        .iter()
        .map(|p| {
            let gamma = gamma_of(r, steps, &weights, &p.f);
            let conj_g = p.g.map(|z| z.conj());
            let beta = gamma_of(r, steps, &weights, &conj_g);
            gamma * beta
        })
        .collect())
}

/// Inverse of the symbol `(8 sin θ − sin 2θ) / (6h)` of the centred fourth-order
/// difference, returning the true frequency behind an apparent one.
pub fn fd_symbol_inverse(apparent: f64, h: f64) -> Option<f64> {
    const THETA_MAX: f64 = 1.797_4;
    let target = apparent * h;
    let g = |t: f64| (8.0 * t.sin() - (2.0 * t).sin()) / 6.0;
    let dg = |t: f64| (8.0 * t.cos() - 2.0 * (2.0 * t).cos()) / 6.0;
    if target.abs() >= g(THETA_MAX) {
        return None;
    }
    let mut theta = target;
    for _ in 0..50 {
        let step = (g(theta) - target) / dg(theta);
        theta -= step;
        if step.abs() <= 1e-16 * theta.abs().max(1e-300) {
            break;
        }
    }
    (theta.abs() < THETA_MAX).then_some(theta / h)
}

/// Per-endpoint result of the pencil solve.
#[derive(Clone, Debug)]
pub struct EndpointModes {
    pub lambdas: Vec<f64>,
    pub products: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub gram_deviation: f64,
    pub warnings: Vec<String>,
}

/// Steps 1–4 of the recovery for a single endpoint trace.
pub fn extract_endpoint(
    r: &ComplexTrace,
    derivative: Option<&ComplexTrace>,
    opts: &ExtractOptions,
) -> Result<EndpointModes> {
    if !r.intervals().is_multiple_of(2) {
        return Err(Error::Domain("trace needs an even number of intervals".into()));
    }
    let (dr, analytic) = match derivative {
        Some(d) => {
            if d.samples.len() != r.samples.len() {
                return Err(Error::InvalidInput("derivative trace length mismatch".into()));
            }
            (d.clone(), true)
        }
        None => (numeric_time_derivative(r)?, false),
    };
    // Two samples at each end carry the one-sided stencils; dropping them keeps
    // the derivative operator a pure centred difference with a known symbol.
    let shift = if !analytic && opts.trim_stencil_edges { 2 } else { 0 };
    let (r, dr) = if shift > 0 {
        let n = r.samples.len();
        let span = r.t_obs - 2.0 * shift as f64 * r.dt();
        (
            ComplexTrace::new(span, r.samples[shift..n - shift].to_vec())?,
            ComplexTrace::new(span, dr.samples[shift..n - shift].to_vec())?,
        )
    } else {
        (r.clone(), dr)
    };
    let t_final = 0.5 * r.t_obs;
    let k = convolution_operator(&r, t_final)?;
    let kdot = convolution_operator(&dr, t_final)?;
    let kc = convolution_operator(&r.conj(), t_final)?;
    let kdotc = convolution_operator(&dr.conj(), t_final)?;

    let (fs, gs) = rayon::join(
        || generalized_modes(&kdot, &k, opts),
        || generalized_modes(&kdotc, &kc, opts),
    );
    let (fs, gs) = (fs?, gs?);
    let rank = fs.rank;
    let bio = biorthonormalize(&fs.modes, &gs.modes, &k, &r, opts.match_tol)?;
    let raw_products = endpoint_products(&r, &bio.pairs, t_final)?;
    let mut warnings = bio.warnings.clone();
    let lambdas: Vec<f64> = bio
        .pairs
        .iter()
        .map(|p| {
            if analytic || !opts.dispersion_correction {
                p.lambda
            } else {
                fd_symbol_inverse(p.lambda, r.dt()).unwrap_or_else(|| {
                    warnings.push(format!(
                        "λ = {} beyond the invertible range of the difference symbol",
                        p.lambda
                    ));
                    p.lambda
                })
            }
        })
        .collect();
    // undo the time shift of the trimmed trace: r(t + s) carries e^{iλs}
    let offset = shift as f64 * r.dt();
    let products = raw_products
        .iter()
        .zip(&lambdas)
        .map(|(p, l)| p * Complex64::from_polar(1.0, -l * offset))
        .collect();
    Ok(EndpointModes {
        lambdas,
        products,
        residuals: bio.pairs.iter().map(|p| p.residual).collect(),
        rank,
        gram_deviation: bio.gram_deviation,
        warnings,
    })
}

/// Run the extraction on both traces and pair the results by eigenvalue.
pub fn extract_spectrum(
    r0: &ComplexTrace,
    r1: &ComplexTrace,
    derivatives: Option<(&ComplexTrace, &ComplexTrace)>,
    opts: &ExtractOptions,
) -> Result<ExtractedData> {
    if r0.samples.len() != r1.samples.len() || r0.t_obs != r1.t_obs {
        return Err(Error::InvalidInput("traces are not on a common grid".into()));
    }
    let (left, right) = rayon::join(
        || extract_endpoint(r0, derivatives.map(|d| d.0), opts),
        || extract_endpoint(r1, derivatives.map(|d| d.1), opts),
    );
    let (left, right) = (left?, right?);
    let mut used = vec![false; right.lambdas.len()];
    let mut modes = Vec::new();
    let mut orphans = Vec::new();
    for (i, &ll) in left.lambdas.iter().enumerate() {
        let best = right
            .lambdas
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .min_by(|a, b| (a.1 - ll).abs().total_cmp(&(b.1 - ll).abs()));
        match best {
            Some((j, &lr)) if matches(ll, lr, opts.match_tol) => {
                used[j] = true;
                modes.push(ExtractedMode {
                    lambda: 0.5 * (ll + lr),
                    p0: left.products[i],
                    p1: right.products[j],
                    residual: left.residuals[i].max(right.residuals[j]),
                });
            }
            _ => orphans.push(ll),
        }
    }
    orphans.extend(
        right
            .lambdas
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(l, _)| *l),
    );
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    if let Some(w) = modes.windows(2).find(|w| w[1].lambda <= w[0].lambda) {
        return Err(Error::DegenerateSpectrum(w[0].lambda));
    }
    let mut warnings = left.warnings;
    warnings.extend(right.warnings);
    Ok(ExtractedData {
        modes,
        rank_left: left.rank,
        rank_right: right.rank,
        gram_deviation: left.gram_deviation.max(right.gram_deviation),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_from(t_obs: f64, m: usize, f: impl Fn(f64) -> Complex64) -> ComplexTrace {
        let dt = t_obs / m as f64;
        ComplexTrace::new(t_obs, (0..=m).map(|i| f(i as f64 * dt)).collect()).unwrap()
    }

    #[test]
    fn derivative_of_exponential() {
        let l = std::f64::consts::PI.powi(2);
        let r = trace_from(1.0, 2048, |t| Complex64::from_polar(1.0, l * t));
        let d = numeric_time_derivative(&r).unwrap();
        let err = (0..=2048)
            .map(|i| (d.samples[i] - Complex64::new(0.0, l) * r.samples[i]).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6 * l, "{err}");
    }

    #[test]
    fn derivative_exact_on_low_polynomials() {
        let c = trace_from(1.0, 64, |_| Complex64::new(2.0, -1.0));
        assert!(numeric_time_derivative(&c).unwrap().samples.iter().all(|z| z.norm() < 1e-10));
        let lin = trace_from(1.0, 64, |t| Complex64::new(t, 0.0));
        for z in numeric_time_derivative(&lin).unwrap().samples {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn operator_domain_checks() {
        let r = trace_from(1.0, 64, |_| Complex64::new(0.0, 0.0));
        assert!(matches!(convolution_operator(&r, 0.6), Err(Error::Domain(_))));
        let k = convolution_operator(&r, 0.5).unwrap();
        assert_eq!(k.size(), 33);
        assert!(k.entries.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn two_mode_pencil() {
        let r = trace_from(2.0, 256, |t| {
            Complex64::from_polar(1.0, t) + Complex64::from_polar(1.0, 4.0 * t)
        });
        let dr = trace_from(2.0, 256, |t| {
            Complex64::from_polar(1.0, t) * Complex64::i()
                + Complex64::from_polar(4.0, 4.0 * t) * Complex64::i()
        });
        let k = convolution_operator(&r, 1.0).unwrap();
        let kd = convolution_operator(&dr, 1.0).unwrap();
        let modes = generalized_modes(&kd, &k, &ExtractOptions::default()).unwrap().modes;
        assert_eq!(modes.len(), 2);
        assert!((modes[0].mu - Complex64::new(0.0, 1.0)).norm() < 1e-6);
        assert!((modes[1].mu - Complex64::new(0.0, 4.0)).norm() < 1e-6);
    }

    #[test]
    fn symbol_inverse_round_trip() {
        let h = 1.0 / 2048.0;
        for lambda in [10.0, 500.0, 2000.0, -300.0] {
            let theta = lambda * h;
            let apparent = (8.0 * f64::sin(theta) - f64::sin(2.0 * theta)) / (6.0 * h);
            let back = fd_symbol_inverse(apparent, h).unwrap();
            assert!((back - lambda).abs() < 1e-9 * lambda.abs());
        }
        assert!(fd_symbol_inverse(1e9, h).is_none());
    }
}
