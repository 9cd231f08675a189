//! Acceptance gate. Each criterion prints one `PASS`/`FAIL` line with the
//! measured quantities; the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schrod_inverse::grid::{primitive_error_from_origin, window_sup_diff, GridFunction};
use schrod_inverse::kernel::{diagonal_residual, kernel_via_p, restricted_kernel};
use schrod_inverse::mode_extract::{extract_spectrum, ExtractOptions, ExtractedData};
use schrod_inverse::norming::{norming_coefficients, spectral_data, truncation_schedule, SpectralData, Truncation};
use schrod_inverse::pipeline::config::Config;
use schrod_inverse::pipeline::run::run_pipeline;
use schrod_inverse::reconstruct::{reconstruct, Method, ReconstructOptions};
use schrod_inverse::sl_forward::{dirichlet_eigens, norm_identity_residual, y1_product};
use schrod_inverse::trace_sim::synthesize_traces;

fn free_lambda(k: usize) -> f64 {
    PI * PI * (k * k) as f64
}

/// Clean traces for `a_k = 1/k²` and extraction with default options.
fn extract_inverse_square(q: &GridFunction, modes: usize, t_obs: f64, samples: usize) -> ExtractedData {
    let sys = dirichlet_eigens(q, modes).unwrap();
    let coeffs: Vec<Complex64> = (1..=modes)
        .map(|k| Complex64::new(1.0 / (k * k) as f64, 0.0))
        .collect();
    let tr = synthesize_traces(&sys, &coeffs, t_obs, samples).unwrap();
    extract_spectrum(&tr.r0, &tr.r1, None, &ExtractOptions::default()).unwrap()
}

fn exact_spectral(q: &GridFunction, n: usize) -> SpectralData {
    let sys = dirichlet_eigens(q, n).unwrap();
    SpectralData {
        lambdas: sys.lambdas.clone(),
        ratios: sys.ratios(),
        alpha2: sys.alpha2(),
        n_used: n,
        epsilon_used: f64::NAN,
    }
}

fn gl(sd: &SpectralData) -> GridFunction {
    reconstruct(sd, Method::Gl, &ReconstructOptions::default()).unwrap().qhat
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion_1(free_data: &mut Option<ExtractedData>) -> Outcome {
    let start = Instant::now();
    let q = GridFunction::constant(2048, 0.0).unwrap();
    let data = extract_inverse_square(&q, 8, 1.0, 2048);
    let elapsed = start.elapsed();
    let errors: Vec<f64> = data
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| (m.lambda - free_lambda(i + 1)).abs() / free_lambda(i + 1))
        .collect();
    let good = errors.iter().filter(|e| **e <= 1e-4).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    *free_data = Some(data);
    Outcome {
        pass: good >= 3 && elapsed <= Duration::from_secs(30),
        detail: format!(
            "{good} of {} modes within 1e-4 (worst rel err {worst:.2e}), {:.1}s",
            errors.len(),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2(free_data: &ExtractedData) -> Outcome {
    let n = free_data.modes.len();
    let sd = spectral_data(free_data, Some(n), Truncation::Delta(0.05)).unwrap();
    let worst = (1..=3)
        .map(|k| {
            let exact = 1.0 / (2.0 * free_lambda(k));
            (sd.alpha2[k - 1] - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1e-3,
        detail: format!(
            "n = {n}, eps = {:.3e}, N = {}: max rel err of alpha2, k <= 3: {worst:.2e}",
            sd.epsilon_used, sd.n_used
        ),
    }
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.simulate.potential = "const:5".into();
    cfg.simulate.q_intervals = 8192;
    cfg.simulate.modes = 40;
    cfg.simulate.t_obs = 0.2;
    cfg.simulate.samples = 2048;
    cfg.output.dir = dir.path().display().to_string();
    let start = Instant::now();
    let m = run_pipeline(&cfg).unwrap();
    let elapsed = start.elapsed();
    let t = m.truth_metrics.unwrap();
    let shift_dev = t.lambda_shift.iter().map(|s| (s - 5.0).abs()).fold(0.0, f64::max);
    let mean = m.metrics.qhat_window_mean;
    Outcome {
        pass: shift_dev <= 1e-3
            && t.primitive_error <= 0.05
            && (mean - 5.0).abs() <= 0.05
            && elapsed <= Duration::from_secs(120),
        detail: format!(
            "{} modes, max |shift - 5| {shift_dev:.2e}, primitive err {:.4}, mean {mean:.4}, {:.1}s",
            m.metrics.modes,
            t.primitive_error,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut pass = true;
    for n in [1, 3, 5] {
        let (eps, big_n) = truncation_schedule(0.05, n).unwrap();
        let lambdas: Vec<f64> = (1..=n).map(free_lambda).collect();
        let ratios: Vec<f64> = (1..=n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a2 = norming_coefficients(&ratios, &lambdas, n, big_n).unwrap();
        let bound = 4.0 * (-(-eps).exp_m1());
        for (k, a) in a2.iter().enumerate() {
            let gap = (a.sqrt() - (0.5 / free_lambda(k + 1)).sqrt()).abs();
            pass &= gap <= bound;
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    Outcome {
        pass,
        detail: format!("max |alpha - alpha~| / (4|1-e^-eps|) over n in {{1,3,5}}: {worst_ratio:.3}"),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gap = 0.0f64;
    let mut diag = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(1..=15);
        let shift = rng.random_range(-30.0..30.0);
        let lambdas: Vec<f64> = (1..=n)
            .map(|k| free_lambda(k) + shift + rng.random_range(-1.0..1.0))
            .collect();
        let alpha2: Vec<f64> = (1..=n)
            .map(|k| rng.random_range(0.5..1.5) / (2.0 * free_lambda(k)))
            .collect();
        let sd = SpectralData {
            lambdas,
            ratios: vec![1.0; n],
            alpha2,
            n_used: n,
            epsilon_used: f64::NAN,
        };
        let tau = rng.random_range(0.1..1.0);
        let a = restricted_kernel(&sd, tau, 64).unwrap();
        let b = kernel_via_p(&sd, tau, 64).unwrap();
        gap = gap.max(a.sup_diff(&b));
        diag = diag.max(diagonal_residual(&a, &sd).unwrap());
    }
    Outcome {
        pass: gap <= 1e-10 && diag <= 1e-10,
        detail: format!("representation gap {gap:.2e}, diagonal residual {diag:.2e}"),
    }
}

fn criterion_6() -> Outcome {
    let q = GridFunction::from_fn(2048, |x| 3.0 * x).unwrap();
    let data = extract_inverse_square(&q, 3, 1.0, 2048);
    Outcome {
        pass: data.modes.len() == 3 && data.gram_deviation <= 1e-6,
        detail: format!("{} modes, max |G - I| {:.2e}", data.modes.len(), data.gram_deviation),
    }
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for q in [
        GridFunction::constant(4096, 0.0).unwrap(),
        GridFunction::constant(4096, 5.0).unwrap(),
        GridFunction::from_fn(4096, |x| 10.0 * (PI * x).sin()).unwrap(),
    ] {
        let sys = dirichlet_eigens(&q, 10).unwrap();
        for k in 1..=10 {
            worst = worst.max(norm_identity_residual(&q, &sys, k).unwrap());
        }
    }
    let free: Vec<f64> = (1..=10_000).map(free_lambda).collect();
    let y = y1_product(PI * PI / 4.0, &free);
    let product_err = (y - 2.0 / PI).abs();
    Outcome {
        pass: worst <= 1e-5 && product_err <= 1e-3,
        detail: format!("max norm identity residual {worst:.2e}, |product - 2/pi| {product_err:.2e}"),
    }
}

fn criterion_8() -> Outcome {
    let q = GridFunction::constant(4096, 5.0).unwrap();
    let errors: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&n| primitive_error_from_origin(&gl(&exact_spectral(&q, n)), &q, 0.1, 0.9))
        .collect();
    Outcome {
        pass: errors.windows(2).all(|w| w[1] < w[0]),
        detail: format!(
            "primitive error n=10: {:.4}, n=20: {:.4}, n=40: {:.4}",
            errors[0], errors[1], errors[2]
        ),
    }
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let q = GridFunction::from_fn(4096, |x| 10.0 * (PI * x).sin()).unwrap();
    let sd = exact_spectral(&q, 40);
    let g = gl(&sd);
    let b = reconstruct(&sd, Method::Bcm, &ReconstructOptions::default()).unwrap().qhat;
    let elapsed = start.elapsed();
    let prim = primitive_error_from_origin(&g, &q, 0.1, 0.9);
    let disagreement = window_sup_diff(&g, &b, 0.1, 0.9);
    Outcome {
        pass: prim <= 0.1 * q.sup_norm() && disagreement <= 0.3 && elapsed <= Duration::from_secs(300),
        detail: format!(
            "primitive err {prim:.4} (limit {:.2}), GL vs BCM sup on [0.1,0.9] {disagreement:.3} (limit 0.3), {:.1}s",
            0.1 * q.sup_norm(),
            elapsed.as_secs_f64()
        ),
    }
}

fn main() {
    let mut free_data = None;
    let mut results = vec![("free-potential spectral recovery", criterion_1(&mut free_data))];
    let free_data = free_data.unwrap();
    results.push(("norming oracle", criterion_2(&free_data)));
    results.push(("constant-shift end to end", criterion_3()));
    results.push(("truncation bound", criterion_4()));
    results.push(("kernel representation equivalence", criterion_5()));
    results.push(("biorthogonality", criterion_6()));
    results.push(("norm identity and product oracles", criterion_7()));
    results.push(("convergence trend", criterion_8()));
    results.push(("smooth-potential round trip", criterion_9()));
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "{} criterion {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
