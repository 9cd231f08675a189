//! Stage orchestration and the run manifest.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{parse_potential, parse_source, Config};
use super::io;
use crate::error::Error;
use crate::grid::{primitive_error_from_origin, window_mean, window_sup_diff, GridFunction};
use crate::kernel::{diagonal_residual, restricted_kernel};
use crate::mode_extract::{extract_spectrum, ExtractedData};
use crate::norming::{spectral_data, SpectralData, Truncation};
use crate::reconstruct::{reconstruct, Diagnostics};
use crate::sl_forward::{dirichlet_eigens, EigenSystem};
use crate::source_recover::{reconstruct_source, recover_coeffs};
use crate::trace_sim::{add_noise, project_source, synthesize_traces, ComplexTrace};

/// Window on which potential metrics are evaluated.
pub const METRIC_WINDOW: (f64, f64) = (0.1, 0.9);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Io,
    Simulate,
    Extract,
    Norming,
    Kernel,
    Reconstruct,
    Source,
    Converge,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Io => "io",
            Stage::Simulate => "simulate",
            Stage::Extract => "extract",
            Stage::Norming => "norming",
            Stage::Kernel => "kernel",
            Stage::Reconstruct => "reconstruct",
            Stage::Source => "source",
            Stage::Converge => "converge",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Io => 3,
            Stage::Simulate => 4,
            Stage::Extract => 5,
            Stage::Norming => 6,
            Stage::Kernel => 7,
            Stage::Reconstruct => 8,
            Stage::Source => 9,
            Stage::Converge => 10,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{} stage failed: {error}", stage.name())]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

impl StageError {
    /// File-system and parse failures share one code whatever the stage.
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Io(_) | Error::Parse { .. } => Stage::Io.exit_code(),
            _ => self.stage.exit_code(),
        }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Metrics {
    pub modes: usize,
    pub lambdas: Vec<f64>,
    pub rank_left: usize,
    pub rank_right: usize,
    pub gram_deviation: f64,
    pub max_mode_residual: f64,
    pub n: usize,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    /// `n²/N ≤ ε/(2 ln 2)`.
    pub schedule_ok: bool,
    pub alpha2: Vec<f64>,
    pub kernel_sup: f64,
    pub diagonal_residual: f64,
    pub cond_max: f64,
    pub solve_residual_max: f64,
    pub qhat_sup: f64,
    pub qhat_window_mean: f64,
    pub source_coeffs_re: Vec<f64>,
    pub source_coeffs_im: Vec<f64>,
    pub source_imag_residue: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TruthMetrics {
    pub max_lambda_abs_error: f64,
    pub max_lambda_rel_error: f64,
    /// `λ̂_k − λ_k^0`, meaningful as a shift for constant potentials.
    pub lambda_shift: Vec<f64>,
    pub primitive_error: f64,
    pub window_mean_error: f64,
    pub window_sup_error: f64,
    pub max_coeff_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub simulated: bool,
    pub artifacts: Vec<Artifact>,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_metrics: Option<TruthMetrics>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

/// Output directory plus the record of what has been written into it.
pub struct Bundle {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl Bundle {
    pub fn create(dir: &Path) -> StageResult<Self> {
        std::fs::create_dir_all(dir).map_err(Error::from).at(Stage::Io)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Hash a file that has just been written and list it.
    pub fn record(&mut self, name: &str) -> StageResult<()> {
        let sha256 = io::sha256_file(&self.path(name)).at(Stage::Io)?;
        self.artifacts.retain(|a| a.name != name);
        self.artifacts.push(Artifact {
            name: name.to_string(),
            sha256,
        });
        Ok(())
    }
}

pub struct Simulation {
    pub q: GridFunction,
    pub system: EigenSystem,
    pub coeffs: Vec<Complex64>,
    pub r0: ComplexTrace,
    pub r1: ComplexTrace,
    /// Exact time derivatives, noise-free.
    pub dr0: ComplexTrace,
    pub dr1: ComplexTrace,
}

/// Simulate traces and write `traces.csv` and `q_true.csv`.
pub fn simulate_stage(cfg: &Config, bundle: &mut Bundle) -> StageResult<Simulation> {
    let s = &cfg.simulate;
    let q = parse_potential(&s.potential, s.q_intervals).at(Stage::Simulate)?;
    let spec = parse_source(&s.source, s.modes, s.q_intervals).at(Stage::Simulate)?;
    let system = dirichlet_eigens(&q, spec.modes()).at(Stage::Simulate)?;
    let coeffs = project_source(&spec, &system).at(Stage::Simulate)?.coeffs;
    let traces = synthesize_traces(&system, &coeffs, s.t_obs, s.samples).at(Stage::Simulate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let r0 = add_noise(&traces.r0, s.noise, &mut rng);
    let r1 = add_noise(&traces.r1, s.noise, &mut rng);
    io::write_traces(&bundle.path("traces.csv"), &r0, &r1).at(Stage::Io)?;
    bundle.record("traces.csv")?;
    io::write_grid_csv(&bundle.path("q_true.csv"), "q", &q).at(Stage::Io)?;
    bundle.record("q_true.csv")?;
    Ok(Simulation {
        q,
        system,
        coeffs,
        r0,
        r1,
        dr0: traces.dr0,
        dr1: traces.dr1,
    })
}

/// Extract modes and write `extracted.json`.
pub fn extract_stage(
    cfg: &Config,
    r0: &ComplexTrace,
    r1: &ComplexTrace,
    derivatives: Option<(&ComplexTrace, &ComplexTrace)>,
    bundle: &mut Bundle,
) -> StageResult<ExtractedData> {
    let data = extract_spectrum(r0, r1, derivatives, &cfg.extract.options()).at(Stage::Extract)?;
    io::write_json(&bundle.path("extracted.json"), &io::ExtractedJson::from(&data)).at(Stage::Io)?;
    bundle.record("extracted.json")?;
    Ok(data)
}

/// `n²/N ≤ ε/(2 ln 2)`.
pub fn schedule_holds(n: usize, big_n: usize, epsilon: f64) -> bool {
    ((n * n) as f64 / big_n as f64) <= epsilon / (2.0 * std::f64::consts::LN_2)
}

pub struct Reconstruction {
    pub spectral: SpectralData,
    pub qhat: GridFunction,
    pub diagnostics: Diagnostics,
    pub coeffs: Vec<Complex64>,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
}

/// Norming, kernel, reconstruction and source recovery from extracted modes.
pub fn reconstruct_stage(cfg: &Config, data: &ExtractedData, bundle: &mut Bundle) -> StageResult<Reconstruction> {
    let mut warnings = data.warnings.clone();
    let n = match cfg.norming.modes {
        0 => data.modes.len(),
        k if k <= data.modes.len() => k,
        k => {
            return Err(StageError {
                stage: Stage::Norming,
                error: Error::InvalidInput(format!("{k} modes requested, {} extracted", data.modes.len())),
            })
        }
    };
    let truncation = if cfg.norming.epsilon > 0.0 {
        Truncation::Epsilon(cfg.norming.epsilon)
    } else {
        Truncation::Delta(cfg.norming.delta)
    };
    let sd = spectral_data(data, Some(n), truncation).at(Stage::Norming)?;
    let schedule_ok = schedule_holds(n, sd.n_used, sd.epsilon_used);
    if !schedule_ok {
        return Err(StageError {
            stage: Stage::Norming,
            error: Error::InfeasibleSchedule {
                ratio: (n * n) as f64 / sd.n_used as f64,
            },
        });
    }
    io::write_json(&bundle.path("spectral.json"), &sd).at(Stage::Io)?;
    bundle.record("spectral.json")?;

    let kg = restricted_kernel(&sd, 1.0, cfg.kernel.m).at(Stage::Kernel)?;
    let diag = diagonal_residual(&kg, &sd).at(Stage::Kernel)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(bundle.path("kernel.bin")).map_err(Error::from).at(Stage::Io)?);
    kg.write_to(&mut w).at(Stage::Io)?;
    drop(w);
    bundle.record("kernel.bin")?;

    let opts = cfg.reconstruct.options(cfg.kernel.m);
    let rec = reconstruct(&sd, cfg.reconstruct.method, &opts).at(Stage::Reconstruct)?;
    io::write_grid_csv(&bundle.path("qhat.csv"), "qhat", &rec.qhat).at(Stage::Io)?;
    bundle.record("qhat.csv")?;
    io::write_json(&bundle.path("qhat_diagnostics.json"), &rec.diagnostics).at(Stage::Io)?;
    bundle.record("qhat_diagnostics.json")?;

    let p0: Vec<Complex64> = data.modes[..n].iter().map(|m| m.p0).collect();
    let recovered = recover_coeffs(&rec.qhat, &p0).at(Stage::Source)?;
    let source = reconstruct_source(&recovered.coeffs, &recovered.system).at(Stage::Source)?;
    warnings.extend(source.warning.clone());
    io::write_source_csv(&bundle.path("source.csv"), &source.re, &source.im).at(Stage::Io)?;
    bundle.record("source.csv")?;

    let (a, b) = METRIC_WINDOW;
    let metrics = Metrics {
        modes: data.modes.len(),
        lambdas: data.lambdas(),
        rank_left: data.rank_left,
        rank_right: data.rank_right,
        gram_deviation: data.gram_deviation,
        max_mode_residual: data.modes.iter().map(|m| m.residual).fold(0.0, f64::max),
        n,
        epsilon: sd.epsilon_used,
        big_n: sd.n_used,
        schedule_ok,
        alpha2: sd.alpha2.clone(),
        kernel_sup: kg.values.amax(),
        diagonal_residual: diag,
        cond_max: rec.diagnostics.cond_max,
        solve_residual_max: rec.diagnostics.residual_max,
        qhat_sup: rec.qhat.sup_norm(),
        qhat_window_mean: window_mean(&rec.qhat, a, b),
        source_coeffs_re: recovered.coeffs.iter().map(|c| c.re).collect(),
        source_coeffs_im: recovered.coeffs.iter().map(|c| c.im).collect(),
        source_imag_residue: source.imag_residue,
    };
    Ok(Reconstruction {
        spectral: sd,
        qhat: rec.qhat,
        diagnostics: rec.diagnostics,
        coeffs: recovered.coeffs,
        metrics,
        warnings,
    })
}

fn truth_metrics(sim: &Simulation, data: &ExtractedData, rec: &Reconstruction) -> TruthMetrics {
    let (a, b) = METRIC_WINDOW;
    let mut t = TruthMetrics {
        primitive_error: primitive_error_from_origin(&rec.qhat, &sim.q, a, b),
        window_mean_error: (window_mean(&rec.qhat, a, b) - window_mean(&sim.q, a, b)).abs(),
        window_sup_error: window_sup_diff(&rec.qhat, &sim.q, a, b),
        ..Default::default()
    };
    for (k, m) in data.modes.iter().enumerate() {
        let free = std::f64::consts::PI.powi(2) * ((k + 1) * (k + 1)) as f64;
        t.lambda_shift.push(m.lambda - free);
        if let Some(&exact) = sim.system.lambdas.get(k) {
            let err = (m.lambda - exact).abs();
            t.max_lambda_abs_error = t.max_lambda_abs_error.max(err);
            t.max_lambda_rel_error = t.max_lambda_rel_error.max(err / exact.abs());
        }
    }
    t.max_coeff_error = rec
        .coeffs
        .iter()
        .zip(&sim.coeffs)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    t
}

fn write_manifest(bundle: &Bundle, manifest: &Manifest) -> StageResult<()> {
    io::write_json(&bundle.path("manifest.json"), manifest).at(Stage::Io)
}

/// Simulate (or read) traces, then run every stage, writing all artifacts
/// and `manifest.json` into `cfg.output.dir`. On failure the manifest
/// records the failing stage and the artifacts written so far are kept.
pub fn run_pipeline(cfg: &Config) -> StageResult<Manifest> {
    cfg.validate().at(Stage::Config)?;
    let mut bundle = Bundle::create(Path::new(&cfg.output.dir))?;
    let mut manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.simulate.seed,
        simulated: cfg.input.traces.is_empty(),
        artifacts: Vec::new(),
        metrics: Metrics::default(),
        truth_metrics: None,
        warnings: Vec::new(),
        failure: None,
    };
    std::fs::write(bundle.path("config.toml"), cfg.to_toml()).map_err(Error::from).at(Stage::Io)?;
    bundle.record("config.toml")?;

    let outcome = run_stages(cfg, &mut bundle, &mut manifest);
    manifest.artifacts = bundle.artifacts.clone();
    if let Err(e) = &outcome {
        manifest.failure = Some(FailureRecord {
            stage: e.stage,
            message: e.error.to_string(),
        });
    }
    write_manifest(&bundle, &manifest)?;
    outcome.map(|_| manifest)
}

fn run_stages(cfg: &Config, bundle: &mut Bundle, manifest: &mut Manifest) -> StageResult<()> {
    let sim = if manifest.simulated {
        Some(simulate_stage(cfg, bundle)?)
    } else {
        None
    };
    // Simulated traces are read back from disk so that a later run on the
    // same file reproduces the metrics bit for bit.
    let trace_path = match &sim {
        Some(_) => bundle.path("traces.csv"),
        None => PathBuf::from(&cfg.input.traces),
    };
    let (r0, r1) = io::read_traces(&trace_path).at(Stage::Io)?;
    let derivatives = match &sim {
        Some(s) if cfg.extract.analytic_derivative => Some((&s.dr0, &s.dr1)),
        _ => None,
    };
    let data = extract_stage(cfg, &r0, &r1, derivatives, bundle)?;
    let rec = reconstruct_stage(cfg, &data, bundle)?;
    manifest.warnings = rec.warnings.clone();
    if let Some(sim) = &sim {
        manifest.truth_metrics = Some(truth_metrics(sim, &data, &rec));
    }
    manifest.metrics = rec.metrics;
    Ok(())
}
