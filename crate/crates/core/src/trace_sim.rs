//! Modal forward simulator for the boundary derivative traces
//! `r_j(t) = Σ_k a_k e^{iλ_k t} φ_k'(j)`, `j ∈ {0, 1}`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{trapezoid, GridFunction};
use crate::sl_forward::EigenSystem;

/// Minimum number of time intervals in a trace.
pub const MIN_SAMPLES: usize = 64;

/// Relative threshold below which a modal coefficient counts as absent.
pub const GENERIC_THRESHOLD: f64 = 1e-12;

/// Initial state, either sampled in space or given by its modal coefficients.
#[derive(Clone, Debug)]
pub enum SourceSpec {
    Grid { a: GridFunction, modes: usize },
    Coeffs(Vec<Complex64>),
}

impl SourceSpec {
    pub fn grid(a: GridFunction, modes: usize) -> Result<Self> {
        let v = a.values();
        let scale = a.sup_norm().max(f64::MIN_POSITIVE);
        if v[0].abs() > 1e-12 * scale || v[v.len() - 1].abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(
                "source must vanish at both endpoints".into(),
            ));
        }
        if modes == 0 {
            return Err(Error::InvalidInput("source mode count must be >= 1".into()));
        }
        Ok(SourceSpec::Grid { a, modes })
    }

    pub fn coeffs(c: Vec<Complex64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        Ok(SourceSpec::Coeffs(c))
    }

    /// `a_k = 1 / k²` for `k = 1..=modes`.
    pub fn inverse_square(modes: usize) -> Result<Self> {
        Self::coeffs(
            (1..=modes)
                .map(|k| Complex64::new(1.0 / (k * k) as f64, 0.0))
                .collect(),
        )
    }

    pub fn modes(&self) -> usize {
        match self {
            SourceSpec::Grid { modes, .. } => *modes,
            SourceSpec::Coeffs(c) => c.len(),
        }
    }
}

/// Fourier coefficients of the source together with per-mode genericity flags.
#[derive(Clone, Debug)]
pub struct Projection {
    pub coeffs: Vec<Complex64>,
    pub generic: Vec<bool>,
}

/// Boundary observation sampled at `t_i = i · t_obs / M`, `i = 0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTrace {
    pub t_obs: f64,
    pub samples: Vec<Complex64>,
}

impl ComplexTrace {
    pub fn new(t_obs: f64, samples: Vec<Complex64>) -> Result<Self> {
        if !(t_obs > 0.0 && t_obs.is_finite()) {
            return Err(Error::InvalidInput(format!("observation length {t_obs}")));
        }
        if samples.len() < MIN_SAMPLES + 1 {
            return Err(Error::InvalidInput(format!(
                "trace needs at least {} intervals, got {}",
                MIN_SAMPLES,
                samples.len().saturating_sub(1)
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite trace sample".into()));
        }
        Ok(Self { t_obs, samples })
    }

    pub fn intervals(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_obs / self.intervals() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn conj(&self) -> ComplexTrace {
        ComplexTrace {
            t_obs: self.t_obs,
            samples: self.samples.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// Simulated boundary traces and their exact time derivatives.
#[derive(Clone, Debug)]
pub struct SimulatedTraces {
    pub r0: ComplexTrace,
    pub r1: ComplexTrace,
    pub dr0: ComplexTrace,
    pub dr1: ComplexTrace,
}

/// Modal coefficients `a_k = (a, φ_k)` and genericity flags.
pub fn project_source(source: &SourceSpec, sys: &EigenSystem) -> Result<Projection> {
    let coeffs: Vec<Complex64> = match source {
        SourceSpec::Coeffs(c) => c.clone(),
        SourceSpec::Grid { a, modes } => {
            if *modes > sys.len() {
                return Err(Error::InvalidInput(format!(
                    "source asks for {modes} modes, eigensystem has {}",
                    sys.len()
                )));
            }
            let mut out = Vec::with_capacity(*modes);
            for phi in &sys.eigenfunctions[..*modes] {
                let a = a.resample(phi.intervals())?;
                let prod: Vec<f64> = a
                    .values()
                    .iter()
                    .zip(phi.values())
                    .map(|(x, y)| x * y)
                    .collect();
                out.push(Complex64::new(trapezoid(&prod, phi.step()), 0.0));
            }
            out
        }
    };
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if max == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let generic = coeffs
        .iter()
        .map(|c| c.norm() >= GENERIC_THRESHOLD * max)
        .collect();
    Ok(Projection { coeffs, generic })
}

/// Sample `r_0`, `r_1` and their exact derivatives on `M + 1` uniform times in `[0, t_obs]`.
pub fn synthesize_traces(
    sys: &EigenSystem,
    coeffs: &[Complex64],
    t_obs: f64,
    samples: usize,
) -> Result<SimulatedTraces> {
    if coeffs.len() > sys.len() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} modes",
            coeffs.len(),
            sys.len()
        )));
    }
    let dt = t_obs / samples as f64;
    let n = samples + 1;
    let mut r0 = vec![Complex64::new(0.0, 0.0); n];
    let mut r1 = r0.clone();
    let mut d0 = r0.clone();
    let mut d1 = r0.clone();
    for i in 0..n {
        let t = i as f64 * dt;
        for (k, a) in coeffs.iter().enumerate() {
            let lambda = sys.lambdas[k];
            let phase = Complex64::from_polar(1.0, lambda * t);
            let z = a * phase;
            let dz = z * Complex64::new(0.0, lambda);
            r0[i] += z * sys.slope0[k];
            r1[i] += z * sys.slope1[k];
            d0[i] += dz * sys.slope0[k];
            d1[i] += dz * sys.slope1[k];
        }
    }
    Ok(SimulatedTraces {
        r0: ComplexTrace::new(t_obs, r0)?,
        r1: ComplexTrace::new(t_obs, r1)?,
        dr0: ComplexTrace::new(t_obs, d0)?,
        dr1: ComplexTrace::new(t_obs, d1)?,
    })
}

/// Add complex Gaussian noise with standard deviation `relative · rms(|r|)`.
pub fn add_noise(trace: &ComplexTrace, relative: f64, rng: &mut impl Rng) -> ComplexTrace {
    if relative == 0.0 {
        return trace.clone();
    }
    let rms = (trace.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()
        / trace.samples.len() as f64)
        .sqrt();
    let sigma = relative * rms / std::f64::consts::SQRT_2;
    let samples = trace
        .samples
        .iter()
        .map(|z| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            z + Complex64::new(re * sigma, im * sigma)
        })
        .collect();
    ComplexTrace {
        t_obs: trace.t_obs,
        samples,
    }
}
