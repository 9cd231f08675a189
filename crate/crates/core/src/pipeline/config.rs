//! Run configuration: a TOML file with one table per stage, plus
//! `section.key=value` overrides from the command line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mode_extract::ExtractOptions;
use crate::reconstruct::{Method, ReconstructOptions};
use crate::trace_sim::SourceSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub simulate: SimulateConfig,
    pub extract: ExtractConfig,
    pub norming: NormingConfig,
    pub kernel: KernelConfig,
    pub reconstruct: ReconstructConfig,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub converge: ConvergeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// `zero`, `const:<c>`, `sin:<a>` for `a sin(πx)`, or `file:<path>` (CSV `x,q`).
    pub potential: String,
    pub q_intervals: usize,
    /// `inverse_square` or `parabola`.
    pub source: String,
    pub modes: usize,
    pub t_obs: f64,
    pub samples: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            potential: "zero".into(),
            q_intervals: 2048,
            source: "inverse_square".into(),
            modes: 8,
            t_obs: 1.0,
            samples: 2048,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub svd_cut: f64,
    pub residual_tol: f64,
    pub re_tol: f64,
    pub match_tol: f64,
    pub max_rank: usize,
    pub dispersion_correction: bool,
    pub trim_stencil_edges: bool,
    /// Use the simulator's exact time derivative instead of finite differences.
    pub analytic_derivative: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let o = ExtractOptions::default();
        Self {
            svd_cut: o.svd_cut,
            residual_tol: o.residual_tol,
            re_tol: o.re_tol,
            match_tol: o.match_tol,
            max_rank: o.max_rank,
            dispersion_correction: o.dispersion_correction,
            trim_stencil_edges: o.trim_stencil_edges,
            analytic_derivative: false,
        }
    }
}

impl ExtractConfig {
    pub fn options(&self) -> ExtractOptions {
        ExtractOptions {
            svd_cut: self.svd_cut,
            residual_tol: self.residual_tol,
            re_tol: self.re_tol,
            match_tol: self.match_tol,
            max_rank: self.max_rank,
            dispersion_correction: self.dispersion_correction,
            trim_stencil_edges: self.trim_stencil_edges,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormingConfig {
    pub delta: f64,
    /// Overrides the schedule when positive.
    pub epsilon: f64,
    /// Number of modes used downstream; 0 means all extracted.
    pub modes: usize,
}

impl Default for NormingConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            epsilon: 0.0,
            modes: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub m: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { m: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub method: Method,
    pub window: usize,
    pub cond_limit: f64,
    pub tau_points: usize,
    pub min_tau_intervals: usize,
    pub mu_mask: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let o = ReconstructOptions::default();
        Self {
            method: Method::Gl,
            window: o.window,
            cond_limit: o.cond_limit,
            tau_points: o.tau_points,
            min_tau_intervals: o.min_tau_intervals,
            mu_mask: o.mu_mask,
        }
    }
}

impl ReconstructConfig {
    pub fn options(&self, m: usize) -> ReconstructOptions {
        ReconstructOptions {
            m,
            window: self.window,
            cond_limit: self.cond_limit,
            tau_points: self.tau_points,
            min_tau_intervals: self.min_tau_intervals,
            mu_mask: self.mu_mask,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Trace CSV; when empty the traces are simulated.
    pub traces: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "run".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub deltas: Vec<f64>,
    pub ns: Vec<usize>,
    /// Exact eigenvalues computed before switching to the asymptotic tail.
    pub exact_modes: usize,
    pub constant: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.1, 0.05],
            ns: vec![10, 20, 40],
            exact_modes: 40,
            constant: 4.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply `section.key=value`; the value is parsed as a TOML literal and
    /// falls back to a string.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("override `{spec}` lacks `=`")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Schema(format!("override key `{path}` must be section.key")))?;
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        let sec = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sec = sec
            .as_table_mut()
            .ok_or_else(|| Error::Schema(format!("`{section}` is not a section")))?;
        if !sec.contains_key(key) {
            return Err(Error::Schema(format!("unknown config key `{section}.{key}`")));
        }
        sec.insert(key.to_string(), value);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Schema(format!("override `{spec}`: {e}")))?;
        Ok(())
    }

    /// Hex SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        if !(s.t_obs > 0.0) || s.samples < 64 || !s.samples.is_multiple_of(2) {
            return Err(Error::Schema(
                "simulate.t_obs must be positive and simulate.samples an even number >= 64".into(),
            ));
        }
        if !(s.noise >= 0.0) {
            return Err(Error::Schema("simulate.noise must be >= 0".into()));
        }
        if !(self.norming.delta > 0.0) {
            return Err(Error::Schema("norming.delta must be positive".into()));
        }
        if self.kernel.m < 32 {
            return Err(Error::Schema("kernel.m must be >= 32".into()));
        }
        if self.reconstruct.window < 3 {
            return Err(Error::Schema("reconstruct.window must be >= 3".into()));
        }
        Ok(())
    }
}

/// Potential from its textual description.
pub fn parse_potential(spec: &str, intervals: usize) -> Result<GridFunction> {
    let spec = spec.trim();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let number = |a: &str| -> Result<f64> {
        a.trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad number in potential `{spec}`")))
    };
    match kind {
        "zero" => GridFunction::constant(intervals, 0.0),
        "const" => GridFunction::constant(intervals, number(arg)?),
        "sin" => {
            let a = number(arg)?;
            GridFunction::from_fn(intervals, |x| a * (std::f64::consts::PI * x).sin())
        }
        "file" => crate::pipeline::io::read_grid_csv(std::path::Path::new(arg))?.resample(intervals),
        _ => Err(Error::Schema(format!("unknown potential `{spec}`"))),
    }
}

pub fn parse_source(spec: &str, modes: usize, intervals: usize) -> Result<SourceSpec> {
    match spec.trim() {
        "inverse_square" => SourceSpec::inverse_square(modes),
        "parabola" => SourceSpec::grid(GridFunction::from_fn(intervals, |x| x * (1.0 - x))?, modes),
        other => Err(Error::Schema(format!("unknown source `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(Config::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides() {
        let mut c = Config::default();
        c.apply_override("simulate.potential=const:5").unwrap();
        c.apply_override("kernel.m = 128").unwrap();
        c.apply_override("reconstruct.method=\"bcm\"").unwrap();
        c.apply_override("converge.ns=[5, 10]").unwrap();
        assert_eq!(c.simulate.potential, "const:5");
        assert_eq!(c.kernel.m, 128);
        assert_eq!(c.reconstruct.method, Method::Bcm);
        assert_eq!(c.converge.ns, vec![5, 10]);
        assert!(c.apply_override("kernel.size=3").is_err());
        assert!(c.apply_override("kernel.m=abc").is_err());
        assert!(c.apply_override("nosection").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.norming.delta = 0.01;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[kernel]\nmm = 3\n").is_err());
    }

    #[test]
    fn potentials() {
        assert_eq!(parse_potential("const:5", 32).unwrap().values()[3], 5.0);
        assert!(parse_potential("sin:10", 32).unwrap().values()[16] > 9.99);
        assert!(parse_potential("cubic", 32).is_err());
    }
}
