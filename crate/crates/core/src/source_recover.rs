//! Initial state from the reconstructed potential and the left endpoint products.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::sl_forward::{dirichlet_eigens, EigenSystem};

/// Smallest admissible `|φ_k'(0)|`.
pub const SLOPE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct RecoveredCoeffs {
    pub coeffs: Vec<Complex64>,
    pub system: EigenSystem,
}

/// `â_k = (a_k φ_k'(0)) / φ_k'(0)` with slopes from the eigenproblem for `q̂`.
pub fn recover_coeffs(qhat: &GridFunction, p0: &[Complex64]) -> Result<RecoveredCoeffs> {
    if p0.is_empty() {
        return Err(Error::EmptyData);
    }
    let system = dirichlet_eigens(qhat, p0.len())?;
    let coeffs = p0
        .iter()
        .zip(&system.slope0)
        .enumerate()
        .map(|(i, (p, &s))| {
            if s.abs() < SLOPE_FLOOR {
                Err(Error::DegenerateSlope { index: i + 1, slope: s })
            } else {
                Ok(p / s)
            }
        })
        .collect::<Result<_>>()?;
    Ok(RecoveredCoeffs { coeffs, system })
}

#[derive(Clone, Debug)]
pub struct SourceEstimate {
    pub re: GridFunction,
    pub im: GridFunction,
    /// `‖Im â‖ / ‖â‖` in `L²`.
    pub imag_residue: f64,
    pub warning: Option<String>,
}

/// `â(x) = Σ_k â_k φ_k(x)` on the eigenfunction grid.
pub fn reconstruct_source(coeffs: &[Complex64], sys: &EigenSystem) -> Result<SourceEstimate> {
    if coeffs.len() != sys.len() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} eigenfunctions",
            coeffs.len(),
            sys.len()
        )));
    }
    let n = sys.eigenfunctions[0].values().len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (c, phi) in coeffs.iter().zip(&sys.eigenfunctions) {
        for (i, v) in phi.values().iter().enumerate() {
            re[i] += c.re * v;
            im[i] += c.im * v;
        }
    }
    let re = GridFunction::new(re)?;
    let im = GridFunction::new(im)?;
    let total = (re.l2_norm().powi(2) + im.l2_norm().powi(2)).sqrt();
    let imag_residue = if total > 0.0 { im.l2_norm() / total } else { 0.0 };
    let warning = (imag_residue > 1e-3)
        .then(|| format!("recovered source has imaginary residue {imag_residue:.3e}"));
    Ok(SourceEstimate {
        re,
        im,
        imag_residue,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_sim::{project_source, SourceSpec};
    use std::f64::consts::PI;

    fn free_q() -> GridFunction {
        GridFunction::constant(1024, 0.0).unwrap()
    }

    #[test]
    fn division_by_free_slopes() {
        let s = 2f64.sqrt() * PI;
        let p0 = vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.25 * 2.0 * s, 0.0),
            Complex64::new(3.0 * s / 9.0, 0.0),
        ];
        let rec = recover_coeffs(&free_q(), &p0).unwrap();
        for (k, c) in rec.coeffs.iter().enumerate() {
            let exact = 1.0 / ((k + 1) * (k + 1)) as f64;
            assert!((c - exact).norm() < 1e-8, "{k} {c}");
        }
    }

    #[test]
    fn single_mode_source() {
        let sys = dirichlet_eigens(&free_q(), 1).unwrap();
        let est = reconstruct_source(&[Complex64::new(1.0, 0.0)], &sys).unwrap();
        for (x, v) in est.re.nodes().zip(est.re.values()) {
            assert!((v - 2f64.sqrt() * (PI * x).sin()).abs() < 1e-8);
        }
        assert_eq!(est.imag_residue, 0.0);
        let zero = reconstruct_source(&[Complex64::new(0.0, 0.0)], &sys).unwrap();
        assert!(zero.re.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_round_trip_and_parseval() {
        let q = GridFunction::from_fn(1024, |x| 3.0 * (2.0 * PI * x).cos()).unwrap();
        let sys = dirichlet_eigens(&q, 6).unwrap();
        let coeffs: Vec<Complex64> = (1..=6).map(|k| Complex64::new(1.0 / k as f64, 0.5 / k as f64)).collect();
        let est = reconstruct_source(&coeffs, &sys).unwrap();
        let back = project_source(&SourceSpec::grid(est.re.clone(), 6).unwrap(), &sys).unwrap();
        for (b, c) in back.coeffs.iter().zip(&coeffs) {
            assert!((b.re - c.re).abs() < 1e-8);
        }
        let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let norm2 = est.re.l2_norm().powi(2) + est.im.l2_norm().powi(2);
        assert!((norm2 - energy).abs() < 1e-6 * energy);
        assert!(est.warning.is_some());
    }

    #[test]
    fn length_mismatch_rejected() {
        let sys = dirichlet_eigens(&free_q(), 2).unwrap();
        assert!(reconstruct_source(&[Complex64::new(1.0, 0.0)], &sys).is_err());
    }
}
