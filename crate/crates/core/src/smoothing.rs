//! Local least-squares polynomial differentiation on uniform grids.

use nalgebra::{DMatrix, DVector};

/// Derivative of order `order` from a least-squares polynomial of degree
/// `degree` fitted over a sliding window of `window` nodes.
///
/// The window is centred where possible and shifted (not shrunk in size) at
/// the ends, so boundary nodes use a one-sided fit evaluated at the node.
pub fn local_poly_derivative(
    values: &[f64],
    h: f64,
    window: usize,
    degree: usize,
    order: usize,
) -> Vec<f64> {
    let n = values.len();
    let w = window.min(n).max(degree + 1);
    assert!(order <= degree, "derivative order exceeds fit degree");
    assert!(n > degree, "not enough samples for the fit");
    let half = w / 2;
    let factorial: f64 = (1..=order).map(|i| i as f64).product();
    let scale = factorial / h.powi(order as i32);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - w);
            let design = DMatrix::from_fn(w, degree + 1, |r, c| {
                let u = (start + r) as f64 - i as f64;
                u.powi(c as i32)
            });
            let rhs = DVector::from_iterator(w, values[start..start + w].iter().copied());
            let coeffs = design
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .expect("svd solve");
            coeffs[order] * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        let h = 0.01;
        let v: Vec<f64> = (0..50).map(|i| 1.0 + 2.0 * (i as f64 * h) - 3.0 * (i as f64 * h).powi(2)).collect();
        let d = local_poly_derivative(&v, h, 9, 2, 1);
        for (i, di) in d.iter().enumerate() {
            let x = i as f64 * h;
            assert!((di - (2.0 - 6.0 * x)).abs() < 1e-10);
        }
        let d2 = local_poly_derivative(&v, h, 9, 4, 2);
        for di in d2 {
            assert!((di + 6.0).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_diag_gives_unit_slope() {
        let v: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        for d in local_poly_derivative(&v, 1.0 / 64.0, 9, 2, 1) {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }
}
