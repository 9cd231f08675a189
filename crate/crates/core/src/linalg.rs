//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU, QR, SVD};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Leading singular triplets of a complex matrix.
pub struct TruncatedSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

/// Singular vectors with `σ ≥ cut · σ₁`, at most `max_rank` of them.
///
/// Uses a randomized range finder (two power iterations). A small sample is
/// tried first and, if its smallest singular value is still above the cut,
/// replaced by one of size `max_rank + 8`; once the sample would cover half
/// the matrix a dense SVD is used instead.
pub fn truncated_svd(a: &CMatrix, cut: f64, max_rank: usize) -> TruncatedSvd {
    let n = a.ncols().min(a.nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f5bd);
    let mut p = n.clamp(1, 24);
    loop {
        let (u, s, v) = if 2 * p >= n {
            dense_svd(a)
        } else {
            randomized_svd(a, p, &mut rng)
        };
        let s0 = s.first().copied().unwrap_or(0.0);
        let exhausted = 2 * p >= n || s.len() >= n;
        let enough = s.last().is_none_or(|&last| last < cut * s0);
        if exhausted || enough || p >= max_rank + 8 {
            let rank = if s0 > 0.0 {
                s.iter().take_while(|&&x| x >= cut * s0).count().min(max_rank)
            } else {
                0
            };
            return TruncatedSvd {
                u: u.columns(0, rank).into_owned(),
                sigma: s[..rank].to_vec(),
                v: v.columns(0, rank).into_owned(),
            };
        }
        p = max_rank + 8;
    }
}

fn dense_svd(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v requested").adjoint();
    (u, svd.singular_values.iter().copied().collect(), v)
}

fn randomized_svd(a: &CMatrix, p: usize, rng: &mut ChaCha8Rng) -> (CMatrix, Vec<f64>, CMatrix) {
    let n = a.ncols();
    let omega = CMatrix::from_fn(n, p, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    });
    let mut q = QR::new(a * omega).q();
    for _ in 0..2 {
        let z = QR::new(a.ad_mul(&q)).q();
        q = QR::new(a * z).q();
    }
    let b = q.ad_mul(a);
    let svd = SVD::new(b, true, true);
    let u = &q * svd.u.expect("u requested");
    let v = svd.v_t.expect("v requested").adjoint();
    (u, svd.singular_values.iter().copied().collect(), v)
}

/// Eigenpairs of a general complex matrix via the Schur form; eigenvectors are
/// recovered by back-substitution on the triangular factor and normalized.
pub fn complex_eigen(a: &CMatrix) -> Option<(Vec<Complex64>, Vec<CVector>)> {
    let n = a.nrows();
    if n == 0 {
        return Some((vec![], vec![]));
    }
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
    let (q, t) = schur.unpack();
    let small = f64::EPSILON * scale;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let ev = t[(i, i)];
        let mut z = CVector::zeros(n);
        z[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in j + 1..=i {
                acc += t[(j, l)] * z[l];
            }
            let mut den = t[(j, j)] - ev;
            if den.norm() < small {
                den = Complex64::new(small, 0.0);
            }
            z[j] = -acc / den;
        }
        let mut v = &q * z;
        let nrm = v.norm();
        if nrm > 0.0 {
            v /= Complex64::new(nrm, 0.0);
        }
        values.push(ev);
        vectors.push(v);
    }
    Some((values, vectors))
}

/// Hager–Higham estimate of `‖A⁻¹‖₁` for a symmetric matrix from its LU factors.
fn inverse_norm1_estimate_symmetric(lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>, n: usize) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = match lu.solve(&x) {
            Some(y) => y,
            None => return f64::INFINITY,
        };
        let new_est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        // symmetric: A^{-T} = A^{-1}
        let z = match lu.solve(&xi) {
            Some(z) => z,
            None => return f64::INFINITY,
        };
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| {
                if v.abs() > acc.1 {
                    (j, v.abs())
                } else {
                    acc
                }
            });
        if new_est <= est || zmax <= z.dot(&x) {
            est = est.max(new_est);
            break;
        }
        est = new_est;
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    est
}

/// Result of a dense symmetric solve with diagnostics.
pub struct SolveReport {
    pub x: DVector<f64>,
    pub cond1: f64,
    pub relative_residual: f64,
}

/// Solve a symmetric system by LU, with a 1-norm condition estimate and residual.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<SolveReport> {
    let n = a.nrows();
    let lu = LU::new(a.clone());
    let mut x = lu.solve(b)?;
    // one step of iterative refinement
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let cond1 = norm1 * inverse_norm1_estimate_symmetric(&lu, n);
    let res = (b - a * &x).norm();
    let bn = b.norm();
    let relative_residual = if bn > 0.0 { res / bn } else { res };
    Some(SolveReport {
        x,
        cond1,
        relative_residual,
    })
}

/// `‖A⁻¹‖₂` for a symmetric matrix.
pub fn symmetric_inverse_norm2(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    1.0 / min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigen_of_triangular_and_rotation() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let (vals, vecs) = complex_eigen(&a).unwrap();
        for (l, v) in vals.iter().zip(&vecs) {
            assert!((l.norm() - 1.0).abs() < 1e-12);
            let r = &a * v - v * *l;
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn eigen_residuals_random() {
        let a = CMatrix::from_fn(6, 6, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64));
        let (vals, vecs) = complex_eigen(&a).unwrap();
        for (l, v) in vals.iter().zip(&vecs) {
            assert!((&a * v - v * *l).norm() < 1e-9);
        }
    }

    #[test]
    fn truncated_svd_finds_rank() {
        let n = 200;
        let u1 = CVector::from_fn(n, |i, _| c((i as f64 * 0.1).cos(), (i as f64 * 0.1).sin()));
        let u2 = CVector::from_fn(n, |i, _| c((i as f64 * 0.37).cos(), -(i as f64 * 0.37).sin()));
        let a = &u1 * u1.transpose() * c(2.0, 0.0) + &u2 * u2.transpose() * c(0.5, 0.0);
        let t = truncated_svd(&a, 1e-8, 64);
        assert_eq!(t.sigma.len(), 2);
        let dense = SVD::new(a.clone(), false, false).singular_values;
        assert!((t.sigma[0] - dense[0]).abs() < 1e-9 * dense[0]);
        assert!((t.sigma[1] - dense[1]).abs() < 1e-9 * dense[0]);
    }

    #[test]
    fn symmetric_solve_and_condition() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let rep = solve_symmetric(&a, &b).unwrap();
        assert!(rep.relative_residual < 1e-14);
        let exact = a.clone().try_inverse().unwrap();
        let inv1 = (0..3)
            .map(|j| exact.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let norm1 = 6.0;
        let exact_cond = norm1 * inv1;
        assert!(rep.cond1 <= exact_cond * (1.0 + 1e-12) && rep.cond1 >= exact_cond / 3.0);
    }
}
