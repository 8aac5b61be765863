//! Dense linear-algebra helpers on top of nalgebra: truncated SVD, guarded
//! least squares, and real eigendecomposition via the real Schur form.

use nalgebra::{DMatrix, Schur, SVD};

use crate::error::{assumptions, Error, Result};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rank-`k` truncated SVD `m ≈ U diag(s) Vᵀ`, singular values descending.
pub fn truncated_svd(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let order = &order[..k];
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let uk = DMatrix::from_fn(m.nrows(), k, |r, c| u[(r, order[c])]);
    let vk = DMatrix::from_fn(m.ncols(), k, |r, c| vt[(order[c], r)]);
    (uk, s, vk)
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Numerical rank at relative threshold `rel_tol`.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v / top > rel_tol).count(),
        _ => 0,
    }
}

/// Least-squares solution of `a x = b` through the pseudo-inverse of a
/// full-column-rank `a`. Fails when `cond(a)` exceeds `max_condition`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let svd = SVD::new(a.clone(), true, true);
    let s = &svd.singular_values;
    let hi = s.iter().copied().fold(0.0, f64::max);
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= max_condition) || s.len() < a.ncols() {
        return Err(Error::SolveIllConditioned {
            condition,
            stratum: None,
            assumption: assumptions::HS_COMPLETENESS,
        });
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut utb = u.transpose() * b;
    for (i, mut row) in utb.row_iter_mut().enumerate() {
        row /= s[i];
    }
    Ok(vt.transpose() * utb)
}

/// Real eigendecomposition of a square matrix with (numerically) real
/// spectrum.
#[derive(Debug, Clone)]
pub struct RealEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, unit Euclidean norm.
    pub vectors: DMatrix<f64>,
    /// Smallest pairwise distance between eigenvalues (complex pairs count
    /// as twice their imaginary part).
    pub gap: f64,
    /// Largest imaginary part seen in the Schur form.
    pub max_imag: f64,
}

/// Eigen-decompose via the real Schur form `m = Q S Qᵀ`. Complex pairs are
/// reported through `max_imag` and `gap`; eigenvectors are only returned
/// when the spectrum is real and the gap positive.
pub fn real_eigen(m: &DMatrix<f64>) -> Option<RealEigen> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)?;
    let (q, s) = schur.unpack();
    let mut values: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut i = 0;
    let mut max_imag: f64 = 0.0;
    let mut has_block = false;
    while i < n {
        if i + 1 < n && s[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (s[(i, i)], s[(i, i + 1)], s[(i + 1, i)], s[(i + 1, i + 1)]);
            let mid = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc < 0.0 {
                let im = (-disc).sqrt();
                max_imag = max_imag.max(im);
                values.push((mid, im));
                values.push((mid, -im));
            } else {
                let r = disc.sqrt();
                values.push((mid + r, 0.0));
                values.push((mid - r, 0.0));
            }
            has_block = true;
            i += 2;
        } else {
            values.push((s[(i, i)], 0.0));
            i += 1;
        }
    }
    let mut gap = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            let (x, y) = (values[a], values[b]);
            gap = gap.min(((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt());
        }
    }
    if has_block || !(gap > 0.0) {
        return Some(RealEigen {
            values: values.iter().map(|v| v.0).collect(),
            vectors: DMatrix::zeros(n, n),
            gap,
            max_imag,
        });
    }
    let lambda: Vec<f64> = values.iter().map(|v| v.0).collect();
    let mut y = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = 1.0;
        for i in (0..k).rev() {
            let mut acc = 0.0;
            for j in i + 1..=k {
                acc += s[(i, j)] * y[(j, k)];
            }
            y[(i, k)] = -acc / (s[(i, i)] - lambda[k]);
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Some(RealEigen { values: lambda, vectors, gap, max_imag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalues of a symmetric matrix; test oracle only.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j)
                .map(|(i, j)| a[(i, j)].powi(2)).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn singular_values_match_jacobi_on_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        let s = singular_values(&m);
        let ev = jacobi_eigenvalues(m.transpose() * &m);
        for (a, b) in s.iter().zip(&ev) {
            assert!((a - b.sqrt()).abs() < 1e-10, "{a} vs {}", b.sqrt());
        }
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        let x = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
        let got = lstsq(&a, &(&a * &x), 1e8).unwrap();
        assert!((got - x).amax() < 1e-12);
    }

    #[test]
    fn lstsq_rejects_singular_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(lstsq(&a, &b, 1e8), Err(Error::SolveIllConditioned { .. })));
    }

    #[test]
    fn eigen_of_similar_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.4, 0.7, 0.9]));
        let m = &p * d * p.clone().try_inverse().unwrap();
        let e = real_eigen(&m).unwrap();
        let mut vals = e.values.clone();
        vals.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip([0.1, 0.4, 0.7, 0.9]) {
            assert!((a - b).abs() < 1e-10);
        }
        let resid = &m * &e.vectors - &e.vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        assert!(resid.amax() < 1e-10);
        assert!((e.gap - 0.2).abs() < 1e-9);
    }

    #[test]
    fn rotation_has_complex_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = real_eigen(&m).unwrap();
        assert!((e.max_imag - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numerical_rank_counts_relative_threshold() {
        assert_eq!(numerical_rank(&[1.0, 1e-3, 1e-9], 1e-8), 2);
        assert_eq!(numerical_rank(&[], 1e-8), 0);
    }
}
