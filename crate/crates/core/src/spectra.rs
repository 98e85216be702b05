//! Empirical spectral quantities of sample covariance matrices.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Minimum distance between an evaluation point and an eigenvalue.
pub const POLE_TOLERANCE: f64 = 1e-14;

/// `(1/m) X X'`, symmetrized.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.ncols().max(1) as f64;
    let mut s = x * x.transpose();
    s /= m;
    symmetrize(&mut s);
    s
}

fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn eigenvalues_desc(s: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = s.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Full eigendecomposition of a symmetric matrix, sorted descending.
/// Column `j` of the returned matrix is the eigenvector of the `j`-th value.
pub fn eigen_desc(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

/// Eigenvalues of `(1/m) X_tilde X_tilde'` with the leading singular triples.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    /// All `n` eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `n x k`; column `i` is the left singular vector of the `i`-th value.
    #[serde(skip)]
    pub left_vectors: DMatrix<f64>,
    /// `m x k`; paired with the left vectors so that
    /// `X_tilde v_i = sqrt(m * lambda_i) u_i`.
    #[serde(skip)]
    pub right_vectors: DMatrix<f64>,
    pub k: usize,
}

impl SpectralSummary {
    /// Singular values of `X_tilde / sqrt(m)` for the retained triples.
    pub fn singular_values(&self) -> Vec<f64> {
        self.eigenvalues[..self.k].iter().map(|l| l.sqrt()).collect()
    }
}

/// Flips `col` so that its largest-magnitude entry is positive. Returns the
/// sign applied.
fn canonical_sign(col: &mut DVector<f64>) -> f64 {
    let idx = col.iamax();
    if col[idx] < 0.0 {
        col.neg_mut();
        -1.0
    } else {
        1.0
    }
}

/// Eigenvalues of the sample covariance of `x_tilde` and its top `k`
/// singular triples.
pub fn top_spectrum(x_tilde: &DMatrix<f64>, k: usize) -> Result<SpectralSummary> {
    let (n, m) = x_tilde.shape();
    if k == 0 || k > n {
        return Err(Error::validation(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let cov = sample_covariance(x_tilde);
    let (mut eigenvalues, vectors) = eigen_desc(&cov);
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
    }
    for l in eigenvalues.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    let mut left = DMatrix::zeros(n, k);
    let mut right = DMatrix::zeros(m, k);
    for i in 0..k {
        let mut u: DVector<f64> = vectors.column(i).into_owned();
        u /= u.norm();
        canonical_sign(&mut u);
        let mut v = x_tilde.tr_mul(&u);
        let norm = v.norm();
        if !(norm > 0.0) || eigenvalues[i] <= 0.0 {
            return Err(Error::Numerical(format!(
                "singular value {i} is zero; right vector undefined"
            )));
        }
        v /= norm;
        left.set_column(i, &u);
        right.set_column(i, &v);
    }
    Ok(SpectralSummary { eigenvalues, left_vectors: left, right_vectors: right, k })
}

/// Empirical Stieltjes transform `s(z) = (1/n) sum 1/(lambda - z)` and its
/// derivative `s'(z) = (1/n) sum 1/(lambda - z)^2`.
pub fn empirical_stieltjes(eigenvalues: &[f64], z: C64) -> Result<(C64, C64)> {
    if eigenvalues.is_empty() {
        return Err(Error::validation("no eigenvalues"));
    }
    let mut s = C64::new(0.0, 0.0);
    let mut ds = C64::new(0.0, 0.0);
    for &l in eigenvalues {
        let d = C64::new(l, 0.0) - z;
        if d.norm() <= POLE_TOLERANCE {
            return Err(Error::Pole { z: z.to_string(), pole: l, distance: d.norm() });
        }
        let inv = d.inv();
        s += inv;
        ds += inv * inv;
    }
    let n = eigenvalues.len() as f64;
    Ok((s / n, ds / n))
}

/// Matrix of inner products `<a_i, b_j>`.
pub fn overlap_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() || a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::validation(format!(
            "cannot overlap {}x{} with {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.tr_mul(b))
}

/// Squared norm of the projection of `v` onto the row space of `x`,
/// `v' X' (X X')^{-1} X v`.
pub fn right_projection_energy(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let (n, m) = x.shape();
    if n > m {
        return Err(Error::validation("need n <= m for a full row rank noise matrix"));
    }
    if v.len() != m {
        return Err(Error::validation(format!("vector has length {}, expected {m}", v.len())));
    }
    let gram = sample_covariance(x);
    let y = x * v / m as f64;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("noise matrix is rank deficient".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if lo <= 1e-7 * hi {
        return Err(Error::Numerical("noise matrix is numerically rank deficient".into()));
    }
    let w = chol.solve(&y);
    // y = Xv/m and gram = XX'/m, so y' gram^{-1} y = v'X'(XX')^{-1}Xv / m.
    Ok(y.dot(&w) * m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_small_cases() {
        let z = sample_covariance(&DMatrix::zeros(3, 5));
        assert_eq!(z, DMatrix::zeros(3, 3));
        let ones = sample_covariance(&DMatrix::from_element(1, 4, 1.0));
        assert_eq!(ones[(0, 0)], 1.0);
    }

    #[test]
    fn diagonal_spectrum() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        let s = top_spectrum(&x, 2).unwrap();
        assert!((s.eigenvalues[0] - 4.5).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!((s.left_vectors[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((s.right_vectors[(1, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_spectrum() {
        let m = 9usize;
        let u = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let v = DMatrix::<f64>::from_fn(m, 1, |i, _| if i % 2 == 0 { 0.4 } else { 0.0 });
        let v = &v / v.norm();
        let x = &u * v.transpose() * (2.0 * (m as f64).sqrt());
        let s = top_spectrum(&x, 1).unwrap();
        assert!((s.eigenvalues[0] - 4.0).abs() < 1e-12);
        let ov = s.left_vectors.column(0).dot(&u.column(0)).abs();
        assert!((ov - 1.0).abs() < 1e-12);
        assert!(s.eigenvalues[1..].iter().all(|l| *l >= 0.0 && *l < 1e-12));
    }

    #[test]
    fn k_out_of_range() {
        let x = DMatrix::from_element(2, 3, 1.0);
        assert!(top_spectrum(&x, 0).is_err());
        assert!(top_spectrum(&x, 3).is_err());
    }

    #[test]
    fn stieltjes_examples() {
        let (s, ds) = empirical_stieltjes(&[1.0], C64::new(2.0, 0.0)).unwrap();
        assert_eq!((s.re, ds.re), (-1.0, 1.0));
        let (s, ds) = empirical_stieltjes(&[1.0; 7], C64::new(0.0, 0.0)).unwrap();
        assert!((s.re - 1.0).abs() < 1e-15 && (ds.re - 1.0).abs() < 1e-15);
        assert!(empirical_stieltjes(&[1.0, 2.0], C64::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a = DMatrix::<f64>::identity(4, 2);
        let o = overlap_matrix(&a, &a).unwrap();
        assert_eq!(o, DMatrix::identity(2, 2));
        let b = DMatrix::from_fn(4, 1, |i, _| if i >= 2 { 1.0 } else { 0.0 });
        assert_eq!(overlap_matrix(&a, &b).unwrap(), DMatrix::zeros(2, 1));
        assert!(overlap_matrix(&a, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn projection_energy_extremes() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let inside = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]).normalize();
        assert!((right_projection_energy(&x, &inside).unwrap() - 1.0).abs() < 1e-12);
        let outside = DVector::from_vec(vec![0.0, 1.0, -1.0, 3.0]);
        assert!(right_projection_energy(&x, &outside).unwrap().abs() < 1e-12);
        let deficient = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(right_projection_energy(&deficient, &DVector::from_element(3, 1.0)).is_err());
    }
}
