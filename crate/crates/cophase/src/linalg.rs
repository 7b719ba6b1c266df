//! Crate-internal dense linear algebra helpers on top of nalgebra.

use crate::{CMatrix, CVector, Error, Result, C64};

/// Thin QR factorization reused for repeated least-squares solves against
/// the same tall (or square) matrix.
pub(crate) struct QrLstsq {
    q: CMatrix,
    r: CMatrix,
    cond_estimate: f64,
}

impl QrLstsq {
    /// Factor `a` (rows >= cols required for a meaningful least-squares
    /// solve; callers guarantee this).
    pub fn new(a: &CMatrix) -> Self {
        let qr = a.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let mut dmax: f64 = 0.0;
        let mut dmin = f64::INFINITY;
        for i in 0..r.nrows().min(r.ncols()) {
            let d = r[(i, i)].norm();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        let cond_estimate = if dmin == 0.0 {
            f64::INFINITY
        } else {
            dmax / dmin
        };
        Self {
            q,
            r,
            cond_estimate,
        }
    }

    /// Lower bound estimate of the condition number from the `R` diagonal.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Orthonormal basis of the range (thin `Q` factor).
    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    /// Minimum-residual solution of `a x = rhs`.
    pub fn solve(&self, rhs: &CVector) -> Result<CVector> {
        let y = self.q.ad_mul(rhs);
        let n = self.r.ncols();
        let mut x = CVector::zeros(n);
        x.copy_from(&y.rows(0, n));
        if self
            .r
            .view((0, 0), (n, n))
            .solve_upper_triangular_mut(&mut x)
        {
            Ok(x)
        } else {
            Err(Error::SingularSystem)
        }
    }
}

/// One-shot least-squares solve.
pub(crate) fn lstsq(a: &CMatrix, rhs: &CVector) -> Result<CVector> {
    QrLstsq::new(a).solve(rhs)
}

/// Zero-pad a wide matrix to square so that a thin SVD exposes the full set
/// of right singular vectors, including the structural null space.
pub(crate) fn pad_to_square(m: &CMatrix) -> CMatrix {
    if m.nrows() >= m.ncols() {
        return m.clone();
    }
    let mut padded = CMatrix::zeros(m.ncols(), m.ncols());
    padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    padded
}

/// In-place modified Gram-Schmidt on the columns of `v`.
pub(crate) fn orthonormalize_columns(v: &mut CMatrix) {
    let cols = v.ncols();
    for j in 0..cols {
        for k in 0..j {
            let proj = v.column(k).dotc(&v.column(j));
            let col_k = v.column(k).into_owned();
            let mut col_j = v.column_mut(j);
            col_j -= col_k * proj;
        }
        let norm = v.column(j).norm();
        if norm > 0.0 {
            v.column_mut(j).unscale_mut(norm);
        }
    }
}

/// Eigendecomposition of a 2x2 Hermitian matrix `[[a, b], [conj(b), c]]`
/// with real diagonal. Returns eigenvalues ascending and the unitary matrix
/// of column eigenvectors.
pub(crate) fn hermitian_eig_2x2(a: f64, b: C64, c: f64) -> ([f64; 2], CMatrix) {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return if a <= c {
            ([a, c], CMatrix::identity(2, 2))
        } else {
            (
                [c, a],
                CMatrix::from_column_slice(
                    2,
                    2,
                    &[
                        C64::new(0.0, 0.0),
                        C64::new(1.0, 0.0),
                        C64::new(1.0, 0.0),
                        C64::new(0.0, 0.0),
                    ],
                ),
            )
        };
    }
    let trace = a + c;
    let delta = 0.5 * (a - c);
    let radius = (delta * delta + b_norm * b_norm).sqrt();
    let lo = 0.5 * trace - radius;
    let hi = 0.5 * trace + radius;

    // Eigenvector for `lo`: (b, lo - a) normalized; guard the degenerate
    // direction with the alternative expression.
    let mut v0 = nalgebra::Vector2::new(b, C64::new(lo - a, 0.0));
    if v0.norm() < 1e-300 {
        v0 = nalgebra::Vector2::new(C64::new(lo - c, 0.0), b.conj());
    }
    let v0 = v0.unscale(v0.norm());
    // Orthogonal complement in 2D.
    let v1 = nalgebra::Vector2::new(-v0[1].conj(), v0[0].conj());
    let mut u = CMatrix::zeros(2, 2);
    u.set_column(0, &CVector::from_vec(vec![v0[0], v0[1]]));
    u.set_column(1, &CVector::from_vec(vec![v1[0], v1[1]]));
    ([lo, hi], u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn lstsq_recovers_consistent_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
            .map(|x| C64::new(x, 0.0));
        let x_true = CVector::from_vec(vec![C64::new(1.0, -2.0), C64::new(0.5, 3.0)]);
        let rhs = &a * &x_true;
        let x = lstsq(&a, &rhs).unwrap();
        assert!((x - x_true).norm() < 1e-13);
    }

    #[test]
    fn gram_schmidt_produces_orthonormal_columns() {
        let mut v = CMatrix::from_fn(5, 2, |i, j| C64::new((i + j) as f64 + 1.0, i as f64 - 2.0));
        orthonormalize_columns(&mut v);
        let gram = v.ad_mul(&v);
        assert!((gram[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((gram[(1, 1)].re - 1.0).abs() < 1e-14);
        assert!(gram[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn hermitian_2x2_matches_characteristic_polynomial() {
        let (a, b, c) = (2.0, C64::new(0.5, -1.5), -1.0);
        let ([lo, hi], u) = hermitian_eig_2x2(a, b, c);
        let h =
            CMatrix::from_column_slice(2, 2, &[C64::new(a, 0.0), b.conj(), b, C64::new(c, 0.0)]);
        for (idx, lambda) in [(0usize, lo), (1usize, hi)] {
            let v = u.column(idx).into_owned();
            let residual = (&h * &v - &v * C64::new(lambda, 0.0)).norm();
            assert!(residual < 1e-12, "residual {residual}");
        }
        assert!(lo <= hi);
    }
}
