#![allow(dead_code)] // shared between integration test binaries; not all use every helper

//! Shared test support: an independent dense eigensolver oracle and random
//! instance construction helpers.
//!
//! The oracle is a cyclic complex Jacobi eigendecomposition of the Hermitian
//! normal matrix; it shares no code with the nalgebra SVD used by the
//! library, so kernel dimensions and singular values can be cross-checked
//! against an independent route.

use cophase::model::{CoherenceLayout, ForwardOperator, PartialObservations};
use cophase::{CMatrix, CVector, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub struct Instance {
    pub op: ForwardOperator,
    pub xi: CVector,
    pub b: CVector,
    pub obs: PartialObservations,
}

/// Noise-free Gaussian instance with `b = A xi`.
pub fn random_instance(seed: u64, n: usize, m: usize, c: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = CoherenceLayout::new(m, c).unwrap();
    let a = gaussian_matrix(&mut rng, layout.total(), n);
    let op = ForwardOperator::new(a, layout).unwrap();
    let xi = gaussian_vector(&mut rng, n);
    let b = op.apply(&xi).unwrap();
    let obs = PartialObservations::observe(layout, &b).unwrap();
    Instance { op, xi, b, obs }
}

/// Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.
/// Returns eigenvalues ascending with the matching eigenvector columns.
pub fn hermitian_eigen_jacobi(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "oracle needs a square matrix");
    let mut a = h.clone();
    let mut v = CMatrix::identity(n, n);
    let scale = h.norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let beta = apq.norm();
                if beta <= 1e-300 {
                    continue;
                }
                let alpha = a[(p, p)].re;
                let gamma = a[(q, q)].re;
                let phase = C64::from_polar(1.0, -apq.arg());
                // real Jacobi angle for [[alpha, beta], [beta, gamma]]:
                // the stable root of t^2 - 2 tau t - 1 = 0
                let tau = (gamma - alpha) / (2.0 * beta);
                let t = -tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // unitary W = diag(1, phase) * [[c, -s], [s, c]] acting on
                // columns/rows p and q
                let w00 = C64::new(c, 0.0);
                let w01 = C64::new(-s, 0.0);
                let w10 = phase * s;
                let w11 = phase * c;

                // A <- W^H A W
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * w00 + aiq * w10;
                    a[(i, q)] = aip * w01 + aiq * w11;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = w00.conj() * apj + w10.conj() * aqj;
                    a[(q, j)] = w01.conj() * apj + w11.conj() * aqj;
                }
                // V <- V W
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * w00 + viq * w10;
                    v[(i, q)] = vip * w01 + viq * w11;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = v.select_columns(order.iter());
    (eigenvalues, vectors)
}

/// Singular values (ascending) and right singular vectors of an arbitrary
/// matrix through the normal-matrix route of the Jacobi oracle.
pub fn svd_oracle(matrix: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = matrix.ad_mul(matrix);
    let (eigenvalues, vectors) = hermitian_eigen_jacobi(&h);
    let singular: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    (singular, vectors)
}

/// Number of singular values at or below `tol` times the largest. The
/// normal-matrix route cannot resolve ratios below sqrt(machine epsilon),
/// so `tol` should stay at or above 1e-6.
pub fn oracle_nullity(matrix: &CMatrix, tol: f64) -> usize {
    let (singular, _) = svd_oracle(matrix);
    let sigma_max = singular.last().copied().unwrap_or(0.0);
    singular.iter().filter(|&&s| s <= tol * sigma_max).count()
}

/// Cosine of the angle between two complex vectors (modulus of the
/// normalized inner product).
pub fn collinearity(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}
