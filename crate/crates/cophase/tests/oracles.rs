//! Cross-checks of the null-space machinery against the independent Jacobi
//! eigendecomposition oracle.

mod common;

use common::*;
use cophase::linear::{
    build_q, build_r, check_oversampling, smallest_singular_vector, solve_r, KernelMethod,
    Reconstruction,
};
use cophase::model::{relative_deviation, CoherenceLayout, ForwardOperator, PartialObservations};
use cophase::{CMatrix, CVector, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn jacobi_oracle_solves_known_diagonal() {
    let mut h = CMatrix::zeros(3, 3);
    h[(0, 0)] = C64::new(5.0, 0.0);
    h[(1, 1)] = C64::new(-2.0, 0.0);
    h[(2, 2)] = C64::new(1.0, 0.0);
    let (eigenvalues, _) = hermitian_eigen_jacobi(&h);
    assert!((eigenvalues[0] + 2.0).abs() < 1e-12);
    assert!((eigenvalues[1] - 1.0).abs() < 1e-12);
    assert!((eigenvalues[2] - 5.0).abs() < 1e-12);
}

#[test]
fn jacobi_oracle_satisfies_eigen_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = gaussian_matrix(&mut rng, 8, 8);
    let h = g.ad_mul(&g); // Hermitian positive semidefinite
    let (eigenvalues, vectors) = hermitian_eigen_jacobi(&h);
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        let v = vectors.column(i).into_owned();
        let residual = (&h * &v - &v * C64::new(lambda, 0.0)).norm();
        assert!(
            residual <= 1e-10 * h.norm(),
            "pair {i}: residual {residual}"
        );
    }
    // eigenvalues of A^H A match singular values of A squared
    let sv = g.clone().svd(false, false).singular_values;
    let mut sv_sq: Vec<f64> = sv.iter().map(|s| s * s).collect();
    sv_sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in eigenvalues.iter().zip(sv_sq.iter()) {
        assert!((a - b).abs() <= 1e-10 * sv_sq.last().unwrap());
    }
}

#[test]
fn q_system_has_unique_kernel_by_oracle() {
    let instance = random_instance(101, 2, 2, 2);
    let sys = build_q(&instance.op, &instance.obs).unwrap();
    assert_eq!(oracle_nullity(&sys.matrix, 1e-6), 1);
    let (_, vectors) = svd_oracle(&sys.matrix);
    let kernel = vectors.column(0).into_owned();
    assert!(collinearity(&kernel, &instance.xi) >= 1.0 - 1e-10);
}

#[test]
fn r_system_has_unique_kernel_by_oracle() {
    let instance = random_instance(102, 2, 3, 2);
    let sys = build_r(&instance.op, &instance.obs).unwrap();
    assert_eq!(oracle_nullity(&sys.matrix, 1e-6), 1);
    let (_, vectors) = svd_oracle(&sys.matrix);
    let kernel = vectors.column(0).into_owned();
    let psi_true = CVector::from_fn(3, |m, _| {
        instance.b[m] / C64::new(instance.b[m].norm(), 0.0)
    });
    assert!(collinearity(&kernel, &psi_true) >= 1.0 - 1e-10);
}

#[test]
fn duplicated_group_doubles_the_nullity() {
    // square Q instance with groups 1 and 2 replaced by copies of group 0:
    // only N-2 distinct groups remain, so the kernel gains a second
    // dimension and the spectrum shows two numerical zeros
    let n = 5;
    let m = 5; // M(C-1) = N
    let instance = random_instance(103, n, m, 2);
    let mut a = instance.op.matrix().clone();
    let mut b = instance.b.clone();
    for c in 0..2 {
        for dup in [1usize, 2] {
            for col in 0..n {
                let src = a[(c * m, col)];
                a[(dup + c * m, col)] = src;
            }
            b[dup + c * m] = b[c * m];
        }
    }
    let layout = CoherenceLayout::new(m, 2).unwrap();
    let op = ForwardOperator::new(a, layout).unwrap();
    let obs = PartialObservations::observe(layout, &b).unwrap();
    let sys = build_q(&op, &obs).unwrap();
    assert!(oracle_nullity(&sys.matrix, 1e-6) >= 2);

    let kernel = smallest_singular_vector(&sys, KernelMethod::ExactSvd).unwrap();
    assert!(kernel.gap < 10.0, "gap {}", kernel.gap);

    // the harness spectrum shows two small singular values as well
    let spectrum = cophase::linear::singular_spectrum(&sys);
    let smallest = spectrum[spectrum.len() - 1];
    let second = spectrum[spectrum.len() - 2];
    assert!(second <= 1e-10 * spectrum[0], "second {second}");
    assert!(smallest <= second);
}

/// Force `A x` to vanish exactly on one coherent group by projecting the
/// group's rows against the planned solution.
fn instance_with_zero_group(seed: u64, n: usize, m: usize, c: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = CoherenceLayout::new(m, c).unwrap();
    let mut a = gaussian_matrix(&mut rng, layout.total(), n);
    let xi = gaussian_vector(&mut rng, n);
    let norm_sq: C64 = C64::new(xi.norm_squared(), 0.0);
    for block in 0..c {
        let row = block * m; // group 0
        let mut dot = C64::new(0.0, 0.0);
        for k in 0..n {
            dot += a[(row, k)] * xi[k];
        }
        let alpha = dot / norm_sq;
        for k in 0..n {
            let correction = alpha * xi[k].conj();
            a[(row, k)] -= correction;
        }
    }
    let op = ForwardOperator::new(a, layout).unwrap();
    let b = op.apply(&xi).unwrap();
    let obs = PartialObservations::observe(layout, &b).unwrap();
    Instance { op, xi, b, obs }
}

#[test]
fn zero_group_condition_predicts_r_route_success() {
    // M(C-1) = N-2 is one row short without the adjustment; a complete
    // zero tuple removes one phase unknown and restores uniqueness.
    let n = 6;
    let c = 2;

    // with the zero group: adjusted condition holds, solve succeeds
    let m = n - 2;
    let instance = instance_with_zero_group(300, n, m, c);
    assert_eq!(instance.obs.zero_groups(), 1);
    assert!(check_oversampling(n, m, c, 1).unwrap());
    assert!(!check_oversampling(n, m, c, 0).unwrap());
    let report = solve_r(
        &instance.op,
        &instance.obs,
        KernelMethod::ExactSvd,
        Reconstruction::Plain,
    )
    .unwrap();
    let rd = relative_deviation(&instance.op, &report.x, &instance.xi).unwrap();
    assert!(rd <= 1e-8, "rd {rd}");

    // one group fewer: adjusted condition fails and so does the solve
    let m_short = n - 3;
    let instance = instance_with_zero_group(301, n, m_short, c);
    assert_eq!(instance.obs.zero_groups(), 1);
    assert!(!check_oversampling(n, m_short, c, 1).unwrap());
    let report = solve_r(
        &instance.op,
        &instance.obs,
        KernelMethod::ExactSvd,
        Reconstruction::Plain,
    )
    .unwrap();
    let rd = relative_deviation(&instance.op, &report.x, &instance.xi).unwrap();
    assert!(rd > 1e-6, "unexpected success rd {rd}");

    // sanity: the unadjusted minimal instance without zeros succeeds
    let m_full = n - 1;
    let instance = random_instance(302, n, m_full, c);
    assert!(check_oversampling(n, m_full, c, 0).unwrap());
    let report = solve_r(
        &instance.op,
        &instance.obs,
        KernelMethod::ExactSvd,
        Reconstruction::Plain,
    )
    .unwrap();
    let rd = relative_deviation(&instance.op, &report.x, &instance.xi).unwrap();
    assert!(rd <= 1e-8, "rd {rd}");
}

#[test]
fn padded_extraction_matches_oracle_on_wide_systems() {
    // minimal-row Q systems are wide by one column; the kernel must still
    // match the oracle's smallest singular vector
    let instance = random_instance(404, 8, 7, 2);
    let sys = build_q(&instance.op, &instance.obs).unwrap();
    assert_eq!(sys.matrix.nrows(), 7);
    assert_eq!(sys.matrix.ncols(), 8);
    let kernel = smallest_singular_vector(&sys, KernelMethod::ExactSvd).unwrap();
    let (_, vectors) = svd_oracle(&sys.matrix);
    let oracle_kernel = vectors.column(0).into_owned();
    assert!(collinearity(&kernel.vector, &oracle_kernel) >= 1.0 - 1e-9);
    assert!(collinearity(&kernel.vector, &instance.xi) >= 1.0 - 1e-9);
}
