//! Property tests for the structural invariants of the observation model
//! and the null-space systems.

mod common;

use common::*;
use cophase::linear::{build_q, build_r, smallest_singular_vector, KernelMethod};
use cophase::model::{
    add_noise, noise_to_signal, phase_diff_from_magnitudes, CoherenceLayout, NoiseSpec,
    PartialObservations,
};
use cophase::{CVector, C64};
use proptest::prelude::*;

fn complex_strategy() -> impl Strategy<Value = C64> {
    (
        prop_oneof![Just(0.0), -100.0..100.0f64],
        prop_oneof![Just(0.0), -100.0..100.0f64],
    )
        .prop_map(|(re, im)| C64::new(re, im))
}

fn observation_vector(groups: usize, coherent: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(complex_strategy(), groups * coherent)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Reassembling `B_c[mm] * (b_m / |b_m|)` reproduces every observation
    /// whose phase difference was defined.
    #[test]
    fn observe_round_trip((m, c) in (1usize..5, 2usize..5), raw in observation_vector(4, 4)) {
        let layout = CoherenceLayout::new(m, c).unwrap();
        let b = CVector::from_fn(layout.total(), |i, _| raw[i % raw.len()]);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        let threshold = obs.zero_threshold();
        for group in 0..m {
            let anchor = b[group];
            if anchor.norm() <= threshold {
                continue;
            }
            let anchor_phase = anchor / C64::new(anchor.norm(), 0.0);
            for block in 0..c {
                let idx = group + block * m;
                if b[idx].norm() <= threshold {
                    continue;
                }
                let reassembled = obs.b_entry(group, block) * anchor_phase;
                prop_assert!(
                    (reassembled - b[idx]).norm() <= 1e-12 * b[idx].norm(),
                    "group {group} block {block}: {reassembled} vs {}",
                    b[idx]
                );
            }
        }
    }

    /// A global phase on `b` leaves magnitudes and phase differences
    /// untouched.
    #[test]
    fn observe_is_global_phase_invariant(
        theta in -3.1f64..3.1,
        raw in observation_vector(3, 3),
    ) {
        let layout = CoherenceLayout::new(3, 3).unwrap();
        let b = CVector::from_fn(9, |i, _| raw[i]);
        let rotated = &b * C64::from_polar(1.0, theta);
        let obs_a = PartialObservations::observe(layout, &b).unwrap();
        let obs_b = PartialObservations::observe(layout, &rotated).unwrap();
        for i in 0..9 {
            prop_assert!((obs_a.magnitudes()[i] - obs_b.magnitudes()[i]).abs() <= 1e-12 * obs_a.magnitudes()[i].max(1e-300));
        }
        for m in 0..3 {
            for c in 0..2 {
                let da = obs_a.phase_diffs()[(m, c)];
                let db = obs_b.phase_diffs()[(m, c)];
                let mut diff = (da - db).abs();
                if diff > std::f64::consts::PI {
                    diff = 2.0 * std::f64::consts::PI - diff;
                }
                prop_assert!(diff <= 1e-9, "dphi {da} vs {db}");
            }
        }
    }

    /// The exact-rescaling noise model hits the requested ratio.
    #[test]
    fn noise_ratio_is_exact(
        ratio in prop_oneof![Just(0.0), 1e-9..2.0f64],
        seed in any::<u64>(),
        raw in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..40),
    ) {
        let b = CVector::from_fn(raw.len(), |i, _| C64::new(raw[i].0, raw[i].1));
        prop_assume!(b.norm() > 1e-6);
        let spec = NoiseSpec::new(ratio, seed).unwrap();
        let b_prime = add_noise(&b, &spec).unwrap();
        let measured = noise_to_signal(&b_prime, &b).unwrap();
        prop_assert!((measured - ratio).abs() <= 1e-12 * ratio.max(1e-300) + 1e-15);
    }

    /// Four-magnitude phase recovery agrees with the complex argument.
    #[test]
    fn phase_diff_matches_argument(
        (re_k, im_k) in (-10.0..10.0f64, -10.0..10.0f64),
        (re_m, im_m) in (-10.0..10.0f64, -10.0..10.0f64),
    ) {
        let b_k = C64::new(re_k, im_k);
        let b_m = C64::new(re_m, im_m);
        prop_assume!(b_k.norm() > 1e-3 && b_m.norm() > 1e-3);
        let recovered = phase_diff_from_magnitudes(
            b_k.norm(),
            b_m.norm(),
            (b_k + b_m).norm(),
            (b_k + C64::i() * b_m).norm(),
        ).unwrap();
        let expected = (b_k * b_m.conj()).arg();
        let mut diff = (recovered - expected).abs();
        if diff > std::f64::consts::PI {
            diff = 2.0 * std::f64::consts::PI - diff;
        }
        prop_assert!(diff <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Q and R are entry-wise invariant under a global observation phase,
    /// and scale linearly with a positive observation scale while the
    /// extracted unit kernel vector stays put.
    #[test]
    fn systems_gauge_and_scale(seed in any::<u64>(), theta in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let instance = random_instance(seed, 4, 5, 2);
        let layout = instance.op.layout();

        let q0 = build_q(&instance.op, &instance.obs).unwrap();
        let r0 = build_r(&instance.op, &instance.obs).unwrap();

        // global phase
        let rotated = &instance.b * C64::from_polar(1.0, theta);
        let obs_rot = PartialObservations::observe(layout, &rotated).unwrap();
        let q1 = build_q(&instance.op, &obs_rot).unwrap();
        let r1 = build_r(&instance.op, &obs_rot).unwrap();
        prop_assert!((q1.matrix.clone() - q0.matrix.clone()).norm() <= 1e-10 * q0.matrix.norm());
        prop_assert!((r1.matrix.clone() - r0.matrix.clone()).norm() <= 1e-9 * r0.matrix.norm().max(1e-300));

        // positive scale
        let scaled = &instance.b * C64::new(scale, 0.0);
        let obs_scaled = PartialObservations::observe(layout, &scaled).unwrap();
        let q2 = build_q(&instance.op, &obs_scaled).unwrap();
        let r2 = build_r(&instance.op, &obs_scaled).unwrap();
        prop_assert!(
            (q2.matrix.clone() - q0.matrix.clone() * C64::new(scale, 0.0)).norm()
                <= 1e-10 * q0.matrix.norm() * scale
        );
        prop_assert!(
            (r2.matrix.clone() - r0.matrix.clone() * C64::new(scale, 0.0)).norm()
                <= 1e-9 * r0.matrix.norm().max(1e-300) * scale
        );

        let k0 = smallest_singular_vector(&q0, KernelMethod::ExactSvd).unwrap();
        let k2 = smallest_singular_vector(&q2, KernelMethod::ExactSvd).unwrap();
        prop_assert!(collinearity(&k0.vector, &k2.vector) >= 1.0 - 1e-9);
    }

    /// Noise-free kernel membership for both systems.
    #[test]
    fn kernel_membership(seed in any::<u64>()) {
        let instance = random_instance(seed, 5, 6, 2);
        let q = build_q(&instance.op, &instance.obs).unwrap();
        let residual = (&q.matrix * &instance.xi).norm();
        prop_assert!(residual <= 1e-12 * q.matrix.norm() * instance.xi.norm());

        let psi_true = CVector::from_fn(6, |m, _| {
            instance.b[m] / C64::new(instance.b[m].norm(), 0.0)
        });
        let r = build_r(&instance.op, &instance.obs).unwrap();
        let residual = (&r.matrix * &psi_true).norm();
        prop_assert!(residual <= 1e-12 * r.matrix.norm() * psi_true.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// CPLX1 round trip preserves every bit.
    #[test]
    fn cplx1_round_trip(
        rows in 1usize..6,
        cols in 1usize..6,
        raw in prop::collection::vec((any::<f32>(), any::<f32>()), 36),
    ) {
        let matrix = cophase::CMatrix::from_fn(rows, cols, |i, j| {
            let (re, im) = raw[(i * cols + j) % raw.len()];
            C64::new(re as f64, im as f64)
        });
        let mut buf = Vec::new();
        cophase::cplx1::write_matrix(&mut buf, &matrix).unwrap();
        let back = cophase::cplx1::read_matrix(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(matrix, back);
    }
}
