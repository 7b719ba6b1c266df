//! Problem data model: forward operators, coherence layouts, observation
//! synthesis, noise injection and evaluation metrics.
//!
//! Observations are indexed the way the probe captures them: a layout with
//! `M` groups and `C` coherent observations per group places group `m`
//! (0-based here) at rows `{m, m+M, ..., m+(C-1)M}` of the stacked
//! observation vector. Block `c` of the forward operator is the row slice
//! `[cM, (c+1)M)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CMatrix, CVector, Error, RVector, Result, C64};

/// Relative magnitude below which an observation counts as zero
/// (phase differences to it are undefined).
pub const ZERO_MAGNITUDE_REL: f64 = 1e-14;

/// Block structure of partially coherent observations: `M` groups of `C`
/// mutually coherent samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherenceLayout {
    groups: usize,
    coherent: usize,
}

impl CoherenceLayout {
    pub fn new(groups: usize, coherent: usize) -> Result<Self> {
        if groups < 1 || coherent < 1 {
            return Err(Error::InvalidLayout {
                m: groups,
                c: coherent,
            });
        }
        Ok(Self { groups, coherent })
    }

    /// Number of coherent groups `M`.
    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Coherent observations per group `C`.
    pub fn coherent(&self) -> usize {
        self.coherent
    }

    /// Total observation count `C * M`.
    pub fn total(&self) -> usize {
        self.groups * self.coherent
    }

    /// Observation indices of group `m` (0-based): `m, m+M, ..., m+(C-1)M`.
    pub fn group_indices(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        let step = self.groups;
        (0..self.coherent).map(move |c| m + c * step)
    }

    /// Group and block of a raw observation index.
    pub fn locate(&self, index: usize) -> (usize, usize) {
        (index % self.groups, index / self.groups)
    }
}

/// Dense complex forward operator `A` with `C*M` rows and `N` columns.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    matrix: CMatrix,
    layout: CoherenceLayout,
}

impl ForwardOperator {
    pub fn new(matrix: CMatrix, layout: CoherenceLayout) -> Result<Self> {
        if matrix.nrows() != layout.total() {
            return Err(Error::LayoutOperatorMismatch {
                rows: matrix.nrows(),
                expected: layout.total(),
            });
        }
        Ok(Self { matrix, layout })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> CoherenceLayout {
        self.layout
    }

    /// Number of unknowns `N`.
    pub fn n_unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Row block `A_c` (0-based block index), an `M x N` view.
    pub fn block(&self, c: usize) -> nalgebra::DMatrixView<'_, C64> {
        let m = self.layout.groups();
        self.matrix.view((c * m, 0), (m, self.matrix.ncols()))
    }

    /// Forward map `A * x`.
    pub fn apply(&self, x: &CVector) -> Result<CVector> {
        if x.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch {
                what: "forward_apply input",
                expected: self.n_unknowns(),
                actual: x.len(),
            });
        }
        Ok(&self.matrix * x)
    }
}

/// Ground truth pair: coefficients `xi` and the exact observations `A * xi`.
#[derive(Debug, Clone)]
pub struct TrueSolution {
    pub xi: CVector,
    pub b_true: CVector,
}

impl TrueSolution {
    pub fn synthesize(op: &ForwardOperator, xi: CVector) -> Result<Self> {
        let b_true = op.apply(&xi)?;
        Ok(Self { xi, b_true })
    }
}

/// Magnitudes and intra-group phase differences extracted from a complex
/// observation vector, together with the diagonal observation matrices
/// `B_1 ... B_C`.
///
/// `B_1` carries plain magnitudes; `B_c` for `c >= 2` carries
/// `|b_c| * exp(j dphi)` with the phase difference to the anchor block.
/// Entries whose phase difference is undefined (anchor or entry below the
/// zero threshold) store a plain zero.
#[derive(Debug, Clone)]
pub struct PartialObservations {
    layout: CoherenceLayout,
    magnitudes: RVector,
    phase_diffs: DMatrix<f64>,
    /// Column `c` holds the diagonal of `B_{c+1}`.
    b_diag: CMatrix,
    zero_threshold: f64,
}

impl PartialObservations {
    /// Extract partial observations from a complex vector of length `C*M`.
    pub fn observe(layout: CoherenceLayout, b: &CVector) -> Result<Self> {
        if b.len() != layout.total() {
            return Err(Error::DimensionMismatch {
                what: "observation vector",
                expected: layout.total(),
                actual: b.len(),
            });
        }
        let m_groups = layout.groups();
        let c_blocks = layout.coherent();

        let magnitudes = RVector::from_iterator(b.len(), b.iter().map(|z| z.norm()));
        let zero_threshold = ZERO_MAGNITUDE_REL * magnitudes.max();

        let mut phase_diffs = DMatrix::<f64>::zeros(m_groups, c_blocks.saturating_sub(1));
        let mut b_diag = CMatrix::zeros(m_groups, c_blocks);

        for m in 0..m_groups {
            let anchor_mag = magnitudes[m];
            let anchor_ok = anchor_mag > zero_threshold;
            b_diag[(m, 0)] = if anchor_ok {
                C64::new(anchor_mag, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            for c in 1..c_blocks {
                let idx = m + c * m_groups;
                let mag = magnitudes[idx];
                if anchor_ok && mag > zero_threshold {
                    let dphi = wrap_phase((b[idx] * b[m].conj()).arg());
                    phase_diffs[(m, c - 1)] = dphi;
                    b_diag[(m, c)] = C64::from_polar(mag, dphi);
                }
                // otherwise: plain zero entry, zero phase difference
            }
        }

        Ok(Self {
            layout,
            magnitudes,
            phase_diffs,
            b_diag,
            zero_threshold,
        })
    }

    pub fn layout(&self) -> CoherenceLayout {
        self.layout
    }

    /// Entry-wise magnitudes `|b|`, length `C*M`.
    pub fn magnitudes(&self) -> &RVector {
        &self.magnitudes
    }

    /// Observed phase differences, `M x (C-1)`; column `c-2` pairs block `c`
    /// with the anchor block.
    pub fn phase_diffs(&self) -> &DMatrix<f64> {
        &self.phase_diffs
    }

    /// Diagonal of `B_{c+1}` (0-based block index).
    pub fn b_block_diag(&self, c: usize) -> CVector {
        self.b_diag.column(c).into_owned()
    }

    /// Diagonal entry `[B_{c+1}]_{mm}`.
    pub fn b_entry(&self, m: usize, c: usize) -> C64 {
        self.b_diag[(m, c)]
    }

    /// Magnitude threshold below which entries were treated as zero.
    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    /// The stacked `(C*M) x M` observation matrix `B = [B_1; ...; B_C]`.
    pub fn b_stacked(&self) -> CMatrix {
        let m_groups = self.layout.groups();
        let mut stacked = CMatrix::zeros(self.layout.total(), m_groups);
        for c in 0..self.layout.coherent() {
            for m in 0..m_groups {
                stacked[(m + c * m_groups, m)] = self.b_diag[(m, c)];
            }
        }
        stacked
    }

    /// `B * psi` without materializing the stacked matrix.
    pub fn apply_b(&self, psi: &CVector) -> Result<CVector> {
        let m_groups = self.layout.groups();
        if psi.len() != m_groups {
            return Err(Error::DimensionMismatch {
                what: "phase vector",
                expected: m_groups,
                actual: psi.len(),
            });
        }
        let mut out = CVector::zeros(self.layout.total());
        for c in 0..self.layout.coherent() {
            for m in 0..m_groups {
                out[m + c * m_groups] = self.b_diag[(m, c)] * psi[m];
            }
        }
        Ok(out)
    }

    /// Number of groups whose `B` column is entirely zero; `rk B` is
    /// `M` minus this count.
    pub fn zero_groups(&self) -> usize {
        (0..self.layout.groups())
            .filter(|&m| {
                self.layout
                    .group_indices(m)
                    .all(|i| self.magnitudes[i] <= self.zero_threshold)
            })
            .count()
    }
}

/// Wrap an angle to `(-pi, pi]`.
fn wrap_phase(angle: f64) -> f64 {
    if angle <= -std::f64::consts::PI {
        angle + 2.0 * std::f64::consts::PI
    } else {
        angle
    }
}

/// Reduced phase unknowns `psi` (one entry per coherent group, anchored on
/// block 1).
#[derive(Debug, Clone)]
pub struct PhaseVector {
    pub values: CVector,
    /// Group indices whose phase could not be determined (set to 1 by
    /// convention).
    pub undetermined: Vec<usize>,
}

impl PhaseVector {
    pub fn new(values: CVector) -> Self {
        Self {
            values,
            undetermined: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// True when every entry has magnitude within `tol` of one.
    pub fn is_unit(&self, tol: f64) -> bool {
        self.values.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }
}

/// Recover a phase difference from four magnitude observations
/// `|b_k|, |b_m|, |b_k + b_m|, |b_k + j b_m|`.
///
/// The sum combination exposes `2 Re(b_k conj(b_m))`, the quadrature
/// combination `2 Im(b_k conj(b_m))`; the four-quadrant arctangent of the
/// pair is `arg(b_k) - arg(b_m)`.
pub fn phase_diff_from_magnitudes(m_k: f64, m_m: f64, m_sum: f64, m_quad: f64) -> Result<f64> {
    if m_k == 0.0 && m_m == 0.0 {
        return Err(Error::PhaseDifferenceUndefined);
    }
    let cos_part = m_sum * m_sum - m_k * m_k - m_m * m_m;
    let sin_part = m_quad * m_quad - m_k * m_k - m_m * m_m;
    Ok(wrap_phase(f64::atan2(sin_part, cos_part)))
}

/// Target noise-to-signal ratio and the seed of the draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if ratio < 0.0 {
            return Err(Error::NegativeNoise(ratio));
        }
        Ok(Self { ratio, seed })
    }
}

/// Contaminate `b` with complex Gaussian noise rescaled so that
/// `||b' - b|| / ||b||` equals the requested ratio exactly.
pub fn add_noise(b: &CVector, spec: &NoiseSpec) -> Result<CVector> {
    if spec.ratio < 0.0 {
        return Err(Error::NegativeNoise(spec.ratio));
    }
    if spec.ratio == 0.0 || b.is_empty() {
        return Ok(b.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut delta = CVector::from_iterator(
        b.len(),
        (0..b.len()).map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        }),
    );
    let delta_norm = delta.norm();
    if delta_norm == 0.0 {
        return Ok(b.clone());
    }
    delta *= C64::new(spec.ratio * b.norm() / delta_norm, 0.0);
    Ok(b + delta)
}

/// `||b' - b|| / ||b||`.
pub fn noise_to_signal(b_prime: &CVector, b: &CVector) -> Result<f64> {
    if b_prime.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "noise_to_signal input",
            expected: b.len(),
            actual: b_prime.len(),
        });
    }
    let denom = b.norm();
    if denom == 0.0 {
        return Err(Error::ZeroNorm {
            what: "reference observation vector",
        });
    }
    Ok((b_prime - b).norm() / denom)
}

/// Relative deviation `||A x - A xi|| / ||A xi||` after optimal
/// complex-scalar alignment of `x`.
///
/// All phaseless formulations leave a global phase (and the kernel solvers
/// an overall scale) undetermined, so `x` is first aligned with the
/// least-squares scalar `alpha = <A x, A xi> / ||A x||^2`. A zero `x`
/// yields 1.
pub fn relative_deviation(op: &ForwardOperator, x: &CVector, xi: &CVector) -> Result<f64> {
    let image_x = op.apply(x)?;
    let image_xi = op.apply(xi)?;
    let reference = image_xi.norm();
    if reference == 0.0 {
        return Err(Error::ZeroNorm {
            what: "reference image A*xi",
        });
    }
    let norm_sq = image_x.norm_squared();
    if norm_sq == 0.0 {
        return Ok(1.0);
    }
    let alpha = image_x.dotc(&image_xi) / C64::new(norm_sq, 0.0);
    Ok((image_x * alpha - image_xi).norm() / reference)
}

/// Success criterion: relative deviation strictly below three times the
/// noise-to-signal ratio. Only meaningful for `n > 0`.
pub fn success(rd: f64, n: f64) -> bool {
    rd < 3.0 * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_complex_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
        CVector::from_iterator(
            len,
            (0..len).map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))),
        )
    }

    fn random_complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        })
    }

    #[test]
    fn forward_apply_identity_returns_input() {
        let layout = CoherenceLayout::new(3, 1).unwrap();
        let op = ForwardOperator::new(CMatrix::identity(3, 3), layout).unwrap();
        let x = CVector::from_vec(vec![
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.25),
            C64::new(0.0, -3.0),
        ]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_apply_ones_column() {
        let layout = CoherenceLayout::new(1, 2).unwrap();
        let op =
            ForwardOperator::new(CMatrix::from_element(2, 1, C64::new(1.0, 0.0)), layout).unwrap();
        let x = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y[0], C64::new(1.0, 0.0));
        assert_eq!(y[1], C64::new(1.0, 0.0));
    }

    #[test]
    fn forward_apply_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = CoherenceLayout::new(3, 2).unwrap();
        let a = random_complex_matrix(&mut rng, 6, 4);
        let x = random_complex_vector(&mut rng, 4);
        let op = ForwardOperator::new(a.clone(), layout).unwrap();
        let y = op.apply(&x).unwrap();

        // independent triple-loop multiply
        let mut expected = [C64::new(0.0, 0.0); 6];
        for (row, e) in expected.iter_mut().enumerate() {
            for col in 0..4 {
                *e += a[(row, col)] * x[col];
            }
        }
        for row in 0..6 {
            assert!((y[row] - expected[row]).norm() <= 1e-14 * expected[row].norm());
        }
    }

    #[test]
    fn forward_apply_rejects_wrong_length() {
        let layout = CoherenceLayout::new(2, 1).unwrap();
        let op = ForwardOperator::new(CMatrix::identity(2, 2), layout).unwrap();
        let err = op.apply(&CVector::zeros(3)).unwrap_err();
        match err {
            Error::DimensionMismatch {
                expected, actual, ..
            } => {
                assert_eq!(expected, 2);
                assert_eq!(actual, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn observe_equal_phases() {
        let layout = CoherenceLayout::new(1, 2).unwrap();
        let b = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        assert_eq!(obs.magnitudes()[0], 1.0);
        assert_eq!(obs.magnitudes()[1], 1.0);
        assert_eq!(obs.phase_diffs()[(0, 0)], 0.0);
        assert_eq!(obs.b_entry(0, 0), C64::new(1.0, 0.0));
        assert_eq!(obs.b_entry(0, 1), C64::new(1.0, 0.0));
    }

    #[test]
    fn observe_quadrature_pair() {
        let layout = CoherenceLayout::new(1, 2).unwrap();
        let b = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        assert!((obs.phase_diffs()[(0, 0)] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let expected = C64::from_polar(1.0, std::f64::consts::FRAC_PI_2);
        assert!((obs.b_entry(0, 1) - expected).norm() < 1e-15);
    }

    #[test]
    fn observe_pairs_first_and_second_half() {
        // N=4, M=3, C=2: coherent pairs are (1,4), (2,5), (3,6) in 1-based
        // indexing, i.e. (0,3), (1,4), (2,5) here.
        let layout = CoherenceLayout::new(3, 2).unwrap();
        let groups: Vec<Vec<usize>> = (0..3).map(|m| layout.group_indices(m).collect()).collect();
        assert_eq!(groups, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_complex_vector(&mut rng, 6);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        for m in 0..3 {
            let expected = (b[m + 3] * b[m].conj()).arg();
            assert!((obs.phase_diffs()[(m, 0)] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn observe_zero_anchor_stores_plain_zeros() {
        let layout = CoherenceLayout::new(2, 2).unwrap();
        let b = CVector::from_vec(vec![
            C64::new(0.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(0.0, 3.0),
            C64::new(1.0, 1.0),
        ]);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        // group 0 anchor is zero: B_1 and B_2 entries zero, no phase
        assert_eq!(obs.b_entry(0, 0), C64::new(0.0, 0.0));
        assert_eq!(obs.b_entry(0, 1), C64::new(0.0, 0.0));
        assert_eq!(obs.phase_diffs()[(0, 0)], 0.0);
        // group 1 is ordinary
        assert!(obs.b_entry(1, 1).norm() > 0.0);
        assert_eq!(obs.zero_groups(), 0);

        let b_all_zero_group = CVector::from_vec(vec![
            C64::new(0.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 1.0),
        ]);
        let obs = PartialObservations::observe(layout, &b_all_zero_group).unwrap();
        assert_eq!(obs.zero_groups(), 1);
    }

    #[test]
    fn b_stacked_matches_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let layout = CoherenceLayout::new(3, 3).unwrap();
        let b = random_complex_vector(&mut rng, 9);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        let stacked = obs.b_stacked();
        assert_eq!(stacked.nrows(), 9);
        assert_eq!(stacked.ncols(), 3);
        for m in 0..3 {
            for c in 0..3 {
                assert_eq!(stacked[(m + c * 3, m)], obs.b_entry(m, c));
                // off-column entries are zero
                for other in 0..3 {
                    if other != m {
                        assert_eq!(stacked[(m + c * 3, other)], C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn phase_diff_identical_observations() {
        let dphi = phase_diff_from_magnitudes(1.0, 1.0, 2.0, std::f64::consts::SQRT_2).unwrap();
        assert!(dphi.abs() < 1e-15);
    }

    #[test]
    fn phase_diff_quadrature_pair() {
        let dphi = phase_diff_from_magnitudes(1.0, 1.0, std::f64::consts::SQRT_2, 2.0).unwrap();
        assert!((dphi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn phase_diff_matches_complex_argument_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let b_k = C64::new(
                rng.random::<f64>() * 4.0 - 2.0,
                rng.random::<f64>() * 4.0 - 2.0,
            );
            let b_m = C64::new(
                rng.random::<f64>() * 4.0 - 2.0,
                rng.random::<f64>() * 4.0 - 2.0,
            );
            if b_k.norm() < 1e-3 || b_m.norm() < 1e-3 {
                continue;
            }
            let m_sum = (b_k + b_m).norm();
            let m_quad = (b_k + C64::i() * b_m).norm();
            let recovered =
                phase_diff_from_magnitudes(b_k.norm(), b_m.norm(), m_sum, m_quad).unwrap();
            let expected = (b_k * b_m.conj()).arg();
            let mut diff = (recovered - expected).abs();
            if diff > std::f64::consts::PI {
                diff = 2.0 * std::f64::consts::PI - diff;
            }
            assert!(diff < 1e-12, "recovered {recovered} expected {expected}");
        }
    }

    #[test]
    fn phase_diff_undefined_for_double_zero() {
        let err = phase_diff_from_magnitudes(0.0, 0.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::PhaseDifferenceUndefined));
    }

    #[test]
    fn add_noise_zero_ratio_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_complex_vector(&mut rng, 20);
        let spec = NoiseSpec::new(0.0, 99).unwrap();
        assert_eq!(add_noise(&b, &spec).unwrap(), b);
    }

    #[test]
    fn add_noise_hits_requested_ratio_exactly() {
        // N=1000, M=1500, C=2 scale observation vector with n = 1e-6
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let b = random_complex_vector(&mut rng, 3000);
        let spec = NoiseSpec::new(1e-6, 7).unwrap();
        let b_prime = add_noise(&b, &spec).unwrap();
        let measured = noise_to_signal(&b_prime, &b).unwrap();
        assert!((measured - 1e-6).abs() <= 1e-12 * 1e-6 + 1e-18);
    }

    #[test]
    fn add_noise_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = random_complex_vector(&mut rng, 50);
        let spec = NoiseSpec::new(0.3, 1234).unwrap();
        let first = add_noise(&b, &spec).unwrap();
        let second = add_noise(&b, &spec).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn add_noise_rejects_negative_ratio() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }

    #[test]
    fn noise_to_signal_basics() {
        let b = CVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(0.0, 4.0)]);
        assert_eq!(noise_to_signal(&b, &b).unwrap(), 0.0);
        let doubled = &b * C64::new(2.0, 0.0);
        assert!((noise_to_signal(&doubled, &b).unwrap() - 1.0).abs() < 1e-15);
        let halfway = &b * C64::new(1.5, 0.0);
        assert!((noise_to_signal(&halfway, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(noise_to_signal(&b, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn relative_deviation_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let layout = CoherenceLayout::new(4, 2).unwrap();
        let a = random_complex_matrix(&mut rng, 8, 5);
        let op = ForwardOperator::new(a, layout).unwrap();
        let xi = random_complex_vector(&mut rng, 5);

        assert!(relative_deviation(&op, &xi, &xi).unwrap() < 1e-15);

        let rotated = &xi * C64::from_polar(2.0, 1.234);
        assert!(relative_deviation(&op, &rotated, &xi).unwrap() < 1e-14);

        assert_eq!(
            relative_deviation(&op, &CVector::zeros(5), &xi).unwrap(),
            1.0
        );
    }

    #[test]
    fn relative_deviation_orthogonal_image_is_one() {
        // Build x whose image is A-orthogonal to A*xi by Gram-Schmidt on the
        // images of an invertible square operator.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let layout = CoherenceLayout::new(2, 2).unwrap();
        let a = random_complex_matrix(&mut rng, 4, 4);
        let op = ForwardOperator::new(a.clone(), layout).unwrap();
        let xi = random_complex_vector(&mut rng, 4);
        let x0 = random_complex_vector(&mut rng, 4);

        let v = op.apply(&xi).unwrap();
        let w = op.apply(&x0).unwrap();
        let w_perp = &w - &v * (v.dotc(&w) / C64::new(v.norm_squared(), 0.0));
        // x = A^{-1} w_perp via LU
        let x = a.lu().solve(&w_perp).expect("square solve");
        let rd = relative_deviation(&op, &x, &xi).unwrap();
        assert!((rd - 1.0).abs() < 1e-10, "rd = {rd}");
    }

    #[test]
    fn success_threshold() {
        assert!(success(2e-4, 1e-4));
        // boundary rd = 3n exactly is excluded
        assert!(!success(3.0 * 1e-4, 1e-4));
        assert!(!success(0.75, 0.25));
        assert!(success(0.0, 1e-9));
    }
}
