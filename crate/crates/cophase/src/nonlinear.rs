//! Non-convex cost functionals and a limited-memory quasi-Newton minimizer.
//!
//! Five functional kinds cover the spectrum from the classical
//! magnitude-only objective to formulations that exploit the observed phase
//! differences. All of them are `||residual||_2` costs over the real/imag
//! stacking of the unknowns; unit-modulus phase constraints are eliminated
//! by the angle parameterization `psi_m = exp(j theta_m)`, and element-wise
//! magnitudes are smoothed as `sqrt(|.|^2 + eps^2)` to stay differentiable
//! at zeros.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{ForwardOperator, PartialObservations};
use crate::{CVector, Error, RVector, Result, C64};

/// Relative magnitude smoothing; the absolute epsilon is this times the
/// largest observed magnitude.
pub const SMOOTHING_REL: f64 = 1e-12;

/// The implemented cost functional kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `|| |A x| - |b| ||`: no phase information at all.
    MagnitudeOnly,
    /// `|| A x - diag(phi) |b| ||` with all `CM` phases generated from `M`
    /// free angles plus the observed differences.
    FullPhaseConstrained,
    /// `|| A x - B psi ||` with `psi_m = exp(j theta_m)`.
    ReducedPhase,
    /// Phases eliminated through `psi = B_1^{-1} A_1 x`: magnitude block for
    /// the anchor plus consistency blocks for the remaining observations.
    EliminatedPhase,
    /// Four-block magnitude comparison functional (C = 2 only).
    Paulus,
}

impl CostKind {
    /// Whether the unknown vector carries `M` phase angles after the `2N`
    /// real/imaginary parts.
    pub fn has_angles(self) -> bool {
        matches!(
            self,
            CostKind::FullPhaseConstrained | CostKind::ReducedPhase
        )
    }
}

/// A cost functional bound to one problem instance.
#[derive(Debug, Clone)]
pub struct CostFunctional<'a> {
    kind: CostKind,
    op: &'a ForwardOperator,
    obs: &'a PartialObservations,
    epsilon: f64,
    /// Groups skipped by the eliminated-phase stack (zero anchor entries).
    dropped_groups: Vec<usize>,
}

impl<'a> CostFunctional<'a> {
    pub fn new(
        kind: CostKind,
        op: &'a ForwardOperator,
        obs: &'a PartialObservations,
    ) -> Result<Self> {
        let layout = op.layout();
        if kind == CostKind::Paulus && layout.coherent() != 2 {
            return Err(Error::ComparisonNeedsTwoBlocks(layout.coherent()));
        }
        let epsilon = SMOOTHING_REL * obs.magnitudes().max();
        let dropped_groups = if kind == CostKind::EliminatedPhase {
            (0..layout.groups())
                .filter(|&m| obs.b_entry(m, 0) == C64::new(0.0, 0.0))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            kind,
            op,
            obs,
            epsilon,
            dropped_groups,
        })
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn operator(&self) -> &ForwardOperator {
        self.op
    }

    pub fn observations(&self) -> &PartialObservations {
        self.obs
    }

    /// Groups dropped from the eliminated-phase stack because of a zero
    /// anchor magnitude.
    pub fn dropped_groups(&self) -> &[usize] {
        &self.dropped_groups
    }

    /// Number of real optimization variables: `2N`, plus `M` angles for the
    /// phase-carrying kinds.
    pub fn n_variables(&self) -> usize {
        let n = self.op.n_unknowns();
        if self.kind.has_angles() {
            2 * n + self.op.layout().groups()
        } else {
            2 * n
        }
    }

    /// Stack `x` (and angles, for phase-carrying kinds) into one real vector.
    pub fn pack(&self, x: &CVector, angles: Option<&RVector>) -> RVector {
        let n = self.op.n_unknowns();
        let mut v = RVector::zeros(self.n_variables());
        for k in 0..n {
            v[k] = x[k].re;
            v[n + k] = x[k].im;
        }
        if self.kind.has_angles() {
            if let Some(theta) = angles {
                for i in 0..self.op.layout().groups() {
                    v[2 * n + i] = theta[i];
                }
            }
        }
        v
    }

    /// Complex unknowns from a packed vector.
    pub fn unpack_x(&self, v: &RVector) -> CVector {
        let n = self.op.n_unknowns();
        CVector::from_fn(n, |k, _| C64::new(v[k], v[n + k]))
    }

    /// Phase angles from a packed vector, for the kinds that carry them.
    pub fn unpack_angles(&self, v: &RVector) -> Option<RVector> {
        if !self.kind.has_angles() {
            return None;
        }
        let n = self.op.n_unknowns();
        let m = self.op.layout().groups();
        Some(RVector::from_fn(m, |i, _| v[2 * n + i]))
    }

    pub fn value(&self, v: &RVector) -> f64 {
        self.evaluate(v, false).0
    }

    pub fn value_and_gradient(&self, v: &RVector) -> (f64, RVector) {
        let (f, g) = self.evaluate(v, true);
        (f, g.expect("gradient requested"))
    }

    fn evaluate(&self, v: &RVector, want_gradient: bool) -> (f64, Option<RVector>) {
        let x = self.unpack_x(v);
        let n = self.op.n_unknowns();
        let layout = self.op.layout();
        let m_groups = layout.groups();
        let c_blocks = layout.coherent();

        // Accumulate the squared cost and its gradient; the norm gradient is
        // recovered at the end as grad(f^2) / (2 f).
        let mut f_sq = 0.0;
        let mut gx = CVector::zeros(n);
        let mut gtheta = RVector::zeros(if self.kind.has_angles() { m_groups } else { 0 });

        match self.kind {
            CostKind::MagnitudeOnly => {
                let w = self.op.matrix() * &x;
                let mags = self.obs.magnitudes();
                let mut d = CVector::zeros(w.len());
                for i in 0..w.len() {
                    let s = (w[i].norm_sqr() + self.epsilon * self.epsilon).sqrt();
                    let r = s - mags[i];
                    f_sq += r * r;
                    if want_gradient && s > 0.0 {
                        d[i] = w[i] * (r / s);
                    }
                }
                if want_gradient {
                    gx += self.op.matrix().ad_mul(&d) * C64::new(2.0, 0.0);
                }
            }

            CostKind::ReducedPhase => {
                let theta = self.unpack_angles(v).expect("reduced phase carries angles");
                let mut r = self.op.matrix() * &x;
                for m in 0..m_groups {
                    let psi = C64::from_polar(1.0, theta[m]);
                    for c in 0..c_blocks {
                        r[m + c * m_groups] -= self.obs.b_entry(m, c) * psi;
                    }
                }
                f_sq += r.norm_squared();
                if want_gradient {
                    gx += self.op.matrix().ad_mul(&r) * C64::new(2.0, 0.0);
                    for m in 0..m_groups {
                        let mut h = C64::new(0.0, 0.0);
                        for c in 0..c_blocks {
                            h += self.obs.b_entry(m, c) * r[m + c * m_groups].conj();
                        }
                        gtheta[m] = 2.0 * (C64::from_polar(1.0, theta[m]) * h).im;
                    }
                }
            }

            CostKind::FullPhaseConstrained => {
                let theta = self.unpack_angles(v).expect("full phase carries angles");
                let mags = self.obs.magnitudes();
                let diffs = self.obs.phase_diffs();
                let mut r = self.op.matrix() * &x;
                let mut phases = vec![0.0f64; layout.total()];
                for m in 0..m_groups {
                    phases[m] = theta[m];
                    for c in 1..c_blocks {
                        phases[m + c * m_groups] = theta[m] + diffs[(m, c - 1)];
                    }
                }
                for i in 0..layout.total() {
                    r[i] -= C64::from_polar(mags[i], phases[i]);
                }
                f_sq += r.norm_squared();
                if want_gradient {
                    gx += self.op.matrix().ad_mul(&r) * C64::new(2.0, 0.0);
                    for m in 0..m_groups {
                        let mut acc = 0.0;
                        for c in 0..c_blocks {
                            let i = m + c * m_groups;
                            acc += (C64::from_polar(mags[i], phases[i]) * r[i].conj()).im;
                        }
                        gtheta[m] = 2.0 * acc;
                    }
                }
            }

            CostKind::EliminatedPhase => {
                let anchor = self.op.block(0);
                let w1 = anchor * &x;
                let mags = self.obs.magnitudes();
                // magnitude block on the anchor
                let mut d1 = CVector::zeros(m_groups);
                for m in 0..m_groups {
                    let s = (w1[m].norm_sqr() + self.epsilon * self.epsilon).sqrt();
                    let r = s - mags[m];
                    f_sq += r * r;
                    if want_gradient && s > 0.0 {
                        d1[m] = w1[m] * (r / s);
                    }
                }
                if want_gradient {
                    gx += anchor.ad_mul(&d1) * C64::new(2.0, 0.0);
                }
                // consistency blocks: A_c x - D_c A_1 x with D_c = B_c / B_1
                for c in 1..c_blocks {
                    let block = self.op.block(c);
                    let wc = block * &x;
                    let mut q = CVector::zeros(m_groups);
                    let mut ratios = CVector::zeros(m_groups);
                    for m in 0..m_groups {
                        if self.dropped_groups.contains(&m) {
                            continue;
                        }
                        let ratio = self.obs.b_entry(m, c) / self.obs.b_entry(m, 0);
                        ratios[m] = ratio;
                        q[m] = wc[m] - ratio * w1[m];
                        f_sq += q[m].norm_sqr();
                    }
                    if want_gradient {
                        gx += block.ad_mul(&q) * C64::new(2.0, 0.0);
                        let scaled = CVector::from_fn(m_groups, |m, _| ratios[m].conj() * q[m]);
                        gx -= anchor.ad_mul(&scaled) * C64::new(2.0, 0.0);
                    }
                }
            }

            CostKind::Paulus => {
                let a1 = self.op.block(0);
                let a2 = self.op.block(1);
                let w1 = a1 * &x;
                let w2 = a2 * &x;
                let mags = self.obs.magnitudes();
                let diffs = self.obs.phase_diffs();

                // combined magnitudes |b_1 + b_2| and |b_1 + j b_2|
                // reconstructed from |b| and the phase differences
                let mut targets = vec![[0.0f64; 4]; m_groups];
                for m in 0..m_groups {
                    let m1 = mags[m];
                    let m2 = mags[m + m_groups];
                    let dphi = diffs[(m, 0)];
                    let sum_sq = (m1 * m1 + m2 * m2 + 2.0 * m1 * m2 * dphi.cos()).max(0.0);
                    let quad_sq = (m1 * m1 + m2 * m2 - 2.0 * m1 * m2 * dphi.sin()).max(0.0);
                    targets[m] = [m1, m2, sum_sq.sqrt(), quad_sq.sqrt()];
                }

                let mut d = [
                    CVector::zeros(m_groups),
                    CVector::zeros(m_groups),
                    CVector::zeros(m_groups),
                    CVector::zeros(m_groups),
                ];
                for m in 0..m_groups {
                    let w = [w1[m], w2[m], w1[m] + w2[m], w1[m] + C64::i() * w2[m]];
                    for (block, &wi) in w.iter().enumerate() {
                        let s = (wi.norm_sqr() + self.epsilon * self.epsilon).sqrt();
                        let r = s - targets[m][block];
                        f_sq += r * r;
                        if want_gradient && s > 0.0 {
                            d[block][m] = wi * (r / s);
                        }
                    }
                }
                if want_gradient {
                    let two = C64::new(2.0, 0.0);
                    gx += a1.ad_mul(&d[0]) * two;
                    gx += a2.ad_mul(&d[1]) * two;
                    gx += a1.ad_mul(&d[2]) * two;
                    gx += a2.ad_mul(&d[2]) * two;
                    gx += a1.ad_mul(&d[3]) * two;
                    // (j A_2)^H = -j A_2^H
                    gx -= a2.ad_mul(&d[3]) * (C64::i() * two);
                }
            }
        }

        let f = f_sq.max(0.0).sqrt();
        if !want_gradient {
            return (f, None);
        }

        let mut g = RVector::zeros(self.n_variables());
        if f > 0.0 {
            let inv = 1.0 / (2.0 * f);
            for k in 0..n {
                g[k] = gx[k].re * inv;
                g[n + k] = gx[k].im * inv;
            }
            if self.kind.has_angles() {
                for m in 0..m_groups {
                    g[2 * n + m] = gtheta[m] * inv;
                }
            }
        }
        (f, Some(g))
    }
}

/// Outcome of the spectral initializer.
#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub x0: CVector,
    /// Largest eigenvalue of `A^H diag(|b|^2) A` as estimated by the
    /// iteration.
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

const SPECTRAL_SEED: u64 = 0x0f2e_c7a1_5bd3_9e40;

/// Power iteration for the dominant eigenvector of `A^H diag(|b|^2) A`,
/// scaled to the spectral starting point
/// `x0 = v (|b|^T A v) / ||A v||^2`.
pub fn spectral_initialization(op: &ForwardOperator, obs: &PartialObservations) -> SpectralInit {
    let n = op.n_unknowns();
    let a = op.matrix();
    let mags = obs.magnitudes();
    let weights = RVector::from_fn(mags.len(), |i, _| mags[i] * mags[i]);

    let mut rng = ChaCha8Rng::seed_from_u64(SPECTRAL_SEED ^ n as u64);
    let mut v = CVector::from_fn(n, |_, _| {
        C64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    let norm = v.norm();
    if norm > 0.0 {
        v.unscale_mut(norm);
    }

    let cap = 10 * n.max(1);
    let mut eigenvalue = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..cap {
        iterations = iter + 1;
        let mut img = a * &v;
        for i in 0..img.len() {
            img[i] *= weights[i];
        }
        let y = a.ad_mul(&img);
        let lambda = v.dotc(&y).re;
        let y_norm = y.norm();
        if y_norm == 0.0 {
            break;
        }
        v = y.unscale(y_norm);
        if iter > 0 && (lambda - eigenvalue).abs() <= 1e-10 * lambda.abs().max(f64::MIN_POSITIVE) {
            eigenvalue = lambda;
            converged = true;
            break;
        }
        eigenvalue = lambda;
    }

    // x0 = v * (|b|^T A v) / ||A v||^2
    let av = a * &v;
    let denom = av.norm_squared();
    let mut numer = C64::new(0.0, 0.0);
    for i in 0..av.len() {
        numer += av[i] * mags[i];
    }
    let x0 = if denom > 0.0 {
        &v * (numer / C64::new(denom, 0.0))
    } else {
        v.clone()
    };

    SpectralInit {
        x0,
        eigenvalue,
        iterations,
        converged,
    }
}

/// Limited-memory quasi-Newton configuration. The tolerances are relative
/// to the observation norm `|| |b| ||_2` of the functional being minimized.
#[derive(Debug, Clone)]
pub struct MinimizerConfig {
    pub max_iterations: usize,
    /// Stop when `||grad|| <= gradient_tolerance * ||b||`.
    pub gradient_tolerance: f64,
    /// Quasi-Newton memory length.
    pub history_size: usize,
    /// Stop when the cost drops below `stop_cost * ||b||`.
    pub stop_cost: f64,
    /// Armijo constant of the strong Wolfe line search.
    pub wolfe_c1: f64,
    /// Curvature constant of the strong Wolfe line search.
    pub wolfe_c2: f64,
    /// Evaluation budget per line search.
    pub max_line_search: usize,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            gradient_tolerance: 1e-10,
            history_size: 10,
            stop_cost: 1e-13,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search: 40,
        }
    }
}

/// Why the minimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeStatus {
    GradientConverged,
    CostConverged,
    /// The line search could not make progress; the best iterate is
    /// returned.
    LineSearchStalled,
    IterationLimit,
}

/// Minimization outcome; `point` is the best iterate seen.
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub point: RVector,
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: MinimizeStatus,
}

/// Minimize a cost functional with L-BFGS (two-loop recursion) and a strong
/// Wolfe line search over the real/imaginary stacking of the unknowns.
/// Deterministic given the starting point; line-search failures return the
/// best iterate with a status flag instead of an error.
pub fn minimize(
    functional: &CostFunctional<'_>,
    x0: &RVector,
    config: &MinimizerConfig,
) -> MinimizeReport {
    let b_scale = functional
        .observations()
        .magnitudes()
        .norm()
        .max(f64::MIN_POSITIVE);
    let grad_tol = config.gradient_tolerance * b_scale;
    let cost_tol = config.stop_cost * b_scale;

    let mut x = x0.clone();
    let (mut f, mut g) = functional.value_and_gradient(&x);
    let mut best_x = x.clone();
    let mut best_f = f;

    let mut history: std::collections::VecDeque<(RVector, RVector, f64)> =
        std::collections::VecDeque::with_capacity(config.history_size + 1);

    let mut status = MinimizeStatus::IterationLimit;
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        if f <= cost_tol {
            status = MinimizeStatus::CostConverged;
            break;
        }
        if g.norm() <= grad_tol {
            status = MinimizeStatus::GradientConverged;
            break;
        }
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * s.dot(&q);
            q.axpy(-alpha, y, 1.0);
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = s.dot(y) / y.dot(y).max(f64::MIN_POSITIVE);
            q *= gamma.max(1e-12);
        }
        for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * y.dot(&q);
            q.axpy(alpha - beta, s, 1.0);
        }
        let mut direction = -q;

        let mut descent = direction.dot(&g);
        if descent >= 0.0 {
            // quasi-Newton model broke down; restart from steepest descent
            direction = -g.clone();
            descent = direction.dot(&g);
            history.clear();
        }

        match wolfe_line_search(functional, &x, f, &direction, descent, config) {
            Some((f_new, x_new, g_new)) => {
                let s = &x_new - &x;
                let y = &g_new - &g;
                let sy = s.dot(&y);
                if sy > 1e-10 * s.norm() * y.norm() {
                    if history.len() == config.history_size {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x = x_new;
                f = f_new;
                g = g_new;
                if f < best_f {
                    best_f = f;
                    best_x = x.clone();
                }
            }
            None => {
                status = MinimizeStatus::LineSearchStalled;
                break;
            }
        }
    }

    if f <= cost_tol {
        status = MinimizeStatus::CostConverged;
    }

    let (final_f, final_g, final_x) = if best_f < f {
        let (bf, bg) = functional.value_and_gradient(&best_x);
        (bf, bg, best_x)
    } else {
        (f, g, x)
    };

    MinimizeReport {
        point: final_x,
        cost: final_f,
        gradient_norm: final_g.norm(),
        iterations,
        status,
    }
}

/// Strong Wolfe line search (bracket and zoom, Nocedal-Wright style).
/// Returns `(f, x, grad)` at the accepted step or `None` when no acceptable
/// step exists within the evaluation budget.
fn wolfe_line_search(
    functional: &CostFunctional<'_>,
    x: &RVector,
    f0: f64,
    direction: &RVector,
    descent: f64,
    config: &MinimizerConfig,
) -> Option<(f64, RVector, RVector)> {
    let c1 = config.wolfe_c1;
    let c2 = config.wolfe_c2;

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = descent;
    let mut alpha = 1.0;

    for i in 0..config.max_line_search {
        let xa = x + direction * alpha;
        let (fa, ga) = functional.value_and_gradient(&xa);
        let da = ga.dot(direction);
        if fa > f0 + c1 * alpha * descent || (i > 0 && fa >= f_prev) {
            return zoom(
                functional,
                x,
                f0,
                descent,
                direction,
                Bracket {
                    lo: alpha_prev,
                    f_lo: f_prev,
                    d_lo: d_prev,
                    hi: alpha,
                    f_hi: fa,
                },
                c1,
                c2,
                config.max_line_search,
            );
        }
        if da.abs() <= -c2 * descent {
            return Some((fa, xa, ga));
        }
        if da >= 0.0 {
            return zoom(
                functional,
                x,
                f0,
                descent,
                direction,
                Bracket {
                    lo: alpha,
                    f_lo: fa,
                    d_lo: da,
                    hi: alpha_prev,
                    f_hi: f_prev,
                },
                c1,
                c2,
                config.max_line_search,
            );
        }
        alpha_prev = alpha;
        f_prev = fa;
        d_prev = da;
        alpha *= 2.0;
        if alpha > 1e12 {
            return None;
        }
    }
    None
}

struct Bracket {
    lo: f64,
    f_lo: f64,
    d_lo: f64,
    hi: f64,
    f_hi: f64,
}

#[allow(clippy::too_many_arguments)]
fn zoom(
    functional: &CostFunctional<'_>,
    x: &RVector,
    f0: f64,
    descent: f64,
    direction: &RVector,
    mut bracket: Bracket,
    c1: f64,
    c2: f64,
    budget: usize,
) -> Option<(f64, RVector, RVector)> {
    for _ in 0..budget.max(8) {
        // quadratic interpolation with a bisection safeguard
        let span = bracket.hi - bracket.lo;
        let denom = bracket.f_hi - bracket.f_lo - bracket.d_lo * span;
        let mut alpha = if denom.abs() > 1e-300 {
            bracket.lo - 0.5 * bracket.d_lo * span * span / denom
        } else {
            bracket.lo + 0.5 * span
        };
        let lo = bracket.lo.min(bracket.hi);
        let hi = bracket.lo.max(bracket.hi);
        let margin = 0.1 * (hi - lo);
        if !alpha.is_finite() || alpha < lo + margin || alpha > hi - margin {
            alpha = 0.5 * (lo + hi);
        }
        if (hi - lo) * direction.norm() <= 1e-16 * x.norm().max(1.0) {
            return None;
        }

        let xa = x + direction * alpha;
        let (fa, ga) = functional.value_and_gradient(&xa);
        let da = ga.dot(direction);
        if fa > f0 + c1 * alpha * descent || fa >= bracket.f_lo {
            bracket.hi = alpha;
            bracket.f_hi = fa;
        } else {
            if da.abs() <= -c2 * descent {
                return Some((fa, xa, ga));
            }
            if da * (bracket.hi - bracket.lo) >= 0.0 {
                bracket.hi = bracket.lo;
                bracket.f_hi = bracket.f_lo;
            }
            bracket.lo = alpha;
            bracket.f_lo = fa;
            bracket.d_lo = da;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoherenceLayout;
    use crate::CMatrix;
    use rand::Rng;

    fn random_instance(
        seed: u64,
        n: usize,
        m: usize,
        c: usize,
        noise: f64,
    ) -> (ForwardOperator, CVector, PartialObservations) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = CoherenceLayout::new(m, c).unwrap();
        let a = CMatrix::from_fn(layout.total(), n, |_, _| {
            C64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        });
        let op = ForwardOperator::new(a, layout).unwrap();
        let xi = CVector::from_fn(n, |_, _| {
            C64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        });
        let b = op.apply(&xi).unwrap();
        let b = crate::model::add_noise(
            &b,
            &crate::model::NoiseSpec::new(noise, seed ^ 0xabc).unwrap(),
        )
        .unwrap();
        let obs = PartialObservations::observe(layout, &b).unwrap();
        (op, xi, obs)
    }

    fn true_angles(op: &ForwardOperator, xi: &CVector) -> RVector {
        let b = op.apply(xi).unwrap();
        RVector::from_fn(op.layout().groups(), |m, _| b[m].arg())
    }

    fn finite_difference_gradient(
        functional: &CostFunctional<'_>,
        v: &RVector,
        step: f64,
    ) -> RVector {
        let mut g = RVector::zeros(v.len());
        for k in 0..v.len() {
            let mut plus = v.clone();
            plus[k] += step;
            let mut minus = v.clone();
            minus[k] -= step;
            g[k] = (functional.value(&plus) - functional.value(&minus)) / (2.0 * step);
        }
        g
    }

    fn check_gradient(kind: CostKind, seed: u64) {
        let (op, _xi, obs) = random_instance(seed, 4, 5, 2, 0.0);
        let functional = CostFunctional::new(kind, &op, &obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
        for _ in 0..10 {
            let v = RVector::from_fn(functional.n_variables(), |_, _| {
                rng.random::<f64>() * 2.0 - 1.0
            });
            let (_, analytic) = functional.value_and_gradient(&v);
            let numeric = finite_difference_gradient(&functional, &v, 1e-7);
            let denom = analytic.norm().max(1e-8);
            let rel = (&analytic - &numeric).norm() / denom;
            assert!(rel < 1e-6, "{kind:?}: gradient mismatch {rel:e}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradient(CostKind::MagnitudeOnly, 1);
        check_gradient(CostKind::ReducedPhase, 2);
        check_gradient(CostKind::FullPhaseConstrained, 3);
        check_gradient(CostKind::EliminatedPhase, 4);
        check_gradient(CostKind::Paulus, 5);
    }

    #[test]
    fn true_solution_is_global_minimum() {
        let (op, xi, obs) = random_instance(11, 5, 7, 2, 0.0);
        let b_norm = obs.magnitudes().norm();
        let theta = true_angles(&op, &xi);
        for kind in [
            CostKind::MagnitudeOnly,
            CostKind::ReducedPhase,
            CostKind::FullPhaseConstrained,
            CostKind::EliminatedPhase,
            CostKind::Paulus,
        ] {
            let functional = CostFunctional::new(kind, &op, &obs).unwrap();
            let v = functional.pack(&xi, Some(&theta));
            let value = functional.value(&v);
            assert!(value <= 1e-10 * b_norm, "{kind:?}: value {value:e}");
        }
    }

    #[test]
    fn magnitude_only_of_zero_is_b_norm() {
        let (op, _xi, obs) = random_instance(12, 5, 7, 2, 0.0);
        let functional = CostFunctional::new(CostKind::MagnitudeOnly, &op, &obs).unwrap();
        let v = functional.pack(&CVector::zeros(5), None);
        let value = functional.value(&v);
        assert!((value - obs.magnitudes().norm()).abs() < 1e-10);
    }

    #[test]
    fn full_phase_equals_reduced_phase_pointwise() {
        let (op, _xi, obs) = random_instance(13, 4, 6, 3, 1e-3);
        let reduced = CostFunctional::new(CostKind::ReducedPhase, &op, &obs).unwrap();
        let full = CostFunctional::new(CostKind::FullPhaseConstrained, &op, &obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let v = RVector::from_fn(reduced.n_variables(), |_, _| {
                rng.random::<f64>() * 4.0 - 2.0
            });
            let a = reduced.value(&v);
            let b = full.value(&v);
            assert!((a - b).abs() <= 1e-14 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn reduced_phase_is_gauge_invariant() {
        let (op, xi, obs) = random_instance(15, 4, 6, 2, 0.0);
        let functional = CostFunctional::new(CostKind::ReducedPhase, &op, &obs).unwrap();
        let theta = true_angles(&op, &xi);
        let shift = 0.83;
        let shifted_theta = RVector::from_fn(theta.len(), |m, _| theta[m] + shift);
        let rotated_x = &xi * C64::from_polar(1.0, shift);
        let v0 = functional.pack(&xi, Some(&theta));
        let v1 = functional.pack(&rotated_x, Some(&shifted_theta));
        let a = functional.value(&v0);
        let b = functional.value(&v1);
        assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn paulus_requires_two_blocks() {
        let (op, _xi, obs) = random_instance(16, 4, 4, 3, 0.0);
        assert!(matches!(
            CostFunctional::new(CostKind::Paulus, &op, &obs),
            Err(Error::ComparisonNeedsTwoBlocks(3))
        ));
    }

    #[test]
    fn spectral_init_diagonal_operator_picks_peak() {
        let layout = CoherenceLayout::new(4, 1).unwrap();
        let op = ForwardOperator::new(CMatrix::identity(4, 4), layout).unwrap();
        let b = CVector::from_vec(vec![
            C64::new(0.3, 0.0),
            C64::new(2.0, 0.0),
            C64::new(0.7, 0.0),
            C64::new(0.2, 0.0),
        ]);
        let obs = PartialObservations::observe(layout, &b).unwrap();
        let init = spectral_initialization(&op, &obs);
        assert!(init.converged);
        // dominant direction e_1 with coefficient |b_1|
        let e1 = CVector::from_vec(vec![
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        let overlap = init.x0.dotc(&e1).norm() / init.x0.norm();
        assert!(overlap > 1.0 - 1e-9, "overlap {overlap}");
        assert!((init.x0.norm() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn spectral_eigenvalue_matches_dense_oracle() {
        let (op, _xi, obs) = random_instance(21, 6, 9, 2, 0.0);
        let init = spectral_initialization(&op, &obs);
        // dense oracle: power iteration is checked against explicit
        // H = A^H diag(|b|^2) A largest eigenvalue via many matvecs from an
        // independent start
        let a = op.matrix();
        let mags = obs.magnitudes();
        let h = {
            let mut weighted = a.clone();
            for i in 0..weighted.nrows() {
                let w = mags[i] * mags[i];
                for k in 0..weighted.ncols() {
                    weighted[(i, k)] *= w;
                }
            }
            a.ad_mul(&weighted)
        };
        let eig = nalgebra::SymmetricEigen::new(h);
        let lambda_max = eig.eigenvalues.max();
        assert!(
            (init.eigenvalue - lambda_max).abs() <= 1e-8 * lambda_max,
            "power {} vs dense {}",
            init.eigenvalue,
            lambda_max
        );
    }

    #[test]
    fn spectral_init_correlates_with_truth() {
        let mut correlations = Vec::new();
        for seed in 30..60 {
            let (op, xi, obs) = random_instance(seed, 10, 20, 2, 0.0);
            let init = spectral_initialization(&op, &obs);
            let c = init.x0.dotc(&xi).norm() / (init.x0.norm() * xi.norm());
            correlations.push(c);
        }
        let mean = correlations.iter().sum::<f64>() / correlations.len() as f64;
        assert!(mean > 0.3, "mean correlation {mean}");
    }

    #[test]
    fn minimize_consistent_instance_reaches_truth() {
        let (op, xi, obs) = random_instance(40, 6, 12, 2, 0.0);
        let functional = CostFunctional::new(CostKind::ReducedPhase, &op, &obs).unwrap();
        let theta = true_angles(&op, &xi);
        // start from a perturbed point; the basin still contains the truth
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x_start = &xi
            + CVector::from_fn(6, |_, _| {
                C64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            }) * C64::new(0.05, 0.0);
        let v0 = functional.pack(&x_start, Some(&theta));
        let report = minimize(&functional, &v0, &MinimizerConfig::default());
        let b_norm = obs.magnitudes().norm();
        assert!(
            report.cost <= 1e-9 * b_norm,
            "cost {:e} status {:?}",
            report.cost,
            report.status
        );
        let x = functional.unpack_x(&report.point);
        let rd = crate::model::relative_deviation(&op, &x, &xi).unwrap();
        assert!(rd <= 1e-7, "rd {rd:e}");
    }

    #[test]
    fn minimize_eliminated_phase_from_spectral_init() {
        let (op, xi, obs) = random_instance(42, 8, 16, 2, 1e-6);
        let functional = CostFunctional::new(CostKind::EliminatedPhase, &op, &obs).unwrap();
        let init = spectral_initialization(&op, &obs);
        let v0 = functional.pack(&init.x0, None);
        let report = minimize(&functional, &v0, &MinimizerConfig::default());
        let x = functional.unpack_x(&report.point);
        let rd = crate::model::relative_deviation(&op, &x, &xi).unwrap();
        assert!(rd <= 3e-6, "rd {rd:e} status {:?}", report.status);
    }

    #[test]
    fn minimize_is_deterministic() {
        let (op, _xi, obs) = random_instance(43, 5, 10, 2, 1e-4);
        let functional = CostFunctional::new(CostKind::MagnitudeOnly, &op, &obs).unwrap();
        let init = spectral_initialization(&op, &obs);
        let v0 = functional.pack(&init.x0, None);
        let a = minimize(&functional, &v0, &MinimizerConfig::default());
        let b = minimize(&functional, &v0, &MinimizerConfig::default());
        assert_eq!(a.point, b.point);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.iterations, b.iterations);
    }
}
