//! Monte-Carlo experiment harness: scatter/success-rate sweeps over
//! Gaussian random matrices, SVD spectrum dumps, the noise-bound study, and
//! the CSV schemas shared with the CLI.
//!
//! Determinism contract: all randomness flows from explicit seeds; per-trial
//! seeds are derived with a counter-based mix of (master seed, point index,
//! trial index), so trials are order-independent and a run is reproducible
//! byte for byte regardless of thread count.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::linalg::lstsq;
use crate::linear::{self, KernelMethod, Reconstruction};
use crate::model::{
    add_noise, relative_deviation, success, CoherenceLayout, ForwardOperator, NoiseSpec,
    PartialObservations,
};
use crate::nonlinear::{
    minimize, spectral_initialization, CostFunctional, CostKind, MinimizerConfig,
};
use crate::{CMatrix, CVector, Error, RVector, Result, C64};

/// Registered solvers selectable in sweeps and from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverId {
    /// Fully coherent complex least squares (upper baseline).
    Complex,
    /// Q-system kernel extraction by SVD.
    SvdQ,
    /// R-system kernel extraction by SVD, plain reconstruction.
    SvdR,
    /// R-system kernel extraction with the magnitude-one constraint
    /// enforced during reconstruction.
    SvdRUnit,
    /// Magnitude-only L-BFGS baseline.
    MagnitudeOnly,
    /// Full phase-constrained cost functional.
    FullPhase,
    /// Reduced phase cost functional.
    ReducedPhase,
    /// Eliminated-phase cost functional.
    EliminatedPhase,
    /// Four-block comparison functional (C = 2 only).
    Paulus,
}

impl SolverId {
    pub const ALL: [SolverId; 9] = [
        SolverId::Complex,
        SolverId::SvdQ,
        SolverId::SvdR,
        SolverId::SvdRUnit,
        SolverId::MagnitudeOnly,
        SolverId::FullPhase,
        SolverId::ReducedPhase,
        SolverId::EliminatedPhase,
        SolverId::Paulus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverId::Complex => "complex",
            SolverId::SvdQ => "svd-q",
            SolverId::SvdR => "svd-r",
            SolverId::SvdRUnit => "svd-r-unit",
            SolverId::MagnitudeOnly => "magnitude",
            SolverId::FullPhase => "full-phase",
            SolverId::ReducedPhase => "reduced-phase",
            SolverId::EliminatedPhase => "eliminated-phase",
            SolverId::Paulus => "paulus",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    /// Linear formulations solved through a null-space extraction.
    pub fn is_linear(&self) -> bool {
        matches!(self, SolverId::SvdQ | SolverId::SvdR | SolverId::SvdRUnit)
    }
}

/// One point of an experiment grid.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub n_unknowns: usize,
    pub groups: usize,
    pub coherent: usize,
    pub noise: f64,
}

impl GridPoint {
    pub fn ratio(&self) -> f64 {
        (self.coherent * self.groups) as f64 / self.n_unknowns as f64
    }
}

/// Sweep definition: one `N`, one `C`, a list of `M` values, shared noise
/// level, trial count and master seed.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub n_unknowns: usize,
    pub coherent: usize,
    pub m_values: Vec<usize>,
    pub noise: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub solvers: Vec<SolverId>,
}

/// Outcome of a single reconstruction trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub solver: SolverId,
    pub n_unknowns: usize,
    pub groups: usize,
    pub coherent: usize,
    pub noise: f64,
    pub seed: u64,
    pub rd: f64,
    pub success: bool,
    pub gap: f64,
    pub psi_fluctuation: f64,
    /// Wall-clock solve time. Excluded from the CSV by default so outputs
    /// stay byte-deterministic; see [`write_trials_csv`].
    pub seconds: f64,
    /// Failure message when the solver returned an error; such trials count
    /// as failed.
    pub error: Option<String>,
}

/// Aggregated success rate at one grid point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub solver: SolverId,
    pub n_unknowns: usize,
    pub groups: usize,
    pub coherent: usize,
    pub noise: f64,
    pub ratio: f64,
    pub trials: usize,
    pub success_rate: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based per-trial seed: order-independent and collision-resistant
/// across (point, trial) pairs.
pub fn derive_seed(master_seed: u64, point_index: u64, trial_index: u64) -> u64 {
    let mut h = splitmix64(master_seed ^ 0x9049_2e67_7d4c_1b2a);
    h = splitmix64(h ^ point_index.wrapping_mul(0x517c_c1b7_2722_0a95));
    splitmix64(h ^ trial_index)
}

/// Draw a complex Gaussian matrix (i.i.d. standard-normal real and
/// imaginary parts).
pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

/// Draw a complex Gaussian vector.
pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

/// A freshly drawn random instance: operator, truth, clean and noisy
/// observations.
pub struct TrialInstance {
    pub op: ForwardOperator,
    pub xi: CVector,
    pub b_clean: CVector,
    pub b_noisy: CVector,
    pub obs: PartialObservations,
}

/// Draw the Gaussian instance for one trial. The same seed reproduces the
/// same instance, independently of which solver later consumes it.
pub fn draw_instance(point: &GridPoint, seed: u64) -> Result<TrialInstance> {
    let layout = CoherenceLayout::new(point.groups, point.coherent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, layout.total(), point.n_unknowns);
    let op = ForwardOperator::new(a, layout)?;
    let xi = gaussian_vector(&mut rng, point.n_unknowns);
    let b_clean = op.apply(&xi)?;
    let noise_spec = NoiseSpec::new(point.noise, splitmix64(seed ^ 0x6e01_5e5a_0bad_c0de))?;
    let b_noisy = add_noise(&b_clean, &noise_spec)?;
    let obs = PartialObservations::observe(layout, &b_noisy)?;
    Ok(TrialInstance {
        op,
        xi,
        b_clean,
        b_noisy,
        obs,
    })
}

/// Run one solver on one freshly drawn instance.
pub fn run_trial(point: &GridPoint, solver: SolverId, seed: u64) -> TrialRecord {
    let mut record = TrialRecord {
        solver,
        n_unknowns: point.n_unknowns,
        groups: point.groups,
        coherent: point.coherent,
        noise: point.noise,
        seed,
        rd: f64::NAN,
        success: false,
        gap: f64::NAN,
        psi_fluctuation: f64::NAN,
        seconds: 0.0,
        error: None,
    };

    let instance = match draw_instance(point, seed) {
        Ok(i) => i,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };

    let started = Instant::now();
    let outcome = solve_instance(&instance, solver);
    record.seconds = started.elapsed().as_secs_f64();

    match outcome {
        Ok(solved) => {
            record.gap = solved.gap;
            record.psi_fluctuation = solved.psi_fluctuation;
            match relative_deviation(&instance.op, &solved.x, &instance.xi) {
                Ok(rd) => {
                    record.rd = rd;
                    record.success = success(rd, point.noise);
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

pub(crate) struct SolvedTrial {
    pub x: CVector,
    pub gap: f64,
    pub psi_fluctuation: f64,
}

pub(crate) fn solve_instance(instance: &TrialInstance, solver: SolverId) -> Result<SolvedTrial> {
    let op = &instance.op;
    let obs = &instance.obs;
    match solver {
        SolverId::Complex => {
            let x = lstsq(op.matrix(), &instance.b_noisy)?;
            let fluct = linear::recover_phases(op, obs, &x)
                .map(|r| r.fluctuation)
                .unwrap_or(f64::NAN);
            Ok(SolvedTrial {
                x,
                gap: f64::NAN,
                psi_fluctuation: fluct,
            })
        }
        SolverId::SvdQ => {
            let report = linear::solve_q(op, obs, KernelMethod::ExactSvd)?;
            Ok(SolvedTrial {
                x: report.x,
                gap: report.gap,
                psi_fluctuation: report.psi_fluctuation,
            })
        }
        SolverId::SvdR | SolverId::SvdRUnit => {
            let rec = if solver == SolverId::SvdRUnit {
                Reconstruction::UnitConstrained
            } else {
                Reconstruction::Plain
            };
            let report = linear::solve_r(op, obs, KernelMethod::ExactSvd, rec)?;
            Ok(SolvedTrial {
                x: report.x,
                gap: report.gap,
                psi_fluctuation: report.psi_fluctuation,
            })
        }
        SolverId::MagnitudeOnly
        | SolverId::FullPhase
        | SolverId::ReducedPhase
        | SolverId::EliminatedPhase
        | SolverId::Paulus => {
            let kind = match solver {
                SolverId::MagnitudeOnly => CostKind::MagnitudeOnly,
                SolverId::FullPhase => CostKind::FullPhaseConstrained,
                SolverId::ReducedPhase => CostKind::ReducedPhase,
                SolverId::EliminatedPhase => CostKind::EliminatedPhase,
                _ => CostKind::Paulus,
            };
            let functional = CostFunctional::new(kind, op, obs)?;
            let init = spectral_initialization(op, obs);
            let angles = if kind.has_angles() {
                Some(initial_angles(op, obs, &init.x0))
            } else {
                None
            };
            let v0 = functional.pack(&init.x0, angles.as_ref());
            let report = minimize(&functional, &v0, &MinimizerConfig::default());
            let x = functional.unpack_x(&report.point);
            let fluct = linear::recover_phases(op, obs, &x)
                .map(|r| r.fluctuation)
                .unwrap_or(f64::NAN);
            Ok(SolvedTrial {
                x,
                gap: f64::NAN,
                psi_fluctuation: fluct,
            })
        }
    }
}

/// Starting angles for the phase-carrying functionals: phases of the block
/// estimates at the starting point, zero where undetermined.
fn initial_angles(op: &ForwardOperator, obs: &PartialObservations, x0: &CVector) -> RVector {
    match linear::recover_phases(op, obs, x0) {
        Ok(recovery) => RVector::from_fn(recovery.phases.len(), |m, _| {
            recovery.phases.values[m].arg()
        }),
        Err(_) => RVector::zeros(op.layout().groups()),
    }
}

/// Run all trials of a grid; records are ordered by (point, solver, trial)
/// regardless of parallel execution.
pub fn run_grid(grid: &ExperimentGrid) -> Result<Vec<TrialRecord>> {
    if grid.trials == 0 || grid.m_values.is_empty() || grid.solvers.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut records = Vec::new();
    for (point_index, &m) in grid.m_values.iter().enumerate() {
        let point = GridPoint {
            n_unknowns: grid.n_unknowns,
            groups: m,
            coherent: grid.coherent,
            noise: grid.noise,
        };
        for &solver in &grid.solvers {
            let mut batch: Vec<TrialRecord> = (0..grid.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = derive_seed(grid.master_seed, point_index as u64, trial as u64);
                    run_trial(&point, solver, seed)
                })
                .collect();
            records.append(&mut batch);
        }
    }
    Ok(records)
}

/// Aggregate success rates per grid point and solver. One row per
/// (point, solver) pair, in grid order, even when `m_values` repeats.
pub fn sweep_success(grid: &ExperimentGrid) -> Result<Vec<SweepRow>> {
    if grid.trials == 0 || grid.m_values.is_empty() || grid.solvers.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut rows = Vec::new();
    for (point_index, &m) in grid.m_values.iter().enumerate() {
        let point = GridPoint {
            n_unknowns: grid.n_unknowns,
            groups: m,
            coherent: grid.coherent,
            noise: grid.noise,
        };
        for &solver in &grid.solvers {
            let records: Vec<TrialRecord> = (0..grid.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = derive_seed(grid.master_seed, point_index as u64, trial as u64);
                    run_trial(&point, solver, seed)
                })
                .collect();
            let successes = records.iter().filter(|r| r.success).count();
            rows.push(SweepRow {
                solver,
                n_unknowns: grid.n_unknowns,
                groups: m,
                coherent: grid.coherent,
                noise: grid.noise,
                ratio: (grid.coherent * m) as f64 / grid.n_unknowns as f64,
                trials: records.len(),
                success_rate: successes as f64 / records.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// One trial of the first-order noise bound study.
#[derive(Debug, Clone)]
pub struct NoiseBoundRow {
    pub coherent: usize,
    pub noise: f64,
    pub trial: usize,
    /// Empirical `||delta psi|| / ||psi||` between the pinned solves of the
    /// clean and contaminated instances.
    pub empirical: f64,
    /// First-order bound `kappa * ||delta B|| / ||B||`.
    pub bound: f64,
    pub satisfied: bool,
}

/// Monte-Carlo check of the first-order perturbation bound on the pinned
/// R-system. Failed solves (degenerate systems in the high-noise regime)
/// yield NaN rows marked unsatisfied.
pub fn noise_bound_study(
    n_unknowns: usize,
    cm_total: usize,
    coherent: usize,
    noise_levels: &[f64],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<NoiseBoundRow>> {
    if trials == 0 || noise_levels.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if coherent == 0 || !cm_total.is_multiple_of(coherent) {
        return Err(Error::InvalidLayout {
            m: cm_total,
            c: coherent,
        });
    }
    let groups = cm_total / coherent;

    let mut rows = Vec::new();
    for (level_index, &noise) in noise_levels.iter().enumerate() {
        let mut batch: Vec<NoiseBoundRow> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(master_seed, level_index as u64, trial as u64);
                let point = GridPoint {
                    n_unknowns,
                    groups,
                    coherent,
                    noise,
                };
                noise_bound_trial(&point, seed, trial)
            })
            .collect();
        rows.append(&mut batch);
    }
    Ok(rows)
}

fn noise_bound_trial(point: &GridPoint, seed: u64, trial: usize) -> NoiseBoundRow {
    let mut row = NoiseBoundRow {
        coherent: point.coherent,
        noise: point.noise,
        trial,
        empirical: f64::NAN,
        bound: f64::NAN,
        satisfied: false,
    };

    let instance = match draw_instance(point, seed) {
        Ok(i) => i,
        Err(_) => return row,
    };
    let obs_clean = match PartialObservations::observe(instance.op.layout(), &instance.b_clean) {
        Ok(o) => o,
        Err(_) => return row,
    };

    let pin = 0;
    let outcome = (|| -> Result<(f64, f64)> {
        let sys_clean = linear::build_r(&instance.op, &obs_clean)?;
        let psi_clean = linear::solve_pinned_on(&sys_clean, pin)?;
        let kappa = linear::perturbation_bound_on(&sys_clean, &obs_clean, pin)?;
        let psi_noisy = linear::solve_pinned(&instance.op, &instance.obs, pin)?;
        let empirical = (&psi_noisy.values - &psi_clean.values).norm() / psi_clean.values.norm();

        let layout = instance.op.layout();
        let delta_b = (0..layout.groups())
            .map(|m| {
                (0..layout.coherent())
                    .map(|c| (instance.obs.b_entry(m, c) - obs_clean.b_entry(m, c)).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let b_norm = linear::b_spectral_norm(&obs_clean);
        Ok((empirical, kappa * delta_b / b_norm))
    })();

    if let Ok((empirical, bound)) = outcome {
        row.empirical = empirical;
        row.bound = bound;
        row.satisfied = empirical <= bound;
    }
    row
}

/// Format a float with 17 significant digits (full double precision).
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trial records CSV: `solver,N,M,C,n,seed,rd,success,gap,psi_fluct,seconds`.
///
/// `include_timing` controls whether measured wall times are written; the
/// default CLI path writes zeros so repeated runs stay byte-identical.
pub fn write_trials_csv<W: Write>(
    out: &mut W,
    records: &[TrialRecord],
    include_timing: bool,
) -> std::io::Result<()> {
    writeln!(out, "solver,N,M,C,n,seed,rd,success,gap,psi_fluct,seconds")?;
    for r in records {
        let seconds = if include_timing { r.seconds } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.solver.name(),
            r.n_unknowns,
            r.groups,
            r.coherent,
            fmt_full(r.noise),
            r.seed,
            fmt_full(r.rd),
            r.success,
            fmt_full(r.gap),
            fmt_full(r.psi_fluctuation),
            fmt_full(seconds),
        )?;
    }
    Ok(())
}

/// Sweep CSV: `solver,N,M,C,n,ratio,trials,success_rate`.
pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "solver,N,M,C,n,ratio,trials,success_rate")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.solver.name(),
            r.n_unknowns,
            r.groups,
            r.coherent,
            fmt_full(r.noise),
            fmt_full(r.ratio),
            r.trials,
            fmt_full(r.success_rate),
        )?;
    }
    Ok(())
}

/// Spectrum CSV: `index,sigma`, descending singular values.
pub fn write_spectrum_csv<W: Write>(out: &mut W, spectrum: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,sigma")?;
    for (index, sigma) in spectrum.iter().enumerate() {
        writeln!(out, "{},{}", index, fmt_full(*sigma))?;
    }
    Ok(())
}

/// Noise-bound CSV: `C,n,trial,empirical,bound,satisfied`.
pub fn write_noise_bound_csv<W: Write>(out: &mut W, rows: &[NoiseBoundRow]) -> std::io::Result<()> {
    writeln!(out, "C,n,trial,empirical,bound,satisfied")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.coherent,
            fmt_full(r.noise),
            r.trial,
            fmt_full(r.empirical),
            fmt_full(r.bound),
            r.satisfied,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_counter_independent() {
        let a = derive_seed(42, 0, 0);
        let b = derive_seed(42, 0, 1);
        let c = derive_seed(42, 1, 0);
        let d = derive_seed(43, 0, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a, derive_seed(42, 0, 0));
    }

    #[test]
    fn noise_free_linear_trial_is_exact() {
        let point = GridPoint {
            n_unknowns: 30,
            groups: 29,
            coherent: 2,
            noise: 0.0,
        };
        let record = run_trial(&point, SolverId::SvdR, derive_seed(7, 0, 0));
        assert!(record.error.is_none(), "{:?}", record.error);
        assert!(record.rd <= 1e-10, "rd {}", record.rd);
    }

    #[test]
    fn same_seed_reproduces_trial() {
        let point = GridPoint {
            n_unknowns: 12,
            groups: 14,
            coherent: 2,
            noise: 1e-4,
        };
        let a = run_trial(&point, SolverId::SvdQ, 99);
        let b = run_trial(&point, SolverId::SvdQ, 99);
        assert_eq!(a.rd.to_bits(), b.rd.to_bits());
        assert_eq!(a.gap.to_bits(), b.gap.to_bits());
        assert_eq!(a.success, b.success);
        assert_eq!(a.seed, b.seed);
    }

    #[test]
    fn underdetermined_point_fails() {
        // CM/N = 1.5 with C=2 cannot satisfy M(C-1) >= N-1
        let point = GridPoint {
            n_unknowns: 20,
            groups: 15,
            coherent: 2,
            noise: 1e-4,
        };
        let record = run_trial(&point, SolverId::SvdR, derive_seed(3, 0, 0));
        assert!(!record.success);
    }

    #[test]
    fn complex_baseline_always_succeeds_when_determined() {
        for trial in 0..10u64 {
            let point = GridPoint {
                n_unknowns: 10,
                groups: 6,
                coherent: 2,
                noise: 1e-4,
            };
            let record = run_trial(&point, SolverId::Complex, derive_seed(11, 0, trial));
            assert!(record.success, "trial {trial}: rd {}", record.rd);
        }
    }

    #[test]
    fn sweep_rates_are_in_unit_interval_and_deterministic() {
        let grid = ExperimentGrid {
            n_unknowns: 10,
            coherent: 2,
            m_values: vec![7, 12],
            noise: 1e-4,
            trials: 8,
            master_seed: 5,
            solvers: vec![SolverId::SvdR, SolverId::Complex],
        };
        let rows = sweep_success(&grid).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.success_rate));
            assert_eq!(row.trials, 8);
        }
        let again = sweep_success(&grid).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&mut a, &rows).unwrap();
        write_sweep_csv(&mut b, &again).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid = ExperimentGrid {
            n_unknowns: 10,
            coherent: 2,
            m_values: vec![7],
            noise: 1e-4,
            trials: 0,
            master_seed: 5,
            solvers: vec![SolverId::SvdR],
        };
        assert!(matches!(sweep_success(&grid), Err(Error::EmptyGrid)));
    }

    #[test]
    fn solver_names_round_trip() {
        for solver in SolverId::ALL {
            assert_eq!(SolverId::parse(solver.name()).unwrap(), solver);
        }
        assert!(SolverId::parse("nope").is_err());
    }

    #[test]
    fn csv_uses_full_precision() {
        assert_eq!(fmt_full(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_full(f64::NAN), "NaN");
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &[3.0, 1.5e-9]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,sigma\n"));
        assert!(text.contains("1,1.5000000000000000e-9"));
    }

    #[test]
    fn noise_bound_small_smoke() {
        let rows = noise_bound_study(8, 20, 2, &[1e-4], 5, 123).unwrap();
        assert_eq!(rows.len(), 5);
        let satisfied = rows.iter().filter(|r| r.satisfied).count();
        assert!(satisfied >= 4, "satisfied {satisfied}/5");
    }
}
