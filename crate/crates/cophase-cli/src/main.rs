//! Command-line front end: configure, run and persist phase-retrieval
//! experiments.
//!
//! Subcommands: `sweep`, `trial`, `spectrum`, `noise-bound`, `antenna`.
//! All randomness flows from `--seed`; outputs are byte-deterministic
//! unless `--timing` asks for measured wall times. Values may come from a
//! flat `key = value` config file with section prefixes (`sweep.N = 30`);
//! command-line flags override config keys.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cophase::antenna::{run_antenna_scenario, AntennaConfig, ProbeKind};
use cophase::experiments::{
    noise_bound_study, run_trial, sweep_success, write_noise_bound_csv, write_spectrum_csv,
    write_sweep_csv, write_trials_csv, ExperimentGrid, GridPoint, SolverId, TrialRecord,
};
use cophase::linear::{build_q, build_r, singular_spectrum, SystemKind};
use cophase::model::{CoherenceLayout, ForwardOperator, PartialObservations};

use config::{ConfigFile, Merge};

#[derive(Parser)]
#[command(
    name = "cophase",
    version,
    about = "Phase retrieval for partially coherent observations",
    after_help = "Config file keys use section prefixes (sweep.N = 30); flags override them.\n\
                  COPHASE_THREADS is honored when --threads is absent."
)]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output CSV path (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Trial parallelism (output is identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write measured wall times into the seconds column (breaks
    /// byte-determinism across runs).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Success-rate sweep over CM/N ratios.
    Sweep(SweepArgs),
    /// A single reconstruction trial per selected solver.
    Trial(TrialArgs),
    /// Singular-value spectrum of a Q or R system.
    Spectrum(SpectrumArgs),
    /// Monte-Carlo check of the first-order perturbation bound.
    NoiseBound(NoiseBoundArgs),
    /// Synthetic antenna near-field scenario.
    Antenna(AntennaArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Either `start:step:end` or a comma-separated list of CM/N ratios.
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Repeatable; also accepts a comma-separated list.
    #[arg(long = "solver")]
    solvers: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long = "solver")]
    solvers: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// CPLX1 operator file; when given, observations come from
    /// `--obs-file` and `--C` fixes the layout.
    #[arg(long = "from-file")]
    from_file: Option<PathBuf>,
    /// CPLX1 complex observation vector matching the operator file.
    #[arg(long = "obs-file")]
    obs_file: Option<PathBuf>,
    /// System kind: `q` or `r`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NoiseBoundArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "CM")]
    cm: Option<usize>,
    #[arg(long = "C")]
    c: Option<usize>,
    /// Comma-separated noise-to-signal ratios.
    #[arg(long = "noise-levels")]
    noise_levels: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AntennaArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    /// Probe elements: 2 (diagonal pair) or 3 (L-shape).
    #[arg(long = "C")]
    c: Option<usize>,
    /// CM/N ratio fixing the number of measurement sites.
    #[arg(long)]
    ratio: Option<f64>,
    /// Number of measurement sites (alternative to --ratio).
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long = "solver")]
    solvers: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Export the built forward operator as a CPLX1 file.
    #[arg(long = "export-operator")]
    export_operator: Option<PathBuf>,
    /// Source sphere diameter in wavelengths.
    #[arg(long = "source-diameter")]
    source_diameter: Option<f64>,
    /// Measurement sphere diameter in wavelengths.
    #[arg(long = "measurement-diameter")]
    measurement_diameter: Option<f64>,
    /// Probe element spacing in wavelengths.
    #[arg(long = "probe-spacing")]
    probe_spacing: Option<f64>,
}

/// Usage-level failure: missing/invalid values after merging config and
/// flags. Exits with code 2 like a parse error.
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config = match cli.config.as_deref().map(ConfigFile::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let threads = cli
        .threads
        .or_else(|| config.get("threads").and_then(|v| v.parse().ok()))
        .or_else(|| {
            std::env::var("COPHASE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        });
    if let Some(k) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
        {
            eprintln!("error: could not configure {k} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let out = cli
        .out
        .clone()
        .or_else(|| config.get("out").map(PathBuf::from));

    // validate the output location before any computation starts
    if let Some(path) = &out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                eprintln!(
                    "error: output directory {} does not exist",
                    parent.display()
                );
                return ExitCode::from(1);
            }
        }
    }

    let result = match &cli.command {
        Cmd::Sweep(args) => cmd_sweep(args, &config, out.as_deref()),
        Cmd::Trial(args) => cmd_trial(args, &config, out.as_deref(), cli.timing),
        Cmd::Spectrum(args) => cmd_spectrum(args, &config, out.as_deref()),
        Cmd::NoiseBound(args) => cmd_noise_bound(args, &config, out.as_deref()),
        Cmd::Antenna(args) => cmd_antenna(args, &config, out.as_deref(), cli.timing),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(UsageError(message))) => {
            eprintln!("error: {message}");
            eprintln!("run `cophase <command> --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Run(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Usage(UsageError),
    Run(String),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<cophase::Error> for CliError {
    fn from(e: cophase::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn write_output(out: Option<&std::path::Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes)
                .map_err(|e| CliError::Run(format!("writing {}: {e}", path.display())))?;
        }
        None => {
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn parse_solvers(flag: &[String], merged: Option<String>) -> Result<Vec<SolverId>, UsageError> {
    let raw: Vec<String> = if flag.is_empty() {
        match merged {
            Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
            None => Vec::new(),
        }
    } else {
        flag.iter()
            .flat_map(|v| v.split(','))
            .map(|s| s.trim().to_string())
            .collect()
    };
    if raw.is_empty() {
        return Err(UsageError("missing required flag --solver".into()));
    }
    raw.iter()
        .map(|name| {
            SolverId::parse(name)
                .map_err(|_| UsageError(format!("unknown solver {name:?} (see --help)")))
        })
        .collect()
}

/// `start:step:end` (inclusive) or a comma-separated list.
fn parse_ratios(spec: &str) -> Result<Vec<f64>, UsageError> {
    let bad = |detail: &str| UsageError(format!("bad --ratios value {spec:?}: {detail}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:end"));
        }
        let start: f64 = parts[0].parse().map_err(|_| bad("start is not a number"))?;
        let step: f64 = parts[1].parse().map_err(|_| bad("step is not a number"))?;
        let end: f64 = parts[2].parse().map_err(|_| bad("end is not a number"))?;
        if step <= 0.0 || end < start {
            return Err(bad("need step > 0 and end >= start"));
        }
        let count = ((end - start) / step + 1.0 + 1e-9).floor() as usize;
        Ok((0..count).map(|k| start + k as f64 * step).collect())
    } else {
        spec.split(',')
            .map(|part| {
                part.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("expected comma-separated numbers"))
            })
            .collect()
    }
}

fn ratio_to_groups(ratio: f64, n: usize, c: usize) -> usize {
    ((ratio * n as f64) / c as f64).round().max(1.0) as usize
}

fn report_failed_trials(records: &[TrialRecord]) {
    for record in records {
        if let Some(error) = &record.error {
            eprintln!(
                "failed trial: solver {} seed {} ({error})",
                record.solver.name(),
                record.seed
            );
        }
    }
}

fn cmd_sweep(
    args: &SweepArgs,
    config: &ConfigFile,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let section = config.section("sweep")?;
    let n = Merge::new("--N", args.n)
        .config(section.value("N")?)
        .required()?;
    let c = Merge::new("--C", args.c)
        .config(section.value("C")?)
        .required()?;
    let noise = Merge::new("--noise", args.noise)
        .config(section.value("noise")?)
        .required()?;
    let ratios_spec: String = Merge::new("--ratios", args.ratios.clone())
        .config(section.value("ratios")?)
        .required()?;
    let trials = Merge::new("--trials", args.trials)
        .config(section.value("trials")?)
        .required()?;
    let seed = Merge::new("--seed", args.seed)
        .config(section.value("seed")?)
        .unwrap_or(0);
    let solvers = parse_solvers(&args.solvers, section.raw("solver"))?;

    let ratios = parse_ratios(&ratios_spec)?;
    let m_values: Vec<usize> = ratios.iter().map(|&r| ratio_to_groups(r, n, c)).collect();
    eprintln!(
        "sweep: N={n} C={c} n={noise:e} trials={trials} points={}",
        m_values.len()
    );

    let grid = ExperimentGrid {
        n_unknowns: n,
        coherent: c,
        m_values,
        noise,
        trials,
        master_seed: seed,
        solvers,
    };
    let rows = sweep_success(&grid)?;
    let mut bytes = Vec::new();
    write_sweep_csv(&mut bytes, &rows)?;
    write_output(out, &bytes)?;
    eprintln!("sweep: wrote {} rows", rows.len());
    Ok(())
}

fn cmd_trial(
    args: &TrialArgs,
    config: &ConfigFile,
    out: Option<&std::path::Path>,
    timing: bool,
) -> Result<(), CliError> {
    let section = config.section("trial")?;
    let n = Merge::new("--N", args.n)
        .config(section.value("N")?)
        .required()?;
    let m = Merge::new("--M", args.m)
        .config(section.value("M")?)
        .required()?;
    let c = Merge::new("--C", args.c)
        .config(section.value("C")?)
        .required()?;
    let noise = Merge::new("--noise", args.noise)
        .config(section.value("noise")?)
        .required()?;
    let seed = Merge::new("--seed", args.seed)
        .config(section.value("seed")?)
        .unwrap_or(0);
    let solvers = parse_solvers(&args.solvers, section.raw("solver"))?;

    let point = GridPoint {
        n_unknowns: n,
        groups: m,
        coherent: c,
        noise,
    };
    let records: Vec<TrialRecord> = solvers
        .iter()
        .map(|&solver| run_trial(&point, solver, seed))
        .collect();
    report_failed_trials(&records);

    let mut bytes = Vec::new();
    write_trials_csv(&mut bytes, &records, timing)?;
    write_output(out, &bytes)?;
    Ok(())
}

fn cmd_spectrum(
    args: &SpectrumArgs,
    config: &ConfigFile,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let section = config.section("spectrum")?;
    let kind_raw: String = Merge::new("--kind", args.kind.clone())
        .config(section.value("kind")?)
        .required()?;
    let kind = match kind_raw.to_ascii_lowercase().as_str() {
        "q" => SystemKind::Q,
        "r" => SystemKind::R,
        other => {
            return Err(UsageError(format!("bad --kind {other:?}: expected q or r")).into());
        }
    };

    let from_file = args
        .from_file
        .clone()
        .or_else(|| section.raw("from-file").map(PathBuf::from));

    let (op, obs) = if let Some(op_path) = from_file {
        let obs_path = args
            .obs_file
            .clone()
            .or_else(|| section.raw("obs-file").map(PathBuf::from))
            .ok_or_else(|| UsageError("--from-file also needs --obs-file".into()))?;
        let c = Merge::new("--C", args.c)
            .config(section.value("C")?)
            .required()?;
        let matrix = cophase::cplx1::read_matrix_file(&op_path)?;
        let b = cophase::cplx1::read_vector_file(&obs_path)?;
        if c == 0 || matrix.nrows() % c != 0 {
            return Err(UsageError(format!(
                "operator has {} rows, not divisible into C={c} blocks",
                matrix.nrows()
            ))
            .into());
        }
        let layout = CoherenceLayout::new(matrix.nrows() / c, c)?;
        let op = ForwardOperator::new(matrix, layout)?;
        let obs = PartialObservations::observe(layout, &b)?;
        (op, obs)
    } else {
        let n = Merge::new("--N", args.n)
            .config(section.value("N")?)
            .required()?;
        let m = Merge::new("--M", args.m)
            .config(section.value("M")?)
            .required()?;
        let c = Merge::new("--C", args.c)
            .config(section.value("C")?)
            .required()?;
        let noise = Merge::new("--noise", args.noise)
            .config(section.value("noise")?)
            .unwrap_or(0.0);
        let seed = Merge::new("--seed", args.seed)
            .config(section.value("seed")?)
            .unwrap_or(0);
        let point = GridPoint {
            n_unknowns: n,
            groups: m,
            coherent: c,
            noise,
        };
        let instance = cophase::experiments::draw_instance(&point, seed)?;
        (instance.op, instance.obs)
    };

    let sys = match kind {
        SystemKind::Q => build_q(&op, &obs)?,
        SystemKind::R => build_r(&op, &obs)?,
    };
    let spectrum = singular_spectrum(&sys);
    let mut bytes = Vec::new();
    write_spectrum_csv(&mut bytes, &spectrum)?;
    write_output(out, &bytes)?;
    Ok(())
}

fn cmd_noise_bound(
    args: &NoiseBoundArgs,
    config: &ConfigFile,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let section = config.section("noise-bound")?;
    let n = Merge::new("--N", args.n)
        .config(section.value("N")?)
        .required()?;
    let cm = Merge::new("--CM", args.cm)
        .config(section.value("CM")?)
        .required()?;
    let c = Merge::new("--C", args.c)
        .config(section.value("C")?)
        .required()?;
    let levels_raw: String = Merge::new("--noise-levels", args.noise_levels.clone())
        .config(section.value("noise-levels")?)
        .required()?;
    let trials = Merge::new("--trials", args.trials)
        .config(section.value("trials")?)
        .required()?;
    let seed = Merge::new("--seed", args.seed)
        .config(section.value("seed")?)
        .unwrap_or(0);

    let levels: Vec<f64> = levels_raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("bad --noise-levels entry {part:?}")))
        })
        .collect::<Result<_, UsageError>>()?;

    eprintln!(
        "noise-bound: N={n} CM={cm} C={c} levels={} trials={trials}",
        levels.len()
    );
    let rows = noise_bound_study(n, cm, c, &levels, trials, seed)?;
    let satisfied = rows.iter().filter(|r| r.satisfied).count();
    eprintln!(
        "noise-bound: bound satisfied in {satisfied}/{} trials",
        rows.len()
    );

    let mut bytes = Vec::new();
    write_noise_bound_csv(&mut bytes, &rows)?;
    write_output(out, &bytes)?;
    Ok(())
}

fn cmd_antenna(
    args: &AntennaArgs,
    config: &ConfigFile,
    out: Option<&std::path::Path>,
    timing: bool,
) -> Result<(), CliError> {
    let section = config.section("antenna")?;
    let n = Merge::new("--N", args.n)
        .config(section.value("N")?)
        .unwrap_or(200);
    let c = Merge::new("--C", args.c)
        .config(section.value("C")?)
        .required()?;
    let probe = match c {
        2 => ProbeKind::Diagonal,
        3 => ProbeKind::LShape,
        other => {
            return Err(UsageError(format!(
                "--C {other} unsupported: the probe array has 2 (diagonal) or 3 (L-shape) elements"
            ))
            .into());
        }
    };
    let groups = match (
        Merge::new("--M", args.m)
            .config(section.value("M")?)
            .optional(),
        Merge::new("--ratio", args.ratio)
            .config(section.value("ratio")?)
            .optional(),
    ) {
        (Some(m), _) => m,
        (None, Some(ratio)) => ratio_to_groups(ratio, n, c),
        (None, None) => {
            return Err(UsageError("missing required flag --ratio (or --M)".into()).into());
        }
    };
    let noise = Merge::new("--noise", args.noise)
        .config(section.value("noise")?)
        .required()?;
    let trials = Merge::new("--trials", args.trials)
        .config(section.value("trials")?)
        .required()?;
    let seed = Merge::new("--seed", args.seed)
        .config(section.value("seed")?)
        .unwrap_or(0);
    let solvers = if args.solvers.is_empty() && section.raw("solver").is_none() {
        vec![SolverId::SvdQ, SolverId::SvdR]
    } else {
        parse_solvers(&args.solvers, section.raw("solver"))?
    };

    let antenna_config = AntennaConfig {
        n_unknowns: n,
        groups,
        probe,
        noise,
        trials,
        master_seed: seed,
        solvers,
        source_diameter: Merge::new("--source-diameter", args.source_diameter)
            .config(section.value("source-diameter")?)
            .unwrap_or(5.0),
        measurement_diameter: Merge::new("--measurement-diameter", args.measurement_diameter)
            .config(section.value("measurement-diameter")?)
            .unwrap_or(8.0),
        probe_spacing: Merge::new("--probe-spacing", args.probe_spacing)
            .config(section.value("probe-spacing")?)
            .unwrap_or(1.0),
    };

    eprintln!("antenna: N={n} M={groups} C={c} n={noise:e} trials={trials}");

    if let Some(path) = args
        .export_operator
        .clone()
        .or_else(|| section.raw("export-operator").map(PathBuf::from))
    {
        let sources = cophase::antenna::build_source_sphere(antenna_config.source_diameter, n)?;
        let grid =
            cophase::antenna::build_measurement_grid(antenna_config.measurement_diameter, groups)?;
        let layout = antenna_config.probe.layout(antenna_config.probe_spacing);
        let (op, _) = cophase::antenna::build_dipole_operator(&sources, &grid, &layout)?;
        cophase::cplx1::write_matrix_file(&path, op.matrix())?;
        eprintln!("antenna: exported operator to {}", path.display());
    }

    let records = run_antenna_scenario(&antenna_config)?;
    report_failed_trials(&records);

    let mut bytes = Vec::new();
    write_trials_csv(&mut bytes, &records, timing)?;
    write_output(out, &bytes)?;
    Ok(())
}
