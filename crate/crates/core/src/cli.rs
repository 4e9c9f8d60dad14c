//! Command-line front end: argument parsing, configuration and the
//! subcommands that drive the library and write its output files.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::basin::{basin_scan, direction_field, table1, GridSpec};
use crate::certificate::{estimate_omega_hat, verify_certificate_sampled, SwitchCertificate};
use crate::driver::{solve, Mode, SolverConfig};
use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::{self, LuFactor};
use crate::output::{self, BasinImage, StatsTable};
use crate::problem::{builtin, Problem, BUILTIN_PROBLEMS};
use crate::step::DEFAULT_T_LOWER;

/// Environment variable that overrides `--workers`.
pub const THREADS_ENV: &str = "NEWTON_SWITCH_THREADS";

// an alias keeps clap from treating the list as a repeated flag
type Coords = Vec<f64>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Solve from a single initial guess (`--x0`).
    Solve,
    /// Scan a lattice of initial guesses and color the basins.
    Basins,
    /// Compare the four modes on one lattice.
    Table1,
    /// Sample the raw or transformed direction field.
    Field,
    /// Evaluate the switch certificate at `--x0` and sample it.
    Certify,
}

impl Command {
    fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Basins => "basins",
            Command::Table1 => "table1",
            Command::Field => "field",
            Command::Certify => "certify",
        }
    }
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn parse_list(s: &str) -> std::result::Result<Coords, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

fn parse_box(s: &str) -> std::result::Result<[f64; 4], String> {
    let v = parse_list(s)?;
    <[f64; 4]>::try_from(v.as_slice()).map_err(|_| format!("expected x_min,x_max,y_min,y_max, got {} values", v.len()))
}

fn parse_res(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let n = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"));
    match parts.as_slice() {
        [a] => n(a).map(|k| (k, k)),
        [a, b] => Ok((n(a)?, n(b)?)),
        _ => Err("expected NX,NY".into()),
    }
}

fn parse_problem(s: &str) -> std::result::Result<String, String> {
    if BUILTIN_PROBLEMS.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("unknown problem `{s}` (available: {})", BUILTIN_PROBLEMS.join(", ")))
    }
}

/// Damped/simplified Newton solver with certified switching.
#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "newton-switch", version)]
#[command(after_help = "Exit codes: 0 success, 1 usage error, 2 runtime failure.\n\
    NEWTON_SWITCH_THREADS overrides --workers.")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,

    /// Built-in problem: z6m1 (z^6 - 1), z3m1 (z^3 - 1) or circle.
    #[arg(long, default_value = "z6m1", value_parser = parse_problem)]
    pub problem: String,

    /// Initial guess, comma separated.
    #[arg(long, default_value = "2,0", value_parser = parse_list, allow_hyphen_values = true)]
    pub x0: Coords,

    /// AS (adaptive + switch), ANS (adaptive), NANS (classical Newton) or
    /// NAS (full steps + switch).
    #[arg(long, default_value = "AS", value_parser = parse_mode)]
    pub mode: Mode,

    /// Path-tracking tolerance tau of the step-size controller: a damped step
    /// t is accepted once (t/2) ||F(x + t delta) - F(x)|| <= tau. Default
    /// 0.01. Ignored (tau = inf) in NANS and NAS.
    #[arg(long)]
    pub tau: Option<f64>,

    /// Stopping tolerance epsilon on the correction norm
    /// alpha = ||M(x)^-1 f(x)||; also the simplified-phase tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,

    /// Lower bound t_lower on the damped step size (default 2^-24).
    #[arg(long, default_value_t = DEFAULT_T_LOWER)]
    pub t_lower: f64,

    /// Cap on outer (damped) iterations.
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,

    /// Lattice resolution NX,NY (or a single N for N x N).
    #[arg(long, default_value = "200,200", value_parser = parse_res)]
    pub res: (usize, usize),

    /// Lattice box x_min,x_max,y_min,y_max.
    #[arg(long = "box", default_value = "-3,3,-3,3", value_parser = parse_box, allow_hyphen_values = true)]
    pub bounds: [f64; 4],

    /// Main output file: PPM image (basins), CSV (table1, field), JSON
    /// (certify).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Statistics CSV (basins, table1).
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// JSON trace of the solve (solve, certify).
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Seed for sampled certificate verification.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for lattice scans.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,

    /// Stop after the simplified phase even when it leaves its guard ball,
    /// instead of resuming the damped phase.
    #[arg(long)]
    pub strict_algorithm1: bool,

    /// Sample pairs drawn by `certify`.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    /// `field`: sample -J^-1 f instead of f.
    #[arg(long)]
    pub transformed: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::try_parse_from(["newton-switch", "basins"]).expect("defaults parse")
    }
}

/// Parse failure or a help/version request.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// `--help` / `--version` output; not a failure.
    #[error("{0}")]
    Display(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Display(_) => EXIT_OK,
        }
    }
}

/// Parses `argv` (including the program name). Unknown flags, malformed
/// values and invalid modes are usage errors.
pub fn parse_cli<I, T>(argv: I) -> std::result::Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    RunConfig::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Display(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Flags that parse back to `self` (program name included).
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec![
            "newton-switch".to_string(),
            self.command.as_str().to_string(),
            format!("--problem={}", self.problem),
            format!("--x0={}", fmt_list(&self.x0)),
            format!("--mode={}", self.mode),
            format!("--eps={}", self.eps),
            format!("--t-lower={}", self.t_lower),
            format!("--max-outer={}", self.max_outer),
            format!("--res={},{}", self.res.0, self.res.1),
            format!("--box={}", fmt_list(&self.bounds)),
            format!("--seed={}", self.seed),
            format!("--workers={}", self.workers),
            format!("--samples={}", self.samples),
        ];
        if let Some(tau) = self.tau {
            a.push(format!("--tau={tau}"));
        }
        for (flag, path) in [("--out", &self.out), ("--csv", &self.csv), ("--trace", &self.trace)] {
            if let Some(p) = path {
                a.push(format!("{flag}={}", p.display()));
            }
        }
        if self.strict_algorithm1 {
            a.push("--strict-algorithm1".into());
        }
        if self.transformed {
            a.push("--transformed".into());
        }
        a
    }

    /// Applies the thread-count override from the environment value.
    pub fn apply_threads_env(&mut self, value: Option<&str>) -> std::result::Result<(), CliError> {
        if let Some(v) = value {
            self.workers = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.tau.is_some() && !self.mode.adaptive() {
            w.push(format!("--tau is ignored in mode {}: full steps (tau = inf) are forced", self.mode));
        }
        if self.transformed && self.command != Command::Field {
            w.push("--transformed only affects the `field` command".into());
        }
        w
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::for_mode(self.mode);
        cfg.eps = self.eps;
        cfg.simplified_eps = self.eps;
        cfg.max_outer = self.max_outer;
        cfg.step.t_lower = self.t_lower;
        if let Some(tau) = self.tau {
            cfg.step.tau = tau;
        }
        cfg.strict_algorithm1 = self.strict_algorithm1;
        cfg
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.bounds, self.res.0, self.res.1)
    }
}

/// Runs the configured command, writing human-readable output to `out`
/// and notes (warnings, hints) to `err`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    for w in cfg.warnings() {
        writeln!(err, "warning: {w}")?;
    }
    let problem = builtin(&cfg.problem)?;
    let solver = cfg.solver_config();
    solver.validate()?;
    match cfg.command {
        Command::Solve => run_solve(cfg, problem.as_ref(), &solver, out),
        Command::Basins => run_basins(cfg, problem.as_ref(), &solver, out, err),
        Command::Table1 => run_table1(cfg, problem.as_ref(), &solver, out),
        Command::Field => run_field(cfg, problem.as_ref(), out),
        Command::Certify => run_certify(cfg, problem.as_ref(), out),
    }
}

fn check_x0<P: Problem + ?Sized>(cfg: &RunConfig, problem: &P) -> Result<()> {
    if cfg.x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: cfg.x0.len() });
    }
    Ok(())
}

fn run_solve<P: Problem + ?Sized>(cfg: &RunConfig, problem: &P, solver: &SolverConfig, out: &mut dyn Write) -> Result<()> {
    check_x0(cfg, problem)?;
    let trace = solve(problem, &cfg.x0, solver)?;
    writeln!(out, "mode:       {}", trace.mode)?;
    writeln!(out, "outcome:    {:?}", trace.outcome)?;
    if let Some(z) = &trace.zero {
        writeln!(out, "zero:       {}", fmt_list(z))?;
    }
    writeln!(out, "iterations: {} outer, {} simplified", trace.outer_iterations, trace.simplified_sweeps)?;
    match trace.switched_at {
        Some(k) => writeln!(out, "switched:   at iteration {k}")?,
        None => writeln!(out, "switched:   no")?,
    }
    writeln!(out, "evals:      {} f, {} J, {} LU", trace.f_evals, trace.j_evals, trace.factorizations)?;
    if let Some(path) = &cfg.trace {
        output::write_json(&trace, path)?;
    }
    Ok(())
}

fn run_basins<P: Problem + Sync + ?Sized>(
    cfg: &RunConfig,
    problem: &P,
    solver: &SolverConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let grid = cfg.grid()?;
    let report = basin_scan(problem, &grid, solver, cfg.workers)?;
    writeln!(out, "mode:       {}", report.mode)?;
    writeln!(out, "grid:       {}x{}", grid.nx, grid.ny)?;
    writeln!(out, "convergent: {:.4}", report.convergent_fraction)?;
    writeln!(out, "correct:    {:.4}", report.correct_fraction)?;
    writeln!(out, "wall time:  {:.3} s", report.wall_time)?;
    if let Some(path) = &cfg.out {
        output::write_ppm(&BasinImage::from_report(&report), path)?;
        writeln!(err, "hint: convert with `magick {0} {1}` or `pnmtopng {0} > {1}`", path.display(), path.with_extension("png").display())?;
    }
    if let Some(path) = &cfg.csv {
        output::write_csv_stats(&StatsTable::from(&report), path)?;
    }
    Ok(())
}

fn run_table1<P: Problem + Sync + ?Sized>(
    cfg: &RunConfig,
    problem: &P,
    solver: &SolverConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let grid = cfg.grid()?;
    let table = table1(problem, &grid, solver)?;
    let csv = output::encode_csv_stats(&StatsTable::from(&table));
    out.write_all(csv.replace("\r\n", "\n").as_bytes())?;
    for path in [&cfg.out, &cfg.csv].into_iter().flatten() {
        std::fs::write(path, &csv)?;
    }
    Ok(())
}

fn run_field<P: Problem + ?Sized>(cfg: &RunConfig, problem: &P, out: &mut dyn Write) -> Result<()> {
    let grid = cfg.grid()?;
    let samples = direction_field(problem, &grid, cfg.transformed)?;
    match &cfg.out {
        Some(path) => {
            output::write_field_csv(&samples, path)?;
            let singular = samples.iter().filter(|s| s.singular).count();
            writeln!(out, "{} samples ({singular} singular) written to {}", samples.len(), path.display())?;
        }
        None => out.write_all(output::encode_field_csv(&samples).as_bytes())?,
    }
    Ok(())
}

/// Certificate for freezing `M = J(x0)`, with `omega_hat` estimated from
/// one full Newton step, plus a sampled check of the certified ball.
fn run_certify<P: Problem + ?Sized>(cfg: &RunConfig, problem: &P, out: &mut dyn Write) -> Result<()> {
    check_x0(cfg, problem)?;
    let x_n = &cfg.x0;
    let jac_n = problem.eval_jacobian(x_n)?;
    let lu = LuFactor::new(&jac_n)?;
    let corr = kernel::correction(problem, x_n, &lu)?;
    let x_next = linalg::axpy(x_n, 1.0, &corr.delta);
    let jac_next = problem.eval_jacobian(&x_next)?;
    let omega = estimate_omega_hat(&lu, &jac_next, &jac_n, &x_next, x_n)?;
    let cert = SwitchCertificate::new(corr.alpha, omega, 0.0);

    writeln!(out, "alpha:      {:e}", cert.alpha)?;
    writeln!(out, "omega_hat:  {:e}", cert.omega_hat)?;
    writeln!(out, "verdict:    {}", cert.verdict)?;
    let sampled = match (cert.radius_big, cert.radius_small) {
        (Some(big), Some(small)) => {
            writeln!(out, "radii:      R = {big:e}, r = {small:e}")?;
            if big.is_finite() && big > 0.0 && cfg.samples > 0 {
                let v = verify_certificate_sampled(problem, x_n, &cert, &lu, cfg.samples, cfg.seed)?;
                writeln!(
                    out,
                    "sampled:    {} pairs, {} self-map and {} contraction violations (max quotient {:.4} vs bound {:.4})",
                    v.samples, v.self_map_violations, v.contraction_violations, v.max_lipschitz_quotient, v.contraction_bound
                )?;
                Some(v)
            } else {
                None
            }
        }
        _ => None,
    };
    if let Some(path) = cfg.out.as_ref().or(cfg.trace.as_ref()) {
        output::write_json(&serde_json::json!({ "x_n": x_n, "certificate": cert, "sampled": sampled }), path)?;
    }
    Ok(())
}

/// Full entry point: parse, apply the environment override, run. Returns
/// the process exit code.
pub fn main_with<I, T>(argv: I, threads_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cfg = match parse_cli(argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    if let Err(e) = cfg.apply_threads_env(threads_env) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    match run(&cfg, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<RunConfig, CliError> {
        parse_cli(std::iter::once("newton-switch").chain(args.iter().copied()))
    }

    #[test]
    fn basins_defaults() {
        let c = parse(&["basins", "--problem", "z6m1"]).unwrap();
        assert_eq!(c.command, Command::Basins);
        assert_eq!(c.res, (200, 200));
        assert_eq!(c.mode, Mode::AS);
        assert_eq!(c.bounds, [-3.0, 3.0, -3.0, 3.0]);
        assert_eq!(c.workers, 1);
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn tau_in_nas_is_a_warning() {
        let c = parse(&["solve", "--x0", "2,0", "--mode", "NAS", "--tau", "0.01"]).unwrap();
        assert_eq!(c.tau, Some(0.01));
        assert_eq!(c.warnings().len(), 1);
        assert_eq!(c.solver_config().effective_step().tau, f64::INFINITY);
    }

    #[test]
    fn invalid_mode_and_unknown_flag() {
        assert!(matches!(parse(&["solve", "--mode", "XYZ"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["solve", "--bogus"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["frobnicate"]), Err(CliError::Usage(_))));
        assert!(matches!(parse(&["solve", "--problem", "nope"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn negative_values_parse() {
        let c = parse(&["solve", "--x0", "-0.4,0.6", "--box", "-1,1,-2,2", "--res", "7"]).unwrap();
        assert_eq!(c.x0, vec![-0.4, 0.6]);
        assert_eq!(c.bounds, [-1.0, 1.0, -2.0, 2.0]);
        assert_eq!(c.res, (7, 7));
    }

    #[test]
    fn round_trip() {
        let c = parse(&[
            "certify", "--x0", "-0.4,0.6", "--mode", "nans", "--tau", "0.05", "--eps", "1e-12", "--t-lower",
            "0.001", "--max-outer", "77", "--res", "31,17", "--box", "-1.5,2,-0.25,3", "--out", "a.json",
            "--csv", "b.csv", "--trace", "c.json", "--seed", "9", "--workers", "3", "--strict-algorithm1",
            "--samples", "12", "--transformed",
        ])
        .unwrap();
        assert_eq!(parse_cli(c.to_args()).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(parse_cli(d.to_args()).unwrap(), d);
    }

    #[test]
    fn help_documents_controller_parameters() {
        let Err(CliError::Display(text)) = parse(&["--help"]) else { panic!("help expected") };
        for flag in ["--tau", "--eps", "--t-lower", "--strict-algorithm1", "NEWTON_SWITCH_THREADS"] {
            assert!(text.contains(flag), "{flag} missing from help");
        }
        assert!(text.contains("t_lower") && text.contains("tau") && text.contains("epsilon"));
    }

    #[test]
    fn env_overrides_workers() {
        let mut c = parse(&["basins", "--workers", "2"]).unwrap();
        c.apply_threads_env(Some("5")).unwrap();
        assert_eq!(c.workers, 5);
        assert!(c.apply_threads_env(Some("many")).is_err());
    }

    #[test]
    fn exit_codes() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["ns", "solve", "--x0", "2,0"], None, &mut o, &mut e), EXIT_OK);
        assert!(String::from_utf8_lossy(&o).contains("Converged"));
        assert_eq!(main_with(["ns", "solve", "--mode", "XYZ"], None, &mut o, &mut e), EXIT_USAGE);
        assert_eq!(main_with(["ns", "solve", "--x0", "1,2,3"], None, &mut o, &mut e), EXIT_RUNTIME);
        assert_eq!(main_with(["ns", "basins", "--res", "3"], Some("x"), &mut o, &mut e), EXIT_USAGE);
        assert_eq!(main_with(["ns", "--help"], None, &mut o, &mut e), EXIT_OK);
    }
}
