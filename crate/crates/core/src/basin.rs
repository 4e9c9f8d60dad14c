//! Basin-of-attraction experiments: lattice sampling of initial values,
//! classification against the attractor of the continuous Newton flow,
//! direction fields, and the four-mode comparison table.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{self, Mode, Outcome, SolverConfig};
use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::{self, LuFactor};
use crate::problem::Problem;

/// A solution counts as reaching a known zero within this distance.
pub const ZERO_MATCH_TOL: f64 = 1e-6;

/// Angular distance below which an initial value is treated as lying on a
/// sector boundary.
pub const SECTOR_BOUNDARY_TOL: f64 = 1e-12;

/// Equally spaced lattice on a rectangle, corners included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(bounds: [f64; 4], nx: usize, ny: usize) -> Result<Self> {
        let g = Self { x_min: bounds[0], x_max: bounds[1], y_min: bounds[2], y_max: bounds[3], nx, ny };
        g.validate()?;
        Ok(g)
    }

    /// `n x n` lattice on `[-3, 3]^2`.
    pub fn square(n: usize) -> Self {
        Self { x_min: -3.0, x_max: 3.0, y_min: -3.0, y_max: 3.0, nx: n, ny: n }
    }

    /// A single lattice point.
    pub fn single(x: f64, y: f64) -> Self {
        Self { x_min: x, x_max: x, y_min: y, y_max: y, nx: 1, ny: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let axis_ok = |lo: f64, hi: f64, n: usize| lo.is_finite() && hi.is_finite() && if n == 1 { lo <= hi } else { lo < hi };
        if !axis_ok(self.x_min, self.x_max, self.nx) || !axis_ok(self.y_min, self.y_max, self.ny) {
            return Err(Error::InvalidArgument("grid box must be finite with min < max".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n == 1 {
            lo
        } else if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        Self::coord(self.x_min, self.x_max, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        Self::coord(self.y_min, self.y_max, self.ny, j)
    }

    /// Lattice point with linear index `k = j * nx + i` (row `j` from the
    /// bottom).
    pub fn point(&self, k: usize) -> [f64; 2] {
        [self.x(k % self.nx), self.y(k / self.nx)]
    }
}

/// Index of the known zero within [`ZERO_MATCH_TOL`] of `x`.
pub fn match_zero<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> Option<usize> {
    problem
        .known_zeros()
        .iter()
        .position(|z| linalg::dist2(z, x) <= ZERO_MATCH_TOL)
}

/// Sector index for `z^d - 1`: the root whose argument lies within
/// `pi / d` of `arg(x0)`. Boundary points go to the smaller index.
pub fn sector_of(x0: &[f64], degree: usize) -> Result<usize> {
    if x0.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: x0.len() });
    }
    if x0[0] == 0.0 && x0[1] == 0.0 {
        return Err(Error::NoSector("the origin"));
    }
    let width = 2.0 * PI / degree as f64;
    let theta = x0[1].atan2(x0[0]).rem_euclid(2.0 * PI);
    let s = theta / width;
    let below = s.floor();
    let offset = (s - below - 0.5).abs() * width;
    let d = degree as i64;
    if offset <= SECTOR_BOUNDARY_TOL {
        let a = (below as i64).rem_euclid(d) as usize;
        let b = (below as i64 + 1).rem_euclid(d) as usize;
        Ok(a.min(b))
    } else {
        Ok((s.round() as i64).rem_euclid(d) as usize)
    }
}

/// Reference integration of the Newton flow `x' = -J(x)^-1 f(x)` used to
/// define the correct zero for problems without a closed-form partition.
#[derive(Debug, Clone, Copy)]
pub struct FlowOracle {
    pub step: f64,
    pub t_max: f64,
}

impl Default for FlowOracle {
    fn default() -> Self {
        Self { step: 1e-3, t_max: 40.0 }
    }
}

impl FlowOracle {
    fn field<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> Result<Vec<f64>> {
        let lu = LuFactor::new(&problem.eval_jacobian(x)?)?;
        Ok(kernel::correction(problem, x, &lu)?.delta)
    }

    /// Integrates with classical RK4 until a known zero is within
    /// [`ZERO_MATCH_TOL`]; returns its index.
    pub fn zero_reached<P: Problem + ?Sized>(&self, problem: &P, x0: &[f64]) -> Result<usize> {
        let h = self.step;
        let mut x = x0.to_vec();
        let steps = (self.t_max / h).ceil() as usize;
        for _ in 0..=steps {
            if let Some(k) = match_zero(problem, &x) {
                return Ok(k);
            }
            let k1 = Self::field(problem, &x)?;
            let k2 = Self::field(problem, &linalg::axpy(&x, 0.5 * h, &k1))?;
            let k3 = Self::field(problem, &linalg::axpy(&x, 0.5 * h, &k2))?;
            let k4 = Self::field(problem, &linalg::axpy(&x, h, &k3))?;
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        Err(Error::InvalidArgument(format!("flow from {x0:?} reached no known zero by t = {}", self.t_max)))
    }
}

/// The zero lying in the same attractor of the continuous Newton flow as
/// `x0`: angular sectors for `z^d - 1`, the reference flow otherwise.
pub fn correct_zero_of<P: Problem + ?Sized>(x0: &[f64], problem: &P) -> Result<usize> {
    if problem.known_zeros().is_empty() {
        return Err(Error::InvalidArgument(format!("problem `{}` lists no known zeros", problem.name())));
    }
    match problem.angular_sectors() {
        Some(d) => sector_of(x0, d),
        None => FlowOracle::default().zero_reached(problem, x0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub zero_index: Option<usize>,
    pub correct: bool,
    pub outcome: Outcome,
    pub outer_iterations: usize,
    pub simplified_sweeps: usize,
    pub switched: bool,
    #[serde(rename = "J_evals_after_switch")]
    pub j_evals_after_switch: Option<u64>,
    pub factorizations_after_switch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub mode: Mode,
    pub grid: GridSpec,
    /// Records in lattice order `k = j * nx + i`.
    pub points: Vec<PointRecord>,
    /// Fraction of points that converged to some known zero.
    pub convergent_fraction: f64,
    /// Fraction of points that converged to their correct zero.
    pub correct_fraction: f64,
    /// Seconds spent in the scan.
    pub wall_time: f64,
    /// `wall_time / wall_time(NANS)` on the same grid, when measured.
    pub relative_complexity: Option<f64>,
}

impl BasinReport {
    /// Equality of everything except timings.
    pub fn same_results(&self, other: &BasinReport) -> bool {
        self.mode == other.mode
            && self.grid == other.grid
            && self.points == other.points
            && self.convergent_fraction == other.convergent_fraction
            && self.correct_fraction == other.correct_fraction
    }
}

fn classify<P: Problem + ?Sized>(problem: &P, x0: &[f64], cfg: &SolverConfig) -> Result<PointRecord> {
    let trace = driver::solve(problem, x0, cfg)?;
    let zero_index = if trace.converged() {
        trace.zero.as_deref().and_then(|z| match_zero(problem, z))
    } else {
        None
    };
    // points without a sector (the origin) count as non-convergent
    let correct = match (zero_index, correct_zero_of(x0, problem)) {
        (Some(found), Ok(expected)) => found == expected,
        _ => false,
    };
    Ok(PointRecord {
        zero_index,
        correct,
        outcome: trace.outcome,
        outer_iterations: trace.outer_iterations,
        simplified_sweeps: trace.simplified_sweeps,
        switched: trace.switched_at.is_some() && trace.j_evals_after_switch.is_some(),
        j_evals_after_switch: trace.j_evals_after_switch,
        factorizations_after_switch: trace.factorizations_after_switch,
    })
}

/// Solves from every lattice point and aggregates the outcomes.
///
/// `workers > 1` distributes points over a thread pool; records are merged
/// by lattice index, so everything but `wall_time` is independent of the
/// worker count.
pub fn basin_scan<P: Problem + Sync + ?Sized>(
    problem: &P,
    grid: &GridSpec,
    cfg: &SolverConfig,
    workers: usize,
) -> Result<BasinReport> {
    grid.validate()?;
    cfg.validate()?;
    if problem.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: problem.dim() });
    }
    if problem.known_zeros().is_empty() {
        return Err(Error::InvalidArgument(format!("problem `{}` lists no known zeros", problem.name())));
    }

    let start = Instant::now();
    let points: Vec<PointRecord> = if workers <= 1 {
        (0..grid.len()).map(|k| classify(problem, &grid.point(k), cfg)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
        pool.install(|| {
            (0..grid.len())
                .into_par_iter()
                .map(|k| classify(problem, &grid.point(k), cfg))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let wall_time = start.elapsed().as_secs_f64();

    let total = points.len() as f64;
    let convergent = points.iter().filter(|p| p.zero_index.is_some()).count() as f64;
    let correct = points.iter().filter(|p| p.correct).count() as f64;
    Ok(BasinReport {
        mode: cfg.mode,
        grid: *grid,
        points,
        convergent_fraction: convergent / total,
        correct_fraction: correct / total,
        wall_time,
        relative_complexity: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionFieldSample {
    pub point: [f64; 2],
    pub vector: [f64; 2],
    pub unit: [f64; 2],
    pub singular: bool,
}

/// Samples `f` (or `-J^-1 f` when `transformed`) on the lattice.
pub fn direction_field<P: Problem + ?Sized>(
    problem: &P,
    grid: &GridSpec,
    transformed: bool,
) -> Result<Vec<DirectionFieldSample>> {
    grid.validate()?;
    if problem.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: problem.dim() });
    }
    (0..grid.len())
        .map(|k| {
            let point = grid.point(k);
            let value = if transformed {
                problem
                    .eval_jacobian(&point)
                    .and_then(|j| LuFactor::new(&j))
                    .and_then(|lu| kernel::correction(problem, &point, &lu))
                    .map(|c| c.delta)
            } else {
                problem.eval_f(&point)
            };
            let (vector, singular) = match value {
                Ok(v) => ([v[0], v[1]], false),
                Err(Error::SingularSystem) | Err(Error::NonFiniteValue(_)) => ([0.0, 0.0], true),
                Err(e) => return Err(e),
            };
            let norm = linalg::norm2(&vector);
            let unit = if norm > 0.0 { [vector[0] / norm, vector[1] / norm] } else { [0.0, 0.0] };
            Ok(DirectionFieldSample { point, vector, unit, singular })
        })
        .collect()
}

/// One column of the four-mode comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub correct_fraction: f64,
    pub convergent_fraction: f64,
    pub wall_time: f64,
    pub relative_complexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub grid: GridSpec,
    /// Columns in the order AS, ANS, NANS, NAS.
    pub columns: Vec<ModeSummary>,
}

impl Table1 {
    pub fn column(&self, mode: Mode) -> Option<&ModeSummary> {
        self.columns.iter().find(|c| c.mode == mode)
    }
}

/// Scans the grid in all four modes single-threaded and reports correct
/// fractions and run times relative to NANS. One NANS scan is run first
/// and discarded to warm caches.
pub fn table1<P: Problem + Sync + ?Sized>(problem: &P, grid: &GridSpec, base_cfg: &SolverConfig) -> Result<Table1> {
    basin_scan(problem, grid, &base_cfg.with_mode(Mode::NANS), 1)?;
    let reports = Mode::ALL
        .iter()
        .map(|&m| basin_scan(problem, grid, &base_cfg.with_mode(m), 1))
        .collect::<Result<Vec<_>>>()?;
    let nans_time = reports
        .iter()
        .find(|r| r.mode == Mode::NANS)
        .map(|r| r.wall_time)
        .expect("NANS is scanned");
    let columns = reports
        .into_iter()
        .map(|r| ModeSummary {
            mode: r.mode,
            correct_fraction: r.correct_fraction,
            convergent_fraction: r.convergent_fraction,
            wall_time: r.wall_time,
            relative_complexity: if nans_time > 0.0 { r.wall_time / nans_time } else { 1.0 },
        })
        .collect();
    Ok(Table1 { grid: *grid, columns })
}
