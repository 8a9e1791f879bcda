//! Experiment runner: problem catalogue, error metrics, convergence fits and
//! on-disk artifacts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cell_areas, in_cell, Point2};
use crate::grid::{GridFunction, GridLayout};
use crate::newton::{solve, NewtonOptions, SolveReport};
use crate::oracle::{aligned_height_errors, area_metrics, pogorelov_solve, OracleResult, ORACLE_TOL};
use crate::scheme::{SchemeMode, SchemeParams};
use crate::subgradient::LowerBoundRule;
use crate::transport::DiracMeasure;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "POGORELOV_THREADS";

/// Spacing of the lattice random Diracs are drawn from.
pub const RANDOM_LATTICE: f64 = 1.0 / 32.0;
/// Random Diracs lie in `[−RANDOM_HALF_WIDTH, RANDOM_HALF_WIDTH]²`.
pub const RANDOM_HALF_WIDTH: f64 = 0.7;

/// Sizes the rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    OneDirac,
    TwoDirac,
    ThreeDirac,
    FiveDirac,
    TenDirac,
    RandomK { count: usize, seed: u64 },
    Custom(PathBuf),
}

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

impl Problem {
    pub fn label(&self) -> String {
        match self {
            Problem::OneDirac => "one_dirac".into(),
            Problem::TwoDirac => "two_dirac".into(),
            Problem::ThreeDirac => "three_dirac".into(),
            Problem::FiveDirac => "five_dirac".into(),
            Problem::TenDirac => "ten_dirac".into(),
            Problem::RandomK { count, seed } => format!("random_{count}_{seed}"),
            Problem::Custom(path) => format!(
                "custom_{}",
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("measure")
            ),
        }
    }

    pub fn measure(&self) -> Result<DiracMeasure> {
        match self {
            Problem::OneDirac => DiracMeasure::new(vec![Point2::ORIGIN], vec![PI]),
            Problem::TwoDirac => DiracMeasure::new(vec![p(-0.5, 0.0), p(0.5, 0.0)], vec![PI / 2.0; 2]),
            Problem::ThreeDirac | Problem::FiveDirac | Problem::TenDirac => {
                // Weights are the exact cell areas of the stated potential.
                let sites = self.sites();
                let heights = self.stated_heights().expect("stated for this problem");
                let weights = cell_areas(&sites, &heights)?;
                DiracMeasure::new(sites, weights)
            }
            Problem::RandomK { count, seed } => random_measure(*count, *seed),
            Problem::Custom(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    fn sites(&self) -> Vec<Point2> {
        match self {
            Problem::ThreeDirac => vec![p(-0.5, -0.5), p(0.5, -0.5), p(0.5, 0.5)],
            Problem::FiveDirac => vec![p(0.5, 0.5), p(0.5, -0.5), p(-0.5, 0.5), p(-0.5, -0.5), p(0.0, 0.0)],
            Problem::TenDirac => vec![
                p(0.5, 0.5),
                p(0.5, -0.5),
                p(-0.5, 0.5),
                p(-0.5, -0.5),
                p(0.25, 0.25),
                p(0.25, -0.25),
                p(-0.25, 0.25),
                p(-0.25, -0.25),
                p(0.75, 0.6875),
                p(-0.75, -0.75),
            ],
            _ => Vec::new(),
        }
    }

    /// Closed-form potential, up to a constant, where one is known.
    pub fn exact_potential(&self) -> Option<fn(Point2) -> f64> {
        match self {
            Problem::OneDirac => Some(|x: Point2| x.norm()),
            Problem::TwoDirac => Some(|x: Point2| {
                if x.x.abs() > 0.5 {
                    (x - p(-0.5, 0.0)).norm().min((x - p(0.5, 0.0)).norm())
                } else {
                    x.y.abs()
                }
            }),
            _ => None,
        }
    }

    /// Potential values at the Diracs stated alongside the configuration.
    pub fn stated_heights(&self) -> Option<Vec<f64>> {
        match self {
            Problem::ThreeDirac => Some(vec![1.0; 3]),
            Problem::FiveDirac => Some(vec![1.0, 1.0, 1.0, 0.8, 0.8]),
            Problem::TenDirac => Some(vec![1.0, 1.0, 1.0, 1.0, 0.85, 0.85, 0.9, 0.9, 1.2, 1.2]),
            _ => None,
        }
    }
}

impl FromStr for Problem {
    type Err = Error;

    /// `one_dirac`, …, `ten_dirac`, `random_k:<count>:<seed>` or `custom:<file>`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "one_dirac" => Problem::OneDirac,
            "two_dirac" => Problem::TwoDirac,
            "three_dirac" => Problem::ThreeDirac,
            "five_dirac" => Problem::FiveDirac,
            "ten_dirac" => Problem::TenDirac,
            _ => {
                if let Some(rest) = s.strip_prefix("custom:") {
                    Problem::Custom(PathBuf::from(rest))
                } else if let Some(rest) = s.strip_prefix("random_k:") {
                    let (count, seed) = rest
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("expected random_k:<count>:<seed>, got {s}")))?;
                    Problem::RandomK {
                        count: count.parse().map_err(|_| Error::Config(format!("bad count in {s}")))?,
                        seed: seed.parse().map_err(|_| Error::Config(format!("bad seed in {s}")))?,
                    }
                } else {
                    return Err(Error::Config(format!("unknown problem {s}")));
                }
            }
        })
    }
}

/// `count` distinct points of the `1/32` lattice in `[−0.7, 0.7]²`, equal weights.
pub fn random_measure(count: usize, seed: u64) -> Result<DiracMeasure> {
    let half = (RANDOM_HALF_WIDTH / RANDOM_LATTICE).floor() as i64;
    let side = (2 * half + 1) as usize;
    if count == 0 || count > side * side {
        return Err(Error::Config(format!(
            "random_k needs between 1 and {} Diracs",
            side * side
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations = sample(&mut rng, side * side, count)
        .into_iter()
        .map(|m| {
            let i = (m % side) as i64 - half;
            let j = (m / side) as i64 - half;
            p(i as f64 * RANDOM_LATTICE, j as f64 * RANDOM_LATTICE)
        })
        .collect();
    DiracMeasure::new(locations, vec![PI / count as f64; count])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Aleksandrov,
    #[serde(alias = "viscosity")]
    ViscosityBaseline,
}

impl Mode {
    pub fn scheme_mode(self) -> SchemeMode {
        match self {
            Mode::Aleksandrov => SchemeMode::Aleksandrov,
            Mode::ViscosityBaseline => SchemeMode::ViscosityBaseline,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Aleksandrov => "aleksandrov",
            Mode::ViscosityBaseline => "viscosity_baseline",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aleksandrov" => Ok(Mode::Aleksandrov),
            "viscosity" | "viscosity_baseline" => Ok(Mode::ViscosityBaseline),
            _ => Err(Error::Config(format!("unknown mode {s}"))),
        }
    }
}

/// Newton and discretization settings shared by every grid size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub continuation: Option<bool>,
    pub coarsest: usize,
    pub lower_bound: LowerBoundRule,
    pub width: Option<usize>,
    pub n_y: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let n = NewtonOptions::default();
        Self {
            tolerance: n.tolerance,
            max_iterations: n.max_iterations,
            max_halvings: n.max_halvings,
            continuation: n.continuation,
            coarsest: n.coarsest,
            lower_bound: LowerBoundRule::default(),
            width: None,
            n_y: None,
        }
    }
}

impl SolverSettings {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            max_halvings: self.max_halvings,
            continuation: self.continuation,
            coarsest: self.coarsest,
        }
    }

    pub fn scheme(&self, n_x: usize, mode: Mode) -> SchemeParams {
        let mut params = SchemeParams::new(n_x).with_mode(mode.scheme_mode());
        params.lower_bound = self.lower_bound;
        params.width = self.width;
        params.n_y = self.n_y;
        params
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Directory receiving the artifacts; nothing is written when unset.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, sizes: Vec<usize>, mode: Mode) -> Self {
        Self {
            problem,
            sizes,
            mode,
            solver: SolverSettings::default(),
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the sizes and that every Dirac sits on a node of every grid.
    pub fn validate(&self) -> Result<DiracMeasure> {
        if self.sizes.is_empty() {
            return Err(Error::Config("no grid sizes given".into()));
        }
        let s = &self.solver;
        if !(s.tolerance > 0.0) || s.max_iterations == 0 || s.max_halvings == 0 {
            return Err(Error::Config("solver tolerance and limits must be positive".into()));
        }
        let diracs = self.problem.measure()?;
        for &n in &self.sizes {
            if n < 5 || n % 2 == 0 {
                return Err(Error::Config(format!("grid size {n} must be odd and at least 5")));
            }
            let layout = GridLayout::new(n, 1).map_err(|e| Error::Config(e.to_string()))?;
            for (k, &d) in diracs.locations().iter().enumerate() {
                let node = layout.node_at(d).map_err(|_| {
                    Error::Config(format!("Dirac {k} at ({}, {}) is not a node of the {n} grid", d.x, d.y))
                })?;
                if !layout.in_square(node) {
                    return Err(Error::Config(format!("Dirac {k} lies outside the square")));
                }
            }
        }
        Ok(diracs)
    }
}

/// Max and discrete `L²` difference to `exact` over the square, both shifted
/// to mean zero first.
pub fn potential_errors(u: &GridFunction, exact: impl Fn(Point2) -> f64) -> (f64, f64) {
    let l = u.layout;
    let nodes: Vec<usize> = l.square_nodes().collect();
    let n = nodes.len() as f64;
    let mu = nodes.iter().map(|&k| u.values[k]).sum::<f64>() / n;
    let me = nodes.iter().map(|&k| exact(l.coord(k))).sum::<f64>() / n;
    let (max, sq) = nodes.iter().fold((0.0f64, 0.0), |(m, s), &k| {
        let e = (u.values[k] - mu) - (exact(l.coord(k)) - me);
        (m.max(e.abs()), s + e * e)
    });
    (max, (sq * l.h * l.h).sqrt())
}

/// Cell labels on the square nodes of `u`'s grid, row by row from `y = −1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CellRaster {
    pub n_x: usize,
    /// `k + 1` for nodes of the unit disk sent to Dirac `k`, `0` outside.
    pub labels: Vec<u32>,
}

impl CellRaster {
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.labels[j * self.n_x + i]
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.labels.chunks(self.n_x) {
            let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Labels every grid node in the closed unit disk by the cell of the
/// max-of-planes potential built from `heights` that contains it.
pub fn cell_raster(heights: &[f64], diracs: &DiracMeasure, layout: GridLayout) -> Result<CellRaster> {
    if heights.len() != diracs.len() {
        return Err(crate::error::contract("one height per Dirac required"));
    }
    let sites = diracs.locations();
    let mut labels = Vec::with_capacity(layout.n_x * layout.n_x);
    for j in 0..layout.n_x {
        for i in 0..layout.n_x {
            let y = p(layout.coord_1d(i + layout.pad), layout.coord_1d(j + layout.pad));
            let label = if y.norm_sq() <= 1.0 + 1e-12 {
                // Ties go to the smallest index.
                (0..sites.len()).find(|&k| in_cell(sites, heights, k, y)).map_or(0, |k| k as u32 + 1)
            } else {
                0
            };
            labels.push(label);
        }
    }
    Ok(CellRaster {
        n_x: layout.n_x,
        labels,
    })
}

/// Square-node values, row by row from `y = −1`.
pub fn potential_csv(u: &GridFunction) -> String {
    let l = u.layout;
    let mut out = String::new();
    for j in 0..l.n_x {
        let row: Vec<String> = (0..l.n_x)
            .map(|i| format!("{:.17e}", u.values[l.index(i + l.pad, j + l.pad)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceFit {
    /// Least-squares slope of `log error` against `log h`.
    pub order: f64,
    pub r_squared: f64,
    /// Standard error of the slope; zero for exactly three collinear points.
    pub std_error: f64,
}

/// Log-log least-squares fit of `error ≈ C h^order`; `None` below three
/// usable points.
pub fn convergence_fit(points: &[(f64, f64)]) -> Option<ConvergenceFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let order = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - order * (p.0 - mx)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let std_error = (sse / (n - 2.0) / sxx).sqrt();
    Some(ConvergenceFit {
        order,
        r_squared,
        std_error,
    })
}

/// Metrics of one grid size; fields that do not apply to the problem are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n_x: usize,
    pub h: f64,
    /// Max error vs the closed-form potential.
    pub potential_max: Option<f64>,
    pub potential_l2: Option<f64>,
    /// Max height error vs the oracle.
    pub height_max: Option<f64>,
    /// Cell-area errors of the recovered heights.
    pub area_linf: Option<f64>,
    pub area_rss: Option<f64>,
    pub iterations: Option<usize>,
    /// Wall-clock seconds; kept out of the CSV so tables are reproducible.
    pub runtime: Option<f64>,
    pub failure: Option<String>,
}

impl ErrorRow {
    /// Headline error: potential, else height, else cell-area error.
    pub fn max_error(&self) -> Option<f64> {
        self.potential_max.or(self.height_max).or(self.area_linf)
    }

    pub fn l2_error(&self) -> Option<f64> {
        self.potential_l2.or(self.area_rss)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorTable {
    pub problem: String,
    pub mode: Mode,
    pub rows: Vec<ErrorRow>,
    pub fit: Option<ConvergenceFit>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

impl ErrorTable {
    pub fn new(problem: String, mode: Mode, rows: Vec<ErrorRow>) -> Self {
        let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.max_error().map(|e| (r.h, e))).collect();
        Self {
            problem,
            mode,
            fit: convergence_fit(&points),
            rows,
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n_x,h,max_error,l2_error,potential_max,potential_l2,height_max,area_linf,area_rss,iterations,failure\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6e},{},{},{},{},{},{},{},{},{}",
                r.n_x,
                r.h,
                cell(r.max_error()),
                cell(r.l2_error()),
                cell(r.potential_max),
                cell(r.potential_l2),
                cell(r.height_max),
                cell(r.area_linf),
                cell(r.area_rss),
                r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        match &self.fit {
            Some(f) => {
                let _ = writeln!(out, "# order {:.4} r2 {:.4} se {:.4}", f.order, f.r_squared, f.std_error);
            }
            None => out.push_str("# order unavailable\n"),
        }
        out
    }

    /// Human-readable table with runtimes.
    pub fn render(&self) -> String {
        let mut out = format!("{} ({})\n", self.problem, self.mode.label());
        let _ = writeln!(out, "{:>6} {:>12} {:>12} {:>6} {:>9}", "N_X", "max error", "l2 error", "its", "seconds");
        for r in &self.rows {
            let _ = write!(
                out,
                "{:>6} {:>12} {:>12} {:>6} {:>9}",
                r.n_x,
                cell(r.max_error()),
                cell(r.l2_error()),
                r.iterations.map(|i| i.to_string()).unwrap_or_else(|| "-".into()),
                r.runtime.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()),
            );
            if let Some(f) = &r.failure {
                let _ = write!(out, "  FAILED: {f}");
            }
            out.push('\n');
        }
        match &self.fit {
            Some(f) => {
                let _ = writeln!(out, "order {:.3} (r² {:.3}, se {:.3})", f.order, f.r_squared, f.std_error);
            }
            None => out.push_str("order unavailable\n"),
        }
        out
    }
}

/// Solve report and metrics for one grid size.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub row: ErrorRow,
    #[serde(skip)]
    pub report: Option<SolveReport>,
}

/// Metrics of a finished solve.
pub fn measure_row(
    problem: &Problem,
    diracs: &DiracMeasure,
    oracle: Option<&OracleResult>,
    report: &SolveReport,
) -> Result<ErrorRow> {
    let layout = report.potential.layout;
    let mut row = ErrorRow {
        n_x: layout.n_x,
        h: layout.h,
        iterations: Some(report.iterations),
        runtime: Some(report.wall_time),
        ..Default::default()
    };
    if let Some(exact) = problem.exact_potential() {
        let (max, l2) = potential_errors(&report.potential, exact);
        row.potential_max = Some(max);
        row.potential_l2 = Some(l2);
    }
    if let Some(o) = oracle {
        let e = aligned_height_errors(&report.heights, &o.heights)?;
        row.height_max = Some(e.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    let (_, linf, rss) = area_metrics(diracs, &report.heights)?;
    row.area_linf = Some(linf);
    row.area_rss = Some(rss);
    Ok(row)
}

/// Everything produced by [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub table: ErrorTable,
    pub diracs: DiracMeasure,
    pub oracle: Option<OracleResult>,
    pub runs: Vec<RunRecord>,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    config: &'a ExperimentConfig,
    diracs: &'a DiracMeasure,
    oracle: Option<&'a OracleResult>,
    rows: &'a [ErrorRow],
    fit: Option<ConvergenceFit>,
    solves: Vec<Option<SolveSummary<'a>>>,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    heights: &'a [f64],
    residual_history: &'a [f64],
    damping_history: &'a [f64],
    shift: crate::scheme::ShiftConstants,
    levels: &'a [crate::newton::LevelReport],
}

/// Runs every grid size of `config`; a failed solve is recorded in its row
/// and the remaining sizes still run. Artifacts go to `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let diracs = config.validate()?;
    let problem = &config.problem;
    let oracle = if problem.exact_potential().is_none() {
        Some(pogorelov_solve(&diracs, ORACLE_TOL)?)
    } else {
        None
    };
    let newton = config.solver.newton();
    let mut runs = Vec::new();
    for &n in &config.sizes {
        let params = config.solver.scheme(n, config.mode);
        let record = match solve(&params, &diracs, &newton)
            .and_then(|r| measure_row(problem, &diracs, oracle.as_ref(), &r).map(|row| (row, r)))
        {
            Ok((row, report)) => RunRecord {
                row,
                report: Some(report),
            },
            Err(e) => RunRecord {
                row: ErrorRow {
                    n_x: n,
                    h: 2.0 / (n - 1) as f64,
                    failure: Some(e.to_string()),
                    ..Default::default()
                },
                report: None,
            },
        };
        runs.push(record);
    }
    let table = ErrorTable::new(problem.label(), config.mode, runs.iter().map(|r| r.row.clone()).collect());
    let outcome = ExperimentOutcome {
        table,
        diracs,
        oracle,
        runs,
    };
    if let Some(dir) = &config.output {
        write_artifacts(config, &outcome, dir)?;
    }
    Ok(outcome)
}

fn write_artifacts(config: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("table.csv"), outcome.table.to_csv())?;
    for run in &outcome.runs {
        if let Some(report) = &run.report {
            let n = run.row.n_x;
            fs::write(dir.join(format!("potential_{n}.csv")), potential_csv(&report.potential))?;
            let raster = cell_raster(&report.heights, &outcome.diracs, report.potential.layout)?;
            fs::write(dir.join(format!("cells_{n}.csv")), raster.to_csv())?;
        }
    }
    let meta = RunMetadata {
        config,
        diracs: &outcome.diracs,
        oracle: outcome.oracle.as_ref(),
        rows: &outcome.table.rows,
        fit: outcome.table.fit,
        solves: outcome
            .runs
            .iter()
            .map(|r| {
                r.report.as_ref().map(|s| SolveSummary {
                    heights: &s.heights,
                    residual_history: &s.residual_history,
                    damping_history: &s.damping_history,
                    shift: s.shift,
                    levels: &s.levels,
                })
            })
            .collect(),
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
