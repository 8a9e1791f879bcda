//! Damped semismooth Newton iteration on the assembled residual.

use std::time::Instant;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{contract, Error, Result};
use crate::grid::{GridFunction, GridLayout};
use crate::scheme::{
    assemble_residual_at_level, mean_zero_shift, row_derivative, Discretization, ResidualField, SchemeParams, ShiftConstants,
};
use crate::transport::{cone_min_guess, recover_heights, DiracMeasure};

/// Generalized Jacobian `J` and right-hand side `−R`.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    /// `J x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    /// Diagonal entries, summing duplicates.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(r, c, v) in &self.triplets {
            if r == c {
                d[r] += v;
            }
        }
        d
    }
}

/// Derivative of every row at its frozen selection.
pub fn assemble_jacobian(u: &GridFunction, field: &ResidualField, disc: &Discretization) -> Result<SparseSystem> {
    let n = disc.len();
    let rows = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, node| {
            row_derivative(disc, &u.values, node, &field.selections[node], buf)?;
            Ok(buf.iter().map(|&(c, v)| (node, c, v)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseSystem {
        n,
        triplets: rows.into_iter().flatten().collect(),
        rhs: field.values.iter().map(|v| -v).collect(),
    })
}

/// Relative residual reached by [`sparse_solve`].
pub const LINEAR_TOL: f64 = 1e-10;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn fail(reason: String) -> Error {
    Error::LinearSolve { iteration: 0, reason }
}

/// Row-equilibrated LU factors of some Jacobian.
struct Factor {
    lu: Lu<usize, f64>,
    scale: Vec<f64>,
}

impl Factor {
    fn new(system: &SparseSystem) -> Result<Self> {
        let n = system.n;
        let mut scale = vec![0.0f64; n];
        for &(r, _, v) in &system.triplets {
            scale[r] = scale[r].max(v.abs());
        }
        if let Some(r) = scale.iter().position(|&s| s == 0.0) {
            return Err(fail(format!("row {r} is zero")));
        }
        scale.iter_mut().for_each(|s| *s = 1.0 / *s);
        let trips: Vec<Triplet<usize, usize, f64>> = system
            .triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v * scale[r]))
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips).map_err(|e| fail(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| fail(format!("{e:?}")))?;
        Ok(Self { lu, scale })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i] * self.scale[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

struct Check {
    residual: f64,
    backward: f64,
}

impl Check {
    fn new(system: &SparseSystem, a_norm: f64, x: &[f64]) -> Self {
        let ax = system.apply(x);
        let residual = max_abs(&system.rhs.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>());
        let backward = residual / (a_norm * max_abs(x) + max_abs(&system.rhs));
        Self { residual, backward }
    }

    fn accepted(&self, b_norm: f64) -> bool {
        // A solution that is backward stable to the tolerance is accepted as
        // well: its residual is then limited by rounding in `J x`.
        self.residual <= LINEAR_TOL * b_norm || self.backward <= LINEAR_TOL
    }
}

/// Direct solve with iterative refinement.
fn refine(system: &SparseSystem, factor: &Factor, a_norm: f64, b_norm: f64) -> Result<Vec<f64>> {
    let mut x = factor.solve(&system.rhs);
    let mut best: Option<(Check, Vec<f64>)> = None;
    for _ in 0..10 {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fail("factorization produced non-finite values".into()));
        }
        let check = Check::new(system, a_norm, &x);
        if check.residual <= LINEAR_TOL * b_norm {
            return Ok(x);
        }
        if best.as_ref().is_some_and(|(b, _)| check.residual >= b.residual) {
            // Refinement has reached the rounding floor.
            break;
        }
        let ax = system.apply(&x);
        let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        best = Some((check, x.clone()));
        let dx = factor.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
    }
    let (check, x) = best.expect("at least one refinement step");
    if check.accepted(b_norm) {
        Ok(x)
    } else {
        Err(fail(format!(
            "relative residual {:e} (backward error {:e}) after refinement",
            check.residual / b_norm,
            check.backward
        )))
    }
}

/// Solves `J δ = rhs` by sparse LU with iterative refinement.
pub fn sparse_solve(system: &SparseSystem) -> Result<Vec<f64>> {
    let n = system.n;
    if system.rhs.len() != n {
        return Err(contract("right-hand side length does not match the system"));
    }
    let b_norm = max_abs(&system.rhs);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let a_norm = {
        let mut rows = vec![0.0; n];
        for &(r, _, v) in &system.triplets {
            rows[r] += f64::abs(v);
        }
        max_abs(&rows)
    };
    let factor = Factor::new(system)?;
    refine(system, &factor, a_norm, b_norm)
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Coarse-to-fine continuation; `None` turns it on for three or more Diracs.
    pub continuation: Option<bool>,
    /// Smallest grid considered for continuation.
    pub coarsest: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            max_halvings: 30,
            continuation: None,
            coarsest: 17,
        }
    }
}

/// One Newton run on a single grid.
#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub n_x: usize,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub damping_history: Vec<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    /// Mean-zero-balanced potential.
    pub potential: GridFunction,
    /// Newton iterations on the finest grid.
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub damping_history: Vec<f64>,
    /// Min-normalised plane heights `u(d_k)`.
    pub heights: Vec<f64>,
    pub wall_time: f64,
    pub shift: ShiftConstants,
    /// Coarse levels first, finest last.
    pub levels: Vec<LevelReport>,
}

/// Cone-min guess `min_k ‖x − d_k‖`.
pub fn default_initialization(disc: &Discretization) -> GridFunction {
    cone_min_guess(*disc.grid.layout(), &disc.diracs)
}

/// Newton iteration from `initial`; the result is not yet shifted.
///
/// The solution of the augmented system sits at a level of order `1/h²`.
/// The iterate is kept as a grid function plus a scalar level that absorbs
/// the mean of every Newton step.
pub fn newton_iterate(
    disc: &Discretization,
    initial: GridFunction,
    options: &NewtonOptions,
) -> Result<(GridFunction, LevelReport)> {
    let start = Instant::now();
    if initial.values.iter().any(|v| !v.is_finite()) {
        return Err(contract("initial guess is not finite"));
    }
    let mut u = initial;
    let mut level = 0.0;
    let mut field = assemble_residual_at_level(&u, level, disc)?;
    let mut norm = field.max_norm();
    let mut report = LevelReport {
        n_x: disc.params.n_x,
        iterations: 0,
        residual_history: vec![norm],
        damping_history: Vec::new(),
        seconds: 0.0,
    };
    while norm > options.tolerance {
        if report.iterations >= options.max_iterations {
            return Err(Error::NonConvergence {
                iterations: report.iterations,
                error: norm,
                detail: report.residual_history,
            });
        }
        let iteration = report.iterations + 1;
        let system = assemble_jacobian(&u, &field, disc)?;
        let mut delta = sparse_solve(&system).map_err(|e| match e {
            Error::LinearSolve { reason, .. } => Error::LinearSolve { iteration, reason },
            other => other,
        })?;
        let mean = delta.iter().sum::<f64>() / delta.len() as f64;
        delta.iter_mut().for_each(|d| *d -= mean);
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial = GridFunction {
                layout: u.layout,
                values: u.values.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect(),
            };
            let trial_level = level + lambda * mean;
            let trial_field = assemble_residual_at_level(&trial, trial_level, disc)?;
            let trial_norm = trial_field.max_norm();
            if trial_norm < norm {
                u = trial;
                level = trial_level;
                field = trial_field;
                norm = trial_norm;
                break;
            }
            halvings += 1;
            if halvings >= options.max_halvings {
                return Err(Error::Stagnation {
                    iteration,
                    residual: norm,
                });
            }
            lambda *= 0.5;
        }
        report.iterations = iteration;
        report.residual_history.push(norm);
        report.damping_history.push(lambda);
    }
    report.seconds = start.elapsed().as_secs_f64();
    u.values.iter_mut().for_each(|v| *v += level);
    Ok((u, report))
}

/// Runs Newton from `initial` and applies the mean-zero shift.
pub fn newton_solve(disc: &Discretization, initial: GridFunction, options: &NewtonOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let (v, level) = newton_iterate(disc, initial, options)?;
    finish(disc, v, vec![level], start)
}

fn finish(disc: &Discretization, v: GridFunction, levels: Vec<LevelReport>, start: Instant) -> Result<SolveReport> {
    let (potential, shift) = mean_zero_shift(&v, disc)?;
    let heights = recover_heights(&potential, &disc.diracs)?;
    let last = levels.last().expect("at least one level");
    Ok(SolveReport {
        iterations: last.iterations,
        residual_history: last.residual_history.clone(),
        damping_history: last.damping_history.clone(),
        heights,
        potential,
        wall_time: start.elapsed().as_secs_f64(),
        shift,
        levels,
    })
}

/// Grid sizes `n_c, 2n_c − 1, …, n_x` used for continuation; the coarsest
/// is the smallest level of at least `coarsest` nodes holding every Dirac
/// on a distinct interior node.
pub fn continuation_levels(n_x: usize, diracs: &DiracMeasure, coarsest: usize) -> Vec<usize> {
    let mut levels = vec![n_x];
    let mut n = n_x;
    while n % 2 == 1 && n.div_ceil(2) >= coarsest.max(5) {
        let m = n.div_ceil(2);
        if crate::grid::Grid::new(m, 1, diracs.locations()).is_err() {
            break;
        }
        levels.push(m);
        n = m;
    }
    levels.reverse();
    levels
}

/// Interpolates a coarse potential onto a finer layout.
pub fn prolongate(coarse: &GridFunction, fine: GridLayout) -> GridFunction {
    GridFunction::from_fn(fine, |x| coarse.interpolate(x))
}

/// Full solve: default initialization, optional continuation, Newton, shift.
pub fn solve(params: &SchemeParams, diracs: &DiracMeasure, options: &NewtonOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let continuation = options.continuation.unwrap_or(diracs.len() >= 3);
    let sizes = if continuation {
        continuation_levels(params.n_x, diracs, options.coarsest)
    } else {
        vec![params.n_x]
    };
    let mut levels = Vec::new();
    let mut previous: Option<GridFunction> = None;
    let mut last = None;
    for &n in &sizes {
        let mut p = params.clone();
        p.n_x = n;
        if n != params.n_x {
            // Coarse levels use their own default width and fan.
            p.width = None;
            p.n_y = None;
        }
        let disc = Discretization::new(p, diracs.clone())?;
        let init = match &previous {
            Some(c) => prolongate(c, *disc.grid.layout()),
            None => default_initialization(&disc),
        };
        let (v, level) = newton_iterate(&disc, init, options)?;
        levels.push(level);
        previous = Some(mean_zero_shift(&v, &disc)?.0);
        last = Some((disc, v));
    }
    let (disc, v) = last.expect("at least one level");
    finish(&disc, v, levels, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::scheme::{assemble_residual, residual_row};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn dense_system(n: usize, entries: &[(usize, usize, f64)], rhs: Vec<f64>) -> SparseSystem {
        SparseSystem {
            n,
            triplets: entries.to_vec(),
            rhs,
        }
    }

    #[test]
    fn solves_small_systems() {
        let id = dense_system(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)], vec![1.0, -2.0, 3.0]);
        assert_eq!(sparse_solve(&id).unwrap(), vec![1.0, -2.0, 3.0]);
        let two = dense_system(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)], vec![1.0, 0.0]);
        let x = sparse_solve(&two).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-14 && (x[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn solves_random_diagonally_dominant_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 500;
        let mut t = Vec::new();
        for r in 0..n {
            let mut off = 0.0;
            for _ in 0..6 {
                let c = rng.gen_range(0..n);
                if c != r {
                    let v = rng.gen_range(-1.0..1.0);
                    off += f64::abs(v);
                    t.push((r, c, v));
                }
            }
            t.push((r, r, off + rng.gen_range(0.1..1.0)));
        }
        let sys = dense_system(n, &t, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let x = sparse_solve(&sys).unwrap();
        let ax = sys.apply(&x);
        let res = sys.rhs.iter().zip(&ax).map(|(b, y)| (b - y).abs()).fold(0.0, f64::max);
        assert!(res <= 1e-10 * max_abs(&sys.rhs));
    }

    #[test]
    fn singular_system_is_reported() {
        let sys = dense_system(2, &[(0, 0, 1.0), (1, 0, 1.0)], vec![1.0, 1.0]);
        assert!(matches!(sparse_solve(&sys), Err(Error::LinearSolve { .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let diracs = DiracMeasure::new(vec![Point2::new(-0.5, 0.0), Point2::new(0.5, 0.25)], vec![PI / 2.0; 2]).unwrap();
        let disc = Discretization::new(SchemeParams::new(17), diracs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = default_initialization(&disc);
        u.values.iter_mut().for_each(|v| *v += 0.02 * rng.gen::<f64>() + 0.3 * *v * *v);
        let field = assemble_residual(&u, &disc).unwrap();
        let sys = assemble_jacobian(&u, &field, &disc).unwrap();
        assert!(sys.diagonal().iter().all(|&d| d > 0.0));
        let dir: Vec<f64> = (0..disc.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jd = sys.apply(&dir);
        let eps = 1e-7;
        let moved: Vec<f64> = u.values.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
        let mut checked = 0;
        for node in 0..disc.len() {
            let (r1, s1) = residual_row(&disc, &moved, node).unwrap();
            let same = match (&s1, &field.selections[node]) {
                (crate::scheme::RowSelection::Dirac(_), crate::scheme::RowSelection::Dirac(_)) => true,
                (a, b) => a == b,
            };
            if !same {
                continue;
            }
            let fd = (r1 - field.values[node]) / eps;
            assert!((fd - jd[node]).abs() <= 1e-4 * (1.0 + jd[node].abs()), "node {node}: {fd} vs {}", jd[node]);
            checked += 1;
        }
        assert!(checked > disc.len() / 2);
    }

    #[test]
    fn continuation_levels_respect_dirac_positions() {
        let five = DiracMeasure::new(
            vec![Point2::new(0.5, 0.5), Point2::new(-0.5, -0.5)],
            vec![PI / 2.0; 2],
        )
        .unwrap();
        assert_eq!(continuation_levels(129, &five, 17), vec![17, 33, 65, 129]);
        let fine = DiracMeasure::new(vec![Point2::new(0.75, 0.6875)], vec![PI]).unwrap();
        assert_eq!(continuation_levels(129, &fine, 17), vec![33, 65, 129]);
    }
}
