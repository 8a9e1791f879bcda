//! Exact semi-discrete reference solver: sequential lifting of the planes of
//! a max-of-planes potential until every Laguerre cell has its mass.

use serde::Serialize;

use crate::error::{contract, Error, Result};
use crate::geometry::{cell_areas, laguerre_cell};
use crate::newton::SolveReport;
use crate::transport::{normalize_min_zero, DiracMeasure};

/// Default stopping tolerance on the largest cell-area error.
pub const ORACLE_TOL: f64 = 1e-10;

/// Half-width of the bisection bracket around the current height.
const BRACKET: f64 = 4.0;

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    /// Heights `v_k`, normalized to minimum zero.
    pub heights: Vec<f64>,
    /// `|C_k| − α_k` at the returned heights.
    pub area_errors: Vec<f64>,
    pub sweeps: usize,
}

impl OracleResult {
    pub fn max_area_error(&self) -> f64 {
        self.area_errors.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

fn cell_area(diracs: &DiracMeasure, heights: &[f64], k: usize) -> Result<f64> {
    Ok(laguerre_cell(diracs.locations(), heights, k)?.area())
}

/// Height of plane `k` giving its cell area `α_k`, the others held fixed.
///
/// The area is nonincreasing in `v_k`, so plain bisection applies.
fn lift(diracs: &DiracMeasure, heights: &mut [f64], k: usize) -> Result<()> {
    let target = diracs.weights()[k];
    let mut lo = heights[k] - BRACKET;
    let mut hi = heights[k] + BRACKET;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        heights[k] = mid;
        let area = cell_area(diracs, heights, k)?;
        if area == target {
            return Ok(());
        }
        if area > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    heights[k] = 0.5 * (lo + hi);
    Ok(())
}

fn area_errors(diracs: &DiracMeasure, heights: &[f64]) -> Result<Vec<f64>> {
    Ok(cell_areas(diracs.locations(), heights)?
        .iter()
        .zip(diracs.weights())
        .map(|(a, w)| a - w)
        .collect())
}

/// Pogorelov heights for a Dirac measure on the unit disk.
///
/// Sweeps over the planes, fitting each cell's area by bisection, and
/// renormalizes to minimum height zero after every sweep. Fails with
/// [`Error::NonConvergence`] after `10 K²` sweeps.
pub fn pogorelov_solve(diracs: &DiracMeasure, tolerance: f64) -> Result<OracleResult> {
    let k = diracs.len();
    solve_with_limit(diracs, tolerance, 10 * k * k)
}

fn solve_with_limit(diracs: &DiracMeasure, tolerance: f64, limit: usize) -> Result<OracleResult> {
    if !(tolerance > 0.0) {
        return Err(contract("oracle tolerance must be positive"));
    }
    let mass = diracs.total_mass();
    if (mass - std::f64::consts::PI).abs() > crate::transport::MASS_TOL {
        return Err(contract(format!("total mass {mass} differs from the disk area")));
    }
    let k = diracs.len();
    let mut heights = vec![0.0; k];
    let mut errors = area_errors(diracs, &heights)?;
    let max = |e: &[f64]| e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut sweeps = 0;
    while max(&errors) > tolerance {
        if sweeps >= limit {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                error: max(&errors),
                detail: errors,
            });
        }
        for j in 0..k {
            lift(diracs, &mut heights, j)?;
        }
        normalize_min_zero(&mut heights);
        errors = area_errors(diracs, &heights)?;
        sweeps += 1;
    }
    Ok(OracleResult {
        heights,
        area_errors: errors,
        sweeps,
    })
}

/// Scheme heights measured against the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    /// `max_k |u(d_k) − v_k|` after removing the mean difference.
    pub max_height_error: f64,
    pub height_errors: Vec<f64>,
    /// `|C_k| − α_k` for the cells built from the scheme's heights.
    pub area_errors: Vec<f64>,
    pub area_linf: f64,
    /// Root of the summed squared cell-area errors.
    pub area_rss: f64,
}

/// Exact-geometry cell-area errors of a set of heights.
pub fn area_metrics(diracs: &DiracMeasure, heights: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let errors = area_errors(diracs, heights)?;
    let linf = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let rss = errors.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok((errors, linf, rss))
}

/// Height differences after removing their mean, so that a constant shift
/// between the two potentials does not count as error.
pub fn aligned_height_errors(computed: &[f64], exact: &[f64]) -> Result<Vec<f64>> {
    if computed.len() != exact.len() || computed.is_empty() {
        return Err(contract("height vectors differ in length or are empty"));
    }
    let diff: Vec<f64> = computed.iter().zip(exact).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    Ok(diff.iter().map(|d| d - mean).collect())
}

pub fn oracle_vs_scheme(diracs: &DiracMeasure, oracle: &OracleResult, report: &SolveReport) -> Result<OracleComparison> {
    if oracle.heights.len() != diracs.len() || report.heights.len() != diracs.len() {
        return Err(contract("oracle and scheme solved different measures"));
    }
    let height_errors = aligned_height_errors(&report.heights, &oracle.heights)?;
    let (area_errors, area_linf, area_rss) = area_metrics(diracs, &report.heights)?;
    Ok(OracleComparison {
        max_height_error: height_errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        height_errors,
        area_errors,
        area_linf,
        area_rss,
    })
}
