//! Measures, max-of-planes potentials, the transport map and discrete
//! Legendre-Fenchel duality checks.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::Point2;
use crate::grid::{GridFunction, GridLayout};

/// Tolerance on `Σα_k` against the target's mass.
pub const MASS_TOL: f64 = 1e-8;

/// Weighted sum of Dirac masses `Σ α_k δ_{d_k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiracMeasure {
    locations: Vec<Point2>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    locations: Vec<Point2>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiracMeasure {
    type Error = crate::error::Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        Self::new(raw.locations, raw.weights)
    }
}

impl DiracMeasure {
    /// Measure balancing the unit disk (`Σα_k = π`).
    pub fn new(locations: Vec<Point2>, weights: Vec<f64>) -> Result<Self> {
        Self::with_mass(locations, weights, PI)
    }

    /// Measure balancing a target of the given mass.
    pub fn with_mass(locations: Vec<Point2>, weights: Vec<f64>, mass: f64) -> Result<Self> {
        if locations.is_empty() || locations.len() != weights.len() {
            return Err(contract(format!(
                "{} locations but {} weights",
                locations.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(contract("Dirac weights must be positive and finite"));
        }
        for (k, p) in locations.iter().enumerate() {
            if !p.is_finite() || p.x.abs() > 1.0 || p.y.abs() > 1.0 {
                return Err(contract(format!(
                    "Dirac {k} at ({}, {}) lies outside the computational square",
                    p.x, p.y
                )));
            }
            if locations[..k].iter().any(|q| q == p) {
                return Err(contract(format!("Dirac {k} duplicates an earlier location")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - mass).abs() > MASS_TOL {
            return Err(contract(format!(
                "weights sum to {total}, target mass is {mass}"
            )));
        }
        Ok(Self { locations, weights })
    }

    /// Rescales the weights so they sum to `π`.
    pub fn normalized(locations: Vec<Point2>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        let scaled = weights.iter().map(|w| w * PI / total).collect();
        Self::new(locations, scaled)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point2] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `φ(y) = max_k { y·d_k − v_k }`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxOfPlanesPotential {
    pub sites: Vec<Point2>,
    pub heights: Vec<f64>,
}

impl MaxOfPlanesPotential {
    pub fn new(sites: Vec<Point2>, heights: Vec<f64>) -> Result<Self> {
        if sites.is_empty() || sites.len() != heights.len() {
            return Err(contract("potential needs one height per site"));
        }
        if heights.iter().any(|v| !v.is_finite()) {
            return Err(contract("heights must be finite"));
        }
        Ok(Self { sites, heights })
    }

    pub fn from_measure(diracs: &DiracMeasure, heights: Vec<f64>) -> Result<Self> {
        Self::new(diracs.locations().to_vec(), heights)
    }

    pub fn eval(&self, y: Point2) -> f64 {
        eval_potential(self, y).0
    }
}

/// `ψ(x) = min_k { v_k + ‖x − d_k‖ }`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeMinFunction {
    pub sites: Vec<Point2>,
    pub heights: Vec<f64>,
}

impl ConeMinFunction {
    pub fn new(sites: Vec<Point2>, heights: Vec<f64>) -> Result<Self> {
        if sites.is_empty() || sites.len() != heights.len() {
            return Err(contract("cone function needs one height per site"));
        }
        if heights.iter().any(|v| !v.is_finite()) {
            return Err(contract("heights must be finite"));
        }
        Ok(Self { sites, heights })
    }

    pub fn eval(&self, x: Point2) -> f64 {
        self.sites
            .iter()
            .zip(&self.heights)
            .map(|(&d, &v)| v + x.dist(d))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Value of the potential and the smallest index attaining the maximum (0-based).
pub fn eval_potential(phi: &MaxOfPlanesPotential, y: Point2) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, (&d, &v)) in phi.sites.iter().zip(&phi.heights).enumerate() {
        let val = y.dot(d) - v;
        if val > best.0 {
            best = (val, k);
        }
    }
    best
}

/// Dirac location receiving the mass at `y`; ties go to the smallest index.
pub fn transport_map(phi: &MaxOfPlanesPotential, y: Point2) -> Point2 {
    phi.sites[eval_potential(phi, y).1]
}

/// Subtracts the minimum so the smallest height is zero.
pub fn normalize_min_zero(heights: &mut [f64]) {
    let min = heights.iter().copied().fold(f64::INFINITY, f64::min);
    for v in heights.iter_mut() {
        *v -= min;
    }
}

/// Plane heights `v_k = u(d_k)` read off a grid potential, min-normalised.
pub fn recover_heights(u: &GridFunction, diracs: &DiracMeasure) -> Result<Vec<f64>> {
    let mut heights = diracs
        .locations()
        .iter()
        .map(|&d| u.layout.node_at(d).map(|n| u.values[n]))
        .collect::<Result<Vec<_>>>()?;
    normalize_min_zero(&mut heights);
    Ok(heights)
}

/// Sample points of the closed unit disk: interior lattice plus boundary circle.
fn disk_samples(resolution: usize) -> Vec<Point2> {
    let step = 2.0 / (resolution - 1) as f64;
    let mut pts = Vec::new();
    for j in 0..resolution {
        for i in 0..resolution {
            let p = Point2::new(-1.0 + i as f64 * step, -1.0 + j as f64 * step);
            if p.norm_sq() < 1.0 {
                pts.push(p);
            }
        }
    }
    let ring = 8 * resolution;
    pts.extend((0..ring).map(|m| Point2::polar(TAU * m as f64 / ring as f64)));
    pts
}

fn box_samples(half_width: f64, resolution: usize) -> Vec<Point2> {
    let step = 2.0 * half_width / (resolution - 1) as f64;
    (0..resolution * resolution)
        .map(|m| {
            Point2::new(
                -half_width + (m % resolution) as f64 * step,
                -half_width + (m / resolution) as f64 * step,
            )
        })
        .collect()
}

/// `sup_i { p_i·x − f_i }` over a finite sample of a function's graph.
fn discrete_conjugate(points: &[Point2], values: &[f64], x: Point2) -> f64 {
    points
        .iter()
        .zip(values)
        .map(|(&p, &f)| p.dot(x) - f)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Convex envelope `ψ**` of a cone-min function by a brute-force discrete
/// double Legendre transform: `ψ*` is sampled on the closed unit disk (the
/// cones have unit slope, so `ψ* = +∞` outside it) using a box grid plus the
/// cone tips for the inner supremum.
#[derive(Clone, Debug)]
pub struct ConeEnvelope {
    dual_points: Vec<Point2>,
    dual_values: Vec<f64>,
}

impl ConeEnvelope {
    pub fn new(psi: &ConeMinFunction, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(contract("envelope resolution must be at least 2"));
        }
        let reach = psi
            .sites
            .iter()
            .map(|d| d.x.abs().max(d.y.abs()))
            .fold(1.0, f64::max)
            + 0.5;
        let mut xs = box_samples(reach, resolution);
        xs.extend_from_slice(&psi.sites);
        let psi_vals: Vec<f64> = xs.iter().map(|&x| psi.eval(x)).collect();
        let dual_points = disk_samples(resolution);
        let dual_values = dual_points
            .iter()
            .map(|&y| discrete_conjugate(&xs, &psi_vals, y))
            .collect();
        Ok(Self {
            dual_points,
            dual_values,
        })
    }

    pub fn eval(&self, x: Point2) -> f64 {
        discrete_conjugate(&self.dual_points, &self.dual_values, x)
    }
}

/// One-off evaluation of `ψ**(x)`; build a [`ConeEnvelope`] for many points.
pub fn cone_envelope_eval(psi: &ConeMinFunction, x: Point2, resolution: usize) -> Result<f64> {
    Ok(ConeEnvelope::new(psi, resolution)?.eval(x))
}

/// Numerical Legendre dual of a max-of-planes potential restricted to the ball.
#[derive(Clone, Debug)]
pub struct NumericalDual {
    ys: Vec<Point2>,
    phi_vals: Vec<f64>,
}

impl NumericalDual {
    pub fn new(phi: &MaxOfPlanesPotential, resolution: usize) -> Self {
        let ys = disk_samples(resolution);
        let phi_vals = ys.iter().map(|&y| phi.eval(y)).collect();
        Self { ys, phi_vals }
    }

    /// `φ*(x) = sup_{y ∈ B(0,1)} { x·y − φ(y) }`.
    pub fn eval(&self, x: Point2) -> f64 {
        discrete_conjugate(&self.ys, &self.phi_vals, x)
    }
}

/// Worst observed violation of each duality property.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DualityReport {
    /// Midpoint-convexity violation of `φ*`.
    pub convexity: f64,
    /// `max |φ** − φ|` on the ball.
    pub involution: f64,
    /// `max |φ(y) + φ*(d_k) − d_k·y|` at cell-interior points.
    pub attainment: f64,
    /// `max |φ_k* − (v_k + ‖x − d_k‖)|` for each single plane.
    pub plane_dual: f64,
    pub tolerance: f64,
}

impl DualityReport {
    pub fn passed(&self) -> bool {
        self.convexity <= 1e-12
            && self.involution <= self.tolerance
            && self.attainment <= 1e-12
            && self.plane_dual <= self.tolerance
    }
}

/// Sampling parameters for [`check_duality`].
#[derive(Clone, Copy, Debug)]
pub struct DualitySampling {
    pub resolution: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for DualitySampling {
    fn default() -> Self {
        Self {
            resolution: 81,
            probes: 60,
            seed: 1,
        }
    }
}

/// Checks convexity, involution, attainment and the plane/cone duality on
/// sampled points. `tolerance` bounds the grid-limited properties.
pub fn check_duality(
    phi: &MaxOfPlanesPotential,
    tolerance: f64,
    sampling: DualitySampling,
) -> DualityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let dual = NumericalDual::new(phi, sampling.resolution);
    let mut report = DualityReport {
        tolerance,
        ..Default::default()
    };
    let random_point = |rng: &mut ChaCha8Rng, r: f64| {
        Point2::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
    };

    for _ in 0..sampling.probes {
        let a = random_point(&mut rng, 1.5);
        let b = random_point(&mut rng, 1.5);
        let mid = dual.eval((a + b) * 0.5);
        let chord = 0.5 * (dual.eval(a) + dual.eval(b));
        report.convexity = report.convexity.max(mid - chord);
    }

    // φ** on the ball from φ* sampled on a box grid around the sites.
    let xs = box_samples(1.5, sampling.resolution);
    let dual_vals: Vec<f64> = xs.iter().map(|&x| dual.eval(x)).collect();
    for _ in 0..sampling.probes {
        let y = loop {
            let y = random_point(&mut rng, 1.0);
            if y.norm_sq() < 1.0 {
                break y;
            }
        };
        let double = discrete_conjugate(&xs, &dual_vals, y);
        report.involution = report.involution.max((double - phi.eval(y)).abs());

        let (value, k) = eval_potential(phi, y);
        let d = phi.sites[k];
        report.attainment = report
            .attainment
            .max((value + dual.eval(d) - d.dot(y)).abs());
    }

    for (&d, &v) in phi.sites.iter().zip(&phi.heights) {
        let plane = MaxOfPlanesPotential {
            sites: vec![d],
            heights: vec![v],
        };
        let plane_dual = NumericalDual::new(&plane, sampling.resolution);
        for _ in 0..sampling.probes {
            let x = random_point(&mut rng, 1.5);
            let err = (plane_dual.eval(x) - (v + x.dist(d))).abs();
            report.plane_dual = report.plane_dual.max(err);
        }
    }
    report
}

/// Cone-min initial guess `min_k ‖x − d_k‖` on every node.
pub fn cone_min_guess(layout: GridLayout, diracs: &DiracMeasure) -> GridFunction {
    let psi = ConeMinFunction {
        sites: diracs.locations().to_vec(),
        heights: vec![0.0; diracs.len()],
    };
    GridFunction::from_fn(layout, |x| psi.eval(x))
}
