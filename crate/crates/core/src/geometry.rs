//! Exact planar geometry on the unit disk.
//!
//! Laguerre cells are represented exactly: the intersection of the cell's
//! half-planes is built as a convex polygon, and the part of that polygon
//! inside the unit disk is traced as an alternating sequence of straight
//! chords and arcs of the unit circle. Areas are then the shoelace area of
//! the chord polygon plus one circular segment per arc.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Tolerance on unit-vector normalisation accepted by the support function.
const UNIT_TOL: f64 = 1e-9;
/// Boundary pieces shorter than this are dropped as tangency artefacts.
const MIN_PIECE: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `theta`.
    pub fn polar(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// A convex target set for the transport map.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexTarget {
    #[default]
    UnitDisk,
    /// Strictly convex polygon, vertices counterclockwise.
    ConvexPolygon { vertices: Vec<Point2> },
}

impl ConvexTarget {
    /// Validated polygon target.
    pub fn polygon(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(contract("a polygon target needs at least three vertices"));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(contract("polygon vertices must be finite"));
        }
        let mut turning = 0.0;
        for i in 0..n {
            let e0 = vertices[(i + 1) % n] - vertices[i];
            let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            if e0.cross(e1) <= 0.0 {
                return Err(contract(
                    "polygon vertices must be strictly convex and counterclockwise",
                ));
            }
            turning += e0.cross(e1).atan2(e0.dot(e1));
        }
        // Left turns everywhere but winding twice would still pass the cross test.
        if (turning - TAU).abs() > 1e-9 {
            return Err(contract("polygon boundary must wind exactly once"));
        }
        Ok(ConvexTarget::ConvexPolygon { vertices })
    }

    /// Lebesgue measure of the target.
    pub fn area(&self) -> f64 {
        match self {
            ConvexTarget::UnitDisk => PI,
            ConvexTarget::ConvexPolygon { vertices } => polygon_area(vertices),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        signed_distance(self, p) <= 0.0
    }
}

/// `H*(n) = sup_{y ∈ ∂Y} y·n` for a unit direction `n`.
pub fn support_function(target: &ConvexTarget, n: Point2) -> Result<f64> {
    if !n.is_finite() || (n.norm() - 1.0).abs() > UNIT_TOL {
        return Err(contract(format!(
            "support function needs a unit direction, got norm {}",
            n.norm()
        )));
    }
    Ok(match target {
        ConvexTarget::UnitDisk => 1.0,
        ConvexTarget::ConvexPolygon { vertices } => vertices
            .iter()
            .map(|v| v.dot(n))
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Signed distance to the target boundary: negative inside, positive outside.
pub fn signed_distance(target: &ConvexTarget, p: Point2) -> f64 {
    match target {
        ConvexTarget::UnitDisk => p.norm() - 1.0,
        ConvexTarget::ConvexPolygon { vertices } => {
            let n = vertices.len();
            let mut inside = true;
            let mut dist = f64::INFINITY;
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                if (b - a).cross(p - a) < 0.0 {
                    inside = false;
                }
                dist = dist.min(segment_distance(p, a, b));
            }
            if inside {
                -dist
            } else {
                dist
            }
        }
    }
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

fn polygon_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
}

/// Closed half-plane `{y : y·normal ≤ offset}` with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    normal: Point2,
    offset: f64,
}

impl HalfPlane {
    /// Builds `{y : y·a ≤ b}`, rescaling so the stored normal has unit length.
    pub fn new(a: Point2, b: f64) -> Result<Self> {
        let len = a.norm();
        if !(len > 0.0) || !len.is_finite() || !b.is_finite() {
            return Err(contract("half-plane needs a finite nonzero normal"));
        }
        Ok(Self {
            normal: a * (1.0 / len),
            offset: b / len,
        })
    }

    pub fn normal(&self) -> Point2 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Positive outside, negative inside.
    pub fn excess(&self, p: Point2) -> f64 {
        p.dot(self.normal) - self.offset
    }
}

/// One piece of a cell boundary, traversed counterclockwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryPiece {
    Segment { start: Point2, end: Point2 },
    /// Arc of the unit circle from `start_angle` sweeping `sweep ∈ (0, 2π]` counterclockwise.
    Arc { start_angle: f64, sweep: f64 },
}

impl BoundaryPiece {
    pub fn start(&self) -> Point2 {
        match *self {
            BoundaryPiece::Segment { start, .. } => start,
            BoundaryPiece::Arc { start_angle, .. } => Point2::polar(start_angle),
        }
    }

    pub fn end(&self) -> Point2 {
        match *self {
            BoundaryPiece::Segment { end, .. } => end,
            BoundaryPiece::Arc { start_angle, sweep } => Point2::polar(start_angle + sweep),
        }
    }
}

/// A convex region of the unit disk bounded by chords and circular arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiskCell {
    boundary: Vec<BoundaryPiece>,
    area: f64,
}

impl DiskCell {
    pub fn empty() -> Self {
        Self {
            boundary: Vec::new(),
            area: 0.0,
        }
    }

    pub fn full_disk() -> Self {
        let boundary = vec![BoundaryPiece::Arc {
            start_angle: 0.0,
            sweep: TAU,
        }];
        Self {
            area: boundary_area(&boundary),
            boundary,
        }
    }

    pub fn boundary(&self) -> &[BoundaryPiece] {
        &self.boundary
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Intersects the unit disk with a convex polygon given counterclockwise.
    pub fn from_convex_polygon(poly: &[Point2]) -> Self {
        if poly.len() < 3 || polygon_area(poly) <= 0.0 {
            return Self::empty();
        }
        let n = poly.len();
        let mut chords = Vec::new();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            if let Some((p0, p1)) = clip_segment_to_disk(a, b) {
                if p0.dist(p1) > MIN_PIECE {
                    chords.push((p0, p1));
                }
            }
        }
        if chords.is_empty() {
            return if point_in_convex(poly, Point2::ORIGIN) {
                Self::full_disk()
            } else {
                Self::empty()
            };
        }
        let m = chords.len();
        let mut boundary = Vec::with_capacity(2 * m);
        for i in 0..m {
            let (start, end) = chords[i];
            boundary.push(BoundaryPiece::Segment { start, end });
            let next = chords[(i + 1) % m].0;
            if end.dist(next) > MIN_PIECE {
                let a0 = end.angle();
                let mut sweep = next.angle() - a0;
                if sweep <= 0.0 {
                    sweep += TAU;
                }
                boundary.push(BoundaryPiece::Arc {
                    start_angle: a0,
                    sweep,
                });
            }
        }
        let area = boundary_area(&boundary);
        if area <= 0.0 {
            return Self::empty();
        }
        Self { boundary, area }
    }
}

/// Shoelace area of the chord polygon plus one circular segment per arc.
pub fn cell_area(cell: &DiskCell) -> f64 {
    boundary_area(cell.boundary())
}

fn boundary_area(boundary: &[BoundaryPiece]) -> f64 {
    let mut twice_poly = 0.0;
    let mut segments = 0.0;
    for piece in boundary {
        twice_poly += piece.start().cross(piece.end());
        if let BoundaryPiece::Arc { sweep, .. } = *piece {
            segments += 0.5 * (sweep - sweep.sin());
        }
    }
    (0.5 * twice_poly + segments).clamp(0.0, PI)
}

/// Portion of segment `a→b` inside the closed unit disk, if of positive length.
fn clip_segment_to_disk(a: Point2, b: Point2) -> Option<(Point2, Point2)> {
    let d = b - a;
    let qa = d.norm_sq();
    if qa == 0.0 {
        return None;
    }
    let qb = a.dot(d);
    let qc = a.norm_sq() - 1.0;
    let disc = qb * qb - qa * qc;
    if disc <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -(qb + qb.signum() * root);
    let (mut t0, mut t1) = if q == 0.0 {
        (-root / qa, root / qa)
    } else {
        let r0 = q / qa;
        let r1 = qc / q;
        (r0.min(r1), r0.max(r1))
    };
    t0 = t0.max(0.0);
    t1 = t1.min(1.0);
    if t0 >= t1 {
        return None;
    }
    let p0 = if t0 == 0.0 { a } else { a + d * t0 };
    let p1 = if t1 == 1.0 { b } else { a + d * t1 };
    Some((p0, p1))
}

fn point_in_convex(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    (0..n).all(|i| (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]) >= 0.0)
}

/// Keeps the part of a convex polygon with `y·normal ≤ offset` (unnormalised).
pub(crate) fn clip_polygon(poly: &[Point2], normal: Point2, offset: f64) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let da = a.dot(normal) - offset;
        let db = b.dot(normal) - offset;
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            out.push(a + (b - a) * (da / (da - db)));
        }
    }
    out.dedup_by(|p, q| p.dist(*q) <= MIN_PIECE);
    if out.len() > 1 && out[0].dist(out[out.len() - 1]) <= MIN_PIECE {
        out.pop();
    }
    out
}

fn check_sites(sites: &[Point2], heights: &[f64], k: usize) -> Result<()> {
    if sites.len() != heights.len() {
        return Err(contract(format!(
            "{} sites but {} heights",
            sites.len(),
            heights.len()
        )));
    }
    if k >= sites.len() {
        return Err(contract(format!("cell index {k} out of range")));
    }
    if heights.iter().any(|v| !v.is_finite()) {
        return Err(contract("heights must be finite"));
    }
    Ok(())
}

/// Laguerre cell `{y ∈ B(0,1) : y·d_k − v_k ≥ y·d_j − v_j ∀j}`.
pub fn laguerre_cell(sites: &[Point2], heights: &[f64], k: usize) -> Result<DiskCell> {
    check_sites(sites, heights, k)?;
    // Any box containing the disk works as the initial polygon.
    let mut poly = vec![
        Point2::new(-2.0, -2.0),
        Point2::new(2.0, -2.0),
        Point2::new(2.0, 2.0),
        Point2::new(-2.0, 2.0),
    ];
    for (j, (&dj, &vj)) in sites.iter().zip(heights).enumerate() {
        if j == k {
            continue;
        }
        let normal = dj - sites[k];
        let offset = vj - heights[k];
        if normal.x == 0.0 && normal.y == 0.0 {
            if offset == 0.0 {
                return Err(Error::Degenerate(format!(
                    "sites {k} and {j} coincide with equal heights"
                )));
            }
            if offset < 0.0 {
                return Ok(DiskCell::empty());
            }
            continue;
        }
        poly = clip_polygon(&poly, normal, offset);
        if poly.len() < 3 {
            return Ok(DiskCell::empty());
        }
    }
    Ok(DiskCell::from_convex_polygon(&poly))
}

/// Areas of all cells of a configuration.
pub fn cell_areas(sites: &[Point2], heights: &[f64]) -> Result<Vec<f64>> {
    (0..sites.len())
        .map(|k| laguerre_cell(sites, heights, k).map(|c| c.area()))
        .collect()
}

/// Whether `y` satisfies every inequality defining cell `k`.
pub(crate) fn in_cell(sites: &[Point2], heights: &[f64], k: usize, y: Point2) -> bool {
    let own = y.dot(sites[k]) - heights[k];
    sites
        .iter()
        .zip(heights)
        .all(|(&d, &v)| y.dot(d) - v <= own)
}

/// Monte Carlo estimate of a Laguerre cell's area with its standard error.
///
/// `samples` points are drawn uniformly from the unit disk (by rejection from
/// the enclosing square); the estimate is `π` times the in-cell fraction.
pub fn mc_area(
    sites: &[Point2],
    heights: &[f64],
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_sites(sites, heights, k)?;
    if samples == 0 {
        return Err(contract("mc_area needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut drawn = 0usize;
    while drawn < samples {
        let y = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if y.norm_sq() > 1.0 {
            continue;
        }
        drawn += 1;
        if in_cell(sites, heights, k, y) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let se = PI * (p * (1.0 - p) / samples as f64).sqrt();
    Ok((PI * p, se))
}
