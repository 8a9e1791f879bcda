//! Uniform grid over `[-1,1]²` with a padding layer, and the wide-stencil
//! direction set shared by the discrete operators.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::geometry::Point2;

/// A primitive lattice direction of the wide stencil.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilDirection {
    /// Integer grid offset `(p, q)`, `gcd(|p|, |q|) = 1`.
    pub offset: (i32, i32),
    /// Angle in `[0, 2π)`.
    pub angle: f64,
    /// `√(p² + q²)`, in grid units.
    pub length: f64,
    /// Angular quadrature weight `(θ_{i+1} − θ_{i−1}) / 2`.
    pub weight: f64,
}

impl StencilDirection {
    pub fn unit(&self) -> Point2 {
        Point2::new(self.offset.0 as f64, self.offset.1 as f64) * (1.0 / self.length)
    }
}

/// Directions sorted by angle, closed under rotation by `π/2`.
#[derive(Clone, Debug)]
pub struct StencilSet {
    width: usize,
    dirs: Vec<StencilDirection>,
    opposite: Vec<usize>,
    perpendicular: Vec<usize>,
    /// For each direction `i`: `(j, cos(θ_i − θ_j))` over the open half-window.
    windows: Vec<Vec<(usize, f64)>>,
}

/// Window members with `cos(θ_i − θ_j)` at or below this are excluded.
pub const WINDOW_COS_EPS: f64 = 1e-12;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// All coprime offsets with `max(|p|, |q|) ≤ width`, sorted by angle.
pub fn build_stencil(width: usize) -> Result<StencilSet> {
    if width < 1 {
        return Err(contract("stencil width must be at least 1"));
    }
    let w = width as i32;
    let mut raw = Vec::new();
    for p in -w..=w {
        for q in -w..=w {
            if (p, q) != (0, 0) && gcd(p.unsigned_abs(), q.unsigned_abs()) == 1 {
                let mut angle = (q as f64).atan2(p as f64);
                if angle < 0.0 {
                    angle += TAU;
                }
                raw.push(((p, q), angle));
            }
        }
    }
    raw.sort_by(|a, b| a.1.total_cmp(&b.1));
    let n = raw.len();
    let dirs: Vec<StencilDirection> = (0..n)
        .map(|i| {
            let prev = raw[(i + n - 1) % n].1;
            let next = raw[(i + 1) % n].1;
            let mut span = next - prev;
            if span <= 0.0 {
                span += TAU;
            }
            let (p, q) = raw[i].0;
            StencilDirection {
                offset: (p, q),
                angle: raw[i].1,
                length: ((p * p + q * q) as f64).sqrt(),
                weight: 0.5 * span,
            }
        })
        .collect();
    let find = |o: (i32, i32)| -> usize {
        dirs.iter()
            .position(|d| d.offset == o)
            .expect("stencil is closed under quarter turns")
    };
    let opposite = dirs
        .iter()
        .map(|d| find((-d.offset.0, -d.offset.1)))
        .collect();
    let perpendicular = dirs
        .iter()
        .map(|d| find((-d.offset.1, d.offset.0)))
        .collect();
    let windows = dirs
        .iter()
        .map(|di| {
            dirs.iter()
                .enumerate()
                .filter_map(|(j, dj)| {
                    let c = (di.angle - dj.angle).cos();
                    (c > WINDOW_COS_EPS).then_some((j, c))
                })
                .collect()
        })
        .collect();
    Ok(StencilSet {
        width,
        dirs,
        opposite,
        perpendicular,
        windows,
    })
}

impl StencilSet {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn directions(&self) -> &[StencilDirection] {
        &self.dirs
    }

    pub fn get(&self, i: usize) -> &StencilDirection {
        &self.dirs[i]
    }

    pub fn opposite(&self, i: usize) -> usize {
        self.opposite[i]
    }

    /// Index of the direction rotated by `+π/2`.
    pub fn perpendicular(&self, i: usize) -> usize {
        self.perpendicular[i]
    }

    pub fn window(&self, i: usize) -> &[(usize, f64)] {
        &self.windows[i]
    }

    /// `max_i dθ_i`.
    pub fn angular_resolution(&self) -> f64 {
        self.dirs.iter().map(|d| d.weight).fold(0.0, f64::max)
    }

    /// Unordered orthogonal pairs: each direction with angle in `[0, π/2)`
    /// together with its quarter-turn rotation.
    pub fn orthogonal_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter(|&i| self.dirs[i].angle < 0.5 * PI - 1e-12)
            .map(|i| (i, self.perpendicular[i]))
            .collect()
    }

    /// Indices of directions with angle in `[0, π)`; second differences are
    /// symmetric, so these cover every line through a node once.
    pub fn half(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.dirs[i].angle < PI - 1e-12)
    }
}

/// Default stencil width `⌊1/√h⌋`.
pub fn default_width(h: f64) -> usize {
    ((1.0 / h.sqrt()) + 1e-9).floor().max(1.0) as usize
}

/// Outward normal class of a boundary-layer node relative to the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    East,
    NorthEast,
    North,
    NorthWest,
    West,
    SouthWest,
    South,
    SouthEast,
}

impl Side {
    pub const ALL: [Side; 8] = [
        Side::East,
        Side::NorthEast,
        Side::North,
        Side::NorthWest,
        Side::West,
        Side::SouthWest,
        Side::South,
        Side::SouthEast,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn normal(self) -> Point2 {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Side::East => Point2::new(1.0, 0.0),
            Side::NorthEast => Point2::new(r, r),
            Side::North => Point2::new(0.0, 1.0),
            Side::NorthWest => Point2::new(-r, r),
            Side::West => Point2::new(-1.0, 0.0),
            Side::SouthWest => Point2::new(-r, -r),
            Side::South => Point2::new(0.0, -1.0),
            Side::SouthEast => Point2::new(r, -r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Open interior of the square away from the Dirac masses.
    Interior,
    /// Location of Dirac mass `k`.
    Dirac(usize),
    /// On the square's boundary or in the padding layer around it.
    Boundary(Side),
}

/// Index arithmetic for a padded `side × side` grid, row-major in `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub n_x: usize,
    pub pad: usize,
    pub h: f64,
}

impl GridLayout {
    pub fn new(n_x: usize, pad: usize) -> Result<Self> {
        if n_x < 5 {
            return Err(contract("grid needs at least 5 nodes per dimension"));
        }
        Ok(Self {
            n_x,
            pad,
            h: 2.0 / (n_x - 1) as f64,
        })
    }

    pub fn side(&self) -> usize {
        self.n_x + 2 * self.pad
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % self.side(), node / self.side())
    }

    pub fn coord_1d(&self, i: usize) -> f64 {
        -1.0 + (i as f64 - self.pad as f64) * self.h
    }

    pub fn coord(&self, node: usize) -> Point2 {
        let (i, j) = self.ij(node);
        Point2::new(self.coord_1d(i), self.coord_1d(j))
    }

    /// Node at `node + (dx, dy)`, if inside the padded grid.
    pub fn offset(&self, node: usize, dx: i32, dy: i32) -> Option<usize> {
        let (i, j) = self.ij(node);
        let s = self.side() as i64;
        let ni = i as i64 + dx as i64;
        let nj = j as i64 + dy as i64;
        (ni >= 0 && nj >= 0 && ni < s && nj < s).then(|| self.index(ni as usize, nj as usize))
    }

    /// Node at `x + sign·(p, q)·h`.
    pub fn neighbor(&self, node: usize, dir: &StencilDirection, sign: i32) -> Result<usize> {
        let (p, q) = dir.offset;
        self.offset(node, sign * p, sign * q).ok_or_else(|| {
            Error::OutOfRange(format!(
                "stepping {:?} × {sign} from node {:?} leaves the padded grid",
                dir.offset,
                self.ij(node)
            ))
        })
    }

    /// Grid index of a point lying on the padded grid.
    pub fn node_at(&self, p: Point2) -> Result<usize> {
        let to_index = |c: f64| -> Option<usize> {
            let t = (c + 1.0) / self.h + self.pad as f64;
            let r = t.round();
            ((t - r).abs() <= 1e-9 && r >= 0.0 && (r as usize) < self.side()).then_some(r as usize)
        };
        match (to_index(p.x), to_index(p.y)) {
            (Some(i), Some(j)) => Ok(self.index(i, j)),
            _ => Err(Error::OffGrid {
                x: p.x,
                y: p.y,
                h: self.h,
            }),
        }
    }

    /// Whether the node lies in the closed square `[-1,1]²`.
    pub fn in_square(&self, node: usize) -> bool {
        let (i, j) = self.ij(node);
        let lo = self.pad;
        let hi = self.pad + self.n_x - 1;
        (lo..=hi).contains(&i) && (lo..=hi).contains(&j)
    }

    /// Nodes of the closed square in row-major order.
    pub fn square_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let lo = self.pad;
        let hi = self.pad + self.n_x;
        (lo..hi).flat_map(move |j| (lo..hi).map(move |i| self.index(i, j)))
    }

    fn side_of(&self, node: usize) -> Option<Side> {
        let (i, j) = self.ij(node);
        let lo = self.pad;
        let hi = self.pad + self.n_x - 1;
        let east = i >= hi;
        let west = i <= lo;
        let north = j >= hi;
        let south = j <= lo;
        Some(match (east, west, north, south) {
            (false, false, false, false) => return None,
            (true, _, true, _) => Side::NorthEast,
            (true, _, _, true) => Side::SouthEast,
            (_, true, true, _) => Side::NorthWest,
            (_, true, _, true) => Side::SouthWest,
            (true, ..) => Side::East,
            (_, true, ..) => Side::West,
            (_, _, true, _) => Side::North,
            _ => Side::South,
        })
    }
}

/// A padded grid with every node classified.
#[derive(Clone, Debug)]
pub struct Grid {
    layout: GridLayout,
    kinds: Vec<NodeKind>,
    dirac_nodes: Vec<usize>,
}

impl Grid {
    /// Builds the grid; every site must be an interior grid node.
    pub fn new(n_x: usize, pad: usize, sites: &[Point2]) -> Result<Self> {
        let layout = GridLayout::new(n_x, pad)?;
        let mut kinds: Vec<NodeKind> = (0..layout.len())
            .map(|node| match layout.side_of(node) {
                Some(side) => NodeKind::Boundary(side),
                None => NodeKind::Interior,
            })
            .collect();
        let mut dirac_nodes = Vec::with_capacity(sites.len());
        for (k, &p) in sites.iter().enumerate() {
            let node = layout.node_at(p)?;
            match kinds[node] {
                NodeKind::Interior => kinds[node] = NodeKind::Dirac(k),
                NodeKind::Dirac(other) => {
                    return Err(Error::Degenerate(format!(
                        "Dirac masses {other} and {k} share a grid node"
                    )))
                }
                NodeKind::Boundary(_) => {
                    return Err(contract(format!(
                        "Dirac mass {k} at ({}, {}) is not strictly inside the square",
                        p.x, p.y
                    )))
                }
            }
            dirac_nodes.push(node);
        }
        Ok(Self {
            layout,
            kinds,
            dirac_nodes,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn h(&self) -> f64 {
        self.layout.h
    }

    pub fn n_x(&self) -> usize {
        self.layout.n_x
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn dirac_nodes(&self) -> &[usize] {
        &self.dirac_nodes
    }

    pub fn coord(&self, node: usize) -> Point2 {
        self.layout.coord(node)
    }

    pub fn neighbor(&self, node: usize, dir: &StencilDirection, sign: i32) -> Result<usize> {
        self.layout.neighbor(node, dir, sign)
    }
}

/// Scalar values on every node of a padded grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub layout: GridLayout,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(layout: GridLayout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn from_fn(layout: GridLayout, f: impl Fn(Point2) -> f64) -> Self {
        Self {
            layout,
            values: (0..layout.len()).map(|n| f(layout.coord(n))).collect(),
        }
    }

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Mean over the nodes of the closed square.
    pub fn square_mean(&self) -> f64 {
        let (sum, count) = self
            .layout
            .square_nodes()
            .fold((0.0, 0usize), |(s, c), n| (s + self.values[n], c + 1));
        sum / count as f64
    }

    /// Bilinear interpolation, extrapolating linearly past the padded grid.
    pub fn interpolate(&self, p: Point2) -> f64 {
        let s = self.layout.side();
        let locate = |c: f64| -> (usize, f64) {
            let t = (c + 1.0) / self.layout.h + self.layout.pad as f64;
            let i = (t.floor().max(0.0) as usize).min(s - 2);
            (i, t - i as f64)
        };
        let (i, fx) = locate(p.x);
        let (j, fy) = locate(p.y);
        let v = |a: usize, b: usize| self.values[self.layout.index(a, b)];
        let bottom = v(i, j) * (1.0 - fx) + v(i + 1, j) * fx;
        let top = v(i, j + 1) * (1.0 - fx) + v(i + 1, j + 1) * fx;
        bottom * (1.0 - fy) + top * fy
    }
}
