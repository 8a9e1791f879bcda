//! Discrete subgradient measure `M[u](d_k)` at a Dirac node, built from
//! one-sided directional derivatives on the wide stencil.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::Point2;
use crate::grid::{GridFunction, StencilSet};

/// Radius used when a window is empty (the diameter of the unit disk).
pub const EMPTY_WINDOW_RADIUS: f64 = 2.0;

/// Values of `u` at a Dirac node and at `d_k + l_i h e_{θ_i}` for every
/// stencil direction. The value at `d_k − l_i h e_{θ_i}` is the entry of the
/// opposite direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracNodeView {
    pub u0: f64,
    pub values: Vec<f64>,
    pub h: f64,
}

impl DiracNodeView {
    /// Reads the view from a grid function; every neighbour must exist.
    pub fn gather(u: &GridFunction, node: usize, stencil: &StencilSet) -> Result<Self> {
        let values = stencil
            .directions()
            .iter()
            .map(|d| u.layout.neighbor(node, d, 1).map(|n| u.values[n]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            u0: u.values[node],
            values,
            h: u.layout.h,
        })
    }

    /// Samples a function around `center` directly.
    pub fn from_fn(center: Point2, h: f64, stencil: &StencilSet, f: impl Fn(Point2) -> f64) -> Self {
        let values = stencil
            .directions()
            .iter()
            .map(|d| {
                let (p, q) = d.offset;
                f(center + Point2::new(p as f64 * h, q as f64 * h))
            })
            .collect();
        Self {
            u0: f(center),
            values,
            h,
        }
    }

    /// `u(d_k − l_i h e_{θ_i})`.
    pub fn minus(&self, stencil: &StencilSet, i: usize) -> f64 {
        self.values[stencil.opposite(i)]
    }
}

/// `(u_i − u_0) / (l_i h)`.
pub fn one_sided_derivative(view: &DiracNodeView, stencil: &StencilSet, i: usize) -> f64 {
    (view.values[i] - view.u0) / (stencil.get(i).length * view.h)
}

/// How the lower radial bound aggregates over the window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundRule {
    /// Maximum over the window; consistent with the continuous bound.
    #[default]
    Supremum,
    /// Minimum over the window, as in the literal discrete formula.
    Infimum,
}

/// Per-angle radial bounds of the discrete subgradient and the window
/// directions that attain them (`None` only for an empty window).
#[derive(Clone, Debug, PartialEq)]
pub struct RadialBounds {
    pub r_plus: Vec<f64>,
    pub r_minus: Vec<f64>,
    pub plus_arg: Vec<Option<usize>>,
    pub minus_arg: Vec<Option<usize>>,
}

/// Selects over the window of direction `i`; ties keep the smallest index.
fn select(
    window: &[(usize, f64)],
    ratio: impl Fn(usize, f64) -> f64,
    better: impl Fn(f64, f64) -> bool,
) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for &(j, c) in window {
        let r = ratio(j, c);
        best = match best {
            Some((b, bj)) if !better(r, b) && !(r == b && j < bj) => Some((b, bj)),
            _ => Some((r, j)),
        };
    }
    best
}

pub fn radial_bounds(view: &DiracNodeView, stencil: &StencilSet, rule: LowerBoundRule) -> RadialBounds {
    let n = stencil.len();
    let mut out = RadialBounds {
        r_plus: Vec::with_capacity(n),
        r_minus: Vec::with_capacity(n),
        plus_arg: Vec::with_capacity(n),
        minus_arg: Vec::with_capacity(n),
    };
    let h = view.h;
    for i in 0..n {
        let window = stencil.window(i);
        let plus = select(
            window,
            |j, c| (view.values[j] - view.u0).max(0.0) / (stencil.get(j).length * h * c),
            |a, b| a < b,
        );
        let minus_ratio =
            |j: usize, c: f64| (view.u0 - view.minus(stencil, j)).max(0.0) / (stencil.get(j).length * h * c);
        let minus = match rule {
            LowerBoundRule::Supremum => select(window, minus_ratio, |a, b| a > b),
            LowerBoundRule::Infimum => select(window, minus_ratio, |a, b| a < b),
        };
        out.r_plus.push(plus.map_or(EMPTY_WINDOW_RADIUS, |p| p.0));
        out.plus_arg.push(plus.map(|p| p.1));
        out.r_minus.push(minus.map_or(0.0, |m| m.0));
        out.minus_arg.push(minus.map(|m| m.1));
    }
    out
}

/// `Σ_i ½ dθ_i (r₊(θ_i)² − r₋(θ_i)²)⁺`.
pub fn subgradient_measure(view: &DiracNodeView, stencil: &StencilSet, rule: LowerBoundRule) -> f64 {
    let b = radial_bounds(view, stencil, rule);
    stencil
        .directions()
        .iter()
        .enumerate()
        .map(|(i, d)| 0.5 * d.weight * (b.r_plus[i].powi(2) - b.r_minus[i].powi(2)).max(0.0))
        .sum()
}

/// Target density `g` on the gradient side.
#[derive(Clone)]
pub struct Density(Arc<dyn Fn(Point2) -> f64 + Send + Sync>);

impl Density {
    pub fn new(f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn uniform() -> Self {
        Self::new(|_| 1.0)
    }

    pub fn eval(&self, y: Point2) -> f64 {
        (self.0)(y)
    }
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Density(..)")
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(contract("quadrature order must be positive"));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            // Newton on P_n from the Chebyshev-like initial guess.
            let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=n {
                    let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                    (p0, p1) = (p1, p2);
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = 0.5 * (1.0 - x);
            nodes[n - 1 - k] = 0.5 * (1.0 + x);
            weights[k] = 0.5 * w;
            weights[n - 1 - k] = 0.5 * w;
        }
        Ok(Self { nodes, weights })
    }
}

/// `G_θ(R) = ∫_0^R g(r e_θ) r dr`.
pub fn radial_antiderivative(
    g: &Density,
    theta_dir: Point2,
    radius: f64,
    quad: &GaussLegendre,
) -> Result<f64> {
    let mut sum = 0.0;
    for (&t, &w) in quad.nodes.iter().zip(&quad.weights) {
        let r = t * radius;
        let gv = g.eval(theta_dir * r);
        if !(gv > 0.0) {
            return Err(contract(format!("target density is not positive at radius {r}")));
        }
        sum += w * gv * r;
    }
    Ok(sum * radius)
}

fn positive_density(g: &Density, y: Point2) -> Result<f64> {
    let gv = g.eval(y);
    if gv > 0.0 {
        Ok(gv)
    } else {
        Err(contract(format!(
            "target density is not positive at ({}, {})",
            y.x, y.y
        )))
    }
}

/// `Σ_i dθ_i [G_{θ_i}(r₊) − G_{θ_i}(r₋)]⁺`.
pub fn weighted_subgradient_measure(
    view: &DiracNodeView,
    stencil: &StencilSet,
    rule: LowerBoundRule,
    g: &Density,
    quad: &GaussLegendre,
) -> Result<f64> {
    let b = radial_bounds(view, stencil, rule);
    let mut total = 0.0;
    for (i, d) in stencil.directions().iter().enumerate() {
        let e = d.unit();
        let gp = radial_antiderivative(g, e, b.r_plus[i], quad)?;
        let gm = radial_antiderivative(g, e, b.r_minus[i], quad)?;
        total += d.weight * (gp - gm).max(0.0);
    }
    Ok(total)
}

/// A Dirac-row measure with its derivative at frozen selections: `d_u0` with
/// respect to the centre value and `d_values[i]` with respect to `values[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureLinearization {
    pub value: f64,
    pub d_u0: f64,
    pub d_values: Vec<f64>,
}

/// Measure and generalized derivative. With `density = None` the target
/// density is uniform and `G(R) = R²/2` is used in closed form.
pub fn linearize_measure(
    view: &DiracNodeView,
    stencil: &StencilSet,
    rule: LowerBoundRule,
    density: Option<(&Density, &GaussLegendre)>,
) -> Result<MeasureLinearization> {
    let b = radial_bounds(view, stencil, rule);
    let h = view.h;
    let mut out = MeasureLinearization {
        value: 0.0,
        d_u0: 0.0,
        d_values: vec![0.0; stencil.len()],
    };
    for (i, d) in stencil.directions().iter().enumerate() {
        let (rp, rm) = (b.r_plus[i], b.r_minus[i]);
        // G(R) and G'(R) = g(R e) R.
        let (gp, gm, dgp, dgm) = match density {
            None => (0.5 * rp * rp, 0.5 * rm * rm, rp, rm),
            Some((g, quad)) => {
                let e = d.unit();
                (
                    radial_antiderivative(g, e, rp, quad)?,
                    radial_antiderivative(g, e, rm, quad)?,
                    positive_density(g, e * rp)? * rp,
                    positive_density(g, e * rm)? * rm,
                )
            }
        };
        let term = gp - gm;
        if term <= 0.0 {
            continue;
        }
        out.value += d.weight * term;
        if let Some(j) = b.plus_arg[i] {
            if view.values[j] > view.u0 {
                let c = stencil.window(i).iter().find(|w| w.0 == j).map_or(1.0, |w| w.1);
                let s = d.weight * dgp / (stencil.get(j).length * h * c);
                out.d_values[j] += s;
                out.d_u0 -= s;
            }
        }
        if let Some(j) = b.minus_arg[i] {
            let opp = stencil.opposite(j);
            if view.u0 > view.values[opp] {
                let c = stencil.window(i).iter().find(|w| w.0 == j).map_or(1.0, |w| w.1);
                let s = d.weight * dgm / (stencil.get(j).length * h * c);
                out.d_u0 -= s;
                out.d_values[opp] += s;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_stencil;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn diamond(p: Point2) -> f64 {
        p.x.abs().max(p.y.abs())
    }

    /// Radial function of the subgradient at the origin of a positively
    /// homogeneous `u`, `inf_φ ∂_φ u / cos(θ − φ)` over a fine angle sweep.
    fn brute_force_radius(support: impl Fn(f64) -> f64, theta: f64, samples: usize) -> f64 {
        (0..samples)
            .map(|m| theta - 0.5 * PI + PI * (m as f64 + 0.5) / samples as f64)
            .map(|phi| support(phi) / (theta - phi).cos())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn one_sided_derivatives() {
        let s = build_stencil(3).unwrap();
        let h = 0.05;
        let cone = DiracNodeView::from_fn(Point2::new(0.2, -0.1), h, &s, |x| x.dist(Point2::new(0.2, -0.1)));
        let p = Point2::new(0.3, -0.6);
        let affine = DiracNodeView::from_fn(Point2::new(0.2, -0.1), h, &s, |x| p.dot(x));
        let quad = DiracNodeView::from_fn(Point2::ORIGIN, h, &s, |x| 0.5 * x.norm_sq());
        for i in 0..s.len() {
            assert!((one_sided_derivative(&cone, &s, i) - 1.0).abs() < 1e-12);
            assert!((one_sided_derivative(&affine, &s, i) - p.dot(s.get(i).unit())).abs() < 1e-14);
            let l = s.get(i).length;
            assert!((one_sided_derivative(&quad, &s, i) - 0.5 * l * h).abs() < 1e-14);
        }
    }

    #[test]
    fn cone_measure_is_pi_for_every_width() {
        for w in 1..=4 {
            let s = build_stencil(w).unwrap();
            let view = DiracNodeView::from_fn(Point2::ORIGIN, 1.0 / 16.0, &s, |x| x.norm());
            let b = radial_bounds(&view, &s, LowerBoundRule::Supremum);
            assert!(b.r_plus.iter().all(|r| (r - 1.0).abs() < 1e-14));
            assert!(b.r_minus.iter().all(|&r| r == 0.0));
            for i in 0..s.len() {
                assert_eq!(b.plus_arg[i], Some(i));
            }
            let m = subgradient_measure(&view, &s, LowerBoundRule::Supremum);
            assert!((m - PI).abs() < 1e-14, "w = {w}: {m}");
            assert!((subgradient_measure(&view, &s, LowerBoundRule::Infimum) - PI).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_measure_vanishes() {
        let s = build_stencil(4).unwrap();
        for p in [Point2::new(0.3, 0.2), Point2::new(-0.9, 0.1), Point2::new(0.0, 0.0)] {
            let view = DiracNodeView::from_fn(Point2::new(0.25, 0.5), 1.0 / 32.0, &s, |x| p.dot(x) + 0.7);
            let b = radial_bounds(&view, &s, LowerBoundRule::Supremum);
            for i in 0..s.len() {
                if s.window(i).iter().any(|&(j, _)| p.dot(s.get(j).unit()) <= 0.0) {
                    assert!(b.r_plus[i].abs() < 1e-12);
                }
            }
            assert!(subgradient_measure(&view, &s, LowerBoundRule::Supremum).abs() < 1e-12);
        }
    }

    #[test]
    fn diamond_bounds_match_brute_force_radius() {
        let s = build_stencil(4).unwrap();
        let view = DiracNodeView::from_fn(Point2::ORIGIN, 1.0 / 32.0, &s, diamond);
        let b = radial_bounds(&view, &s, LowerBoundRule::Supremum);
        let support = |phi: f64| phi.cos().abs().max(phi.sin().abs());
        for (i, d) in s.directions().iter().enumerate() {
            let exact = 1.0 / (d.angle.cos().abs() + d.angle.sin().abs());
            let brute = brute_force_radius(support, d.angle, 100_000);
            assert!((brute - exact).abs() < 1e-4);
            // The stencil always contains the edge normals of the diamond.
            assert!((b.r_plus[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn diamond_measure_converges_to_two() {
        // High-resolution polar integral of ½ r(θ)².
        let n = 200_000;
        let continuous: f64 = (0..n)
            .map(|m| {
                let t = TAU * (m as f64 + 0.5) / n as f64;
                0.5 / (t.cos().abs() + t.sin().abs()).powi(2)
            })
            .sum::<f64>()
            * TAU
            / n as f64;
        assert!((continuous - 2.0).abs() < 1e-9);

        let mut errors = Vec::new();
        for w in 1..=8 {
            let s = build_stencil(w).unwrap();
            let view = DiracNodeView::from_fn(Point2::ORIGIN, 1.0 / 64.0, &s, diamond);
            let m = subgradient_measure(&view, &s, LowerBoundRule::Supremum);
            // |d/dθ ½r²| ≤ √2, so the angular quadrature error is at most
            // √2 · 2π · max dθ_i.
            let bracket = 2.0_f64.sqrt() * TAU * s.angular_resolution();
            assert!((m - continuous).abs() <= bracket, "w = {w}: {m}");
            errors.push((m - 2.0).abs());
        }
        assert!(errors[7] < errors[0]);
        assert!(errors[3] < 0.05, "{errors:?}");
    }

    #[test]
    fn measure_is_monotone_and_translation_invariant() {
        let s = build_stencil(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..1000 {
            let rule = if trial % 2 == 0 { LowerBoundRule::Supremum } else { LowerBoundRule::Infimum };
            let mut view = DiracNodeView {
                u0: rng.gen_range(-0.1..0.1),
                values: (0..s.len()).map(|_| rng.gen_range(-0.2..0.4)).collect(),
                h: 0.1,
            };
            let base = subgradient_measure(&view, &s, rule);
            let bump = rng.gen_range(0.0..0.1);

            let mut up = view.clone();
            up.u0 += bump;
            assert!(subgradient_measure(&up, &s, rule) <= base + 1e-12);

            let j = rng.gen_range(0..s.len());
            let mut side = view.clone();
            side.values[j] += bump;
            assert!(subgradient_measure(&side, &s, rule) >= base - 1e-12);

            let c = rng.gen_range(-5.0..5.0);
            view.u0 += c;
            view.values.iter_mut().for_each(|v| *v += c);
            assert!((subgradient_measure(&view, &s, rule) - base).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_measure() {
        let quad = GaussLegendre::new(8).unwrap();
        let s = build_stencil(3).unwrap();
        let cone = DiracNodeView::from_fn(Point2::ORIGIN, 0.05, &s, |x| x.norm());
        let rule = LowerBoundRule::Supremum;
        let unit = weighted_subgradient_measure(&cone, &s, rule, &Density::uniform(), &quad).unwrap();
        assert!((unit - subgradient_measure(&cone, &s, rule)).abs() < 1e-12);
        let two = weighted_subgradient_measure(&cone, &s, rule, &Density::new(|_| 2.0), &quad).unwrap();
        assert!((two - TAU).abs() < 1e-12);
        let radial = Density::new(|y: Point2| y.norm().max(1e-300));
        let m = weighted_subgradient_measure(&cone, &s, rule, &radial, &quad).unwrap();
        assert!((m - TAU / 3.0).abs() < 1e-12);
        let bad = Density::new(|_| -1.0);
        assert!(weighted_subgradient_measure(&cone, &s, rule, &bad, &quad).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let view = DiracNodeView {
                u0: 0.0,
                values: (0..s.len()).map(|_| rng.gen_range(-0.02..0.1)).collect(),
                h: 0.05,
            };
            let a = weighted_subgradient_measure(&view, &s, rule, &Density::uniform(), &quad).unwrap();
            assert!((a - subgradient_measure(&view, &s, rule)).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for order in 1..=10 {
            let q = GaussLegendre::new(order).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..2 * order {
                let approx: f64 = q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((approx - 1.0 / (deg + 1) as f64).abs() < 1e-13, "order {order} deg {deg}");
            }
        }
        assert!(GaussLegendre::new(0).is_err());
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let s = build_stencil(2).unwrap();
        let quad = GaussLegendre::new(6).unwrap();
        let g = Density::new(|y: Point2| 1.0 + 0.3 * y.x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..200 {
            let rule = if trial % 2 == 0 { LowerBoundRule::Supremum } else { LowerBoundRule::Infimum };
            let density = (trial % 3 == 0).then_some((&g, &quad));
            let view = DiracNodeView {
                u0: rng.gen_range(-0.05..0.05),
                values: (0..s.len()).map(|_| rng.gen_range(-0.1..0.2)).collect(),
                h: 0.1,
            };
            let lin = linearize_measure(&view, &s, rule, density).unwrap();
            let eval = |v: &DiracNodeView| match density {
                None => subgradient_measure(v, &s, rule),
                Some((g, q)) => weighted_subgradient_measure(v, &s, rule, g, q).unwrap(),
            };
            assert!((lin.value - eval(&view)).abs() < 1e-12);
            let eps = 1e-7;
            let dir: Vec<f64> = (0..=s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut moved = view.clone();
            moved.u0 += eps * dir[0];
            for (v, d) in moved.values.iter_mut().zip(&dir[1..]) {
                *v += eps * d;
            }
            let before = radial_bounds(&view, &s, rule);
            let after = radial_bounds(&moved, &s, rule);
            if before.plus_arg != after.plus_arg || before.minus_arg != after.minus_arg {
                continue;
            }
            let fd = (eval(&moved) - lin.value) / eps;
            let jd = lin.d_u0 * dir[0]
                + lin.d_values.iter().zip(&dir[1..]).map(|(a, b)| a * b).sum::<f64>();
            assert!((fd - jd).abs() <= 1e-4 * (1.0 + jd.abs()), "{fd} vs {jd}");
        }
    }
}
