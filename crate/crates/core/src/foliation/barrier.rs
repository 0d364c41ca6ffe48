//! Weighted quadratic barrier leaves near a strictly convex top point.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::boundary::{quadratic_leaf, QuadraticFit, QuadraticLeaf};
use crate::domain::{Cap, Domain, Shape};
use crate::error::{Error, Result};
use crate::metric::{ensure_spd, ConstantBlock, MetricField};
use crate::real::{Dual, Real, V3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierCoefficients {
    #[serde(rename = "B")]
    pub big_b: f64,
    pub b11: f64,
    pub b12: f64,
    pub b22: f64,
}

impl BarrierCoefficients {
    pub fn b(&self) -> [f64; 3] {
        [self.b11, self.b12, self.b22]
    }

    /// `c11 b11/a11 + c22 b22/a22 - B/√(a11 a22)`.
    pub fn identity_residual(&self, g0: &ConstantBlock, fit: &QuadraticFit) -> f64 {
        fit.c11 * self.b11 / g0.a11 + fit.c22 * self.b22 / g0.a22 - self.big_b / (g0.a11 * g0.a22).sqrt()
    }
}

pub fn big_b(g0: &ConstantBlock, fit: &QuadraticFit) -> f64 {
    let au = g0.a_upper_33();
    let (r1, r2) = (g0.a11.sqrt(), g0.a22.sqrt());
    (au * ((r1 * fit.c22 + r2 * fit.c11).powi(2) + (r1 - r2).powi(2) * fit.c12 * fit.c12)).sqrt()
}

pub fn b_coefficients(g0: &ConstantBlock, fit: &QuadraticFit) -> Result<BarrierCoefficients> {
    if !fit.is_strictly_convex() {
        return Err(Error::NotStrictlyConvex(fit.discriminant()));
    }
    let min = g0.a11.min(g0.a22).min(g0.a33);
    let au = g0.a_upper_33();
    if min <= 0.0 || au <= 0.0 || !au.is_finite() {
        return Err(Error::NonPositiveDefinite { point: [0.0; 3], min_eig: min.min(au) });
    }
    let (c11, c12, c22) = (fit.c11, fit.c12, fit.c22);
    let b = big_b(g0, fit);
    let disc = fit.discriminant();
    let ra = (g0.a11 * g0.a22).sqrt();
    Ok(BarrierCoefficients {
        big_b: b,
        b11: au / (b * c11) * (g0.a11 * disc + ra * (c11 * c11 + c12 * c12)),
        b12: au / b * ra * (c11 + c22),
        b22: au / (b * c22) * (g0.a22 * disc + ra * (c12 * c12 + c22 * c22)),
    })
}

/// Limit of the leaf mean curvature at the top point.
pub fn mean_curvature_limit_p_plus(h_g: f64, h_eucl: f64, g0: &ConstantBlock, fit: &QuadraticFit) -> f64 {
    let b = big_b(g0, fit);
    h_g - h_eucl + 2.0 * (fit.c11 + fit.c22) - 2.0 * b / (g0.a11 * g0.a22 * g0.a_upper_33()).sqrt()
}

/// Lower bound on the boundary mean curvature forced by the scaled comparison.
pub fn forced_mean_curvature_bound(g0: &ConstantBlock, fit: &QuadraticFit) -> f64 {
    (1.0 / g0.a11.sqrt()).max(1.0 / g0.a22.sqrt()) * 2.0 * (fit.c11 + fit.c22)
}

/// `((c11 + c22)/√a_min)² - B²/(a11 a22 a³³)`, positive whenever `a11 ≠ a22`.
pub fn positivity_gap(g0: &ConstantBlock, fit: &QuadraticFit) -> f64 {
    let amin = g0.a11.min(g0.a22);
    let b = big_b(g0, fit);
    ((fit.c11 + fit.c22) / amin.sqrt()).powi(2) - b * b / (g0.a11 * g0.a22 * g0.a_upper_33())
}

/// Boundary near the top point as a graph over its tangent plane.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Wall {
    /// `x3 = -(c11 x1² + 2 c12 x1 x2 + c22 x2²) + k0 x1³ + k1 x1² x2 + k2 x1 x2² + k3 x2³`.
    Polynomial { fit: QuadraticFit, cubic: [f64; 4] },
    /// Upper pole of `x²/a² + y²/b² + z²/c² = 1`, shifted to the origin.
    Ellipsoid { a: f64, b: f64, c: f64 },
}

impl Wall {
    pub fn quadratic(fit: QuadraticFit) -> Self {
        Wall::Polynomial { fit, cubic: [0.0; 4] }
    }

    pub fn height<T: Real>(&self, x1: T, x2: T) -> T {
        match self {
            Wall::Polynomial { fit, cubic } => {
                let q = x1 * x1 * fit.c11 + x1 * x2 * (2.0 * fit.c12) + x2 * x2 * fit.c22;
                let k = x1 * x1 * x1 * cubic[0]
                    + x1 * x1 * x2 * cubic[1]
                    + x1 * x2 * x2 * cubic[2]
                    + x2 * x2 * x2 * cubic[3];
                k - q
            }
            Wall::Ellipsoid { a, b, c } => {
                (T::one() - x1 * x1 / (a * a) - x2 * x2 / (b * b)).sqrt() * *c - *c
            }
        }
    }
}

/// Coordinates centred at the top point, rotated about the vertical axis by `angle`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalChart {
    pub origin: [f64; 3],
    pub angle: f64,
    pub wall: Wall,
}

impl LocalChart {
    pub fn model(wall: Wall) -> Self {
        LocalChart { origin: [0.0; 3], angle: 0.0, wall }
    }

    /// Chart at the upper pole of a sphere or ellipsoid, rotated so that `g12 = 0` there.
    pub fn top_of(domain: &Domain, metric: &MetricField) -> Result<Self> {
        let wall = match domain.shape {
            Shape::Sphere { r } => Wall::Ellipsoid { a: r, b: r, c: r },
            Shape::Ellipsoid { a, b, c } => Wall::Ellipsoid { a, b, c },
            _ => return Err(Error::Scenario(format!("{} has no smooth top point", domain.name()))),
        };
        let z = match domain.top {
            Cap::Pole { z } => z,
            _ => return Err(Error::Scenario("top cap is not a pole".into())),
        };
        let origin = [0.0, 0.0, z];
        let g = metric.metric_at(&origin)?;
        let angle = if g[(0, 1)].abs() < 1e-15 {
            0.0
        } else {
            0.5 * (2.0 * g[(0, 1)]).atan2(g[(0, 0)] - g[(1, 1)])
        };
        Ok(LocalChart { origin, angle, wall })
    }

    fn rotate<T: Real>(&self, x1: T, x2: T) -> (T, T) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        (x1 * c - x2 * s, x1 * s + x2 * c)
    }

    pub fn wall_height<T: Real>(&self, x1: T, x2: T) -> T {
        let (a, b) = self.rotate(x1, x2);
        self.wall.height(a, b)
    }

    /// Metric coefficients in local coordinates.
    pub fn metric<T: Real>(&self, metric: &MetricField, p: &V3<T>) -> [[T; 3]; 3] {
        let (a, b) = self.rotate(p[0], p[1]);
        let q = [a + self.origin[0], b + self.origin[1], p[2] + self.origin[2]];
        let g = metric.matrix(&q);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let r = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        if r[k][i] != 0.0 && r[l][j] != 0.0 {
                            out[i][j] += g[k][l] * (r[k][i] * r[l][j]);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn g0(&self, metric: &MetricField) -> Result<ConstantBlock> {
        let m = self.metric::<f64>(metric, &[0.0; 3]);
        ensure_spd(&Matrix3::from(m).transpose(), &self.origin)?;
        let scale = m[0][0].abs().max(m[1][1].abs());
        if m[0][1].abs() > 1e-10 * scale {
            return Err(Error::Scenario(format!("horizontal metric block is not diagonal (g12 = {:e})", m[0][1])));
        }
        Ok(ConstantBlock { a11: m[0][0], a22: m[1][1], a33: m[2][2], a13: m[0][2], a23: m[1][2] })
    }

    /// Exact quadratic part of the wall at the origin.
    pub fn fit(&self) -> QuadraticFit {
        type D = Dual<Dual<f64, 2>, 2>;
        let seed = |i: usize| D { v: Dual::var(0.0, i), d: std::array::from_fn(|k| Dual::constant(if k == i { 1.0 } else { 0.0 })) };
        let h = self.wall_height(seed(0), seed(1));
        QuadraticFit { c11: -0.5 * h.d[0].d[0], c12: -0.5 * h.d[0].d[1], c22: -0.5 * h.d[1].d[1] }
    }
}

/// Height function `x3 = f(x1, x2)` that can be differentiated.
pub trait Graph {
    fn eval<T: Real>(&self, x1: T, x2: T) -> T;
}

impl Graph for QuadraticLeaf {
    fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        self.height(x1, x2)
    }
}

pub struct WallGraph<'a>(pub &'a LocalChart);

impl Graph for WallGraph<'_> {
    fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        self.0.wall_height(x1, x2)
    }
}

fn graph_gradient<T: Real, G: Graph>(g: &G, x1: T, x2: T) -> [T; 2] {
    g.eval(Dual::<T, 2>::var(x1, 0), Dual::var(x2, 1)).d
}

fn det3<T: Real>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3<T: Real>(m: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let d = det3(m);
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            out[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
        }
    }
    out
}

fn check_spd<T: Real>(g: &[[T; 3]; 3], p: [f64; 3]) -> Result<()> {
    let m = Matrix3::from_fn(|i, j| g[i][j].val());
    ensure_spd(&m, &p)
}

/// Mean curvature of the graph at `(x1, x2)` with respect to the upward unit normal.
pub fn graph_mean_curvature<G: Graph>(
    graph: &G,
    chart: &LocalChart,
    metric: &MetricField,
    x1: f64,
    x2: f64,
) -> Result<f64> {
    type D3 = Dual<f64, 3>;
    let z = graph.eval(x1, x2);
    let p: V3<D3> = [D3::var(x1, 0), D3::var(x2, 1), D3::var(z, 2)];
    let gr = graph_gradient(graph, p[0], p[1]);
    let dphi = [-gr[0], -gr[1], D3::one()];
    let g = chart.metric(metric, &p);
    check_spd(&g, [x1, x2, z])?;
    let gi = inv3(&g);
    let sq = det3(&g).sqrt();
    let mut v = [D3::zero(); 3];
    for i in 0..3 {
        for j in 0..3 {
            v[i] += gi[i][j] * dphi[j];
        }
    }
    let nn = (v[0] * dphi[0] + v[1] * dphi[1] + v[2] * dphi[2]).sqrt();
    let mut div = 0.0;
    for i in 0..3 {
        div += (sq * v[i] / nn).d[i];
    }
    Ok(div / sq.v)
}

/// `(cos ρ^g, cos ρ̄)` at a point of the wall: the `g`-angle between the upward normals of the
/// graph and the wall, and the Euclidean angle between the wall normal and `e3`.
pub fn contact_cosines<G: Graph>(
    graph: &G,
    chart: &LocalChart,
    metric: &MetricField,
    x1: f64,
    x2: f64,
) -> Result<(f64, f64)> {
    let wall = WallGraph(chart);
    let gl = graph_gradient(graph, x1, x2);
    let gw = graph_gradient(&wall, x1, x2);
    let p = [x1, x2, wall.eval(x1, x2)];
    let g = chart.metric::<f64>(metric, &p);
    check_spd(&g, p)?;
    let gi = inv3(&g);
    let a = [-gl[0], -gl[1], 1.0];
    let b = [-gw[0], -gw[1], 1.0];
    let form = |x: &[f64; 3], y: &[f64; 3]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += x[i] * gi[i][j] * y[j];
            }
        }
        s
    };
    let cos_g = form(&a, &b) / (form(&a, &a) * form(&b, &b)).sqrt();
    let cos_bar = 1.0 / (1.0 + gw[0] * gw[0] + gw[1] * gw[1]).sqrt();
    Ok((cos_g, cos_bar))
}

/// Leaf `Σ_{s,t}` clipped against the chart's wall.
pub fn barrier_leaf(chart: &LocalChart, fit: QuadraticFit, b: [f64; 3], s: f64, t: f64, nth: usize) -> Result<QuadraticLeaf> {
    quadratic_leaf(fit, b, s, t, nth, &|x1, x2| chart.wall_height(x1, x2))
}

/// Radius along direction `th` at which the leaf meets the wall.
pub fn contact_radius(chart: &LocalChart, leaf: &QuadraticLeaf, th: f64) -> Result<f64> {
    let (c, s) = (th.cos(), th.sin());
    let gap = |r: f64| leaf.height(r * c, r * s) - chart.wall_height(r * c, r * s);
    if gap(0.0) >= 0.0 {
        return Err(Error::EmptyLeaf);
    }
    let mut hi = leaf.limit_radius(th) * leaf.t;
    let mut tries = 0;
    while gap(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 40 {
            return Err(Error::EmptyLeaf);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierCell {
    pub s: f64,
    pub t: f64,
    pub min_mean_curvature: f64,
    pub worst_mean_at: [f64; 2],
    /// `min (cos ρ̄ - cos ρ^g)` over the contact curve.
    pub min_angle_margin: f64,
    pub worst_angle_at: [f64; 2],
}

impl BarrierCell {
    pub fn passes(&self) -> bool {
        self.min_mean_curvature >= 0.0 && self.min_angle_margin > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MeanCurvature,
    Angle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierViolation {
    pub s: f64,
    pub t: f64,
    pub x: [f64; 2],
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub g0: ConstantBlock,
    pub fit: QuadraticFit,
    pub coefficients: BarrierCoefficients,
    pub boundary_mean_curvature: f64,
    pub h_p_plus: f64,
    pub cells: Vec<BarrierCell>,
    pub success: bool,
    pub s0: Option<f64>,
    pub t0: Option<f64>,
    pub violations: Vec<BarrierViolation>,
}

impl BarrierReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,min_mean_curvature,min_angle_margin,pass\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{}\n",
                c.s,
                c.t,
                c.min_mean_curvature,
                c.min_angle_margin,
                c.passes()
            ));
        }
        out
    }
}

const RADIAL_SAMPLES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

pub fn evaluate_cell(
    chart: &LocalChart,
    metric: &MetricField,
    fit: QuadraticFit,
    b: [f64; 3],
    s: f64,
    t: f64,
    nth: usize,
) -> Result<BarrierCell> {
    let leaf = barrier_leaf(chart, fit, b, s, t, nth)?;
    let mut cell = BarrierCell {
        s,
        t,
        min_mean_curvature: graph_mean_curvature(&leaf, chart, metric, 0.0, 0.0)?,
        worst_mean_at: [0.0, 0.0],
        min_angle_margin: f64::INFINITY,
        worst_angle_at: [0.0, 0.0],
    };
    for j in 0..nth {
        let th = 2.0 * PI * j as f64 / nth as f64;
        let r = leaf.radius[j];
        for &f in &RADIAL_SAMPLES {
            let x = [f * r * th.cos(), f * r * th.sin()];
            let h = graph_mean_curvature(&leaf, chart, metric, x[0], x[1])?;
            if h < cell.min_mean_curvature {
                cell.min_mean_curvature = h;
                cell.worst_mean_at = x;
            }
        }
        let x = [r * th.cos(), r * th.sin()];
        let (cg, cb) = contact_cosines(&leaf, chart, metric, x[0], x[1])?;
        if cb - cg < cell.min_angle_margin {
            cell.min_angle_margin = cb - cg;
            cell.worst_angle_at = x;
        }
    }
    Ok(cell)
}

/// Sweeps `Σ_{s,t}` over the grids and looks for a corner `(s0, t0)` below which every leaf has
/// `H ≥ 0` and `ρ > ρ̄`.
pub fn build_quadratic_barrier(
    chart: &LocalChart,
    metric: &MetricField,
    s_grid: &[f64],
    t_grid: &[f64],
    nth: usize,
) -> Result<BarrierReport> {
    let g0 = chart.g0(metric)?;
    let fit = chart.fit();
    let coefficients = b_coefficients(&g0, &fit)?;
    let mut ss = s_grid.to_vec();
    let mut ts = t_grid.to_vec();
    ss.sort_by(f64::total_cmp);
    ts.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, f64)> = ss.iter().flat_map(|&s| ts.iter().map(move |&t| (s, t))).collect();
    let b = coefficients.b();
    let cells: Vec<BarrierCell> = crate::par_map(&pairs, |&(s, t)| evaluate_cell(chart, metric, fit, b, s, t, nth))
        .into_iter()
        .collect::<Result<_>>()?;
    let nt = ts.len();
    let pass = |i: usize, j: usize| cells[i * nt + j].passes();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..ss.len() {
        for j in 0..nt {
            let ok = (0..=i).all(|a| (0..=j).all(|c| pass(a, c)));
            if ok && best.is_none_or(|(bi, bj)| (i + 1) * (j + 1) > (bi + 1) * (bj + 1)) {
                best = Some((i, j));
            }
        }
    }
    let mut violations = Vec::new();
    for c in &cells {
        if c.min_mean_curvature < 0.0 {
            violations.push(BarrierViolation {
                s: c.s,
                t: c.t,
                x: c.worst_mean_at,
                kind: ViolationKind::MeanCurvature,
                value: c.min_mean_curvature,
            });
        }
        if c.min_angle_margin <= 0.0 {
            violations.push(BarrierViolation {
                s: c.s,
                t: c.t,
                x: c.worst_angle_at,
                kind: ViolationKind::Angle,
                value: c.min_angle_margin,
            });
        }
    }
    let wall = WallGraph(chart);
    let hg = graph_mean_curvature(&wall, chart, metric, 0.0, 0.0)?;
    let he = graph_mean_curvature(&wall, chart, &MetricField::euclidean(), 0.0, 0.0)?;
    Ok(BarrierReport {
        g0,
        fit,
        coefficients,
        boundary_mean_curvature: hg,
        h_p_plus: mean_curvature_limit_p_plus(hg, he, &g0, &fit),
        cells,
        success: best.is_some(),
        s0: best.map(|(i, _)| ss[i]),
        t0: best.map(|(_, j)| ts[j]),
        violations,
    })
}
