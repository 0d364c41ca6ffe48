//! Leaves as height functions `w(ρ, θ)` over the polar chart of a domain, the discrete
//! capillary energy with exact derivatives, and pointwise leaf geometry.
//!
//! Node `0` is the center; ring `i ≥ 1` at `ρ_i = i / nr` holds `nth` nodes. The outer ring lies
//! on the boundary wall, so sliding a boundary node keeps it on ∂M.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryPoint;
use crate::domain::{Cap, Domain, Shape, Side};
use crate::error::{Error, Result};
use crate::metric::MetricField;
use crate::quad::{fd_weights, gl20_unit, simpson_weights, G2_W, G2_X};
use crate::real::{cross3, dot3, quad3, Dual, Real, V3};
use crate::spectral::Periodic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    FlatSlice { z: f64 },
    Quadratic { s: f64, t: f64 },
    Solver,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarLeaf {
    pub nr: usize,
    pub nth: usize,
    pub w: Vec<f64>,
    pub recipe: Recipe,
}

impl PolarLeaf {
    pub fn flat(nr: usize, nth: usize, z: f64) -> Self {
        PolarLeaf { nr, nth, w: vec![z; 1 + nr * nth], recipe: Recipe::FlatSlice { z } }
    }

    pub fn from_fn(nr: usize, nth: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut w = vec![f(0.0, 0.0)];
        for i in 1..=nr {
            for j in 0..nth {
                w.push(f(i as f64 / nr as f64, 2.0 * PI * j as f64 / nth as f64));
            }
        }
        PolarLeaf { nr, nth, w, recipe: Recipe::Custom }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        node_index(self.nth, i, j)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[self.idx(i, j)]
    }

    pub fn rho(&self, i: usize) -> f64 {
        i as f64 / self.nr as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.nth as f64
    }

    pub fn boundary_heights(&self) -> Vec<f64> {
        (0..self.nth).map(|j| self.at(self.nr, j)).collect()
    }

    pub fn height_range(&self) -> (f64, f64) {
        let lo = self.w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Bilinear interpolant in `(ρ, θ)`.
    pub fn eval(&self, rho: f64, th: f64) -> f64 {
        let hr = 1.0 / self.nr as f64;
        let ht = 2.0 * PI / self.nth as f64;
        let r = (rho / hr).clamp(0.0, self.nr as f64);
        let i = (r.floor() as usize).min(self.nr - 1);
        let s = r - i as f64;
        let tt = th.rem_euclid(2.0 * PI) / ht;
        let j = (tt.floor() as usize) % self.nth;
        let t = tt - tt.floor();
        let c = |a: usize, b: usize| self.at(a, b);
        (1.0 - s) * ((1.0 - t) * c(i, j) + t * c(i, j + 1)) + s * ((1.0 - t) * c(i + 1, j) + t * c(i + 1, j + 1))
    }

    /// Chart point of node `(i, j)`.
    pub fn point(&self, domain: &Domain, i: usize, j: usize) -> [f64; 3] {
        domain.chart(self.rho(i), self.theta(j), self.at(i, j))
    }

    /// Resamples onto another polar grid.
    pub fn resample(&self, nr: usize, nth: usize) -> PolarLeaf {
        let mut out = PolarLeaf::from_fn(nr, nth, |r, t| self.eval(r, t));
        out.recipe = self.recipe.clone();
        out
    }
}

pub fn node_index(nth: usize, i: usize, j: usize) -> usize {
    if i == 0 {
        0
    } else {
        1 + (i - 1) * nth + j % nth
    }
}

type D3<T> = Dual<T, 3>;

fn seeded<T: Real, const N: usize>(x: T, i: usize) -> Dual<T, N> {
    let mut d = [T::zero(); N];
    d[i] = T::one();
    Dual { v: x, d }
}

/// Hyper-dual seed for second derivatives in `N` unknowns.
fn seed_hyper<const N: usize>(x: f64, i: usize) -> Dual<Dual<f64, N>, N> {
    let mut d = [Dual::constant(0.0); N];
    d[i] = Dual::constant(1.0);
    Dual { v: Dual::var(x, i), d }
}

fn det3<T: Real>(a: &V3<T>, b: &V3<T>, c: &V3<T>) -> T {
    dot3(a, &cross3(b, c))
}

fn det_matrix<T: Real>(g: &[[T; 3]; 3]) -> T {
    det3(&g[0], &g[1], &g[2])
}

/// Leaf area density and volume density at chart point `(ρ, θ, w)` with slopes `(w_ρ, w_θ)`.
pub fn area_density<T: Real>(
    domain: &Domain,
    metric: &MetricField,
    rho: f64,
    th: f64,
    w: T,
    wr: T,
    wt: T,
) -> (T, T) {
    let p: V3<D3<T>> = domain.chart(seeded(T::cst(rho), 0), seeded(T::cst(th), 1), seeded(w, 2));
    let col = |k: usize| [p[0].d[k], p[1].d[k], p[2].d[k]];
    let (pr, pt, pz) = (col(0), col(1), col(2));
    let xr = [pr[0] + pz[0] * wr, pr[1] + pz[1] * wr, pr[2] + pz[2] * wr];
    let xt = [pt[0] + pz[0] * wt, pt[1] + pz[1] * wt, pt[2] + pz[2] * wt];
    let jac = det3(&pr, &pt, &pz).abs();
    if metric.is_euclidean() {
        let n = cross3(&xr, &xt);
        return (dot3(&n, &n).sqrt(), jac);
    }
    let pos = [p[0].v, p[1].v, p[2].v];
    let g = metric.matrix::<T>(&pos);
    let e = quad3(&g, &xr, &xr);
    let f = quad3(&g, &xr, &xt);
    let gg = quad3(&g, &xt, &xt);
    ((e * gg - f * f).sqrt(), jac * det_matrix(&g).sqrt())
}

/// `cos ρ̄` times the wall area element of the metric, at boundary chart point `(θ, v)`.
pub fn wetted_density<T: Real>(domain: &Domain, metric: &MetricField, th: f64, v: T) -> T {
    let p: V3<Dual<T, 2>> = domain.boundary(seeded(T::cst(th), 0), seeded(v, 1));
    let bt = [p[0].d[0], p[1].d[0], p[2].d[0]];
    let bv = [p[0].d[1], p[1].d[1], p[2].d[1]];
    let n = cross3(&bt, &bv);
    if metric.is_euclidean() {
        return n[2];
    }
    let pos = [p[0].v, p[1].v, p[2].v];
    let g = metric.matrix::<T>(&pos);
    let e = quad3(&g, &bt, &bt);
    let f = quad3(&g, &bt, &bv);
    let gg = quad3(&g, &bv, &bv);
    n[2] / dot3(&n, &n).sqrt() * (e * gg - f * f).sqrt()
}

/// One quadrature point of the leaf integral with its bilinear shape functions.
#[derive(Clone, Copy, Debug)]
struct QPoint {
    corners: [usize; 4],
    phi: [f64; 4],
    dr: [f64; 4],
    dt: [f64; 4],
    rho: f64,
    th: f64,
    weight: f64,
}

fn quad_points(nr: usize, nth: usize) -> Vec<QPoint> {
    let hr = 1.0 / nr as f64;
    let ht = 2.0 * PI / nth as f64;
    let mut out = Vec::with_capacity(nr * nth * 4);
    for i in 0..nr {
        for j in 0..nth {
            let corners = [
                node_index(nth, i, j),
                node_index(nth, i, j + 1),
                node_index(nth, i + 1, j),
                node_index(nth, i + 1, j + 1),
            ];
            for (qs, ws) in G2_X.iter().zip(G2_W) {
                for (qt, wt) in G2_X.iter().zip(G2_W) {
                    let (s, t) = (*qs, *qt);
                    out.push(QPoint {
                        corners,
                        phi: [(1.0 - s) * (1.0 - t), (1.0 - s) * t, s * (1.0 - t), s * t],
                        dr: [-(1.0 - t) / hr, -t / hr, (1.0 - t) / hr, t / hr],
                        dt: [-(1.0 - s) / ht, (1.0 - s) / ht, -s / ht, s / ht],
                        rho: (i as f64 + s) * hr,
                        th: (j as f64 + t) * ht,
                        weight: ws * wt * hr * ht,
                    });
                }
            }
        }
    }
    out
}

/// Energy split into its pieces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyParts {
    pub area: f64,
    pub wetted: f64,
    pub cap: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.area + self.wetted + self.cap
    }
}

/// Dense linearization used by the Newton solver.
pub struct SecondOrder {
    pub grad: Vec<f64>,
    pub mass: Vec<f64>,
    pub hess: DMatrix<f64>,
    /// `dmass[(i, j)] = ∂M_i / ∂w_j`.
    pub dmass: DMatrix<f64>,
}

/// Discrete prescribed-angle capillary functional on a fixed polar grid.
#[derive(Clone)]
pub struct CapillaryEnergy<'a> {
    pub domain: &'a Domain,
    pub metric: &'a MetricField,
    pub side: Side,
    pub nr: usize,
    pub nth: usize,
    qps: Vec<QPoint>,
    cap: f64,
}

impl<'a> CapillaryEnergy<'a> {
    pub fn new(domain: &'a Domain, metric: &'a MetricField, side: Side, nr: usize, nth: usize) -> Result<Self> {
        if nr < 2 || nth < 4 || nth % 2 == 1 {
            return Err(Error::Scenario(format!("leaf grid {nr}x{nth} too small or odd in θ")));
        }
        let mut e = CapillaryEnergy { domain, metric, side, nr, nth, qps: quad_points(nr, nth), cap: 0.0 };
        e.cap = e.cap_term()?;
        Ok(e)
    }

    pub fn for_leaf(domain: &'a Domain, metric: &'a MetricField, side: Side, leaf: &PolarLeaf) -> Result<Self> {
        Self::new(domain, metric, side, leaf.nr, leaf.nth)
    }

    pub fn len(&self) -> usize {
        1 + self.nr * self.nth
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn ht(&self) -> f64 {
        2.0 * PI / self.nth as f64
    }

    /// Constant contribution of the wetted cap beyond the slab edge.
    fn cap_term(&self) -> Result<f64> {
        let (edge, cap) = match self.side {
            Side::Top => (self.domain.v_hi, self.domain.top),
            Side::Bottom => (self.domain.v_lo, self.domain.bottom),
        };
        let (xs, ws) = gl20_unit();
        let ht = self.ht();
        let theta_sum = |f: &dyn Fn(f64) -> f64| -> f64 {
            let mut s = 0.0;
            for j in 0..self.nth {
                for q in 0..2 {
                    s += G2_W[q] * ht * f((j as f64 + G2_X[q]) * ht);
                }
            }
            s
        };
        let val = match cap {
            Cap::Lid => {
                let mut a = 0.0;
                for qp in &self.qps {
                    a += qp.weight * area_density::<f64>(self.domain, self.metric, qp.rho, qp.th, edge, 0.0, 0.0).0;
                }
                -a
            }
            Cap::Pole { z } => {
                let smax = (z - edge).abs().sqrt();
                let dir = (z - edge).signum();
                let inner = |th: f64| {
                    let mut s = 0.0;
                    for (x, w) in xs.iter().zip(ws) {
                        let sg = smax * x;
                        let v = z - dir * sg * sg;
                        s += w * smax * 2.0 * sg * wetted_density::<f64>(self.domain, self.metric, th, v);
                    }
                    s
                };
                let total = theta_sum(&inner);
                match self.side {
                    Side::Top => -total,
                    Side::Bottom => total,
                }
            }
            Cap::Vertex { z } if edge == z => 0.0,
            Cap::Vertex { z } => {
                let len = edge - z;
                let inner = |th: f64| {
                    let mut s = 0.0;
                    for (x, w) in xs.iter().zip(ws) {
                        s += w * len * wetted_density::<f64>(self.domain, self.metric, th, z + len * x);
                    }
                    s
                };
                let total = theta_sum(&inner);
                match self.side {
                    Side::Top => total,
                    Side::Bottom => total,
                }
            }
        };
        if !val.is_finite() {
            return Err(Error::Scenario("cap contribution is not finite".into()));
        }
        Ok(val)
    }

    /// Rejects heights outside the slab.
    pub fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.len() {
            return Err(Error::Scenario(format!("leaf has {} nodes, grid needs {}", w.len(), self.len())));
        }
        let (lo, hi) = (self.domain.v_lo, self.domain.v_hi);
        let cone = matches!(self.domain.shape, Shape::Cone { .. });
        for &x in w {
            if !(x >= lo && x <= hi) || (cone && x <= 0.0) {
                return Err(Error::EmptyLeaf);
            }
        }
        Ok(())
    }

    fn wall<T: Real>(&self, th: f64, wb: T) -> T {
        let (xs, ws) = gl20_unit();
        let (a, b) = match self.side {
            Side::Top => (wb, T::cst(self.domain.v_hi)),
            Side::Bottom => (T::cst(self.domain.v_lo), wb),
        };
        let len = b - a;
        let mut s = T::zero();
        for (x, w) in xs.iter().zip(ws) {
            s += wetted_density(self.domain, self.metric, th, a + len * *x) * (len * *w);
        }
        match self.side {
            Side::Top => -s,
            Side::Bottom => s,
        }
    }

    fn segments(&self) -> impl Iterator<Item = (usize, usize, f64, f64, f64)> + '_ {
        let ht = self.ht();
        let (nr, nth) = (self.nr, self.nth);
        (0..nth).flat_map(move |j| {
            (0..2).map(move |q| {
                let t = G2_X[q];
                (node_index(nth, nr, j), node_index(nth, nr, j + 1), t, (j as f64 + t) * ht, G2_W[q] * ht)
            })
        })
    }

    pub fn parts(&self, w: &[f64]) -> Result<EnergyParts> {
        self.check(w)?;
        let mut area = 0.0;
        for qp in &self.qps {
            let (v, vr, vt) = interp(qp, w);
            area += qp.weight * area_density(self.domain, self.metric, qp.rho, qp.th, v, vr, vt).0;
        }
        let mut wetted = 0.0;
        for (a, b, t, th, wt) in self.segments() {
            wetted += wt * self.wall(th, (1.0 - t) * w[a] + t * w[b]);
        }
        Ok(EnergyParts { area, wetted, cap: self.cap })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        Ok(self.parts(w)?.total())
    }

    /// Energy and its exact gradient with respect to node heights.
    pub fn gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (e, g, _) = self.gradient_and_mass(w)?;
        Ok((e, g))
    }

    /// Energy, gradient and the volume weights `M_i = ∫ φ_i μ`.
    pub fn gradient_and_mass(&self, w: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check(w)?;
        let n = self.len();
        let mut grad = vec![0.0; n];
        let mut mass = vec![0.0; n];
        let mut e = self.cap;
        for qp in &self.qps {
            let (v, vr, vt) = interp(qp, w);
            let (a, mu) = area_density(
                self.domain,
                self.metric,
                qp.rho,
                qp.th,
                Dual::<f64, 3>::var(v, 0),
                Dual::var(vr, 1),
                Dual::var(vt, 2),
            );
            e += qp.weight * a.v;
            for k in 0..4 {
                let c = qp.corners[k];
                grad[c] += qp.weight * (a.d[0] * qp.phi[k] + a.d[1] * qp.dr[k] + a.d[2] * qp.dt[k]);
                mass[c] += qp.weight * mu.v * qp.phi[k];
            }
        }
        for (ia, ib, t, th, wt) in self.segments() {
            let wb = Dual::<f64, 1>::var((1.0 - t) * w[ia] + t * w[ib], 0);
            let s = self.wall(th, wb);
            e += wt * s.v;
            grad[ia] += wt * s.d[0] * (1.0 - t);
            grad[ib] += wt * s.d[0] * t;
        }
        Ok((e, grad, mass))
    }

    /// Exact Hessian of the energy and Jacobian of the volume weights.
    pub fn second_order(&self, w: &[f64]) -> Result<SecondOrder> {
        self.check(w)?;
        let n = self.len();
        let mut grad = vec![0.0; n];
        let mut mass = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        let mut dmass = DMatrix::zeros(n, n);
        for qp in &self.qps {
            let (v, vr, vt) = interp(qp, w);
            let (a, mu) = area_density(
                self.domain,
                self.metric,
                qp.rho,
                qp.th,
                seed_hyper::<3>(v, 0),
                seed_hyper(vr, 1),
                seed_hyper(vt, 2),
            );
            let basis = [qp.phi, qp.dr, qp.dt];
            for k in 0..4 {
                let ck = qp.corners[k];
                let mut gk = 0.0;
                for x in 0..3 {
                    gk += a.v.d[x] * basis[x][k];
                }
                grad[ck] += qp.weight * gk;
                mass[ck] += qp.weight * mu.v.v * qp.phi[k];
                for l in 0..4 {
                    let cl = qp.corners[l];
                    let mut h = 0.0;
                    for x in 0..3 {
                        for y in 0..3 {
                            h += a.d[x].d[y] * basis[x][k] * basis[y][l];
                        }
                    }
                    hess[(ck, cl)] += qp.weight * h;
                    dmass[(ck, cl)] += qp.weight * qp.phi[k] * mu.v.d[0] * qp.phi[l];
                }
            }
        }
        for (ia, ib, t, th, wt) in self.segments() {
            let s = self.wall(th, seed_hyper::<1>((1.0 - t) * w[ia] + t * w[ib], 0));
            let c = [(ia, 1.0 - t), (ib, t)];
            for &(p, fp) in &c {
                grad[p] += wt * s.v.d[0] * fp;
                for &(q, fq) in &c {
                    hess[(p, q)] += wt * s.d[0].d[0] * fp * fq;
                }
            }
        }
        Ok(SecondOrder { grad, mass, hess, dmass })
    }

    /// Gradient density `∂E/∂w_i / M_i`, which approximates the leaf mean curvature at interior
    /// nodes (with sign fixed so that N points into Ω).
    pub fn gradient_density(&self, w: &[f64]) -> Result<Vec<f64>> {
        let (_, g, m) = self.gradient_and_mass(w)?;
        let s = self.side_sign();
        Ok(g.iter().zip(&m).map(|(g, m)| s * g / m).collect())
    }

    /// `+1` when Ω lies above the leaf.
    pub fn side_sign(&self) -> f64 {
        match self.side {
            Side::Top => 1.0,
            Side::Bottom => -1.0,
        }
    }

    /// Lumped nodal weights `∫ φ_i ρ dρ dθ` of the reference disk.
    pub fn disk_weights(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.len()];
        for qp in &self.qps {
            for k in 0..4 {
                m[qp.corners[k]] += qp.weight * qp.rho * qp.phi[k];
            }
        }
        m
    }
}

fn interp(qp: &QPoint, w: &[f64]) -> (f64, f64, f64) {
    let mut v = 0.0;
    let mut vr = 0.0;
    let mut vt = 0.0;
    for k in 0..4 {
        let x = w[qp.corners[k]];
        v += qp.phi[k] * x;
        vr += qp.dr[k] * x;
        vt += qp.dt[k] * x;
    }
    (v, vr, vt)
}

/// Chart position with first and second derivatives in `(ρ, θ, z)`.
#[derive(Clone, Copy, Debug)]
pub struct ChartJet {
    pub p: [f64; 3],
    pub d: [[f64; 3]; 3],
    pub dd: [[[f64; 3]; 3]; 3],
}

pub fn chart_jet(domain: &Domain, rho: f64, th: f64, z: f64) -> ChartJet {
    let p: V3<Dual<Dual<f64, 3>, 3>> = domain.chart(seed_hyper(rho, 0), seed_hyper(th, 1), seed_hyper(z, 2));
    let mut out = ChartJet { p: [0.0; 3], d: [[0.0; 3]; 3], dd: [[[0.0; 3]; 3]; 3] };
    for c in 0..3 {
        out.p[c] = p[c].v.v;
        for a in 0..3 {
            out.d[a][c] = p[c].v.d[a];
            for b in 0..3 {
                out.dd[a][b][c] = p[c].d[a].d[b];
            }
        }
    }
    out
}

/// Derivatives `(f, f_ρ, f_θ, f_ρρ, f_ρθ, f_θθ)` of a nodal field at every ring node.
#[derive(Clone, Debug)]
pub struct NodalDerivatives {
    pub nr: usize,
    pub nth: usize,
    pub d: Vec<[f64; 6]>,
}

impl NodalDerivatives {
    /// Spectral in θ on each ring, high-order differences in ρ along diameters.
    pub fn new(nr: usize, nth: usize, f: &[f64]) -> Self {
        let per = Periodic::new(nth);
        let mut rings = vec![vec![0.0; nth]; nr + 1];
        let mut rt = vec![vec![0.0; nth]; nr + 1];
        let mut rtt = vec![vec![0.0; nth]; nr + 1];
        rings[0] = vec![f[0]; nth];
        for i in 1..=nr {
            rings[i] = (0..nth).map(|j| f[node_index(nth, i, j)]).collect();
            rt[i] = per.derivative(&rings[i], 1);
            rtt[i] = per.derivative(&rings[i], 2);
        }
        let half = nth / 2;
        // value along the diameter through θ_j at signed index k
        let line = |src: &Vec<Vec<f64>>, k: i64, j: usize, odd: bool| -> f64 {
            if k >= 0 {
                src[k as usize][j]
            } else {
                let v = src[(-k) as usize][(j + half) % nth];
                if odd {
                    -v
                } else {
                    v
                }
            }
        };
        let mut d = vec![[0.0; 6]; 1 + nr * nth];
        let h = 1.0 / nr as f64;
        for i in 1..=nr {
            let ii = i as i64;
            let (lo, hi) = if ii + 2 <= nr as i64 { (ii - 2, ii + 2) } else { (nr as i64 - 5, nr as i64) };
            let xs: Vec<f64> = (lo..=hi).map(|k| k as f64 * h).collect();
            let w1 = fd_weights(i as f64 * h, &xs, 1);
            let w2 = fd_weights(i as f64 * h, &xs, 2);
            for j in 0..nth {
                let mut fr = 0.0;
                let mut frr = 0.0;
                let mut frt = 0.0;
                for (m, k) in (lo..=hi).enumerate() {
                    let v = line(&rings, k, j, false);
                    fr += w1[m] * v;
                    frr += w2[m] * v;
                    // θ-derivative keeps its sign across the center; ρ flips
                    frt += w1[m] * line(&rt, k, j, false);
                }
                d[node_index(nth, i, j)] = [rings[i][j], fr, rt[i][j], frr, frt, rtt[i][j]];
            }
        }
        d[0] = [f[0], 0.0, 0.0, 0.0, 0.0, 0.0];
        NodalDerivatives { nr, nth, d }
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 6] {
        self.d[node_index(self.nth, i, j)]
    }
}

/// Intrinsic and extrinsic geometry of a leaf at one ring node, all in the metric g.
#[derive(Clone, Copy, Debug)]
pub struct NodeGeometry {
    pub pos: [f64; 3],
    pub x_r: [f64; 3],
    pub x_t: [f64; 3],
    pub x_rr: [f64; 3],
    pub x_rt: [f64; 3],
    pub x_tt: [f64; 3],
    /// g-unit normal pointing into Ω.
    pub normal: [f64; 3],
    pub first: [[f64; 2]; 2],
    pub second: [[f64; 2]; 2],
    pub mean: f64,
    pub norm_a2: f64,
    pub det_shape: f64,
    /// √det of the first fundamental form in `(ρ, θ)`.
    pub area: f64,
    pub g: [[f64; 3]; 3],
    pub christoffel: [[[f64; 3]; 3]; 3],
    /// Chart vertical direction `P_z`.
    pub p_z: [f64; 3],
}

impl NodeGeometry {
    pub fn inner(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        quad3(&self.g, a, b)
    }

    /// Leaf second fundamental form on tangent vectors given by chart coefficients.
    pub fn second_on(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let s = &self.second;
        a[0] * (s[0][0] * b[0] + s[0][1] * b[1]) + a[1] * (s[1][0] * b[0] + s[1][1] * b[1])
    }

    /// Chart coefficients of a tangent vector.
    pub fn coefficients(&self, y: &[f64; 3]) -> [f64; 2] {
        let r = [self.inner(y, &self.x_r), self.inner(y, &self.x_t)];
        let f = &self.first;
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        [(f[1][1] * r[0] - f[0][1] * r[1]) / det, (f[0][0] * r[1] - f[1][0] * r[0]) / det]
    }

    /// Curvature of the ambient covariant derivative along the curve `θ ↦ X(ρ, θ)`.
    pub fn accel_theta(&self) -> [f64; 3] {
        let mut a = self.x_tt;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    a[k] += self.christoffel[k][i][j] * self.x_t[i] * self.x_t[j];
                }
            }
        }
        a
    }
}

/// Boundary data of a leaf at one contact node.
#[derive(Clone, Copy, Debug)]
pub struct ContactGeometry {
    pub theta: f64,
    pub node: NodeGeometry,
    pub wall: BoundaryPoint,
    /// g-unit tangent of the contact curve (counterclockwise).
    pub tau: [f64; 3],
    /// g-unit outward conormal of ∂Σ in Σ.
    pub eta: [f64; 3],
    /// g-unit conormal of ∂Σ in ∂M pointing away from Ω's cap.
    pub nu: [f64; 3],
    /// Geodesic curvature of ∂Σ in Σ.
    pub kappa: f64,
    /// `⟨X, N⟩_g`.
    pub cos_contact: f64,
    /// `∂_ν` of the prescribed cosine.
    pub dcos_nu: f64,
    /// Prescribed value for the side of Ω.
    pub cos_prescribed: f64,
    /// g-speed `|∂_θ X|_g`.
    pub speed: f64,
}

/// Geometry of a whole leaf.
pub struct LeafGeometry<'a> {
    pub domain: &'a Domain,
    pub metric: &'a MetricField,
    pub side: Side,
    pub leaf: PolarLeaf,
    pub derivs: NodalDerivatives,
}

impl<'a> LeafGeometry<'a> {
    pub fn new(domain: &'a Domain, metric: &'a MetricField, side: Side, leaf: &PolarLeaf) -> Result<Self> {
        if leaf.nth % 2 == 1 || leaf.nr < 5 {
            return Err(Error::Scenario("leaf geometry needs nr ≥ 5 and even nth".into()));
        }
        let derivs = NodalDerivatives::new(leaf.nr, leaf.nth, &leaf.w);
        Ok(LeafGeometry { domain, metric, side, leaf: leaf.clone(), derivs })
    }

    fn sign(&self) -> f64 {
        match self.side {
            Side::Top => 1.0,
            Side::Bottom => -1.0,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> Result<NodeGeometry> {
        if i == 0 {
            return Err(Error::NonDiskTopology);
        }
        let f = self.derivs.at(i, j);
        let (rho, th) = (self.leaf.rho(i), self.leaf.theta(j));
        let cj = chart_jet(self.domain, rho, th, f[0]);
        let (wr, wt) = (f[1], f[2]);
        let (wrr, wrt, wtt) = (f[3], f[4], f[5]);
        let pz = cj.d[2];
        let mut x_r = [0.0; 3];
        let mut x_t = [0.0; 3];
        let mut x_rr = [0.0; 3];
        let mut x_rt = [0.0; 3];
        let mut x_tt = [0.0; 3];
        let dd = &cj.dd;
        for c in 0..3 {
            x_r[c] = cj.d[0][c] + pz[c] * wr;
            x_t[c] = cj.d[1][c] + pz[c] * wt;
            x_rr[c] = dd[0][0][c] + 2.0 * dd[0][2][c] * wr + dd[2][2][c] * wr * wr + pz[c] * wrr;
            x_rt[c] = dd[0][1][c] + dd[0][2][c] * wt + dd[1][2][c] * wr + dd[2][2][c] * wr * wt + pz[c] * wrt;
            x_tt[c] = dd[1][1][c] + 2.0 * dd[1][2][c] * wt + dd[2][2][c] * wt * wt + pz[c] * wtt;
        }
        let gm = self.metric.metric_at(&cj.p)?;
        let g = self.metric.matrix::<f64>(&cj.p);
        let gam = self.metric.christoffel(&cj.p)?;
        let gi = gm.try_inverse().ok_or(Error::NonPositiveDefinite { point: cj.p, min_eig: 0.0 })?;
        let n = cross3(&x_r, &x_t);
        let mut up = [0.0; 3];
        for a in 0..3 {
            for b in 0..3 {
                up[a] += gi[(a, b)] * n[b];
            }
        }
        let nn = dot3(&n, &up).sqrt();
        let s = self.sign();
        let normal = [s * up[0] / nn, s * up[1] / nn, s * up[2] / nn];
        let tang = [x_r, x_t];
        let sec = [[x_rr, x_rt], [x_rt, x_tt]];
        let mut first = [[0.0; 2]; 2];
        let mut second = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                first[a][b] = quad3(&g, &tang[a], &tang[b]);
                let mut acc = sec[a][b];
                for k in 0..3 {
                    for p in 0..3 {
                        for q in 0..3 {
                            acc[k] += gam[k][p][q] * tang[a][p] * tang[b][q];
                        }
                    }
                }
                second[a][b] = -s * dot3(&n, &acc) / nn;
            }
        }
        let det = first[0][0] * first[1][1] - first[0][1] * first[1][0];
        let inv = [[first[1][1] / det, -first[0][1] / det], [-first[1][0] / det, first[0][0] / det]];
        let mut shape = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                shape[a][b] = inv[a][0] * second[0][b] + inv[a][1] * second[1][b];
            }
        }
        let mean = shape[0][0] + shape[1][1];
        let norm_a2 = shape[0][0] * shape[0][0] + 2.0 * shape[0][1] * shape[1][0] + shape[1][1] * shape[1][1];
        let det_shape = shape[0][0] * shape[1][1] - shape[0][1] * shape[1][0];
        Ok(NodeGeometry {
            pos: cj.p,
            x_r,
            x_t,
            x_rr,
            x_rt,
            x_tt,
            normal,
            first,
            second,
            mean,
            norm_a2,
            det_shape,
            area: det.sqrt(),
            g,
            christoffel: gam,
            p_z: pz,
        })
    }

    /// Ambient sectional curvature of the leaf's tangent plane and `Ric(N, N)`.
    pub fn ambient_curvature(&self, node: &NodeGeometry) -> Result<(f64, f64, f64)> {
        if self.metric.is_constant() {
            return Ok((0.0, 0.0, 0.0));
        }
        let pack = self.metric.curvature_at(&node.pos, 1e-4)?;
        let n = node.normal;
        let mut ric_nn = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                ric_nn += pack.ricci[a][b] * n[a] * n[b];
            }
        }
        Ok((0.5 * pack.scalar - ric_nn, ric_nn, pack.scalar))
    }

    /// Intrinsic Gauss curvature by the Gauss equation.
    pub fn gauss_curvature(&self, node: &NodeGeometry) -> Result<f64> {
        let (sec, _, _) = self.ambient_curvature(node)?;
        Ok(sec + node.det_shape)
    }

    pub fn contact(&self, j: usize) -> Result<ContactGeometry> {
        let nr = self.leaf.nr;
        let node = self.node(nr, j)?;
        let th = self.leaf.theta(j);
        let wall = BoundaryPoint::new(self.domain.jet(th, self.leaf.at(nr, j)), self.metric)?;
        let speed = node.inner(&node.x_t, &node.x_t).sqrt();
        let tau = scale(&node.x_t, 1.0 / speed);
        let pr = node.inner(&node.x_r, &tau);
        let e0 = [node.x_r[0] - pr * tau[0], node.x_r[1] - pr * tau[1], node.x_r[2] - pr * tau[2]];
        let eta = scale(&e0, 1.0 / node.inner(&e0, &e0).sqrt());
        let acc = node.accel_theta();
        let kappa = -node.inner(&eta, &acc) / (speed * speed);
        // conormal in the wall, g-orthogonal to τ, pointing away from Ω's cap
        let bv = wall.jet.pv;
        let pv = node.inner(&bv, &tau);
        let n0 = [bv[0] - pv * tau[0], bv[1] - pv * tau[1], bv[2] - pv * tau[2]];
        let mut nu = scale(&n0, 1.0 / node.inner(&n0, &n0).sqrt());
        let down = match self.side {
            Side::Top => -1.0,
            Side::Bottom => 1.0,
        };
        if nu[2] * down < 0.0 {
            nu = scale(&nu, -1.0);
        }
        let cos_contact = node.inner(&wall.frame.x_g, &node.normal);
        let cos_prescribed = self.sign() * wall.cos_rho;
        let dcos_nu = -self.sign() * wall.sin_rho * wall.drho(&nu);
        Ok(ContactGeometry { theta: th, node, wall, tau, eta, nu, kappa, cos_contact, dcos_nu, cos_prescribed, speed })
    }

    /// `∫_Σ f dA` from nodal values, Simpson in ρ and trapezoid in θ.
    pub fn integrate(&self, f: impl Fn(usize, usize, &NodeGeometry) -> Result<f64>) -> Result<f64> {
        let nr = self.leaf.nr;
        let nth = self.leaf.nth;
        let wr = simpson_weights(nr, 1.0 / nr as f64);
        let ht = 2.0 * PI / nth as f64;
        let mut s = 0.0;
        for i in 1..=nr {
            for j in 0..nth {
                let node = self.node(i, j)?;
                s += wr[i] * ht * node.area * f(i, j, &node)?;
            }
        }
        Ok(s)
    }

    /// `∮_{∂Σ} f ds` over the contact curve.
    pub fn integrate_contact(&self, f: impl Fn(&ContactGeometry) -> Result<f64>) -> Result<f64> {
        let ht = 2.0 * PI / self.leaf.nth as f64;
        let mut s = 0.0;
        for j in 0..self.leaf.nth {
            let c = self.contact(j)?;
            s += ht * c.speed * f(&c)?;
        }
        Ok(s)
    }

    pub fn area(&self) -> Result<f64> {
        self.integrate(|_, _, _| Ok(1.0))
    }
}

fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
