//! Boundary geometry: frames, fundamental forms, level-curve curvature, constant-speed
//! resampling of boundary patches, and quadratic fits at a convex point.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryJet, Domain};
use crate::error::{Error, Result};
use crate::metric::{ConstantBlock, MetricField};
use crate::real::{cross3, dot3, Real};
use crate::spectral::{Periodic, D1_4, D2_4};

/// Contact angles closer than this to 0 or π are rejected.
pub const ANGLE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Frame {
    pub tau_bar: [f64; 3],
    pub nu_bar: [f64; 3],
    pub x_out: [f64; 3],
    pub eta_bar: [f64; 3],
    /// g-unit level tangent.
    pub tau_g: [f64; 3],
    /// g-unit tangent normal to `tau_g`, oriented like `nu_bar`.
    pub nu_g: [f64; 3],
    /// g-unit outward normal.
    pub x_g: [f64; 3],
}

/// Everything the comparison checks need at one boundary point.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub jet: BoundaryJet,
    pub speed: f64,
    pub area: f64,
    pub cos_rho: f64,
    pub sin_rho: f64,
    pub frame: Frame,
    pub first_e: [[f64; 2]; 2],
    pub ii_e: [[f64; 2]; 2],
    pub first_g: [[f64; 2]; 2],
    pub ii_g: [[f64; 2]; 2],
    pub h0: f64,
    pub h_g: f64,
    pub k_bar: f64,
    pub g: [[f64; 3]; 3],
}

fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn gdot(g: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    crate::real::quad3(g, a, b)
}

fn trace_ratio(first: &[[f64; 2]; 2], second: &[[f64; 2]; 2]) -> f64 {
    let det = first[0][0] * first[1][1] - first[0][1] * first[1][0];
    (first[1][1] * second[0][0] - 2.0 * first[0][1] * second[0][1] + first[0][0] * second[1][1]) / det
}

impl BoundaryPoint {
    pub fn new(jet: BoundaryJet, metric: &MetricField) -> Result<Self> {
        let (pu, pv) = (jet.pu, jet.pv);
        let speed = (pu[0] * pu[0] + pu[1] * pu[1]).sqrt();
        if speed < 1e-12 {
            return Err(Error::DegenerateLevelCurve { v: jet.v, length: speed });
        }
        let n = cross3(&pu, &pv);
        let area = dot3(&n, &n).sqrt();
        let cos_rho = n[2] / area;
        let sin_rho = speed / area;
        if sin_rho <= ANGLE_EPS {
            return Err(Error::DegenerateContactAngle { u: jet.u, v: jet.v, sin: sin_rho });
        }
        let x_out = scale(&n, 1.0 / area);
        let eta_bar = [pu[1] / speed, -pu[0] / speed, 0.0];
        let tau_bar = scale(&pu, 1.0 / speed);
        let nu_bar = [cos_rho * eta_bar[0], cos_rho * eta_bar[1], -sin_rho];

        let g = metric.matrix::<f64>(&jet.p);
        let gm = metric.metric_at(&jet.p)?;
        let gi: Matrix3<f64> = gm.try_inverse().ok_or(Error::NonPositiveDefinite { point: jet.p, min_eig: 0.0 })?;
        let gam = metric.christoffel(&jet.p)?;
        let mut x_g = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                x_g[i] += gi[(i, j)] * n[j];
            }
        }
        let n_norm = dot3(&n, &x_g).sqrt();
        let x_g = scale(&x_g, 1.0 / n_norm);

        let basis = [pu, pv];
        let second = [[jet.puu, jet.puv], [jet.puv, jet.pvv]];
        let mut first_e = [[0.0; 2]; 2];
        let mut first_g = [[0.0; 2]; 2];
        let mut ii_e = [[0.0; 2]; 2];
        let mut ii_g = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                first_e[a][b] = dot3(&basis[a], &basis[b]);
                first_g[a][b] = gdot(&g, &basis[a], &basis[b]);
                ii_e[a][b] = -dot3(&x_out, &second[a][b]);
                let mut acc = second[a][b];
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            acc[k] += gam[k][i][j] * basis[a][i] * basis[b][j];
                        }
                    }
                }
                ii_g[a][b] = -dot3(&n, &acc) / n_norm;
            }
        }
        let h0 = trace_ratio(&first_e, &ii_e);
        let h_g = trace_ratio(&first_g, &ii_g);
        let k_bar = (pu[0] * jet.puu[1] - pu[1] * jet.puu[0]) / (speed * speed * speed);

        let tau_g = scale(&tau_bar, 1.0 / gdot(&g, &tau_bar, &tau_bar).sqrt());
        let proj = sub(&nu_bar, &scale(&tau_g, gdot(&g, &nu_bar, &tau_g)));
        let nu_g = scale(&proj, 1.0 / gdot(&g, &proj, &proj).sqrt());

        Ok(BoundaryPoint {
            jet,
            speed,
            area,
            cos_rho,
            sin_rho,
            frame: Frame { tau_bar, nu_bar, x_out, eta_bar, tau_g, nu_g, x_g },
            first_e,
            ii_e,
            first_g,
            ii_g,
            h0,
            h_g,
            k_bar,
            g,
        })
    }

    pub fn rho(&self) -> f64 {
        self.cos_rho.acos()
    }

    /// Coordinates of a tangent vector in the `(ψ_u, ψ_v)` basis.
    pub fn coords(&self, y: &[f64; 3]) -> [f64; 2] {
        let beta = y[2];
        let rest = sub(y, &scale(&self.jet.pv, beta));
        let alpha = dot3(&rest, &self.jet.pu) / (self.speed * self.speed);
        [alpha, beta]
    }

    fn form(&self, f: &[[f64; 2]; 2], y: &[f64; 3], z: &[f64; 3]) -> f64 {
        let a = self.coords(y);
        let b = self.coords(z);
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += f[i][j] * a[i] * b[j];
            }
        }
        s
    }

    /// Euclidean second fundamental form on tangent vectors.
    pub fn ii_euclid(&self, y: &[f64; 3], z: &[f64; 3]) -> f64 {
        self.form(&self.ii_e, y, z)
    }

    /// Second fundamental form under the metric on tangent vectors.
    pub fn ii_metric(&self, y: &[f64; 3], z: &[f64; 3]) -> f64 {
        self.form(&self.ii_g, y, z)
    }

    pub fn inner_g(&self, y: &[f64; 3], z: &[f64; 3]) -> f64 {
        gdot(&self.g, y, z)
    }

    /// Directional derivative of ρ̄ along a tangent vector, `dρ̄(Y) = II(Y, ν̄)`.
    pub fn drho(&self, y: &[f64; 3]) -> f64 {
        self.ii_euclid(y, &self.frame.nu_bar)
    }

    pub fn grad_tau_bar_rho(&self) -> f64 {
        self.drho(&self.frame.tau_bar)
    }

    pub fn grad_nu_bar_rho(&self) -> f64 {
        self.drho(&self.frame.nu_bar)
    }

    /// det II in a Euclidean orthonormal tangent basis.
    pub fn det_ii(&self) -> f64 {
        let d2 = self.ii_e[0][0] * self.ii_e[1][1] - self.ii_e[0][1] * self.ii_e[1][0];
        let d1 = self.first_e[0][0] * self.first_e[1][1] - self.first_e[0][1] * self.first_e[1][0];
        d2 / d1
    }

    /// II under the metric in the `(τ_g, ν_g)` basis, with its trace.
    pub fn second_fundamental_form(&self) -> ([[f64; 2]; 2], f64) {
        let (t, n) = (&self.frame.tau_g, &self.frame.nu_g);
        let m = [
            [self.ii_metric(t, t), self.ii_metric(t, n)],
            [self.ii_metric(n, t), self.ii_metric(n, n)],
        ];
        (m, self.h_g)
    }

    /// Euclidean II in the `(τ̄, ν̄)` basis.
    pub fn second_fundamental_form_euclid(&self) -> [[f64; 2]; 2] {
        let (t, n) = (&self.frame.tau_bar, &self.frame.nu_bar);
        [
            [self.ii_euclid(t, t), self.ii_euclid(t, n)],
            [self.ii_euclid(n, t), self.ii_euclid(n, n)],
        ]
    }

    /// Unit g-orthonormal pair rotated by `φ` from `(τ_g, ν_g)`.
    pub fn rotated_pair(&self, phi: f64) -> ([f64; 3], [f64; 3]) {
        let (c, s) = (phi.cos(), phi.sin());
        let (t, n) = (&self.frame.tau_g, &self.frame.nu_g);
        (add(&scale(t, c), &scale(n, s)), add(&scale(t, -s), &scale(n, c)))
    }
}

/// Builds the boundary point of a domain at chart coordinates `(θ, v)`.
pub fn boundary_point(domain: &Domain, metric: &MetricField, th: f64, v: f64) -> Result<BoundaryPoint> {
    BoundaryPoint::new(domain.jet(th, v), metric)
}

/// Boundary sampled on a uniform `(u, v)` grid with ghost rows beyond `[v_lo, v_hi]`.
#[derive(Clone, Debug)]
pub struct BoundaryPatch {
    pub domain: Domain,
    pub nu: usize,
    pub nv: usize,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Chart angle θ of node `(i, row)`; identity before resampling.
    theta: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    pub resampled: bool,
}

const GHOST: usize = 4;

/// Grid derivatives of a patch at its real rows.
#[derive(Clone, Debug)]
pub struct PatchDerivatives {
    pub nu: usize,
    pub nv: usize,
    jets: Vec<BoundaryJet>,
    /// `(∂_u cos ρ̄, ∂_v cos ρ̄)` from differentiating the sampled angle field.
    dcos: Vec<[f64; 2]>,
}

impl BoundaryPatch {
    pub fn new(domain: &Domain, nu: usize, nv: usize, v_lo: f64, v_hi: f64) -> Result<Self> {
        if nu < 8 || nv < 5 || !(v_lo < v_hi) {
            return Err(Error::Scenario("patch grid too small or empty v-range".into()));
        }
        let rows = nv + 2 * GHOST;
        let mut theta = Vec::with_capacity(rows * nu);
        let mut x = Vec::with_capacity(rows * nu);
        let mut y = Vec::with_capacity(rows * nu);
        let mut p = BoundaryPatch {
            domain: domain.clone(),
            nu,
            nv,
            v_lo,
            v_hi,
            theta: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            resampled: false,
        };
        for r in 0..rows {
            let v = p.row_height(r);
            for i in 0..nu {
                let th = 2.0 * PI * i as f64 / nu as f64;
                let q: [f64; 3] = domain.boundary(th, v);
                if !(q[0].is_finite() && q[1].is_finite()) {
                    return Err(Error::OutOfDomain(q));
                }
                theta.push(th);
                x.push(q[0]);
                y.push(q[1]);
            }
        }
        p.theta = theta;
        p.x = x;
        p.y = y;
        Ok(p)
    }

    pub fn dv(&self) -> f64 {
        (self.v_hi - self.v_lo) / (self.nv - 1) as f64
    }

    /// Height of storage row `r` (ghost rows included).
    fn row_height(&self, r: usize) -> f64 {
        self.v_lo + (r as f64 - GHOST as f64) * self.dv()
    }

    pub fn v_at(&self, j: usize) -> f64 {
        self.row_height(j + GHOST)
    }

    pub fn u_at(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.nu as f64
    }

    fn idx(&self, i: usize, r: usize) -> usize {
        r * self.nu + i
    }

    /// Position of real node `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 3] {
        let k = self.idx(i, j + GHOST);
        [self.x[k], self.y[k], self.v_at(j)]
    }

    pub fn theta_at(&self, i: usize, j: usize) -> f64 {
        self.theta[self.idx(i, j + GHOST)]
    }

    fn row(&self, data: &[f64], r: usize) -> Vec<f64> {
        data[r * self.nu..(r + 1) * self.nu].to_vec()
    }

    /// Reparametrizes each level curve by scaled arclength.
    pub fn resample_constant_speed(&self) -> Result<BoundaryPatch> {
        let per = Periodic::new(self.nu);
        let rows = self.nv + 2 * GHOST;
        let mut out = self.clone();
        for r in 0..rows {
            let v = self.row_height(r);
            let th_row = self.row(&self.theta, r);
            let xr = self.row(&self.x, r);
            let yr = self.row(&self.y, r);
            // speed with respect to the current parameter u, then converted to θ
            let xu = per.derivative(&xr, 1);
            let yu = per.derivative(&yr, 1);
            let speed: Vec<f64> = xu.iter().zip(&yu).map(|(a, b)| (a * a + b * b).sqrt()).collect();
            let c = per.coefficients(&speed);
            let length = 2.0 * PI * c[0].re;
            if !(length > 1e-10) {
                return Err(Error::DegenerateLevelCurve { v, length });
            }
            // arclength as a function of the current parameter; invert by Newton
            let mut u_new = vec![0.0; self.nu];
            for (k, slot) in u_new.iter_mut().enumerate() {
                let target = length * k as f64 / self.nu as f64;
                let mut u = 2.0 * PI * k as f64 / self.nu as f64;
                for _ in 0..50 {
                    let f = per.antiderivative(&c, u) - target;
                    let sp = per.eval(&c, u);
                    let step = f / sp;
                    u -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                *slot = u;
            }
            // map current parameter back to chart angle by spectral interpolation of θ(u) - u
            let drift: Vec<f64> = th_row
                .iter()
                .enumerate()
                .map(|(i, t)| t - 2.0 * PI * i as f64 / self.nu as f64)
                .collect();
            let dc = per.coefficients(&drift);
            for (k, &u) in u_new.iter().enumerate() {
                let th = u + per.eval(&dc, u);
                let q: [f64; 3] = self.domain.boundary(th, v);
                let at = self.idx(k, r);
                out.theta[at] = th;
                out.x[at] = q[0];
                out.y[at] = q[1];
            }
        }
        out.resampled = true;
        Ok(out)
    }

    /// Level-curve speed `sqrt(x_u² + y_u²)` at every node of real row `j`.
    pub fn speeds(&self, j: usize) -> Vec<f64> {
        let per = Periodic::new(self.nu);
        let r = j + GHOST;
        let xu = per.derivative(&self.row(&self.x, r), 1);
        let yu = per.derivative(&self.row(&self.y, r), 1);
        xu.iter().zip(&yu).map(|(a, b)| (a * a + b * b).sqrt()).collect()
    }

    /// Spectral derivatives in u and fourth-order differences in v.
    pub fn derivatives(&self) -> PatchDerivatives {
        let per = Periodic::new(self.nu);
        let rows = self.nv + 2 * GHOST;
        let nu = self.nu;
        let h = self.dv();
        let mut xu = vec![0.0; rows * nu];
        let mut yu = vec![0.0; rows * nu];
        let mut xuu = vec![0.0; rows * nu];
        let mut yuu = vec![0.0; rows * nu];
        for r in 0..rows {
            let xr = self.row(&self.x, r);
            let yr = self.row(&self.y, r);
            xu[r * nu..(r + 1) * nu].copy_from_slice(&per.derivative(&xr, 1));
            yu[r * nu..(r + 1) * nu].copy_from_slice(&per.derivative(&yr, 1));
            xuu[r * nu..(r + 1) * nu].copy_from_slice(&per.derivative(&xr, 2));
            yuu[r * nu..(r + 1) * nu].copy_from_slice(&per.derivative(&yr, 2));
        }
        let dv1 = |f: &[f64], i: usize, r: usize| -> f64 {
            (0..5).map(|s| D1_4[s] * f[(r + s - 2) * nu + i]).sum::<f64>() / h
        };
        let dv2 = |f: &[f64], i: usize, r: usize| -> f64 {
            (0..5).map(|s| D2_4[s] * f[(r + s - 2) * nu + i]).sum::<f64>() / (h * h)
        };
        // angle field on rows that admit a centered v-stencil
        let mut cosr = vec![0.0; rows * nu];
        for r in 2..rows - 2 {
            for i in 0..nu {
                let k = r * nu + i;
                let (a, b) = (dv1(&self.x, i, r), dv1(&self.y, i, r));
                let c2 = xu[k] * xu[k] + yu[k] * yu[k];
                let d = xu[k] * b - yu[k] * a;
                cosr[k] = d / (c2 + d * d).sqrt();
            }
        }
        let mut jets = Vec::with_capacity(self.nv * nu);
        let mut dcos = Vec::with_capacity(self.nv * nu);
        for j in 0..self.nv {
            let r = j + GHOST;
            let v = self.v_at(j);
            let cos_u = per.derivative(&self.row(&cosr, r), 1);
            for i in 0..nu {
                let k = r * nu + i;
                jets.push(BoundaryJet {
                    u: self.u_at(i),
                    v,
                    p: [self.x[k], self.y[k], v],
                    pu: [xu[k], yu[k], 0.0],
                    pv: [dv1(&self.x, i, r), dv1(&self.y, i, r), 1.0],
                    puu: [xuu[k], yuu[k], 0.0],
                    puv: [dv1(&xu, i, r), dv1(&yu, i, r), 0.0],
                    pvv: [dv2(&self.x, i, r), dv2(&self.y, i, r), 0.0],
                });
                dcos.push([cos_u[i], dv1(&cosr, i, r)]);
            }
        }
        PatchDerivatives { nu, nv: self.nv, jets, dcos }
    }
}

impl PatchDerivatives {
    pub fn jet(&self, i: usize, j: usize) -> BoundaryJet {
        self.jets[j * self.nu + i]
    }

    /// Derivative of the sampled cos ρ̄ field along ν̄ at node `(i, j)`.
    pub fn grad_nu_bar_cos(&self, bp: &BoundaryPoint, i: usize, j: usize) -> f64 {
        let d = self.dcos[j * self.nu + i];
        let c = bp.coords(&bp.frame.nu_bar);
        d[0] * c[0] + d[1] * c[1]
    }

    /// Derivative of the sampled ρ̄ field along a tangent vector.
    pub fn grad_rho(&self, bp: &BoundaryPoint, i: usize, j: usize, y: &[f64; 3]) -> f64 {
        let d = self.dcos[j * self.nu + i];
        let c = bp.coords(y);
        -(d[0] * c[0] + d[1] * c[1]) / bp.sin_rho
    }

    pub fn frames_at(&self, metric: &MetricField, i: usize, j: usize) -> Result<Frame> {
        Ok(BoundaryPoint::new(self.jet(i, j), metric)?.frame)
    }

    pub fn second_fundamental_form(&self, metric: &MetricField, i: usize, j: usize) -> Result<([[f64; 2]; 2], f64)> {
        Ok(BoundaryPoint::new(self.jet(i, j), metric)?.second_fundamental_form())
    }

    pub fn level_curve_curvature(&self, i: usize, j: usize) -> Result<f64> {
        let jet = self.jet(i, j);
        let c = (jet.pu[0] * jet.pu[0] + jet.pu[1] * jet.pu[1]).sqrt();
        if c < 1e-12 {
            return Err(Error::DegenerateLevelCurve { v: jet.v, length: c });
        }
        Ok((jet.pu[0] * jet.puu[1] - jet.pu[1] * jet.puu[0]) / (c * c * c))
    }
}

/// Boundary Hessian at a strictly convex point: `∂M = {x3 = -c11 x1² - 2 c12 x1 x2 - c22 x2²}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

impl QuadraticFit {
    pub fn discriminant(&self) -> f64 {
        self.c11 * self.c22 - self.c12 * self.c12
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.c11 > 0.0 && self.c22 > 0.0 && self.discriminant() > 0.0
    }

    /// Quadratic part of the boundary graph.
    pub fn height(&self, x1: f64, x2: f64) -> f64 {
        -(self.c11 * x1 * x1 + 2.0 * self.c12 * x1 * x2 + self.c22 * x2 * x2)
    }
}

/// Result of fitting, with the rotation that diagonalized the metric block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub fit: QuadraticFit,
    /// Metric in the rotated axes.
    pub g0: ConstantBlock,
    /// Rotation angle of the new x1-axis.
    pub angle: f64,
    pub not_strictly_convex: bool,
}

const FIT_RADII: [f64; 3] = [0.2, 0.1, 0.05];

fn fit_at_radius(height: &dyn Fn(f64, f64) -> f64, r: f64) -> [f64; 3] {
    let (rings, spokes) = (8, 24);
    let mut rows: Vec<[f64; 10]> = Vec::new();
    let mut rhs = Vec::new();
    rows.push([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    rhs.push(-height(0.0, 0.0));
    for a in 1..=rings {
        let rr = r * a as f64 / rings as f64;
        for b in 0..spokes {
            let t = 2.0 * PI * (b as f64 + 0.5 * (a % 2) as f64) / spokes as f64;
            let (x, y) = (rr * t.cos(), rr * t.sin());
            rows.push([1.0, x, y, x * x, 2.0 * x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]);
            rhs.push(-height(x, y));
        }
    }
    let a = DMatrix::from_fn(rows.len(), 10, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    let sol = a.svd(true, true).solve(&b, 1e-14).expect("least squares");
    [sol[3], sol[4], sol[5]]
}

/// Least-squares quadratic fit of a boundary graph `z = height(x1, x2)` at a point with a
/// horizontal tangent plane, Richardson-extrapolated over shrinking radii, in axes where the
/// supplied metric block is diagonal.
pub fn quadratic_fit_boundary(height: &dyn Fn(f64, f64) -> f64, g0: &[[f64; 3]; 3]) -> FitReport {
    let fits: Vec<[f64; 3]> = FIT_RADII.iter().map(|&r| fit_at_radius(height, r)).collect();
    let mut c = [0.0; 3];
    for k in 0..3 {
        let r1a = (4.0 * fits[1][k] - fits[0][k]) / 3.0;
        let r1b = (4.0 * fits[2][k] - fits[1][k]) / 3.0;
        c[k] = (16.0 * r1b - r1a) / 15.0;
    }
    let angle = if g0[0][1].abs() < 1e-15 {
        0.0
    } else {
        0.5 * (2.0 * g0[0][1]).atan2(g0[0][0] - g0[1][1])
    };
    let (cs, sn) = (angle.cos(), angle.sin());
    let rot = Matrix2::new(cs, -sn, sn, cs);
    let cm = Matrix2::new(c[0], c[1], c[1], c[2]);
    let cr = rot.transpose() * cm * rot;
    let am = Matrix2::new(g0[0][0], g0[0][1], g0[1][0], g0[1][1]);
    let ar = rot.transpose() * am * rot;
    let a13 = cs * g0[0][2] + sn * g0[1][2];
    let a23 = -sn * g0[0][2] + cs * g0[1][2];
    let fit = QuadraticFit { c11: cr[(0, 0)], c12: cr[(0, 1)], c22: cr[(1, 1)] };
    FitReport {
        fit,
        g0: ConstantBlock { a11: ar[(0, 0)], a22: ar[(1, 1)], a33: g0[2][2], a13, a23 },
        angle,
        not_strictly_convex: !fit.is_strictly_convex(),
    }
}

/// Principal curvatures of a symmetric 2×2 form.
pub fn principal_values(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let e = SymmetricEigen::new(Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])).eigenvalues;
    (e[0].min(e[1]), e[0].max(e[1]))
}

/// Pointwise residuals of the level-curve identities on a patch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `H0 + (1/sin ρ̄) ∇_ν̄ cos ρ̄ − sin ρ̄ k̄` per interior node.
    pub mean_curvature: Vec<f64>,
    /// `⟨∇_ν̄ η̄, ν̄⟩` per interior node.
    pub divergence: Vec<f64>,
    pub max_mean_curvature: f64,
    pub max_divergence: f64,
}

/// Derivative of η̄ along a tangent vector, from the jet.
pub fn grad_eta_bar(bp: &BoundaryPoint, y: &[f64; 3]) -> [f64; 3] {
    let j = &bp.jet;
    let [a, b] = bp.coords(y);
    let du = [a * j.puu[0] + b * j.puv[0], a * j.puu[1] + b * j.puv[1]];
    let c = bp.speed;
    let dc = (j.pu[0] * du[0] + j.pu[1] * du[1]) / c;
    [du[1] / c - j.pu[1] * dc / (c * c), -du[0] / c + j.pu[0] * dc / (c * c), 0.0]
}

pub fn identity_residuals(patch: &BoundaryPatch) -> Result<IdentityResiduals> {
    let pd = patch.derivatives();
    let e = MetricField::euclidean();
    let mut mean_curvature = Vec::with_capacity(patch.nu * patch.nv);
    let mut divergence = Vec::with_capacity(patch.nu * patch.nv);
    for j in 0..patch.nv {
        for i in 0..patch.nu {
            let bp = BoundaryPoint::new(pd.jet(i, j), &e)?;
            let k = pd.level_curve_curvature(i, j)?;
            let dcos = pd.grad_nu_bar_cos(&bp, i, j);
            mean_curvature.push(bp.h0 + dcos / bp.sin_rho - bp.sin_rho * k);
            divergence.push(dot3(&grad_eta_bar(&bp, &bp.frame.nu_bar), &bp.frame.nu_bar));
        }
    }
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(IdentityResiduals {
        max_mean_curvature: max(&mean_curvature),
        max_divergence: max(&divergence),
        mean_curvature,
        divergence,
    })
}

/// Graph `x3 = G_{s,t}(x1, x2)` near the top point, clipped to the region below the wall.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticLeaf {
    pub fit: QuadraticFit,
    pub b: [f64; 3],
    pub s: f64,
    pub t: f64,
    /// Radius of the clipped graph's footprint per direction `2πj/nth`.
    pub radius: Vec<f64>,
}

impl QuadraticLeaf {
    pub fn height<T: Real>(&self, x1: T, x2: T) -> T {
        let f = &self.fit;
        let k = 1.0 + self.s;
        x1 * x1 * (f.c11 * (self.b[0] * k - 1.0))
            + x2 * x2 * (f.c22 * (self.b[2] * k - 1.0))
            + x1 * x2 * (2.0 * f.c12 * (self.b[1] * k - 1.0))
            - self.t * self.t
    }

    /// Radius of `E_s = {c11b11x1² + c22b22x2² + 2c12b12x1x2 < (1+s)^{-1}}` along a direction.
    pub fn limit_radius(&self, th: f64) -> f64 {
        let f = &self.fit;
        let (c, s) = (th.cos(), th.sin());
        let q = f.c11 * self.b[0] * c * c + f.c22 * self.b[2] * s * s + 2.0 * f.c12 * self.b[1] * c * s;
        1.0 / (q * (1.0 + self.s)).sqrt()
    }

    /// Largest radial gap between `(1/t)·footprint` and `E_s`.
    pub fn rescaled_gap(&self) -> f64 {
        let n = self.radius.len();
        (0..n)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / n as f64;
                (self.radius[j] / self.t - self.limit_radius(th)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn point(&self, rho: f64, th: f64) -> [f64; 3] {
        let n = self.radius.len();
        let x = th / (2.0 * PI) * n as f64;
        let j0 = x.floor() as usize % n;
        let f = x - x.floor();
        let r = rho * ((1.0 - f) * self.radius[j0] + f * self.radius[(j0 + 1) % n]);
        let (x1, x2) = (r * th.cos(), r * th.sin());
        [x1, x2, self.height(x1, x2)]
    }
}

/// Clips the graph of `G_{s,t}` against a wall given as a height function over the tangent plane.
pub fn quadratic_leaf(
    fit: QuadraticFit,
    b: [f64; 3],
    s: f64,
    t: f64,
    nth: usize,
    wall: &dyn Fn(f64, f64) -> f64,
) -> Result<QuadraticLeaf> {
    if s < 0.0 || t <= 0.0 || !fit.is_strictly_convex() {
        return Err(Error::EmptyLeaf);
    }
    let mut leaf = QuadraticLeaf { fit, b, s, t, radius: Vec::with_capacity(nth) };
    for j in 0..nth {
        let th = 2.0 * PI * j as f64 / nth as f64;
        let gap = |r: f64| leaf.height(r * th.cos(), r * th.sin()) - wall(r * th.cos(), r * th.sin());
        if gap(0.0) >= 0.0 {
            return Err(Error::EmptyLeaf);
        }
        let mut hi = leaf.limit_radius(th) * t;
        let mut tries = 0;
        while gap(hi) < 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 40 {
                return Err(Error::EmptyLeaf);
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        leaf.radius.push(0.5 * (lo + hi));
    }
    Ok(leaf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    // [DERIVED]
    #[test]
    fn cylinder_frames_and_curvatures() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let bp = boundary_point(&d, &MetricField::euclidean(), 0.4, 0.2).unwrap();
        let f = bp.frame;
        assert!(close(f.x_out[0], 0.4f64.cos(), 1e-14) && close(f.x_out[2], 0.0, 1e-14));
        assert!(close(bp.cos_rho, 0.0, 1e-15));
        for k in 0..3 {
            assert!(close(f.eta_bar[k], f.x_out[k], 1e-14));
        }
        let (ii, h) = bp.second_fundamental_form();
        let (k1, k2) = principal_values(&ii);
        assert!(close(k1, 0.0, 1e-14) && close(k2, 1.0, 1e-14) && close(h, 1.0, 1e-14));
        assert!(close(bp.k_bar, 1.0, 1e-14));
    }

    // [DERIVED]
    #[test]
    fn sphere_frames_at_equator_and_mean_curvature() {
        let d = Domain::sphere(1.0, -0.9, 0.9);
        let bp = boundary_point(&d, &MetricField::euclidean(), 1.0, 0.0).unwrap();
        assert!(close(bp.frame.tau_bar[0], -(1.0f64).sin(), 1e-14));
        assert!(close(bp.frame.tau_bar[1], (1.0f64).cos(), 1e-14));
        assert!(close(bp.h0, 2.0, 1e-13) && close(bp.h_g, 2.0, 1e-13));
        let bp = boundary_point(&d, &MetricField::euclidean(), 1.0, 0.6).unwrap();
        assert!(close(bp.cos_rho, 0.6, 1e-14));
        assert!(close(bp.k_bar, 1.0 / 0.8, 1e-13));
        assert!(close(bp.det_ii(), 1.0, 1e-12));
    }

    // [DERIVED]
    #[test]
    fn frame_decomposition_identity() {
        let d = Domain::ellipsoid(2.0, 1.0, 1.5, -1.0, 1.0);
        for (u, v) in [(0.1, 0.3), (2.0, -0.7), (4.0, 0.9)] {
            let bp = boundary_point(&d, &MetricField::euclidean(), u, v).unwrap();
            let f = bp.frame;
            for k in 0..3 {
                let e = if k == 2 { 1.0 } else { 0.0 };
                let rebuilt = bp.cos_rho * e + bp.sin_rho * f.eta_bar[k];
                assert!(close(rebuilt, f.x_out[k], 1e-14));
            }
            assert!(close(dot3(&f.tau_bar, &f.nu_bar), 0.0, 1e-14));
            assert!(close(dot3(&f.nu_bar, &f.x_out), 0.0, 1e-14));
            // τ̄ counterclockwise seen from +z
            let c = cross3(&bp.jet.p, &f.tau_bar);
            assert!(c[2] > 0.0);
        }
    }

    // [DERIVED]
    #[test]
    fn metric_unit_frames() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let g = MetricField::diag(4.0, 1.0, 1.0);
        let f = boundary_point(&d, &g, 0.0, 0.0).unwrap().frame;
        assert!(close(f.tau_g[1], 1.0, 1e-15) && close(f.tau_g[0], 0.0, 1e-15));
        assert!(close(f.nu_g[2], -1.0, 1e-15));
        assert!(close(f.x_g[0], 0.5, 1e-15));
    }

    // [DERIVED]
    #[test]
    fn homothetic_metric_scales_mean_curvature() {
        let d = Domain::sphere(1.0, -0.9, 0.9);
        let g = MetricField::diag(9.0, 9.0, 9.0);
        let bp = boundary_point(&d, &g, 0.3, 0.2).unwrap();
        assert!(close(bp.h_g, 2.0 / 3.0, 1e-13));
    }

    // [DERIVED]
    #[test]
    fn conformal_metric_mean_curvature_formula() {
        // H_g = e^{-f}(H + 2 ∂_X f) for g = e^{2f} g_Eucl
        let f = crate::expr::parse_expression("0.1*x + 0.05*z^2").unwrap();
        let g = MetricField::conformal(&f).unwrap();
        let d = Domain::sphere(1.0, -0.9, 0.9);
        let bp = boundary_point(&d, &g, 0.7, 0.3).unwrap();
        let p = bp.jet.p;
        let fx = 0.1 * p[0] + 0.05 * p[2] * p[2];
        let dxf = 0.1 * bp.frame.x_out[0] + 0.1 * p[2] * bp.frame.x_out[2];
        let expect = (-fx).exp() * (2.0 + 2.0 * dxf);
        assert!(close(bp.h_g, expect, 1e-12), "{} vs {}", bp.h_g, expect);
    }

    // [TRIVIAL]
    #[test]
    fn plane_has_zero_second_fundamental_form() {
        // wall x = const portion: prism with eps = 0 restricted is a cylinder; use a large
        // cylinder radius to approximate, and check the exactly flat vertical direction
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let bp = boundary_point(&d, &MetricField::euclidean(), 0.0, 0.0).unwrap();
        let ez = [0.0, 0.0, 1.0];
        assert_eq!(bp.ii_euclid(&ez, &ez), 0.0);
    }

    // [DERIVED]
    #[test]
    fn resampling_keeps_cylinder_and_fixes_ellipse_speed() {
        let c = BoundaryPatch::new(&Domain::cylinder(1.0, -1.0, 1.0), 64, 9, -0.5, 0.5).unwrap();
        let r = c.resample_constant_speed().unwrap();
        for i in 0..64 {
            assert!(close(r.point(i, 3)[0], c.point(i, 3)[0], 1e-12));
        }
        let x = crate::expr::parse_expression("2*cos(u)").unwrap();
        let y = crate::expr::parse_expression("sin(u)").unwrap();
        let e = Domain::parametric(x, y, -1.0, 1.0).unwrap();
        let p = BoundaryPatch::new(&e, 256, 5, -0.5, 0.5).unwrap().resample_constant_speed().unwrap();
        let s = p.speeds(2);
        // perimeter of the ellipse with semi-axes 2 and 1 by adaptive-free fine quadrature
        let n = 200000;
        let perim: f64 = (0..n)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                (4.0 * t.sin().powi(2) + t.cos().powi(2)).sqrt()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / n as f64;
        for v in &s {
            assert!(close(*v, perim / (2.0 * PI), 1e-9), "{v} {}", perim / (2.0 * PI));
        }
    }

    // [DERIVED]
    #[test]
    fn sphere_patch_speed_per_level() {
        let p = BoundaryPatch::new(&Domain::sphere(1.0, -0.95, 0.95), 32, 9, -0.4, 0.4).unwrap();
        let p = p.resample_constant_speed().unwrap();
        for j in 0..9 {
            let v = p.v_at(j);
            for s in p.speeds(j) {
                assert!(close(s, (1.0 - v * v).sqrt(), 1e-12));
            }
        }
    }

    // [DERIVED]
    #[test]
    fn level_curve_curvature_examples() {
        let d = Domain::sphere(1.0, -0.95, 0.95);
        let p = BoundaryPatch::new(&d, 32, 9, -0.4, 0.4).unwrap().derivatives();
        let v: f64 = -0.4 + 0.8 * 3.0 / 8.0;
        assert!(close(p.level_curve_curvature(5, 3).unwrap(), 1.0 / (1.0 - v * v).sqrt(), 1e-10));
        let x = crate::expr::parse_expression("2*cos(u)").unwrap();
        let y = crate::expr::parse_expression("sin(u)").unwrap();
        let e = Domain::parametric(x, y, -1.0, 1.0).unwrap();
        let q = BoundaryPatch::new(&e, 64, 5, -0.5, 0.5).unwrap().derivatives();
        assert!(close(q.level_curve_curvature(0, 2).unwrap(), 2.0, 1e-12));
    }

    // [DERIVED]
    #[test]
    fn quadratic_fits() {
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let sphere = |x: f64, y: f64| (1.0 - x * x - y * y).sqrt() - 1.0;
        let f = quadratic_fit_boundary(&sphere, &eye).fit;
        assert!(close(f.c11, 0.5, 1e-6) && close(f.c22, 0.5, 1e-6) && close(f.c12, 0.0, 1e-10));
        let par = |x: f64, y: f64| -x * x - 3.0 * y * y;
        let f = quadratic_fit_boundary(&par, &eye).fit;
        assert!(close(f.c11, 1.0, 1e-10) && close(f.c22, 3.0, 1e-10) && close(f.c12, 0.0, 1e-10));
        let rot = |x: f64, y: f64| -2.0 * x * x - 2.0 * y * y + 2.0 * x * y;
        let f = quadratic_fit_boundary(&rot, &eye).fit;
        assert!(close(f.c12, -1.0, 1e-10) && close(f.c11, 2.0, 1e-10));
        let concave = |x: f64, y: f64| -x * x + y * y;
        assert!(quadratic_fit_boundary(&concave, &eye).not_strictly_convex);
    }

    // [DERIVED]
    #[test]
    fn fit_rotates_to_diagonal_block() {
        let g = [[2.0, 0.5, 0.1], [0.5, 1.0, 0.0], [0.1, 0.0, 1.0]];
        let par = |x: f64, y: f64| -x * x - 3.0 * y * y;
        let r = quadratic_fit_boundary(&par, &g);
        let (c, s) = (r.angle.cos(), r.angle.sin());
        let a12 = -s * c * g[0][0] + (c * c - s * s) * g[0][1] + s * c * g[1][1];
        assert!(a12.abs() < 1e-14);
        // invariants of the quadratic form survive the rotation
        assert!(close(r.fit.c11 + r.fit.c22, 4.0, 1e-9));
        assert!(close(r.fit.discriminant(), 3.0, 1e-9));
    }

    // [PAPER]
    #[test]
    fn level_curve_identities_on_model_walls() {
        for d in [Domain::sphere(1.0, -0.9, 0.9), Domain::cylinder(1.0, -1.0, 1.0), Domain::ellipsoid(1.5, 1.0, 0.8, -0.7, 0.7)] {
            let res: Vec<IdentityResiduals> = [33, 65, 129]
                .iter()
                .map(|&nv| identity_residuals(&BoundaryPatch::new(&d, 64, nv, -0.4, 0.4).unwrap().resample_constant_speed().unwrap()).unwrap())
                .collect();
            for w in res.windows(2) {
                let (a, b) = (w[0].max_mean_curvature, w[1].max_mean_curvature);
                assert!(b < 1e-10 || (a / b).log2() > 3.5, "{a:e} {b:e}");
                assert!(w[1].max_divergence < 1e-14);
            }
            assert!(res[2].max_mean_curvature < 1e-6);
        }
    }

    // [DERIVED]
    #[test]
    fn quadratic_leaf_examples() {
        let fit = QuadraticFit { c11: 0.5, c12: 0.0, c22: 0.5 };
        let wall = |x: f64, y: f64| -0.5 * x * x - 0.5 * y * y;
        let l = quadratic_leaf(fit, [1.0, 1.0, 1.0], 0.0, 0.1, 16, &wall).unwrap();
        assert!((l.height(0.3, -0.2) + 0.01).abs() < 1e-16);
        assert!((l.limit_radius(0.7) - 2f64.sqrt()).abs() < 1e-14);
        assert!(l.rescaled_gap() < 1e-12);
        let l = quadratic_leaf(fit, [1.0, 1.0, 1.0], 1.0, 0.1, 16, &wall).unwrap();
        assert!((l.height(0.3, -0.2) - (0.5 * 0.09 + 0.5 * 0.04 - 0.01)).abs() < 1e-15);
        assert!(matches!(quadratic_leaf(fit, [1.0, 1.0, 1.0], 0.0, 0.0, 16, &wall), Err(Error::EmptyLeaf)));
        // unit sphere around its top point: footprint converges to the disk of radius √2
        let sphere = |x: f64, y: f64| (1.0 - x * x - y * y).sqrt() - 1.0;
        let gaps: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&t| quadratic_leaf(fit, [1.0, 1.0, 1.0], 0.2, t, 16, &sphere).unwrap().rescaled_gap())
            .collect();
        assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0] && gaps[2] < 1e-3, "{gaps:?}");
    }
}
