//! Minimization of the capillary energy over height-function leaves with a Sobolev-preconditioned
//! Armijo descent, and trivial/nontrivial classification.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::capillary::Region;
use crate::domain::{Cap, Domain, Side};
use crate::error::Result;
use crate::leaf::{CapillaryEnergy, LeafGeometry, PolarLeaf, Recipe};
use crate::metric::MetricField;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyGradient {
    pub energy: f64,
    /// `∂E/∂w_i`.
    pub nodal: Vec<f64>,
    /// Nodal gradient over the volume weights, oriented so it equals the mean curvature.
    pub density: Vec<f64>,
    /// `⟨B_v, η − ν cos ρ̄⟩` at each contact node.
    pub boundary: Vec<f64>,
}

pub fn energy_gradient(domain: &Domain, metric: &MetricField, region: &Region) -> Result<EnergyGradient> {
    let en = CapillaryEnergy::for_leaf(domain, metric, region.side, &region.leaf)?;
    let (energy, nodal, mass) = en.gradient_and_mass(&region.leaf.w)?;
    let s = en.side_sign();
    let density = nodal.iter().zip(&mass).map(|(g, m)| s * g / m).collect();
    let geo = LeafGeometry::new(domain, metric, region.side, &region.leaf)?;
    let mut boundary = Vec::with_capacity(region.leaf.nth);
    for j in 0..region.leaf.nth {
        let c = geo.contact(j)?;
        let y = c.wall.jet.pv;
        let m = [
            c.eta[0] - c.nu[0] * c.cos_prescribed,
            c.eta[1] - c.nu[1] * c.cos_prescribed,
            c.eta[2] - c.nu[2] * c.cos_prescribed,
        ];
        boundary.push(c.node.inner(&y, &m));
    }
    Ok(EnergyGradient { energy, nodal, density, boundary })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinimizeOptions {
    pub tol_grad: f64,
    pub max_iters: usize,
    pub armijo: f64,
    pub shrink: f64,
    /// Mass shift of the Sobolev preconditioner.
    pub mu: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { tol_grad: 1e-8, max_iters: 5000, armijo: 1e-4, shrink: 0.5, mu: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Trivial,
    Nontrivial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimizerResult {
    pub leaf: PolarLeaf,
    pub side: Side,
    pub energy: f64,
    pub initial_energy: f64,
    pub grad_norm: f64,
    pub max_mean_curvature: f64,
    pub max_angle_residual: f64,
    pub classification: Classification,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub log: Vec<IterRecord>,
}

impl MinimizerResult {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iter,energy,grad_norm,step\n");
        for r in &self.log {
            s.push_str(&format!("{},{},{},{}\n", r.iter, r.energy, r.grad_norm, r.step));
        }
        s
    }
}

/// `K + μ·M` on the polar grid, inverted by an FFT in θ and a tridiagonal solve per mode.
pub struct SobolevPreconditioner {
    nr: usize,
    nth: usize,
    mu: f64,
    radial: Vec<f64>,
    angular: Vec<f64>,
    mass: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SobolevPreconditioner {
    /// `mass[i]` is the lumped weight of one node on ring `i` (`mass[0]` the center).
    pub fn new(nr: usize, nth: usize, mu: f64, mass: Vec<f64>) -> Self {
        let hr = 1.0 / nr as f64;
        let ht = 2.0 * PI / nth as f64;
        // radial[i] couples ring i and ring i+1
        let radial = (0..nr).map(|i| (i as f64 + 0.5) * hr * ht / hr).collect();
        let angular = (0..=nr)
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    let eff = if i == nr { 0.5 * hr } else { hr };
                    eff / (i as f64 * hr * ht)
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        SobolevPreconditioner {
            nr,
            nth,
            mu,
            radial,
            angular,
            mass,
            fwd: planner.plan_fft_forward(nth),
            inv: planner.plan_fft_inverse(nth),
        }
    }

    pub fn for_energy(en: &CapillaryEnergy, mu: f64) -> Self {
        let dw = en.disk_weights();
        let mut mass = vec![dw[0]];
        mass.extend((1..=en.nr).map(|i| dw[crate::leaf::node_index(en.nth, i, 0)]));
        Self::new(en.nr, en.nth, mu, mass)
    }

    /// Applies `K + μ·M`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (nr, nth) = (self.nr, self.nth);
        let id = |i, j| crate::leaf::node_index(nth, i, j);
        let mut y = vec![0.0; x.len()];
        y[0] = self.mu * self.mass[0] * x[0];
        for i in 1..=nr {
            for j in 0..nth {
                let k = id(i, j);
                let mut s = self.mu * self.mass[i] * x[k];
                let inner = if i == 1 { x[0] } else { x[id(i - 1, j)] };
                s += self.radial[i - 1] * (x[k] - inner);
                if i == 1 {
                    y[0] += self.radial[0] * (x[0] - x[k]);
                }
                if i < nr {
                    s += self.radial[i] * (x[k] - x[id(i + 1, j)]);
                }
                s += self.angular[i] * (2.0 * x[k] - x[id(i, j + 1)] - x[id(i, j + nth - 1)]);
                y[k] = s;
            }
        }
        y
    }

    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let (nr, nth) = (self.nr, self.nth);
        let ht = 2.0 * PI / nth as f64;
        let mut rings: Vec<Vec<Complex64>> = (1..=nr)
            .map(|i| {
                let mut r: Vec<Complex64> =
                    (0..nth).map(|j| Complex64::new(g[crate::leaf::node_index(nth, i, j)], 0.0)).collect();
                self.fwd.process(&mut r);
                r
            })
            .collect();
        let mut x0 = 0.0;
        for k in 0..nth {
            let lam = 2.0 * (1.0 - (k as f64 * ht).cos());
            // unknowns: [x0 (mode 0 only), ring 1..nr]
            let n = nr + 1;
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut rhs = vec![Complex64::new(0.0, 0.0); n];
            if k == 0 {
                diag[0] = nth as f64 * self.radial[0] + self.mu * self.mass[0];
                sup[0] = -self.radial[0];
                rhs[0] = Complex64::new(g[0], 0.0);
                sub[1] = -(nth as f64) * self.radial[0];
            } else {
                diag[0] = 1.0;
            }
            for i in 1..=nr {
                let mut d = self.radial[i - 1] + self.angular[i] * lam + self.mu * self.mass[i];
                if i < nr {
                    d += self.radial[i];
                    sup[i] = -self.radial[i];
                }
                if i > 1 {
                    sub[i] = -self.radial[i - 1];
                }
                diag[i] = d;
                rhs[i] = rings[i - 1][k];
            }
            let sol = thomas(&sub, &diag, &sup, rhs);
            if k == 0 {
                x0 = sol[0].re;
            }
            for i in 1..=nr {
                rings[i - 1][k] = sol[i];
            }
        }
        let mut out = vec![0.0; g.len()];
        out[0] = x0;
        for i in 1..=nr {
            let r = &mut rings[i - 1];
            self.inv.process(r);
            for j in 0..nth {
                out[crate::leaf::node_index(nth, i, j)] = r[j].re / nth as f64;
            }
        }
        out
    }
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], mut rhs: Vec<Complex64>) -> Vec<Complex64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    c[0] = sup[0] / d;
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / d;
        let prev = rhs[i - 1];
        rhs[i] = (rhs[i] - prev * sub[i]) / d;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * c[i];
    }
    rhs
}

fn sup_density(g: &[f64], m: &[f64]) -> f64 {
    g.iter().zip(m).fold(0.0f64, |a, (g, m)| a.max((g / m).abs()))
}

/// Preconditioned Armijo descent from `init`.
pub fn minimize(
    domain: &Domain,
    metric: &MetricField,
    side: Side,
    init: &PolarLeaf,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult> {
    let en = CapillaryEnergy::for_leaf(domain, metric, side, init)?;
    let pre = SobolevPreconditioner::for_energy(&en, opts.mu);
    let mut w = init.w.clone();
    let (mut e, mut g, mut m) = en.gradient_and_mass(&w)?;
    let initial_energy = e;
    let mut gn = sup_density(&g, &m);
    let mut log = vec![IterRecord { iter: 0, energy: e, grad_norm: gn, step: 0.0 }];
    let mut iters = 0;
    let mut stalled = false;
    while gn >= opts.tol_grad && iters < opts.max_iters {
        let d: Vec<f64> = pre.solve(&g).iter().map(|x| -x).collect();
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-12 {
            let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            if let Ok(et) = en.value(&trial) {
                if et <= e + opts.armijo * alpha * slope + 1e-12 {
                    accepted = Some((trial, et));
                    break;
                }
            }
            alpha *= opts.shrink;
        }
        let Some((trial, _)) = accepted else {
            stalled = true;
            break;
        };
        w = trial;
        iters += 1;
        (e, g, m) = en.gradient_and_mass(&w)?;
        gn = sup_density(&g, &m);
        log.push(IterRecord { iter: iters, energy: e, grad_norm: gn, step: alpha });
    }
    let leaf = PolarLeaf { nr: init.nr, nth: init.nth, w, recipe: Recipe::Solver };
    let (max_mean_curvature, max_angle_residual) = residuals(domain, metric, side, &leaf)?;
    let mut out = MinimizerResult {
        leaf,
        side,
        energy: e,
        initial_energy,
        grad_norm: gn,
        max_mean_curvature,
        max_angle_residual,
        classification: Classification::Nontrivial,
        iterations: iters,
        converged: gn < opts.tol_grad,
        stalled,
        log,
    };
    out.classification = classify_minimizer(&out, domain, metric, 1e-10)?;
    Ok(out)
}

/// Pointwise `max |H|` and `max |⟨X, N⟩ − cos ρ̄|` from the leaf's nodal geometry.
pub fn residuals(domain: &Domain, metric: &MetricField, side: Side, leaf: &PolarLeaf) -> Result<(f64, f64)> {
    let geo = LeafGeometry::new(domain, metric, side, leaf)?;
    let mut h = 0.0f64;
    for i in 1..=leaf.nr {
        for j in 0..leaf.nth {
            h = h.max(geo.node(i, j)?.mean.abs());
        }
    }
    let mut a = 0.0f64;
    for j in 0..leaf.nth {
        let c = geo.contact(j)?;
        a = a.max((c.cos_contact - c.cos_prescribed).abs());
    }
    Ok((h, a))
}

/// Trivial when the leaf collapses onto a cap point, i.e. its area falls below `tol`.
pub fn classify_minimizer(result: &MinimizerResult, domain: &Domain, metric: &MetricField, tol: f64) -> Result<Classification> {
    let leaf = &result.leaf;
    let pointed = |cap: Cap| match cap {
        Cap::Pole { z } | Cap::Vertex { z } => leaf.w.iter().all(|w| (w - z).abs() < tol),
        Cap::Lid => false,
    };
    if pointed(domain.top) || pointed(domain.bottom) {
        return Ok(Classification::Trivial);
    }
    let area = CapillaryEnergy::for_leaf(domain, metric, result.side, leaf)
        .and_then(|en| en.parts(&leaf.w))
        .map(|p| p.area)
        .unwrap_or(0.0);
    Ok(if area < tol { Classification::Trivial } else { Classification::Nontrivial })
}

/// Smooth random leaf: a mid-slab offset plus low-order Fourier–radial modes.
pub fn random_leaf(domain: &Domain, nr: usize, nth: usize, amplitude: f64, seed: u64) -> PolarLeaf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mid = 0.5 * (domain.v_lo + domain.v_hi);
    let half = 0.5 * (domain.v_hi - domain.v_lo);
    let base = mid + rng.random_range(-0.3..0.3) * half;
    let mut modes = Vec::new();
    for k in 0..4 {
        modes.push((k, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)));
    }
    let mut leaf = PolarLeaf::from_fn(nr, nth, |r, t| {
        let mut s = 0.0;
        for &(k, a, b, c) in &modes {
            let kf = k as f64;
            let radial = if k == 0 { c * r * r } else { r.powi(k) };
            s += radial * (a * (kf * t).cos() + b * (kf * t).sin()) / (1.0 + kf);
        }
        base + amplitude * s
    });
    leaf.recipe = Recipe::Custom;
    leaf
}
