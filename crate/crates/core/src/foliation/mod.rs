//! Constant mean curvature leaves with prescribed contact angle, and the barrier near a top point.

pub mod barrier;

pub use barrier::{
    b_coefficients, big_b, build_quadratic_barrier, forced_mean_curvature_bound, mean_curvature_limit_p_plus,
    positivity_gap, BarrierCell, BarrierCoefficients, BarrierReport, LocalChart, Wall,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::{Domain, Shape, Side};
use crate::error::{Error, Result};
use crate::leaf::{CapillaryEnergy, PolarLeaf, Recipe};
use crate::metric::MetricField;
use crate::minimizer::residuals;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Target for `max |H_i - λ|` on the nodal densities.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iters: 25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CmcLeaf {
    pub leaf: PolarLeaf,
    pub t: f64,
    pub mean_curvature: f64,
    pub iterations: usize,
    /// Residual after each Newton step, starting with the initial guess.
    pub history: Vec<f64>,
    /// `Σ m_i (w_i - t) / Σ m_i` with `w` the displacement from the reference.
    pub mean_offset: f64,
    pub angle_residual: f64,
}

struct System {
    weights: Vec<f64>,
    total: f64,
}

impl System {
    fn residual(&self, grad: &[f64], mass: &[f64], sign: f64, lambda: f64, w: &[f64], reference: &[f64], t: f64) -> (Vec<f64>, f64) {
        let n = grad.len();
        let mut r = Vec::with_capacity(n + 1);
        let mut norm = 0.0f64;
        for i in 0..n {
            let ri = grad[i] - lambda * sign * mass[i];
            norm = norm.max((ri / mass[i]).abs());
            r.push(ri);
        }
        let mut c = 0.0;
        for i in 0..n {
            c += self.weights[i] * (w[i] - reference[i] - t);
        }
        c /= self.total;
        r.push(c);
        (r, norm.max(c.abs()))
    }
}

/// Newton iteration for the leaf `W = reference + w` with constant mean curvature and the
/// prescribed angle, normalised by `∫ (w - t) = 0` over the reference disk.
pub fn cmc_leaf_solve(
    domain: &Domain,
    metric: &MetricField,
    side: Side,
    reference: &PolarLeaf,
    start: &PolarLeaf,
    t: f64,
    opts: &NewtonOptions,
) -> Result<CmcLeaf> {
    let energy = CapillaryEnergy::for_leaf(domain, metric, side, reference)?;
    let sign = energy.side_sign();
    let weights = energy.disk_weights();
    let total: f64 = weights.iter().sum();
    let sys = System { weights, total };
    let n = energy.len();
    let mut w = start.w.clone();
    let shift = {
        let mut c = 0.0;
        for i in 0..n {
            c += sys.weights[i] * (w[i] - reference.w[i] - t);
        }
        c / total
    };
    for x in w.iter_mut() {
        *x -= shift;
    }
    let (_, g0, m0) = energy.gradient_and_mass(&w)?;
    let mut lambda = {
        let (num, den) = g0.iter().zip(&m0).fold((0.0, 0.0), |(a, b), (g, m)| (a + g * m, b + m * m));
        sign * num / den
    };
    let mut history = Vec::new();
    for it in 0..=opts.max_iters {
        let so = energy.second_order(&w)?;
        let (r, norm) = sys.residual(&so.grad, &so.mass, sign, lambda, &w, &reference.w, t);
        history.push(norm);
        if norm < opts.tol {
            let mut leaf = PolarLeaf { nr: reference.nr, nth: reference.nth, w, recipe: Recipe::Custom };
            leaf.recipe = Recipe::Custom;
            let (_, angle) = residuals(domain, metric, side, &leaf)?;
            let mut off = 0.0;
            for i in 0..n {
                off += sys.weights[i] * (leaf.w[i] - reference.w[i] - t);
            }
            return Ok(CmcLeaf {
                leaf,
                t,
                mean_curvature: lambda,
                iterations: it,
                history,
                mean_offset: off / total,
                angle_residual: angle,
            });
        }
        if it == opts.max_iters {
            break;
        }
        let mut j = DMatrix::zeros(n + 1, n + 1);
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] = so.hess[(a, b)] - lambda * sign * so.dmass[(a, b)];
            }
            j[(a, n)] = -sign * so.mass[a];
            j[(n, a)] = sys.weights[a] / total;
        }
        let rhs = -DVector::from_vec(r);
        let step = j.lu().solve(&rhs).ok_or(Error::SingularLinearization)?;
        if step.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularLinearization);
        }
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| w[i] + alpha * step[i]).collect();
            if energy.check(&trial).is_ok() {
                w = trial;
                lambda += alpha * step[n];
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(Error::NewtonDiverged { iters: it + 1, residual: norm });
            }
        }
    }
    Err(Error::NewtonDiverged { iters: opts.max_iters, residual: *history.last().unwrap_or(&f64::NAN) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoliationLeaf {
    pub t: f64,
    pub mean_curvature: f64,
    pub angle_residual: f64,
    pub newton_iters: usize,
    pub mean_offset: f64,
    pub leaf: PolarLeaf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoliationResult {
    pub leaves: Vec<FoliationLeaf>,
    /// `max |∂w/∂t - 1|` from central differences at every interior grid value.
    pub max_speed_error: f64,
    /// `max |∂w/∂t - 1|` at `t = 0`, extrapolated from solves at `t = ±0.01, ±0.02`.
    pub speed_error_at_zero: f64,
    /// `H(t) ≤ tol` for `t < 0` and `H(t) ≥ -tol` for `t > 0`.
    pub sign_pattern: bool,
    pub max_newton_iters: usize,
}

impl FoliationResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_curvature,angle_residual,newton_iters,mean_offset\n");
        for l in &self.leaves {
            out.push_str(&format!(
                "{},{:.12e},{:.6e},{},{:.3e}\n",
                l.t, l.mean_curvature, l.angle_residual, l.newton_iters, l.mean_offset
            ));
        }
        out
    }
}

fn shifted(leaf: &PolarLeaf, dz: f64) -> PolarLeaf {
    let mut out = leaf.clone();
    for x in out.w.iter_mut() {
        *x += dz;
    }
    out
}

/// Solves at `t` from a leaf known at `t_prev`, halving the continuation step on divergence.
fn continue_to(
    domain: &Domain,
    metric: &MetricField,
    side: Side,
    reference: &PolarLeaf,
    prev: &CmcLeaf,
    t: f64,
    opts: &NewtonOptions,
    depth: usize,
) -> Result<CmcLeaf> {
    let guess = shifted(&prev.leaf, t - prev.t);
    match cmc_leaf_solve(domain, metric, side, reference, &guess, t, opts) {
        Err(e @ (Error::NewtonDiverged { .. } | Error::EmptyLeaf)) => {
            if depth >= 6 {
                return Err(e);
            }
            let mid = continue_to(domain, metric, side, reference, prev, 0.5 * (prev.t + t), opts, depth + 1)?;
            continue_to(domain, metric, side, reference, &mid, t, opts, depth + 1)
        }
        r => r,
    }
}

/// Sweeps CMC leaves over offsets `t` from a reference leaf solving the `t = 0` problem.
pub fn foliate(
    domain: &Domain,
    metric: &MetricField,
    side: Side,
    reference: &PolarLeaf,
    t_grid: &[f64],
    opts: &NewtonOptions,
) -> Result<FoliationResult> {
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.is_empty() {
        return Ok(FoliationResult {
            leaves: Vec::new(),
            max_speed_error: 0.0,
            speed_error_at_zero: 0.0,
            sign_pattern: true,
            max_newton_iters: 0,
        });
    }
    let base = cmc_leaf_solve(domain, metric, side, reference, reference, 0.0, opts)?;
    let speed_error_at_zero = speed_error_at_zero(domain, metric, side, reference, &base, opts)?;
    let split = ts.partition_point(|&t| t < 0.0);
    let mut solved: Vec<Option<CmcLeaf>> = vec![None; ts.len()];
    let mut prev = base.clone();
    for k in split..ts.len() {
        let l = continue_to(domain, metric, side, reference, &prev, ts[k], opts, 0)?;
        prev = l.clone();
        solved[k] = Some(l);
    }
    prev = base;
    for k in (0..split).rev() {
        let l = continue_to(domain, metric, side, reference, &prev, ts[k], opts, 0)?;
        prev = l.clone();
        solved[k] = Some(l);
    }
    let solved: Vec<CmcLeaf> = solved.into_iter().map(|l| l.expect("every grid value solved")).collect();
    for k in 1..solved.len() {
        let (a, b) = (&solved[k - 1].leaf.w, &solved[k].leaf.w);
        if a.iter().zip(b).any(|(x, y)| y <= x) {
            return Err(Error::FoliationOverlap(solved[k - 1].t, solved[k].t));
        }
    }
    let mut max_speed_error = 0.0f64;
    for k in 1..solved.len().saturating_sub(1) {
        let dt = ts[k + 1] - ts[k - 1];
        let err = solved[k + 1]
            .leaf
            .w
            .iter()
            .zip(&solved[k - 1].leaf.w)
            .map(|(a, b)| ((a - b) / dt - 1.0).abs())
            .fold(0.0, f64::max);
        max_speed_error = max_speed_error.max(err);
    }
    let tol = 10.0 * opts.tol;
    let sign_pattern = solved.iter().all(|l| {
        (l.t >= 0.0 || l.mean_curvature <= tol) && (l.t <= 0.0 || l.mean_curvature >= -tol)
    });
    let max_newton_iters = solved.iter().map(|l| l.iterations).max().unwrap_or(0);
    Ok(FoliationResult {
        leaves: solved
            .into_iter()
            .map(|l| FoliationLeaf {
                t: l.t,
                mean_curvature: l.mean_curvature,
                angle_residual: l.angle_residual,
                newton_iters: l.iterations,
                mean_offset: l.mean_offset,
                leaf: l.leaf,
            })
            .collect(),
        max_speed_error,
        speed_error_at_zero,
        sign_pattern,
        max_newton_iters,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexLeaf {
    pub h: f64,
    pub lambda: f64,
    pub angle_residual: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexFoliation {
    pub leaves: Vec<VertexLeaf>,
    /// Least-squares fit `λ_h ≈ a + b h + c h³ + d h⁵`; `d` is fitted from five leaves on.
    pub trend: [f64; 4],
    /// `|a| ≤ 3 · tol`.
    pub tends_to_zero: bool,
}

// Richardson-extrapolated central difference of w in t at t = 0
fn speed_error_at_zero(
    domain: &Domain,
    metric: &MetricField,
    side: Side,
    reference: &PolarLeaf,
    base: &CmcLeaf,
    opts: &NewtonOptions,
) -> Result<f64> {
    const STEP: f64 = 0.01;
    let mut diffs = Vec::with_capacity(2);
    for dt in [STEP, 2.0 * STEP] {
        let up = continue_to(domain, metric, side, reference, base, dt, opts, 0)?;
        let down = continue_to(domain, metric, side, reference, base, -dt, opts, 0)?;
        diffs.push(up.leaf.w.iter().zip(&down.leaf.w).map(|(a, b)| (a - b) / (2.0 * dt)).collect::<Vec<_>>());
    }
    Ok(diffs[0].iter().zip(&diffs[1]).map(|(a, b)| ((4.0 * a - b) / 3.0 - 1.0).abs()).fold(0.0, f64::max))
}

/// CMC leaves of mean height `h` near the vertex of a cone, with the trend of `λ_h` as `h → 0`.
pub fn vertex_cone_foliate(
    domain: &Domain,
    metric: &MetricField,
    h_grid: &[f64],
    nr: usize,
    nth: usize,
    opts: &NewtonOptions,
) -> Result<VertexFoliation> {
    if !matches!(domain.shape, Shape::Cone { .. }) {
        return Err(Error::Scenario("vertex foliation needs a cone".into()));
    }
    let g = metric.metric_at(&[0.0; 3]).map_err(|_| Error::DegenerateCone)?;
    if g.determinant() <= 0.0 {
        return Err(Error::DegenerateCone);
    }
    for &h in h_grid {
        if !(h > domain.v_lo && h < domain.v_hi) {
            return Err(Error::RegionEscapesCone(h));
        }
    }
    let solved: Vec<Result<VertexLeaf>> = crate::par_map(h_grid, |&h| {
        let reference = PolarLeaf::flat(nr, nth, h);
        let l = cmc_leaf_solve(domain, metric, Side::Bottom, &reference, &reference, 0.0, opts)?;
        Ok(VertexLeaf { h, lambda: l.mean_curvature, angle_residual: l.angle_residual, newton_iters: l.iterations })
    });
    let leaves: Vec<VertexLeaf> = solved.into_iter().collect::<Result<_>>()?;
    let n = leaves.len();
    let powers: &[i32] = if n >= 5 { &[0, 1, 3, 5] } else { &[0, 1, 3] };
    let mut trend = [f64::NAN, f64::NAN, f64::NAN, 0.0];
    if n >= 3 {
        let a = DMatrix::from_fn(n, powers.len(), |i, j| leaves[i].h.powi(powers[j]));
        let b = DVector::from_iterator(n, leaves.iter().map(|l| l.lambda));
        let sol = a.svd(true, true).solve(&b, 1e-14).map_err(|_| Error::SingularLinearization)?;
        for (k, c) in sol.iter().enumerate() {
            trend[k] = *c;
        }
    }
    Ok(VertexFoliation { tends_to_zero: trend[0].abs() <= 3.0 * opts.tol, leaves, trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    // [TRIVIAL]
    #[test]
    fn flat_cylinder_leaves_are_exact() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let e = MetricField::euclidean();
        let r = PolarLeaf::flat(8, 16, 0.0);
        let f = foliate(&d, &e, Side::Top, &r, &[-0.3, -0.1, 0.0, 0.1, 0.3], &NewtonOptions::default()).unwrap();
        for l in &f.leaves {
            assert!(l.mean_curvature.abs() < 1e-12);
            assert!(l.leaf.w.iter().all(|w| (w - l.t).abs() < 1e-12));
            assert!(l.newton_iters <= 1);
        }
        assert!(f.max_speed_error < 1e-10);
    }

    // [TRIVIAL]
    #[test]
    fn flat_sphere_slices_are_exact() {
        let d = Domain::sphere(1.0, -0.8, 0.8);
        let e = MetricField::euclidean();
        let r = PolarLeaf::flat(8, 16, 0.0);
        let f = foliate(&d, &e, Side::Top, &r, &[-0.2, 0.0, 0.2], &NewtonOptions::default()).unwrap();
        for l in &f.leaves {
            assert!(l.mean_curvature.abs() < 1e-10, "{}", l.mean_curvature);
            assert!(l.mean_offset.abs() < 1e-12);
        }
    }

    // [DERIVED]
    #[test]
    fn conformal_slab_has_closed_form_curvature() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let m = MetricField::conformal(&parse_expression("0.05*z^2").unwrap()).unwrap();
        let r = PolarLeaf::flat(8, 16, 0.0);
        let f = foliate(&d, &m, Side::Top, &r, &[-0.2, 0.0, 0.2, 0.4], &NewtonOptions::default()).unwrap();
        for l in &f.leaves {
            let exact = 0.1 * 2.0 * l.t * (-0.05 * l.t * l.t).exp();
            assert!((l.mean_curvature - exact).abs() < 1e-3, "{} {}", l.mean_curvature, exact);
        }
        assert!(f.sign_pattern);
    }

    // [PAPER]
    #[test]
    fn asymmetric_perturbation_converges_quickly() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let m = MetricField::conformal(&parse_expression("0.05*z^2 + 0.02*x*z + 0.01*y").unwrap()).unwrap();
        let r = PolarLeaf::flat(8, 16, 0.0);
        let f = foliate(&d, &m, Side::Top, &r, &[-0.1, 0.0, 0.1], &NewtonOptions::default()).unwrap();
        assert!(f.max_newton_iters <= 10);
        for l in &f.leaves {
            assert!(l.mean_offset.abs() < 1e-10);
        }
    }

    // [DERIVED]
    #[test]
    fn euclidean_cone_vertex_leaves() {
        let d = Domain::cone(1.0, 2.0);
        let e = MetricField::euclidean();
        let v = vertex_cone_foliate(&d, &e, &[0.5, 0.25, 0.125], 6, 12, &NewtonOptions::default()).unwrap();
        for l in &v.leaves {
            assert!(l.lambda.abs() < 1e-10);
        }
        assert!(vertex_cone_foliate(&d, &e, &[3.0], 6, 12, &NewtonOptions::default()).is_err());
    }
}
