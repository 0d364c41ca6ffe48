//! Browser bindings: barrier coefficients, a CMC foliation curve and a minimization trace.

use capillary_rig::boundary::QuadraticFit;
use capillary_rig::domain::{Domain, Side};
use capillary_rig::expr::parse_expression;
use capillary_rig::foliation::{
    build_quadratic_barrier, foliate, forced_mean_curvature_bound, positivity_gap, LocalChart, NewtonOptions, Wall,
};
use capillary_rig::leaf::PolarLeaf;
use capillary_rig::metric::{ConstantBlock, MetricField};
use capillary_rig::minimizer::{minimize, random_leaf, MinimizeOptions};
use wasm_bindgen::prelude::*;

fn js(e: capillary_rig::Error) -> String {
    e.to_string()
}

fn wrap(r: Result<Vec<f64>, String>) -> Result<Box<[f64]>, JsError> {
    r.map(Vec::into_boxed_slice).map_err(|e| JsError::new(&e))
}

/// `[B, b11, b12, b22, H_p+, positivity gap, forced bound, barrier found (0/1)]` for a constant
/// block `diag(a11, a22, a33)` and the wall `c11 x² + 2 c12 x y + c22 y²`.
#[wasm_bindgen]
pub fn barrier_summary(a11: f64, a22: f64, a33: f64, c11: f64, c12: f64, c22: f64) -> Result<Box<[f64]>, JsError> {
    wrap(barrier_values(a11, a22, a33, c11, c12, c22))
}

/// Native form of [`barrier_summary`].
pub fn barrier_values(a11: f64, a22: f64, a33: f64, c11: f64, c12: f64, c22: f64) -> Result<Vec<f64>, String> {
    let g0 = ConstantBlock::diag(a11, a22, a33);
    let fit = QuadraticFit { c11, c12, c22 };
    let chart = LocalChart::model(Wall::quadratic(fit));
    let r = build_quadratic_barrier(&chart, &MetricField::constant(g0), &[0.01, 0.02], &[0.005, 0.01], 16).map_err(js)?;
    let c = r.coefficients;
    Ok(vec![
        c.big_b,
        c.b11,
        c.b12,
        c.b22,
        r.h_p_plus,
        positivity_gap(&g0, &fit),
        forced_mean_curvature_bound(&g0, &fit),
        if r.success { 1.0 } else { 0.0 },
    ])
}

/// Interleaved `(t, H(t))` for CMC leaves of the unit cylinder under `exp(2(eps z² + skew x z)) g_E`.
#[wasm_bindgen]
pub fn foliation_curve(eps: f64, skew: f64) -> Result<Box<[f64]>, JsError> {
    wrap(foliation_values(eps, skew))
}

/// Native form of [`foliation_curve`].
pub fn foliation_values(eps: f64, skew: f64) -> Result<Vec<f64>, String> {
    let d = Domain::cylinder(1.0, -1.0, 1.0);
    let f = parse_expression(&format!("{eps:?}*z^2 + {skew:?}*x*z")).map_err(js)?;
    let g = MetricField::conformal(&f).map_err(js)?;
    let start = PolarLeaf::flat(8, 16, 0.0);
    let reference = minimize(&d, &g, Side::Top, &start, &MinimizeOptions::default()).map_err(js)?.leaf;
    let t: Vec<f64> = (-6..=6).map(|k| 0.05 * k as f64).collect();
    let r = foliate(&d, &g, Side::Top, &reference, &t, &NewtonOptions::default()).map_err(js)?;
    Ok(r.leaves.iter().flat_map(|l| [l.t, l.mean_curvature]).collect())
}

/// Capillary energy per descent iteration from a random leaf in the Euclidean `shape` ("cylinder" or "sphere").
#[wasm_bindgen]
pub fn minimize_trace(shape: &str, amplitude: f64, seed: u32) -> Result<Box<[f64]>, JsError> {
    wrap(trace_values(shape, amplitude, seed))
}

/// Native form of [`minimize_trace`].
pub fn trace_values(shape: &str, amplitude: f64, seed: u32) -> Result<Vec<f64>, String> {
    let d = match shape {
        "cylinder" => Domain::cylinder(1.0, -1.0, 1.0),
        "sphere" => Domain::sphere(1.0, -0.8, 0.8),
        other => return Err(format!("unknown shape `{other}`")),
    };
    let g = MetricField::euclidean();
    let init = random_leaf(&d, 12, 24, amplitude, seed as u64);
    let r = minimize(&d, &g, Side::Top, &init, &MinimizeOptions::default()).map_err(js)?;
    let mut out = vec![r.initial_energy];
    out.extend(r.log.iter().map(|l| l.energy));
    Ok(out)
}
