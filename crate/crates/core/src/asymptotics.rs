//! Order fits and limit extraction for the expansions near a strictly convex top point.

use std::f64::consts::PI;

use serde::Serialize;

use crate::boundary::QuadraticLeaf;
use crate::error::{Error, Result};
use crate::foliation::barrier::{
    b_coefficients, big_b, contact_cosines, contact_radius, graph_mean_curvature, mean_curvature_limit_p_plus,
    LocalChart, WallGraph,
};
use crate::metric::MetricField;

pub const VALUE_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub r2: f64,
    pub samples: Vec<(f64, f64)>,
    /// Indices of samples below the floor, left out of the regression.
    pub flagged: Vec<usize>,
}

/// Least-squares power law `|value| ≈ C scale^p`.
pub fn fit_order(samples: &[(f64, f64)]) -> Result<OrderFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut flagged = Vec::new();
    let mut sign = 0.0;
    for (i, &(s, v)) in samples.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DegenerateScales);
        }
        if !(v.abs() >= VALUE_FLOOR) {
            flagged.push(i);
            continue;
        }
        if sign == 0.0 {
            sign = v.signum();
        }
        xs.push(s.ln());
        ys.push(v.abs().ln());
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientSamples(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx < 1e-24 {
        return Err(Error::DegenerateScales);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(OrderFit { exponent: slope, coefficient: sign * icpt.exp(), r2, samples: samples.to_vec(), flagged })
}

/// Geometric grid `t0 · 2^{-k}`, `k = 0..n`.
pub fn geometric_grid(t0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 * 0.5f64.powi(k as i32)).collect()
}

/// Extrapolates `v(t) → v(0)` from the two smallest scales, with the correction order taken from
/// an order fit of successive differences.
pub fn richardson_limit(samples: &[(f64, f64)]) -> (f64, Option<f64>) {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = s.len();
    if n < 2 {
        return (s.last().map(|x| x.1).unwrap_or(f64::NAN), None);
    }
    let diffs: Vec<(f64, f64)> = s.windows(2).map(|w| (w[1].0, w[0].1 - w[1].1)).collect();
    let p = fit_order(&diffs).ok().map(|f| f.exponent).filter(|p| *p > 0.2);
    let (ta, va) = s[n - 2];
    let (tb, vb) = s[n - 1];
    match p {
        Some(p) => {
            let (a, b) = (ta.powf(p), tb.powf(p));
            ((vb * a - va * b) / (a - b), Some(p))
        }
        None => (vb, None),
    }
}

fn leaf_at(fit: crate::boundary::QuadraticFit, b: [f64; 3], s: f64, t: f64) -> QuadraticLeaf {
    QuadraticLeaf { fit, b, s, t, radius: Vec::new() }
}

fn direction(th: f64) -> [f64; 2] {
    [th.cos(), th.sin()]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleExpansionReport {
    pub s: f64,
    pub theta: f64,
    /// `(t, cos ρ^g - cos ρ̄, predicted leading term)`.
    pub samples: Vec<(f64, f64, f64)>,
    /// `lim (cos ρ^g - cos ρ̄)/t²` from the data.
    pub measured_coefficient: f64,
    /// `-4 s [(x1c11b11 + x2c12b12)²/(a11a³³) + (x1c12b12 + x2c22b22)²/(a22a³³)]` at the limit point.
    pub predicted_coefficient: f64,
    pub relative_error: f64,
    /// Difference minus the predicted term; at `s > 0` this retains the `s²t²` part.
    pub literal_remainder: Option<OrderFit>,
    /// Difference minus the measured `t²` part.
    pub remainder: Option<OrderFit>,
}

/// Contact-angle difference between `g` and the Euclidean prescribed angle along a ray.
pub fn verify_angle_expansion(
    chart: &LocalChart,
    metric: &MetricField,
    s: f64,
    theta: f64,
    t_grid: &[f64],
) -> Result<AngleExpansionReport> {
    let g0 = chart.g0(metric)?;
    let fit = chart.fit();
    let bc = b_coefficients(&g0, &fit)?;
    let b = bc.b();
    let au = g0.a_upper_33();
    let sigma = |x: [f64; 2]| {
        let p = x[0] * fit.c11 * b[0] + x[1] * fit.c12 * b[1];
        let q = x[0] * fit.c12 * b[1] + x[1] * fit.c22 * b[2];
        p * p / (g0.a11 * au) + q * q / (g0.a22 * au)
    };
    let u = direction(theta);
    let diff_at = |t: f64| -> Result<(f64, f64)> {
        let leaf = leaf_at(fit, b, s, t);
        let r = contact_radius(chart, &leaf, theta)?;
        let (cg, cb) = contact_cosines(&leaf, chart, metric, r * u[0], r * u[1])?;
        if (1.0 - cb * cb).sqrt() < 1e-300 && t > 0.1 {
            return Err(Error::DegenerateContactAngle { u: theta, v: t, sin: 0.0 });
        }
        let x = [r / t * u[0], r / t * u[1]];
        Ok((cg - cb, -4.0 * s * t * t * sigma(x)))
    };
    let mut samples = Vec::new();
    for &t in t_grid {
        let (d, p) = diff_at(t)?;
        samples.push((t, d, p));
    }
    let tmin = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let (ta, tb) = (tmin / 64.0, tmin / 128.0);
    let qa = diff_at(ta)?.0 / (ta * ta);
    let qb = diff_at(tb)?.0 / (tb * tb);
    let measured = (4.0 * qb - qa) / 3.0;
    let r0 = leaf_at(fit, b, s, 1.0).limit_radius(theta);
    let predicted = -4.0 * s * sigma([r0 * u[0], r0 * u[1]]);
    let relative_error = if predicted != 0.0 {
        ((measured - predicted) / predicted).abs()
    } else {
        measured.abs()
    };
    let literal: Vec<(f64, f64)> = samples.iter().map(|&(t, d, p)| (t, d - p)).collect();
    let stripped: Vec<(f64, f64)> = samples.iter().map(|&(t, d, _)| (t, d - measured * t * t)).collect();
    Ok(AngleExpansionReport {
        s,
        theta,
        samples,
        measured_coefficient: measured,
        predicted_coefficient: predicted,
        relative_error,
        literal_remainder: fit_order(&literal).ok(),
        remainder: fit_order(&stripped).ok(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCheck {
    pub measured: f64,
    pub predicted: f64,
    pub relative_error: f64,
    /// Order of `value(t) - predicted`; `None` when every sample is below the floor.
    pub remainder: Option<OrderFit>,
}

fn limit_check(samples: &[(f64, f64)], predicted: f64) -> LimitCheck {
    let (measured, _) = richardson_limit(samples);
    let rem: Vec<(f64, f64)> = samples.iter().map(|&(t, v)| (t, v - predicted)).collect();
    let relative_error = if predicted.abs() > 1e-14 {
        ((measured - predicted) / predicted).abs()
    } else {
        (measured - predicted).abs()
    };
    LimitCheck { measured, predicted, relative_error, remainder: fit_order(&rem).ok() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanCurvatureExpansionReport {
    pub s: f64,
    pub theta: f64,
    /// `(t, H of the leaf, H of the wall)` at the contact point.
    pub samples: Vec<(f64, f64, f64)>,
    pub leaf: LimitCheck,
    pub wall: LimitCheck,
    pub difference: LimitCheck,
    /// Remainder order claimed for the leaf and wall expansions, beyond the linear term.
    pub claimed_order: f64,
}

/// Mean curvatures of `Σ_{s,t}` and of the wall at their common point along a ray, against the
/// constant-block limits `∓(2/√a³³)(c'11/a11 + c'22/a22)` and `-2(1+s)B/√(a11a22a³³)`.
pub fn verify_mc_expansion(
    chart: &LocalChart,
    metric: &MetricField,
    s: f64,
    theta: f64,
    t_grid: &[f64],
) -> Result<MeanCurvatureExpansionReport> {
    let g0 = chart.g0(metric)?;
    let fit = chart.fit();
    let bc = b_coefficients(&g0, &fit)?;
    let b = bc.b();
    let k = 1.0 + s;
    let au = g0.a_upper_33();
    let wall = WallGraph(chart);
    let u = direction(theta);
    let mut samples = Vec::new();
    for &t in t_grid {
        let leaf = leaf_at(fit, b, s, t);
        let r = contact_radius(chart, &leaf, theta)?;
        let (x1, x2) = (r * u[0], r * u[1]);
        let hl = graph_mean_curvature(&leaf, chart, metric, x1, x2)?;
        let hw = graph_mean_curvature(&wall, chart, metric, x1, x2)?;
        samples.push((t, hl, hw));
    }
    let leaf_pred = -2.0 / au.sqrt() * (fit.c11 * (b[0] * k - 1.0) / g0.a11 + fit.c22 * (b[2] * k - 1.0) / g0.a22);
    let wall_pred = 2.0 / au.sqrt() * (fit.c11 / g0.a11 + fit.c22 / g0.a22);
    let diff_pred = -2.0 * k * big_b(&g0, &fit) / (g0.a11 * g0.a22 * au).sqrt();
    let pick = |f: &dyn Fn(&(f64, f64, f64)) -> f64| -> Vec<(f64, f64)> { samples.iter().map(|x| (x.0, f(x))).collect() };
    Ok(MeanCurvatureExpansionReport {
        s,
        theta,
        leaf: limit_check(&pick(&|x| x.1), leaf_pred),
        wall: limit_check(&pick(&|x| x.2), wall_pred),
        difference: limit_check(&pick(&|x| x.1 - x.2), diff_pred),
        samples,
        claimed_order: 3.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HLimitReport {
    /// `(t, min H, max H)` over the contact curve of `Σ_{0,t}`.
    pub samples: Vec<(f64, f64, f64)>,
    pub extrapolated: f64,
    pub correction_order: Option<f64>,
    pub boundary_mean_curvature: f64,
    pub euclidean_mean_curvature: f64,
    pub formula: f64,
    pub error: f64,
    pub relative_error: f64,
}

/// Extrapolates the leaf mean curvature at the contact curve of `Σ_{0,t}` to `t → 0` and compares it
/// with the closed-form limit at the top point.
pub fn verify_h_limit(chart: &LocalChart, metric: &MetricField, t_grid: &[f64], nth: usize) -> Result<HLimitReport> {
    let g0 = chart.g0(metric)?;
    let fit = chart.fit();
    let bc = b_coefficients(&g0, &fit)?;
    let mut samples = Vec::new();
    let mut centre = Vec::new();
    for &t in t_grid {
        let leaf = leaf_at(fit, bc.b(), 0.0, t);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut mean = 0.0;
        for j in 0..nth {
            let th = 2.0 * PI * j as f64 / nth as f64;
            let r = contact_radius(chart, &leaf, th)?;
            let h = graph_mean_curvature(&leaf, chart, metric, r * th.cos(), r * th.sin())?;
            lo = lo.min(h);
            hi = hi.max(h);
            mean += h / nth as f64;
        }
        samples.push((t, lo, hi));
        centre.push((t, mean));
    }
    let (extrapolated, correction_order) = richardson_limit(&centre);
    let wall = WallGraph(chart);
    let hg = graph_mean_curvature(&wall, chart, metric, 0.0, 0.0)?;
    let he = graph_mean_curvature(&wall, chart, &MetricField::euclidean(), 0.0, 0.0)?;
    let formula = mean_curvature_limit_p_plus(hg, he, &g0, &fit);
    let error = (extrapolated - formula).abs();
    Ok(HLimitReport {
        samples,
        extrapolated,
        correction_order,
        boundary_mean_curvature: hg,
        euclidean_mean_curvature: he,
        formula,
        error,
        relative_error: if formula.abs() > 1e-14 { error / formula.abs() } else { error },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::QuadraticFit;
    use crate::expr::parse_expression;
    use crate::foliation::barrier::Wall;
    use crate::metric::ConstantBlock;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        geometric_grid(0.1, 7)
    }

    // [DERIVED]
    #[test]
    fn pure_power_law() {
        let s: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&t| (t, 5.0 * t * t * t)).collect();
        let f = fit_order(&s).unwrap();
        assert!((f.exponent - 3.0).abs() < 1e-6);
        assert!((f.coefficient - 5.0).abs() < 1e-6);
    }

    // [DERIVED]
    #[test]
    fn contaminated_and_constant() {
        let s: Vec<(f64, f64)> = grid().iter().map(|&t| (t, t * t + t.powi(5))).collect();
        let f = fit_order(&s).unwrap();
        assert!((f.exponent - 2.0).abs() < 0.01 && f.r2 > 0.9999);
        let c: Vec<(f64, f64)> = grid().iter().map(|&t| (t, 3.0)).collect();
        assert!(fit_order(&c).unwrap().exponent.abs() < 1e-12);
    }

    // [TRIVIAL]
    #[test]
    fn fit_errors() {
        assert!(matches!(fit_order(&[(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)]), Err(Error::InsufficientSamples(3))));
        let z: Vec<(f64, f64)> = grid().iter().map(|&t| (t, 0.0)).collect();
        assert!(matches!(fit_order(&z), Err(Error::InsufficientSamples(0))));
        assert!(matches!(fit_order(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0), (0.1, 4.0)]), Err(Error::DegenerateScales)));
        assert!(matches!(fit_order(&[(-0.1, 1.0), (0.1, 2.0), (0.2, 3.0), (0.3, 4.0)]), Err(Error::DegenerateScales)));
    }

    // [DERIVED]
    #[test]
    fn richardson_recovers_limit() {
        let s: Vec<(f64, f64)> = grid().iter().map(|&t| (t, 1.5 + 0.3 * t * t)).collect();
        let (l, p) = richardson_limit(&s);
        assert!((l - 1.5).abs() < 1e-12);
        assert!((p.unwrap() - 2.0).abs() < 1e-6);
    }

    fn anchor_chart() -> LocalChart {
        LocalChart::model(Wall::quadratic(QuadraticFit { c11: 1.0, c12: 0.5, c22: 1.0 }))
    }

    // [PAPER]
    #[test]
    fn angle_expansion_at_zero_s_has_no_square_term() {
        let m = MetricField::diag(4.0, 1.0, 1.0);
        let r = verify_angle_expansion(&anchor_chart(), &m, 0.0, 0.7, &grid()).unwrap();
        let f = r.literal_remainder.unwrap();
        assert!(f.exponent > 2.7, "{}", f.exponent);
    }

    // [PAPER]
    #[test]
    fn angle_expansion_leading_term() {
        let m = MetricField::diag(4.0, 1.0, 1.0);
        for th in [0.0, 1.1, 2.5, 4.0] {
            let r = verify_angle_expansion(&anchor_chart(), &m, 0.02, th, &grid()).unwrap();
            assert!(r.relative_error < 0.05, "{}", r.relative_error);
            assert!(r.remainder.unwrap().exponent > 2.7);
        }
        let iso = LocalChart::model(Wall::quadratic(QuadraticFit { c11: 0.8, c12: 0.0, c22: 0.8 }));
        let r = verify_angle_expansion(&iso, &MetricField::euclidean(), 0.02, 0.3, &grid()).unwrap();
        assert!(r.relative_error < 0.05);
    }

    // [PAPER]
    #[test]
    fn angle_expansion_with_cubic_wall() {
        let m = MetricField::constant(ConstantBlock::diag(2.0, 0.7, 1.3));
        let chart = LocalChart::model(Wall::Polynomial {
            fit: QuadraticFit { c11: 0.6, c12: -0.2, c22: 1.1 },
            cubic: [0.3, -0.1, 0.2, 0.05],
        });
        let r = verify_angle_expansion(&chart, &m, 0.0, 0.9, &grid()).unwrap();
        let f = r.literal_remainder.unwrap();
        assert!(f.exponent > 2.7, "{}", f.exponent);
    }

    // [PAPER]
    #[test]
    fn mc_expansion_flat_and_anchor() {
        let flat = LocalChart::model(Wall::quadratic(QuadraticFit { c11: 0.5, c12: 0.0, c22: 0.5 }));
        let e = MetricField::euclidean();
        let r = verify_mc_expansion(&flat, &e, 0.0, 0.4, &grid()).unwrap();
        assert!(r.leaf.measured.abs() < 1e-12);
        assert!((r.difference.measured + 2.0).abs() < 1e-6);
        let m = MetricField::diag(4.0, 1.0, 1.0);
        let r = verify_mc_expansion(&anchor_chart(), &m, 0.0, 0.4, &grid()).unwrap();
        assert!((r.difference.predicted + 9.25f64.sqrt()).abs() < 1e-12);
        assert!(r.difference.relative_error < 0.01);
    }

    // [PAPER]
    #[test]
    fn h_limit_euclidean_and_anchor() {
        let e = MetricField::euclidean();
        let chart = LocalChart::model(Wall::Ellipsoid { a: 1.0, b: 1.4, c: 0.8 });
        let r = verify_h_limit(&chart, &e, &grid(), 16).unwrap();
        assert!(r.extrapolated.abs() < 1e-8 && r.formula.abs() < 1e-12);
        let m = MetricField::diag(4.0, 1.0, 1.0);
        let r = verify_h_limit(&anchor_chart(), &m, &grid(), 16).unwrap();
        assert!(r.relative_error < 0.01, "{r:?}");
    }

    // [DERIVED]
    #[test]
    fn h_limit_on_conformal_sphere() {
        let d = crate::domain::Domain::sphere(1.0, -0.9, 0.9);
        let m = MetricField::conformal(&parse_expression("0.2*z + 0.1*x^2 - 0.05*x*y").unwrap()).unwrap();
        let chart = LocalChart::top_of(&d, &m).unwrap();
        let r = verify_h_limit(&chart, &m, &grid(), 16).unwrap();
        assert!(r.relative_error < 0.01, "{r:?}");
    }

    proptest! {
        // [DERIVED]
        #[test]
        fn recovers_power_laws(p in 0.5f64..5.0, c in 0.1f64..10.0) {
            let s: Vec<(f64, f64)> = grid().iter().map(|&t| (t, -c * t.powf(p))).collect();
            let f = fit_order(&s).unwrap();
            prop_assert!((f.exponent - p).abs() < 1e-6);
            prop_assert!(((f.coefficient + c) / c).abs() < 1e-6);
        }
    }
}
