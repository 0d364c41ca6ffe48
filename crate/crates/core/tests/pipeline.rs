use std::f64::consts::TAU;

use capillary_rig::boundary::BoundaryPatch;
use capillary_rig::capillary::{winding_integral, ClosedCurve};
use capillary_rig::comparison::{local_comparison_sweep, rigidity_audit, Branch};
use capillary_rig::domain::{Domain, Side};
use capillary_rig::expr::parse_expression;
use capillary_rig::foliation::{foliate, NewtonOptions};
use capillary_rig::leaf::{LeafGeometry, PolarLeaf};
use capillary_rig::metric::MetricField;
use capillary_rig::minimizer::{minimize, random_leaf, Classification, MinimizeOptions};
use proptest::prelude::*;

fn conformal(f: &str) -> MetricField {
    MetricField::conformal(&parse_expression(f).unwrap()).unwrap()
}

// [PAPER] flat minimizers in a Euclidean cylinder are rigid and sit in a minimal foliation
#[test]
fn euclidean_minimizer_is_rigid_and_foliates() {
    let d = Domain::cylinder(1.0, -1.0, 1.0);
    let g = MetricField::euclidean();
    let r = minimize(&d, &g, Side::Top, &random_leaf(&d, 16, 32, 0.05, 7), &MinimizeOptions::default()).unwrap();
    assert_eq!(r.classification, Classification::Nontrivial);
    assert!(r.energy.abs() < 1e-6);

    let geo = LeafGeometry::new(&d, &g, Side::Top, &r.leaf).unwrap();
    let a = rigidity_audit(&geo, 1e-4).unwrap();
    for c in [a.scalar, a.second_fundamental_form, a.gauss_curvature, a.geodesic_curvature, a.contact_angle] {
        assert!(c.abs() < 1e-4, "{c}");
    }

    let f = foliate(&d, &g, Side::Top, &r.leaf, &[-0.1, 0.0, 0.1], &NewtonOptions::default()).unwrap();
    for l in &f.leaves {
        assert!(l.mean_curvature.abs() < 1e-8, "{}", l.mean_curvature);
    }
    assert!(f.speed_error_at_zero < 1e-6);
}

// [PAPER] about a minimizer of a perturbed metric, H(t) is nonpositive below and nonnegative above
#[test]
fn perturbed_minimizer_foliation_has_sign_pattern() {
    let d = Domain::cylinder(1.0, -1.0, 1.0);
    let g = conformal("0.05*z^2 + 0.02*x*z");
    let r = minimize(&d, &g, Side::Top, &PolarLeaf::flat(12, 24, 0.0), &MinimizeOptions::default()).unwrap();
    let f = foliate(&d, &g, Side::Top, &r.leaf, &[-0.1, -0.05, 0.0, 0.05, 0.1], &NewtonOptions::default()).unwrap();
    assert!(f.sign_pattern);
    assert!(f.max_newton_iters <= 10);
    assert!(f.leaves.iter().all(|l| l.mean_offset.abs() < 1e-10));
}

// [TRIVIAL] Euclidean metrics attain equality through the metric-match branch on every model boundary
#[test]
fn euclidean_sweeps_match_on_models() {
    for d in [Domain::sphere(1.0, -0.9, 0.9), Domain::ellipsoid(1.5, 1.0, 0.8, -0.7, 0.7)] {
        let p = BoundaryPatch::new(&d, 24, 17, -0.5, 0.5).unwrap();
        let s = local_comparison_sweep(&p, &MetricField::euclidean(), 8, 1e-8).unwrap();
        assert_eq!(s.report.branch, Branch::MetricMatch, "{}", d.name());
    }
}

// [DERIVED] a strictly positive conformal bump leaves no equality samples
#[test]
fn conformal_bump_is_strict() {
    let p = BoundaryPatch::new(&Domain::sphere(1.0, -0.9, 0.9), 24, 9, -0.5, 0.5).unwrap();
    let s = local_comparison_sweep(&p, &conformal("0.05*(x^2 + y^2 + z^2)"), 8, 1e-8).unwrap();
    assert_eq!(s.report.branch, Branch::None);
    assert!(s.max_weight_error < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // [DERIVED] a closed curve winding once around a convex boundary turns by 2π
    #[test]
    fn winding_is_two_pi(z in -0.3f64..0.3, amp in 0.0f64..0.15, k in 1u32..6, ell in any::<bool>()) {
        let d = if ell { Domain::ellipsoid(1.5, 1.0, 0.8, -0.7, 0.7) } else { Domain::cylinder(1.0, -1.0, 1.0) };
        let w = winding_integral(&d, &ClosedCurve::wiggled(256, z, amp, k)).unwrap();
        prop_assert!((w.total - TAU).abs() < 1e-8, "{}", w.total);
    }
}
