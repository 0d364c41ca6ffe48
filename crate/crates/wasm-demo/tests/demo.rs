use capillary_rig_wasm::{barrier_values, foliation_values, trace_values};

// [DERIVED] the anisotropic anchor has H at the top point 2.5 - sqrt(9.25) < 0 and no barrier
#[test]
fn anisotropic_anchor_has_no_barrier() {
    let s = barrier_values(4.0, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
    assert!((s[4] - (2.5 - 9.25f64.sqrt())).abs() < 1e-10, "{}", s[4]);
    assert_eq!(s[7], 0.0);
}

// [TRIVIAL] outputs have the documented layout
#[test]
fn layouts() {
    assert_eq!(barrier_values(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap().len(), 8);
    let c = foliation_values(0.02, 0.0).unwrap();
    assert_eq!(c.len() % 2, 0);
    assert!(c.chunks(2).map(|p| p[0]).collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
    let e = trace_values("cylinder", 0.05, 11).unwrap();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

// [TRIVIAL] bad input surfaces as an error string
#[test]
fn rejects_nonpositive_block() {
    assert!(barrier_values(-1.0, 1.0, 1.0, 1.0, 0.0, 1.0).is_err());
}
