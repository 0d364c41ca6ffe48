//! Boundary comparison hypotheses, the mixed and local comparison inequalities with their
//! equality branches, weak convexity, conical comparison, the rigidity audit and the cone
//! homothety check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boundary::{BoundaryPatch, BoundaryPoint};
use crate::capillary::{capillary_energy, gauss_bonnet_audit, Region};
use crate::domain::{Domain, Shape, Side};
use crate::error::{Error, Result};
use crate::leaf::{LeafGeometry, PolarLeaf};
use crate::metric::MetricField;
use crate::real::dot3;

pub const DEFAULT_SEED: u64 = 0x5eed_ca9e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    None,
    MetricMatch,
    NormalAligned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub u: f64,
    pub v: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub name: String,
    pub samples: Vec<Sample>,
    pub min_margin: f64,
    pub location: (f64, f64),
    pub branch: Branch,
    pub pass: bool,
    pub tol: f64,
}

impl ComparisonReport {
    fn from_samples(name: &str, samples: Vec<Sample>, tol: f64, branch: Branch) -> Self {
        let worst = samples
            .iter()
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
            .copied()
            .unwrap_or(Sample { u: 0.0, v: 0.0, margin: f64::INFINITY });
        let all_zero = samples.iter().all(|s| s.margin.abs() < tol);
        ComparisonReport {
            name: name.to_string(),
            min_margin: worst.margin,
            location: (worst.u, worst.v),
            branch: if all_zero { branch } else { Branch::None },
            pass: worst.margin >= -tol,
            tol,
            samples,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,margin\n");
        for p in &self.samples {
            s.push_str(&format!("{},{},{}\n", p.u, p.v, p.margin));
        }
        s
    }
}

/// Boundary point data under the metric at every patch node, with the node's chart location.
pub fn patch_points(patch: &BoundaryPatch, metric: &MetricField) -> Result<Vec<(f64, f64, BoundaryPoint)>> {
    let pd = patch.derivatives();
    let mut out = Vec::with_capacity(patch.nu * patch.nv);
    for j in 0..patch.nv {
        for i in 0..patch.nu {
            let bp = BoundaryPoint::new(pd.jet(i, j), metric)?;
            out.push((patch.theta_at(i, j), patch.v_at(j), bp));
        }
    }
    Ok(out)
}

/// `H²g − H0²g_E` on the wall in the `(τ̄, ν̄)` basis.
pub fn scaled_mc_difference(bp: &BoundaryPoint) -> [[f64; 2]; 2] {
    let (t, n) = (&bp.frame.tau_bar, &bp.frame.nu_bar);
    let h2 = bp.h_g * bp.h_g;
    let h02 = bp.h0 * bp.h0;
    [
        [h2 * bp.inner_g(t, t) - h02, h2 * bp.inner_g(t, n)],
        [h2 * bp.inner_g(n, t), h2 * bp.inner_g(n, n) - h02],
    ]
}

fn min_eigenvalue(m: &[[f64; 2]; 2]) -> f64 {
    let tr = 0.5 * (m[0][0] + m[1][1]);
    let d = 0.5 * (m[0][0] - m[1][1]);
    let off = 0.5 * (m[0][1] + m[1][0]);
    tr - (d * d + off * off).sqrt()
}

/// Smallest eigenvalue of `H²g − H0²g_E` on T(∂M) at every node.
pub fn check_scaled_mc_comparison(patch: &BoundaryPatch, metric: &MetricField, tol: f64) -> Result<ComparisonReport> {
    let samples = patch_points(patch, metric)?
        .into_iter()
        .map(|(u, v, bp)| Sample { u, v, margin: min_eigenvalue(&scaled_mc_difference(&bp)) })
        .collect();
    Ok(ComparisonReport::from_samples("scaled_mc_comparison", samples, tol, Branch::MetricMatch))
}

fn lin(a: f64, x: &[f64; 3], b: f64, y: &[f64; 3]) -> [f64; 3] {
    [a * x[0] + b * y[0], a * x[1] + b * y[1], a * x[2] + b * y[2]]
}

/// `H − H0/(a²+b²)·⟨aτ + bν, aτ̄ + bν̄⟩_E` for the g-orthonormal pair rotated by `phi`.
pub fn lemma_mixed_comparison(bp: &BoundaryPoint, phi: f64, a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let (tau, nu) = bp.rotated_pair(phi);
    let w = lin(a, &tau, b, &nu);
    let wb = lin(a, &bp.frame.tau_bar, b, &bp.frame.nu_bar);
    Ok(bp.h_g - bp.h0 / (a * a + b * b) * dot3(&w, &wb))
}

/// `(H0 − ∇_ν̄ρ̄)∇_ν̄ρ̄ − (∇_τ̄ρ̄)²` from supplied angle derivatives.
pub fn weak_convexity_margin(h0: f64, d_tau: f64, d_nu: f64) -> f64 {
    (h0 - d_nu) * d_nu - d_tau * d_tau
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalComparison {
    pub margin: f64,
    pub branch: Branch,
    /// Proof weights, absent when a denominator degenerates.
    pub weights: Option<(f64, f64)>,
    pub weak_convexity: f64,
}

/// `(H − ∇_νρ̄) − ⟨τ, (∇_τ̄ρ̄)ν̄ + (H0 − ∇_ν̄ρ̄)τ̄⟩_E` for the pair rotated by `phi`.
pub fn local_boundary_comparison(bp: &BoundaryPoint, phi: f64, tol: f64) -> Result<LocalComparison> {
    if bp.sin_rho <= crate::boundary::ANGLE_EPS {
        return Err(Error::DegenerateContactAngle { u: bp.jet.u, v: bp.jet.v, sin: bp.sin_rho });
    }
    let (tau, nu) = bp.rotated_pair(phi);
    let dt = bp.grad_tau_bar_rho();
    let dn = bp.grad_nu_bar_rho();
    let rhs = lin(dt, &bp.frame.nu_bar, bp.h0 - dn, &bp.frame.tau_bar);
    let margin = (bp.h_g - bp.drho(&nu)) - dot3(&tau, &rhs);
    let den = bp.h0 * (bp.h0 - dn);
    let weights = if bp.h0.abs() > 1e-10 && (bp.h0 - dn).abs() > 1e-10 {
        let w1 = (dt * dt + (bp.h0 - dn) * (bp.h0 - dn)) / den;
        let w2 = ((bp.h0 - dn) * dn - dt * dt) / den;
        Some((w1, w2))
    } else {
        None
    };
    let band = tol * bp.h0.abs().max(1.0);
    let branch = if margin.abs() >= band {
        Branch::None
    } else if scaled_mc_difference(bp).iter().flatten().all(|x| x.abs() < band) {
        Branch::MetricMatch
    } else {
        let nu_e = dot3(&nu, &nu).sqrt();
        let aligned = (dot3(&nu, &bp.frame.nu_bar).abs() / nu_e - 1.0).abs() < band;
        let dnu = bp.drho(&nu);
        if aligned && (bp.h0 - dn).abs() < band && dn > 0.0 && (bp.h_g - dnu).abs() < band && dnu > 0.0 {
            Branch::NormalAligned
        } else {
            Branch::None
        }
    };
    Ok(LocalComparison { margin, branch, weights, weak_convexity: weak_convexity_margin(bp.h0, dt, dn) })
}

/// Mixed comparison over random nodes, directions and pairs.
pub fn mixed_comparison_sweep(
    patch: &BoundaryPatch,
    metric: &MetricField,
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<ComparisonReport> {
    let pts = patch_points(patch, metric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let (u, v, bp) = &pts[rng.random_range(0..pts.len())];
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut a, mut b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if a == 0.0 && b == 0.0 {
            a = 1.0;
            b = 0.0;
        }
        samples.push(Sample { u: *u, v: *v, margin: lemma_mixed_comparison(bp, phi, a, b)? });
    }
    Ok(ComparisonReport::from_samples("mixed_comparison", samples, tol, Branch::MetricMatch))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalSweep {
    pub report: ComparisonReport,
    pub max_weight_error: f64,
    pub min_weight: f64,
    pub min_weak_convexity: f64,
}

/// Local comparison at every node over a fan of equispaced directions.
pub fn local_comparison_sweep(patch: &BoundaryPatch, metric: &MetricField, fan: usize, tol: f64) -> Result<LocalSweep> {
    let mut samples = Vec::new();
    let mut max_weight_error = 0.0f64;
    let mut min_weight = f64::INFINITY;
    let mut min_weak_convexity = f64::INFINITY;
    let mut branch: Option<Branch> = None;
    for (u, v, bp) in patch_points(patch, metric)? {
        for k in 0..fan {
            let phi = std::f64::consts::TAU * k as f64 / fan as f64;
            let lc = local_boundary_comparison(&bp, phi, tol)?;
            if lc.margin.abs() < tol * bp.h0.abs().max(1.0) {
                branch = match branch {
                    None => Some(lc.branch),
                    Some(b) if b == lc.branch => Some(b),
                    Some(_) => Some(Branch::None),
                };
            }
            if let Some((w1, w2)) = lc.weights {
                max_weight_error = max_weight_error.max((w1 + w2 - 1.0).abs());
                min_weight = min_weight.min(w1.min(w2));
            }
            min_weak_convexity = min_weak_convexity.min(lc.weak_convexity);
            samples.push(Sample { u, v, margin: lc.margin });
        }
    }
    let mut report = ComparisonReport::from_samples("local_comparison", samples, tol, Branch::None);
    // equality branch shared by every sample that attains equality
    report.branch = branch.unwrap_or(Branch::None);
    Ok(LocalSweep {
        report,
        max_weight_error,
        min_weight,
        min_weak_convexity,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakConvexityReport {
    pub report: ComparisonReport,
    /// Largest `|margin − det II|` over the nodes.
    pub max_det_gap: f64,
}

/// Weak convexity with angle derivatives from the patch scheme, compared with det II.
pub fn weak_convexity_sweep(patch: &BoundaryPatch, tol: f64) -> Result<WeakConvexityReport> {
    let field = crate::capillary::prescribed_angle(patch)?;
    let pd = patch.derivatives();
    let e = MetricField::euclidean();
    let mut samples = Vec::with_capacity(patch.nu * patch.nv);
    let mut gap = 0.0f64;
    for j in 0..patch.nv {
        for i in 0..patch.nu {
            let bp = BoundaryPoint::new(pd.jet(i, j), &e)?;
            let (_, dt, dn) = field.at(i, j);
            let m = weak_convexity_margin(bp.h0, dt, dn);
            gap = gap.max((m - bp.det_ii()).abs());
            samples.push(Sample { u: patch.theta_at(i, j), v: patch.v_at(j), margin: m });
        }
    }
    Ok(WeakConvexityReport {
        report: ComparisonReport::from_samples("weak_convexity", samples, tol, Branch::None),
        max_det_gap: gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeReport {
    pub holds: bool,
    pub min_margin: f64,
    pub max_margin: f64,
    /// A pair with `cos_g − cos_E > tol`.
    pub strict_witness: Option<([f64; 3], [f64; 3], f64)>,
    pub pairs: usize,
}

/// Where tangent vectors at the vertex are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ConeSampler {
    Sphere,
    /// Upward solid cone `{|(x, y)| ≤ k z}`.
    Upward { k: f64 },
}

impl ConeSampler {
    fn contains(&self, z: &[f64; 3]) -> bool {
        match *self {
            ConeSampler::Sphere => true,
            ConeSampler::Upward { k } => (z[0] * z[0] + z[1] * z[1]).sqrt() <= k * z[2] + 1e-14,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let z = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n = dot3(&z, &z);
            if n > 1e-4 && n <= 1.0 && self.contains(&z) {
                return z;
            }
        }
    }
}

fn cosine(g: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let q = |x: &[f64; 3], y: &[f64; 3]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[i][j] * x[i] * y[j];
            }
        }
        s
    };
    q(a, b) / (q(a, a) * q(b, b)).sqrt()
}

/// Samples `cos_g − cos_E` over random pairs plus axis pairs of the tangent cone.
pub fn conical_comparison(g: &[[f64; 3]; 3], sampler: ConeSampler, count: usize, seed: u64, tol: f64) -> Result<ConeReport> {
    let m = nalgebra::Matrix3::from_fn(|i, j| 0.5 * (g[i][j] + g[j][i]));
    if m.symmetric_eigen().eigenvalues.min() <= 0.0 {
        return Err(Error::DegenerateCone);
    }
    let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut axes: Vec<[f64; 3]> = id.to_vec();
    for i in 0..3 {
        for j in (i + 1)..3 {
            for s in [1.0, -1.0] {
                let mut z = [0.0; 3];
                z[i] = 1.0;
                z[j] = s;
                axes.push(z);
            }
        }
    }
    axes.retain(|z| sampler.contains(z));
    let mut pairs: Vec<([f64; 3], [f64; 3])> = Vec::new();
    for (a, x) in axes.iter().enumerate() {
        for y in &axes[a + 1..] {
            pairs.push((*x, *y));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        pairs.push((sampler.draw(&mut rng), sampler.draw(&mut rng)));
    }
    let mut min_margin = f64::INFINITY;
    let mut max_margin = f64::NEG_INFINITY;
    let mut witness: Option<([f64; 3], [f64; 3], f64)> = None;
    for (a, b) in &pairs {
        let d = cosine(g, a, b) - cosine(&id, a, b);
        min_margin = min_margin.min(d);
        if d > max_margin {
            max_margin = d;
            if d > tol {
                witness = Some((*a, *b, d));
            }
        }
    }
    Ok(ConeReport { holds: min_margin >= -tol, min_margin, max_margin, strict_witness: witness, pairs: pairs.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RigidityAudit {
    pub chi: i32,
    pub scalar: f64,
    pub second_fundamental_form: f64,
    pub gauss_curvature: f64,
    pub geodesic_curvature: f64,
    pub contact_angle: f64,
    pub gauss_bonnet: f64,
    pub pass: bool,
}

/// Max residual of each infinitesimal rigidity clause on a disk-type leaf.
pub fn rigidity_audit(geo: &LeafGeometry, tol: f64) -> Result<RigidityAudit> {
    let leaf = &geo.leaf;
    if leaf.nr < 5 {
        return Err(Error::NonDiskTopology);
    }
    let mut scalar = 0.0f64;
    let mut a2 = 0.0f64;
    let mut kg = 0.0f64;
    for i in 1..=leaf.nr {
        for j in 0..leaf.nth {
            let n = geo.node(i, j)?;
            let (_, _, r) = geo.ambient_curvature(&n)?;
            scalar = scalar.max(r.abs());
            a2 = a2.max(n.norm_a2.sqrt());
            kg = kg.max(geo.gauss_curvature(&n)?.abs());
        }
    }
    let mut kappa = 0.0f64;
    let mut angle = 0.0f64;
    for j in 0..leaf.nth {
        let c = geo.contact(j)?;
        let sin = c.wall.sin_rho;
        let want = c.wall.h_g / sin + c.dcos_nu / (sin * sin);
        kappa = kappa.max((c.kappa - want).abs());
        angle = angle.max((c.cos_contact - c.cos_prescribed).abs());
    }
    let gb = gauss_bonnet_audit(geo)?.residual.abs();
    let pass = [scalar, a2, kg, kappa, angle, gb].iter().all(|x| *x < tol);
    Ok(RigidityAudit {
        chi: 1,
        scalar,
        second_fundamental_form: a2,
        gauss_curvature: kg,
        geodesic_curvature: kappa,
        contact_angle: angle,
        gauss_bonnet: gb,
        pass,
    })
}

/// `|A(μ_r Ω) − r² A(Ω)|` for the region below a leaf in a cone with a vertex at the bottom.
pub fn homothety_scaling_check(domain: &Domain, metric: &MetricField, leaf: &PolarLeaf, r: f64) -> Result<f64> {
    if !matches!(domain.shape, Shape::Cone { .. }) || r <= 0.0 {
        return Err(Error::Scenario("homothety check needs a cone and r > 0".into()));
    }
    let (_, hi) = leaf.height_range();
    if hi * r >= domain.v_hi || hi >= domain.v_hi {
        return Err(Error::RegionEscapesCone(hi * r.max(1.0)));
    }
    let base = Region { leaf: leaf.clone(), side: Side::Bottom };
    let mut scaled = base.clone();
    scaled.leaf.w.iter_mut().for_each(|w| *w *= r);
    let a = capillary_energy(domain, metric, &base)?;
    let b = capillary_energy(domain, metric, &scaled)?;
    Ok((b - r * r * a).abs())
}
