//! Prescribed angle field, capillary energy of regions, first and second variations, the
//! boundary stability coefficient, and curve integrals over the wall.

use std::f64::consts::PI;

use serde::Serialize;

use crate::boundary::{boundary_point, BoundaryPatch, BoundaryPoint, ANGLE_EPS};
use crate::domain::{Domain, Side};
use crate::error::{Error, Result};
use crate::leaf::{CapillaryEnergy, ContactGeometry, LeafGeometry, NodalDerivatives, PolarLeaf};
use crate::metric::MetricField;
use crate::quad::{gl20_unit, G2_W, G2_X};
use crate::real::{cross3, dot3};
use crate::spectral::Periodic;

/// Prescribed contact angle sampled on a resampled boundary patch.
#[derive(Clone, Debug)]
pub struct AngleField {
    pub nu: usize,
    pub nv: usize,
    pub v: Vec<f64>,
    /// Chart angle of each node, row-major in v.
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub cos_rho: Vec<f64>,
    pub d_tau: Vec<f64>,
    pub d_nu: Vec<f64>,
}

impl AngleField {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let k = j * self.nu + i;
        (self.rho[k], self.d_tau[k], self.d_nu[k])
    }
}

/// `cos ρ̄ = ⟨X, e_z⟩` at the patch nodes, derivatives from the patch differentiation scheme.
pub fn prescribed_angle(patch: &BoundaryPatch) -> Result<AngleField> {
    let pd = patch.derivatives();
    let e = MetricField::euclidean();
    let n = patch.nu * patch.nv;
    let mut out = AngleField {
        nu: patch.nu,
        nv: patch.nv,
        v: (0..patch.nv).map(|j| patch.v_at(j)).collect(),
        theta: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        cos_rho: Vec::with_capacity(n),
        d_tau: Vec::with_capacity(n),
        d_nu: Vec::with_capacity(n),
    };
    for j in 0..patch.nv {
        for i in 0..patch.nu {
            let bp = BoundaryPoint::new(pd.jet(i, j), &e)?;
            if bp.sin_rho <= ANGLE_EPS {
                return Err(Error::DegenerateContactAngle { u: bp.jet.u, v: bp.jet.v, sin: bp.sin_rho });
            }
            let th = patch.theta_at(i, j);
            let exact = boundary_point(&patch.domain, &e, th, patch.v_at(j))?;
            out.theta.push(th);
            out.rho.push(exact.rho());
            out.cos_rho.push(exact.cos_rho);
            out.d_tau.push(pd.grad_rho(&bp, i, j, &bp.frame.tau_bar));
            out.d_nu.push(pd.grad_rho(&bp, i, j, &bp.frame.nu_bar));
        }
    }
    Ok(out)
}

/// A leaf together with the side of it that Ω occupies.
#[derive(Clone, Debug)]
pub struct Region {
    pub leaf: PolarLeaf,
    pub side: Side,
}

impl Region {
    pub fn top(leaf: PolarLeaf) -> Self {
        Region { leaf, side: Side::Top }
    }
}

/// `|∂^iΩ|_g − ∫_{∂^bΩ} cos ρ̄ dA_g`.
pub fn capillary_energy(domain: &Domain, metric: &MetricField, region: &Region) -> Result<f64> {
    CapillaryEnergy::for_leaf(domain, metric, region.side, &region.leaf)?.value(&region.leaf.w)
}

/// Energy of Ω = M: `−∫_{∂M} cos ρ̄ dA_g`.
pub fn whole_domain_energy(domain: &Domain, metric: &MetricField, nr: usize, nth: usize) -> Result<f64> {
    let top = CapillaryEnergy::new(domain, metric, Side::Top, nr, nth)?;
    let bottom = CapillaryEnergy::new(domain, metric, Side::Bottom, nr, nth)?;
    let (xs, ws) = gl20_unit();
    let ht = 2.0 * PI / nth as f64;
    let len = domain.v_hi - domain.v_lo;
    let mut wall = 0.0;
    for j in 0..nth {
        for q in 0..2 {
            let th = (j as f64 + G2_X[q]) * ht;
            for (x, w) in xs.iter().zip(ws) {
                wall += G2_W[q] * ht * w * len
                    * crate::leaf::wetted_density::<f64>(domain, metric, th, domain.v_lo + len * x);
            }
        }
    }
    Ok(top.cap() - bottom.cap() - wall)
}

/// A deformation of a leaf: normal speed at every ring node and a wall-tangent field along the
/// contact nodes.
#[derive(Clone, Debug)]
pub struct Variation {
    pub normal: Vec<f64>,
    pub boundary: Vec<[f64; 3]>,
}

/// The variation induced by moving node heights by `dw` along the chart's vertical direction.
pub fn height_variation(geo: &LeafGeometry, dw: &[f64]) -> Result<Variation> {
    let leaf = &geo.leaf;
    let mut normal = vec![0.0; leaf.len()];
    for i in 1..=leaf.nr {
        for j in 0..leaf.nth {
            let n = geo.node(i, j)?;
            let k = leaf.idx(i, j);
            normal[k] = dw[k] * n.inner(&n.p_z, &n.normal);
        }
    }
    let boundary = (0..leaf.nth)
        .map(|j| {
            let pv = geo.domain.jet(leaf.theta(j), leaf.at(leaf.nr, j)).pv;
            let k = leaf.idx(leaf.nr, j);
            [pv[0] * dw[k], pv[1] * dw[k], pv[2] * dw[k]]
        })
        .collect();
    Ok(Variation { normal, boundary })
}

/// `∫_Σ H f dA + ∮_{∂Σ} ⟨Y, η − ν cos ρ̄⟩ ds` with N into Ω.
pub fn first_variation(geo: &LeafGeometry, var: &Variation) -> Result<f64> {
    let interior = geo.integrate(|i, j, n| Ok(n.mean * var.normal[geo.leaf.idx(i, j)]))?;
    let bad = std::cell::Cell::new(0.0f64);
    let boundary = geo.integrate_contact(|c| {
        let j = ((c.theta / (2.0 * PI)) * geo.leaf.nth as f64).round() as usize % geo.leaf.nth;
        let y = var.boundary[j];
        let norm = dot3(&y, &y).sqrt();
        bad.set(bad.get().max(dot3(&y, &c.wall.frame.x_out).abs() / norm.max(1e-300)));
        let m = [
            c.eta[0] - c.nu[0] * c.cos_prescribed,
            c.eta[1] - c.nu[1] * c.cos_prescribed,
            c.eta[2] - c.nu[2] * c.cos_prescribed,
        ];
        Ok(c.node.inner(&y, &m))
    })?;
    if bad.get() > 1e-8 {
        return Err(Error::VariationNotTangent(bad.get()));
    }
    Ok(interior + boundary)
}

/// Directional derivative of the discrete energy along node-height changes.
pub fn discrete_first_variation(energy: &CapillaryEnergy, leaf: &PolarLeaf, dw: &[f64]) -> Result<f64> {
    let (_, g) = energy.gradient(&leaf.w)?;
    Ok(g.iter().zip(dw).map(|(a, b)| a * b).sum())
}

/// Both algebraic forms of the boundary stability coefficient at a contact node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityQ {
    /// `−H cot ρ̄ + H_∂M / sin ρ̄ − κ + ∂_ν cos ρ̄ / sin² ρ̄`.
    pub rewritten: f64,
    /// `II_∂M(ν, ν) / sin ρ̄ − cot ρ̄ A(η, η) + ∂_ν cos ρ̄ / sin² ρ̄`.
    pub original: f64,
}

pub fn stability_q(c: &ContactGeometry) -> Result<StabilityQ> {
    let cos = c.cos_prescribed;
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    if sin <= ANGLE_EPS {
        return Err(Error::DegenerateContactAngle { u: c.theta, v: c.wall.jet.v, sin });
    }
    let cot = cos / sin;
    let dcos = c.dcos_nu;
    let a_eta = c.node.second_on(&c.node.coefficients(&c.eta), &c.node.coefficients(&c.eta));
    let rewritten = -c.node.mean * cot + c.wall.h_g / sin - c.kappa + dcos / (sin * sin);
    let original = c.wall.ii_metric(&c.nu, &c.nu) / sin - cot * a_eta + dcos / (sin * sin);
    Ok(StabilityQ { rewritten, original })
}

/// `∫|∇f|² − ∫(|A|² + Ric(N,N)) f² − ∮ Q f²` for nodal values `f`.
pub fn second_variation(geo: &LeafGeometry, f: &[f64]) -> Result<f64> {
    let d = NodalDerivatives::new(geo.leaf.nr, geo.leaf.nth, f);
    let interior = geo.integrate(|i, j, n| {
        let fd = d.at(i, j);
        let det = n.first[0][0] * n.first[1][1] - n.first[0][1] * n.first[1][0];
        let grad2 = (n.first[1][1] * fd[1] * fd[1] - 2.0 * n.first[0][1] * fd[1] * fd[2]
            + n.first[0][0] * fd[2] * fd[2])
            / det;
        let (_, ric, _) = geo.ambient_curvature(n)?;
        Ok(grad2 - (n.norm_a2 + ric) * fd[0] * fd[0])
    })?;
    let nr = geo.leaf.nr;
    let boundary = geo.integrate_contact(|c| {
        let j = ((c.theta / (2.0 * PI)) * geo.leaf.nth as f64).round() as usize % geo.leaf.nth;
        let fv = d.at(nr, j)[0];
        Ok(stability_q(c)?.rewritten * fv * fv)
    })?;
    Ok(interior - boundary)
}

/// `∮ f ∂f/∂η ds` and `∫ |∇f|² dA` for a Green identity audit.
pub fn boundary_flux_and_dirichlet(geo: &LeafGeometry, f: &[f64]) -> Result<(f64, f64)> {
    let d = NodalDerivatives::new(geo.leaf.nr, geo.leaf.nth, f);
    let nr = geo.leaf.nr;
    let flux = geo.integrate_contact(|c| {
        let j = ((c.theta / (2.0 * PI)) * geo.leaf.nth as f64).round() as usize % geo.leaf.nth;
        let fd = d.at(nr, j);
        let e = c.node.coefficients(&c.eta);
        Ok(fd[0] * (e[0] * fd[1] + e[1] * fd[2]))
    })?;
    let dirichlet = geo.integrate(|i, j, n| {
        let fd = d.at(i, j);
        let det = n.first[0][0] * n.first[1][1] - n.first[0][1] * n.first[1][0];
        Ok((n.first[1][1] * fd[1] * fd[1] - 2.0 * n.first[0][1] * fd[1] * fd[2] + n.first[0][0] * fd[2] * fd[2])
            / det)
    })?;
    Ok((flux, dirichlet))
}

/// Closed curve on the wall in chart coordinates, sampled uniformly in its parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedCurve {
    /// Unwrapped chart angle; `θ(end) = θ(start) + 2π·turns`.
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub turns: i32,
}

impl ClosedCurve {
    pub fn from_fn(n: usize, turns: i32, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let mut theta = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for k in 0..n {
            let (t, z) = f(2.0 * PI * k as f64 / n as f64);
            theta.push(t);
            v.push(z);
        }
        ClosedCurve { theta, v, turns }
    }

    pub fn level(n: usize, v: f64) -> Self {
        Self::from_fn(n, 1, |s| (s, v))
    }

    /// `v = v0 + a cos θ`.
    pub fn slanted(n: usize, v0: f64, a: f64) -> Self {
        Self::from_fn(n, 1, |s| (s, v0 + a * s.cos()))
    }

    /// Wiggled height with a non-uniform parametrization.
    pub fn wiggled(n: usize, v0: f64, a: f64, k: u32) -> Self {
        Self::from_fn(n, 1, |s| (s + 0.3 * (2.0 * s).sin(), v0 + a * (k as f64 * s).sin()))
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Parameter derivatives `(θ', v')` by spectral differentiation.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let per = Periodic::new(n);
        let lin = self.turns as f64;
        let periodic: Vec<f64> = self
            .theta
            .iter()
            .enumerate()
            .map(|(k, t)| t - lin * 2.0 * PI * k as f64 / n as f64)
            .collect();
        let dt: Vec<f64> = per.derivative(&periodic, 1).iter().map(|d| d + lin).collect();
        (dt, per.derivative(&self.v, 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Winding {
    pub total: f64,
    pub turns: i64,
    /// The curve winds once around the axis and separates the caps.
    pub simple: bool,
}

/// Total turning of the level-curve direction `(x_u, y_u)` along a closed wall curve.
pub fn winding_integral(domain: &Domain, curve: &ClosedCurve) -> Result<Winding> {
    let n = curve.len();
    if n < 3 {
        return Err(Error::InsufficientSamples(n));
    }
    let angle = |k: usize| {
        let j = domain.jet(curve.theta[k], curve.v[k]);
        j.pu[1].atan2(j.pu[0])
    };
    let first = angle(0);
    let mut prev = first;
    let mut total = 0.0;
    for k in 1..=n {
        let a = if k == n { first } else { angle(k) };
        let mut d = a - prev;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        if d.abs() >= PI / 2.0 {
            return Err(Error::UnwrapAmbiguity(d));
        }
        total += d;
        prev = a;
    }
    let turns = (total / (2.0 * PI)).round() as i64;
    let mut monotone = true;
    for k in 0..n {
        let next = if k + 1 == n { curve.theta[0] + 2.0 * PI * curve.turns as f64 } else { curve.theta[k + 1] };
        if next <= curve.theta[k] {
            monotone = false;
        }
    }
    let simple = turns == 1 && curve.turns == 1 && monotone;
    Ok(Winding { total, turns, simple })
}

/// Wall unit conormal to a curve tangent, g-orthogonal and pointing downward.
fn wall_conormal(bp: &BoundaryPoint, tangent: &[f64; 3]) -> [f64; 3] {
    let t2 = bp.inner_g(tangent, tangent);
    let pick = if bp.jet.pv[2].abs() > 0.0 { bp.jet.pv } else { bp.jet.pu };
    let c = bp.inner_g(&pick, tangent) / t2;
    let mut n = [pick[0] - c * tangent[0], pick[1] - c * tangent[1], pick[2] - c * tangent[2]];
    let l = bp.inner_g(&n, &n).sqrt();
    n = [n[0] / l, n[1] / l, n[2] / l];
    let orient = dot3(&cross3(tangent, &n), &bp.frame.x_out);
    if orient > 0.0 {
        n = [-n[0], -n[1], -n[2]];
    }
    n
}

/// `∮ (H_∂M − ∇_ν ρ̄) / sin ρ̄ ds` in g-arclength.
pub fn curve_estimate_integral(domain: &Domain, metric: &MetricField, curve: &ClosedCurve) -> Result<f64> {
    let (dt, dv) = curve.derivatives();
    let n = curve.len();
    let h = 2.0 * PI / n as f64;
    let mut s = 0.0;
    for k in 0..n {
        let bp = BoundaryPoint::new(domain.jet(curve.theta[k], curve.v[k]), metric)?;
        let t = [
            bp.jet.pu[0] * dt[k] + bp.jet.pv[0] * dv[k],
            bp.jet.pu[1] * dt[k] + bp.jet.pv[1] * dv[k],
            bp.jet.pu[2] * dt[k] + bp.jet.pv[2] * dv[k],
        ];
        let nu = wall_conormal(&bp, &t);
        let speed = bp.inner_g(&t, &t).sqrt();
        s += h * speed * (bp.h_g - bp.drho(&nu)) / bp.sin_rho;
    }
    Ok(s)
}

/// Pointwise pieces of the curve estimate, for the domination audit.
pub fn curve_estimate_density(bp: &BoundaryPoint, tangent: &[f64; 3]) -> f64 {
    let nu = wall_conormal(bp, tangent);
    (bp.h_g - bp.drho(&nu)) / bp.sin_rho
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussBonnet {
    pub int_k: f64,
    pub int_kappa: f64,
    pub chi: i32,
    pub residual: f64,
}

/// `∫K dA + ∮κ ds − 2πχ` with χ = 1 for disk-type leaves.
pub fn gauss_bonnet_audit(geo: &LeafGeometry) -> Result<GaussBonnet> {
    let int_k = geo.integrate(|_, _, n| geo.gauss_curvature(n))?;
    let int_kappa = geo.integrate_contact(|c| Ok(c.kappa))?;
    Ok(GaussBonnet { int_k, int_kappa, chi: 1, residual: int_k + int_kappa - 2.0 * PI })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn e() -> MetricField {
        MetricField::euclidean()
    }

    // [DERIVED]
    #[test]
    fn angle_fields_of_model_walls() {
        let cyl = BoundaryPatch::new(&Domain::cylinder(1.0, -1.0, 1.0), 32, 9, -0.5, 0.5).unwrap();
        let a = prescribed_angle(&cyl).unwrap();
        assert!(a.rho.iter().all(|r| (r - PI / 2.0).abs() < 1e-12));
        let sph = BoundaryPatch::new(&Domain::sphere(1.0, -0.9, 0.9), 32, 17, -0.4, 0.4).unwrap();
        let a = prescribed_angle(&sph).unwrap();
        for j in 0..a.nv {
            assert!((a.cos_rho[j * a.nu + 3] - a.v[j]).abs() < 1e-9);
        }
        let cone = BoundaryPatch::new(&Domain::cone(0.7, 2.0), 32, 9, 0.8, 1.6).unwrap();
        let a = prescribed_angle(&cone).unwrap();
        let r0 = a.rho[5];
        assert!(a.rho.iter().all(|r| (r - r0).abs() < 1e-10));
        assert!(a.d_nu.iter().all(|d| d.abs() < 1e-9));
    }

    // [DERIVED]
    #[test]
    fn energies_of_model_regions() {
        let g = e();
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let r = Region::top(PolarLeaf::flat(8, 16, 0.3));
        assert!(capillary_energy(&cyl, &g, &r).unwrap().abs() < 1e-13);
        assert!(whole_domain_energy(&cyl, &g, 8, 16).unwrap().abs() < 1e-13);
        let sph = Domain::sphere(1.0, -0.8, 0.8);
        assert!(capillary_energy(&sph, &g, &r).unwrap().abs() < 1e-13);
        assert!(whole_domain_energy(&sph, &g, 8, 16).unwrap().abs() < 1e-12);
    }

    // [TRIVIAL]
    #[test]
    fn flat_disks_are_critical() {
        let g = e();
        for (d, h) in [(Domain::cylinder(1.0, -1.0, 1.0), 0.2), (Domain::sphere(1.0, -0.8, 0.8), 0.35)] {
            let leaf = PolarLeaf::flat(8, 32, h);
            let geo = LeafGeometry::new(&d, &g, Side::Top, &leaf).unwrap();
            let ones = vec![1.0; leaf.len()];
            let var = height_variation(&geo, &ones).unwrap();
            assert!(first_variation(&geo, &var).unwrap().abs() < 1e-12);
        }
    }

    // [DERIVED]
    #[test]
    fn continuum_and_discrete_first_variation_agree() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let g = e();
        let c = 0.1;
        let leaf = PolarLeaf::from_fn(48, 64, |r, _| c * r * r);
        let geo = LeafGeometry::new(&d, &g, Side::Top, &leaf).unwrap();
        let en = CapillaryEnergy::for_leaf(&d, &g, Side::Top, &leaf).unwrap();
        let dw = PolarLeaf::from_fn(48, 64, |r, _| r * r).w;
        let cont = first_variation(&geo, &height_variation(&geo, &dw).unwrap()).unwrap();
        let disc = discrete_first_variation(&en, &leaf, &dw).unwrap();
        // d/dc of the paraboloid area (π/6c²)((1+4c²)^{3/2} − 1)
        let area = |c: f64| PI / (6.0 * c * c) * ((1.0 + 4.0 * c * c).powf(1.5) - 1.0);
        let h = 1e-5;
        let oracle = (area(c + h) - area(c - h)) / (2.0 * h);
        assert!((cont - oracle).abs() < 1e-7, "{cont} vs {oracle}");
        assert!((disc - oracle).abs() < 1e-3 * oracle, "{disc} vs {oracle}");
    }

    // [TRIVIAL]
    #[test]
    fn normal_variation_rejects_wall_crossing_fields() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        let g = e();
        let leaf = PolarLeaf::flat(8, 16, 0.0);
        let geo = LeafGeometry::new(&d, &g, Side::Top, &leaf).unwrap();
        let var = Variation { normal: vec![0.0; leaf.len()], boundary: vec![[1.0, 0.0, 0.0]; 16] };
        assert!(matches!(first_variation(&geo, &var), Err(Error::VariationNotTangent(_))));
    }

    // [DERIVED]
    #[test]
    fn stability_coefficient_on_flat_disks() {
        let g = e();
        let sph = Domain::sphere(1.0, -0.8, 0.8);
        let leaf = PolarLeaf::flat(8, 16, 0.0);
        let geo = LeafGeometry::new(&sph, &g, Side::Top, &leaf).unwrap();
        let q = stability_q(&geo.contact(2).unwrap()).unwrap();
        assert!(q.rewritten.abs() < 1e-12 && q.original.abs() < 1e-12);
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let geo = LeafGeometry::new(&cyl, &g, Side::Top, &leaf).unwrap();
        let q = stability_q(&geo.contact(5).unwrap()).unwrap();
        assert!(q.rewritten.abs() < 1e-12 && q.original.abs() < 1e-12);
        // off-equator flat disk of the sphere: both forms agree, value stays zero
        let leaf = PolarLeaf::flat(8, 16, 0.5);
        let geo = LeafGeometry::new(&sph, &g, Side::Top, &leaf).unwrap();
        let q = stability_q(&geo.contact(1).unwrap()).unwrap();
        assert!((q.rewritten - q.original).abs() < 1e-12);
        assert!(q.rewritten.abs() < 1e-12);
    }

    // [PAPER]
    #[test]
    fn second_variation_of_rigid_disk() {
        let g = e();
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let leaf = PolarLeaf::flat(16, 32, 0.0);
        let geo = LeafGeometry::new(&cyl, &g, Side::Top, &leaf).unwrap();
        assert!(second_variation(&geo, &vec![1.0; leaf.len()]).unwrap().abs() < 1e-12);
        assert_eq!(second_variation(&geo, &vec![0.0; leaf.len()]).unwrap(), 0.0);
        let f = PolarLeaf::from_fn(16, 32, |r, t| r * t.cos()).w;
        let (flux, dir) = boundary_flux_and_dirichlet(&geo, &f).unwrap();
        assert!((flux - PI).abs() < 1e-10 && (dir - PI).abs() < 1e-6, "{flux} {dir}");
    }

    // [PAPER]
    #[test]
    fn winding_of_separating_curves() {
        let d = Domain::cylinder(1.0, -1.0, 1.0);
        for c in [ClosedCurve::level(64, 0.0), ClosedCurve::slanted(64, 0.0, 0.5), ClosedCurve::wiggled(128, 0.0, 0.3, 5)] {
            let w = winding_integral(&d, &c).unwrap();
            assert!((w.total - 2.0 * PI).abs() < 1e-12 && w.simple);
        }
        let double = ClosedCurve::from_fn(128, 2, |s| (2.0 * s, 0.2 * s.sin()));
        let w = winding_integral(&d, &double).unwrap();
        assert!((w.total - 4.0 * PI).abs() < 1e-12 && !w.simple);
        assert!(matches!(winding_integral(&d, &ClosedCurve::level(3, 0.0)), Err(Error::UnwrapAmbiguity(_))));
    }

    // [PAPER]
    #[test]
    fn curve_estimate_equality_cases() {
        let g = e();
        let sph = Domain::sphere(1.0, -0.9, 0.9);
        let v = curve_estimate_integral(&sph, &g, &ClosedCurve::level(64, 0.0)).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-12);
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let v = curve_estimate_integral(&cyl, &g, &ClosedCurve::level(64, 0.3)).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-12);
        let v = curve_estimate_integral(&cyl, &MetricField::diag(1.0, 1.0, 4.0), &ClosedCurve::level(64, 0.3)).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-12);
    }

    // [DERIVED]
    #[test]
    fn curve_estimate_brute_force_on_conformal_metric() {
        let f = parse_expression("0.1*x").unwrap();
        let g = MetricField::conformal(&f).unwrap();
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let got = curve_estimate_integral(&cyl, &g, &ClosedCurve::level(64, 0.0)).unwrap();
        // on a level circle of the wall, g = e^{0.2 x} g_E: H_g = e^{-f}(1 + 2·0.1 cos θ),
        // ds_g = e^{f} dθ, ∇_ν ρ̄ = 0
        let want: f64 = (0..4000)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / 4000.0;
                1.0 + 0.2 * t.cos()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / 4000.0;
        assert!((got - want).abs() < 1e-10);
    }

    // [DERIVED]
    #[test]
    fn gauss_bonnet_on_flat_and_curved_leaves() {
        let g = e();
        let cyl = Domain::cylinder(1.0, -1.0, 1.0);
        let geo = LeafGeometry::new(&cyl, &g, Side::Top, &PolarLeaf::flat(16, 32, 0.0)).unwrap();
        let gb = gauss_bonnet_audit(&geo).unwrap();
        assert!(gb.int_k.abs() < 1e-14 && (gb.int_kappa - 2.0 * PI).abs() < 1e-12);
        // spherical cap z = -sqrt(R² − r²) over the unit disk with R = 2
        let leaf = PolarLeaf::from_fn(32, 64, |r, _| -(4.0 - r * r).sqrt() + 2.0);
        let geo = LeafGeometry::new(&cyl, &g, Side::Top, &leaf).unwrap();
        let gb = gauss_bonnet_audit(&geo).unwrap();
        assert!(gb.residual.abs() < 1e-4, "{gb:?}");
        assert!(gb.int_k > 0.1);
    }
}
