//! Riemannian metrics on subsets of R³ and their pointwise curvature.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::real::{lift3, Dual, Real, V3};

/// Constant metric with `a12 = 0`; `a13`, `a23` may couple the vertical direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantBlock {
    pub a11: f64,
    pub a22: f64,
    pub a33: f64,
    #[serde(default)]
    pub a13: f64,
    #[serde(default)]
    pub a23: f64,
}

impl ConstantBlock {
    pub fn diag(a11: f64, a22: f64, a33: f64) -> Self {
        ConstantBlock { a11, a22, a33, a13: 0.0, a23: 0.0 }
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.a11, 0.0, self.a13],
            [0.0, self.a22, self.a23],
            [self.a13, self.a23, self.a33],
        ]
    }

    /// The (3,3) entry of the inverse matrix.
    pub fn a_upper_33(&self) -> f64 {
        let m = Matrix3::from(self.matrix()).transpose();
        let det = m.determinant();
        (self.a11 * self.a22) / det
    }

    pub fn scaled(&self, l: f64) -> Self {
        ConstantBlock {
            a11: l * self.a11,
            a22: l * self.a22,
            a33: l * self.a33,
            a13: l * self.a13,
            a23: l * self.a23,
        }
    }
}

/// Axis-aligned box in which a metric may be queried.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl EvalBox {
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }
}

/// Six coefficient expressions in the order g11, g12, g13, g22, g23, g33.
pub type Coefficients = [Expr; 6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MetricKind {
    Euclidean,
    ConstantDiagonalBlock(ConstantBlock),
    /// `base + t·h(x, y, z)`.
    Perturbed { base: ConstantBlock, t: f64, h: Box<Coefficients> },
    General(Box<Coefficients>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub kind: MetricKind,
    #[serde(default)]
    pub domain: Option<EvalBox>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvaturePack {
    /// `christoffel[k][i][j]` = Γ^k_ij.
    pub christoffel: [[[f64; 3]; 3]; 3],
    pub ricci: [[f64; 3]; 3],
    pub scalar: f64,
}

const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

fn coeff_vars() -> [Var; 4] {
    [Var::X, Var::Y, Var::Z, Var::T]
}

impl MetricField {
    pub fn euclidean() -> Self {
        MetricField { kind: MetricKind::Euclidean, domain: None }
    }

    pub fn constant(block: ConstantBlock) -> Self {
        MetricField { kind: MetricKind::ConstantDiagonalBlock(block), domain: None }
    }

    pub fn diag(a11: f64, a22: f64, a33: f64) -> Self {
        Self::constant(ConstantBlock::diag(a11, a22, a33))
    }

    pub fn perturbed(base: ConstantBlock, t: f64, h: Coefficients) -> Result<Self> {
        for e in h.iter() {
            e.check_vars(&coeff_vars(), "perturbation entry")?;
        }
        Ok(MetricField { kind: MetricKind::Perturbed { base, t, h: Box::new(h) }, domain: None })
    }

    pub fn general(c: Coefficients) -> Result<Self> {
        for e in c.iter() {
            e.check_vars(&coeff_vars(), "metric entry")?;
        }
        Ok(MetricField { kind: MetricKind::General(Box::new(c)), domain: None })
    }

    /// `exp(2 f) · g_Eucl` for a scalar expression `f(x, y, z)`.
    pub fn conformal(f: &Expr) -> Result<Self> {
        let w = Expr::Call(
            crate::expr::Func::Exp,
            Box::new(Expr::Bin(crate::expr::BinOp::Mul, Box::new(Expr::Num(2.0)), Box::new(f.clone()))),
        );
        let z = Expr::Num(0.0);
        Self::general([w.clone(), z.clone(), z.clone(), w.clone(), z, w])
    }

    pub fn with_domain(mut self, lo: [f64; 3], hi: [f64; 3]) -> Self {
        self.domain = Some(EvalBox { lo, hi });
        self
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            MetricKind::Euclidean | MetricKind::ConstantDiagonalBlock(_) => true,
            MetricKind::Perturbed { t, h, .. } => *t == 0.0 || h.iter().all(|e| e.is_constant()),
            MetricKind::General(c) => c.iter().all(|e| e.is_constant()),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }

    /// Raw coefficient matrix at `p`, generic over the scalar type; no positivity check.
    pub fn matrix<T: Real>(&self, p: &V3<T>) -> [[T; 3]; 3] {
        let from_block = |b: &ConstantBlock| {
            let m = b.matrix();
            let mut out = [[T::zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = T::cst(m[i][j]);
                }
            }
            out
        };
        match &self.kind {
            MetricKind::Euclidean => from_block(&ConstantBlock::identity()),
            MetricKind::ConstantDiagonalBlock(b) => from_block(b),
            MetricKind::Perturbed { base, t, h } => {
                let mut out = from_block(base);
                if *t != 0.0 {
                    let env = [T::zero(), T::zero(), p[0], p[1], p[2], T::cst(*t)];
                    let vals: Vec<T> = h.iter().map(|e| e.eval(&env)).collect();
                    for i in 0..3 {
                        for j in 0..3 {
                            out[i][j] += vals[IDX[i][j]] * *t;
                        }
                    }
                }
                out
            }
            MetricKind::General(c) => {
                let env = [T::zero(), T::zero(), p[0], p[1], p[2], T::zero()];
                let vals: Vec<T> = c.iter().map(|e| e.eval(&env)).collect();
                let mut out = [[T::zero(); 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j] = vals[IDX[i][j]];
                    }
                }
                out
            }
        }
    }

    fn check_inside(&self, p: &[f64; 3]) -> Result<()> {
        match &self.domain {
            Some(b) if !b.contains(p) => Err(Error::OutOfDomain(*p)),
            _ => Ok(()),
        }
    }

    /// g(p) as a symmetric positive definite form.
    pub fn metric_at(&self, p: &[f64; 3]) -> Result<Matrix3<f64>> {
        self.check_inside(p)?;
        let m = Matrix3::from(self.matrix::<f64>(p)).transpose();
        ensure_spd(&m, p)?;
        Ok(m)
    }

    pub fn inner(&self, p: &[f64; 3], v1: &[f64; 3], v2: &[f64; 3]) -> Result<f64> {
        let g = self.metric_at(p)?;
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[(i, j)] * v1[i] * v2[j];
            }
        }
        Ok(s)
    }

    /// Exact first derivatives `dg[k][i][j] = ∂_k g_ij` by forward-mode differentiation.
    pub fn derivative(&self, p: &[f64; 3]) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        if self.is_constant() {
            return out;
        }
        let q: V3<Dual<f64, 3>> = [Dual::var(p[0], 0), Dual::var(p[1], 1), Dual::var(p[2], 2)];
        let m = self.matrix(&q);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out[k][i][j] = m[i][j].d[k];
                }
            }
        }
        out
    }

    /// Christoffel symbols from exact metric derivatives.
    pub fn christoffel(&self, p: &[f64; 3]) -> Result<[[[f64; 3]; 3]; 3]> {
        let g = self.metric_at(p)?;
        if self.is_constant() {
            return Ok([[[0.0; 3]; 3]; 3]);
        }
        let dg = self.derivative(p);
        let gi = g.try_inverse().ok_or(Error::NonPositiveDefinite { point: *p, min_eig: 0.0 })?;
        Ok(christoffel_from(&gi, &dg))
    }

    /// Christoffel symbols, Ricci tensor and scalar curvature from central differences
    /// with spacing `h`.
    pub fn curvature_at(&self, p: &[f64; 3], h: f64) -> Result<CurvaturePack> {
        let g0 = self.metric_at(p)?;
        if self.is_constant() {
            return Ok(CurvaturePack {
                christoffel: [[[0.0; 3]; 3]; 3],
                ricci: [[0.0; 3]; 3],
                scalar: 0.0,
            });
        }
        if let Some(b) = &self.domain {
            for k in 0..3 {
                if p[k] - h < b.lo[k] || p[k] + h > b.hi[k] {
                    return Err(Error::StencilOutOfDomain(*p));
                }
            }
        }
        let at = |d: [f64; 3]| -> [[f64; 3]; 3] {
            let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
            self.matrix::<f64>(&q)
        };
        let e = |k: usize, s: f64| {
            let mut d = [0.0; 3];
            d[k] = s;
            d
        };
        let mut dg = [[[0.0; 3]; 3]; 3];
        let mut ddg = [[[[0.0; 3]; 3]; 3]; 3];
        let c = at([0.0; 3]);
        for k in 0..3 {
            let gp = at(e(k, h));
            let gm = at(e(k, -h));
            for i in 0..3 {
                for j in 0..3 {
                    dg[k][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
                    ddg[k][k][i][j] = (gp[i][j] - 2.0 * c[i][j] + gm[i][j]) / (h * h);
                }
            }
        }
        for k in 0..3 {
            for l in (k + 1)..3 {
                let mut dpp = [0.0; 3];
                dpp[k] = h;
                dpp[l] = h;
                let mut dpm = dpp;
                dpm[l] = -h;
                let mut dmp = dpp;
                dmp[k] = -h;
                let dmm = [-dpp[0], -dpp[1], -dpp[2]];
                let (a, b, cc, d) = (at(dpp), at(dpm), at(dmp), at(dmm));
                for i in 0..3 {
                    for j in 0..3 {
                        let v = (a[i][j] - b[i][j] - cc[i][j] + d[i][j]) / (4.0 * h * h);
                        ddg[k][l][i][j] = v;
                        ddg[l][k][i][j] = v;
                    }
                }
            }
        }
        let gi = g0.try_inverse().ok_or(Error::NonPositiveDefinite { point: *p, min_eig: 0.0 })?;
        let gam = christoffel_from(&gi, &dg);
        // ∂_m g^{kl} = -g^{ka} ∂_m g_ab g^{bl}
        let mut dgi = [[[0.0; 3]; 3]; 3];
        for m in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            s -= gi[(k, a)] * dg[m][a][b] * gi[(b, l)];
                        }
                    }
                    dgi[m][k][l] = s;
                }
            }
        }
        // dgam[m][k][i][j] = ∂_m Γ^k_ij
        let mut dgam = [[[[0.0; 3]; 3]; 3]; 3];
        for m in 0..3 {
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let mut s = 0.0;
                        for l in 0..3 {
                            let low = dg[i][j][l] + dg[j][i][l] - dg[l][i][j];
                            let dlow = ddg[m][i][j][l] + ddg[m][j][i][l] - ddg[m][l][i][j];
                            s += 0.5 * (dgi[m][k][l] * low + gi[(k, l)] * dlow);
                        }
                        dgam[m][k][i][j] = s;
                    }
                }
            }
        }
        let mut ric = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += dgam[k][k][i][j] - dgam[j][k][i][k];
                    for l in 0..3 {
                        s += gam[k][k][l] * gam[l][i][j] - gam[k][j][l] * gam[l][i][k];
                    }
                }
                ric[i][j] = s;
            }
        }
        let mut scalar = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                scalar += gi[(i, j)] * ric[i][j];
            }
        }
        Ok(CurvaturePack { christoffel: gam, ricci: ric, scalar })
    }

    /// `λ·g` pointwise.
    pub fn scale_metric(&self, l: f64) -> Result<MetricField> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::NonPositiveScale(l));
        }
        let scale_expr = |e: &Expr| {
            Expr::Bin(crate::expr::BinOp::Mul, Box::new(Expr::Num(l)), Box::new(e.clone()))
        };
        let kind = match &self.kind {
            MetricKind::Euclidean => MetricKind::ConstantDiagonalBlock(ConstantBlock::identity().scaled(l)),
            MetricKind::ConstantDiagonalBlock(b) => MetricKind::ConstantDiagonalBlock(b.scaled(l)),
            MetricKind::Perturbed { base, t, h } => MetricKind::Perturbed {
                base: base.scaled(l),
                t: *t,
                h: Box::new(std::array::from_fn(|i| scale_expr(&h[i]))),
            },
            MetricKind::General(c) => MetricKind::General(Box::new(std::array::from_fn(|i| scale_expr(&c[i])))),
        };
        Ok(MetricField { kind, domain: self.domain })
    }

    /// Matrix at `p` lifted to a generic scalar after evaluating at plain `f64` coordinates.
    pub fn matrix_const<T: Real>(&self, p: &[f64; 3]) -> [[T; 3]; 3] {
        let m = self.matrix::<f64>(p);
        std::array::from_fn(|i| std::array::from_fn(|j| T::cst(m[i][j])))
    }

    pub fn matrix_lifted<T: Real>(&self, p: &[f64; 3]) -> [[T; 3]; 3] {
        self.matrix(&lift3::<T>(p))
    }
}

pub fn christoffel_from(gi: &Matrix3<f64>, dg: &[[[f64; 3]; 3]; 3]) -> [[[f64; 3]; 3]; 3] {
    let mut gam = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += gi[(k, l)] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                }
                gam[k][i][j] = 0.5 * s;
            }
        }
    }
    gam
}

pub fn ensure_spd(m: &Matrix3<f64>, p: &[f64; 3]) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    let d1 = m[(0, 0)];
    let d2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let d3 = m.determinant();
    if asym > 1e-12 * scale || !(d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || !d3.is_finite() {
        let min_eig = if m.iter().all(|x| x.is_finite()) {
            SymmetricEigen::new(*m).eigenvalues.min()
        } else {
            f64::NAN
        };
        return Err(Error::NonPositiveDefinite { point: *p, min_eig });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn coeffs(src: [&str; 6]) -> Coefficients {
        std::array::from_fn(|i| parse_expression(src[i]).unwrap())
    }

    fn hyperbolic() -> MetricField {
        MetricField::general(coeffs(["exp(2*z)", "0", "0", "exp(2*z)", "0", "1"])).unwrap()
    }

    // [TRIVIAL]
    #[test]
    fn euclidean_is_identity() {
        let g = MetricField::euclidean().metric_at(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g, Matrix3::identity());
    }

    // [TRIVIAL]
    #[test]
    fn constant_block_evaluates_to_its_entries() {
        let g = MetricField::diag(4.0, 1.0, 1.0).metric_at(&[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(g, Matrix3::from_diagonal(&nalgebra::Vector3::new(4.0, 1.0, 1.0)));
    }

    // [TRIVIAL]
    #[test]
    fn perturbed_metric_adds_scaled_tensor() {
        let m = MetricField::perturbed(ConstantBlock::identity(), 0.1, coeffs(["z", "0", "0", "0", "0", "0"])).unwrap();
        let g = m.metric_at(&[0.0, 0.0, 2.0]).unwrap();
        assert!((g[(0, 0)] - 1.2).abs() < 1e-15);
        assert_eq!(g[(1, 1)], 1.0);
        assert_eq!(g[(2, 2)], 1.0);
    }

    // [DERIVED]
    #[test]
    fn inner_products_of_block_metric() {
        let m = MetricField::diag(4.0, 1.0, 1.0);
        let p = [0.0; 3];
        assert_eq!(MetricField::euclidean().inner(&p, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(m.inner(&p, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 4.0);
        assert_eq!(m.inner(&p, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    // [TRIVIAL]
    #[test]
    fn indefinite_metric_is_rejected() {
        let m = MetricField::general(coeffs(["1", "0", "0", "1", "0", "z"])).unwrap();
        assert!(matches!(m.metric_at(&[0.0, 0.0, -1.0]), Err(Error::NonPositiveDefinite { .. })));
    }

    // [TRIVIAL]
    #[test]
    fn flat_metrics_have_zero_curvature() {
        for m in [MetricField::euclidean(), MetricField::diag(4.0, 1.0, 2.0)] {
            let c = m.curvature_at(&[0.1, 0.2, 0.3], 1e-4).unwrap();
            assert_eq!(c.scalar, 0.0);
            assert!(c.christoffel.iter().flatten().flatten().all(|x| *x == 0.0));
        }
    }

    // [DERIVED]
    #[test]
    fn hyperbolic_metric_has_scalar_curvature_minus_six() {
        let c = hyperbolic().curvature_at(&[0.0, 0.0, 0.0], 1e-3).unwrap();
        assert!((c.scalar + 6.0).abs() < 1e-5, "{}", c.scalar);
        // Ricci = -2 g for a space form of curvature -1
        assert!((c.ricci[2][2] + 2.0).abs() < 1e-5);
        assert!((c.ricci[0][1]).abs() < 1e-8);
    }

    // [DERIVED]
    #[test]
    fn finite_difference_christoffels_converge_at_second_order() {
        // oracle for exp(2z)(dx²+dy²)+dz²: Γ^x_xz = Γ^y_yz = 1, Γ^z_xx = Γ^z_yy = -exp(2z)
        let m = hyperbolic();
        let p = [0.2, -0.1, 0.4];
        let err = |h: f64| {
            let g = m.curvature_at(&p, h).unwrap().christoffel;
            let e2 = (2.0 * p[2]).exp();
            let mut worst: f64 = 0.0;
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let exact = match (k, i.min(j), i.max(j)) {
                            (0, 0, 2) | (1, 1, 2) => 1.0,
                            (2, 0, 0) | (2, 1, 1) => -e2,
                            _ => 0.0,
                        };
                        worst = worst.max((g[k][i][j] - exact).abs());
                    }
                }
            }
            worst
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "order {order}");
    }

    // [DERIVED]
    #[test]
    fn exact_christoffels_match_oracle() {
        let g = hyperbolic().christoffel(&[0.0, 0.0, 0.5]).unwrap();
        assert!((g[0][0][2] - 1.0).abs() < 1e-14);
        assert!((g[2][1][1] + 1f64.exp()).abs() < 1e-13);
    }

    // [DERIVED]
    #[test]
    fn scaling_laws() {
        let s = MetricField::euclidean().scale_metric(4.0).unwrap();
        assert_eq!(s.inner(&[0.0; 3], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 4.0);
        let q = MetricField::diag(4.0, 1.0, 1.0).scale_metric(0.25).unwrap();
        let g = q.metric_at(&[0.0; 3]).unwrap();
        assert_eq!((g[(0, 0)], g[(1, 1)], g[(2, 2)]), (1.0, 0.25, 0.25));
        let base = hyperbolic();
        let p = [0.0, 0.0, 0.1];
        let c0 = base.curvature_at(&p, 1e-3).unwrap();
        let c1 = base.scale_metric(3.0).unwrap().curvature_at(&p, 1e-3).unwrap();
        assert!((c1.scalar - c0.scalar / 3.0).abs() < 1e-6);
        assert!((c1.christoffel[0][0][2] - c0.christoffel[0][0][2]).abs() < 1e-9);
        assert!(matches!(base.scale_metric(0.0), Err(Error::NonPositiveScale(_))));
    }

    // [DERIVED]
    #[test]
    fn upper_33_entry() {
        let b = ConstantBlock { a11: 2.0, a22: 3.0, a33: 1.5, a13: 0.3, a23: -0.2 };
        let inv = Matrix3::from(b.matrix()).try_inverse().unwrap();
        assert!((inv[(2, 2)] - b.a_upper_33()).abs() < 1e-14);
    }
}
