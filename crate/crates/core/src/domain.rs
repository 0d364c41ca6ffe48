//! Model domains in R³ described by a polar chart `P(ρ, θ, z)` over the unit disk.
//!
//! Horizontal slices `z = const` map to horizontal slices, so flat leaves have constant chart
//! height. The boundary is `B(θ, v) = P(1, θ, v)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::real::{Dual, Real, V3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Cylinder { r: f64 },
    Sphere { r: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Cone of slope `k` with its vertex at the origin: radius `k·z`.
    Cone { k: f64 },
    /// Vertical prism over the image of the unit circle under `ζ ↦ ζ + ε ζ^m`.
    Prism { eps: f64, m: u32 },
    /// Star-shaped slices with boundary `(x(u, v), y(u, v), v)`.
    Parametric { x: Expr, y: Expr },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cap {
    /// Flat lid closing the slab.
    Lid,
    /// Smooth cap reaching a pole at height `z`.
    Pole { z: f64 },
    /// Conical vertex at height `z`.
    Vertex { z: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Ω contains the top cap.
    #[default]
    Top,
    /// Ω contains the bottom cap.
    Bottom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: Shape,
    /// Slab `[v_lo, v_hi]` in which leaves may live.
    pub v_lo: f64,
    pub v_hi: f64,
    pub top: Cap,
    pub bottom: Cap,
}

/// Second-order jet of the boundary parametrization at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryJet {
    pub u: f64,
    pub v: f64,
    pub p: [f64; 3],
    pub pu: [f64; 3],
    pub pv: [f64; 3],
    pub puu: [f64; 3],
    pub puv: [f64; 3],
    pub pvv: [f64; 3],
}

pub type D2 = Dual<Dual<f64, 2>, 2>;

/// Seeds a hyper-dual variable for second derivatives in two unknowns.
pub fn seed2(x: f64, i: usize) -> D2 {
    let mut d = [Dual::constant(0.0); 2];
    d[i] = Dual::constant(1.0);
    Dual { v: Dual::var(x, i), d }
}

impl Domain {
    pub fn cylinder(r: f64, v_lo: f64, v_hi: f64) -> Self {
        Domain { shape: Shape::Cylinder { r }, v_lo, v_hi, top: Cap::Lid, bottom: Cap::Lid }
    }

    pub fn sphere(r: f64, v_lo: f64, v_hi: f64) -> Self {
        Domain {
            shape: Shape::Sphere { r },
            v_lo,
            v_hi,
            top: Cap::Pole { z: r },
            bottom: Cap::Pole { z: -r },
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64, v_lo: f64, v_hi: f64) -> Self {
        Domain {
            shape: Shape::Ellipsoid { a, b, c },
            v_lo,
            v_hi,
            top: Cap::Pole { z: c },
            bottom: Cap::Pole { z: -c },
        }
    }

    pub fn cone(k: f64, v_hi: f64) -> Self {
        Domain { shape: Shape::Cone { k }, v_lo: 0.0, v_hi, top: Cap::Lid, bottom: Cap::Vertex { z: 0.0 } }
    }

    pub fn prism(eps: f64, m: u32, v_lo: f64, v_hi: f64) -> Self {
        Domain { shape: Shape::Prism { eps, m }, v_lo, v_hi, top: Cap::Lid, bottom: Cap::Lid }
    }

    pub fn parametric(x: Expr, y: Expr, v_lo: f64, v_hi: f64) -> Result<Self> {
        x.check_vars(&[Var::U, Var::V], "boundary x")?;
        y.check_vars(&[Var::U, Var::V], "boundary y")?;
        let d = Domain { shape: Shape::Parametric { x, y }, v_lo, v_hi, top: Cap::Lid, bottom: Cap::Lid };
        d.validate()?;
        Ok(d)
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::Cylinder { .. } => "cylinder",
            Shape::Sphere { .. } => "sphere",
            Shape::Ellipsoid { .. } => "ellipsoid",
            Shape::Cone { .. } => "cone",
            Shape::Prism { .. } => "prism",
            Shape::Parametric { .. } => "parametric",
        }
    }

    /// Rejects slabs outside the chart and slices that are not simple star-shaped curves.
    pub fn validate(&self) -> Result<()> {
        if !(self.v_lo < self.v_hi) {
            return Err(Error::Scenario(format!("empty slab [{}, {}]", self.v_lo, self.v_hi)));
        }
        let inside = |z: f64| match &self.shape {
            Shape::Sphere { r } => z.abs() < *r,
            Shape::Ellipsoid { c, .. } => z.abs() < *c,
            Shape::Cone { k } => z * k >= 0.0,
            _ => true,
        };
        if !inside(self.v_lo) || !inside(self.v_hi) {
            return Err(Error::Scenario("slab leaves the domain chart".into()));
        }
        if let Shape::Parametric { .. } = self.shape {
            for j in 0..=16 {
                let v = self.v_lo + (self.v_hi - self.v_lo) * j as f64 / 16.0;
                let n = 720;
                let mut last: Option<f64> = None;
                let mut total = 0.0;
                for i in 0..=n {
                    let th = 2.0 * PI * i as f64 / n as f64;
                    let p: [f64; 3] = self.chart(1.0, th, v);
                    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    if !(r > 1e-10) || !r.is_finite() {
                        return Err(Error::DegenerateLevelCurve { v, length: 0.0 });
                    }
                    let ang = p[1].atan2(p[0]);
                    if let Some(a) = last {
                        let mut d = ang - a;
                        while d > PI {
                            d -= 2.0 * PI;
                        }
                        while d < -PI {
                            d += 2.0 * PI;
                        }
                        if d <= 0.0 {
                            return Err(Error::Scenario(format!(
                                "slice at z = {v} is not star-shaped about the axis"
                            )));
                        }
                        total += d;
                    }
                    last = Some(ang);
                }
                if (total - 2.0 * PI).abs() > 1e-6 {
                    return Err(Error::Scenario(format!("slice at z = {v} does not close up once")));
                }
            }
        }
        Ok(())
    }

    /// Chart point for polar coordinates `(ρ, θ)` of the unit disk at height `z`.
    pub fn chart<T: Real>(&self, rho: T, th: T, z: T) -> V3<T> {
        match &self.shape {
            Shape::Cylinder { r } => [rho * th.cos() * *r, rho * th.sin() * *r, z],
            Shape::Sphere { r } => {
                let s = (T::cst(r * r) - z * z).sqrt();
                [s * rho * th.cos(), s * rho * th.sin(), z]
            }
            Shape::Ellipsoid { a, b, c } => {
                let q = (T::one() - z * z / (c * c)).sqrt();
                [q * rho * th.cos() * *a, q * rho * th.sin() * *b, z]
            }
            Shape::Cone { k } => [z * rho * th.cos() * *k, z * rho * th.sin() * *k, z],
            Shape::Prism { eps, m } => {
                let mf = *m as f64;
                let rm = rho.powi(*m as i32);
                let ang = th * mf;
                [
                    rho * th.cos() + rm * ang.cos() * *eps,
                    rho * th.sin() + rm * ang.sin() * *eps,
                    z,
                ]
            }
            Shape::Parametric { x, y } => {
                let env = [th, z, T::zero(), T::zero(), T::zero(), T::zero()];
                [rho * x.eval(&env), rho * y.eval(&env), z]
            }
        }
    }

    pub fn boundary<T: Real>(&self, th: T, v: T) -> V3<T> {
        self.chart(T::one(), th, v)
    }

    /// Analytic jet of `B(θ, v)` (first and second derivatives).
    pub fn jet(&self, th: f64, v: f64) -> BoundaryJet {
        let p = self.boundary(seed2(th, 0), seed2(v, 1));
        let get = |f: &dyn Fn(&D2) -> f64| [f(&p[0]), f(&p[1]), f(&p[2])];
        BoundaryJet {
            u: th,
            v,
            p: get(&|x| x.v.v),
            pu: get(&|x| x.v.d[0]),
            pv: get(&|x| x.v.d[1]),
            puu: get(&|x| x.d[0].d[0]),
            puv: get(&|x| x.d[0].d[1]),
            pvv: get(&|x| x.d[1].d[1]),
        }
    }

    /// Cap closing the side that Ω contains.
    pub fn cap(&self, side: Side) -> Cap {
        match side {
            Side::Top => self.top,
            Side::Bottom => self.bottom,
        }
    }

    /// Slab edge adjacent to the cap of `side`.
    pub fn slab_edge(&self, side: Side) -> f64 {
        match side {
            Side::Top => self.v_hi,
            Side::Bottom => self.v_lo,
        }
    }

    pub fn mid_height(&self) -> f64 {
        0.5 * (self.v_lo + self.v_hi)
    }

    /// Outward Euclidean unit normal at a boundary point.
    pub fn outward_normal(&self, th: f64, v: f64) -> [f64; 3] {
        let j = self.jet(th, v);
        let n = crate::real::cross3(&j.pu, &j.pv);
        let a = crate::real::dot3(&n, &n).sqrt();
        [n[0] / a, n[1] / a, n[2] / a]
    }

    /// Highest and lowest z of the closed domain.
    pub fn z_range(&self) -> (f64, f64) {
        let end = |c: Cap, edge: f64| match c {
            Cap::Lid => edge,
            Cap::Pole { z } | Cap::Vertex { z } => z,
        };
        (end(self.bottom, self.v_lo), end(self.top, self.v_hi))
    }

    pub fn contains_height(&self, z: f64) -> bool {
        z >= self.v_lo && z <= self.v_hi
    }
}
