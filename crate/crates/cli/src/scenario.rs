//! Scenario files: domain, metric and task in one JSON document.

use capillary_rig::domain::{Domain, Side};
use capillary_rig::expr::{parse_expression, Expr};
use capillary_rig::metric::{ConstantBlock, MetricField};
use capillary_rig::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub domain: DomainSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    pub task: TaskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Cylinder { r: f64, v_lo: f64, v_hi: f64 },
    Sphere { r: f64, v_lo: f64, v_hi: f64 },
    Ellipsoid { a: f64, b: f64, c: f64, v_lo: f64, v_hi: f64 },
    Cone { k: f64, v_hi: f64 },
    Prism { eps: f64, m: u32, v_lo: f64, v_hi: f64 },
    /// Boundary `(x(u, v), y(u, v), v)`.
    Parametric { x: String, y: String, v_lo: f64, v_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Euclidean,
    Diagonal {
        a: [f64; 3],
        #[serde(default, skip_serializing_if = "is_zero")]
        a13: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        a23: f64,
    },
    /// `diag(a) + t·h(x, y, z)`, entries ordered g11 g12 g13 g22 g23 g33.
    Perturbed { a: [f64; 3], t: f64, h: [String; 6] },
    General { g: [String; 6] },
    /// `exp(2 f) g_E`.
    Conformal { f: String },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Check {
        #[serde(default = "d_patch")]
        grid: [usize; 2],
        #[serde(default = "d_tol")]
        tol: f64,
        #[serde(default = "d_samples")]
        samples: usize,
        #[serde(default = "d_fan")]
        fan: usize,
    },
    Minimize {
        #[serde(default = "d_leaf")]
        grid: [usize; 2],
        #[serde(default)]
        side: Side,
        #[serde(default = "d_inits")]
        inits: usize,
        #[serde(default = "d_amplitude")]
        amplitude: f64,
        #[serde(default = "d_tol")]
        tol: f64,
    },
    Foliate {
        #[serde(default = "d_leaf")]
        grid: [usize; 2],
        #[serde(default)]
        side: Side,
        /// Offsets of the leaves; for a cone these are the heights `h`.
        t: Vec<f64>,
        /// Height of the flat reference leaf; the reference is minimized first when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<f64>,
        #[serde(default = "d_newton")]
        tol: f64,
    },
    Barrier {
        s: Vec<f64>,
        t: Vec<f64>,
        #[serde(default = "d_nth")]
        nth: usize,
        /// Quadratic wall `(c11, c12, c22)` in place of the top of the domain.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wall: Option<[f64; 3]>,
    },
    Verify {
        #[serde(default = "d_s")]
        s: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default = "d_t0")]
        t0: f64,
        #[serde(default = "d_levels")]
        levels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wall: Option<[f64; 3]>,
    },
    Report {
        #[serde(default = "d_patch")]
        grid: [usize; 2],
        #[serde(default = "d_curves")]
        curves: usize,
    },
}

fn d_patch() -> [usize; 2] {
    [64, 33]
}
fn d_leaf() -> [usize; 2] {
    [16, 32]
}
fn d_tol() -> f64 {
    1e-8
}
fn d_newton() -> f64 {
    1e-10
}
fn d_samples() -> usize {
    2000
}
fn d_fan() -> usize {
    16
}
fn d_inits() -> usize {
    3
}
fn d_amplitude() -> f64 {
    0.05
}
fn d_nth() -> usize {
    24
}
fn d_s() -> f64 {
    0.02
}
fn d_t0() -> f64 {
    0.02
}
fn d_levels() -> usize {
    6
}
fn d_curves() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

/// Input rejected while reading a scenario, with a 1-based source position when known.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}:{}: {}", self.line, self.column, self.message)
        }
    }
}

impl std::error::Error for ScenarioError {}

pub struct Built {
    pub domain: Domain,
    pub metric: MetricField,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let head = &src[..offset.min(src.len())];
    let line = head.matches('\n').count() + 1;
    let column = head.len() - head.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = serde_json::from_str(src)
            .map_err(|e| ScenarioError { line: e.line(), column: e.column(), message: e.to_string() })?;
        sc.build_in(Some(src))?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Expressions are reprinted in canonical form so a second round trip is the identity.
    pub fn canonical(&self) -> Result<Scenario, ScenarioError> {
        let canon = |s: &str| parse_expression(s).map(|e| e.to_string()).map_err(|e| at(None, s, e));
        let mut sc = self.clone();
        if let DomainSpec::Parametric { x, y, .. } = &mut sc.domain {
            *x = canon(x)?;
            *y = canon(y)?;
        }
        match &mut sc.metric {
            MetricSpec::Perturbed { h: list, .. } | MetricSpec::General { g: list } => {
                for e in list.iter_mut() {
                    *e = canon(e)?;
                }
            }
            MetricSpec::Conformal { f } => *f = canon(f)?,
            _ => {}
        }
        Ok(sc)
    }

    pub fn build(&self) -> Result<Built, ScenarioError> {
        self.build_in(None)
    }

    fn build_in(&self, src: Option<&str>) -> Result<Built, ScenarioError> {
        let expr = |s: &str| parse_expression(s).map_err(|e| at(src, s, e));
        let plain = |e: Error| ScenarioError { line: 0, column: 0, message: e.to_string() };
        let domain = match &self.domain {
            DomainSpec::Cylinder { r, v_lo, v_hi } => Domain::cylinder(*r, *v_lo, *v_hi),
            DomainSpec::Sphere { r, v_lo, v_hi } => Domain::sphere(*r, *v_lo, *v_hi),
            DomainSpec::Ellipsoid { a, b, c, v_lo, v_hi } => Domain::ellipsoid(*a, *b, *c, *v_lo, *v_hi),
            DomainSpec::Cone { k, v_hi } => Domain::cone(*k, *v_hi),
            DomainSpec::Prism { eps, m, v_lo, v_hi } => Domain::prism(*eps, *m, *v_lo, *v_hi),
            DomainSpec::Parametric { x, y, v_lo, v_hi } => {
                Domain::parametric(expr(x)?, expr(y)?, *v_lo, *v_hi).map_err(plain)?
            }
        };
        domain.validate().map_err(plain)?;
        let six = |list: &[String; 6]| -> Result<[Expr; 6], ScenarioError> {
            let v: Vec<Expr> = list.iter().map(|s| expr(s)).collect::<Result<_, _>>()?;
            Ok(v.try_into().expect("six entries"))
        };
        let metric = match &self.metric {
            MetricSpec::Euclidean => MetricField::euclidean(),
            MetricSpec::Diagonal { a, a13, a23 } => {
                MetricField::constant(ConstantBlock { a11: a[0], a22: a[1], a33: a[2], a13: *a13, a23: *a23 })
            }
            MetricSpec::Perturbed { a, t, h } => {
                MetricField::perturbed(ConstantBlock::diag(a[0], a[1], a[2]), *t, six(h)?).map_err(plain)?
            }
            MetricSpec::General { g } => MetricField::general(six(g)?).map_err(plain)?,
            MetricSpec::Conformal { f } => MetricField::conformal(&expr(f)?).map_err(plain)?,
        };
        if let MetricSpec::Diagonal { a, .. } | MetricSpec::Perturbed { a, .. } = &self.metric {
            if a.iter().any(|x| !(*x > 0.0)) {
                return Err(ScenarioError { line: 0, column: 0, message: "diagonal entries must be positive".into() });
            }
        }
        let (lo, hi) = domain.z_range();
        metric.metric_at(&[0.0, 0.0, 0.5 * (lo + hi)]).map_err(plain)?;
        Ok(Built { domain, metric })
    }
}

/// Locates an expression error inside the scenario source by finding the quoted expression.
fn at(src: Option<&str>, text: &str, e: Error) -> ScenarioError {
    let inner = match &e {
        Error::Parse { offset, .. } => *offset,
        _ => 0,
    };
    if let Some(src) = src {
        if let Ok(quoted) = serde_json::to_string(text) {
            if let Some(pos) = src.find(&quoted) {
                let (line, column) = line_col(src, pos + 1 + inner);
                return ScenarioError { line, column, message: e.to_string() };
            }
        }
    }
    ScenarioError { line: 0, column: 0, message: format!("in `{text}`: {e}") }
}

pub const BUILTIN: [&str; 9] = [
    "sphere",
    "cylinder",
    "ellipsoid",
    "cone",
    "prism",
    "perturbed",
    "perturbed-cylinder",
    "barrier",
    "verify",
];

/// Built-in scenario library.
pub fn builtin(name: &str) -> Option<Scenario> {
    let check = TaskSpec::Check { grid: d_patch(), tol: d_tol(), samples: d_samples(), fan: d_fan() };
    let minimize = TaskSpec::Minimize {
        grid: d_leaf(),
        side: Side::Top,
        inits: d_inits(),
        amplitude: d_amplitude(),
        tol: d_tol(),
    };
    let sc = |domain, metric, task| Scenario { name: name.to_string(), domain, metric, task, output: None };
    let t = vec![-0.2, -0.1, 0.0, 0.1, 0.2];
    Some(match name {
        "sphere" => sc(DomainSpec::Sphere { r: 1.0, v_lo: -0.8, v_hi: 0.8 }, MetricSpec::Euclidean, check),
        "cylinder" => sc(DomainSpec::Cylinder { r: 1.0, v_lo: -1.0, v_hi: 1.0 }, MetricSpec::Euclidean, minimize),
        "ellipsoid" => sc(
            DomainSpec::Ellipsoid { a: 1.2, b: 1.0, c: 0.9, v_lo: -0.6, v_hi: 0.6 },
            MetricSpec::Euclidean,
            TaskSpec::Report { grid: d_patch(), curves: d_curves() },
        ),
        "cone" => sc(
            DomainSpec::Cone { k: 1.0, v_hi: 2.0 },
            MetricSpec::Conformal { f: "0.05*(x^2 + y^2 + z^2)".into() },
            TaskSpec::Foliate {
                grid: [8, 16],
                side: Side::Bottom,
                t: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625],
                reference: None,
                tol: d_newton(),
            },
        ),
        "prism" => sc(DomainSpec::Prism { eps: 0.1, m: 3, v_lo: -1.0, v_hi: 1.0 }, MetricSpec::Euclidean, minimize),
        "perturbed" => sc(
            DomainSpec::Sphere { r: 1.0, v_lo: -0.5, v_hi: 0.5 },
            MetricSpec::Conformal { f: "0.05*(x^2 + y^2 + z^2) + 0.02*x*z".into() },
            check,
        ),
        "perturbed-cylinder" => sc(
            DomainSpec::Cylinder { r: 1.0, v_lo: -1.0, v_hi: 1.0 },
            MetricSpec::Conformal { f: "0.05*z^2 + 0.02*x*z + 0.01*y".into() },
            TaskSpec::Foliate { grid: [8, 16], side: Side::Top, t, reference: None, tol: d_newton() },
        ),
        "barrier" => sc(
            DomainSpec::Sphere { r: 1.0, v_lo: -0.8, v_hi: 0.8 },
            MetricSpec::General {
                g: ["4*exp(2*z)", "0", "0", "exp(2*z)", "0", "exp(2*z)"].map(String::from),
            },
            TaskSpec::Barrier { s: vec![0.01, 0.02], t: vec![0.0025, 0.005, 0.01], nth: 24, wall: Some([1.0, 0.5, 1.0]) },
        ),
        "verify" => sc(
            DomainSpec::Sphere { r: 1.0, v_lo: -0.8, v_hi: 0.8 },
            MetricSpec::Diagonal { a: [4.0, 1.0, 1.0], a13: 0.0, a23: 0.0 },
            TaskSpec::Verify { s: d_s(), theta: 0.3, t0: d_t0(), levels: d_levels(), wall: Some([1.0, 0.5, 1.0]) },
        ),
        _ => return None,
    })
}
