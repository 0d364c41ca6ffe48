//! Arithmetic expression mini-language used by scenarios for coefficient functions.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, right-associative `^`.
//! Functions: `sin cos tan exp log sqrt abs atan`. Variables: `u v x y z t`. The identifier
//! `pi` is read as the numeric constant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::real::Real;

pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    U,
    V,
    X,
    Y,
    Z,
    T,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::U, Var::V, Var::X, Var::Y, Var::Z, Var::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::U => "u",
            Var::V => "v",
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::T => "t",
        }
    }

    fn from_name(s: &str) -> Option<Var> {
        Var::ALL.iter().copied().find(|v| v.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan => "atan",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }

    fn apply<T: Real>(self, a: T) -> T {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Atan => a.atan(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable assignment for evaluation, indexed by [`Var::index`].
pub type Env<T> = [T; 6];

pub fn env<T: Real>(pairs: &[(Var, T)]) -> Env<T> {
    let mut e = [T::zero(); 6];
    for (v, x) in pairs {
        e[v.index()] = *x;
    }
    e
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn eval<T: Real>(&self, env: &Env<T>) -> T {
        match self {
            Expr::Num(x) => T::cst(*x),
            Expr::Var(v) => env[v.index()],
            Expr::Neg(a) => -a.eval(env),
            Expr::Call(f, a) => f.apply(a.eval(env)),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env);
                match op {
                    BinOp::Add => x + b.eval(env),
                    BinOp::Sub => x - b.eval(env),
                    BinOp::Mul => x * b.eval(env),
                    BinOp::Div => x / b.eval(env),
                    BinOp::Pow => match b.as_ref() {
                        Expr::Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => x.powi(*n as i32),
                        other => x.powf(other.eval(env)),
                    },
                }
            }
        }
    }

    pub fn eval_f64(&self, pairs: &[(Var, f64)]) -> f64 {
        self.eval(&env(pairs))
    }

    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Rejects expressions referencing variables outside `allowed`.
    pub fn check_vars(&self, allowed: &[Var], slot: &str) -> Result<(), Error> {
        for v in self.free_vars() {
            if !allowed.contains(&v) {
                return Err(Error::Scenario(format!(
                    "variable `{}` is not allowed in {slot}",
                    v.name()
                )));
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.free_vars().is_empty()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) {
                    write!(f, "(-{:?})", -x)
                } else {
                    write!(f, "{:?}", x)
                }
            }
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
            Expr::Bin(op, a, b) => write!(f, "({} {} {})", a, op.symbol(), b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, Error> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &lx.src[start..i];
                let x: f64 = text.parse().map_err(|_| Error::Parse {
                    offset: start,
                    expected: vec!["number".into()],
                    found: format!("`{text}`"),
                })?;
                lx.toks.push((Tok::Num(x), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else if "+-*/^".contains(c) {
                lx.toks.push((Tok::Op(c), i));
                i += 1;
            } else if c == '(' {
                lx.toks.push((Tok::LParen, i));
                i += 1;
            } else if c == ')' {
                lx.toks.push((Tok::RParen, i));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(Error::Parse {
                    offset: i,
                    expected: vec!["number".into(), "identifier".into(), "operator".into()],
                    found: format!("`{ch}`"),
                });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail(&self, expected: &[&str]) -> Error {
        Error::Parse {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            let a = self.unary()?;
            return Ok(Expr::Neg(Box::new(a)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, Error> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, Error> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(e)
                    }
                    _ => Err(self.fail(&["`)`", "operator"])),
                }
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.bump();
                    if *self.peek() != Tok::LParen {
                        return Err(self.fail(&["`(`"]));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.fail(&["`)`", "operator"]));
                    }
                    self.bump();
                    Ok(Expr::Call(f, Box::new(arg)))
                } else if let Some(v) = Var::from_name(&name) {
                    self.bump();
                    Ok(Expr::Var(v))
                } else if name == "pi" {
                    self.bump();
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    Err(self.fail(&["variable", "function", "number"]))
                }
            }
            _ => Err(self.fail(&["number", "variable", "function", "`(`", "`-`"])),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, Error> {
    if text.len() > MAX_SOURCE_BYTES {
        return Err(Error::Parse {
            offset: MAX_SOURCE_BYTES,
            expected: vec![format!("at most {MAX_SOURCE_BYTES} bytes")],
            found: format!("{} bytes", text.len()),
        });
    }
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.fail(&["operator", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // [TRIVIAL]
    #[test]
    fn sphere_coordinate_at_origin() {
        let e = parse_expression("sqrt(1 - v^2) * cos(u)").unwrap();
        assert_eq!(e.eval_f64(&[(Var::U, 0.0), (Var::V, 0.0)]), 1.0);
    }

    // [DERIVED]
    #[test]
    fn power_is_right_associative() {
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(e.eval_f64(&[]), 512.0);
    }

    // [TRIVIAL]
    #[test]
    fn unbalanced_paren_reports_offset() {
        match parse_expression("cos(u") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    // [DERIVED]
    #[test]
    fn precedence_of_unary_minus() {
        assert_eq!(parse_expression("-2^2").unwrap().eval_f64(&[]), -4.0);
        assert_eq!(parse_expression("-2*3+1").unwrap().eval_f64(&[]), -5.0);
        assert_eq!(parse_expression("2^-1").unwrap().eval_f64(&[]), 0.5);
        assert_eq!(parse_expression("8/2/2").unwrap().eval_f64(&[]), 2.0);
    }

    // [TRIVIAL]
    #[test]
    fn scientific_literals_and_pi() {
        let e = parse_expression("1.5e-3*1e3 + pi - pi").unwrap();
        assert!((e.eval_f64(&[]) - 1.5).abs() < 1e-15);
    }

    // [TRIVIAL]
    #[test]
    fn unknown_identifier_and_trailing_input() {
        assert!(matches!(parse_expression("w + 1"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_expression("1 2"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(parse_expression("1 $ 2"), Err(Error::Parse { offset: 2, .. })));
        assert!(parse_expression("").is_err());
    }

    // [TRIVIAL]
    #[test]
    fn slot_variable_restriction() {
        let e = parse_expression("x + t*z").unwrap();
        assert!(e.check_vars(&[Var::X, Var::Y, Var::Z], "metric entry").is_err());
        assert!(e.check_vars(&[Var::X, Var::Z, Var::T], "metric entry").is_ok());
    }

    // [DERIVED]
    #[test]
    fn print_parse_round_trip() {
        for src in ["sqrt(1 - v^2) * cos(u)", "-x^2^-y", "atan(z)/(1+abs(t))", "-(-(3))"] {
            let a = parse_expression(src).unwrap();
            let b = parse_expression(&a.to_string()).unwrap();
            assert_eq!(a, b, "{src}");
        }
    }
}
