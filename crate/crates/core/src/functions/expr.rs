//! Expression trees over `x1..xn` and index parameters `t1..tk`.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! `x` aliases `x1` and `t` aliases `t1`. `max(a, b, ...)` takes smooth
//! arguments; `abs(e)` is sugar for `max(e, -e)`. Any other call name is
//! looked up in the atom registry.

use std::fmt;
use std::sync::Arc;

use super::atoms::{Atom, CustomAtomRegistry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Max(Vec<Expr>),
    Atom(Arc<Atom>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn param(j: usize) -> Expr {
        Expr::Param(j)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    /// True if the subtree contains a Max node or an atom.
    pub fn is_nonsmooth(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => false,
            Expr::Max(_) | Expr::Atom(..) => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_nonsmooth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_nonsmooth() || b.is_nonsmooth()
            }
        }
    }

    /// True if the subtree does not reference any `x` variable.
    pub fn is_x_free(&self) -> bool {
        match self {
            Expr::Var(_) => false,
            Expr::Const(_) | Expr::Param(_) => true,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Atom(_, a) => a.is_x_free(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_x_free() && b.is_x_free()
            }
            Expr::Max(xs) => xs.iter().all(Expr::is_x_free),
        }
    }

    fn max_index(&self, var: bool) -> Option<usize> {
        let own = match (self, var) {
            (Expr::Var(i), true) | (Expr::Param(i), false) => Some(*i),
            _ => None,
        };
        let kids = match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => None,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Atom(_, a) => a.max_index(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_index(var).max(b.max_index(var))
            }
            Expr::Max(xs) => xs.iter().filter_map(|e| e.max_index(var)).max(),
        };
        own.max(kids)
    }

    /// Number of index parameters referenced (highest `tj` seen).
    pub fn param_count(&self) -> usize {
        self.max_index(false).map_or(0, |j| j + 1)
    }

    pub fn var_count(&self) -> usize {
        self.max_index(true).map_or(0, |i| i + 1)
    }

    /// Enforces the composition rules: Max and atoms may only be combined
    /// linearly with coefficients that do not depend on `x`.
    pub fn validate(&self) -> Result<()> {
        let reject = |e: &Expr, reason: &str| -> Result<()> {
            Err(Error::Unsupported {
                expr: e.to_string(),
                reason: reason.into(),
            })
        };
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => Ok(()),
            Expr::Neg(a) => a.validate(),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.validate()?;
                b.validate()
            }
            Expr::Mul(a, b) => {
                a.validate()?;
                b.validate()?;
                let bad = (a.is_nonsmooth() && !(b.is_x_free() && !b.is_nonsmooth()))
                    || (b.is_nonsmooth() && !(a.is_x_free() && !a.is_nonsmooth()));
                if bad {
                    return reject(self, "a nonsmooth factor may only be scaled by an x-free smooth factor");
                }
                Ok(())
            }
            Expr::Div(a, b) => {
                a.validate()?;
                b.validate()?;
                if b.is_nonsmooth() {
                    return reject(self, "max or atom in a denominator");
                }
                if a.is_nonsmooth() && !b.is_x_free() {
                    return reject(self, "a nonsmooth numerator needs an x-free denominator");
                }
                Ok(())
            }
            Expr::Pow(a, b) => {
                if a.is_nonsmooth() || b.is_nonsmooth() {
                    return reject(self, "max or atom under a power");
                }
                a.validate()?;
                b.validate()
            }
            Expr::Call(_, a) => {
                if a.is_nonsmooth() {
                    return reject(self, "max or atom inside a smooth primitive");
                }
                a.validate()
            }
            Expr::Max(xs) => {
                if xs.len() < 2 {
                    return reject(self, "max needs at least two arguments");
                }
                for x in xs {
                    if x.is_nonsmooth() {
                        return reject(self, "max arguments must be smooth");
                    }
                    x.validate()?;
                }
                Ok(())
            }
            Expr::Atom(_, a) => {
                if a.is_nonsmooth() {
                    return reject(self, "atom arguments must be smooth");
                }
                a.validate()
            }
        }
    }

    /// Exact value at `(x, t)`.
    pub fn eval(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Param(j) => t[*j],
            Expr::Neg(a) => -a.eval(x, t)?,
            Expr::Add(a, b) => a.eval(x, t)? + b.eval(x, t)?,
            Expr::Sub(a, b) => a.eval(x, t)? - b.eval(x, t)?,
            Expr::Mul(a, b) => a.eval(x, t)? * b.eval(x, t)?,
            Expr::Div(a, b) => {
                let den = b.eval(x, t)?;
                if den == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                a.eval(x, t)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval(x, t)?;
                let exp = b.eval(x, t)?;
                pow_value(base, exp).ok_or_else(|| self.domain("power of a nonpositive base"))?
            }
            Expr::Call(f, a) => {
                let y = a.eval(x, t)?;
                apply(*f, y).ok_or_else(|| self.domain("argument outside the domain"))?
            }
            Expr::Max(xs) => {
                let mut m = f64::NEG_INFINITY;
                for e in xs {
                    m = m.max(e.eval(x, t)?);
                }
                m
            }
            Expr::Atom(atom, a) => atom.value(a.eval(x, t)?),
        })
    }

    /// Value and gradient in `x` by forward accumulation. Max nodes
    /// differentiate their first maximizing piece; atoms use their
    /// derivative map.
    pub fn eval_grad(&self, x: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = x.len();
        Ok(match self {
            Expr::Const(c) => (*c, vec![0.0; n]),
            Expr::Var(i) => {
                let mut g = vec![0.0; n];
                g[*i] = 1.0;
                (x[*i], g)
            }
            Expr::Param(j) => (t[*j], vec![0.0; n]),
            Expr::Neg(a) => {
                let (v, g) = a.eval_grad(x, t)?;
                (-v, g.into_iter().map(|d| -d).collect())
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let sign = if matches!(self, Expr::Add(..)) { 1.0 } else { -1.0 };
                let (va, ga) = a.eval_grad(x, t)?;
                let (vb, gb) = b.eval_grad(x, t)?;
                (va + sign * vb, zip_with(&ga, &gb, |p, q| p + sign * q))
            }
            Expr::Mul(a, b) => {
                let (va, ga) = a.eval_grad(x, t)?;
                let (vb, gb) = b.eval_grad(x, t)?;
                (va * vb, zip_with(&ga, &gb, |p, q| p * vb + va * q))
            }
            Expr::Div(a, b) => {
                let (va, ga) = a.eval_grad(x, t)?;
                let (vb, gb) = b.eval_grad(x, t)?;
                if vb == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                (va / vb, zip_with(&ga, &gb, |p, q| (p * vb - va * q) / (vb * vb)))
            }
            Expr::Pow(a, b) => {
                let (va, ga) = a.eval_grad(x, t)?;
                let (vb, gb) = b.eval_grad(x, t)?;
                let v = pow_value(va, vb).ok_or_else(|| self.domain("power of a nonpositive base"))?;
                let exp_const = gb.iter().all(|&d| d == 0.0);
                let g = if exp_const {
                    let dv = if vb == 0.0 { 0.0 } else { vb * pow_value(va, vb - 1.0).unwrap_or(0.0) };
                    ga.iter().map(|&p| dv * p).collect()
                } else {
                    if va <= 0.0 {
                        return Err(self.domain("variable exponent needs a positive base"));
                    }
                    let ln = va.ln();
                    zip_with(&ga, &gb, |p, q| v * (q * ln + vb * p / va))
                };
                (v, g)
            }
            Expr::Call(f, a) => {
                let (y, g) = a.eval_grad(x, t)?;
                let v = apply(*f, y).ok_or_else(|| self.domain("argument outside the domain"))?;
                let d = match f {
                    Func::Sin => y.cos(),
                    Func::Cos => -y.sin(),
                    Func::Exp => v,
                    Func::Log => 1.0 / y,
                    Func::Sqrt => {
                        if v == 0.0 {
                            return Err(self.domain("sqrt is not differentiable at 0"));
                        }
                        0.5 / v
                    }
                };
                (v, g.into_iter().map(|p| d * p).collect())
            }
            Expr::Max(xs) => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for e in xs {
                    let (v, g) = e.eval_grad(x, t)?;
                    if best.as_ref().is_none_or(|(m, _)| v > *m) {
                        best = Some((v, g));
                    }
                }
                best.expect("validated max has children")
            }
            Expr::Atom(atom, a) => {
                let (y, g) = a.eval_grad(x, t)?;
                let d = atom.derivative(y);
                (atom.value(y), g.into_iter().map(|p| d * p).collect())
            }
        })
    }

    fn domain(&self, message: &str) -> Error {
        Error::Domain {
            node: self.to_string(),
            message: message.into(),
        }
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
}

fn pow_value(base: f64, exp: f64) -> Option<f64> {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        if base == 0.0 && exp < 0.0 {
            return None;
        }
        return Some(base.powi(exp as i32));
    }
    if base < 0.0 || (base == 0.0 && exp <= 0.0) {
        return None;
    }
    Some(base.powf(exp))
}

fn apply(f: Func, y: f64) -> Option<f64> {
    match f {
        Func::Sin => Some(y.sin()),
        Func::Cos => Some(y.cos()),
        Func::Exp => Some(y.exp()),
        Func::Log => (y > 0.0).then(|| y.ln()),
        Func::Sqrt => (y >= 0.0).then(|| y.sqrt()),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(j) => write!(f, "t{}", j + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Max(xs) => {
                write!(f, "max(")?;
                for (k, e) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            Expr::Atom(atom, a) => write!(f, "{}({a})", atom.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
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
            let text = &src[start..i];
            let v = text.parse().map_err(|_| Error::Parse {
                column: start + 1,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse {
                column: i + 1,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    n_vars: usize,
    registry: &'a CustomAtomRegistry,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len + 1, |(c, _)| c + 1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            column: self.column(),
            message: message.into(),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        let mut out = vec![self.expr()?];
        while self.eat(',') {
            out.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn primary(&mut self) -> Result<Expr> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.err("unexpected end of expression"),
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.eat('(') {
                    return self.call(&name);
                }
                self.symbol(&name)
            }
            Tok::Sym(c) => self.err(format!("unexpected `{c}`")),
        }
    }

    fn call(&mut self, name: &str) -> Result<Expr> {
        let column = self.column();
        let mut args = self.args()?;
        let one = |args: &mut Vec<Expr>| -> Result<Expr> {
            if args.len() != 1 {
                return Err(Error::Parse {
                    column,
                    message: format!("`{name}` takes one argument"),
                });
            }
            Ok(args.pop().expect("one argument"))
        };
        if name == "max" {
            return Ok(Expr::Max(args));
        }
        if name == "abs" {
            let a = one(&mut args)?;
            return Ok(Expr::Max(vec![a.clone(), Expr::Neg(Box::new(a))]));
        }
        if let Some(f) = Func::lookup(name) {
            return Ok(Expr::Call(f, Box::new(one(&mut args)?)));
        }
        if let Some(atom) = self.registry.get(name) {
            return Ok(Expr::Atom(atom, Box::new(one(&mut args)?)));
        }
        Err(Error::Parse {
            column,
            message: format!("unknown function `{name}`"),
        })
    }

    fn symbol(&mut self, name: &str) -> Result<Expr> {
        let indexed = |prefix: char| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() {
                return Some(0);
            }
            let k: usize = rest.parse().ok()?;
            (k >= 1).then(|| k - 1)
        };
        match name {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "e" => return Ok(Expr::Const(std::f64::consts::E)),
            _ => {}
        }
        if let Some(i) = indexed('x') {
            if i >= self.n_vars {
                self.pos -= 1;
                return self.err(format!("`{name}` exceeds dimension n = {}", self.n_vars));
            }
            return Ok(Expr::Var(i));
        }
        if let Some(j) = indexed('t') {
            return Ok(Expr::Param(j));
        }
        self.pos -= 1;
        self.err(format!("unknown symbol `{name}`"))
    }
}

/// Parses and validates an expression in `n_vars` variables.
pub fn parse(src: &str, n_vars: usize, registry: &CustomAtomRegistry) -> Result<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        len: src.len(),
        n_vars,
        registry,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    e.validate()?;
    Ok(e)
}
