//! Scalar expressions over named coordinates.
//!
//! An [`Expr`] is an immutable tree over constants, indexed variables, the
//! four arithmetic operations, integer powers and `sin`/`cos`/`exp`/`log`.
//! Variables are stored by position; the names live with whoever owns the
//! expression (a form knows its chart coordinates `x1..xd`, a membrane its
//! cube coordinates `t1..tn`).
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := atom ('^' exponent)*
//! atom    := number | name | name '(' sum ')' | '(' sum ')'
//! exponent:= ['-'] integer | '(' ['-'] integer ')'
//! ```

use std::fmt;
use std::ops;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at byte {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Log if x > 0.0 => Ok(x.ln()),
            Func::Log => Err(ExprError::Domain(format!("log of non-positive value {x}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Default for Expr {
    fn default() -> Self {
        Expr::Const(0.0)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

impl Expr {
    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    pub fn one() -> Self {
        Expr::Const(1.0)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Number of variable slots the expression needs (largest index + 1).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => match b {
                Expr::Neg(nb) => Expr::Sub(Box::new(a), nb),
                b => Expr::Add(Box::new(a), Box::new(b)),
            },
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        match (n, a.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => a,
            (_, Some(c)) if n > 0 || c != 0.0 => Expr::Const(c.powi(n)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = f.apply(c) {
                return Expr::Const(v);
            }
        }
        Expr::Call(f, Box::new(a))
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *point.get(*i).ok_or(ExprError::Arity {
                expected: i + 1,
                got: point.len(),
            })?,
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Expr::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Expr::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Expr::Div(a, b) => {
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                a.eval(point)? / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval(point)?;
                if *n < 0 && base == 0.0 {
                    return Err(ExprError::Domain("zero raised to a negative power".into()));
                }
                base.powi(*n)
            }
            Expr::Call(f, a) => f.apply(a.eval(point)?)?,
        })
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.derivative(var)),
            Expr::Add(a, b) => Expr::add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(var), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                if db.is_zero() {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(
                            Expr::mul(da, (**b).clone()),
                            Expr::mul((**a).clone(), db),
                        ),
                        Expr::pow((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Const(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.derivative(var),
            ),
            Expr::Call(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, (**a).clone()),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, (**a).clone())),
                    Func::Exp => Expr::call(Func::Exp, (**a).clone()),
                    Func::Log => return Expr::div(inner, (**a).clone()),
                };
                Expr::mul(outer, inner)
            }
        }
    }

    /// Replaces every `Var(i)` by `subs[i]`, re-simplifying on the way up.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => subs[*i].clone(),
            Expr::Neg(a) => Expr::neg(a.substitute(subs)),
            Expr::Add(a, b) => Expr::add(a.substitute(subs), b.substitute(subs)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(subs), b.substitute(subs)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(subs), b.substitute(subs)),
            Expr::Div(a, b) => Expr::div(a.substitute(subs), b.substitute(subs)),
            Expr::Pow(a, n) => Expr::pow(a.substitute(subs), *n),
            Expr::Call(f, a) => Expr::call(*f, a.substitute(subs)),
        }
    }

    /// Renumbers variables: `Var(i)` becomes `Var(map[i])`.
    pub fn remap(&self, map: &[usize]) -> Expr {
        let subs: Vec<Expr> = map.iter().map(|&j| Expr::Var(j)).collect();
        self.substitute(&subs)
    }

    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> Display<'a, S> {
        Display { expr: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

/// Infix printer; output parses back to an equivalent tree.
pub struct Display<'a, S> {
    expr: &'a Expr,
    names: &'a [S],
}

impl<S: AsRef<str>> Display<'_, S> {
    fn write(&self, f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
        let paren = e.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match e {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::Var(i) => match self.names.get(*i) {
                Some(n) => f.write_str(n.as_ref())?,
                None => write!(f, "_{i}")?,
            },
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.write(f, a, 3)?;
            }
            Expr::Add(a, b) => {
                self.write(f, a, 1)?;
                f.write_str(" + ")?;
                self.write(f, b, 2)?;
            }
            Expr::Sub(a, b) => {
                self.write(f, a, 1)?;
                f.write_str(" - ")?;
                self.write(f, b, 2)?;
            }
            Expr::Mul(a, b) => {
                self.write(f, a, 2)?;
                f.write_str("*")?;
                self.write(f, b, 3)?;
            }
            Expr::Div(a, b) => {
                self.write(f, a, 2)?;
                f.write_str("/")?;
                self.write(f, b, 3)?;
            }
            Expr::Pow(a, n) => {
                self.write(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")?;
                } else {
                    write!(f, "^{n}")?;
                }
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.write(f, a, 0)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl<S: AsRef<str>> fmt::Display for Display<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.expr, 0)
    }
}

/// Parses `source` with the given ordered variable names.
pub fn parse<S: AsRef<str>>(source: &str, variables: &[S]) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: source,
        pos: 0,
        vars: variables,
    };
    p.skip_ws();
    if p.pos == source.len() {
        return Err(p.error("empty expression"));
    }
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != source.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Coordinate names `prefix1..prefixN`.
pub fn coordinate_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

struct Parser<'a, S> {
    src: &'a str,
    pos: usize,
    vars: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.product()?;
        loop {
            if self.eat('+') {
                acc = Expr::Add(Box::new(acc), Box::new(self.product()?));
            } else if self.eat('-') {
                acc = Expr::Sub(Box::new(acc), Box::new(self.product()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
            } else if self.eat('/') {
                acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.atom()?;
        while self.eat('^') {
            let n = self.exponent()?;
            base = Expr::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let wrapped = self.eat('(');
        let negative = self.eat('-');
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer exponent"));
        }
        if matches!(self.peek(), Some('.') | Some('e') | Some('E')) {
            return Err(self.error("only integer exponents are supported"));
        }
        let mut n: i32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: "exponent out of range".into(),
            })?;
        if negative {
            n = -n;
        }
        if wrapped && !self.eat(')') {
            return Err(self.error("expected `)` after exponent"));
        }
        Ok(n)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if self.eat('(') {
                    let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                        name: name.to_string(),
                        offset: start,
                    })?;
                    let arg = self.sum()?;
                    if !self.eat(')') {
                        return Err(self.error("expected `)` after function argument"));
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.vars
                    .iter()
                    .position(|v| v.as_ref() == name)
                    .map(Expr::Var)
                    .ok_or_else(|| ExprError::UndeclaredVariable {
                        name: name.to_string(),
                        offset: start,
                    })
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some('.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_product_with_call() {
        let e = parse("x1*sin(x2)", &vars(&["x1", "x2"])).unwrap();
        assert_eq!(
            e,
            Expr::Mul(
                Box::new(Expr::Var(0)),
                Box::new(Expr::Call(Func::Sin, Box::new(Expr::Var(1))))
            )
        );
    }

    #[test]
    fn parses_power() {
        assert_eq!(
            parse("t^2", &["t"]).unwrap(),
            Expr::Pow(Box::new(Expr::Var(0)), 2)
        );
    }

    #[test]
    fn rejects_undeclared_variable() {
        let err = parse("x3", &["x1", "x2"]).unwrap_err();
        assert_eq!(
            err,
            ExprError::UndeclaredVariable {
                name: "x3".into(),
                offset: 0
            }
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x1 + * x2", &["x1", "x2"]) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("", &["x"]), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x^0.5", &["x"]), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            parse("tan(x)", &["x"]),
            Err(ExprError::UnknownFunction { .. })
        ));
    }

    #[test]
    fn precedence() {
        let v = ["x", "y"];
        let at = |s: &str, p: &[f64]| parse(s, &v).unwrap().eval(p).unwrap();
        assert_eq!(at("-x^2", &[3.0, 0.0]), -9.0);
        assert_eq!(at("1 - 2 - 3", &[0.0, 0.0]), -4.0);
        assert_eq!(at("8/2/2", &[0.0, 0.0]), 2.0);
        assert_eq!(at("2*x^3", &[2.0, 0.0]), 16.0);
        assert_eq!(at("x^(-1)", &[4.0, 0.0]), 0.25);
        assert_eq!(at("x^-2", &[2.0, 0.0]), 0.25);
        assert_eq!(at("1e-1 + y", &[0.0, 1.0]), 1.1);
    }

    #[test]
    fn evaluates() {
        let v = ["x1", "x2"];
        assert_eq!(parse("x1*sin(x2)", &v).unwrap().eval(&[2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(parse("t^2", &["t"]).unwrap().eval(&[0.5]).unwrap(), 0.25);
        assert!(matches!(
            parse("1/x1", &v).unwrap().eval(&[0.0, 1.0]),
            Err(ExprError::Domain(_))
        ));
        assert!(matches!(
            parse("log(x1)", &v).unwrap().eval(&[-1.0, 1.0]),
            Err(ExprError::Domain(_))
        ));
    }

    #[test]
    fn differentiates() {
        let v = ["x1", "x2"];
        let e = parse("x1*sin(x2)", &v).unwrap();
        assert_eq!(
            e.derivative(1).display(&v).to_string(),
            "x1*cos(x2)"
        );
        let t = parse("t^2", &["t"]).unwrap();
        assert_eq!(t.derivative(0).display(&["t"]).to_string(), "2*t");
        let c = parse("x2", &v).unwrap();
        assert_eq!(c.derivative(0), Expr::zero());
    }

    #[test]
    fn prints_and_reparses() {
        let v = ["x", "y"];
        for src in [
            "-(x - y)*(x + y)^3",
            "x/(y*(x - 2))",
            "exp(-x)*cos(y^2) - log(1 + x^2)",
            "-(-x)",
            "x - (y - 1)",
            "x^(-2)",
        ] {
            let e = parse(src, &v).unwrap();
            let printed = e.display(&v).to_string();
            let again = parse(&printed, &v).unwrap();
            let p = [0.7, -1.3];
            assert_eq!(e.eval(&p).unwrap(), again.eval(&p).unwrap(), "{src} -> {printed}");
        }
    }

    #[test]
    fn substitution_composes() {
        let e = parse("x1*x2 + sin(x1)", &["x1", "x2"]).unwrap();
        let subs = [
            parse("t^2", &["t"]).unwrap(),
            parse("1 - t", &["t"]).unwrap(),
        ];
        let c = e.substitute(&subs);
        let t: f64 = 0.3;
        let expected = t * t * (1.0 - t) + (t * t).sin();
        assert!((c.eval(&[t]).unwrap() - expected).abs() < 1e-15);
    }
}
