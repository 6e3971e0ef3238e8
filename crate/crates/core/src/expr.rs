//! Small closed-form expression language for coefficients and data.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | var | const | func '(' expr ')' | '(' expr ')'
//! var    := x1 | x2 | y2 | t | z1 | z2
//! const  := pi
//! func   := sin | cos | tanh | exp
//! ```
//!
//! Expressions differentiate symbolically with respect to any variable.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    X2,
    Y2,
    T,
    Z1,
    Z2,
}

impl Var {
    const COUNT: usize = 6;

    fn slot(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y2 => "y2",
            Var::T => "t",
            Var::Z1 => "z1",
            Var::Z2 => "z2",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "x1" => Var::X1,
            "x2" => Var::X2,
            "y2" => Var::Y2,
            "t" => Var::T,
            "z1" => Var::Z1,
            "z2" => Var::Z2,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for evaluation; unbound variables read as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<T> {
    values: [T; Var::COUNT],
}

impl<T: Scalar> Env<T> {
    pub fn new() -> Self {
        Self { values: [T::zero(); Var::COUNT] }
    }

    pub fn with(mut self, var: Var, value: T) -> Self {
        self.values[var.slot()] = value;
        self
    }

    pub fn set(&mut self, var: Var, value: T) {
        self.values[var.slot()] = value;
    }

    /// Binds `x1, x2, t`.
    pub fn point(x1: T, x2: T, t: T) -> Self {
        Self::new().with(Var::X1, x1).with(Var::X2, x2).with(Var::T, t)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!("unexpected trailing input in '{src}'")));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn eval<T: Scalar>(&self, env: &Env<T>) -> T {
        match self {
            Expr::Const(c) => T::lit(*c),
            Expr::Var(v) => env.values[v.slot()],
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Call(f, a) => {
                let x = a.eval(env);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tanh => x.tanh(),
                    Func::Exp => x.exp(),
                }
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// True when the expression is the literal constant zero after simplification.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, var: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(var)),
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var))),
            Div(a, b) => {
                // (a' b - a b') / b^2
                let num = sub(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var)));
                div(num, mul((**b).clone(), (**b).clone()))
            }
            Call(f, a) => {
                let inner = a.diff(var);
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Tanh => {
                        let th = Call(Func::Tanh, a.clone());
                        sub(Const(1.0), mul(th.clone(), th))
                    }
                    Func::Exp => Call(Func::Exp, a.clone()),
                };
                mul(outer, inner)
            }
        }
    }

    /// `sum_i d^2/dv_i^2` over the listed variables.
    pub fn laplacian(&self, vars: &[Var]) -> Expr {
        vars.iter().fold(Expr::Const(0.0), |acc, &v| add(acc, self.diff(v).diff(v)))
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(x), _) if *x == 0.0 => b,
        (_, Expr::Const(y)) if *y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), _) if *x == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => Expr::Const(0.0),
        (Expr::Const(x), _) if *x == 1.0 => b,
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' | '*' | '/' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '-' | '\u{2212}' => {
                out.push(Token::Op('-'));
                i += 1;
            }
            '\u{00b7}' => {
                out.push(Token::Op('*'));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let save = i;
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    if i < chars.len() && chars[i].is_ascii_digit() {
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        i = save;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| Error::Expression(format!("bad number '{s}'")))?;
                out.push(Token::Num(v));
            }
            _ if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(Error::Expression(format!("unexpected character '{c}' in '{src}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { Expr::Add(Box::new(lhs), Box::new(rhs)) } else { Expr::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { Expr::Mul(Box::new(lhs), Box::new(rhs)) } else { Expr::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(Token::Ident(name)) => {
                if let Some(v) = Var::parse(&name) {
                    return Ok(Expr::Var(v));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tanh" => Func::Tanh,
                    "exp" => Func::Exp,
                    _ => return Err(Error::Expression(format!("unknown identifier '{name}'"))),
                };
                match self.next() {
                    Some(Token::LParen) => {}
                    _ => return Err(Error::Expression(format!("expected '(' after {name}"))),
                }
                let arg = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(Expr::Call(func, Box::new(arg))),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ev(src: &str, env: Env<f64>) -> f64 {
        Expr::parse(src).unwrap().eval(&env)
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Env::new().with(Var::X1, 2.0).with(Var::T, 3.0);
        assert_eq!(ev("1 + 2 * 3", e), 7.0);
        assert_eq!(ev("-x1 * t", e), -6.0);
        assert_eq!(ev("(1 + 2) * 3 / 9", e), 1.0);
        assert_eq!(ev("2 - 3 - 4", e), -5.0);
        assert_eq!(ev("x1 · t", e), 6.0);
        assert_relative_eq!(ev("1.5e-1 + 2E1", e), 20.15);
        assert_relative_eq!(ev("sin(pi / 2) + cos(0) + exp(0) + tanh(0)", e), 3.0);
    }

    #[test]
    fn parse_errors() {
        for bad in ["1 +", "foo(1)", "sin 1", "(1 + 2", "1 2", "x3", "#"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let srcs = [
            "z2 + tanh(z1)",
            "sin(x1 * t) / (2 + cos(x2))",
            "exp(-x1 * x1) * z1 * z2 - 3 * z2",
            "0.5 * (1 + 0.2 * x1) * (1 + 0.2 * x1)",
        ];
        let base = Env::new()
            .with(Var::X1, 1.3)
            .with(Var::X2, -0.4)
            .with(Var::T, 0.7)
            .with(Var::Z1, 0.2)
            .with(Var::Z2, 1.1);
        for src in srcs {
            let e = Expr::parse(src).unwrap();
            for var in [Var::X1, Var::X2, Var::T, Var::Z1, Var::Z2] {
                let h = 1e-6;
                let mut p = base;
                let mut m = base;
                p.set(var, base.values[var.slot()] + h);
                m.set(var, base.values[var.slot()] - h);
                let fd = (e.eval(&p) - e.eval(&m)) / (2.0 * h);
                assert_relative_eq!(e.diff(var).eval(&base), fd, epsilon = 1e-8, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn simplification_detects_independence() {
        let e = Expr::parse("z2 + 3 * x1").unwrap();
        assert!(e.diff(Var::Z1).is_zero());
        assert!(!e.depends_on(Var::Z1));
        assert_eq!(e.diff(Var::Z2).eval(&Env::<f64>::new()), 1.0);
    }
}
