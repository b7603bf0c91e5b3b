//! Expression trees over the coordinates `x`, `y` and a small infix parser.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' ['-'] integer)?
//! primary := number | 'x' | 'y' | 'u' | 'v' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := exp | sin | cos | sinh | cosh
//! ```
//!
//! `u` and `v` are accepted as aliases of `x` and `y` for immersion files.

use std::fmt;

use super::grid::{Axis, Grid};
use super::jet::Jet;
use super::field::ScalarField;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sinh,
    Cosh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Axis),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        Parser::new(src, 1).parse_all()
    }

    /// Parses with error locations reported against `line`.
    pub fn parse_at_line(src: &str, line: usize) -> Result<Expr> {
        Parser::new(src, line).parse_all()
    }

    pub fn constant(c: f64) -> Expr {
        Const(c)
    }

    pub fn x() -> Expr {
        Var(Axis::X)
    }

    pub fn y() -> Expr {
        Var(Axis::Y)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Const(c) => *c,
            Var(Axis::X) => x,
            Var(Axis::Y) => y,
            Neg(a) => -a.eval(x, y),
            Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Pow(a, n) => a.eval(x, y).powi(*n),
            Call(f, a) => {
                let v = a.eval(x, y);
                match f {
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sinh => v.sinh(),
                    Func::Cosh => v.cosh(),
                }
            }
        }
    }

    /// Evaluates on coordinate jets, giving all derivatives up to the jet order.
    pub fn eval_jet(&self, x: &Jet<f64>, y: &Jet<f64>) -> Jet<f64> {
        let order = x.order().min(y.order());
        match self {
            Const(c) => Jet::constant(*c, order),
            Var(Axis::X) => *x,
            Var(Axis::Y) => *y,
            Neg(a) => -a.eval_jet(x, y),
            Add(a, b) => a.eval_jet(x, y) + b.eval_jet(x, y),
            Sub(a, b) => a.eval_jet(x, y) - b.eval_jet(x, y),
            Mul(a, b) => &a.eval_jet(x, y) * &b.eval_jet(x, y),
            Div(a, b) => &a.eval_jet(x, y) * &b.eval_jet(x, y).recip(),
            Pow(a, n) => a.eval_jet(x, y).powi(*n),
            Call(f, a) => {
                let v = a.eval_jet(x, y);
                match f {
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sinh => v.sinh(),
                    Func::Cosh => v.cosh(),
                }
            }
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn diff(&self, axis: Axis) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var(a) => Const(if *a == axis { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(axis)),
            Add(a, b) => add(a.diff(axis), b.diff(axis)),
            Sub(a, b) => sub(a.diff(axis), b.diff(axis)),
            Mul(a, b) => add(mul(a.diff(axis), (**b).clone()), mul((**a).clone(), b.diff(axis))),
            Div(a, b) => div(
                sub(mul(a.diff(axis), (**b).clone()), mul((**a).clone(), b.diff(axis))),
                pow((**b).clone(), 2),
            ),
            Pow(a, n) => mul(mul(Const(*n as f64), pow((**a).clone(), n - 1)), a.diff(axis)),
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => Call(Func::Exp, Box::new(inner)),
                    Func::Sin => Call(Func::Cos, Box::new(inner)),
                    Func::Cos => neg(Call(Func::Sin, Box::new(inner))),
                    Func::Sinh => Call(Func::Cosh, Box::new(inner)),
                    Func::Cosh => Call(Func::Sinh, Box::new(inner)),
                };
                mul(outer, a.diff(axis))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Const(_) => true,
            Var(_) => false,
            Neg(a) | Pow(a, _) | Call(_, a) => a.is_constant(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Exact field with jets of the given order; division by zero or overflow is an error.
    pub fn to_field(&self, grid: Grid, order: usize) -> Result<ScalarField> {
        let f = ScalarField::from_jet_fn(grid, order, |x, y| self.eval_jet(&x, &y));
        f.check_finite()?;
        Ok(f)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(c) => Const(-c),
        Neg(b) => *b,
        other => Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(p), Const(q)) => Const(p + q),
        (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(p), Const(q)) => Const(p - q),
        (e, Const(z)) if z == 0.0 => e,
        (Const(z), e) if z == 0.0 => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(p), Const(q)) => Const(p * q),
        (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
        (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(z), _) if z == 0.0 => Const(0.0),
        (e, Const(o)) if o == 1.0 => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, n: i32) -> Expr {
    match (a, n) {
        (_, 0) => Const(1.0),
        (e, 1) => e,
        (Const(c), n) => Const(c.powi(n)),
        (a, n) => Pow(Box::new(a), n),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{c}"),
            Var(Axis::X) => write!(f, "x"),
            Var(Axis::Y) => write!(f, "y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, n) => write!(f, "({a}^{n})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
    lex_error: Option<Error>,
}

impl Parser {
    fn new(src: &str, line: usize) -> Self {
        let mut toks = Vec::new();
        let mut lex_error = None;
        let chars: Vec<char> = src.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut k = i + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        i = k;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<f64>() {
                    Ok(v) => toks.push((Tok::Num(v), col)),
                    Err(_) => {
                        lex_error.get_or_insert(Error::Parse { line, col, msg: format!("bad number '{text}'") });
                    }
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            } else if "+-*/^()".contains(c) {
                toks.push((Tok::Op(c), col));
                i += 1;
            } else {
                lex_error.get_or_insert(Error::Parse { line, col, msg: format!("unexpected character '{c}'") });
                i += 1;
            }
        }
        Self { toks, pos: 0, line, end_col: chars.len() + 1, lex_error }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let col = self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end_col);
        Error::Parse { line: self.line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_all(mut self) -> Result<Expr> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        if self.toks.is_empty() {
            return Err(self.err("empty expression"));
        }
        let e = self.expr()?;
        if self.pos < self.toks.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if !self.eat_op('^') {
            return Ok(base);
        }
        let negative = self.eat_op('-');
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                let n = *v as i32;
                self.pos += 1;
                Ok(Pow(Box::new(base), if negative { -n } else { n }))
            }
            _ => Err(self.err("exponent must be an integer literal")),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.err("unexpected end of expression")),
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                match name.as_str() {
                    "x" | "u" => {
                        self.pos += 1;
                        return Ok(Var(Axis::X));
                    }
                    "y" | "v" => {
                        self.pos += 1;
                        return Ok(Var(Axis::Y));
                    }
                    "pi" => {
                        self.pos += 1;
                        return Ok(Const(std::f64::consts::PI));
                    }
                    _ => {}
                }
                let func = Func::from_name(&name).ok_or_else(|| self.err(format!("unknown name '{name}'")))?;
                self.pos += 1;
                if !self.eat_op('(') {
                    return Err(self.err(format!("expected '(' after {name}")));
                }
                let arg = self.expr()?;
                if !self.eat_op(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(Call(func, Box::new(arg)))
            }
            Tok::Op(c) => Err(self.err(format!("unexpected '{c}'"))),
        }
    }
}
