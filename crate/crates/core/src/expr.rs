//! Closed-form expression language for exponent fields.
//!
//! Grammar (recursive descent, positions reported on error):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := number | x1 | x2 | x3 | ('sin'|'cos'|'exp') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Expressions evaluate at points and differentiate symbolically, so exponent
//! gradients are closed-form rather than finite-difference.

use crate::error::Error;
use crate::linalg::Vector;
use crate::Result;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Coordinate x1, x2 or x3, stored zero-based.
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Coord(a) => x.get(*a),
            Expr::Add(l, r) => l.eval(x) + r.eval(x),
            Expr::Sub(l, r) => l.eval(x) - r.eval(x),
            Expr::Mul(l, r) => l.eval(x) * r.eval(x),
            Expr::Div(l, r) => l.eval(x) / r.eval(x),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
            Expr::Exp(e) => e.eval(x).exp(),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `axis`
    /// (zero-based), with constant folding.
    pub fn diff(&self, axis: usize) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Coord(a) => Num(if *a == axis { 1.0 } else { 0.0 }),
            Add(l, r) => add(l.diff(axis), r.diff(axis)),
            Sub(l, r) => sub(l.diff(axis), r.diff(axis)),
            Mul(l, r) => add(
                mul(l.diff(axis), (**r).clone()),
                mul((**l).clone(), r.diff(axis)),
            ),
            Div(l, r) => div(
                sub(
                    mul(l.diff(axis), (**r).clone()),
                    mul((**l).clone(), r.diff(axis)),
                ),
                mul((**r).clone(), (**r).clone()),
            ),
            Sin(e) => mul(Cos(e.clone()), e.diff(axis)),
            Cos(e) => mul(sub(Num(0.0), Sin(e.clone())), e.diff(axis)),
            Exp(e) => mul(Exp(e.clone()), e.diff(axis)),
        }
    }

    /// Highest coordinate index used, or `None` for constant expressions.
    pub fn max_coord(&self) -> Option<usize> {
        use Expr::*;
        match self {
            Num(_) => None,
            Coord(a) => Some(*a),
            Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r) => {
                match (l.max_coord(), r.max_coord()) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                }
            }
            Sin(e) | Cos(e) | Exp(e) => e.max_coord(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::Coord(a) => write!(f, "x{}", a + 1),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Sub(l, r) => write!(f, "({l} - {r})"),
            Expr::Mul(l, r) => write!(f, "({l} * {r})"),
            Expr::Div(l, r) => write!(f, "({l} / {r})"),
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
        }
    }
}

// Folding constructors keep derivative trees small.
fn add(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a + b),
        (Expr::Num(z), r) if z == 0.0 => r,
        (l, Expr::Num(z)) if z == 0.0 => l,
        (l, r) => Expr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a - b),
        (l, Expr::Num(z)) if z == 0.0 => l,
        (l, r) => Expr::Sub(Box::new(l), Box::new(r)),
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a * b),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), r) if o == 1.0 => r,
        (l, Expr::Num(o)) if o == 1.0 => l,
        (l, r) => Expr::Mul(Box::new(l), Box::new(r)),
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(z), r) if z == 0.0 && r != Expr::Num(0.0) => Expr::Num(0.0),
        (l, Expr::Num(o)) if o == 1.0 => l,
        (l, r) => Expr::Div(Box::new(l), Box::new(r)),
    }
}

/// Parses the expression language; syntax errors carry line and column.
pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> Error {
        let mut line = 1;
        let mut col = 1;
        for &b in &self.src[..self.pos.min(self.src.len())] {
            if b == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        Error::Syntax { line, col, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ') | Some(b'\t') | Some(b'\n') | Some(b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.eat(b'-') {
                acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                acc = Expr::Div(Box::new(acc), Box::new(self.factor()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("expected a factor, found end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.error(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        // Optional exponent part, e.g. 1e-3.
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.error(&format!("invalid number '{text}'")))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        match name.as_str() {
            "x1" => Ok(Expr::Coord(0)),
            "x2" => Ok(Expr::Coord(1)),
            "x3" => Ok(Expr::Coord(2)),
            "sin" | "cos" | "exp" => {
                self.skip_ws();
                if !self.eat(b'(') {
                    return Err(self.error(&format!("expected '(' after '{name}'")));
                }
                let inner = Box::new(self.expr()?);
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(match name.as_str() {
                    "sin" => Expr::Sin(inner),
                    "cos" => Expr::Cos(inner),
                    _ => Expr::Exp(inner),
                })
            }
            _ => {
                self.pos = start;
                Err(self.error(&format!("unknown identifier '{name}'")))
            }
        }
    }
}
