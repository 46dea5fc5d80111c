//! Small expression language for chart-local component functions.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;
//! primary = number | ident | ident "(" expr { "," expr } ")" | "(" expr ")" ;
//! ```
//!
//! Identifiers are the model coordinates, `i` and `pi`; functions are
//! `sin cos exp log sqrt atan2`.

use crate::dual::CDual;
use crate::error::{Error, Result};
use crate::lie::{c, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Imag,
    Pi,
    /// Coordinate by index into the model's coordinate names.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

fn lex(src: &str) -> Result<Lexer> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if ch.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let (l0, c0) = (line, col);
        if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| Error::SyntaxError {
                line: l0,
                column: c0,
                message: format!("malformed number `{text}`"),
            })?;
            col += i - start;
            toks.push((Tok::Num(v), l0, c0));
        } else if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            toks.push((Tok::Ident(chars[start..i].iter().collect()), l0, c0));
        } else if "+-*/^(),".contains(ch) {
            toks.push((Tok::Op(ch), l0, c0));
            i += 1;
            col += 1;
        } else {
            return Err(Error::SyntaxError { line: l0, column: c0, message: format!("unexpected character `{ch}`") });
        }
    }
    toks.push((Tok::End, line, col));
    Ok(Lexer { toks, pos: 0 })
}

struct Parser<'a> {
    lx: Lexer,
    names: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.lx.toks[self.lx.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.lx.toks[self.lx.pos].0.clone();
        if self.lx.pos + 1 < self.lx.toks.len() {
            self.lx.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: &str) -> Result<T> {
        let (_, line, column) = self.lx.toks[self.lx.pos];
        Err(Error::SyntaxError { line, column, message: message.into() })
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if *self.peek() == Tok::Op(op) {
            self.bump();
            Ok(())
        } else {
            self.err(&format!("expected `{op}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let save = self.lx.pos;
                self.bump();
                if *self.peek() == Tok::Op('(') {
                    self.bump();
                    let a = self.expr()?;
                    if name == "atan2" {
                        self.expect(',')?;
                        let b = self.expr()?;
                        self.expect(')')?;
                        return Ok(Expr::Atan2(Box::new(a), Box::new(b)));
                    }
                    self.expect(')')?;
                    return match Func::from_name(&name) {
                        Some(f) => Ok(Expr::Call(f, Box::new(a))),
                        None => Err(Error::UnknownIdentifier(name)),
                    };
                }
                match name.as_str() {
                    "i" => Ok(Expr::Imag),
                    "pi" => Ok(Expr::Pi),
                    _ => match self.names.iter().position(|n| *n == name) {
                        Some(k) => Ok(Expr::Var(k)),
                        None => {
                            self.lx.pos = save;
                            Err(Error::UnknownIdentifier(name))
                        }
                    },
                }
            }
            Tok::End => self.err("unexpected end of input"),
            Tok::Op(ch) => self.err(&format!("unexpected `{ch}`")),
        }
    }
}

pub fn parse(src: &str, names: &[&str]) -> Result<Expr> {
    let lx = lex(src)?;
    let mut p = Parser { lx, names };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

/// Fully parenthesised rendering; `parse(print(e)) == e` for parsed trees.
pub fn print(e: &Expr, names: &[&str]) -> String {
    match e {
        Expr::Num(v) => {
            if *v < 0.0 {
                format!("(-{})", -v)
            } else {
                format!("{v:?}")
            }
        }
        Expr::Imag => "i".into(),
        Expr::Pi => "pi".into(),
        Expr::Var(k) => names[*k].into(),
        Expr::Neg(a) => format!("(-{})", print(a, names)),
        Expr::Add(a, b) => format!("({} + {})", print(a, names), print(b, names)),
        Expr::Sub(a, b) => format!("({} - {})", print(a, names), print(b, names)),
        Expr::Mul(a, b) => format!("({} * {})", print(a, names), print(b, names)),
        Expr::Div(a, b) => format!("({} / {})", print(a, names), print(b, names)),
        Expr::Pow(a, b) => format!("({} ^ {})", print(a, names), print(b, names)),
        Expr::Call(f, a) => format!("{}({})", f.name(), print(a, names)),
        Expr::Atan2(a, b) => format!("atan2({}, {})", print(a, names), print(b, names)),
    }
}

fn real_of(z: CDual, what: &str) -> Result<(f64, f64)> {
    let scale = 1.0 + z.v.norm() + z.d.norm();
    if z.v.im.abs() > 1e-13 * scale || z.d.im.abs() > 1e-13 * scale {
        return Err(Error::DomainError(format!("{what} needs a real argument")));
    }
    Ok((z.v.re, z.d.re))
}

impl Expr {
    /// Value and directional derivative along `seed` at `point`.
    pub fn eval_dual(&self, point: &[f64], seed: &[f64]) -> Result<CDual> {
        let r = |a: &Expr| a.eval_dual(point, seed);
        Ok(match self {
            Expr::Num(v) => CDual::real(*v, 0.0),
            Expr::Imag => CDual::constant(c(0.0, 1.0)),
            Expr::Pi => CDual::real(std::f64::consts::PI, 0.0),
            Expr::Var(k) => CDual::real(point[*k], seed.get(*k).copied().unwrap_or(0.0)),
            Expr::Neg(a) => -r(a)?,
            Expr::Add(a, b) => r(a)? + r(b)?,
            Expr::Sub(a, b) => r(a)? - r(b)?,
            Expr::Mul(a, b) => r(a)? * r(b)?,
            Expr::Div(a, b) => {
                let d = r(b)?;
                if d.v.norm() == 0.0 {
                    return Err(Error::DomainError("division by zero".into()));
                }
                r(a)? / d
            }
            Expr::Pow(a, b) => {
                let (x, y) = (r(a)?, r(b)?);
                let int = y.v.im == 0.0 && y.v.re.fract() == 0.0 && y.v.re.abs() < 1e6 && y.d.norm() == 0.0;
                if int {
                    if x.v.norm() == 0.0 && y.v.re < 0.0 {
                        return Err(Error::DomainError("zero to a negative power".into()));
                    }
                    x.powi(y.v.re as i32)
                } else {
                    let (xv, xd) = real_of(x, "non-integer power")?;
                    if xv <= 0.0 {
                        return Err(Error::DomainError("non-integer power of a non-positive base".into()));
                    }
                    let ln = CDual::real(xv.ln(), xd / xv);
                    (y * ln).exp()
                }
            }
            Expr::Call(f, a) => {
                let x = r(a)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        let (v, d) = real_of(x, "log")?;
                        if v <= 0.0 {
                            return Err(Error::DomainError(format!("log of non-positive value {v}")));
                        }
                        CDual::real(v.ln(), d / v)
                    }
                    Func::Sqrt => {
                        let (v, d) = real_of(x, "sqrt")?;
                        if v < 0.0 || (v == 0.0 && d != 0.0) {
                            return Err(Error::DomainError(format!("sqrt of {v}")));
                        }
                        let s = v.sqrt();
                        CDual::real(s, if d == 0.0 { 0.0 } else { d / (2.0 * s) })
                    }
                }
            }
            Expr::Atan2(a, b) => {
                let (y, yd) = real_of(r(a)?, "atan2")?;
                let (x, xd) = real_of(r(b)?, "atan2")?;
                let r2 = x * x + y * y;
                if r2 == 0.0 {
                    return Err(Error::DomainError("atan2(0, 0)".into()));
                }
                CDual::real(y.atan2(x), (x * yd - y * xd) / r2)
            }
        })
    }

    pub fn eval(&self, point: &[f64]) -> Result<C64> {
        Ok(self.eval_dual(point, &[])?.v)
    }

    fn depends_on(&self, k: usize) -> bool {
        match self {
            Expr::Var(j) => *j == k,
            Expr::Num(_) | Expr::Imag | Expr::Pi => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(k),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) | Expr::Atan2(a, b) => {
                a.depends_on(k) || b.depends_on(k)
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `k`.
    pub fn diff(&self, k: usize) -> Expr {
        use Expr::*;
        let b = |e: Expr| Box::new(e);
        match self {
            Num(_) | Imag | Pi => Num(0.0),
            Var(j) => Num(if *j == k { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(k)),
            Add(x, y) => add(x.diff(k), y.diff(k)),
            Sub(x, y) => sub(x.diff(k), y.diff(k)),
            Mul(x, y) => add(mul(x.diff(k), (**y).clone()), mul((**x).clone(), y.diff(k))),
            Div(x, y) => div(
                sub(mul(x.diff(k), (**y).clone()), mul((**x).clone(), y.diff(k))),
                Pow(y.clone(), b(Num(2.0))),
            ),
            Pow(x, y) => {
                if !y.depends_on(k) {
                    mul(mul((**y).clone(), Pow(x.clone(), b(sub((**y).clone(), Num(1.0))))), x.diff(k))
                } else {
                    mul(
                        self.clone(),
                        add(mul(y.diff(k), Call(Func::Log, x.clone())), div(mul((**y).clone(), x.diff(k)), (**x).clone())),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.diff(k);
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                    Func::Log => div(Num(1.0), (**a).clone()),
                    Func::Sqrt => div(Num(1.0), mul(Num(2.0), self.clone())),
                };
                mul(outer, inner)
            }
            Atan2(y, x) => div(
                sub(mul((**x).clone(), y.diff(k)), mul((**y).clone(), x.diff(k))),
                add(mul((**x).clone(), (**x).clone()), mul((**y).clone(), (**y).clone())),
            ),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        b
    } else if b.is_zero() {
        a
    } else {
        Expr::Add(Box::new(a), Box::new(b))
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        a
    } else if a.is_zero() {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        Expr::Num(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        Expr::Num(0.0)
    } else if is_one(&b) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

pub fn neg(a: Expr) -> Expr {
    if a.is_zero() {
        a
    } else {
        Expr::Neg(Box::new(a))
    }
}
