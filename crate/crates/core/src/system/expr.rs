//! Bound expressions over the delayed-state variables `t1..tn`.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | "pi" | "e" | tK | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Functions: `sin cos exp abs sqrt min max piecewise clamp`.
//! `piecewise(c, lhs, rhs)` is `lhs` when `c ≤ 0` and `rhs` otherwise.
//! `clamp(e, lo, hi)` is `min(max(e, lo), hi)`; the four-argument form
//! `clamp(e, lo, hi, knee)` additionally returns `hi` once the single
//! variable of `e` exceeds `knee`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
    Piecewise,
    Clamp,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            "piecewise" => Func::Piecewise,
            "clamp" => Func::Clamp,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
            Func::Piecewise => "piecewise",
            Func::Clamp => "clamp",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Sin | Func::Cos | Func::Exp | Func::Abs | Func::Sqrt => n == 1,
            Func::Min | Func::Max => n >= 2,
            Func::Piecewise => n == 3,
            Func::Clamp => n == 3 || n == 4,
        }
    }

    fn arity_text(self) -> &'static str {
        match self {
            Func::Sin | Func::Cos | Func::Exp | Func::Abs | Func::Sqrt => "1 argument",
            Func::Min | Func::Max => "at least 2 arguments",
            Func::Piecewise => "3 arguments",
            Func::Clamp => "3 or 4 arguments",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index (`t1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => theta.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(theta),
            Expr::Add(a, b) => a.eval(theta) + b.eval(theta),
            Expr::Sub(a, b) => a.eval(theta) - b.eval(theta),
            Expr::Mul(a, b) => a.eval(theta) * b.eval(theta),
            Expr::Div(a, b) => a.eval(theta) / b.eval(theta),
            Expr::Pow(a, b) => a.eval(theta).powf(b.eval(theta)),
            Expr::Call(f, args) => {
                let x = |k: usize| args[k].eval(theta);
                match f {
                    Func::Sin => x(0).sin(),
                    Func::Cos => x(0).cos(),
                    Func::Exp => x(0).exp(),
                    Func::Abs => x(0).abs(),
                    Func::Sqrt => x(0).sqrt(),
                    Func::Min => args.iter().map(|a| a.eval(theta)).fold(f64::INFINITY, f64::min),
                    Func::Max => args
                        .iter()
                        .map(|a| a.eval(theta))
                        .fold(f64::NEG_INFINITY, f64::max),
                    Func::Piecewise => {
                        if x(0) <= 0.0 {
                            x(1)
                        } else {
                            x(2)
                        }
                    }
                    Func::Clamp => {
                        let hi = x(2);
                        if args.len() == 4 {
                            let var = args[0].first_var().unwrap_or(0);
                            let t = theta.get(var).copied().unwrap_or(f64::NAN);
                            if t > x(3) {
                                return hi;
                            }
                        }
                        x(0).max(x(1)).min(hi)
                    }
                }
            }
        }
    }

    fn first_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) => a.first_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.first_var().or_else(|| b.first_var()),
            Expr::Call(_, args) => args.iter().find_map(Expr::first_var),
        }
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "t{}", i + 1),
            Expr::Neg(a) => {
                // A literal right after the sign would be folded into a
                // negative constant on re-parse.
                if matches!(**a, Expr::Const(_)) {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-")?;
                    a.write_child(f, 3)
                }
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, prec) = match self {
                    Expr::Add(..) => ("+", 1),
                    Expr::Sub(..) => ("-", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                a.write_child(f, prec)?;
                write!(f, " {op} ")?;
                b.write_child(f, prec + 1)
            }
            Expr::Pow(a, b) => {
                a.write_child(f, 5)?;
                write!(f, "^")?;
                b.write_child(f, 3)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(usize, Tok)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= bytes.len() {
            return Ok((start, Tok::End));
        }
        let ch = bytes[start];
        if ch.is_ascii_digit() || ch == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            self.pos = end;
            return Ok((start, Tok::Num(value)));
        }
        if ch.is_ascii_alphabetic() || ch == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((start, Tok::Ident(self.src[start..end].to_string())));
        }
        if b"+-*/^(),".contains(&ch) {
            self.pos += 1;
            return Ok((start, Tok::Op(ch as char)));
        }
        let c = self.src[start..].chars().next().unwrap_or('?');
        Err(Error::Syntax {
            offset: start,
            message: format!("unexpected character `{c}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<()> {
        let (at, tok) = self.lexer.next()?;
        self.at = at;
        self.tok = tok;
        Ok(())
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.at,
            message: message.into(),
        })
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.tok == Tok::Op(op) {
            self.bump()
        } else {
            self.error(format!("expected `{op}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            if let Tok::Num(v) = self.tok {
                // `-2` is a literal, `-2^2` is still `-(2^2)`.
                let lookahead = Lexer {
                    src: self.lexer.src,
                    pos: self.lexer.pos,
                }
                .next()?;
                if lookahead.1 != Tok::Op('^') {
                    self.bump()?;
                    return Ok(Expr::Const(-v));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::Op('(') {
                    let func = Func::from_name(&name)
                        .ok_or(Error::UnknownIdentifier { offset: at, name })?;
                    self.bump()?;
                    let mut args = vec![self.expr()?];
                    while self.tok == Tok::Op(',') {
                        self.bump()?;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if !func.arity_ok(args.len()) {
                        return Err(Error::Syntax {
                            offset: at,
                            message: format!("`{}` takes {}", func.name(), func.arity_text()),
                        });
                    }
                    if func == Func::Clamp && args.len() == 4 && args[0].variables().len() != 1 {
                        return Err(Error::Syntax {
                            offset: at,
                            message: "four-argument clamp needs exactly one variable in its first argument"
                                .into(),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    _ => {
                        let index = name
                            .strip_prefix('t')
                            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                            .and_then(|d| d.parse::<usize>().ok())
                            .filter(|k| *k >= 1 && *k <= self.nvars);
                        match index {
                            Some(k) => Ok(Expr::Var(k - 1)),
                            None => Err(Error::UnknownIdentifier { offset: at, name }),
                        }
                    }
                }
            }
            Tok::End => self.error("unexpected end of input"),
            Tok::Op(c) => self.error(format!("unexpected `{c}`")),
        }
    }
}

/// Parse `text` with variables `t1..t{nvars}`.
pub fn parse_bound_expr(text: &str, nvars: usize) -> Result<Expr> {
    let mut p = Parser {
        lexer: Lexer { src: text, pos: 0 },
        tok: Tok::End,
        at: 0,
        nvars,
    };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.error("trailing input");
    }
    Ok(e)
}
