//! Textual expressions in the variables `x`, `y`, `alpha`: parsing, evaluation,
//! symbolic differentiation, and a canonical round-trippable serialization.
//!
//! The grammar is fixed: `+ - * / ^` with `^` binding tightest and
//! right-associative, unary minus below `^`, the four functions
//! `sin cos exp ln`, decimal literals with IEEE double semantics, and the three
//! variables. Powers with a constant integer exponent evaluate as repeated
//! multiplication, so they stay defined for negative bases.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// One of the three declared variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Alpha,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Alpha => "alpha",
        }
    }
}

/// Values bound to the three variables during evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bindings {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

impl Bindings {
    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite() && alpha.is_finite());
        Bindings { x, y, alpha }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::X => self.x,
            Var::Y => self.y,
            Var::Alpha => self.alpha,
        }
    }
}

/// Parsed arithmetic tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Num(f64),
    Var(Var),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Sin(Box<Expression>),
    Cos(Box<Expression>),
    Exp(Box<Expression>),
    Ln(Box<Expression>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive value")]
    LogNonPositive,
    #[error("zero raised to a negative power")]
    ZeroToNegative,
    #[error("negative base raised to a non-integer power")]
    NegativeBasePow,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => return self.lex_number(start),
            c if c.is_ascii_alphabetic() || c == b'_' => return self.lex_ident(start),
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn lex_number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let mut end = self.pos;
        while end < self.src.len() && self.src[end].is_ascii_digit() {
            end += 1;
        }
        if end < self.src.len() && self.src[end] == b'.' {
            end += 1;
            while end < self.src.len() && self.src[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut e = end + 1;
            if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                e += 1;
            }
            if e < self.src.len() && self.src[e].is_ascii_digit() {
                end = e;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("invalid number literal `{text}`"),
        })?;
        self.pos = end;
        Ok((Tok::Num(value), start))
    }

    fn lex_ident(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let mut end = self.pos;
        while end < self.src.len()
            && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
        {
            end += 1;
        }
        let name = std::str::from_utf8(&self.src[start..end]).unwrap().to_owned();
        self.pos = end;
        Ok((Tok::Ident(name), start))
    }
}

// ---------------------------------------------------------------------------
// Parser (recursive descent)
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.idx]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().0 {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.peek().0 == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expression::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.atom()?;
        if self.peek().0 == Tok::Caret {
            self.bump();
            // exponent binds right-associatively and may carry a unary minus
            let exponent = self.unary()?;
            return Ok(Expression::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expression::Num(v)),
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expression::Var(Var::X)),
                "y" => Ok(Expression::Var(Var::Y)),
                "alpha" => Ok(Expression::Var(Var::Alpha)),
                "sin" | "cos" | "exp" | "ln" => {
                    let (open, open_at) = self.bump();
                    if open != Tok::LParen {
                        return Err(ParseError::Syntax {
                            offset: open_at,
                            message: format!("expected `(` after `{name}`"),
                        });
                    }
                    let arg = self.expr()?;
                    let (close, close_at) = self.bump();
                    if close != Tok::RParen {
                        return Err(ParseError::Syntax {
                            offset: close_at,
                            message: "expected `)`".into(),
                        });
                    }
                    let b = Box::new(arg);
                    Ok(match name.as_str() {
                        "sin" => Expression::Sin(b),
                        "cos" => Expression::Cos(b),
                        "exp" => Expression::Exp(b),
                        _ => Expression::Ln(b),
                    })
                }
                _ => Err(ParseError::UnknownIdentifier { name, offset }),
            },
            Tok::LParen => {
                let inner = self.expr()?;
                let (close, close_at) = self.bump();
                if close != Tok::RParen {
                    return Err(ParseError::Syntax {
                        offset: close_at,
                        message: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            other => Err(ParseError::Syntax {
                offset,
                message: format!("expected an operand, found {}", tok_name(&other)),
            }),
        }
    }
}

fn tok_name(t: &Tok) -> &'static str {
    match t {
        Tok::Num(_) => "a number",
        Tok::Ident(_) => "an identifier",
        Tok::Plus => "`+`",
        Tok::Minus => "`-`",
        Tok::Star => "`*`",
        Tok::Slash => "`/`",
        Tok::Caret => "`^`",
        Tok::LParen => "`(`",
        Tok::RParen => "`)`",
        Tok::Eof => "end of input",
    }
}

impl Expression {
    /// Parse an expression over `x`, `y`, `alpha`.
    pub fn parse(text: &str) -> Result<Expression, ParseError> {
        if text.trim().is_empty() {
            return Err(ParseError::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let mut lexer = Lexer::new(text);
        let mut toks = Vec::new();
        loop {
            let (tok, at) = lexer.next()?;
            let done = tok == Tok::Eof;
            toks.push((tok, at));
            if done {
                break;
            }
        }
        let mut parser = Parser { toks, idx: 0 };
        let e = parser.expr()?;
        let (trailing, at) = parser.peek().clone();
        if trailing != Tok::Eof {
            return Err(ParseError::Syntax {
                offset: at,
                message: format!("unexpected {}", tok_name(&trailing)),
            });
        }
        Ok(e)
    }

    /// Evaluate at the given bindings with IEEE double semantics. Operations
    /// that would produce a NaN from finite inputs (`ln` of a non-positive
    /// value, division by zero, `0^negative`, negative base to a non-integer
    /// power) are reported as domain errors instead.
    pub fn evaluate(&self, b: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expression::Num(v) => Ok(*v),
            Expression::Var(v) => Ok(b.get(*v)),
            Expression::Neg(e) => Ok(-e.evaluate(b)?),
            Expression::Add(l, r) => Ok(l.evaluate(b)? + r.evaluate(b)?),
            Expression::Sub(l, r) => Ok(l.evaluate(b)? - r.evaluate(b)?),
            Expression::Mul(l, r) => Ok(l.evaluate(b)? * r.evaluate(b)?),
            Expression::Div(l, r) => {
                let den = r.evaluate(b)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                Ok(l.evaluate(b)? / den)
            }
            Expression::Pow(base, exponent) => {
                let bv = base.evaluate(b)?;
                let ev = exponent.evaluate(b)?;
                pow_value(bv, ev)
            }
            Expression::Sin(e) => Ok(e.evaluate(b)?.sin()),
            Expression::Cos(e) => Ok(e.evaluate(b)?.cos()),
            Expression::Exp(e) => Ok(e.evaluate(b)?.exp()),
            Expression::Ln(e) => {
                let v = e.evaluate(b)?;
                if v <= 0.0 {
                    return Err(EvalError::LogNonPositive);
                }
                Ok(v.ln())
            }
        }
    }

    /// Exact symbolic derivative with respect to `var`, conservatively
    /// simplified (literal folding and identity elimination).
    pub fn differentiate(&self, var: Var) -> Expression {
        self.diff(var).simplified()
    }

    fn diff(&self, var: Var) -> Expression {
        use Expression::*;
        match self {
            Num(_) => Num(0.0),
            Var(v) => Num(if *v == var { 1.0 } else { 0.0 }),
            Neg(e) => Neg(Box::new(e.diff(var))),
            Add(l, r) => Add(Box::new(l.diff(var)), Box::new(r.diff(var))),
            Sub(l, r) => Sub(Box::new(l.diff(var)), Box::new(r.diff(var))),
            Mul(l, r) => Add(
                Box::new(Mul(Box::new(l.diff(var)), r.clone())),
                Box::new(Mul(l.clone(), Box::new(r.diff(var)))),
            ),
            Div(l, r) => Sub(
                Box::new(Div(Box::new(l.diff(var)), r.clone())),
                Box::new(Div(
                    Box::new(Mul(l.clone(), Box::new(r.diff(var)))),
                    Box::new(Pow(r.clone(), Box::new(Num(2.0)))),
                )),
            ),
            Pow(base, exponent) => {
                if let Some(n) = integer_literal(exponent) {
                    // power rule for constant integer exponents
                    let lowered = Pow(base.clone(), Box::new(Num(n - 1.0)));
                    Mul(
                        Box::new(Mul(Box::new(Num(n)), Box::new(lowered))),
                        Box::new(base.diff(var)),
                    )
                } else {
                    // rewrite u^v = exp(v ln u) and differentiate the rewrite
                    let rewritten = Exp(Box::new(Mul(
                        exponent.clone(),
                        Box::new(Ln(base.clone())),
                    )));
                    rewritten.diff(var)
                }
            }
            Sin(e) => Mul(Box::new(Cos(e.clone())), Box::new(e.diff(var))),
            Cos(e) => Neg(Box::new(Mul(Box::new(Sin(e.clone())), Box::new(e.diff(var))))),
            Exp(e) => Mul(Box::new(Exp(e.clone())), Box::new(e.diff(var))),
            Ln(e) => Div(Box::new(e.diff(var)), e.clone()),
        }
    }

    /// Constant folding plus additive/multiplicative identity elimination.
    /// Folds that would raise a domain error or overflow are left in place.
    pub fn simplified(&self) -> Expression {
        use Expression::*;
        let folded = match self {
            Num(_) | Var(_) => return self.clone(),
            Neg(e) => Neg(Box::new(e.simplified())),
            Add(l, r) => Add(Box::new(l.simplified()), Box::new(r.simplified())),
            Sub(l, r) => Sub(Box::new(l.simplified()), Box::new(r.simplified())),
            Mul(l, r) => Mul(Box::new(l.simplified()), Box::new(r.simplified())),
            Div(l, r) => Div(Box::new(l.simplified()), Box::new(r.simplified())),
            Pow(l, r) => Pow(Box::new(l.simplified()), Box::new(r.simplified())),
            Sin(e) => Sin(Box::new(e.simplified())),
            Cos(e) => Cos(Box::new(e.simplified())),
            Exp(e) => Exp(Box::new(e.simplified())),
            Ln(e) => Ln(Box::new(e.simplified())),
        };
        // fold literal-only nodes when the fold is exact and finite
        if let Some(v) = folded.literal_value() {
            if v.is_finite() {
                return Num(v);
            }
        }
        match folded {
            Add(l, r) => match (&*l, &*r) {
                (Num(z), _) if *z == 0.0 => *r,
                (_, Num(z)) if *z == 0.0 => *l,
                _ => Add(l, r),
            },
            Sub(l, r) => match (&*l, &*r) {
                (_, Num(z)) if *z == 0.0 => *l,
                (Num(z), _) if *z == 0.0 => Neg(r),
                _ => Sub(l, r),
            },
            Mul(l, r) => match (&*l, &*r) {
                (Num(o), _) if *o == 1.0 => *r,
                (_, Num(o)) if *o == 1.0 => *l,
                (Num(z), _) if *z == 0.0 => Num(0.0),
                (_, Num(z)) if *z == 0.0 => Num(0.0),
                _ => Mul(l, r),
            },
            Div(l, r) => match (&*l, &*r) {
                (_, Num(o)) if *o == 1.0 => *l,
                _ => Div(l, r),
            },
            Pow(l, r) => match (&*l, &*r) {
                (_, Num(o)) if *o == 1.0 => *l,
                _ => Pow(l, r),
            },
            Neg(e) => match &*e {
                Neg(inner) => (**inner).clone(),
                Num(v) => Num(-v),
                _ => Neg(e),
            },
            other => other,
        }
    }

    // Some(value) when the node is literal-only and evaluates without error.
    fn literal_value(&self) -> Option<f64> {
        use Expression::*;
        match self {
            Num(v) => Some(*v),
            Var(_) => None,
            Neg(e) => Some(-e.literal_value()?),
            Add(l, r) => Some(l.literal_value()? + r.literal_value()?),
            Sub(l, r) => Some(l.literal_value()? - r.literal_value()?),
            Mul(l, r) => Some(l.literal_value()? * r.literal_value()?),
            Div(l, r) => {
                let den = r.literal_value()?;
                if den == 0.0 {
                    return None;
                }
                Some(l.literal_value()? / den)
            }
            Pow(l, r) => pow_value(l.literal_value()?, r.literal_value()?).ok(),
            Sin(e) => Some(e.literal_value()?.sin()),
            Cos(e) => Some(e.literal_value()?.cos()),
            Exp(e) => Some(e.literal_value()?.exp()),
            Ln(e) => {
                let v = e.literal_value()?;
                if v <= 0.0 {
                    return None;
                }
                Some(v.ln())
            }
        }
    }

    /// Replace every occurrence of `var` with `replacement`.
    pub fn substitute(&self, var: Var, replacement: &Expression) -> Expression {
        use Expression::*;
        let sub = |e: &Expression| Box::new(e.substitute(var, replacement));
        match self {
            Num(v) => Num(*v),
            Var(v) => {
                if *v == var {
                    replacement.clone()
                } else {
                    Var(*v)
                }
            }
            Neg(e) => Neg(sub(e)),
            Add(l, r) => Add(sub(l), sub(r)),
            Sub(l, r) => Sub(sub(l), sub(r)),
            Mul(l, r) => Mul(sub(l), sub(r)),
            Div(l, r) => Div(sub(l), sub(r)),
            Pow(l, r) => Pow(sub(l), sub(r)),
            Sin(e) => Sin(sub(e)),
            Cos(e) => Cos(sub(e)),
            Exp(e) => Exp(sub(e)),
            Ln(e) => Ln(sub(e)),
        }
    }

    /// True when the expression references `var`.
    pub fn references(&self, var: Var) -> bool {
        use Expression::*;
        match self {
            Num(_) => false,
            Var(v) => *v == var,
            Neg(e) | Sin(e) | Cos(e) | Exp(e) | Ln(e) => e.references(var),
            Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r) | Pow(l, r) => {
                l.references(var) || r.references(var)
            }
        }
    }

    fn precedence(&self) -> u8 {
        use Expression::*;
        match self {
            Num(_) | Var(_) | Sin(_) | Cos(_) | Exp(_) | Ln(_) => 100,
            Pow(_, _) => 40,
            Neg(_) => 30,
            Mul(_, _) | Div(_, _) => 20,
            Add(_, _) | Sub(_, _) => 10,
        }
    }
}

// Integer exponents evaluate as repeated multiplication so that negative bases
// stay defined and the result matches the multiplication chain bit for bit.
fn pow_value(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if exponent.fract() == 0.0 && exponent.abs() <= 1024.0 {
        let n = exponent.abs() as u32;
        let mut acc = 1.0f64;
        for _ in 0..n {
            acc *= base;
        }
        if exponent < 0.0 {
            if base == 0.0 {
                return Err(EvalError::ZeroToNegative);
            }
            return Ok(1.0 / acc);
        }
        return Ok(acc);
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::ZeroToNegative);
    }
    if base < 0.0 {
        return Err(EvalError::NegativeBasePow);
    }
    Ok(base.powf(exponent))
}

fn integer_literal(e: &Expression) -> Option<f64> {
    if let Expression::Num(v) = e {
        if v.fract() == 0.0 && v.abs() <= 1024.0 {
            return Some(*v);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Canonical serialization: parses back to the identical tree.
// ---------------------------------------------------------------------------

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f)
    }
}

impl Expression {
    fn write_prec(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expression::*;
        let paren = |f: &mut fmt::Formatter<'_>, e: &Expression, needed: bool| -> fmt::Result {
            if needed {
                write!(f, "(")?;
                e.write_prec(f)?;
                write!(f, ")")
            } else {
                e.write_prec(f)
            }
        };
        match self {
            Num(v) => write!(f, "{v}"),
            Var(v) => write!(f, "{}", v.name()),
            Neg(e) => {
                write!(f, "-")?;
                paren(f, e, e.precedence() < 30)
            }
            Add(l, r) => {
                paren(f, l, l.precedence() < 10)?;
                write!(f, " + ")?;
                paren(f, r, r.precedence() <= 10)
            }
            Sub(l, r) => {
                paren(f, l, l.precedence() < 10)?;
                write!(f, " - ")?;
                paren(f, r, r.precedence() <= 10)
            }
            Mul(l, r) => {
                paren(f, l, l.precedence() < 20)?;
                write!(f, "*")?;
                paren(f, r, r.precedence() <= 20 && !matches!(**r, Neg(_)))
            }
            Div(l, r) => {
                paren(f, l, l.precedence() < 20)?;
                write!(f, "/")?;
                paren(f, r, r.precedence() <= 30)
            }
            Pow(l, r) => {
                paren(f, l, l.precedence() <= 40)?;
                write!(f, "^")?;
                paren(f, r, r.precedence() < 30)
            }
            Sin(e) => {
                write!(f, "sin(")?;
                e.write_prec(f)?;
                write!(f, ")")
            }
            Cos(e) => {
                write!(f, "cos(")?;
                e.write_prec(f)?;
                write!(f, ")")
            }
            Exp(e) => {
                write!(f, "exp(")?;
                e.write_prec(f)?;
                write!(f, ")")
            }
            Ln(e) => {
                write!(f, "ln(")?;
                e.write_prec(f)?;
                write!(f, ")")
            }
        }
    }
}
