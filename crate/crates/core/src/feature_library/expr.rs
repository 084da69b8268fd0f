//! Expression language for custom features.
//!
//! Grammar: numbers, variables `x<i>` (state) and `a<j>` (action), binary
//! `+ - * / ^`, unary minus, parentheses and the functions `sin`, `cos`.
//! `^` binds tightest and is right associative.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    State(usize),
    Action(usize),
}

impl Var {
    /// Position of the variable in the concatenated `[x; a]` input.
    pub fn slot(self, state_dim: usize) -> usize {
        match self {
            Var::State(i) => i,
            Var::Action(j) => state_dim + j,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{i}"),
            Var::Action(j) => write!(f, "a{j}"),
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
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    /// Evaluate with `input = [x; a]`.
    pub fn eval(&self, input: &[f64], state_dim: usize) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => input[v.slot(state_dim)],
            Expr::Neg(e) => -e.eval(input, state_dim)?,
            Expr::Add(l, r) => l.eval(input, state_dim)? + r.eval(input, state_dim)?,
            Expr::Sub(l, r) => l.eval(input, state_dim)? - r.eval(input, state_dim)?,
            Expr::Mul(l, r) => l.eval(input, state_dim)? * r.eval(input, state_dim)?,
            Expr::Div(l, r) => {
                let den = r.eval(input, state_dim)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                l.eval(input, state_dim)? / den
            }
            Expr::Pow(b, e) => {
                let base = b.eval(input, state_dim)?;
                match **e {
                    Expr::Const(k) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => {
                        base.powi(k as i32)
                    }
                    _ => base.powf(e.eval(input, state_dim)?),
                }
            }
            Expr::Sin(e) => e.eval(input, state_dim)?.sin(),
            Expr::Cos(e) => e.eval(input, state_dim)?.cos(),
        })
    }

    /// Every variable read by the expression, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        fn walk(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => out.push(*v),
                Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => walk(a, out),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
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
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                let op = if matches!(self, Expr::Add(..)) { "+" } else { "-" };
                write_child(f, l, false)?;
                f.write_str(op)?;
                write_child(f, r, r.precedence() <= 1 || r.precedence() == 3)
            }
            Expr::Mul(l, r) | Expr::Div(l, r) => {
                let op = if matches!(self, Expr::Mul(..)) { "*" } else { "/" };
                write_child(f, l, l.precedence() < 2)?;
                f.write_str(op)?;
                write_child(f, r, r.precedence() <= 3)
            }
            Expr::Pow(b, e) => {
                write_child(f, b, b.precedence() <= 4)?;
                f.write_str("^")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
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

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ExprError::Parse {
                position: start,
                message: format!("invalid number `{text}`"),
            })?;
            out.push((start, Token::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Token::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Token::RParen));
            i += 1;
        } else {
            return Err(ExprError::Parse {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    state_dim: usize,
    action_dim: usize,
    _src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse { position: self.position(), message: message.into() })
    }

    fn expression(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let position = self.position();
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if name == "sin" || name == "cos" {
                    if self.peek() != Some(&Token::LParen) {
                        return self.error(format!("expected `(` after `{name}`"));
                    }
                    self.pos += 1;
                    let arg = Box::new(self.expression()?);
                    self.expect_rparen()?;
                    return Ok(if name == "sin" { Expr::Sin(arg) } else { Expr::Cos(arg) });
                }
                self.variable(&name, position).map(Expr::Var)
            }
            Some(_) => self.error("expected a number, variable, function or `(`"),
            None => self.error("unexpected end of expression"),
        }
    }

    fn variable(&self, name: &str, position: usize) -> Result<Var, ExprError> {
        let unknown = || ExprError::UnknownIdentifier { name: name.to_string(), position };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        match kind {
            "x" if index < self.state_dim => Ok(Var::State(index)),
            "a" if index < self.action_dim => Ok(Var::Action(index)),
            _ => Err(unknown()),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Token::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            self.error("expected `)`")
        }
    }
}

/// Parse an expression over `x0..x{state_dim-1}` and `a0..a{action_dim-1}`.
pub fn parse(src: &str, state_dim: usize, action_dim: usize) -> Result<Expr, ExprError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0, end: src.len(), state_dim, action_dim, _src: src };
    let expr = parser.expression()?;
    if parser.pos != parser.tokens.len() {
        return parser.error("unexpected trailing input");
    }
    Ok(expr)
}
