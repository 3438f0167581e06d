//! Potential expressions such as `x1^2 + 2*x2^2 + 4*x3^2`.
//!
//! Grammar (recursive descent):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' digits | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | abs
//! ```
//!
//! `^` binds tighter than unary minus and is right associative, so `-2^2 = -4`
//! and `2^3^2 = 2^9`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    /// `offset` is the byte position of the operator in the source.
    Bin {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
        offset: usize,
    },
}

/// A parsed expression in the coordinates `x1..x_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("expression dimension {dim} not in 1..=3")));
        }
        let mut p = Parser { src: src.as_bytes(), pos: 0, dim };
        p.skip_ws();
        if p.pos >= p.src.len() {
            return Err(Error::Syntax { offset: 0, msg: "empty expression".into() });
        }
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self { root, dim })
    }

    /// The constant expression `c`.
    pub fn constant(c: f64, dim: usize) -> Self {
        Self { root: Node::Num(c), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() < self.dim {
            return Err(Error::Usage(format!(
                "expression in {} variables evaluated at a point of length {}",
                self.dim,
                point.len()
            )));
        }
        eval_node(&self.root, point)
    }

    /// True if the expression is a literal constant (no variables).
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(c) => Some(c),
            _ => None,
        }
    }
}

fn eval_node(n: &Node, x: &[f64]) -> Result<f64> {
    Ok(match n {
        Node::Num(c) => *c,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Call(f, a) => f.apply(eval_node(a, x)?),
        Node::Bin { op, lhs, rhs, offset } => {
            let (a, b) = (eval_node(lhs, x)?, eval_node(rhs, x)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(Error::Eval {
                            offset: *offset,
                            msg: "division by zero".into(),
                        });
                    }
                    a / b
                }
                BinOp::Pow => {
                    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax { offset: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            let offset = self.pos;
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), offset };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            let offset = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), offset };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            let offset = self.pos;
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin { op: BinOp::Pow, lhs: Box::new(base), rhs: Box::new(exp), offset });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Syntax { offset: start, msg: format!("malformed number `{text}`") })?;
        self.pos = i;
        Ok(Node::Num(v))
    }

    fn identifier(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let name = std::str::from_utf8(&s[start..i]).unwrap();
        self.pos = i;
        if let Some(idx) = name.strip_prefix('x').filter(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit())) {
            let k: usize = idx.parse().unwrap_or(usize::MAX);
            if k == 0 || k > self.dim {
                return Err(Error::Syntax {
                    offset: start,
                    msg: format!("variable `{name}` exceeds dimension {}", self.dim),
                });
            }
            return Ok(Node::Var(k - 1));
        }
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            _ => {
                return Err(Error::Syntax {
                    offset: start,
                    msg: format!("unknown identifier `{name}`"),
                })
            }
        };
        if self.peek() != Some(b'(') {
            return Err(self.err("expected '(' after function name"));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return Err(self.err("expected ')'"));
        }
        self.pos += 1;
        Ok(Node::Call(func, Box::new(arg)))
    }
}

/// Fully parenthesized form; reparses to an expression with identical values.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match n {
        Node::Num(c) => {
            if *c < 0.0 {
                write!(f, "(-{:?})", -c)
            } else {
                write!(f, "{c:?}")
            }
        }
        Node::Var(i) => write!(f, "x{}", i + 1),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Bin { op, lhs, rhs, .. } => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            write_node(lhs, f)?;
            write!(f, "{sym}")?;
            write_node(rhs, f)?;
            write!(f, ")")
        }
    }
}
