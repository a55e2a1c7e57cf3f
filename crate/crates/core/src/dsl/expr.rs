//! Scalar coefficient expressions: parsing, evaluation, symbolic
//! differentiation and printing.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 't' | 'x'<k> | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt | abs | min | max
//! ```
//!
//! Exponents must be constant; they are folded to a real at parse time so
//! that differentiation stays closed over the function set.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Node = Arc<Expr>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    /// Zero-based spatial coordinate; printed as `x{i+1}`.
    X(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Node),
    Bin(BinOp, Node, Node),
    Pow(Node, f64),
    Call(Func, Vec<Node>),
}

impl Expr {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(a, c) => {
                let a = a.eval(t, x);
                if c.fract() == 0.0 && c.abs() <= 64.0 {
                    a.powi(*c as i32)
                } else {
                    a.powf(*c)
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(t, x);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(t, x)),
                    Func::Max => a.max(args[1].eval(t, x)),
                }
            }
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Pow(a, _) => a.depends_on(v),
            Expr::Bin(_, a, b) => a.depends_on(v) || b.depends_on(v),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(v)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args) => args.iter().all(|a| a.is_constant()),
        }
    }

    /// Highest spatial variable index used, plus one.
    pub fn spatial_extent(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(Var::T) => 0,
            Expr::Var(Var::X(i)) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) => a.spatial_extent(),
            Expr::Bin(_, a, b) => a.spatial_extent().max(b.spatial_extent()),
            Expr::Call(_, args) => args.iter().map(|a| a.spatial_extent()).max().unwrap_or(0),
        }
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }
}

/// Constructors with light constant folding, used by the differentiator and
/// by code that assembles expressions programmatically.
pub mod build {
    use super::*;

    pub fn num(v: f64) -> Node {
        Arc::new(Expr::Num(v))
    }

    pub fn x(i: usize) -> Node {
        Arc::new(Expr::Var(Var::X(i)))
    }

    pub fn t() -> Node {
        Arc::new(Expr::Var(Var::T))
    }

    pub fn is_zero(a: &Node) -> bool {
        a.as_num() == Some(0.0)
    }

    fn is_one(a: &Node) -> bool {
        a.as_num() == Some(1.0)
    }

    pub fn neg(a: Node) -> Node {
        match &*a {
            Expr::Num(v) => num(-v),
            Expr::Neg(inner) => inner.clone(),
            _ => Arc::new(Expr::Neg(a)),
        }
    }

    pub fn add(a: Node, b: Node) -> Node {
        match (a.as_num(), b.as_num()) {
            (Some(p), Some(q)) => num(p + q),
            (Some(p), _) if p == 0.0 => b,
            (_, Some(q)) if q == 0.0 => a,
            _ => Arc::new(Expr::Bin(BinOp::Add, a, b)),
        }
    }

    pub fn sub(a: Node, b: Node) -> Node {
        match (a.as_num(), b.as_num()) {
            (Some(p), Some(q)) => num(p - q),
            (Some(p), _) if p == 0.0 => neg(b),
            (_, Some(q)) if q == 0.0 => a,
            _ => Arc::new(Expr::Bin(BinOp::Sub, a, b)),
        }
    }

    pub fn mul(a: Node, b: Node) -> Node {
        if is_zero(&a) || is_zero(&b) {
            return num(0.0);
        }
        match (a.as_num(), b.as_num()) {
            (Some(p), Some(q)) => num(p * q),
            _ if is_one(&a) => b,
            _ if is_one(&b) => a,
            _ => Arc::new(Expr::Bin(BinOp::Mul, a, b)),
        }
    }

    pub fn div(a: Node, b: Node) -> Node {
        if is_zero(&a) {
            return num(0.0);
        }
        match (a.as_num(), b.as_num()) {
            (Some(p), Some(q)) => num(p / q),
            _ if is_one(&b) => a,
            _ => Arc::new(Expr::Bin(BinOp::Div, a, b)),
        }
    }

    pub fn pow(a: Node, c: f64) -> Node {
        if c == 0.0 {
            return num(1.0);
        }
        if c == 1.0 {
            return a;
        }
        match a.as_num() {
            Some(v) => num(v.powf(c)),
            None => Arc::new(Expr::Pow(a, c)),
        }
    }

    pub fn call(f: Func, args: Vec<Node>) -> Node {
        if args.iter().all(|a| a.as_num().is_some()) {
            let v = Expr::Call(f, args).eval(0.0, &[]);
            return num(v);
        }
        Arc::new(Expr::Call(f, args))
    }

    pub fn sum(terms: impl IntoIterator<Item = Node>) -> Node {
        terms.into_iter().fold(num(0.0), add)
    }
}

use build::*;

/// Symbolic partial derivative with respect to `v`.
pub fn diff(e: &Node, v: Var) -> Node {
    if !e.depends_on(v) {
        return num(0.0);
    }
    match &**e {
        Expr::Num(_) => num(0.0),
        Expr::Var(w) => num(if *w == v { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff(a, v)),
        Expr::Bin(op, a, b) => {
            let (da, db) = (diff(a, v), diff(b, v));
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, b.clone()), mul(a.clone(), db)),
                BinOp::Div => sub(
                    div(da, b.clone()),
                    div(mul(a.clone(), db), pow(b.clone(), 2.0)),
                ),
            }
        }
        Expr::Pow(a, c) => mul(mul(num(*c), pow(a.clone(), c - 1.0)), diff(a, v)),
        Expr::Call(f, args) => {
            let a = &args[0];
            let da = diff(a, v);
            match f {
                Func::Sin => mul(call(Func::Cos, vec![a.clone()]), da),
                Func::Cos => neg(mul(call(Func::Sin, vec![a.clone()]), da)),
                Func::Exp => mul(e.clone(), da),
                Func::Log => div(da, a.clone()),
                Func::Sqrt => div(da, mul(num(2.0), e.clone())),
                Func::Abs => mul(da, div(a.clone(), e.clone())),
                Func::Min | Func::Max => {
                    // min/max(a, b) = (a + b -/+ |a - b|) / 2
                    let b = &args[1];
                    let db = diff(b, v);
                    let gap = sub(a.clone(), b.clone());
                    let kink = mul(
                        sub(da.clone(), db.clone()),
                        div(gap.clone(), call(Func::Abs, vec![gap])),
                    );
                    let mean = add(da, db);
                    let s = if *f == Func::Min { sub(mean, kink) } else { add(mean, kink) };
                    mul(num(0.5), s)
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Pow(a, c) => write!(f, "({a} ^ {})", Expr::Num(*c)),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
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
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
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
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &lx.src[start..i];
                let v: f64 = text.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else if "+-*/^(),".contains(c) {
                lx.toks.push((Tok::Sym(c), i));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or(c);
                return Err(Error::Syntax {
                    position: i,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> Error {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        };
        Error::Syntax {
            position: self.offset(),
            message: format!("expected {what}, found {found}"),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Arc::new(Expr::Bin(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Arc::new(Expr::Bin(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            let inner = self.unary()?;
            // Negative literals fold so printing and reparsing agree.
            return Ok(match &*inner {
                Expr::Num(v) => Arc::new(Expr::Num(-v)),
                _ => Arc::new(Expr::Neg(inner)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let at = self.offset();
            let exponent = self.unary()?;
            if !exponent.is_constant() {
                return Err(Error::Syntax {
                    position: at,
                    message: "exponent must be a constant expression".into(),
                });
            }
            let c = exponent.eval(0.0, &[]);
            if !c.is_finite() {
                return Err(Error::Syntax {
                    position: at,
                    message: "exponent is not a finite real".into(),
                });
            }
            return Ok(Arc::new(Expr::Pow(base, c)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Arc::new(Expr::Num(v)))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.expected("`)`"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::Sym('(') {
                    let func = Func::from_name(&name).ok_or_else(|| Error::Syntax {
                        position: at,
                        message: format!(
                            "unknown function `{name}` (expected one of sin, cos, exp, log, sqrt, abs, min, max)"
                        ),
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return Err(self.expected("`,` or `)`"));
                    }
                    if args.len() != func.arity() {
                        return Err(Error::Syntax {
                            position: at,
                            message: format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Arc::new(Expr::Call(func, args)));
                }
                self.variable(&name, at)
            }
            _ => Err(self.expected("number, variable, function or `(`")),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Node> {
        if name == "t" {
            return Ok(Arc::new(Expr::Var(Var::T)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if let Ok(k) = digits.parse::<usize>() {
                if (1..=self.dim).contains(&k) && !digits.starts_with('0') {
                    return Ok(Arc::new(Expr::Var(Var::X(k - 1))));
                }
            }
        }
        Err(Error::UnboundVariable {
            name: name.to_string(),
            position: at,
        })
    }
}

/// Parse `src` as a coefficient expression over `t, x1, ..., x{dim}`.
pub fn parse_expr(src: &str, dim: usize) -> Result<Node> {
    let toks = Lexer::run(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.expected("operator or end of input"));
    }
    Ok(e)
}
