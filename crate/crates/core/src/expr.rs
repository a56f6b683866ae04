//! Scalar coordinate expressions.
//!
//! Grammar (precedence `^` > unary minus > `* /` > `+ -`, `^` right-associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers are either chart coordinates or one of the functions
//! `sin cos tan exp log sqrt atan2 abs`. Numbers are decimal with an optional
//! exponent. Evaluation runs over [`Jet`]s, so values and all derivatives up to
//! the requested order come out of a single pass.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jet::{Jet, Jet2Scalar, JetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("point has {got} coordinates, chart has {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan2,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan2" => Func::Atan2,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan2 => "atan2",
            Func::Abs => "abs",
        }
    }

    fn arity(self) -> usize {
        if self == Func::Atan2 {
            2
        } else {
            1
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

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Abstract syntax tree. Coordinates are stored by index into the host chart.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression bound to a coordinate list.
#[derive(Clone, PartialEq)]
pub struct Expression {
    root: Node,
    coords: Arc<[String]>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({})", self)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.coords)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, n: &Node, coords: &[String]) -> fmt::Result {
    match n {
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(i) => write!(f, "{}", coords[*i]),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(f, a, coords)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            write!(f, "(")?;
            write_node(f, a, coords)?;
            write!(f, " {} ", op.symbol())?;
            write_node(f, b, coords)?;
            write!(f, ")")
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(f, a, coords)?;
            }
            write!(f, ")")
        }
    }
}

struct Sub<'a>(&'a Node, &'a [String]);

impl fmt::Display for Sub<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1)
    }
}

impl Expression {
    pub fn parse(source: &str, coords: &[impl AsRef<str>]) -> Result<Expression, ExprError> {
        let coords: Arc<[String]> = coords.iter().map(|c| c.as_ref().to_string()).collect();
        let tokens = lex(source)?;
        let mut p = Parser { tokens, pos: 0, coords: &coords };
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ExprError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("unexpected {}", t.kind.describe()),
            });
        }
        Ok(Expression { root, coords })
    }

    pub fn from_node(root: Node, coords: Arc<[String]>) -> Expression {
        Expression { root, coords }
    }

    pub fn constant(value: f64, coords: &[impl AsRef<str>]) -> Expression {
        Expression { root: Node::Num(value), coords: coords.iter().map(|c| c.as_ref().to_string()).collect() }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn is_zero_literal(&self) -> bool {
        self.root == Node::Num(0.0)
    }

    fn combine(&self, op: BinOp, other: &Expression) -> Expression {
        assert_eq!(self.coords, other.coords, "expressions over different charts");
        Expression {
            root: Node::Bin(op, Box::new(self.root.clone()), Box::new(other.root.clone())),
            coords: self.coords.clone(),
        }
    }

    pub fn add(&self, other: &Expression) -> Expression {
        self.combine(BinOp::Add, other)
    }

    pub fn sub(&self, other: &Expression) -> Expression {
        self.combine(BinOp::Sub, other)
    }

    pub fn mul(&self, other: &Expression) -> Expression {
        self.combine(BinOp::Mul, other)
    }

    pub fn neg(&self) -> Expression {
        Expression { root: Node::Neg(Box::new(self.root.clone())), coords: self.coords.clone() }
    }

    pub fn exp(&self) -> Expression {
        Expression { root: Node::Call(Func::Exp, vec![self.root.clone()]), coords: self.coords.clone() }
    }

    /// Evaluates over jets; `inputs[i]` stands for coordinate `i`.
    pub fn eval_jets(&self, inputs: &[Jet]) -> Result<Jet, ExprError> {
        if inputs.len() != self.coords.len() {
            return Err(ExprError::Dimension { expected: self.coords.len(), got: inputs.len() });
        }
        let template = inputs.first().cloned().unwrap_or_else(|| Jet::constant(0, 0, 0.0));
        eval_node(&self.root, inputs, &template, &self.coords)
    }

    /// Plain value at a point.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.coords.len() {
            return Err(ExprError::Dimension { expected: self.coords.len(), got: point.len() });
        }
        let inputs: Vec<Jet> = point.iter().map(|&v| Jet::constant(point.len(), 0, v)).collect();
        let template = Jet::constant(point.len(), 0, 0.0);
        eval_node(&self.root, &inputs, &template, &self.coords).map(|j| j.value())
    }

    /// Jet of the given order around `point`.
    pub fn jet_at(&self, point: &[f64], order: usize) -> Result<Jet, ExprError> {
        self.eval_jets(&Jet::seed(point, order))
    }

    pub fn evaluate_jet2(&self, point: &[f64]) -> Result<Jet2Scalar, ExprError> {
        Ok(Jet2Scalar::from(&self.jet_at(point, 2)?))
    }
}

fn domain(n: &Node, coords: &[String], e: JetError) -> ExprError {
    ExprError::Domain { subexpr: Sub(n, coords).to_string(), reason: e.to_string() }
}

fn is_constant(n: &Node) -> bool {
    match n {
        Node::Num(_) => true,
        Node::Var(_) => false,
        Node::Neg(a) => is_constant(a),
        Node::Bin(_, a, b) => is_constant(a) && is_constant(b),
        Node::Call(_, args) => args.iter().all(is_constant),
    }
}

fn eval_node(n: &Node, inputs: &[Jet], template: &Jet, coords: &[String]) -> Result<Jet, ExprError> {
    let ev = |m: &Node| eval_node(m, inputs, template, coords);
    Ok(match n {
        Node::Num(v) => template.lift_const(*v),
        Node::Var(i) => inputs[*i].clone(),
        Node::Neg(a) => -ev(a)?,
        Node::Bin(op, a, b) => {
            let x = ev(a)?;
            match op {
                BinOp::Add => x + ev(b)?,
                BinOp::Sub => x - ev(b)?,
                BinOp::Mul => x * ev(b)?,
                BinOp::Div => x.div(&ev(b)?).map_err(|e| domain(n, coords, e))?,
                BinOp::Pow => {
                    if is_constant(b) {
                        let r = ev(b)?.value();
                        x.powf(r).map_err(|e| domain(n, coords, e))?
                    } else {
                        x.pow(&ev(b)?).map_err(|e| domain(n, coords, e))?
                    }
                }
            }
        }
        Node::Call(f, args) => {
            let a = ev(&args[0])?;
            let r = match f {
                Func::Sin => Ok(a.sin()),
                Func::Cos => Ok(a.cos()),
                Func::Tan => a.tan(),
                Func::Exp => Ok(a.exp()),
                Func::Log => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
                Func::Atan2 => Jet::atan2(&a, &ev(&args[1])?),
            };
            r.map_err(|e| domain(n, coords, e))?
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("`{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                line: tl,
                col: tc,
                message: format!("malformed number `{text}`"),
            })?;
            if !v.is_finite() {
                return Err(ExprError::Syntax { line: tl, col: tc, message: format!("number `{text}` out of range") });
            }
            TokKind::Num(v)
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            TokKind::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
                '(' => TokKind::LParen,
                ')' => TokKind::RParen,
                ',' => TokKind::Comma,
                _ => {
                    return Err(ExprError::Syntax { line: tl, col: tc, message: format!("unexpected character `{c}`") })
                }
            }
        };
        col += i - start;
        out.push(Token { kind, line: tl, col: tc });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    coords: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eof_error(&self) -> ExprError {
        let (line, col) = self.tokens.last().map_or((1, 1), |t| (t.line, t.col + 1));
        ExprError::Syntax { line, col, message: "unexpected end of input".into() }
    }

    fn next(&mut self) -> Result<Token, ExprError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| self.eof_error())?;
        self.pos += 1;
        Ok(t)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { kind: TokKind::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn expect(&mut self, want: TokKind) -> Result<(), ExprError> {
        let t = self.next()?;
        if t.kind != want {
            return Err(ExprError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {}, found {}", want.describe(), t.kind.describe()),
            });
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let t = self.next()?;
        match t.kind {
            TokKind::Num(v) => Ok(Node::Num(v)),
            TokKind::LParen => {
                let e = self.expr()?;
                self.expect(TokKind::RParen)?;
                Ok(e)
            }
            TokKind::Ident(name) => {
                if matches!(self.peek(), Some(Token { kind: TokKind::LParen, .. })) {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownIdentifier {
                        name: name.clone(),
                        line: t.line,
                        col: t.col,
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token { kind: TokKind::Comma, .. })) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            line: t.line,
                            col: t.col,
                            message: format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                        });
                    }
                    Ok(Node::Call(func, args))
                } else {
                    self.coords
                        .iter()
                        .position(|c| *c == name)
                        .map(Node::Var)
                        .ok_or(ExprError::UnknownIdentifier { name, line: t.line, col: t.col })
                }
            }
            other => Err(ExprError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}
