//! Arithmetic expressions and the line-oriented system source format.
//!
//! Grammar (statements end at `;` or a newline, `#` starts a comment):
//!
//! ```text
//! statement := "dim" "=" INT
//!            | XVAR "'" "=" rhs
//!            | YVAR "=" expr
//!            | "U" "=" control_set
//! rhs       := expr | "{" expr ("," expr)* "}" | interval "samples" INT
//! control_set := "{" cpoint ("," cpoint)* "}"
//!            | interval (("x" | "*") interval)* "samples" INT
//! cpoint    := expr | "(" expr ("," expr)+ ")"
//! interval  := "[" expr "," expr "]"
//! expr      := term (("+" | "-") term)*
//! term      := unary (("*" | "/") unary)*
//! unary     := "-" unary | power
//! power     := atom ("^" unary)?
//! atom      := NUMBER | "t" | XVAR | UVAR | FUNC "(" expr ")" | "(" expr ")"
//! ```
//!
//! `XVAR` is `x1`, `x2`, ...; `UVAR` is `u1`, `u2`, ... with `u` an alias for `u1`;
//! `YVAR` is `y1`, `y2`, ...; `FUNC` is one of `sin`, `cos`, `exp`, `abs`.
//! Expressions inside control sets and intervals must be constant.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    /// 0-based state coordinate.
    X(usize),
    /// 0-based control coordinate.
    U(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::U(i)) => u[*i],
            Expr::Neg(e) => -e.eval(t, x, u),
            Expr::Bin(op, a, b) => {
                let a = a.eval(t, x, u);
                let b = b.eval(t, x, u);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(t, x, u);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }

    /// Visits every variable reference.
    pub fn vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(e) | Expr::Call(_, e) => e.vars(out),
            Expr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    pub fn depends_on_t(&self) -> bool {
        let mut v = Vec::new();
        self.vars(&mut v);
        v.contains(&Var::T)
    }
}

// small integer exponents multiply out so that x^2 is exactly x*x
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 16.0 {
        let n = b.abs() as i32;
        let mut r = 1.0;
        for _ in 0..n {
            r *= a;
        }
        if b < 0.0 {
            1.0 / r
        } else {
            r
        }
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::U(i)) => write!(f, "u{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                };
                write!(f, "{name}({e})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
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
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Prime,
    Times,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str, line: usize, col0: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' | '−' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '\'' => Some(Tok::Prime),
            '×' => Some(Tok::Times),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, line, column });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
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
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                line,
                column,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                line,
                column,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(text),
                line,
                column,
            });
            continue;
        }
        return Err(Error::Parse {
            line,
            column,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col0 + chars.len(),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn indexed(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let i: usize = rest.parse().ok()?;
    (i >= 1).then_some(i)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let t = self.here();
        Err(Error::Parse {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn at_end(&self) -> bool {
        *self.peek() == Tok::End
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                if let Some(f) = func {
                    self.bump();
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(f, Box::new(e)));
                }
                let var = if name == "t" {
                    Some(Var::T)
                } else if name == "u" {
                    Some(Var::U(0))
                } else if let Some(i) = indexed(&name, 'x') {
                    Some(Var::X(i - 1))
                } else {
                    indexed(&name, 'u').map(|i| Var::U(i - 1))
                };
                match var {
                    Some(v) => {
                        self.bump();
                        Ok(Expr::Var(v))
                    }
                    None => self.err(format!("unknown identifier `{name}`")),
                }
            }
            Tok::End => self.err("unexpected end of expression"),
            _ => self.err("expected a number, variable, function or `(`"),
        }
    }

    fn constant(&mut self) -> Result<f64> {
        let t = self.here().clone();
        let e = self.expr()?;
        let mut vars = Vec::new();
        e.vars(&mut vars);
        if !vars.is_empty() {
            return Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: "expected a constant expression".into(),
            });
        }
        Ok(e.eval(0.0, &[], &[]))
    }

    fn integer(&mut self) -> Result<usize> {
        match self.peek().clone() {
            Tok::Num(v) if v.fract() == 0.0 && v >= 0.0 => {
                self.bump();
                Ok(v as usize)
            }
            _ => self.err("expected a nonnegative integer"),
        }
    }

    fn interval(&mut self) -> Result<(f64, f64)> {
        self.expect(Tok::LBracket, "`[`")?;
        let a = self.constant()?;
        self.expect(Tok::Comma, "`,`")?;
        let b = self.constant()?;
        self.expect(Tok::RBracket, "`]`")?;
        if b < a {
            return self.err(format!("empty interval [{a}, {b}]"));
        }
        Ok((a, b))
    }

    fn samples(&mut self) -> Result<usize> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "samples" => {
                self.bump();
                let n = self.integer()?;
                if n == 0 {
                    return self.err("sample count must be positive");
                }
                Ok(n)
            }
            _ => self.err("expected `samples N` after interval"),
        }
    }
}

/// Right-hand side of one state coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum CoordRhs {
    Expr(Expr),
    /// Finite list of admissible values.
    Choice(Vec<Expr>),
    /// Uniformly sampled interval of admissible values.
    Interval { lo: f64, hi: f64, samples: usize },
}

/// Declared control set.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSpec {
    Points(Vec<Vec<f64>>),
    Box {
        ranges: Vec<(f64, f64)>,
        samples: usize,
    },
}

/// Statement-level contents of a system source, with source positions.
#[derive(Clone, Debug, Default)]
pub struct SystemSource {
    pub dim: Option<(usize, usize, usize)>,
    /// (0-based coordinate, rhs, line, column)
    pub equations: Vec<(usize, CoordRhs, usize, usize)>,
    pub outputs: Vec<(usize, Expr, usize, usize)>,
    pub controls: Option<(ControlSpec, usize, usize)>,
}

/// Uniform samples of `[lo, hi]`; a single sample sits at the midpoint.
pub fn uniform_samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Parses a single arithmetic expression.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(src, 1, 1)?,
        pos: 0,
    };
    let e = p.expr()?;
    if !p.at_end() {
        return p.err("trailing input after expression");
    }
    Ok(e)
}

/// Splits the source into statements and parses each one.
pub fn parse_source(src: &str) -> Result<SystemSource> {
    let mut out = SystemSource::default();
    for (li, raw_line) in src.lines().enumerate() {
        let line_no = li + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let mut col = 1;
        for piece in line.split(';') {
            let width = piece.chars().count();
            if !piece.trim().is_empty() {
                parse_statement(piece, line_no, col, &mut out)?;
            }
            col += width + 1;
        }
    }
    Ok(out)
}

fn parse_statement(piece: &str, line: usize, col: usize, out: &mut SystemSource) -> Result<()> {
    let mut p = Parser {
        toks: lex(piece, line, col)?,
        pos: 0,
    };
    let head = p.here().clone();
    let name = match &head.tok {
        Tok::Ident(n) => n.clone(),
        _ => return p.err("expected `dim`, `U`, `xi'` or `yi` at start of statement"),
    };
    p.bump();
    if name == "dim" {
        p.expect(Tok::Eq, "`=`")?;
        let n = p.integer()?;
        if n == 0 {
            return Err(Error::Parse {
                line,
                column: head.column,
                message: "dim must be at least 1".into(),
            });
        }
        out.dim = Some((n, head.line, head.column));
    } else if name == "U" {
        p.expect(Tok::Eq, "`=`")?;
        let spec = control_set(&mut p)?;
        if out.controls.is_some() {
            return Err(Error::Parse {
                line,
                column: head.column,
                message: "control set declared twice".into(),
            });
        }
        out.controls = Some((spec, head.line, head.column));
    } else if let Some(i) = indexed(&name, 'x') {
        p.expect(Tok::Prime, "`'` after state variable")?;
        p.expect(Tok::Eq, "`=`")?;
        let rhs = match p.peek() {
            Tok::LBrace => {
                p.bump();
                let mut items = vec![p.expr()?];
                while *p.peek() == Tok::Comma {
                    p.bump();
                    items.push(p.expr()?);
                }
                p.expect(Tok::RBrace, "`}`")?;
                CoordRhs::Choice(items)
            }
            Tok::LBracket => {
                let (lo, hi) = p.interval()?;
                let samples = p.samples()?;
                CoordRhs::Interval { lo, hi, samples }
            }
            _ => CoordRhs::Expr(p.expr()?),
        };
        out.equations.push((i - 1, rhs, head.line, head.column));
    } else if let Some(i) = indexed(&name, 'y') {
        p.expect(Tok::Eq, "`=`")?;
        let e = p.expr()?;
        out.outputs.push((i - 1, e, head.line, head.column));
    } else {
        return Err(Error::Parse {
            line: head.line,
            column: head.column,
            message: format!("unknown statement `{name}`"),
        });
    }
    if !p.at_end() {
        return p.err("trailing input after statement");
    }
    Ok(())
}

fn control_set(p: &mut Parser) -> Result<ControlSpec> {
    match p.peek() {
        Tok::LBrace => {
            p.bump();
            let mut pts = vec![control_point(p)?];
            while *p.peek() == Tok::Comma {
                p.bump();
                pts.push(control_point(p)?);
            }
            p.expect(Tok::RBrace, "`}`")?;
            let m = pts[0].len();
            if pts.iter().any(|q| q.len() != m) {
                return p.err("control points have different dimensions");
            }
            Ok(ControlSpec::Points(pts))
        }
        Tok::LBracket => {
            let mut ranges = vec![p.interval()?];
            loop {
                match p.peek() {
                    Tok::Star | Tok::Times => {
                        p.bump();
                    }
                    Tok::Ident(s) if s == "x" => {
                        p.bump();
                    }
                    _ => break,
                }
                ranges.push(p.interval()?);
            }
            let samples = p.samples()?;
            Ok(ControlSpec::Box { ranges, samples })
        }
        _ => p.err("expected `{` or `[` for control set"),
    }
}

fn control_point(p: &mut Parser) -> Result<Vec<f64>> {
    // a parenthesized list with a comma is a tuple; otherwise a scalar expression
    if *p.peek() == Tok::LParen {
        let save = p.pos;
        p.bump();
        let first = p.constant()?;
        if *p.peek() == Tok::Comma {
            let mut v = vec![first];
            while *p.peek() == Tok::Comma {
                p.bump();
                v.push(p.constant()?);
            }
            p.expect(Tok::RParen, "`)`")?;
            return Ok(v);
        }
        p.pos = save;
    }
    Ok(vec![p.constant()?])
}
