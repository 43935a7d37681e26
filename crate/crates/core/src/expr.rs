//! Arithmetic expression language for coefficient fields.
//!
//! Expressions depend on the two coordinates `t` and `x`. Grammar, from
//! loosest to tightest binding:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?        right associative
//! exponent := '-' exponent | power
//! atom   := number | 't' | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Besides parsing and evaluation, expressions support symbolic
//! differentiation, which is how metric-derived coefficients (lapse
//! gradients, volume-ratio weights, wave-operator damping terms) are built.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
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
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

/// Expression tree. Subtrees are reference counted so derived expressions
/// share structure with their sources.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character {found:?} at byte {offset}")]
    UnexpectedChar { found: char, offset: usize },
    #[error("unexpected end of input at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("expected {expected} at byte {offset}")]
    Expected { expected: &'static str, offset: usize },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes 1 argument, got {got} (byte {offset})")]
    Arity {
        name: String,
        got: usize,
        offset: usize,
    },
    #[error("malformed number `{text}` at byte {offset}")]
    BadNumber { text: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::UnexpectedChar { offset, .. }
            | ParseError::UnexpectedEnd { offset }
            | ParseError::Expected { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::BadNumber { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{what} at (t={t}, x={x}) in `{expr}`")]
pub struct EvalError {
    pub what: &'static str,
    pub t: f64,
    pub x: f64,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
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
            let value: f64 = text.parse().map_err(|_| ParseError::BadNumber {
                text: text.to_string(),
                offset: start,
            })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                let found = src[start..].chars().next().unwrap_or(c);
                return Err(ParseError::UnexpectedChar {
                    found,
                    offset: start,
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.bump();
            let exponent = self.exponent()?;
            return Ok(Expr::Bin(BinOp::Pow, Arc::new(base), Arc::new(exponent)));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.bump();
            let inner = self.exponent()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            None => Err(ParseError::UnexpectedEnd { offset }),
            Some((Tok::Num(v), _)) => Ok(Expr::Num(v)),
            Some((Tok::LParen, _)) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some((Tok::Ident(name), at)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownIdentifier {
                        name: name.clone(),
                        offset: at,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect_rparen()?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity {
                            name,
                            got: args.len(),
                            offset: at,
                        });
                    }
                    return Ok(Expr::Call(func, Arc::new(args.pop().unwrap())));
                }
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "pi" => Ok(Expr::Pi),
                    _ if Func::from_name(&name).is_some() => Err(ParseError::Expected {
                        expected: "'(' after function name",
                        offset: at + name.len(),
                    }),
                    _ => Err(ParseError::UnknownIdentifier { name, offset: at }),
                }
            }
            Some((Tok::Op(c), at)) => Err(ParseError::UnexpectedChar { found: c, offset: at }),
            Some((Tok::RParen, at)) => Err(ParseError::UnexpectedChar {
                found: ')',
                offset: at,
            }),
            Some((Tok::Comma, at)) => Err(ParseError::UnexpectedChar {
                found: ',',
                offset: at,
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.bump() {
            Some((Tok::RParen, _)) => Ok(()),
            _ => Err(ParseError::Expected {
                expected: "')'",
                offset,
            }),
        }
    }
}

/// Parses an expression. Errors carry the byte offset of the offending token.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: source.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        let (tok, offset) = p.toks[p.pos].clone();
        let found = match tok {
            Tok::RParen => ')',
            Tok::LParen => '(',
            Tok::Comma => ',',
            Tok::Op(c) => c,
            Tok::Num(_) | Tok::Ident(_) => source[offset..].chars().next().unwrap_or('?'),
        };
        return Err(ParseError::UnexpectedChar { found, offset });
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

// Printing precedence levels.
const P_ADD: u8 = 1;
const P_MUL: u8 = 2;
const P_NEG: u8 = 3;
const P_POW: u8 = 4;
const P_ATOM: u8 = 5;

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => P_NEG,
            Expr::Num(_) | Expr::Pi | Expr::Var(_) | Expr::Call(..) => P_ATOM,
            Expr::Neg(_) => P_NEG,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => P_ADD,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => P_MUL,
            Expr::Bin(BinOp::Pow, ..) => P_POW,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, child: &Expr, min: u8) -> fmt::Result {
        let _ = self;
        if child.prec() < min {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    write!(f, "-{:?}", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Pi => f.write_str("pi"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                self.write_child(f, inner, P_NEG)
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Bin(op, l, r) => {
                let (sym, lmin, rmin) = match op {
                    BinOp::Add => (" + ", P_ADD, P_ADD + 1),
                    BinOp::Sub => (" - ", P_ADD, P_ADD + 1),
                    BinOp::Mul => ("*", P_MUL, P_MUL + 1),
                    BinOp::Div => ("/", P_MUL, P_MUL + 1),
                    BinOp::Pow => ("^", P_ATOM, P_NEG),
                };
                self.write_child(f, l, lmin)?;
                f.write_str(sym)?;
                // A negated exponent prints without parentheses; the grammar
                // admits unary minus directly after '^'.
                self.write_child(f, r, rmin)
            }
        }
    }
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        num(v)
    }

    pub fn t() -> Expr {
        Expr::Var(Var::T)
    }

    pub fn x() -> Expr {
        Expr::Var(Var::X)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Pi => Some(PI),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Expr::Num(c) if *c == v)
    }

    /// Evaluates with domain checking.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        let fail = |what: &'static str| EvalError {
            what,
            t,
            x,
            expr: self.to_string(),
        };
        self.eval_inner(t, x).map_err(fail)
    }

    fn eval_inner(&self, t: f64, x: f64) -> Result<f64, &'static str> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Neg(a) => -a.eval_inner(t, x)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval_inner(t, x)?;
                let b = r.eval_inner(t, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err("division by zero");
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if !v.is_finite() {
                            return Err("non-finite power");
                        }
                        v
                    }
                }
            }
            Expr::Call(func, arg) => {
                let a = arg.eval_inner(t, x)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err("log of non-positive value");
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err("sqrt of negative value");
                        }
                        a.sqrt()
                    }
                }
            }
        })
    }

    /// Evaluation without domain checks; domain violations surface as NaN.
    /// Used on hot paths after a field has been validated on its grid.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Neg(a) => -a.value(t, x),
            Expr::Bin(op, l, r) => {
                let a = l.value(t, x);
                let b = r.value(t, x);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b == 2.0 {
                            a * a
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Expr::Call(func, arg) => {
                let a = arg.value(t, x);
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Log => {
                        if a <= 0.0 {
                            f64::NAN
                        } else {
                            a.ln()
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            f64::NAN
                        } else {
                            a.sqrt()
                        }
                    }
                }
            }
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(v),
            Expr::Bin(_, l, r) => l.depends_on(v) || r.depends_on(v),
        }
    }

    /// Symbolic partial derivative with light simplification.
    pub fn diff(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return num(0.0);
        }
        match self {
            Expr::Num(_) | Expr::Pi => num(0.0),
            Expr::Var(w) => num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(v)),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.as_ref(), r.as_ref());
                match op {
                    BinOp::Add => add(l.diff(v), r.diff(v)),
                    BinOp::Sub => sub(l.diff(v), r.diff(v)),
                    BinOp::Mul => add(mul(l.diff(v), r.clone()), mul(l.clone(), r.diff(v))),
                    BinOp::Div => {
                        // (l' r - l r') / r^2
                        let numer = sub(mul(l.diff(v), r.clone()), mul(l.clone(), r.diff(v)));
                        div(numer, powi(r.clone(), 2.0))
                    }
                    BinOp::Pow => {
                        if let Some(c) = r.as_const() {
                            // c l^(c-1) l'
                            mul(mul(num(c), powi(l.clone(), c - 1.0)), l.diff(v))
                        } else {
                            // l^r (r' ln l + r l'/l)
                            let a = mul(r.diff(v), call(Func::Log, l.clone()));
                            let b = div(mul(r.clone(), l.diff(v)), l.clone());
                            mul(self.clone(), add(a, b))
                        }
                    }
                }
            }
            Expr::Call(func, arg) => {
                let inner = arg.diff(v);
                let a = arg.as_ref().clone();
                let outer = match func {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Tan => div(num(1.0), powi(call(Func::Cos, a), 2.0)),
                    Func::Exp => self.clone(),
                    Func::Log => div(num(1.0), a),
                    Func::Sqrt => div(num(0.5), self.clone()),
                    Func::Tanh => sub(num(1.0), powi(self.clone(), 2.0)),
                };
                mul(outer, inner)
            }
        }
    }
}

// Simplifying constructors. They fold constants and drop neutral elements,
// which keeps repeated derivatives of metric expressions small.

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => num(-v),
        Expr::Neg(inner) => inner.as_ref().clone(),
        other => Expr::Neg(Arc::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if matches!(a, Expr::Num(_)) && matches!(b, Expr::Num(_)) => num(x + y),
        _ if a.is_const(0.0) => b,
        _ if b.is_const(0.0) => a,
        _ => Expr::Bin(BinOp::Add, Arc::new(a), Arc::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        _ if b.is_const(0.0) => a,
        _ if a.is_const(0.0) => neg(b),
        _ => Expr::Bin(BinOp::Sub, Arc::new(a), Arc::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        _ if a.is_const(0.0) || b.is_const(0.0) => num(0.0),
        _ if a.is_const(1.0) => b,
        _ if b.is_const(1.0) => a,
        _ if a.is_const(-1.0) => neg(b),
        _ if b.is_const(-1.0) => neg(a),
        _ => Expr::Bin(BinOp::Mul, Arc::new(a), Arc::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) if *y != 0.0 => num(x / y),
        _ if a.is_const(0.0) => num(0.0),
        _ if b.is_const(1.0) => a,
        _ => Expr::Bin(BinOp::Div, Arc::new(a), Arc::new(b)),
    }
}

pub fn powi(a: Expr, p: f64) -> Expr {
    if p == 0.0 {
        return num(1.0);
    }
    if p == 1.0 {
        return a;
    }
    if let Expr::Num(v) = a {
        return num(v.powf(p));
    }
    Expr::Bin(BinOp::Pow, Arc::new(a), Arc::new(num(p)))
}

pub fn call(f: Func, a: Expr) -> Expr {
    if let Expr::Num(v) = a {
        let folded = Expr::Call(f, Arc::new(num(v))).value(0.0, 0.0);
        if folded.is_finite() {
            return num(folded);
        }
    }
    Expr::Call(f, Arc::new(a))
}

pub fn sqrt(a: Expr) -> Expr {
    call(Func::Sqrt, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn literal() {
        assert_eq!(p("1"), Expr::Num(1.0));
        assert_eq!(p("2.5e-1"), Expr::Num(0.25));
    }

    #[test]
    fn precedence() {
        assert_eq!(p("2+3*x").eval(0.0, 2.0).unwrap(), 8.0);
        assert_eq!(p("-2^2").eval(0.0, 0.0).unwrap(), -4.0);
        assert_eq!(p("2^3^2").eval(0.0, 0.0).unwrap(), 512.0);
        assert_eq!(p("2^-1").eval(0.0, 0.0).unwrap(), 0.5);
        assert_eq!(p("8/4/2").eval(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(p("1-2-3").eval(0.0, 0.0).unwrap(), -4.0);
    }

    #[test]
    fn functions_and_pi() {
        assert!((p("sin(pi/2)").eval(0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((p("tanh(t)").eval(0.3, 0.0).unwrap() - 0.3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_expr("1 + foo").unwrap_err();
        assert_eq!(e.offset(), 4);
        assert!(matches!(e, ParseError::UnknownIdentifier { .. }));
        let e = parse_expr("sin(1, 2)").unwrap_err();
        assert!(matches!(e, ParseError::Arity { got: 2, .. }));
        let e = parse_expr("(1 + 2").unwrap_err();
        assert_eq!(e.offset(), 6);
        let e = parse_expr("1 $ 2").unwrap_err();
        assert_eq!(e, ParseError::UnexpectedChar { found: '$', offset: 2 });
        assert!(matches!(parse_expr(""), Err(ParseError::UnexpectedEnd { offset: 0 })));
        assert!(parse_expr("1 2").is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(p("log(x)").eval(0.0, -1.0).is_err());
        assert!(p("sqrt(x)").eval(0.0, -1.0).is_err());
        assert!(p("1/x").eval(0.0, 0.0).is_err());
        assert!(p("sqrt(x)").value(0.0, -1.0).is_nan());
    }

    #[test]
    fn derivatives_match_closed_forms() {
        let e = p("exp(t)*sin(x) + x^3/t");
        let (t, x) = (0.7, 1.3);
        let dt = e.diff(Var::T).eval(t, x).unwrap();
        let dx = e.diff(Var::X).eval(t, x).unwrap();
        let dt_exact = t.exp() * x.sin() - x.powi(3) / (t * t);
        let dx_exact = t.exp() * x.cos() + 3.0 * x * x / t;
        assert!((dt - dt_exact).abs() < 1e-13);
        assert!((dx - dx_exact).abs() < 1e-13);
        let g = p("sqrt(1 + 0.5*sin(x))");
        let dg = g.diff(Var::X).eval(0.0, x).unwrap();
        assert!((dg - 0.25 * x.cos() / (1.0 + 0.5 * x.sin()).sqrt()).abs() < 1e-14);
        assert_eq!(p("t^2").diff(Var::X), Expr::Num(0.0));
    }

    #[test]
    fn print_roundtrip_examples() {
        for s in [
            "1",
            "2 + 3*x",
            "-(x + 1)",
            "(-x)^2",
            "2^-x",
            "2^3^2",
            "(2^3)^2",
            "1 - (2 - 3)",
            "a",
        ] {
            if let Ok(e) = parse_expr(s) {
                assert_eq!(parse_expr(&e.to_string()).unwrap(), e, "{s}");
            }
        }
    }
}
