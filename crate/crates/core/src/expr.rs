//! A small arithmetic expression language in one variable `x`.
//!
//! Grammar (highest precedence last):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | 'x' | 'pi' | 'e' | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! With [`parse_with`], other identifiers may name parameters bound to numbers.
//!
//! Supported calls: `exp, log, sqrt, abs, sgn` (one argument) and `max, min`
//! (two arguments).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("`{name}` expects {expected} argument(s), got {got} (position {pos})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        pos: usize,
    },
    #[error("domain error in `{expr}` at x = {x}: {msg}")]
    Domain { expr: String, x: f64, msg: String },
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sgn,
    Max,
    Min,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sgn" => Func::Sgn,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sgn => "sgn",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Const(Constant),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Parse `source` into an expression tree.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    parse_with(source, &BTreeMap::new())
}

/// Parse with named parameters; each occurrence of a name in `params` becomes
/// its numeric value. `x`, `pi`, `e` and function names cannot be rebound.
pub fn parse_with(source: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        params,
    };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.error("unexpected end of input")),
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            return self.ident();
        }
        Err(self.error(format!("unexpected `{}`", c as char)))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
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
        let text = std::str::from_utf8(&s[start..i]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(Expr::Num(v))
            }
            Err(_) => Err(ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_alphanumeric() || s[i] == b'_') {
            i += 1;
        }
        let name = std::str::from_utf8(&s[start..i]).expect("ascii");
        self.pos = i;
        match name {
            "x" => return Ok(Expr::Var),
            "pi" => return Ok(Expr::Const(Constant::Pi)),
            "e" => return Ok(Expr::Const(Constant::E)),
            _ => {}
        }
        if Func::from_name(name).is_none() {
            if let Some(&v) = self.params.get(name) {
                return Ok(Expr::Num(v));
            }
        }
        let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownIdent {
            name: name.to_string(),
            pos: start,
        })?;
        if !self.eat(b'(') {
            return Err(self.error(format!("expected `(` after `{name}`")));
        }
        let mut args = Vec::new();
        if !self.eat(b')') {
            loop {
                args.push(self.expr()?);
                if self.eat(b',') {
                    continue;
                }
                if self.eat(b')') {
                    break;
                }
                return Err(self.error("expected `,` or `)`"));
            }
        }
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                name: name.to_string(),
                expected: func.arity(),
                got: args.len(),
                pos: start,
            });
        }
        Ok(Expr::Call(func, args))
    }
}

impl Expr {
    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var => Ok(x),
            Expr::Const(c) => Ok(c.value()),
            Expr::Neg(e) => Ok(-e.eval(x)?),
            Expr::Bin(op, l, r) => {
                let l = l.eval(x)?;
                let r = r.eval(x)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => {
                        if r == 0.0 {
                            Err(self.domain(x, "division by zero"))
                        } else {
                            Ok(l / r)
                        }
                    }
                    BinOp::Pow => {
                        let v = l.powf(r);
                        if v.is_nan() && !l.is_nan() && !r.is_nan() {
                            Err(self.domain(x, "negative base with non-integer exponent"))
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
            Expr::Call(f, args) => {
                let u = args[0].eval(x)?;
                match f {
                    Func::Exp => Ok(u.exp()),
                    Func::Log => {
                        if u <= 0.0 {
                            Err(self.domain(x, "log of non-positive argument"))
                        } else {
                            Ok(u.ln())
                        }
                    }
                    Func::Sqrt => {
                        if u < 0.0 {
                            Err(self.domain(x, "sqrt of negative argument"))
                        } else {
                            Ok(u.sqrt())
                        }
                    }
                    Func::Abs => Ok(u.abs()),
                    Func::Sgn => Ok(if u > 0.0 {
                        1.0
                    } else if u < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }),
                    Func::Max => Ok(u.max(args[1].eval(x)?)),
                    Func::Min => Ok(u.min(args[1].eval(x)?)),
                }
            }
        }
    }

    fn domain(&self, x: f64, msg: &str) -> ExprError {
        ExprError::Domain {
            expr: self.to_string(),
            x,
            msg: msg.to_string(),
        }
    }

    /// Collect the arguments whose zero crossings make the expression non-smooth:
    /// `u` for `abs(u)` and `sgn(u)`, `u - v` for `max(u, v)` and `min(u, v)`.
    fn switching_args(&self, out: &mut Vec<Expr>) {
        match self {
            Expr::Num(_) | Expr::Var | Expr::Const(_) => {}
            Expr::Neg(e) => e.switching_args(out),
            Expr::Bin(_, l, r) => {
                l.switching_args(out);
                r.switching_args(out);
            }
            Expr::Call(f, args) => {
                for a in args {
                    a.switching_args(out);
                }
                match f {
                    Func::Abs | Func::Sgn => out.push(args[0].clone()),
                    Func::Max | Func::Min => out.push(Expr::Bin(
                        BinOp::Sub,
                        Box::new(args[0].clone()),
                        Box::new(args[1].clone()),
                    )),
                    _ => {}
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; re-parses to an equivalent tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var => f.write_str("x"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

const KINK_SCAN_POINTS: usize = 4096;
const KINK_TOL: f64 = 1e-12;

/// Points in `[lo, hi]` where an `abs`, `sgn`, `max` or `min` switches branch.
///
/// Each switching argument is scanned on a uniform grid and every sign change
/// is refined by bisection. Results are sorted and merged within `1e-12`.
pub fn kink_points(e: &Expr, lo: f64, hi: f64) -> Vec<f64> {
    let mut args = Vec::new();
    e.switching_args(&mut args);
    let mut kinks = Vec::new();
    let n = KINK_SCAN_POINTS;
    let step = (hi - lo) / (n - 1) as f64;
    for arg in &args {
        let f = |x: f64| arg.eval(x).ok().filter(|v| v.is_finite());
        let grid: Vec<(f64, Option<f64>)> = (0..n)
            .map(|i| {
                let x = if i == n - 1 { hi } else { lo + step * i as f64 };
                (x, f(x))
            })
            .collect();
        for i in 0..n - 1 {
            let (x0, f0) = grid[i];
            let (x1, f1) = grid[i + 1];
            let (Some(f0), Some(f1)) = (f0, f1) else {
                continue;
            };
            if f0 == 0.0 {
                // a zero on a grid node counts only if the sign flips across it
                let left = if i > 0 { grid[i - 1].1 } else { None };
                if let Some(fl) = left {
                    if fl * f1 < 0.0 {
                        kinks.push(x0);
                    }
                }
                continue;
            }
            if f0 * f1 < 0.0 {
                kinks.push(bisect_sign_change(&f, x0, x1, f0));
            }
        }
    }
    kinks.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::with_capacity(kinks.len());
    for k in kinks {
        match out.last() {
            Some(&last) if (k - last).abs() <= KINK_TOL => {}
            _ => out.push(k),
        }
    }
    out
}

fn bisect_sign_change(f: &impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let sign_lo = f_lo.signum();
    while hi - lo > KINK_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match f(mid) {
            Some(0.0) => return mid,
            Some(v) if v.signum() == sign_lo => lo = mid,
            Some(_) => hi = mid,
            None => break,
        }
    }
    0.5 * (lo + hi)
}
