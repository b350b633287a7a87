//! Arithmetic expressions over state coordinates.
//!
//! Small language for user-defined potentials, observables and perturbations:
//! numbers, named coordinates, `+ - * / ^`, parentheses, and the unary
//! functions `exp log sqrt abs sin cos tanh cosh sinh`. Expressions are parsed
//! once at startup into an AST that supports evaluation and exact symbolic
//! differentiation; derivative trees are constant-folded so repeated evaluation
//! stays cheap.

use crate::{DevrateError, Result};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tanh,
    Cosh,
    Sinh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "cosh" => Func::Cosh,
            "sinh" => Func::Sinh,
            _ => return None,
        })
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tanh => x.tanh(),
            Func::Cosh => x.cosh(),
            Func::Sinh => x.sinh(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
        }
    }
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Call(f, a) => f.eval(a.eval(x)),
        }
    }

    /// Exact partial derivative with respect to coordinate `var`.
    /// `abs` is differentiated as sign(x), undefined at 0 like the function itself.
    pub fn diff(&self, var: usize) -> Expr {
        use Expr::*;
        let d = match self {
            Num(_) => Num(0.0),
            Var(i) => Num(if *i == var { 1.0 } else { 0.0 }),
            Add(a, b) => Add(Arc::new(a.diff(var)), Arc::new(b.diff(var))),
            Sub(a, b) => Sub(Arc::new(a.diff(var)), Arc::new(b.diff(var))),
            Mul(a, b) => Add(
                Arc::new(Mul(Arc::new(a.diff(var)), b.clone())),
                Arc::new(Mul(a.clone(), Arc::new(b.diff(var)))),
            ),
            Div(a, b) => Div(
                Arc::new(Sub(
                    Arc::new(Mul(Arc::new(a.diff(var)), b.clone())),
                    Arc::new(Mul(a.clone(), Arc::new(b.diff(var)))),
                )),
                Arc::new(Mul(b.clone(), b.clone())),
            ),
            Pow(a, b) => match b.as_ref() {
                // constant exponent: c a^(c-1) a'
                Num(c) => Mul(
                    Arc::new(Mul(
                        Arc::new(Num(*c)),
                        Arc::new(Pow(a.clone(), Arc::new(Num(c - 1.0)))),
                    )),
                    Arc::new(a.diff(var)),
                ),
                // general: a^b (b' log a + b a'/a)
                _ => Mul(
                    Arc::new(Pow(a.clone(), b.clone())),
                    Arc::new(Add(
                        Arc::new(Mul(Arc::new(b.diff(var)), Arc::new(Call(Func::Log, a.clone())))),
                        Arc::new(Div(Arc::new(Mul(b.clone(), Arc::new(a.diff(var)))), a.clone())),
                    )),
                ),
            },
            Neg(a) => Neg(Arc::new(a.diff(var))),
            Call(f, a) => {
                let inner = a.diff(var);
                let outer = match f {
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => Div(Arc::new(Num(1.0)), a.clone()),
                    Func::Sqrt => Div(
                        Arc::new(Num(0.5)),
                        Arc::new(Call(Func::Sqrt, a.clone())),
                    ),
                    Func::Abs => Div(a.clone(), Arc::new(Call(Func::Abs, a.clone()))),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Arc::new(Call(Func::Sin, a.clone()))),
                    // tanh' = 1 - tanh^2
                    Func::Tanh => Sub(
                        Arc::new(Num(1.0)),
                        Arc::new(Pow(Arc::new(Call(Func::Tanh, a.clone())), Arc::new(Num(2.0)))),
                    ),
                    Func::Cosh => Call(Func::Sinh, a.clone()),
                    Func::Sinh => Call(Func::Cosh, a.clone()),
                };
                Mul(Arc::new(outer), Arc::new(inner))
            }
        };
        d.fold()
    }

    /// Constant folding plus identity simplifications (x+0, x*1, x*0, x^1).
    pub fn fold(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Var(_) => self.clone(),
            Add(a, b) => match (a.fold(), b.fold()) {
                (Num(x), Num(y)) => Num(x + y),
                (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
                (x, y) => Add(Arc::new(x), Arc::new(y)),
            },
            Sub(a, b) => match (a.fold(), b.fold()) {
                (Num(x), Num(y)) => Num(x - y),
                (e, Num(z)) if z == 0.0 => e,
                (x, y) => Sub(Arc::new(x), Arc::new(y)),
            },
            Mul(a, b) => match (a.fold(), b.fold()) {
                (Num(x), Num(y)) => Num(x * y),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
                (x, y) => Mul(Arc::new(x), Arc::new(y)),
            },
            Div(a, b) => match (a.fold(), b.fold()) {
                (Num(x), Num(y)) if y != 0.0 => Num(x / y),
                (Num(z), _) if z == 0.0 => Num(0.0),
                (e, Num(o)) if o == 1.0 => e,
                (x, y) => Div(Arc::new(x), Arc::new(y)),
            },
            Pow(a, b) => match (a.fold(), b.fold()) {
                (Num(x), Num(y)) => Num(x.powf(y)),
                (e, Num(o)) if o == 1.0 => e,
                (_, Num(z)) if z == 0.0 => Num(1.0),
                (x, y) => Pow(Arc::new(x), Arc::new(y)),
            },
            Neg(a) => match a.fold() {
                Num(x) => Num(-x),
                e => Neg(Arc::new(e)),
            },
            Call(f, a) => match a.fold() {
                Num(x) => Num(f.eval(x)),
                e => Call(*f, Arc::new(e)),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(out, "{v}"),
            Expr::Var(i) => write!(out, "x{i}"),
            Expr::Add(a, b) => write!(out, "({a} + {b})"),
            Expr::Sub(a, b) => write!(out, "({a} - {b})"),
            Expr::Mul(a, b) => write!(out, "({a} * {b})"),
            Expr::Div(a, b) => write!(out, "({a} / {b})"),
            Expr::Pow(a, b) => write!(out, "({a} ^ {b})"),
            Expr::Neg(a) => write!(out, "(-{a})"),
            Expr::Call(f, a) => write!(out, "{}({a})", f.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '/' => {
                tokens.push(Token::Slash);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // scientific suffix
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
                let v = text
                    .parse::<f64>()
                    .map_err(|_| DevrateError::Expr(format!("bad number literal '{text}'")))?;
                tokens.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(DevrateError::Expr(format!(
                    "unexpected character '{other}' at byte {i}"
                )))
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(DevrateError::Expr(format!("expected {want:?}, found {other:?}"))),
        }
    }

    // sum := product (('+'|'-') product)*
    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Arc::new(lhs), Arc::new(self.product()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Arc::new(lhs), Arc::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // product := unary (('*'|'/') unary)*
    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Arc::new(lhs), Arc::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Arc::new(lhs), Arc::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Arc::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative, binds tighter than unary minus on the left)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Arc::new(base), Arc::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Ident(name)) => {
                if matches!(self.peek(), Some(Token::LParen)) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| DevrateError::Expr(format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect(Token::RParen)?;
                    Ok(Expr::Call(func, Arc::new(arg)))
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    match self.vars.iter().position(|v| **v == name) {
                        Some(i) => Ok(Expr::Var(i)),
                        None => Err(DevrateError::Expr(format!(
                            "unknown identifier '{name}' (coordinates here: {:?})",
                            self.vars
                        ))),
                    }
                }
            }
            Some(Token::LParen) => {
                let inner = self.sum()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            other => Err(DevrateError::Expr(format!("unexpected token {other:?}"))),
        }
    }
}

/// Parse `src` with the given coordinate names (position in the slice = state index).
pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens: &tokens, pos: 0, vars };
    let expr = parser.sum()?;
    if parser.pos != tokens.len() {
        return Err(DevrateError::Expr(format!(
            "trailing tokens after expression: {:?}",
            &tokens[parser.pos..]
        )));
    }
    Ok(expr.fold())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, vars: &[&str], x: &[f64]) -> f64 {
        parse(src, vars).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_power() {
        assert_eq!(ev("2+3*4", &[], &[]), 14.0);
        assert_eq!(ev("2^3^2", &[], &[]), 512.0); // right associative
        assert_eq!(ev("-2^2", &[], &[]), -4.0); // unary minus binds looser than ^
        assert_eq!(ev("x^4/4", &["x"], &[2.0]), 4.0);
        assert_eq!(ev("(q^2+p^2)/2", &["q", "p"], &[1.0, 3.0]), 5.0);
    }

    #[test]
    fn functions_eval() {
        assert!((ev("exp(log(5))", &[], &[]) - 5.0).abs() < 1e-12);
        assert!((ev("tanh(0.5)", &[], &[]) - 0.5f64.tanh()).abs() < 1e-15);
        assert!((ev("sqrt(2)^2", &[], &[]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let e = parse("exp(-x^2/2) + x*tanh(x) - log(2+x^2)", &["x"]).unwrap();
        let d = e.diff(0);
        for &x in &[-1.3, 0.2, 0.9, 2.4] {
            let h = 1e-6;
            let fd = (e.eval(&[x + h]) - e.eval(&[x - h])) / (2.0 * h);
            assert!((d.eval(&[x]) - fd).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn second_derivative_of_quartic() {
        let e = parse("x^4/4", &["x"]).unwrap();
        let d2 = e.diff(0).diff(0);
        assert_eq!(d2.eval(&[2.0]), 12.0);
    }

    #[test]
    fn unknown_identifier_is_rejected() {
        assert!(parse("x+y", &["x"]).is_err());
        assert!(parse("foo(x)", &["x"]).is_err());
        assert!(parse("x+", &["x"]).is_err());
    }
}
