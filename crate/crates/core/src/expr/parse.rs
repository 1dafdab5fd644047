//! Recursive-descent parser and the canonical serializer.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := "-" factor | base ("^" ["-"] intliteral)?
//! base   := number | "i" | "t" | "q" digits | func "(" expr ")" | "(" expr ")"
//! func   := "exp" | "sin" | "cos" | "log" | "sqrt" | "conj"
//! ```
//!
//! Numbers accept an optional fraction and exponent (`1.5e-3`). `^` binds
//! tighter than unary minus, so `-q1^2` is `-(q1^2)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use super::{add, call, constant, div, mul, neg, pow, sub, Func, Node, NodeRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    VariableOutOfRange { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {}", describe(.kind))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Syntax(msg) => format!("syntax error: {msg}"),
        ParseErrorKind::UnknownIdentifier(name) => format!("unknown identifier `{name}`"),
        ParseErrorKind::VariableOutOfRange { index, dim } => {
            format!("variable q{index} out of range for dimension {dim}")
        }
    }
}

impl ParseError {
    /// Shifts the reported position, for expressions embedded in a larger file.
    pub fn offset(mut self, line: usize, column: usize) -> Self {
        if self.line == 1 {
            self.column += column;
        }
        self.line += line;
        self
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
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            _src: src,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::End, line, col));
                return Ok(out);
            };
            if c.is_ascii_digit() || c == '.' {
                let mut text = String::new();
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    text.push(self.bump().unwrap());
                }
                if matches!(self.peek(), Some('e' | 'E')) {
                    let save = (self.pos, self.line, self.col);
                    let mut exp = String::from("e");
                    self.bump();
                    if let Some(s @ ('+' | '-')) = self.peek() {
                        exp.push(s);
                        self.bump();
                    }
                    if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            exp.push(self.bump().unwrap());
                        }
                        text.push_str(&exp);
                    } else {
                        (self.pos, self.line, self.col) = save;
                    }
                }
                let v: f64 = text.parse().map_err(|_| ParseError {
                    line,
                    column: col,
                    kind: ParseErrorKind::Syntax(format!("malformed number `{text}`")),
                })?;
                out.push((Tok::Num(v), line, col));
            } else if c.is_alphabetic() || c == '_' {
                let mut text = String::new();
                while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                    text.push(self.bump().unwrap());
                }
                out.push((Tok::Ident(text), line, col));
            } else if "+-*/^()".contains(c) {
                self.bump();
                out.push((Tok::Op(c), line, col));
            } else {
                return Err(ParseError {
                    line,
                    column: col,
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
                });
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = self.toks[self.pos];
        (l, c)
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        let (line, column) = self.here();
        ParseError { line, column, kind }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        self.err(ParseErrorKind::Syntax(msg.into()))
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<NodeRef, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.next();
                    lhs = add(lhs, self.term()?);
                }
                Tok::Op('-') => {
                    self.next();
                    lhs = sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<NodeRef, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.next();
                    lhs = mul(lhs, self.factor()?);
                }
                Tok::Op('/') => {
                    self.next();
                    lhs = div(lhs, self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<NodeRef, ParseError> {
        if self.peek() == &Tok::Op('-') {
            self.next();
            return Ok(neg(self.factor()?));
        }
        let base = self.base()?;
        if self.peek() == &Tok::Op('^') {
            self.next();
            let negative = if self.peek() == &Tok::Op('-') {
                self.next();
                true
            } else {
                false
            };
            match self.next() {
                Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let k = v as i32;
                    return Ok(pow(base, if negative { -k } else { k }));
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.syntax("exponent must be an integer literal"));
                }
            }
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<NodeRef, ParseError> {
        let (line, column) = self.here();
        match self.next() {
            Tok::Num(v) => Ok(constant(Complex64::new(v, 0.0))),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_close()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "i" {
                    return Ok(constant(Complex64::new(0.0, 1.0)));
                }
                if name == "t" {
                    return Ok(Arc::new(Node::Time));
                }
                if let Some(f) = Func::from_name(&name) {
                    if self.next() != Tok::Op('(') {
                        self.pos -= 1;
                        return Err(self.syntax(format!("expected `(` after `{name}`")));
                    }
                    let arg = self.expr()?;
                    self.expect_close()?;
                    return Ok(call(f, arg));
                }
                if let Some(digits) = name.strip_prefix('q') {
                    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                        let index: usize = digits.parse().map_err(|_| ParseError {
                            line,
                            column,
                            kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                        })?;
                        if index == 0 || index > self.dim {
                            return Err(ParseError {
                                line,
                                column,
                                kind: ParseErrorKind::VariableOutOfRange { index, dim: self.dim },
                            });
                        }
                        return Ok(Arc::new(Node::Var(index - 1)));
                    }
                }
                Err(ParseError {
                    line,
                    column,
                    kind: ParseErrorKind::UnknownIdentifier(name),
                })
            }
            Tok::End => {
                self.pos = self.toks.len() - 1;
                Err(self.syntax("unexpected end of input"))
            }
            Tok::Op(c) => {
                self.pos -= 1;
                Err(self.syntax(format!("unexpected `{c}`")))
            }
        }
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        if self.next() == Tok::Op(')') {
            Ok(())
        } else {
            self.pos = self.pos.saturating_sub(1);
            Err(self.syntax("expected `)`"))
        }
    }
}

pub(super) fn parse(text: &str, dim: usize) -> Result<NodeRef, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, pos: 0, dim };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return Err(p.syntax("trailing input"));
    }
    Ok(e)
}

// Precedence levels used by the printer.
const P_SUM: u8 = 1;
const P_PRODUCT: u8 = 2;
const P_UNARY: u8 = 3;
const P_POWER: u8 = 4;
const P_ATOM: u8 = 5;

fn fmt_real(x: f64) -> String {
    format!("{:?}", x.abs())
}

fn const_prec(c: Complex64) -> u8 {
    if c.im == 0.0 {
        if c.re.is_sign_negative() && c.re != 0.0 {
            P_UNARY
        } else {
            P_ATOM
        }
    } else if c.re == 0.0 {
        if c.im == 1.0 {
            P_ATOM
        } else if c.im < 0.0 {
            P_UNARY
        } else {
            P_PRODUCT
        }
    } else {
        P_ATOM
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: Complex64) -> fmt::Result {
    if c.im == 0.0 {
        if c.re.is_sign_negative() && c.re != 0.0 {
            write!(f, "-{}", fmt_real(c.re))
        } else {
            write!(f, "{}", fmt_real(c.re))
        }
    } else if c.re == 0.0 {
        let sign = if c.im < 0.0 { "-" } else { "" };
        if c.im.abs() == 1.0 {
            write!(f, "{sign}i")
        } else {
            write!(f, "{sign}{}*i", fmt_real(c.im))
        }
    } else {
        let re_sign = if c.re < 0.0 { "-" } else { "" };
        let op = if c.im < 0.0 { "-" } else { "+" };
        write!(f, "({re_sign}{}{op}{}*i)", fmt_real(c.re), fmt_real(c.im))
    }
}

fn prec(n: &Node) -> u8 {
    match n {
        Node::Const(c) => const_prec(*c),
        Node::Var(_) | Node::Time | Node::Call(..) => P_ATOM,
        Node::Add(..) | Node::Sub(..) => P_SUM,
        Node::Mul(..) | Node::Div(..) => P_PRODUCT,
        Node::Neg(_) => P_UNARY,
        Node::Pow(..) => P_POWER,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, n: &Node, min: u8) -> fmt::Result {
    if prec(n) < min {
        write!(f, "(")?;
        write_node(f, n)?;
        write!(f, ")")
    } else {
        write_node(f, n)
    }
}

/// Canonical text form; re-parses to an equal expression.
pub(super) fn write_node(f: &mut fmt::Formatter<'_>, n: &Node) -> fmt::Result {
    match n {
        Node::Const(c) => write_const(f, *c),
        Node::Var(k) => write!(f, "q{}", k + 1),
        Node::Time => write!(f, "t"),
        Node::Add(a, b) => {
            write_child(f, a, P_SUM)?;
            write!(f, " + ")?;
            write_child(f, b, P_SUM + 1)
        }
        Node::Sub(a, b) => {
            write_child(f, a, P_SUM)?;
            write!(f, " - ")?;
            write_child(f, b, P_SUM + 1)
        }
        Node::Mul(a, b) => {
            write_child(f, a, P_PRODUCT)?;
            write!(f, "*")?;
            write_child(f, b, P_PRODUCT + 1)
        }
        Node::Div(a, b) => {
            write_child(f, a, P_PRODUCT)?;
            write!(f, "/")?;
            write_child(f, b, P_PRODUCT + 1)
        }
        Node::Neg(a) => {
            write!(f, "-")?;
            write_child(f, a, P_UNARY)
        }
        Node::Pow(a, k) => {
            write_child(f, a, P_ATOM)?;
            write!(f, "^{k}")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{CoefficientExpression, ParseErrorKind, SampleSpec};
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn real_constant_division_is_correctly_rounded() {
        let e = CoefficientExpression::parse("-1/(2*0.4)", 1).unwrap();
        assert_eq!(e.as_constant(), Some(Complex64::new(-1.25, 0.0)));
    }

    #[test]
    fn parse_examples() {
        let e = CoefficientExpression::parse("-0.5", 1).unwrap();
        assert_eq!(e.as_constant(), Some(Complex64::new(-0.5, 0.0)));
        let e = CoefficientExpression::parse("i*q1^2 + exp(-t)", 2).unwrap();
        let v = e.evaluate(&[2.0, 7.0], 0.0).unwrap();
        assert_eq!(v, Complex64::new(1.0, 4.0));
        let err = CoefficientExpression::parse("q3", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VariableOutOfRange { index: 3, dim: 2 });
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| CoefficientExpression::parse(s, 1).unwrap().evaluate(&[3.0], 0.0).unwrap().re;
        assert_eq!(v("-q1^2"), -9.0);
        assert_eq!(v("2*-q1"), -6.0);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("12/2/3"), 2.0);
        assert_eq!(v("2 + 3*q1^2"), 29.0);
        assert_eq!(v("(q1 + 1)^2"), 16.0);
        assert_eq!(v("q1^-1"), 1.0 / 3.0);
        assert_eq!(v("1.5e1 + 2e-1"), 15.2);
    }

    #[test]
    fn error_positions() {
        let err = CoefficientExpression::parse("q1 + * 2", 1).unwrap_err();
        assert_eq!((err.line, err.column), (1, 6));
        let err = CoefficientExpression::parse("foo(q1)", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        let err = CoefficientExpression::parse("q1^1.5", 1).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = CoefficientExpression::parse("(q1 + 1", 1).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        assert!(CoefficientExpression::parse("q1 q1", 1).is_err());
        assert!(CoefficientExpression::parse("", 1).is_err());
        assert!(CoefficientExpression::parse("q0", 1).is_err());
        assert!(CoefficientExpression::parse("q1 $", 1).is_err());
    }

    #[test]
    fn printed_constants_reparse() {
        for c in [
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 2.5),
            Complex64::new(-1.25, -3.0),
            Complex64::new(1e-20, 3e21),
        ] {
            let e = CoefficientExpression::constant(c, 1) * CoefficientExpression::variable(0, 1).pow(2);
            let back = CoefficientExpression::parse(&e.to_string(), 1).unwrap();
            assert!(back.approx_equal(&e, &SampleSpec::default().with_tol(1e-15)).unwrap(), "{e}");
        }
    }

    fn arb_expr(dim: usize) -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(|x| format!("{x:.3}")),
            Just("i".to_string()),
            Just("t".to_string()),
            (1..=dim).prop_map(|k| format!("q{k}")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
                inner.clone().prop_map(|a| format!("-({a})")),
                (inner.clone(), 0..4i32).prop_map(|(a, k)| format!("({a})^{k}")),
                inner.clone().prop_map(|a| format!("sin({a})")),
                inner.clone().prop_map(|a| format!("cos({a})")),
                inner.clone().prop_map(|a| format!("exp(0.3*({a}))")),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn print_parse_round_trip(src in arb_expr(2)) {
            let e = CoefficientExpression::parse(&src, 2).unwrap();
            let back = CoefficientExpression::parse(&e.to_string(), 2).unwrap();
            prop_assert!(back.approx_equal(&e, &SampleSpec::default()).unwrap(), "{} vs {}", src, e);
        }

        #[test]
        fn mixed_partials_commute(src in arb_expr(2)) {
            let e = CoefficientExpression::parse(&src, 2).unwrap();
            let ab = e.partial(0).partial(1);
            let ba = e.partial(1).partial(0);
            prop_assert!(ab.approx_equal(&ba, &SampleSpec::default().with_tol(1e-8)).unwrap());
        }

        #[test]
        fn differentiation_is_linear(a in arb_expr(2), b in arb_expr(2), re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let ea = CoefficientExpression::parse(&a, 2).unwrap();
            let eb = CoefficientExpression::parse(&b, 2).unwrap();
            let alpha = Complex64::new(re, im);
            let combo = &ea.scale(alpha) + &eb;
            let lhs = combo.partial(0);
            let rhs = &ea.partial(0).scale(alpha) + &eb.partial(0);
            prop_assert!(lhs.approx_equal(&rhs, &SampleSpec::default().with_tol(1e-8)).unwrap());
        }
    }
}
