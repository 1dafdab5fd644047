use num_complex::Complex64;

use super::{Func, Node, NodeRef};

const P_SUM: u8 = 1;
const P_PRODUCT: u8 = 2;
const P_UNARY: u8 = 3;
const P_POWER: u8 = 4;
const P_ATOM: u8 = 5;

fn real(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn constant(c: Complex64) -> (String, u8) {
    if c.im == 0.0 {
        let p = if c.re < 0.0 { P_UNARY } else { P_ATOM };
        (real(c.re), p)
    } else if c.re == 0.0 {
        let mag = c.im.abs();
        let body = if mag == 1.0 { "i".to_string() } else { format!("{} i", real(mag)) };
        if c.im < 0.0 {
            (format!("-{body}"), P_UNARY)
        } else {
            (body, if mag == 1.0 { P_ATOM } else { P_PRODUCT })
        }
    } else {
        let op = if c.im < 0.0 { "-" } else { "+" };
        (format!("\\left({} {op} {} i\\right)", real(c.re), real(c.im.abs())), P_ATOM)
    }
}

fn wrap(s: (String, u8), min: u8) -> String {
    if s.1 < min {
        format!("\\left({}\\right)", s.0)
    } else {
        s.0
    }
}

fn go(n: &Node) -> (String, u8) {
    match n {
        Node::Const(c) => constant(*c),
        Node::Var(k) => (format!("q_{{{}}}", k + 1), P_ATOM),
        Node::Time => ("t".into(), P_ATOM),
        Node::Add(a, b) => (format!("{} + {}", wrap(go(a), P_SUM), wrap(go(b), P_SUM + 1)), P_SUM),
        Node::Sub(a, b) => (format!("{} - {}", wrap(go(a), P_SUM), wrap(go(b), P_SUM + 1)), P_SUM),
        Node::Mul(a, b) => (
            format!("{} \\, {}", wrap(go(a), P_PRODUCT), wrap(go(b), P_PRODUCT + 1)),
            P_PRODUCT,
        ),
        Node::Div(a, b) => (format!("\\frac{{{}}}{{{}}}", go(a).0, go(b).0), P_ATOM),
        Node::Neg(a) => (format!("-{}", wrap(go(a), P_UNARY)), P_UNARY),
        Node::Pow(a, k) => (format!("{}^{{{k}}}", wrap(go(a), P_ATOM)), P_POWER),
        Node::Call(f, a) => {
            let inner = go(a).0;
            let s = match f {
                Func::Exp => format!("e^{{{inner}}}"),
                Func::Sin => format!("\\sin\\left({inner}\\right)"),
                Func::Cos => format!("\\cos\\left({inner}\\right)"),
                Func::Log => format!("\\log\\left({inner}\\right)"),
                Func::Sqrt => format!("\\sqrt{{{inner}}}"),
                Func::Conj => format!("\\overline{{{inner}}}"),
            };
            (s, P_ATOM)
        }
    }
}

pub(super) fn to_latex(root: &NodeRef) -> String {
    go(root).0
}
