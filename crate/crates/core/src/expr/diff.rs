use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::{add, call, constant, div, mul, neg, one, pow, sub, zero, Func, Node, NodeRef};

/// `d/dq_axis` of a DAG. Shared subtrees are differentiated once and their
/// derivatives stay shared.
pub(super) fn partial(root: &NodeRef, axis: usize) -> NodeRef {
    let mut memo = HashMap::new();
    go(root, axis, &mut memo)
}

fn go(n: &NodeRef, axis: usize, memo: &mut HashMap<usize, NodeRef>) -> NodeRef {
    let key = Arc::as_ptr(n) as usize;
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let d = match &**n {
        Node::Const(_) | Node::Time => zero(),
        Node::Var(k) => {
            if *k == axis {
                one()
            } else {
                zero()
            }
        }
        Node::Add(a, b) => add(go(a, axis, memo), go(b, axis, memo)),
        Node::Sub(a, b) => sub(go(a, axis, memo), go(b, axis, memo)),
        Node::Neg(a) => neg(go(a, axis, memo)),
        Node::Mul(a, b) => {
            let da = go(a, axis, memo);
            let db = go(b, axis, memo);
            add(mul(da, b.clone()), mul(a.clone(), db))
        }
        Node::Div(a, b) => {
            let da = go(a, axis, memo);
            let db = go(b, axis, memo);
            // (a' b - a b') / b^2
            div(
                sub(mul(da, b.clone()), mul(a.clone(), db)),
                pow(b.clone(), 2),
            )
        }
        Node::Pow(a, k) => {
            let da = go(a, axis, memo);
            mul(
                mul(constant(Complex64::new(*k as f64, 0.0)), pow(a.clone(), k - 1)),
                da,
            )
        }
        Node::Call(f, a) => {
            let da = go(a, axis, memo);
            let outer = match f {
                Func::Exp => n.clone(),
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Log => div(one(), a.clone()),
                Func::Sqrt => div(constant(Complex64::new(0.5, 0.0)), n.clone()),
                // coordinates are real, so d conj(a) = conj(d a)
                Func::Conj => return memo_insert(memo, key, call(Func::Conj, da)),
            };
            mul(outer, da)
        }
    };
    memo_insert(memo, key, d)
}

fn memo_insert(memo: &mut HashMap<usize, NodeRef>, key: usize, d: NodeRef) -> NodeRef {
    memo.insert(key, d.clone());
    d
}

#[cfg(test)]
mod tests {
    use crate::expr::{CoefficientExpression, SampleSpec};
    use crate::multiindex::MultiIndex;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parse(s: &str, dim: usize) -> CoefficientExpression {
        CoefficientExpression::parse(s, dim).unwrap()
    }

    #[test]
    fn polynomial_derivative() {
        let d = parse("q1^2", 1).differentiate(&MultiIndex::new(vec![1])).unwrap();
        assert!(d.approx_equal(&parse("2*q1", 1), &SampleSpec::default()).unwrap());
    }

    #[test]
    fn constant_derivative_vanishes() {
        let c = parse("3 - 2*i", 2);
        for n in [[1, 0], [0, 2], [3, 1]] {
            assert!(c.differentiate(&MultiIndex::new(n.to_vec())).unwrap().is_zero());
        }
    }

    #[test]
    fn time_is_a_parameter() {
        let d = parse("t*q1 + t^2", 1).partial(0);
        assert!(d.approx_equal(&parse("t", 1), &SampleSpec::default()).unwrap());
    }

    // Central finite differences as an independent oracle for the mixed
    // second derivative of exp(i q1 q2).
    #[test]
    fn mixed_partial_matches_finite_differences() {
        let e = parse("exp(i*q1*q2)", 2);
        let d = e.differentiate(&MultiIndex::new(vec![1, 1])).unwrap();
        let closed = parse("i*exp(i*q1*q2) + (i*q2)*(i*q1)*exp(i*q1*q2)", 2);
        assert!(d.approx_equal(&closed, &SampleSpec::default()).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-2;
        for _ in 0..10 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            let y: f64 = rng.gen_range(-2.0..2.0);
            let f = |a: f64, b: f64| e.evaluate(&[a, b], 0.0).unwrap();
            let cd = |h: f64| (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
            // Richardson step removes the O(h^2) term
            let fd = (cd(h / 2.0) * 4.0 - cd(h)) / 3.0;
            let exact = d.evaluate(&[x, y], 0.0).unwrap();
            let rel = (fd - exact).norm() / exact.norm().max(1.0);
            assert!(rel < 1e-6, "rel error {rel} at ({x},{y})");
        }
    }

    #[test]
    fn transcendental_rules() {
        let spec = SampleSpec::default();
        let cases = [
            ("sin(q1)", "cos(q1)"),
            ("cos(2*q1)", "-2*sin(2*q1)"),
            ("log(q1 + 3)", "1/(q1 + 3)"),
            ("sqrt(q1 + 3)", "0.5/sqrt(q1 + 3)"),
            ("1/(q1^2 + 1)", "-2*q1/(q1^2 + 1)^2"),
            ("q1^-2", "-2*q1^-3"),
            ("conj(log(q1 - 3))", "conj(1/(q1 - 3))"),
        ];
        for (f, df) in cases {
            let d = parse(f, 1).partial(0);
            assert!(d.approx_equal(&parse(df, 1), &spec).unwrap(), "d/dq {f} = {d}, expected {df}");
        }
    }

    #[test]
    fn sharing_is_preserved() {
        let e = parse("exp(-q1^2)", 1);
        let mut d = e.clone();
        for _ in 0..8 {
            d = d.partial(0);
        }
        // Leibniz expansion without sharing would be exponential in the order.
        assert!(d.node_count() < 400, "node count {}", d.node_count());
        let v = d.evaluate(&[0.0], 0.0).unwrap();
        // d^8/dx^8 exp(-x^2) at 0 = H_8(0) = 1680
        assert!((v - Complex64::new(1680.0, 0.0)).norm() < 1e-9);
    }
}
