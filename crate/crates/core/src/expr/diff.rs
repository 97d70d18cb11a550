//! Symbolic differentiation with light simplification.

use super::parse::fold;
use super::{BinOp, Expr, Func};

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        return b;
    }
    if is_num(&b, 0.0) {
        return a;
    }
    fold(Expr::binary(BinOp::Add, a, b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        return a;
    }
    if is_num(&a, 0.0) {
        return neg(b);
    }
    fold(Expr::binary(BinOp::Sub, a, b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        return Expr::Num(0.0);
    }
    if is_num(&a, 1.0) {
        return b;
    }
    if is_num(&b, 1.0) {
        return a;
    }
    fold(Expr::binary(BinOp::Mul, a, b))
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        return Expr::Num(0.0);
    }
    if is_num(&b, 1.0) {
        return a;
    }
    fold(Expr::binary(BinOp::Div, a, b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 1.0) {
        return a;
    }
    if is_num(&b, 0.0) {
        return Expr::Num(1.0);
    }
    fold(Expr::binary(BinOp::Pow, a, b))
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Neg(inner) => *inner,
        other => fold(Expr::Neg(Box::new(other))),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    fold(Expr::call(f, a))
}

pub(super) fn derivative(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Num(_) | Expr::Const(_) => Expr::Num(0.0),
        Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(derivative(a, var)),
        Expr::Binary(op, a, b) => {
            let (a, b) = (&**a, &**b);
            match op {
                BinOp::Add => add(derivative(a, var), derivative(b, var)),
                BinOp::Sub => sub(derivative(a, var), derivative(b, var)),
                BinOp::Mul => add(
                    mul(derivative(a, var), b.clone()),
                    mul(a.clone(), derivative(b, var)),
                ),
                BinOp::Div => {
                    let da = derivative(a, var);
                    let db = derivative(b, var);
                    if is_num(&db, 0.0) {
                        div(da, b.clone())
                    } else {
                        div(
                            sub(mul(da, b.clone()), mul(a.clone(), db)),
                            pow(b.clone(), Expr::Num(2.0)),
                        )
                    }
                }
                BinOp::Pow => {
                    let da = derivative(a, var);
                    if !b.depends_on_any_var() {
                        let exponent = sub(b.clone(), Expr::Num(1.0));
                        mul(mul(b.clone(), pow(a.clone(), exponent)), da)
                    } else {
                        let db = derivative(b, var);
                        let inner = add(
                            mul(db, call(Func::Log, a.clone())),
                            div(mul(b.clone(), da), a.clone()),
                        );
                        mul(pow(a.clone(), b.clone()), inner)
                    }
                }
            }
        }
        Expr::Call(f, a) => {
            let da = derivative(a, var);
            if is_num(&da, 0.0) {
                return Expr::Num(0.0);
            }
            let a = (**a).clone();
            match f {
                Func::Exp => mul(call(Func::Exp, a), da),
                Func::Log => div(da, a),
                Func::Sin => mul(call(Func::Cos, a), da),
                Func::Cos => neg(mul(call(Func::Sin, a), da)),
                Func::Sqrt => div(da, mul(Expr::Num(2.0), call(Func::Sqrt, a))),
                Func::Abs => mul(call(Func::Sign, a), da),
                Func::Tanh => {
                    let t = call(Func::Tanh, a);
                    mul(sub(Expr::Num(1.0), pow(t, Expr::Num(2.0))), da)
                }
                Func::Sign => Expr::Num(0.0),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Expression;

    fn d(src: &str) -> String {
        Expression::parse(src, 2).unwrap().differentiate(0).render()
    }

    #[test]
    fn simple_rules_render_compactly() {
        assert_eq!(d("x1"), "1");
        assert_eq!(d("3 * x1"), "3");
        assert_eq!(d("x1 + x2"), "1");
        assert_eq!(d("sin(x1)"), "cos(x1)");
        assert_eq!(d("exp(x2)"), "0");
        assert_eq!(d("log(x1)"), "1 / x1");
        assert_eq!(d("abs(x1)"), "sign(x1)");
    }

    #[test]
    fn derivatives_reparse() {
        for src in ["x1^x2", "tanh(x1 * x2)", "sqrt(1 + x1^2) / x2", "2^x1"] {
            let e = Expression::parse(&d(src), 2).unwrap();
            assert_eq!(e.render(), d(src));
        }
    }
}
