//! Scalar expressions over the spatial variables `x1..xn`.
//!
//! Expressions are parsed from ASCII source, differentiated symbolically and
//! evaluated pointwise. Trees are immutable once built; differentiation
//! returns a new tree. The only simplification performed is folding of
//! literal subtrees (plus the `0`/`1` identities the derivative rules
//! produce), so a rendered expression reads close to what was written.

mod diff;
mod eval;
mod parse;

use std::fmt;
use std::sync::Arc;

pub use eval::EvalError;
pub use parse::ParseError;

/// Binary operators, in the grammar's precedence classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// The closed set of unary functions.
///
/// `sign` is not meant to be written by hand but is part of the grammar so
/// that derivatives of `abs` render and reparse; `sign(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Tanh,
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Expression tree node. Variables are stored 0-based (`Var(0)` is `x1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    /// Largest 0-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depends_on_any_var(&self) -> bool {
        self.max_var().is_some()
    }

    pub fn uses_func(&self, func: Func) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(a) => a.uses_func(func),
            Expr::Call(f, a) => *f == func || a.uses_func(func),
            Expr::Binary(_, a, b) => a.uses_func(func) || b.uses_func(func),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        write!(f, "{v}")
    } else {
        write!(f, "{v:e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_number(f, *v),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_child(f, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    // right-associative; the exponent may carry a unary minus
                    a.write_child(f, 5)?;
                    f.write_str("^")?;
                    b.write_child(f, 3)
                } else {
                    a.write_child(f, p)?;
                    write!(f, " {} ", op.symbol())?;
                    b.write_child(f, p + 1)
                }
            }
        }
    }
}

/// A parsed expression together with the spatial dimension it lives in.
///
/// Cloning is cheap; the tree is shared.
#[derive(Debug, Clone)]
pub struct Expression {
    dim: usize,
    root: Arc<Expr>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.root == other.root
    }
}

impl Expression {
    /// Parses `source` over the variables `x1..x{dim}`.
    pub fn parse(source: &str, dim: usize) -> Result<Expression, ParseError> {
        let root = parse::parse(source, dim)?;
        Ok(Expression {
            dim,
            root: Arc::new(root),
        })
    }

    /// Wraps an already-built tree, checking the variable bound.
    pub fn from_tree(root: Expr, dim: usize) -> Result<Expression, ParseError> {
        if dim == 0 {
            return Err(ParseError::ZeroDimension);
        }
        if let Some(i) = root.max_var() {
            if i >= dim {
                return Err(ParseError::VariableOutOfRange {
                    offset: 0,
                    index: i + 1,
                    dim,
                });
            }
        }
        Ok(Expression {
            dim,
            root: Arc::new(root),
        })
    }

    pub fn constant(value: f64, dim: usize) -> Expression {
        Expression {
            dim,
            root: Arc::new(Expr::Num(value)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tree(&self) -> &Expr {
        &self.root
    }

    /// Exact partial derivative with respect to the 0-based variable `var`.
    ///
    /// # Panics
    /// If `var >= self.dim()`.
    pub fn differentiate(&self, var: usize) -> Expression {
        assert!(
            var < self.dim,
            "variable index {} out of range for dimension {}",
            var + 1,
            self.dim
        );
        Expression {
            dim: self.dim,
            root: Arc::new(diff::derivative(&self.root, var)),
        }
    }

    pub fn gradient(&self) -> Vec<Expression> {
        (0..self.dim).map(|i| self.differentiate(i)).collect()
    }

    /// Evaluates at `point`, rejecting any non-finite intermediate.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.dim {
            return Err(EvalError::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        eval::evaluate(&self.root, point)
    }

    pub fn uses_func(&self, func: Func) -> bool {
        self.root.uses_func(func)
    }

    pub fn is_constant(&self) -> bool {
        !self.root.depends_on_any_var()
    }

    /// ASCII rendering that reparses to a structurally equal tree.
    pub fn render(&self) -> String {
        self.root.to_string()
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[test]
    fn parse_sum_of_squares() {
        let e = Expression::parse("x1^2 + x2^2", 2).unwrap();
        let expected = Expr::binary(
            BinOp::Add,
            Expr::binary(BinOp::Pow, x(0), Expr::num(2.0)),
            Expr::binary(BinOp::Pow, x(1), Expr::num(2.0)),
        );
        assert_eq!(e.tree(), &expected);
    }

    #[test]
    fn evaluate_polynomial() {
        let e = Expression::parse("2*x1 + 3*x1^2", 1).unwrap();
        assert_eq!(e.evaluate(&[1.0]).unwrap(), 5.0);
        let e = Expression::parse("x1*x2", 2).unwrap();
        assert_eq!(e.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn variable_beyond_dimension_is_rejected() {
        let err = Expression::parse("x3", 2).unwrap_err();
        assert!(matches!(
            err,
            ParseError::VariableOutOfRange { index: 3, dim: 2, .. }
        ));
    }

    #[test]
    fn log_domain() {
        let e = Expression::parse("log(1-x1^2)", 1).unwrap();
        assert_eq!(e.evaluate(&[0.0]).unwrap(), 0.0);
        let err = e.evaluate(&[1.0]).unwrap_err();
        match err {
            EvalError::Domain { point, .. } => assert_eq!(point, vec![1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_rule_and_independence() {
        let e = Expression::parse("x1^2", 1).unwrap();
        let d = e.differentiate(0);
        assert_eq!(d.tree(), &Expr::binary(BinOp::Mul, Expr::num(2.0), x(0)));
        assert_eq!(d.render(), "2 * x1");

        let e = Expression::parse("x2", 2).unwrap();
        assert_eq!(e.differentiate(0).tree(), &Expr::num(0.0));
    }

    #[test]
    fn gaussian_derivative_matches_central_difference() {
        let e = Expression::parse("exp(-x1^2/2)", 1).unwrap();
        let d = e.differentiate(0).evaluate(&[1.0]).unwrap();
        let step = 1e-5;
        let fd = (e.evaluate(&[1.0 + step]).unwrap() - e.evaluate(&[1.0 - step]).unwrap())
            / (2.0 * step);
        assert!((d - fd).abs() < 1e-9);
        assert!((d + (-0.5f64).exp()).abs() < 1e-12);
        assert!((d + 0.6065).abs() < 1e-4);
    }

    #[test]
    fn abs_derivative_is_zero_at_kink() {
        let e = Expression::parse("abs(x1)", 1).unwrap();
        let d = e.differentiate(0);
        assert_eq!(d.evaluate(&[0.0]).unwrap(), 0.0);
        assert_eq!(d.evaluate(&[-2.0]).unwrap(), -1.0);
        assert_eq!(d.evaluate(&[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn rendering_round_trips() {
        for src in [
            "x1^2 + x2^2",
            "-x1^2",
            "(-x1)^2",
            "x1^-2",
            "2^3^x1",
            "(2^3)^x1",
            "x1 - (x2 - 1)",
            "x1 / (x2 * 3)",
            "-(x1 + x2)",
            "exp(-1/(1 - (x1/6)^2))",
            "x1 + -2",
            "(-2)^x1",
            "pi * e * x1",
            "1e-7 * x2 + 3.5e20",
            "--x1",
            "tanh(sqrt(abs(x1))) - sign(x2)",
        ] {
            let e = Expression::parse(src, 2).unwrap();
            let again = Expression::parse(&e.render(), 2).unwrap();
            assert_eq!(e, again, "{src} -> {}", e.render());
            assert_eq!(e.render(), again.render());
        }
    }

    #[test]
    fn literal_subtrees_fold() {
        let e = Expression::parse("2*3 + x1", 1).unwrap();
        assert_eq!(e.render(), "6 + x1");
        let e = Expression::parse("-(2)", 1).unwrap();
        assert_eq!(e.tree(), &Expr::Num(-2.0));
    }

    #[test]
    fn mixed_partials_commute() {
        let e = Expression::parse("sin(x1*x2) * exp(x2) / (1 + x1^2)", 2).unwrap();
        let d12 = e.differentiate(0).differentiate(1);
        let d21 = e.differentiate(1).differentiate(0);
        for p in [[0.3, -0.7], [1.1, 0.4], [-2.0, 0.25]] {
            let a = d12.evaluate(&p).unwrap();
            let b = d21.evaluate(&p).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}
