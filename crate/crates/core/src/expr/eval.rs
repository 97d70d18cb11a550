use thiserror::Error;

use super::{BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error at {point:?}: {reason}")]
    Domain { point: Vec<f64>, reason: String },
    #[error("expected a point of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(super) fn apply_func(func: Func, v: f64) -> Result<f64, &'static str> {
    let r = match func {
        Func::Exp => v.exp(),
        Func::Log => {
            if v <= 0.0 {
                return Err("log of a non-positive value");
            }
            v.ln()
        }
        Func::Sin => v.sin(),
        Func::Cos => v.cos(),
        Func::Sqrt => {
            if v < 0.0 {
                return Err("sqrt of a negative value");
            }
            v.sqrt()
        }
        Func::Abs => v.abs(),
        Func::Tanh => v.tanh(),
        Func::Sign => {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    };
    Ok(r)
}

fn eval(e: &Expr, x: &[f64]) -> Result<f64, &'static str> {
    let v = match e {
        Expr::Num(v) => *v,
        Expr::Const(c) => c.value(),
        Expr::Var(i) => x[*i],
        Expr::Neg(a) => -eval(a, x)?,
        Expr::Call(f, a) => apply_func(*f, eval(a, x)?)?,
        Expr::Binary(op, a, b) => {
            let l = eval(a, x)?;
            let r = eval(b, x)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0.0 {
                        return Err("division by zero");
                    }
                    l / r
                }
                BinOp::Pow => l.powf(r),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite intermediate value")
    }
}

pub(super) fn evaluate(e: &Expr, point: &[f64]) -> Result<f64, EvalError> {
    eval(e, point).map_err(|reason| EvalError::Domain {
        point: point.to_vec(),
        reason: reason.to_string(),
    })
}
