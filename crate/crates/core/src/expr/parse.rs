//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | 'e' | 'x' digits | func '(' expr ')' | '(' expr ')'
//! ```

use thiserror::Error;

use super::{BinOp, Constant, Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable index exceeds dimension: x{index} at byte {offset} (dimension {dim})")]
    VariableOutOfRange {
        offset: usize,
        index: usize,
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((i, Token::Op(c as char)));
                i += 1;
            }
            b'(' => {
                out.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Token::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent, only if digits follow
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
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push((start, Token::Num(value)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(src[start..i].to_string())));
            }
            _ => {
                // U+2212 MINUS SIGN shows up when formulas are pasted from documents
                if src[i..].starts_with('\u{2212}') {
                    out.push((i, Token::Op('-')));
                    i += '\u{2212}'.len_utf8();
                } else {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax {
                        offset: i,
                        message: format!("unexpected character '{ch}'"),
                    });
                }
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op('+') {
                BinOp::Add
            } else if self.eat_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = fold(Expr::binary(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op('*') {
                BinOp::Mul
            } else if self.eat_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = fold(Expr::binary(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op('-') {
            let inner = self.unary()?;
            return Ok(fold(Expr::Neg(Box::new(inner))));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exponent = self.unary()?;
            return Ok(fold(Expr::binary(BinOp::Pow, base, exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return self.syntax("unexpected end of input");
        };
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return self.syntax("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Ident(name) => self.identifier(&name, offset),
            Token::RParen => Err(ParseError::Syntax {
                offset,
                message: "unexpected ')'".into(),
            }),
            Token::Op(c) => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected operator '{c}'"),
            }),
        }
    }

    fn identifier(&mut self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        match name {
            "pi" => return Ok(Expr::Const(Constant::Pi)),
            "e" => return Ok(Expr::Const(Constant::E)),
            _ => {}
        }
        if let Some(func) = Func::from_name(name) {
            if self.peek() != Some(&Token::LParen) {
                return self.syntax(format!("expected '(' after '{name}'"));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(&Token::RParen) {
                return self.syntax("expected ')'");
            }
            self.pos += 1;
            return Ok(fold(Expr::call(func, arg)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().unwrap_or(usize::MAX);
                if index == 0 {
                    return Err(ParseError::UnknownIdentifier {
                        offset,
                        name: name.to_string(),
                    });
                }
                if index > self.dim {
                    return Err(ParseError::VariableOutOfRange {
                        offset,
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        Err(ParseError::UnknownIdentifier {
            offset,
            name: name.to_string(),
        })
    }
}

/// Folds a node whose children are all numeric literals. Non-finite results
/// are left unfolded so that evaluation reports them with a point.
pub(super) fn fold(e: Expr) -> Expr {
    let folded = match &e {
        Expr::Neg(a) => match **a {
            Expr::Num(v) => Some(-v),
            _ => None,
        },
        Expr::Binary(op, a, b) => match (&**a, &**b) {
            (Expr::Num(x), Expr::Num(y)) => Some(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => x.powf(*y),
            }),
            _ => None,
        },
        Expr::Call(func, a) => match **a {
            Expr::Num(v) => super::eval::apply_func(*func, v).ok(),
            _ => None,
        },
        _ => None,
    };
    match folded {
        Some(v) if v.is_finite() => Expr::Num(v),
        _ => e,
    }
}

pub(super) fn parse(source: &str, dim: usize) -> Result<Expr, ParseError> {
    if dim == 0 {
        return Err(ParseError::ZeroDimension);
    }
    if source.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
        dim,
    };
    let e = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return parser.syntax("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x1 + * 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match parse("(x1 + 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("{other:?}"),
        }
        match parse("x1 $ 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            parse("foo(x1)", 1),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse("2 * x0", 1),
            Err(ParseError::UnknownIdentifier { offset: 4, .. })
        ));
        assert!(matches!(parse("   ", 1), Err(ParseError::Empty)));
    }

    #[test]
    fn precedence() {
        // -x^2 is -(x^2); 2^3^2 is 2^(3^2)
        let e = parse("-x1^2", 1).unwrap();
        assert!(matches!(e, Expr::Neg(_)));
        assert_eq!(parse("2^3^2", 1).unwrap(), Expr::Num(512.0));
        assert_eq!(parse("1 - 2 - 3", 1).unwrap(), Expr::Num(-4.0));
        assert_eq!(parse("8 / 4 / 2", 1).unwrap(), Expr::Num(1.0));
    }

    #[test]
    fn unicode_minus() {
        assert_eq!(
            parse("\u{2212}x1", 1).unwrap(),
            Expr::Neg(Box::new(Expr::Var(0)))
        );
    }

    #[test]
    fn exponent_literals() {
        assert_eq!(parse("1.5e3", 1).unwrap(), Expr::Num(1500.0));
        assert_eq!(parse("2E-2", 1).unwrap(), Expr::Num(0.02));
        assert_eq!(parse(".5", 1).unwrap(), Expr::Num(0.5));
    }
}
