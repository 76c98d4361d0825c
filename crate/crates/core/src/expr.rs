//! A small scalar expression language used to define metric components,
//! conformal factors and parametric curves from config files.
//!
//! Grammar: `+ - * / ^`, parentheses, the functions `sin cos exp sqrt`,
//! the constant `pi`, numeric literals, and a caller-declared variable list
//! (`y1 y2` for metric entries, `s` for curve parameters). Expressions are
//! compiled once to a postfix program and evaluated on a fixed stack.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("expression `{text}` does not evaluate to a finite number")]
    NonFinite { text: String },
    #[error("expression `{text}` expects {expected} argument(s), got {got}")]
    ArityMismatch {
        text: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

/// A compiled scalar expression over a fixed variable list.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    vars: Vec<String>,
    program: Vec<Op>,
    max_depth: usize,
}

const STACK_CAP: usize = 64;

impl Expression {
    /// Parses `text` with the given variable names.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Expression, ExprError> {
        if text.trim().is_empty() {
            return Err(ExprError::Syntax {
                pos: 0,
                msg: "empty expression".into(),
            });
        }
        let mut parser = Parser {
            bytes: text.as_bytes(),
            pos: 0,
            vars,
            program: Vec::new(),
        };
        parser.skip_ws();
        parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.bytes.len() {
            return Err(ExprError::Syntax {
                pos: parser.pos,
                msg: format!("unexpected `{}`", text[parser.pos..].chars().next().unwrap()),
            });
        }
        let max_depth = stack_depth(&parser.program);
        if max_depth > STACK_CAP {
            return Err(ExprError::Syntax {
                pos: 0,
                msg: "expression too deeply nested".into(),
            });
        }
        Ok(Expression {
            source: text.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            program: parser.program,
            max_depth,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluates the expression; a non-finite result is a domain error,
    /// never a panic.
    pub fn eval(&self, args: &[f64]) -> Result<f64, ExprError> {
        if args.len() != self.vars.len() {
            return Err(ExprError::ArityMismatch {
                text: self.source.clone(),
                expected: self.vars.len(),
                got: args.len(),
            });
        }
        let mut stack = [0.0f64; STACK_CAP];
        let mut top = 0usize;
        for op in &self.program {
            match *op {
                Op::Const(c) => {
                    stack[top] = c;
                    top += 1;
                }
                Op::Var(i) => {
                    stack[top] = args[i];
                    top += 1;
                }
                Op::Neg => stack[top - 1] = -stack[top - 1],
                Op::Sin => stack[top - 1] = stack[top - 1].sin(),
                Op::Cos => stack[top - 1] = stack[top - 1].cos(),
                Op::Exp => stack[top - 1] = stack[top - 1].exp(),
                Op::Sqrt => stack[top - 1] = stack[top - 1].sqrt(),
                Op::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Op::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                Op::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Op::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                Op::Pow => {
                    top -= 1;
                    stack[top - 1] = stack[top - 1].powf(stack[top]);
                }
            }
        }
        debug_assert_eq!(top, 1);
        let v = stack[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite {
                text: self.source.clone(),
            })
        }
    }

    /// One-variable convenience wrapper.
    pub fn eval1(&self, s: f64) -> Result<f64, ExprError> {
        self.eval(&[s])
    }

    /// Two-variable convenience wrapper.
    pub fn eval2(&self, y1: f64, y2: f64) -> Result<f64, ExprError> {
        self.eval(&[y1, y2])
    }

    /// Constant expression with the given variable list.
    pub fn constant(value: f64, vars: &[&str]) -> Expression {
        Expression {
            source: format!("{value}"),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            program: vec![Op::Const(value)],
            max_depth: 1,
        }
    }
}

fn stack_depth(program: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in program {
        match op {
            Op::Const(_) | Op::Var(_) => depth += 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => depth -= 1,
            _ => {}
        }
        max = max.max(depth);
    }
    max
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
    program: Vec<Op>,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<(), ExprError> {
        self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    self.term()?;
                    self.program.push(Op::Add);
                }
                Some(b'-') => {
                    self.pos += 1;
                    self.term()?;
                    self.program.push(Op::Sub);
                }
                _ => return Ok(()),
            }
        }
    }

    fn term(&mut self) -> Result<(), ExprError> {
        self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    self.unary()?;
                    self.program.push(Op::Mul);
                }
                Some(b'/') => {
                    self.pos += 1;
                    self.unary()?;
                    self.program.push(Op::Div);
                }
                _ => return Ok(()),
            }
        }
    }

    // Unary minus binds looser than power: -x^2 = -(x^2), x^-2 = x^(-2).
    fn unary(&mut self) -> Result<(), ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                self.unary()?;
                self.program.push(Op::Neg);
                Ok(())
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // Right-associative power.
    fn power(&mut self) -> Result<(), ExprError> {
        self.primary()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.unary()?;
            self.program.push(Op::Pow);
        }
        Ok(())
    }

    fn primary(&mut self) -> Result<(), ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(ExprError::Syntax {
                pos: start,
                msg: "unexpected end of expression".into(),
            }),
            Some(b'(') => {
                self.pos += 1;
                self.expr()?;
                self.skip_ws();
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(())
                } else {
                    Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    })
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(ExprError::Syntax {
                pos: start,
                msg: format!("unexpected `{}`", c as char),
            }),
        }
    }

    fn number(&mut self) -> Result<(), ExprError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                // exponent part, optionally signed
                let mut ahead = self.pos + 1;
                if matches!(self.bytes.get(ahead), Some(b'+') | Some(b'-')) {
                    ahead += 1;
                }
                if matches!(self.bytes.get(ahead), Some(d) if d.is_ascii_digit()) {
                    self.pos = ahead + 1;
                    while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                        self.pos += 1;
                    }
                }
                break;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => {
                self.program.push(Op::Const(v));
                Ok(())
            }
            Err(_) => Err(ExprError::Syntax {
                pos: start,
                msg: format!("bad numeric literal `{text}`"),
            }),
        }
    }

    fn identifier(&mut self) -> Result<(), ExprError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = match name {
                "sin" => Op::Sin,
                "cos" => Op::Cos,
                "exp" => Op::Exp,
                "sqrt" => Op::Sqrt,
                _ => {
                    return Err(ExprError::UnknownIdentifier {
                        name: name.to_string(),
                        pos: start,
                    })
                }
            };
            self.pos += 1;
            self.expr()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(ExprError::Syntax {
                    pos: self.pos,
                    msg: "expected `)`".into(),
                });
            }
            self.pos += 1;
            self.program.push(func);
            Ok(())
        } else if name == "pi" {
            self.program.push(Op::Const(std::f64::consts::PI));
            Ok(())
        } else if let Some(i) = self.vars.iter().position(|v| *v == name) {
            self.program.push(Op::Var(i));
            Ok(())
        } else {
            Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                pos: start,
            })
        }
    }
}
