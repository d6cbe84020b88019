//! Flat postfix form of an expression over current-time variables, for the
//! inner loop of fitness evaluation.

use super::{EvalError, Expr};
use crate::variable::VARIABLE_COUNT;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Pow(i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    ops: Vec<Op>,
    depth: usize,
}

impl Compiled {
    /// `None` if the expression reads lagged values.
    pub fn new(expr: &Expr) -> Option<Self> {
        let mut ops = Vec::with_capacity(expr.node_count());
        emit(expr, &mut ops)?;
        let mut depth = 0usize;
        let mut max = 0;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul => depth -= 1,
                Op::Neg | Op::Pow(_) => {}
            }
            max = max.max(depth);
        }
        Some(Compiled { ops, depth: max })
    }

    /// Same result and errors as [`Expr::eval`] with lag-0 values `row`.
    pub fn eval(&self, row: &[f64; VARIABLE_COUNT]) -> Result<f64, EvalError> {
        const INLINE: usize = 32;
        if self.depth <= INLINE {
            let mut stack = [0.0; INLINE];
            self.run(row, &mut stack)
        } else {
            let mut stack = vec![0.0; self.depth];
            self.run(row, &mut stack)
        }
    }

    fn run(&self, row: &[f64; VARIABLE_COUNT], stack: &mut [f64]) -> Result<f64, EvalError> {
        let mut sp = 0;
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => {
                    sp += 1;
                    c
                }
                Op::Var(i) => {
                    sp += 1;
                    row[i]
                }
                Op::Neg => -stack[sp - 1],
                Op::Add => {
                    sp -= 1;
                    stack[sp - 1] + stack[sp]
                }
                Op::Sub => {
                    sp -= 1;
                    stack[sp - 1] - stack[sp]
                }
                Op::Mul => {
                    sp -= 1;
                    stack[sp - 1] * stack[sp]
                }
                Op::Pow(e) => {
                    let x = stack[sp - 1];
                    if e < 0 {
                        if x == 0.0 {
                            return Err(EvalError::ZeroToNegativePower);
                        }
                        1.0 / x.powi(-e)
                    } else {
                        x.powi(e)
                    }
                }
            };
            if !v.is_finite() {
                return Err(EvalError::NonFinite);
            }
            stack[sp - 1] = v;
        }
        Ok(stack[0])
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) -> Option<()> {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Var(r) => {
            if r.lag != 0 {
                return None;
            }
            ops.push(Op::Var(r.var.index()));
        }
        Expr::Neg(a) => {
            emit(a, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            emit(a, ops)?;
            emit(b, ops)?;
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                _ => Op::Mul,
            });
        }
        Expr::Pow(a, k) => {
            emit(a, ops)?;
            ops.push(Op::Pow(*k));
        }
    }
    Some(())
}
