//! Expression trees for the right-hand side of a finite difference equation.
//!
//! An [`Expr`] is evaluated against [`Bindings`], printed in a canonical infix
//! form (`G(t_n) - F_ch(t_n)*HR(t_n) + 3.6`), parsed back from that form, and
//! lightly simplified for reporting.

mod compiled;
mod display;
mod parse;
mod simplify;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::variable::{VariableId, VARIABLE_COUNT};

pub use compiled::Compiled;
pub use parse::parse_expr;

/// A variable occurrence, optionally looking `lag` samples into the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub var: VariableId,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lag: u8,
}

fn is_zero(v: &u8) -> bool {
    *v == 0
}

impl VarRef {
    pub const fn now(var: VariableId) -> Self {
        VarRef { var, lag: 0 }
    }

    pub const fn lagged(var: VariableId, lag: u8) -> Self {
        VarRef { var, lag }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(VarRef),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Integer power; a negative exponent means `1 / base^|e|`.
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("unbound variable {}", .0.var)]
    Unbound(VarRef),
}

/// Source of variable values during evaluation.
pub trait Bindings {
    fn value(&self, var: VarRef) -> Option<f64>;
}

impl Bindings for [f64; VARIABLE_COUNT] {
    fn value(&self, var: VarRef) -> Option<f64> {
        (var.lag == 0).then(|| self[var.var.index()])
    }
}

impl Bindings for HashMap<VariableId, f64> {
    fn value(&self, var: VarRef) -> Option<f64> {
        if var.lag != 0 {
            return None;
        }
        self.get(&var.var).copied()
    }
}

impl Bindings for BTreeMap<VariableId, f64> {
    fn value(&self, var: VarRef) -> Option<f64> {
        if var.lag != 0 {
            return None;
        }
        self.get(&var.var).copied()
    }
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn var(v: VariableId) -> Self {
        Expr::Var(VarRef::now(v))
    }

    pub fn lagged(v: VariableId, lag: u8) -> Self {
        Expr::Var(VarRef::lagged(v, lag))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Self {
        Expr::Neg(Box::new(a))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, e: i32) -> Self {
        Expr::Pow(Box::new(a), e)
    }

    /// Product of two variables, the shape of a quadratic library term.
    pub fn product(a: VariableId, b: VariableId) -> Self {
        Expr::mul(Expr::var(a), Expr::var(b))
    }

    pub fn eval<B: Bindings + ?Sized>(&self, env: &B) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(r) => env.value(*r).ok_or(EvalError::Unbound(*r))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Pow(a, e) => {
                let x = a.eval(env)?;
                if *e < 0 {
                    if x == 0.0 {
                        return Err(EvalError::ZeroToNegativePower);
                    }
                    1.0 / x.powi(-*e)
                } else {
                    x.powi(*e)
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Visits every variable occurrence.
    pub fn for_each_var(&self, f: &mut impl FnMut(VarRef)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(r) => f(*r),
            Expr::Neg(a) | Expr::Pow(a, _) => a.for_each_var(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    /// Largest lag referenced anywhere in the tree.
    pub fn max_lag(&self) -> u8 {
        let mut lag = 0;
        self.for_each_var(&mut |r| lag = lag.max(r.lag));
        lag
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) => 1 + a.node_count(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Splits an FDE right-hand side `G + f` into its increment `f`. A bare
    /// `G` is the identity dynamics with a zero increment.
    pub fn fde_increment(&self) -> Option<&Expr> {
        static ZERO: Expr = Expr::Const(0.0);
        match self {
            Expr::Add(a, b) if a.is_glucose() => Some(b),
            e if e.is_glucose() => Some(&ZERO),
            _ => None,
        }
    }

    fn is_glucose(&self) -> bool {
        matches!(
            self,
            Expr::Var(VarRef {
                var: VariableId::G,
                lag: 0
            })
        )
    }

    pub fn is_fde_form(&self) -> bool {
        self.fde_increment().is_some()
    }

    /// Canonical infix string, e.g. `G(t_n) - F_ch(t_n)*HR(t_n) + 3.6`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    /// Simplifies the increment of an FDE right-hand side while keeping the
    /// `G + f` shape; a vanishing increment leaves just `G`.
    pub fn simplify_fde(&self) -> Expr {
        match self.fde_increment() {
            Some(inc) => match inc.simplify() {
                Expr::Const(0.0) => Expr::var(VariableId::G),
                f => Expr::add(Expr::var(VariableId::G), f),
            },
            None => self.simplify(),
        }
    }
}

/// Rebuilds an expression from signed additive terms, left-associated.
pub fn sum_of_terms(terms: Vec<(bool, Expr)>) -> Option<Expr> {
    let mut iter = terms.into_iter();
    let (neg, first) = iter.next()?;
    let mut acc = if neg { Expr::neg(first) } else { first };
    for (neg, t) in iter {
        acc = if neg { Expr::sub(acc, t) } else { Expr::add(acc, t) };
    }
    Some(acc)
}

/// Flattens the additive skeleton of `e` into signed terms (`true` = subtracted).
pub(crate) fn signed_terms(e: &Expr) -> Vec<(bool, &Expr)> {
    fn walk<'a>(e: &'a Expr, negate: bool, out: &mut Vec<(bool, &'a Expr)>) {
        match e {
            Expr::Add(a, b) => {
                walk(a, negate, out);
                walk(b, negate, out);
            }
            Expr::Sub(a, b) => {
                walk(a, negate, out);
                walk(b, !negate, out);
            }
            Expr::Neg(a) => walk(a, !negate, out),
            _ => out.push((negate, e)),
        }
    }
    let mut out = Vec::new();
    walk(e, false, &mut out);
    out
}

/// Parses a canonical FDE string and normalizes it to `G + f`.
///
/// The leading bare `G` term is required; the remaining terms become `f`.
pub fn parse_fde(text: &str) -> Result<Expr, crate::grammar::ParseError> {
    let expr = parse_expr(text)?;
    let terms = signed_terms(&expr);
    let g = Expr::var(VariableId::G);
    match terms.first() {
        Some((false, t)) if **t == g => {}
        _ => {
            return Err(crate::grammar::ParseError::new(
                1,
                format!("`{text}` is not of the form G + f"),
            ))
        }
    }
    let rest: Vec<(bool, Expr)> = terms[1..].iter().map(|(neg, t)| (*neg, (*t).clone())).collect();
    let increment = sum_of_terms(rest).unwrap_or(Expr::Const(0.0));
    Ok(Expr::add(g, increment))
}
