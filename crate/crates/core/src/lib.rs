//! Glucose forecasting with finite difference equations learned by
//! grammatical evolution and sparse regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod evolve;
pub mod expr;
pub mod fde;
pub mod grammar;
pub mod preprocess;
pub mod seed;
pub mod sindy;
pub mod variable;

pub use data::{RawSeries, Segment, Split};
pub use error::{Error, Result};
pub use expr::{Expr, VarRef};
pub use grammar::{Genotype, Grammar};
pub use variable::VariableId;
