use std::fmt::{self, Write};

use super::{signed_terms, Expr, VarRef};

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lag == 0 {
            write!(f, "{}(t_n)", self.var)
        } else {
            write!(f, "{}(t_n-{})", self.var, self.lag)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_sum(self, &mut out);
        f.write_str(&out)
    }
}

fn write_sum(e: &Expr, out: &mut String) {
    for (i, (negated, term)) in signed_terms(e).into_iter().enumerate() {
        let (term_neg, body) = term_string(term);
        let neg = negated != term_neg;
        match (i, neg) {
            (0, false) => {}
            (0, true) => out.push('-'),
            (_, false) => out.push_str(" + "),
            (_, true) => out.push_str(" - "),
        }
        out.push_str(&body);
    }
}

/// Prints a non-additive term, pulling a leading negative sign out so the
/// caller can fold it into the surrounding `+`/`-`.
fn term_string(e: &Expr) -> (bool, String) {
    match e {
        Expr::Const(c) if *c < 0.0 => (true, number(-c)),
        Expr::Neg(a) => {
            let (neg, s) = term_string(a);
            (!neg, s)
        }
        Expr::Mul(a, b) => {
            let (neg, mut s) = term_string(a);
            s.push('*');
            s.push_str(&factor(b));
            (neg, s)
        }
        _ => (false, factor(e)),
    }
}

/// Prints `e` as an operand of `*` in right position.
fn factor(e: &Expr) -> String {
    match e {
        Expr::Const(c) if *c < 0.0 => format!("(-{})", number(-c)),
        Expr::Const(c) => number(*c),
        Expr::Var(r) => r.to_string(),
        Expr::Pow(a, k) => {
            let mut s = String::from("pow(");
            write_sum(a, &mut s);
            let _ = write!(s, ",{k})");
            s
        }
        Expr::Mul(a, b) if !starts_negative(a) => format!("{}*{}", factor(a), factor(b)),
        Expr::Add(..) | Expr::Sub(..) | Expr::Neg(_) | Expr::Mul(..) => {
            let mut s = String::from("(");
            write_sum(e, &mut s);
            s.push(')');
            s
        }
    }
}

fn starts_negative(e: &Expr) -> bool {
    match e {
        Expr::Const(c) => *c < 0.0,
        Expr::Neg(_) => true,
        Expr::Mul(a, _) => starts_negative(a),
        _ => false,
    }
}

fn number(c: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{c}")
}
