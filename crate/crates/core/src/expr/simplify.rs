//! Light algebraic cleanup for report output: constant folding, neutral
//! elements, annihilation by zero, and `x - x` cancellation on structurally
//! equal operands. No reordering or collection of like terms.

use super::Expr;

pub(super) fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => neg(simplify(a)),
        Expr::Add(a, b) => add(simplify(a), simplify(b)),
        Expr::Sub(a, b) => sub(simplify(a), simplify(b)),
        Expr::Mul(a, b) => mul(simplify(a), simplify(b)),
        Expr::Pow(a, k) => pow(simplify(a), *k),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::neg(other),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), other) | (other, Expr::Const(z)) if z == 0.0 => other,
        (x, Expr::Neg(y)) => sub(x, *y),
        (x, Expr::Const(c)) if c < 0.0 => Expr::sub(x, Expr::Const(-c)),
        (x, y) => Expr::add(x, y),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (x, Expr::Const(0.0)) => x,
        (Expr::Const(0.0), y) => neg(y),
        (x, y) if x == y => Expr::Const(0.0),
        (x, Expr::Neg(y)) => add(x, *y),
        (x, y) => Expr::sub(x, y),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), other) | (other, Expr::Const(o)) if o == 1.0 => other,
        // c1 * (c2 * x) -> (c1*c2) * x
        (Expr::Const(x), Expr::Mul(l, r)) if matches!(*l, Expr::Const(_)) => {
            let Expr::Const(y) = *l else { unreachable!() };
            mul(Expr::Const(x * y), *r)
        }
        (x, y) => Expr::mul(x, y),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match (a, k) {
        (_, 0) => Expr::Const(1.0),
        (x, 1) => x,
        (Expr::Const(c), k) if c != 0.0 || k > 0 => {
            let v = if k < 0 { 1.0 / c.powi(-k) } else { c.powi(k) };
            if v.is_finite() {
                Expr::Const(v)
            } else {
                Expr::pow(Expr::Const(c), k)
            }
        }
        (x, k) => Expr::pow(x, k),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_expr, parse_fde};

    fn simp(s: &str) -> String {
        parse_fde(s).unwrap().simplify().to_string()
    }

    #[test]
    fn zero_product_vanishes() {
        assert_eq!(simp("G + 0*B_I"), "G(t_n)");
    }

    #[test]
    fn constants_fold() {
        assert_eq!(simp("G + (2*pow(10,1))*F_ch"), "G(t_n) + 20*F_ch(t_n)");
        assert_eq!(simp("G + 3*(2*HR)"), "G(t_n) + 6*HR(t_n)");
    }

    #[test]
    fn self_cancellation() {
        assert_eq!(simp("G + (B_I - B_I)"), "G(t_n)");
    }

    #[test]
    fn neutral_elements() {
        assert_eq!(simp("G + 1*HR*1 - 0"), "G(t_n) + HR(t_n)");
        assert_eq!(simp("G + pow(C,1) + pow(S,0)"), "G(t_n) + C(t_n) + 1");
        assert_eq!(simp("G + -(-HR)"), "G(t_n) + HR(t_n)");
        assert_eq!(simp("G + (0 - HR)"), "G(t_n) - HR(t_n)");
        assert_eq!(simp("G - (-HR)"), "G(t_n) + HR(t_n)");
    }

    #[test]
    fn fde_simplification_keeps_the_leading_g() {
        let e = parse_fde("G + (0 - HR)").unwrap().simplify_fde();
        assert!(e.is_fde_form());
        assert_eq!(e.to_string(), "G(t_n) - HR(t_n)");
        let zero = parse_fde("G + 0*B_I").unwrap().simplify_fde();
        assert_eq!(zero, parse_expr("G").unwrap());
        assert!(zero.is_fde_form());
    }

    #[test]
    fn fde_shape_survives() {
        let e = parse_fde("G + (B_I - B_I)").unwrap().simplify();
        assert_eq!(e, parse_expr("G").unwrap());
        // The bare `G` is still parseable as an FDE with zero increment.
        assert!(parse_fde(&e.to_string()).is_ok());
    }
}
