//! SMT-LIB 2.6 (QF_LRA) rendering. Literals are exact: every `f64` is a
//! dyadic rational and is written as an integer or a `(/ p q)` term.

use std::fmt::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::symexpr::{LinearConstraint, SymVar};

fn smt_int(i: &BigInt) -> String {
    format!("{i}.0")
}

pub fn smt_rational(q: &BigRational) -> String {
    let mag = q.abs();
    let body = if mag.denom().is_one() {
        smt_int(mag.numer())
    } else {
        format!("(/ {} {})", smt_int(mag.numer()), smt_int(mag.denom()))
    };
    if q.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

pub fn smt_f64(v: f64) -> String {
    smt_rational(&BigRational::from_float(v).expect("finite literal"))
}

fn smt_expr(c: &LinearConstraint) -> String {
    let e = c.expr();
    let mut parts = vec![smt_f64(e.constant_term())];
    for &(v, k) in e.terms() {
        parts.push(format!("(* {} {v})", smt_f64(k)));
    }
    format!("(+ {})", parts.join(" "))
}

pub fn smt_constraint(c: &LinearConstraint) -> String {
    format!("({} {} 0.0)", c.relation().symbol(), smt_expr(c))
}

fn conjunction(cs: &[LinearConstraint]) -> String {
    match cs {
        [] => "true".to_owned(),
        [one] => smt_constraint(one),
        _ => format!("(and {})", cs.iter().map(smt_constraint).collect::<Vec<_>>().join(" ")),
    }
}

/// Renders a full script: declarations, bounds, one `assert` per constraint,
/// and optionally one disjunction of conjunctions (`any_of`).
pub fn render_script(
    vars: &[SymVar],
    asserts: &[LinearConstraint],
    any_of: Option<&[Vec<LinearConstraint>]>,
) -> String {
    let mut s = String::new();
    s.push_str("(set-logic QF_LRA)\n");
    for v in vars {
        let _ = writeln!(s, "(declare-fun {} () Real) ; {}", v.id, v.name);
    }
    for v in vars {
        let _ = writeln!(s, "(assert (<= {} {}))", smt_f64(v.lower), v.id);
        let _ = writeln!(s, "(assert (<= {} {}))", v.id, smt_f64(v.upper));
    }
    for c in asserts {
        let _ = writeln!(s, "(assert {})", smt_constraint(c));
    }
    if let Some(alts) = any_of {
        if alts.is_empty() {
            s.push_str("(assert false)\n");
        } else {
            let body: Vec<String> = alts.iter().map(|a| conjunction(a)).collect();
            if body.len() == 1 {
                let _ = writeln!(s, "(assert {})", body[0]);
            } else {
                let _ = writeln!(s, "(assert (or {}))", body.join(" "));
            }
        }
    }
    s.push_str("(check-sat)\n(get-model)\n");
    s
}
