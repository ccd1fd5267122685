//! Exact interval propagation of single-variable rows. Cheap enough to run
//! before every simplex call; it settles the common case of one symbolic
//! input outright and refutes many infeasible branch sides early.

use num_traits::{Signed, Zero};

use super::simplex::Q;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Interval {
    pub lo: Q,
    pub lo_open: bool,
    pub hi: Q,
    pub hi_open: bool,
}

impl Interval {
    pub fn closed(lo: Q, hi: Q) -> Self {
        Interval {
            lo,
            lo_open: false,
            hi,
            hi_open: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    /// A point of a non-empty interval, in its interior when it has one.
    pub fn midpoint(&self) -> Q {
        (&self.lo + &self.hi) / Q::from_integer(2.into())
    }

    /// Tightens with `x >= v` (or `x > v`); returns whether anything changed.
    fn raise(&mut self, v: Q, open: bool) -> bool {
        if v > self.lo || (v == self.lo && open && !self.lo_open) {
            self.lo = v;
            self.lo_open = open;
            true
        } else {
            false
        }
    }

    fn lower(&mut self, v: Q, open: bool) -> bool {
        if v < self.hi || (v == self.hi && open && !self.hi_open) {
            self.hi = v;
            self.hi_open = open;
            true
        } else {
            false
        }
    }
}

/// Applies `a·x + c ≥ 0` (`> 0` if strict) to `iv`.
pub(crate) fn tighten(iv: &mut Interval, a: &Q, c: &Q, strict: bool) -> bool {
    let v = -c / a;
    if a.is_positive() {
        iv.raise(v, strict)
    } else {
        iv.lower(v, strict)
    }
}

/// Whether `Σ aⱼ·xⱼ + c ≥ 0` (`> 0` if strict) has no solution in the box.
pub(crate) fn refuted(coeffs: &[(usize, Q)], c: &Q, strict: bool, boxes: &[Interval]) -> bool {
    let mut max = c.clone();
    for (j, a) in coeffs {
        let b = &boxes[*j];
        if a.is_positive() {
            max += a * &b.hi;
        } else if !a.is_zero() {
            max += a * &b.lo;
        }
    }
    max.is_negative() || (strict && max.is_zero())
}
