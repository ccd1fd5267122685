//! Bounded general simplex over exact rationals.
//!
//! Every row defines a slack `s_r = Σ a_rj·x_j` with lower bound `s_r ≥ b_r`
//! or `s_r > b_r`; original variables carry box bounds. Strict bounds are
//! handled with δ-rationals `c + k·δ` for an infinitesimal `δ > 0`, so a
//! strict system is decided exactly in one run. Feasibility is restored one
//! violated basic variable at a time with Bland's rule (smallest variable
//! index both for the leaving and the entering variable), which guarantees
//! termination.

use std::cmp::Ordering;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub(crate) type Q = BigRational;

pub(crate) enum Outcome {
    Sat(Vec<Q>),
    Unsat,
    Timeout,
}

pub(crate) struct Problem<'a> {
    /// Box bounds of the original variables.
    pub bounds: &'a [(Q, Q)],
    /// Sparse rows `(var, coeff)`.
    pub rows: Vec<&'a [(usize, Q)]>,
    /// Lower bound of each row's slack, and whether it is strict.
    pub row_lower: Vec<(Q, bool)>,
}

/// `c + k·δ`, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Dq {
    c: Q,
    k: Q,
}

impl Dq {
    fn real(c: Q) -> Self {
        Dq { c, k: Q::zero() }
    }

    fn add_scaled(&mut self, other: &Dq, a: &Q) {
        self.c += &other.c * a;
        self.k += &other.k * a;
    }

    fn sub(&self, other: &Dq) -> Dq {
        Dq {
            c: &self.c - &other.c,
            k: &self.k - &other.k,
        }
    }

    fn div(&self, a: &Q) -> Dq {
        Dq {
            c: &self.c / a,
            k: &self.k / a,
        }
    }

    fn at(&self, delta: &Q) -> Q {
        &self.c + &self.k * delta
    }
}

impl PartialOrd for Dq {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dq {
    fn cmp(&self, other: &Self) -> Ordering {
        self.c.cmp(&other.c).then_with(|| self.k.cmp(&other.k))
    }
}

/// Largest `δ ≤ 1` keeping `lo ≤ hi` once `δ` is made concrete, given that
/// it holds for infinitesimal `δ`.
fn delta_limit(lo: &Dq, hi: &Dq, delta: &mut Q) {
    if lo.c < hi.c && lo.k > hi.k {
        let d = (&hi.c - &lo.c) / (&lo.k - &hi.k);
        if d < *delta {
            *delta = d;
        }
    }
}

struct Tableau {
    lower: Vec<Option<Dq>>,
    upper: Vec<Option<Dq>>,
    value: Vec<Dq>,
    /// Basic variable of each row.
    row_var: Vec<usize>,
    /// Row of each variable when basic.
    var_row: Vec<Option<usize>>,
    /// Non-basic variable of each column.
    col_var: Vec<usize>,
    /// `value[row_var[r]] = Σ_c coef[r][c] · value[col_var[c]]`
    coef: Vec<Vec<Q>>,
}

impl Tableau {
    fn new(p: &Problem<'_>) -> Self {
        let n = p.bounds.len();
        let m = p.rows.len();
        let mut lower: Vec<Option<Dq>> = p.bounds.iter().map(|b| Some(Dq::real(b.0.clone()))).collect();
        let mut upper: Vec<Option<Dq>> = p.bounds.iter().map(|b| Some(Dq::real(b.1.clone()))).collect();
        let mut value: Vec<Dq> = p.bounds.iter().map(|b| Dq::real(b.0.clone())).collect();
        let mut coef = Vec::with_capacity(m);
        for (row, (lo, strict)) in p.rows.iter().zip(&p.row_lower) {
            let mut dense = vec![Q::zero(); n];
            let mut v = Dq::real(Q::zero());
            for (j, a) in row.iter() {
                v.add_scaled(&value[*j], a);
                dense[*j] += a;
            }
            coef.push(dense);
            value.push(v);
            let k = if *strict { Q::one() } else { Q::zero() };
            lower.push(Some(Dq { c: lo.clone(), k }));
            upper.push(None);
        }
        Tableau {
            lower,
            upper,
            value,
            row_var: (n..n + m).collect(),
            var_row: (0..n).map(|_| None).chain((0..m).map(Some)).collect(),
            col_var: (0..n).collect(),
            coef,
        }
    }

    fn below_lower(&self, v: usize) -> bool {
        self.lower[v].as_ref().is_some_and(|l| self.value[v] < *l)
    }

    fn above_upper(&self, v: usize) -> bool {
        self.upper[v].as_ref().is_some_and(|u| self.value[v] > *u)
    }

    fn can_increase(&self, v: usize) -> bool {
        self.upper[v].as_ref().is_none_or(|u| self.value[v] < *u)
    }

    fn can_decrease(&self, v: usize) -> bool {
        self.lower[v].as_ref().is_none_or(|l| self.value[v] > *l)
    }

    fn pivot_and_update(&mut self, r: usize, c: usize, target: Dq) -> u64 {
        let leaving = self.row_var[r];
        let entering = self.col_var[c];
        let a = self.coef[r][c].clone();
        let theta = target.sub(&self.value[leaving]).div(&a);
        self.value[leaving] = target;
        self.value[entering].add_scaled(&theta, &Q::one());
        for k in 0..self.coef.len() {
            if k != r && !self.coef[k][c].is_zero() {
                let ak = self.coef[k][c].clone();
                self.value[self.row_var[k]].add_scaled(&theta, &ak);
            }
        }

        // Solve row r for the entering variable.
        let inv = a.recip();
        let mut pivot_row = std::mem::take(&mut self.coef[r]);
        for (j, x) in pivot_row.iter_mut().enumerate() {
            if j == c {
                *x = inv.clone();
            } else if !x.is_zero() {
                *x = -(&*x * &inv);
            }
        }
        for k in 0..self.coef.len() {
            if k == r {
                continue;
            }
            let b = std::mem::take(&mut self.coef[k][c]);
            if b.is_zero() {
                continue;
            }
            let row = &mut self.coef[k];
            for (j, x) in pivot_row.iter().enumerate() {
                if j == c {
                    row[j] = &b * x;
                } else if !x.is_zero() {
                    row[j] += &b * x;
                }
            }
        }
        self.coef[r] = pivot_row;
        self.row_var[r] = entering;
        self.col_var[c] = leaving;
        self.var_row[entering] = Some(r);
        self.var_row[leaving] = None;
        1
    }
}

impl Tableau {
    /// Replaces `δ` by a positive rational small enough that every bound
    /// still holds, and returns the original variables.
    fn concretize(&self, n: usize) -> Vec<Q> {
        let mut delta = Q::one();
        for (v, x) in self.value.iter().enumerate() {
            if let Some(l) = &self.lower[v] {
                delta_limit(l, x, &mut delta);
            }
            if let Some(u) = &self.upper[v] {
                delta_limit(x, u, &mut delta);
            }
        }
        self.value[..n].iter().map(|x| x.at(&delta)).collect()
    }
}

/// Decides feasibility. `pivots` is incremented by the number of pivots done.
pub(crate) fn solve(p: &Problem<'_>, deadline: Option<Instant>, pivots: &mut u64) -> Outcome {
    let n = p.bounds.len();
    if p.bounds.iter().any(|(l, u)| l > u) {
        return Outcome::Unsat;
    }
    let mut t = Tableau::new(p);
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Outcome::Timeout;
        }
        // Leaving variable: smallest index among violated basic variables.
        let mut leaving: Option<(usize, usize)> = None;
        for (r, &v) in t.row_var.iter().enumerate() {
            if (t.below_lower(v) || t.above_upper(v)) && leaving.is_none_or(|(_, lv)| v < lv) {
                leaving = Some((r, v));
            }
        }
        let Some((r, v)) = leaving else {
            return Outcome::Sat(t.concretize(n));
        };
        let increase = t.below_lower(v);
        let mut entering: Option<(usize, usize)> = None;
        for (c, &x) in t.col_var.iter().enumerate() {
            let a = &t.coef[r][c];
            if a.is_zero() {
                continue;
            }
            let ok = if increase == a.is_positive() {
                t.can_increase(x)
            } else {
                t.can_decrease(x)
            };
            if ok && entering.is_none_or(|(_, ex)| x < ex) {
                entering = Some((c, x));
            }
        }
        let Some((c, _)) = entering else {
            return Outcome::Unsat;
        };
        let target = if increase {
            t.lower[v].clone().expect("violated lower bound exists")
        } else {
            t.upper[v].clone().expect("violated upper bound exists")
        };
        *pivots += t.pivot_and_update(r, c, target);
    }
}
