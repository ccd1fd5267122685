//! Floating-point twin of the exact simplex. Its answers are only hints:
//! a witness is re-validated exactly, and an infeasibility claim comes with
//! row multipliers that are checked exactly as a Farkas certificate.

use std::time::Instant;

pub(crate) enum FOutcome {
    Sat(Vec<f64>),
    /// Non-negative multipliers `(row, y)` combining rows into a
    /// contradiction over the box.
    Unsat(Vec<(usize, f64)>),
    /// Pivot limit, deadline or numerical trouble.
    GaveUp,
}

pub(crate) struct FProblem<'a> {
    pub bounds: &'a [(f64, f64)],
    pub rows: Vec<&'a [(usize, f64)]>,
    pub row_lower: Vec<f64>,
}

const PIVOT_EPS: f64 = 1e-11;

pub(crate) fn solve(p: &FProblem<'_>, deadline: Instant, max_pivots: u64, pivots: &mut u64) -> FOutcome {
    let n = p.bounds.len();
    let m = p.rows.len();
    let mut lower: Vec<f64> = p.bounds.iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = p.bounds.iter().map(|b| b.1).collect();
    let mut value: Vec<f64> = lower.clone();
    let mut coef: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (row, &lo) in p.rows.iter().zip(&p.row_lower) {
        let mut dense = vec![0.0; n];
        let mut v = 0.0;
        for &(j, a) in row.iter() {
            v += a * value[j];
            dense[j] += a;
        }
        coef.push(dense);
        value.push(v);
        lower.push(lo);
        upper.push(f64::INFINITY);
    }
    let mut row_var: Vec<usize> = (n..n + m).collect();
    let mut col_var: Vec<usize> = (0..n).collect();

    let mut done = 0u64;
    loop {
        if done >= max_pivots || Instant::now() >= deadline {
            *pivots += done;
            return FOutcome::GaveUp;
        }
        let mut leaving: Option<(usize, usize)> = None;
        for (r, &v) in row_var.iter().enumerate() {
            if (value[v] < lower[v] || value[v] > upper[v]) && leaving.is_none_or(|(_, lv)| v < lv) {
                leaving = Some((r, v));
            }
        }
        let Some((r, v)) = leaving else {
            *pivots += done;
            return if value.iter().all(|x| x.is_finite()) {
                FOutcome::Sat(value[..n].to_vec())
            } else {
                FOutcome::GaveUp
            };
        };
        let increase = value[v] < lower[v];
        let mut entering: Option<(usize, usize)> = None;
        for (c, &x) in col_var.iter().enumerate() {
            let a = coef[r][c];
            if a.abs() <= PIVOT_EPS {
                continue;
            }
            let ok = if increase == (a > 0.0) {
                value[x] < upper[x]
            } else {
                value[x] > lower[x]
            };
            if ok && entering.is_none_or(|(_, ex)| x < ex) {
                entering = Some((c, x));
            }
        }
        let Some((c, _)) = entering else {
            *pivots += done;
            return FOutcome::Unsat(certificate(&coef[r], &col_var, v, n, increase));
        };

        // Pivot: the leaving variable goes to its violated bound.
        let target = if increase { lower[v] } else { upper[v] };
        let a = coef[r][c];
        let theta = (target - value[v]) / a;
        let entering_var = col_var[c];
        value[v] = target;
        value[entering_var] += theta;
        for k in 0..m {
            if k != r && coef[k][c] != 0.0 {
                value[row_var[k]] += coef[k][c] * theta;
            }
        }
        let inv = 1.0 / a;
        let mut pivot_row = std::mem::take(&mut coef[r]);
        for (j, x) in pivot_row.iter_mut().enumerate() {
            *x = if j == c { inv } else { -*x * inv };
        }
        for (k, row) in coef.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let b = std::mem::replace(&mut row[c], 0.0);
            if b == 0.0 {
                continue;
            }
            for (j, x) in pivot_row.iter().enumerate() {
                if j == c {
                    row[j] = b * x;
                } else {
                    row[j] += b * x;
                }
            }
        }
        coef[r] = pivot_row;
        row_var[r] = entering_var;
        col_var[c] = v;
        done += 1;
    }
}

/// Multipliers read off a row whose basic variable cannot be repaired:
/// the row itself (when it is a slack) plus every non-basic slack that
/// blocks the repair.
fn certificate(row: &[f64], col_var: &[usize], basic: usize, n: usize, increase: bool) -> Vec<(usize, f64)> {
    let mut y = Vec::new();
    if basic >= n {
        y.push((basic - n, 1.0));
    }
    for (c, &x) in col_var.iter().enumerate() {
        if x >= n {
            let w = if increase { -row[c] } else { row[c] };
            if w > 0.0 {
                y.push((x - n, w));
            }
        }
    }
    y.sort_by_key(|t| t.0);
    y
}
