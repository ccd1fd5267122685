//! Feasibility of conjunctions of `e > 0` / `e >= 0` over boxed real
//! variables, with push/pop frames.
//!
//! Constraints arrive with `f64` coefficients and are converted to exact
//! rationals (every finite `f64` is a dyadic rational, so the conversion is
//! lossless). The simplex treats `e > 0` as `e >= δ` for a symbolic
//! infinitesimal `δ`, so strict and non-strict systems alike are decided
//! exactly; a concrete `δ` is substituted only once a model is found. The
//! only `Unknown` outcome is a timeout.
//!
//! Before any pivoting, single-variable rows are folded into an exact
//! tightened box. An empty box, or a row whose maximum over the box misses
//! zero, is Unsat; if every row has one variable, the box midpoint is the
//! witness.
//!
//! Exact pivoting is slow, so each check then runs a floating-point simplex
//! on the system with every row tightened by a small margin. Its witness is
//! accepted only if it validates exactly, and its infeasibility claim only if
//! the multipliers it yields form an exact Farkas refutation of the original
//! rows; anything else falls through to the exact procedure.

mod bounds;
mod fsimplex;
mod simplex;
pub mod smtlib;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::symexpr::{LinearConstraint, SymVar, SymVarId};
use bounds::Interval;
use fsimplex::{FOutcome, FProblem};
use simplex::{Outcome, Problem, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnknownReason {
    Timeout,
}

/// Exact witness, indexed by variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment(Vec<BigRational>);

impl Assignment {
    pub fn get(&self, id: SymVarId) -> Option<&BigRational> {
        self.0.get(id.index())
    }

    pub fn values(&self) -> &[BigRational] {
        &self.0
    }

    /// Nearest `f64` of every value.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_map(&self) -> HashMap<SymVarId, f64> {
        self.to_f64()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (SymVarId(i as u32), v))
            .collect()
    }

    /// Exact evaluation of `c` at this point; `false` if `c` mentions a
    /// variable the assignment lacks.
    pub fn satisfies(&self, c: &LinearConstraint) -> bool {
        let mut v = q_of(c.expr().constant_term());
        for &(id, a) in c.expr().terms() {
            match self.0.get(id.index()) {
                Some(x) => v += q_of(a) * x,
                None => return false,
            }
        }
        if c.is_strict() {
            v.is_positive()
        } else {
            !v.is_negative()
        }
    }

    /// Exact rational image of `f64` values.
    pub fn from_f64(values: &[f64]) -> Option<Self> {
        values
            .iter()
            .map(|&v| BigRational::from_float(v))
            .collect::<Option<Vec<_>>>()
            .map(Assignment)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverResult {
    Sat(Assignment),
    Unsat,
    Unknown(UnknownReason),
}

impl SolverResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolverResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolverResult::Unsat)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            SolverResult::Sat(_) => "sat",
            SolverResult::Unsat => "unsat",
            SolverResult::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Per-`check` wall-clock limit.
    pub timeout: Duration,
    /// Initial margin of [`SolverSession::check_interior`], as a fraction of
    /// the widest variable range.
    pub interior_margin: f64,
    /// Times the margin is halved before falling back to a plain witness.
    pub interior_halvings: u32,
    /// Try the certified floating-point pass before exact pivoting.
    pub float_pass: bool,
    /// Try exact interval propagation before any simplex run.
    pub bound_pass: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            timeout: Duration::from_secs(10),
            interior_margin: 1e-6,
            interior_halvings: 10,
            float_pass: true,
            bound_pass: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub checks: u64,
    pub simplex_runs: u64,
    /// Checks settled by interval propagation alone.
    pub bound_decisions: u64,
    /// Checks the floating-point pass could not settle.
    pub exact_fallbacks: u64,
    pub pivots: u64,
    pub pushes: u64,
    pub pops: u64,
    #[serde(skip)]
    pub time: Duration,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, Q)>,
    constant: Q,
    /// Largest absolute coefficient; scales the margin.
    norm: Q,
    fcoeffs: Vec<(usize, f64)>,
    fnorm: f64,
    strict: bool,
    source: LinearConstraint,
}

impl Row {
    fn value(&self, w: &[Q]) -> Q {
        let mut v = self.constant.clone();
        for (j, a) in &self.coeffs {
            v += a * &w[*j];
        }
        v
    }

    fn holds(&self, w: &[Q]) -> bool {
        let v = self.value(w);
        if self.strict {
            v.is_positive()
        } else {
            !v.is_negative()
        }
    }
}

/// Incremental solving context: variable table plus a stack of constraint
/// frames. Single owner; independent sessions share nothing.
#[derive(Debug, Clone)]
pub struct SolverSession {
    vars: Vec<SymVar>,
    bounds: Vec<(Q, Q)>,
    fbounds: Vec<(f64, f64)>,
    scale: Q,
    frames: Vec<Vec<Row>>,
    /// Box tightened by the single-variable rows on the stack.
    tight: Vec<Interval>,
    /// Per frame, the intervals it overwrote.
    trail: Vec<Vec<(usize, Interval)>>,
    options: SolverOptions,
    deadline: Option<Instant>,
    stats: SolverStats,
}

fn q_of(v: f64) -> Q {
    BigRational::from_float(v).expect("finite value")
}

impl SolverSession {
    pub fn new(vars: Vec<SymVar>) -> Result<Self> {
        Self::with_options(vars, SolverOptions::default())
    }

    pub fn with_options(vars: Vec<SymVar>, options: SolverOptions) -> Result<Self> {
        let mut bounds = Vec::with_capacity(vars.len());
        let mut widest = 0.0f64;
        for (i, v) in vars.iter().enumerate() {
            if v.id.index() != i {
                return Err(Error::InvalidArgument(format!(
                    "variable {} listed at position {i}",
                    v.id
                )));
            }
            if !v.lower.is_finite() || !v.upper.is_finite() || v.lower > v.upper {
                return Err(Error::InvalidArgument(format!(
                    "bounds of {} must be finite with lower <= upper, got [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            widest = widest.max(v.upper - v.lower);
            bounds.push((q_of(v.lower), q_of(v.upper)));
        }
        let widest = if widest > 0.0 && widest.is_finite() {
            widest
        } else {
            1.0
        };
        Ok(SolverSession {
            fbounds: vars.iter().map(|v| (v.lower, v.upper)).collect(),
            vars,
            tight: bounds
                .iter()
                .map(|(l, u)| Interval::closed(l.clone(), u.clone()))
                .collect(),
            trail: Vec::new(),
            bounds,
            scale: q_of(widest),
            frames: Vec::new(),
            options,
            deadline: None,
            stats: SolverStats::default(),
        })
    }

    pub fn vars(&self) -> &[SymVar] {
        &self.vars
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    /// Number of open frames.
    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Extra wall-clock limit applied on top of the per-check timeout.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    /// Opens a frame holding `constraints`.
    pub fn push(&mut self, constraints: &[LinearConstraint]) -> Result<()> {
        let mut frame = Vec::with_capacity(constraints.len());
        for c in constraints {
            let mut coeffs = Vec::with_capacity(c.expr().terms().len());
            let mut norm = Q::zero();
            for &(v, a) in c.expr().terms() {
                if v.index() >= self.vars.len() {
                    return Err(Error::UnboundVariable(v));
                }
                let a = BigRational::from_float(a)
                    .ok_or_else(|| Error::InvalidArgument(format!("non-finite coefficient in {v}")))?;
                let mag = a.abs();
                if mag > norm {
                    norm = mag;
                }
                coeffs.push((v.index(), a));
            }
            let constant = BigRational::from_float(c.expr().constant_term())
                .ok_or_else(|| Error::InvalidArgument("non-finite constant".into()))?;
            frame.push(Row {
                coeffs,
                constant,
                norm,
                fcoeffs: c.expr().terms().iter().map(|&(v, a)| (v.index(), a)).collect(),
                fnorm: c.expr().terms().iter().fold(0.0, |m, t| m.max(t.1.abs())),
                strict: c.is_strict(),
                source: c.clone(),
            });
        }
        let mut saved: Vec<(usize, Interval)> = Vec::new();
        for r in &frame {
            if let [(j, a)] = r.coeffs.as_slice() {
                let before = self.tight[*j].clone();
                if bounds::tighten(&mut self.tight[*j], a, &r.constant, r.strict) && !saved.iter().any(|s| s.0 == *j) {
                    saved.push((*j, before));
                }
            }
        }
        self.trail.push(saved);
        self.frames.push(frame);
        self.stats.pushes += 1;
        Ok(())
    }

    pub fn pop(&mut self) -> Result<()> {
        self.frames.pop().ok_or(Error::StackUnderflow)?;
        self.restore();
        self.stats.pops += 1;
        Ok(())
    }

    fn restore(&mut self) {
        for (j, iv) in self.trail.pop().expect("one trail entry per frame") {
            self.tight[j] = iv;
        }
    }

    /// Pops frames until `depth` remain.
    pub fn truncate(&mut self, depth: usize) {
        while self.frames.len() > depth {
            self.frames.pop();
            self.restore();
            self.stats.pops += 1;
        }
    }

    /// All constraints currently on the stack, bottom frame first.
    pub fn constraints(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.rows().map(|r| &r.source)
    }

    fn rows(&self) -> impl Iterator<Item = &Row> {
        self.frames.iter().flatten()
    }

    /// Exact check of a witness against bounds and every stacked constraint.
    pub fn validates(&self, w: &Assignment) -> bool {
        let w = w.values();
        w.len() == self.bounds.len()
            && w.iter().zip(&self.bounds).all(|(x, (l, u))| l <= x && x <= u)
            && self.rows().all(|r| r.holds(w))
    }

    fn deadline(&self, start: Instant) -> Instant {
        let own = start + self.options.timeout;
        self.deadline.map_or(own, |d| d.min(own))
    }

    fn run(&mut self, margin: Option<&Q>, deadline: Instant) -> Outcome {
        self.run_rows(None, margin, deadline)
    }

    /// Exact simplex over all stacked rows, or only those listed in `subset`.
    fn run_rows(&mut self, subset: Option<&[usize]>, margin: Option<&Q>, deadline: Instant) -> Outcome {
        let all: Vec<&Row> = self.rows().collect();
        let rows: Vec<&Row> = match subset {
            Some(idx) => idx.iter().map(|&i| all[i]).collect(),
            None => all,
        };
        let problem = Problem {
            bounds: &self.bounds,
            rows: rows.iter().map(|r| r.coeffs.as_slice()).collect(),
            row_lower: rows
                .iter()
                .map(|r| match margin {
                    Some(m) => (m * &r.norm - &r.constant, false),
                    None => (-r.constant.clone(), r.strict),
                })
                .collect(),
        };
        let mut pivots = 0;
        let out = simplex::solve(&problem, Some(deadline), &mut pivots);
        self.stats.pivots += pivots;
        self.stats.simplex_runs += 1;
        out
    }

    /// Decides the current stack.
    pub fn check(&mut self) -> SolverResult {
        self.check_impl(false)
    }

    /// Like [`check`](Self::check), but first looks for a witness with every
    /// constraint (strict or not) satisfied with margin, so that the witness
    /// sits in the interior of its region whenever the region has one. Falls
    /// back to the plain procedure otherwise; the variant returned always
    /// agrees with `check`.
    pub fn check_interior(&mut self) -> SolverResult {
        self.check_impl(true)
    }

    fn check_impl(&mut self, interior: bool) -> SolverResult {
        let start = Instant::now();
        self.stats.checks += 1;
        let result = self.decide(interior, start);
        self.stats.time += start.elapsed();
        if let SolverResult::Sat(w) = &result {
            debug_assert!(self.validates(w), "solver produced an invalid witness");
        }
        result
    }

    /// Floating-point attempt with every row tightened by a small margin.
    /// Returns a decision only when it is certified exactly.
    fn float_decide(&mut self, deadline: Instant) -> Option<SolverResult> {
        let mu = self.scale.to_f64().unwrap_or(1.0) * self.options.interior_margin;
        let mut pivots = 0;
        let out = {
            let rows: Vec<&Row> = self.rows().collect();
            let problem = FProblem {
                bounds: &self.fbounds,
                rows: rows.iter().map(|r| r.fcoeffs.as_slice()).collect(),
                row_lower: rows
                    .iter()
                    .map(|r| mu * r.fnorm - r.source.expr().constant_term())
                    .collect(),
            };
            let max_pivots = 50 * (self.bounds.len() + rows.len()) as u64 + 1000;
            fsimplex::solve(&problem, deadline, max_pivots, &mut pivots)
        };
        self.stats.pivots += pivots;
        self.stats.simplex_runs += 1;
        match out {
            FOutcome::Sat(w) => {
                let w = Assignment::from_f64(&w)?;
                self.validates(&w).then_some(SolverResult::Sat(w))
            }
            FOutcome::Unsat(y) => {
                if self.refutes(&y) {
                    return Some(SolverResult::Unsat);
                }
                // Near-cancelling multipliers: decide the support exactly.
                let support: Vec<usize> = y.iter().map(|t| t.0).collect();
                if support.len() < self.rows().count() {
                    if let Outcome::Unsat = self.run_rows(Some(&support), None, deadline) {
                        return Some(SolverResult::Unsat);
                    }
                }
                None
            }
            FOutcome::GaveUp => None,
        }
    }

    /// Exact Farkas check: with `y >= 0`, every solution would satisfy
    /// `Σ yᵢ·rowᵢ(x) >= 0` (strictly if a strict row has `yᵢ > 0`). If the
    /// box maximum of that combination falls short, there is no solution.
    fn refutes(&self, y: &[(usize, f64)]) -> bool {
        let rows: Vec<&Row> = self.rows().collect();
        let n = self.bounds.len();
        let mut g = vec![Q::zero(); n];
        let mut g0 = Q::zero();
        let mut strict = false;
        for &(i, yi) in y {
            let Some(yq) = BigRational::from_float(yi).filter(|q| q.is_positive()) else {
                continue;
            };
            let r = rows[i];
            strict |= r.strict;
            g0 += &yq * &r.constant;
            for (j, a) in &r.coeffs {
                g[*j] += &yq * a;
            }
        }
        let mut max = g0;
        for (gj, (l, u)) in g.iter().zip(&self.bounds) {
            if gj.is_positive() {
                max += gj * u;
            } else if gj.is_negative() {
                max += gj * l;
            }
        }
        max.is_negative() || (strict && max.is_zero())
    }

    /// Interval reasoning: refutes an empty box or a row that cannot reach
    /// zero over it, and answers with the box midpoint when every row bounds
    /// a single variable.
    fn bounds_decide(&self) -> Option<SolverResult> {
        if self.tight.iter().any(Interval::is_empty) {
            return Some(SolverResult::Unsat);
        }
        let mut single = true;
        for r in self.rows() {
            if r.coeffs.len() != 1 {
                single = false;
                if bounds::refuted(&r.coeffs, &r.constant, r.strict, &self.tight) {
                    return Some(SolverResult::Unsat);
                }
            }
        }
        if !single {
            return None;
        }
        let w = Assignment(self.tight.iter().map(Interval::midpoint).collect());
        self.validates(&w).then_some(SolverResult::Sat(w))
    }

    fn decide(&mut self, interior: bool, start: Instant) -> SolverResult {
        if self.options.bound_pass {
            if let Some(r) = self.bounds_decide() {
                self.stats.bound_decisions += 1;
                return r;
            }
        }
        let deadline = self.deadline(start);
        if self.options.float_pass {
            if let Some(r) = self.float_decide(deadline) {
                return r;
            }
        }
        self.stats.exact_fallbacks += 1;
        let plain = match self.run(None, deadline) {
            Outcome::Unsat => return SolverResult::Unsat,
            Outcome::Timeout => return SolverResult::Unknown(UnknownReason::Timeout),
            Outcome::Sat(w) => Assignment(w),
        };
        if !interior || self.frames.iter().all(Vec::is_empty) {
            return SolverResult::Sat(plain);
        }
        let mut margin = &self.scale * q_of(self.options.interior_margin);
        for _ in 0..self.options.interior_halvings {
            margin /= Q::from_integer(2.into());
            match self.run(Some(&margin), deadline) {
                Outcome::Sat(w) => return SolverResult::Sat(Assignment(w)),
                Outcome::Unsat => {}
                Outcome::Timeout => break,
            }
        }
        SolverResult::Sat(plain)
    }

    /// QF_LRA script of the bounds and the current stack.
    pub fn export_smtlib(&self) -> String {
        let cs: Vec<LinearConstraint> = self.constraints().cloned().collect();
        smtlib::render_script(&self.vars, &cs, None)
    }
}
