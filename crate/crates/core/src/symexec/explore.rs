//! Depth-first enumeration of feasible paths.
//!
//! The solver stack holds one frame per branch point of the current path.
//! Each unexplored side of a branch point becomes a pending item; items are
//! taken deepest first, so the stack only ever needs truncating back to the
//! item's depth. A feasible item is replayed from the exact solver witness,
//! which fixes the outcome of every later branch point and yields a complete
//! path.

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use log::{debug, trace};
use serde::Serialize;

use super::engine::{Choice, Drive, Prepared, SymRun};
use super::marking::SymbolicMarking;
use super::PathResult;
use crate::error::{Error, Result};
use crate::exec::forward;
use crate::model::{Model, Tensor};
use crate::solver::{Assignment, SolverOptions, SolverResult, SolverSession, SolverStats, UnknownReason};
use crate::symexpr::{LinearConstraint, PathConstraint};

/// Limits on one exploration. Hitting any of them stops the search and marks
/// the result as truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplorationBudget {
    pub max_paths: usize,
    /// Counted as solver `check` calls, including those made by a visitor.
    pub max_solver_calls: u64,
    pub wall_timeout: Duration,
}

impl Default for ExplorationBudget {
    fn default() -> Self {
        ExplorationBudget {
            max_paths: 10_000,
            max_solver_calls: 100_000,
            wall_timeout: Duration::from_secs(120),
        }
    }
}

impl ExplorationBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_paths == 0 || self.max_solver_calls == 0 || self.wall_timeout.is_zero() {
            return Err(Error::InvalidArgument(
                "exploration budget limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExplorationStats {
    pub paths: usize,
    /// Branch sides shown infeasible.
    pub pruned: usize,
    /// Branch sides the solver could not decide.
    pub unknown: usize,
    /// Paths whose witness could not be made to re-execute exactly.
    pub paths_without_witness: usize,
    pub max_depth: usize,
    pub solver: SolverStats,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub paths: Vec<PathResult>,
    /// A budget limit stopped the search.
    pub truncated: bool,
    /// Every feasible path was enumerated: not truncated, no undecided
    /// branch side, and the visitor never stopped the search.
    pub complete: bool,
    pub stats: ExplorationStats,
}

struct Pending {
    depth: usize,
    prefix: Vec<Choice>,
    constraints: Vec<LinearConstraint>,
}

/// Enumerates the feasible paths of `model` around `input`, where the marked
/// scalars range over their boxes. The concrete path of `input` comes first
/// when its marked values lie inside the boxes.
pub fn explore_paths(
    model: &Model,
    input: &Tensor,
    marking: &SymbolicMarking,
    budget: &ExplorationBudget,
) -> Result<Exploration> {
    explore_with(model, input, marking, budget, &SolverOptions::default(), |_, _| {
        Ok(ControlFlow::Continue(()))
    })
}

/// Like [`explore_paths`], calling `visitor` on each path as it is found.
/// When called, the session holds exactly the path's constraints; the visitor
/// may push further frames (they are discarded afterwards) and can stop the
/// search by returning `Break`.
pub fn explore_with<F>(
    model: &Model,
    input: &Tensor,
    marking: &SymbolicMarking,
    budget: &ExplorationBudget,
    options: &SolverOptions,
    mut visitor: F,
) -> Result<Exploration>
where
    F: FnMut(&PathResult, &mut SolverSession) -> Result<ControlFlow<()>>,
{
    budget.validate()?;
    let start = Instant::now();
    let vars = marking.variables(model)?;
    let prepared = Prepared::new(model, input, marking, vars.len())?;
    let mut session = SolverSession::with_options(vars.clone(), *options)?;
    let deadline = start + budget.wall_timeout;
    session.set_deadline(Some(deadline));

    let mut ex = Explorer {
        model,
        input,
        marking,
        prepared,
        vars,
        session,
        paths: Vec::new(),
        pending: Vec::new(),
        stats: ExplorationStats::default(),
    };

    let mut truncated = false;
    let mut stopped = false;

    let seed = marking.extract(model, input);
    let seed_point = Assignment::from_f64(&seed).filter(|a| ex.session.validates(a));
    let root = match seed_point {
        Some(a) => Some(a),
        None => match ex.session.check_interior() {
            SolverResult::Sat(a) => Some(a),
            SolverResult::Unsat => None,
            SolverResult::Unknown(_) => {
                truncated = true;
                None
            }
        },
    };
    if let Some(a) = root {
        stopped = ex.follow(&[], 0, &a, &mut visitor)?.is_break();
    }

    while !stopped && !truncated {
        let Some(item) = ex.pending.pop() else { break };
        if ex.paths.len() >= budget.max_paths
            || ex.session.stats().checks >= budget.max_solver_calls
            || Instant::now() >= deadline
        {
            ex.pending.push(item);
            truncated = true;
            break;
        }
        ex.session.truncate(item.depth);
        ex.session.push(&item.constraints)?;
        match ex.session.check_interior() {
            SolverResult::Sat(a) => {
                stopped = ex.follow(&item.prefix, item.depth + 1, &a, &mut visitor)?.is_break();
            }
            SolverResult::Unsat => ex.stats.pruned += 1,
            SolverResult::Unknown(UnknownReason::Timeout) if Instant::now() >= deadline => {
                ex.pending.push(item);
                truncated = true;
            }
            SolverResult::Unknown(reason) => {
                debug!("branch at depth {} undecided: {reason:?}", item.depth);
                ex.stats.unknown += 1;
            }
        }
    }

    let mut stats = ex.stats;
    stats.paths = ex.paths.len();
    stats.solver = *ex.session.stats();
    stats.elapsed = start.elapsed();
    Ok(Exploration {
        complete: !truncated && !stopped && stats.unknown == 0,
        truncated,
        paths: ex.paths,
        stats,
    })
}

struct Explorer<'a> {
    model: &'a Model,
    input: &'a Tensor,
    marking: &'a SymbolicMarking,
    prepared: Prepared<'a>,
    vars: Vec<crate::symexpr::SymVar>,
    session: SolverSession,
    paths: Vec<PathResult>,
    pending: Vec<Pending>,
    stats: ExplorationStats,
}

impl Explorer<'_> {
    /// Completes the path fixed by `prefix` through point `a`, whose frames
    /// below `depth` are already on the stack, then reports it and queues
    /// its unexplored sides.
    fn follow<F>(&mut self, prefix: &[Choice], depth: usize, a: &Assignment, visitor: &mut F) -> Result<ControlFlow<()>>
    where
        F: FnMut(&PathResult, &mut SolverSession) -> Result<ControlFlow<()>>,
    {
        let run = self.prepared.run(prefix, Drive::Point(a))?;
        for b in &run.branches[depth..] {
            self.session.push(&b.constraints)?;
        }
        let n = run.branches.len();
        self.stats.max_depth = self.stats.max_depth.max(n);
        trace!("path {} with {n} branch points", self.paths.len());

        let witness = self.concrete_witness(a, &run)?;
        let label = match &witness {
            Some(w) => {
                let (m, x) = self.marking.embed(self.model, self.input, w)?;
                Some(forward(&m, &x)?.0.label)
            }
            None => {
                self.stats.paths_without_witness += 1;
                None
            }
        };

        let mut constraint = PathConstraint::new(self.vars.clone());
        for b in &run.branches {
            for c in &b.constraints {
                constraint.push(c.clone());
            }
        }
        let choices = run.choices();
        let path = PathResult {
            constraint,
            branches: run.branches.iter().map(|b| b.site.clone()).collect(),
            logits: run.logits,
            pattern: run.pattern,
            witness,
            label,
        };

        let flow = visitor(&path, &mut self.session)?;
        self.session.truncate(n);
        self.paths.push(path);

        for (i, b) in run.branches.iter().enumerate().skip(depth) {
            for (choice, cs) in b.alternatives.iter().rev() {
                let mut p = choices[..i].to_vec();
                p.push(*choice);
                self.pending.push(Pending {
                    depth: i,
                    prefix: p,
                    constraints: cs.clone(),
                });
            }
        }
        Ok(flow)
    }

    /// An `f64` point that satisfies the path constraint exactly and whose
    /// concrete execution follows the path, if one is found.
    fn concrete_witness(&mut self, a: &Assignment, run: &SymRun) -> Result<Option<Vec<f64>>> {
        let try_point = |ex: &Self, a: &Assignment| -> Result<Option<Vec<f64>>> {
            let w = a.to_f64();
            let Some(exact) = Assignment::from_f64(&w) else {
                return Ok(None);
            };
            if !ex.session.validates(&exact) {
                return Ok(None);
            }
            let (m, x) = ex.marking.embed(ex.model, ex.input, &w)?;
            let (_, pattern) = forward(&m, &x)?;
            Ok((pattern == run.pattern).then_some(w))
        };
        if let Some(w) = try_point(self, a)? {
            return Ok(Some(w));
        }
        match self.session.check_interior() {
            SolverResult::Sat(b) => try_point(self, &b),
            _ => Ok(None),
        }
    }
}
