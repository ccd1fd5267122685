//! Symbolic and concolic forward execution.
//!
//! Every neuron value is an [`AffineExpr`] over the marked scalars. Marking
//! inputs keeps all parameters concrete; marking parameters (of one layer
//! only) keeps inputs concrete, so every product has at least one constant
//! side and values stay affine. A product of two symbolic values is reported
//! as [`Error::NonlinearTerm`].
//!
//! ReLU units whose pre-activation depends on a symbolic variable are branch
//! points with sides `pre > 0` and `-pre >= 0`. Max-pool windows are branch
//! points over the selected element: choosing `k` requires
//! `e_k - e_j > 0` for `j < k` and `e_k - e_j >= 0` for `j > k`, which is
//! exactly the concrete lowest-index tie rule.

mod engine;
mod explore;
mod marking;

use std::collections::BTreeMap;

use serde::Serialize;

pub use engine::{BranchSite, Choice};
pub use explore::{explore_paths, explore_with, Exploration, ExplorationBudget, ExplorationStats};
pub use marking::{MarkTargets, ParamPosition, SymbolicMarking};

use crate::error::{Error, Result};
use crate::exec::{forward, ActivationPattern};
use crate::model::{Model, Tensor};
use crate::symexpr::{AffineExpr, Branch, BranchOutcome, LinearConstraint, PathConstraint, Provenance, Relation};
use engine::{Drive, Prepared};

/// One execution path: its constraint, the symbolic logits along it, and a
/// witness that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub constraint: PathConstraint,
    pub logits: Vec<AffineExpr>,
    pub pattern: ActivationPattern,
    /// Branch points in execution order.
    pub branches: Vec<BranchSite>,
    /// Values of the marked scalars, one per variable; satisfies
    /// `constraint` exactly.
    pub witness: Option<Vec<f64>>,
    /// Concrete label of the witness.
    pub label: Option<usize>,
}

impl PathResult {
    pub fn report(&self) -> PathReport {
        let names = |i: usize| self.constraint.vars()[i].name.clone();
        PathReport {
            constraints: self.constraint.render(),
            provenance: self.constraint.constraints().iter().map(|c| *c.provenance()).collect(),
            witness: self
                .witness
                .as_ref()
                .map(|w| w.iter().enumerate().map(|(i, &v)| (names(i), v)).collect()),
            label: self.label,
            logits: self
                .logits
                .iter()
                .map(|e| e.render(&|id| self.constraint.var_name(id)))
                .collect(),
            branches: self.branches.clone(),
        }
    }
}

/// JSON form of a [`PathResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub constraints: Vec<String>,
    pub provenance: Vec<Provenance>,
    pub witness: Option<BTreeMap<String, f64>>,
    pub label: Option<usize>,
    pub logits: Vec<String>,
    pub branches: Vec<BranchSite>,
}

/// Runs the concrete path of `input` while propagating symbolic values, and
/// returns that single path.
pub fn symbolic_forward_concolic(model: &Model, input: &Tensor, marking: &SymbolicMarking) -> Result<PathResult> {
    let vars = marking.variables(model)?;
    let prepared = Prepared::new(model, input, marking, vars.len())?;
    let (prediction, pattern) = forward(model, input)?;
    let run = prepared.run(&[], Drive::Pattern(&pattern))?;
    let mut constraint = PathConstraint::new(vars);
    for b in &run.branches {
        for c in &b.constraints {
            constraint.push(c.clone());
        }
    }
    Ok(PathResult {
        constraint,
        logits: run.logits,
        branches: run.branches.iter().map(|b| b.site.clone()).collect(),
        pattern: run.pattern,
        witness: Some(marking.extract(model, input)),
        label: Some(prediction.label),
    })
}

/// Encodes "the argmax of `logits`, lowest index winning ties, is `target`".
pub fn decision_constraint(logits: &[AffineExpr], target: usize) -> Result<Vec<BranchOutcome>> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument("a decision needs at least two logits".into()));
    }
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "target class {target} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(j, l)| {
            let rel = if j < target { Relation::Gt } else { Relation::Ge };
            let prov = Provenance {
                layer: None,
                index: target,
                branch: Branch::Decision { target, other: j },
            };
            LinearConstraint::build(logits[target].sub(l), rel, prov)
        })
        .collect())
}

/// Non-trivial constraints of a decision, or `None` if one is contradictory.
pub fn decision_constraints_for(logits: &[AffineExpr], target: usize) -> Result<Option<Vec<LinearConstraint>>> {
    let mut out = Vec::new();
    for o in decision_constraint(logits, target)? {
        match o {
            BranchOutcome::Constraint(c) => out.push(c),
            BranchOutcome::Tautology => {}
            BranchOutcome::Contradiction => return Ok(None),
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::SymVarId;

    const X: SymVarId = SymVarId(0);

    #[test]
    fn decision_examples() {
        let logits = [AffineExpr::var(X), AffineExpr::constant(3.0)];
        // x = 3 is a tie, which class 0 wins.
        let d0 = decision_constraint(&logits, 0).unwrap();
        let BranchOutcome::Constraint(c) = &d0[0] else { panic!() };
        assert_eq!(c.relation(), Relation::Ge);
        assert_eq!(c.expr(), &AffineExpr::new(-3.0, [(X, 1.0)]));

        let d1 = decision_constraint(&logits, 1).unwrap();
        let BranchOutcome::Constraint(c) = &d1[0] else { panic!() };
        assert_eq!(c.relation(), Relation::Gt);
        assert_eq!(c.expr(), &AffineExpr::new(3.0, [(X, -1.0)]));

        let consts: Vec<_> = [1.0, 2.0, 0.0].into_iter().map(AffineExpr::constant).collect();
        assert!(decision_constraint(&consts, 1)
            .unwrap()
            .iter()
            .all(|o| *o == BranchOutcome::Tautology));
        assert!(decision_constraints_for(&consts, 0).unwrap().is_none());
        assert!(decision_constraint(&consts[..1], 0).is_err());
        assert!(decision_constraint(&consts, 3).is_err());
    }

    #[test]
    fn tie_breaks_toward_lower_index() {
        let consts: Vec<_> = [2.0, 2.0].into_iter().map(AffineExpr::constant).collect();
        assert!(decision_constraints_for(&consts, 0).unwrap().is_some());
        assert!(decision_constraints_for(&consts, 1).unwrap().is_none());
    }
}
