//! Adversarial-example search, local robustness and neuron coverage.

use std::collections::HashSet;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{forward, ActivationPattern};
use crate::model::{Model, Tensor};
use crate::solver::{SolverOptions, SolverResult};
use crate::symexec::{decision_constraints_for, explore_with, ExplorationBudget, MarkTargets, SymbolicMarking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    AnyMisclassification,
    Targeted(usize),
}

#[derive(Debug, Clone)]
pub struct AttackSpec {
    /// Must mark input positions.
    pub marking: SymbolicMarking,
    pub input: Tensor,
    pub goal: Goal,
    pub budget: ExplorationBudget,
    pub solver: SolverOptions,
}

impl AttackSpec {
    pub fn new(input: Tensor, marking: SymbolicMarking, goal: Goal) -> Self {
        AttackSpec {
            marking,
            input,
            goal,
            budget: ExplorationBudget::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// A concretely validated adversarial input.
#[derive(Debug, Clone, PartialEq)]
pub struct Adversarial {
    pub input: Tensor,
    pub original_label: usize,
    pub new_label: usize,
    /// Values placed at the marked positions, in marking order.
    pub values: Vec<f64>,
    /// Time spent inside the solver.
    pub solver_time: Duration,
    pub elapsed: Duration,
    pub paths_explored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackResult {
    Found(Adversarial),
    NoneWithinBudget {
        paths_explored: usize,
    },
    /// Every path was explored and none admits the goal.
    ProvenRobust {
        paths_explored: usize,
    },
}

impl AttackResult {
    pub fn variant_name(&self) -> &'static str {
        match self {
            AttackResult::Found(_) => "found",
            AttackResult::NoneWithinBudget { .. } => "none_within_budget",
            AttackResult::ProvenRobust { .. } => "proven_robust",
        }
    }

    pub fn paths_explored(&self) -> usize {
        match self {
            AttackResult::Found(a) => a.paths_explored,
            AttackResult::NoneWithinBudget { paths_explored } | AttackResult::ProvenRobust { paths_explored } => {
                *paths_explored
            }
        }
    }
}

/// Searches the marked box for an input whose label meets `spec.goal`,
/// path by path, starting with the concrete path of `spec.input`.
pub fn attack(model: &Model, spec: &AttackSpec) -> Result<AttackResult> {
    let start = Instant::now();
    let positions = match &spec.marking.targets {
        MarkTargets::Inputs(p) => p,
        MarkTargets::Params(_) => {
            return Err(Error::InvalidMarking(
                "an attack marks input positions, not parameters".into(),
            ));
        }
    };
    let original_label = forward(model, &spec.input)?.0.label;
    let classes = model.num_classes();
    let targets: Vec<usize> = match spec.goal {
        Goal::AnyMisclassification => (0..classes).filter(|&c| c != original_label).collect(),
        Goal::Targeted(t) if t >= classes => {
            return Err(Error::InvalidArgument(format!(
                "target class {t} out of range for {classes} classes"
            )));
        }
        Goal::Targeted(t) if t == original_label => {
            return Err(Error::InvalidArgument(format!("input is already labelled {t}")));
        }
        Goal::Targeted(t) => vec![t],
    };
    let accepts = |label: usize| match spec.goal {
        Goal::AnyMisclassification => label != original_label,
        Goal::Targeted(t) => label == t,
    };

    let mut found: Option<(Tensor, usize, Vec<f64>)> = None;
    // Set when some feasible decision could not be confirmed concretely, or
    // was not decided at all; either rules out a robustness proof.
    let mut doubtful = false;
    let mut solver_time = Duration::ZERO;
    let mut paths = 0;

    let ex = explore_with(
        model,
        &spec.input,
        &spec.marking,
        &spec.budget,
        &spec.solver,
        |path, session| {
            paths += 1;
            if let (Some(w), Some(label)) = (&path.witness, path.label) {
                if accepts(label) {
                    let (_, x) = spec.marking.embed(model, &spec.input, w)?;
                    found = Some((x, label, w.clone()));
                    solver_time = session.stats().time;
                    return Ok(ControlFlow::Break(()));
                }
            }
            for &c in &targets {
                let Some(cs) = decision_constraints_for(&path.logits, c)? else {
                    continue;
                };
                session.push(&cs)?;
                let r = session.check_interior();
                session.pop()?;
                match r {
                    SolverResult::Sat(a) => {
                        let w = a.to_f64();
                        let (_, x) = spec.marking.embed(model, &spec.input, &w)?;
                        let label = forward(model, &x)?.0.label;
                        if accepts(label) {
                            found = Some((x, label, w));
                            solver_time = session.stats().time;
                            return Ok(ControlFlow::Break(()));
                        }
                        log::debug!("witness for class {c} relabelled {label} concretely; continuing");
                        doubtful = true;
                    }
                    SolverResult::Unsat => {}
                    SolverResult::Unknown(_) => doubtful = true,
                }
            }
            solver_time = session.stats().time;
            Ok(ControlFlow::Continue(()))
        },
    )?;

    if let Some((input, new_label, values)) = found {
        debug_assert_eq!(values.len(), positions.len());
        return Ok(AttackResult::Found(Adversarial {
            input,
            original_label,
            new_label,
            values,
            solver_time,
            elapsed: start.elapsed(),
            paths_explored: paths,
        }));
    }
    Ok(if ex.complete && !doubtful {
        AttackResult::ProvenRobust { paths_explored: paths }
    } else {
        AttackResult::NoneWithinBudget { paths_explored: paths }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Robust,
    CounterexampleFound(AttackResult),
    Inconclusive,
}

/// Local robustness of `input` over the marked box.
pub fn check_robustness(
    model: &Model,
    input: &Tensor,
    marking: &SymbolicMarking,
    budget: &ExplorationBudget,
) -> Result<Verdict> {
    let spec = AttackSpec {
        budget: *budget,
        ..AttackSpec::new(input.clone(), marking.clone(), Goal::AnyMisclassification)
    };
    Ok(match attack(model, &spec)? {
        AttackResult::ProvenRobust { .. } => Verdict::Robust,
        r @ AttackResult::Found(_) => Verdict::CounterexampleFound(r),
        AttackResult::NoneWithinBudget { .. } => Verdict::Inconclusive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCoverage {
    pub layer: usize,
    pub neurons: usize,
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Fraction of ReLU neurons active (`> 0`) on at least one input; `0.0`
    /// for a network without ReLU layers.
    pub neuron_coverage: f64,
    pub neurons: usize,
    pub covered: usize,
    pub layers: Vec<LayerCoverage>,
    /// Distinct activation patterns (ReLU signs and pool choices).
    pub distinct_patterns: usize,
    pub inputs: usize,
}

pub fn coverage(model: &Model, dataset: &[Tensor]) -> Result<CoverageReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let patterns: Vec<ActivationPattern> = dataset
        .par_iter()
        .map(|x| forward(model, x).map(|(_, p)| p))
        .collect::<Result<_>>()?;

    let mut seen: Vec<Vec<bool>> = patterns[0].relu.iter().map(|l| vec![false; l.signs.len()]).collect();
    for p in &patterns {
        for (acc, l) in seen.iter_mut().zip(&p.relu) {
            for (a, &s) in acc.iter_mut().zip(&l.signs) {
                *a |= s;
            }
        }
    }
    let layers: Vec<LayerCoverage> = seen
        .iter()
        .zip(&patterns[0].relu)
        .map(|(acc, l)| {
            let covered = acc.iter().filter(|&&a| a).count();
            LayerCoverage {
                layer: l.layer,
                neurons: acc.len(),
                covered,
                coverage: ratio(covered, acc.len()),
            }
        })
        .collect();
    let neurons = layers.iter().map(|l| l.neurons).sum();
    let covered = layers.iter().map(|l| l.covered).sum();
    let distinct: HashSet<&ActivationPattern> = patterns.iter().collect();
    Ok(CoverageReport {
        neuron_coverage: ratio(covered, neurons),
        neurons,
        covered,
        layers,
        distinct_patterns: distinct.len(),
        inputs: dataset.len(),
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
