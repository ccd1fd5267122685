//! One symbolic pass through the network along a chosen branch sequence.

use serde::Serialize;

use super::marking::{MarkTargets, SymbolicMarking};
use crate::error::{Error, Result};
use crate::exec::{argmax, pool_windows, ActivationPattern, PoolChoices, ReluSigns};
use crate::model::{LayerSpec, Model, Tensor};
use crate::solver::Assignment;
use crate::symexpr::{
    constraint_from_branch, AffineAccumulator, AffineExpr, Branch, BranchOutcome, LinearConstraint, Provenance,
    Relation, SymVarId,
};

/// Outcome picked at a branch point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Relu(bool),
    /// Offset of the selected element inside the pooling window.
    Pool(usize),
}

/// A neuron or pooling window whose outcome depends on symbolic variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSite {
    pub layer: usize,
    pub index: usize,
    pub choice: Choice,
}

/// How branch points past the prefix are decided.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Drive<'p> {
    /// Follow a concrete activation pattern.
    Pattern(&'p ActivationPattern),
    /// Take the side whose constraints hold exactly at this point.
    Point(&'p Assignment),
}

#[derive(Debug, Clone)]
pub(crate) struct BranchRecord {
    pub site: BranchSite,
    /// Non-trivial constraints of the taken side.
    pub constraints: Vec<LinearConstraint>,
    /// Other sides that are not contradictory on their own, in exploration order.
    pub alternatives: Vec<(Choice, Vec<LinearConstraint>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct SymRun {
    pub branches: Vec<BranchRecord>,
    pub logits: Vec<AffineExpr>,
    pub pattern: ActivationPattern,
}

impl SymRun {
    pub fn choices(&self) -> Vec<Choice> {
        self.branches.iter().map(|b| b.site.choice).collect()
    }
}

/// Everything a symbolic pass needs besides the branch decisions.
pub(crate) struct Prepared<'a> {
    pub model: &'a Model,
    pub input: &'a Tensor,
    pub num_vars: usize,
    /// Variable of each input scalar (inputs mode).
    input_vars: Vec<Option<SymVarId>>,
    /// Symbolic parameter layer and the variable of each of its scalars.
    param_vars: Option<(usize, Vec<Option<SymVarId>>)>,
}

impl<'a> Prepared<'a> {
    pub fn new(model: &'a Model, input: &'a Tensor, marking: &SymbolicMarking, num_vars: usize) -> Result<Self> {
        if input.shape() != model.input_shape() {
            return Err(Error::shape(None, model.input_shape(), input.shape()));
        }
        let mut input_vars = vec![None; input.len()];
        let mut param_vars = None;
        match &marking.targets {
            MarkTargets::Inputs(positions) => {
                for (i, p) in positions.iter().enumerate() {
                    let flat = model
                        .input_shape()
                        .flat_index(p)
                        .ok_or_else(|| Error::InvalidMarking(format!("input position {p:?} out of range")))?;
                    input_vars[flat] = Some(SymVarId(i as u32));
                }
            }
            MarkTargets::Params(positions) => {
                if let Some(layer) = marking.param_layer() {
                    let n = model.params(layer).map_or(0, |p| p.len());
                    let mut vars = vec![None; n];
                    for (i, p) in positions.iter().enumerate() {
                        vars[p.offset] = Some(SymVarId(i as u32));
                    }
                    param_vars = Some((layer, vars));
                }
            }
        }
        Ok(Prepared {
            model,
            input,
            num_vars,
            input_vars,
            param_vars,
        })
    }

    fn layer_param_vars(&self, layer: usize) -> Option<&[Option<SymVarId>]> {
        match &self.param_vars {
            Some((l, v)) if *l == layer => Some(v),
            _ => None,
        }
    }

    fn initial(&self) -> Vec<AffineExpr> {
        self.input
            .data()
            .iter()
            .zip(&self.input_vars)
            .map(|(&x, v)| match v {
                Some(id) => AffineExpr::var(*id),
                None => AffineExpr::constant(x),
            })
            .collect()
    }

    /// Symbolic pass. Branch points consume `prefix` in order; once it is
    /// exhausted, outcomes follow `drive`.
    pub fn run(&self, prefix: &[Choice], drive: Drive<'_>) -> Result<SymRun> {
        let model = self.model;
        let mut acc = AffineAccumulator::new(self.num_vars);
        let mut cur = self.initial();
        let mut branches: Vec<BranchRecord> = Vec::new();
        let mut pattern = ActivationPattern::default();
        let mut logits = None;

        // Picks among the feasible sides of a branch point and records it.
        let decide = |branches: &mut Vec<BranchRecord>,
                      site: (usize, usize),
                      candidates: Vec<(Choice, Vec<LinearConstraint>)>,
                      concrete: Choice|
         -> Result<Choice> {
            let choice = match prefix.get(branches.len()) {
                Some(&c) => c,
                None => match drive {
                    Drive::Pattern(_) => concrete,
                    Drive::Point(a) => candidates
                        .iter()
                        .find(|(_, cs)| cs.iter().all(|c| a.satisfies(c)))
                        .map_or(concrete, |c| c.0),
                },
            };
            let mut taken = None;
            let mut alternatives = Vec::new();
            for (c, cs) in candidates {
                if c == choice {
                    taken = Some(cs);
                } else {
                    alternatives.push((c, cs));
                }
            }
            let constraints = taken.ok_or_else(|| {
                Error::InvalidArgument(format!("branch choice {choice:?} infeasible at layer {}", site.0))
            })?;
            branches.push(BranchRecord {
                site: BranchSite {
                    layer: site.0,
                    index: site.1,
                    choice,
                },
                constraints,
                alternatives,
            });
            Ok(choice)
        };

        for (li, layer) in model.spec().layers.iter().enumerate() {
            let in_dims = model.layer_input_shape(li).dims();
            let out_dims = model.shapes()[li].dims();
            cur = match *layer {
                LayerSpec::Dense { units, .. } => {
                    let p = model.params(li).expect("validated");
                    let (w, b) = (p.weights.data(), p.biases.data());
                    let pv = self.layer_param_vars(li);
                    let mut out = Vec::with_capacity(units);
                    for j in 0..units {
                        for (i, x) in cur.iter().enumerate() {
                            let k = i * units + j;
                            mac(&mut acc, x, w[k], pv.and_then(|v| v[k]), li)?;
                        }
                        add_bias(&mut acc, b[j], pv.and_then(|v| v[w.len() + j]));
                        out.push(acc.finish());
                    }
                    out
                }
                LayerSpec::Conv2d { kernel, strides, .. } => {
                    let p = model.params(li).expect("validated");
                    let (w, b) = (p.weights.data(), p.biases.data());
                    let pv = self.layer_param_vars(li);
                    let (w_in, ch) = (in_dims[1], in_dims[2]);
                    let filters = out_dims[2];
                    let mut out = Vec::with_capacity(out_dims.iter().product());
                    for oy in 0..out_dims[0] {
                        for ox in 0..out_dims[1] {
                            for f in 0..filters {
                                for ky in 0..kernel[0] {
                                    let row = (oy * strides[0] + ky) * w_in;
                                    for kx in 0..kernel[1] {
                                        let base = (row + ox * strides[1] + kx) * ch;
                                        let wbase = (ky * kernel[1] + kx) * ch;
                                        for c in 0..ch {
                                            let k = (wbase + c) * filters + f;
                                            mac(&mut acc, &cur[base + c], w[k], pv.and_then(|v| v[k]), li)?;
                                        }
                                    }
                                }
                                add_bias(&mut acc, b[f], pv.and_then(|v| v[w.len() + f]));
                                out.push(acc.finish());
                            }
                        }
                    }
                    out
                }
                LayerSpec::Relu => {
                    let ordinal = pattern.relu.len();
                    let driven = match drive {
                        Drive::Pattern(p) => p.relu.get(ordinal).map(|r| r.signs.as_slice()),
                        Drive::Point(_) => None,
                    };
                    let mut signs = Vec::with_capacity(cur.len());
                    let mut out = Vec::with_capacity(cur.len());
                    for (n, e) in cur.into_iter().enumerate() {
                        let on = if e.is_constant() {
                            e.constant_term() > 0.0
                        } else {
                            let concrete = driven.and_then(|d| d.get(n)).copied().unwrap_or(false);
                            let side = |b: bool| {
                                let prov = Provenance {
                                    layer: Some(li),
                                    index: n,
                                    branch: if b { Branch::ReluActive } else { Branch::ReluInactive },
                                };
                                (
                                    Choice::Relu(b),
                                    vec![expect_constraint(constraint_from_branch(&e, b, prov))],
                                )
                            };
                            let candidates = vec![side(concrete), side(!concrete)];
                            match decide(&mut branches, (li, n), candidates, Choice::Relu(concrete))? {
                                Choice::Relu(on) => on,
                                Choice::Pool(_) => unreachable!(),
                            }
                        };
                        signs.push(on);
                        out.push(if on { e } else { AffineExpr::constant(0.0) });
                    }
                    pattern.relu.push(ReluSigns { layer: li, signs });
                    out
                }
                LayerSpec::Maxpool2d { pool, strides } => {
                    let ordinal = pattern.pool.len();
                    let driven = match drive {
                        Drive::Pattern(p) => p.pool.get(ordinal).map(|r| r.choices.as_slice()),
                        Drive::Point(_) => None,
                    };
                    let windows = pool_windows(in_dims, out_dims, pool, strides);
                    let mut choices = Vec::with_capacity(windows.len());
                    let mut out = Vec::with_capacity(windows.len());
                    for (wi, win) in windows.iter().enumerate() {
                        let elems: Vec<&AffineExpr> = win.iter().map(|&j| &cur[j]).collect();
                        let k = if elems.iter().all(|e| e.is_constant()) {
                            let vals: Vec<f64> = elems.iter().map(|e| e.constant_term()).collect();
                            argmax(&vals)
                        } else {
                            let feasible: Vec<(Choice, Vec<LinearConstraint>)> = (0..elems.len())
                                .filter_map(|k| pool_candidate(&elems, k, li, wi).map(|c| (Choice::Pool(k), c)))
                                .collect();
                            if feasible.len() == 1 && feasible[0].1.is_empty() {
                                match feasible[0].0 {
                                    Choice::Pool(k) => k,
                                    Choice::Relu(_) => unreachable!(),
                                }
                            } else {
                                let concrete = driven.and_then(|d| d.get(wi)).copied().map(Choice::Pool);
                                let concrete = concrete
                                    .filter(|c| feasible.iter().any(|f| f.0 == *c))
                                    .unwrap_or(feasible[0].0);
                                match decide(&mut branches, (li, wi), feasible, concrete)? {
                                    Choice::Pool(k) => k,
                                    Choice::Relu(_) => unreachable!(),
                                }
                            }
                        };
                        choices.push(k);
                        out.push(elems[k].clone());
                    }
                    pattern.pool.push(PoolChoices { layer: li, choices });
                    out
                }
                LayerSpec::Flatten => cur,
                LayerSpec::Softmax => {
                    logits = Some(cur.clone());
                    cur
                }
            };
            if let Some(index) = cur.iter().position(|e| !e.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: li, index });
            }
        }
        Ok(SymRun {
            branches,
            logits: logits.unwrap_or(cur),
            pattern,
        })
    }
}

/// `acc += x·w`, or `acc += x·var` when the weight itself is symbolic.
fn mac(acc: &mut AffineAccumulator, x: &AffineExpr, w: f64, wvar: Option<SymVarId>, layer: usize) -> Result<()> {
    match wvar {
        None => acc.add_scaled(x, w),
        Some(v) => {
            if !x.is_constant() {
                return Err(Error::NonlinearTerm(format!(
                    "symbolic weight {v} multiplies a symbolic activation in layer {layer}"
                )));
            }
            acc.add_term(v, x.constant_term());
        }
    }
    Ok(())
}

fn add_bias(acc: &mut AffineAccumulator, b: f64, bvar: Option<SymVarId>) {
    match bvar {
        None => acc.constant += b,
        Some(v) => acc.add_term(v, 1.0),
    }
}

fn expect_constraint(o: BranchOutcome) -> LinearConstraint {
    match o {
        BranchOutcome::Constraint(c) => c,
        other => unreachable!("non-constant expression resolved to {other:?}"),
    }
}

/// Constraints under which window element `k` is the max-pool output with
/// lowest-index tie-breaking: strictly above earlier elements, at least
/// later ones. `None` if some comparison is contradictory.
fn pool_candidate(elems: &[&AffineExpr], k: usize, layer: usize, window: usize) -> Option<Vec<LinearConstraint>> {
    let mut out = Vec::new();
    for (j, e) in elems.iter().enumerate() {
        if j == k {
            continue;
        }
        let rel = if j < k { Relation::Gt } else { Relation::Ge };
        let prov = Provenance {
            layer: Some(layer),
            index: window,
            branch: Branch::PoolChoice { chosen: k, other: j },
        };
        match LinearConstraint::build(elems[k].sub(e), rel, prov) {
            BranchOutcome::Constraint(c) => out.push(c),
            BranchOutcome::Tautology => {}
            BranchOutcome::Contradiction => return None,
        }
    }
    Some(out)
}
