//! Affine expressions over symbolic variables and the linear constraints built
//! from them.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct SymVarId(pub u32);

impl SymVarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymVarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A symbolic variable with its box bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymVar {
    pub id: SymVarId,
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// `constant + Σ coeff·var` with terms sorted by variable and no zero
/// coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    constant: f64,
    terms: Vec<(SymVarId, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(id: SymVarId) -> Self {
        AffineExpr {
            constant: 0.0,
            terms: vec![(id, 1.0)],
        }
    }

    /// Builds an expression from arbitrary terms: duplicates are summed and
    /// zero coefficients dropped.
    pub fn new(constant: f64, terms: impl IntoIterator<Item = (SymVarId, f64)>) -> Self {
        let mut terms: Vec<_> = terms.into_iter().collect();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(SymVarId, f64)> = Vec::with_capacity(terms.len());
        for (id, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == id => last.1 += c,
                _ => merged.push((id, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        AffineExpr {
            constant,
            terms: merged,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[(SymVarId, f64)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|t| t.1.is_finite())
    }

    pub fn coeff(&self, id: SymVarId) -> f64 {
        self.terms
            .binary_search_by_key(&id, |t| t.0)
            .map_or(0.0, |i| self.terms[i].1)
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let (a, b) = (self.terms.get(i), other.terms.get(j));
            match (a, b) {
                (Some(&(va, ca)), Some(&(vb, cb))) if va == vb => {
                    let c = ca + cb;
                    if c != 0.0 {
                        terms.push((va, c));
                    }
                    i += 1;
                    j += 1;
                }
                (Some(&ta), Some(&(vb, _))) if ta.0 < vb => {
                    terms.push(ta);
                    i += 1;
                }
                (Some(_), Some(&tb)) | (None, Some(&tb)) => {
                    terms.push(tb);
                    j += 1;
                }
                (Some(&ta), None) => {
                    terms.push(ta);
                    i += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        AffineExpr {
            constant: self.constant + other.constant,
            terms,
        }
    }

    pub fn scale(&self, k: f64) -> AffineExpr {
        if k == 0.0 {
            return AffineExpr::constant(0.0);
        }
        let terms = self
            .terms
            .iter()
            .map(|&(v, c)| (v, c * k))
            .filter(|t| t.1 != 0.0)
            .collect();
        AffineExpr {
            constant: self.constant * k,
            terms,
        }
    }

    pub fn neg(&self) -> AffineExpr {
        self.scale(-1.0)
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.neg())
    }

    pub fn eval(&self, assignment: &HashMap<SymVarId, f64>) -> Result<f64> {
        let mut acc = self.constant;
        for &(v, c) in &self.terms {
            let x = assignment.get(&v).ok_or(Error::UnboundVariable(v))?;
            acc += c * x;
        }
        Ok(acc)
    }

    /// Evaluates with `values[id]` as the value of each variable.
    pub fn eval_slice(&self, values: &[f64]) -> f64 {
        let mut acc = self.constant;
        for &(v, c) in &self.terms {
            acc += c * values[v.index()];
        }
        acc
    }

    pub fn render(&self, names: &dyn Fn(SymVarId) -> String) -> String {
        let mut s = format!("{:?}", self.constant);
        for &(v, c) in &self.terms {
            if c < 0.0 {
                s.push_str(&format!(" - {:?}*{}", -c, names(v)));
            } else {
                s.push_str(&format!(" + {:?}*{}", c, names(v)));
            }
        }
        s
    }
}

/// Accumulates `Σ wᵢ·exprᵢ + b` into a dense coefficient buffer; cheaper than
/// chaining [`AffineExpr::add`] when summing many inputs.
#[derive(Debug)]
pub(crate) struct AffineAccumulator {
    pub constant: f64,
    coeffs: Vec<f64>,
    touched: Vec<u32>,
}

impl AffineAccumulator {
    pub fn new(num_vars: usize) -> Self {
        AffineAccumulator {
            constant: 0.0,
            coeffs: vec![0.0; num_vars],
            touched: Vec::new(),
        }
    }

    pub fn add_term(&mut self, v: SymVarId, c: f64) {
        let slot = &mut self.coeffs[v.index()];
        if *slot == 0.0 {
            self.touched.push(v.0);
        }
        *slot += c;
    }

    pub fn add_scaled(&mut self, e: &AffineExpr, w: f64) {
        self.constant += e.constant * w;
        if w != 0.0 {
            for &(v, c) in &e.terms {
                self.add_term(v, c * w);
            }
        }
    }

    /// Returns the accumulated expression and resets the buffer.
    pub fn finish(&mut self) -> AffineExpr {
        self.touched.sort_unstable();
        self.touched.dedup();
        let mut terms = Vec::with_capacity(self.touched.len());
        for &v in &self.touched {
            let c = std::mem::take(&mut self.coeffs[v as usize]);
            if c != 0.0 {
                terms.push((SymVarId(v), c));
            }
        }
        self.touched.clear();
        AffineExpr {
            constant: std::mem::take(&mut self.constant),
            terms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Relation {
    /// `expr > 0`
    Gt,
    /// `expr >= 0`
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }

    pub fn holds(self, v: f64) -> bool {
        match self {
            Relation::Gt => v > 0.0,
            Relation::Ge => v >= 0.0,
        }
    }
}

/// Which side of which branch a constraint records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Branch {
    ReluActive,
    ReluInactive,
    /// Window element `chosen` beats element `other`.
    PoolChoice {
        chosen: usize,
        other: usize,
    },
    /// Logit `target` beats logit `other`.
    Decision {
        target: usize,
        other: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Provenance {
    /// `None` for decision constraints on the logits.
    pub layer: Option<usize>,
    /// Neuron, window or class index inside the layer.
    pub index: usize,
    pub branch: Branch,
}

/// `expr > 0` or `expr >= 0`, where `expr` has at least one term.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    expr: AffineExpr,
    relation: Relation,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutcome {
    Constraint(LinearConstraint),
    Tautology,
    Contradiction,
}

impl BranchOutcome {
    pub fn is_contradiction(&self) -> bool {
        matches!(self, BranchOutcome::Contradiction)
    }
}

impl LinearConstraint {
    /// Resolves constant expressions immediately instead of storing them.
    pub fn build(expr: AffineExpr, relation: Relation, provenance: Provenance) -> BranchOutcome {
        if expr.is_constant() {
            if relation.holds(expr.constant) {
                BranchOutcome::Tautology
            } else {
                BranchOutcome::Contradiction
            }
        } else {
            BranchOutcome::Constraint(LinearConstraint {
                expr,
                relation,
                provenance,
            })
        }
    }

    pub fn expr(&self) -> &AffineExpr {
        &self.expr
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_strict(&self) -> bool {
        self.relation == Relation::Gt
    }

    pub fn holds_f64(&self, values: &[f64]) -> bool {
        self.relation.holds(self.expr.eval_slice(values))
    }

    pub fn render(&self, names: &dyn Fn(SymVarId) -> String) -> String {
        format!("{} {} 0", self.expr.render(names), self.relation.symbol())
    }
}

/// ReLU branch condition: active means `pre > 0`, inactive `-pre >= 0`.
pub fn constraint_from_branch(
    pre_activation: &AffineExpr,
    taken_active: bool,
    provenance: Provenance,
) -> BranchOutcome {
    if taken_active {
        LinearConstraint::build(pre_activation.clone(), Relation::Gt, provenance)
    } else {
        LinearConstraint::build(pre_activation.neg(), Relation::Ge, provenance)
    }
}

/// Conjunction of branch constraints along one path, plus the variable table
/// whose bounds are implicitly part of every query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathConstraint {
    constraints: Vec<LinearConstraint>,
    vars: Vec<SymVar>,
}

impl PathConstraint {
    pub fn new(vars: Vec<SymVar>) -> Self {
        PathConstraint {
            constraints: Vec::new(),
            vars,
        }
    }

    pub fn push(&mut self, c: LinearConstraint) {
        self.constraints.push(c);
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn vars(&self) -> &[SymVar] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn var_name(&self, id: SymVarId) -> String {
        self.vars
            .get(id.index())
            .map_or_else(|| id.to_string(), |v| v.name.clone())
    }

    pub fn render(&self) -> Vec<String> {
        self.constraints
            .iter()
            .map(|c| c.render(&|id| self.var_name(id)))
            .collect()
    }
}
