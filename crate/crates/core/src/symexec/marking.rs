use std::borrow::Cow;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Tensor};
use crate::symexpr::{SymVar, SymVarId};

/// A parameter scalar: `offset` indexes the layer's weights followed by its
/// biases (so `offset >= weights.len()` addresses a bias).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamPosition {
    pub layer: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkTargets {
    /// Multi-indices into the input tensor.
    Inputs(Vec<Vec<usize>>),
    /// Parameter scalars, all in the same layer.
    Params(Vec<ParamPosition>),
}

/// Which scalars are symbolic, each with its own `[lower, upper]` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicMarking {
    pub targets: MarkTargets,
    pub bounds: Vec<(f64, f64)>,
}

impl SymbolicMarking {
    pub fn none() -> Self {
        SymbolicMarking {
            targets: MarkTargets::Inputs(Vec::new()),
            bounds: Vec::new(),
        }
    }

    /// Marks input positions, all sharing the same bounds.
    pub fn inputs(positions: Vec<Vec<usize>>, lower: f64, upper: f64) -> Self {
        let bounds = vec![(lower, upper); positions.len()];
        SymbolicMarking {
            targets: MarkTargets::Inputs(positions),
            bounds,
        }
    }

    /// Marks parameters of one layer, all sharing the same bounds.
    pub fn params(positions: Vec<ParamPosition>, lower: f64, upper: f64) -> Self {
        let bounds = vec![(lower, upper); positions.len()];
        SymbolicMarking {
            targets: MarkTargets::Params(positions),
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        match &self.targets {
            MarkTargets::Inputs(p) => p.len(),
            MarkTargets::Params(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The layer holding symbolic parameters, if any.
    pub fn param_layer(&self) -> Option<usize> {
        match &self.targets {
            MarkTargets::Params(p) => p.first().map(|p| p.layer),
            MarkTargets::Inputs(_) => None,
        }
    }

    /// Validates the marking against `model` and names one variable per
    /// marked position, in marking order.
    pub fn variables(&self, model: &Model) -> Result<Vec<SymVar>> {
        if self.bounds.len() != self.len() {
            return Err(Error::InvalidMarking(format!(
                "{} positions but {} bounds",
                self.len(),
                self.bounds.len()
            )));
        }
        for &(lo, hi) in &self.bounds {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidMarking(format!(
                    "bounds [{lo}, {hi}] must be finite with lower <= upper"
                )));
            }
        }
        let names: Vec<String> = match &self.targets {
            MarkTargets::Inputs(positions) => {
                let shape = model.input_shape();
                let mut seen = HashSet::new();
                positions
                    .iter()
                    .map(|p| {
                        let flat = shape.flat_index(p).ok_or_else(|| {
                            Error::InvalidMarking(format!("input position {p:?} outside shape {shape}"))
                        })?;
                        if !seen.insert(flat) {
                            return Err(Error::InvalidMarking(format!("input position {p:?} marked twice")));
                        }
                        let idx: Vec<String> = p.iter().map(usize::to_string).collect();
                        Ok(format!("sym_{}", idx.join("_")))
                    })
                    .collect::<Result<_>>()?
            }
            MarkTargets::Params(positions) => {
                let Some(layer) = positions.first().map(|p| p.layer) else {
                    return Ok(Vec::new());
                };
                if let Some(other) = positions.iter().find(|p| p.layer != layer) {
                    return Err(Error::NonlinearTerm(format!(
                        "symbolic parameters in layers {layer} and {} would multiply symbolic values",
                        other.layer
                    )));
                }
                let params = model
                    .params(layer)
                    .ok_or_else(|| Error::InvalidMarking(format!("layer {layer} has no parameters")))?;
                let wlen = params.weights.len();
                let mut seen = HashSet::new();
                positions
                    .iter()
                    .map(|p| {
                        if p.offset >= params.len() {
                            return Err(Error::InvalidMarking(format!(
                                "parameter offset {} outside layer {layer} ({} scalars)",
                                p.offset,
                                params.len()
                            )));
                        }
                        if !seen.insert(p.offset) {
                            return Err(Error::InvalidMarking(format!(
                                "parameter {layer},{} marked twice",
                                p.offset
                            )));
                        }
                        Ok(if p.offset < wlen {
                            format!("w{layer}_{}", p.offset)
                        } else {
                            format!("b{layer}_{}", p.offset - wlen)
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(names
            .into_iter()
            .zip(&self.bounds)
            .enumerate()
            .map(|(i, (name, &(lower, upper)))| SymVar {
                id: SymVarId(i as u32),
                name,
                lower,
                upper,
            })
            .collect())
    }

    /// Current concrete values of the marked scalars.
    pub fn extract(&self, model: &Model, input: &Tensor) -> Vec<f64> {
        match &self.targets {
            MarkTargets::Inputs(positions) => positions.iter().map(|p| input.get(p).unwrap_or(f64::NAN)).collect(),
            MarkTargets::Params(positions) => positions
                .iter()
                .map(|p| {
                    model
                        .params(p.layer)
                        .and_then(|lp| lp.get(p.offset))
                        .unwrap_or(f64::NAN)
                })
                .collect(),
        }
    }

    /// Substitutes `values` at the marked positions. Only the side that is
    /// marked gets copied.
    pub fn embed<'m>(&self, model: &'m Model, input: &Tensor, values: &[f64]) -> Result<(Cow<'m, Model>, Tensor)> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} marked positions",
                values.len(),
                self.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("marked values must be finite".into()));
        }
        match &self.targets {
            MarkTargets::Inputs(positions) => {
                let mut x = input.clone();
                let shape = x.shape().clone();
                for (p, &v) in positions.iter().zip(values) {
                    let flat = shape
                        .flat_index(p)
                        .ok_or_else(|| Error::InvalidMarking(format!("input position {p:?} outside shape {shape}")))?;
                    x.data_mut()[flat] = v;
                }
                Ok((Cow::Borrowed(model), x))
            }
            MarkTargets::Params(positions) => {
                let mut m = model.clone();
                for (p, &v) in positions.iter().zip(values) {
                    let lp = m
                        .params_mut(p.layer)
                        .ok_or_else(|| Error::InvalidMarking(format!("layer {} has no parameters", p.layer)))?;
                    lp.set(p.offset, v);
                }
                Ok((Cow::Owned(m), input.clone()))
            }
        }
    }
}
