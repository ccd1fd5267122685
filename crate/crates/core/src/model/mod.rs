//! On-disk model format and the in-memory model.
//!
//! A model directory holds `model.json` (architecture) plus one raw binary
//! file per weight and bias tensor: little-endian IEEE-754 `f64`, row-major,
//! no header. Shapes live only in the JSON. Conv2D weights are laid out
//! `[kh, kw, in_ch, filters]`, Dense weights `[in, out]`, and activations are
//! channels-last throughout, so Flatten is a plain reinterpretation of the
//! row-major buffer.

mod builder;
mod io;
mod spec;
mod tensor;

pub use builder::ModelBuilder;
pub use io::{load_model, save_model, MODEL_FILE};
pub use spec::{LayerSpec, ModelSpec, Padding};
pub use tensor::{read_csv_dir, read_labels, Tensor, TensorShape};

pub(crate) use tensor::read_text;

use crate::error::{Error, Result};

/// Weights and biases of one Conv2D or Dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl LayerParams {
    /// Total number of scalars, weights first.
    pub fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter at a flat offset over `weights ++ biases`.
    pub fn get(&self, offset: usize) -> Option<f64> {
        let w = self.weights.len();
        if offset < w {
            Some(self.weights.data()[offset])
        } else {
            self.biases.data().get(offset - w).copied()
        }
    }

    pub fn set(&mut self, offset: usize, value: f64) {
        let w = self.weights.len();
        if offset < w {
            self.weights.data_mut()[offset] = value;
        } else {
            self.biases.data_mut()[offset - w] = value;
        }
    }
}

/// A validated network: architecture, per-layer output shapes and parameters.
///
/// Immutable after construction and `Sync`, so one instance can back any
/// number of concurrent analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    shapes: Vec<TensorShape>,
    params: Vec<Option<LayerParams>>,
}

impl Model {
    /// Validates shapes, parameter presence and finiteness.
    pub fn new(spec: ModelSpec, params: Vec<Option<LayerParams>>) -> Result<Self> {
        let shapes = spec.infer_shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::shape(
                None,
                format!("{} parameter slots", spec.layers.len()),
                params.len(),
            ));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let input = spec.layer_input_shape(&shapes, i);
            match (layer.param_shapes(input), p) {
                (None, None) => {}
                (Some((ws, bs)), Some(p)) => {
                    if p.weights.shape().dims() != ws.as_slice() {
                        return Err(Error::shape(Some(i), format!("weights {ws:?}"), p.weights.shape()));
                    }
                    if p.biases.shape().dims() != bs.as_slice() {
                        return Err(Error::shape(Some(i), format!("biases {bs:?}"), p.biases.shape()));
                    }
                    let all = p.weights.data().iter().chain(p.biases.data());
                    if let Some(offset) = all.into_iter().position(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteParameter { layer: i, offset });
                    }
                }
                (Some(_), None) => {
                    return Err(Error::InvalidLayer {
                        layer: i,
                        reason: format!("{} layer is missing its parameters", layer.kind_name()),
                    })
                }
                (None, Some(_)) => {
                    return Err(Error::InvalidLayer {
                        layer: i,
                        reason: format!("{} layer takes no parameters", layer.kind_name()),
                    })
                }
            }
        }
        Ok(Model { spec, shapes, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &TensorShape {
        &self.spec.input_shape
    }

    /// Output shape of each layer.
    pub fn shapes(&self) -> &[TensorShape] {
        &self.shapes
    }

    pub fn layer_input_shape(&self, index: usize) -> &TensorShape {
        self.spec.layer_input_shape(&self.shapes, index)
    }

    pub fn output_shape(&self) -> &TensorShape {
        self.shapes.last().expect("model has at least one layer")
    }

    pub fn params(&self, layer: usize) -> Option<&LayerParams> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    pub fn num_classes(&self) -> usize {
        self.output_shape().numel()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().flatten().map(LayerParams::len).sum()
    }

    /// Callers must keep every value finite.
    pub(crate) fn params_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.params.get_mut(layer).and_then(Option::as_mut)
    }
}
