use super::{LayerParams, LayerSpec, Model, ModelSpec, Padding, Tensor, TensorShape};
use crate::error::{Error, Result};

/// Assembles a [`Model`] in memory, layer by layer. Parameter files are named
/// `layer{i}_weights.bin` / `layer{i}_biases.bin`.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, input_shape: &[usize]) -> Self {
        ModelBuilder {
            name: name.into(),
            input_shape: input_shape.to_vec(),
            layers: Vec::new(),
            params: Vec::new(),
        }
    }

    fn files(&self) -> (String, String) {
        let i = self.layers.len();
        (format!("layer{i}_weights.bin"), format!("layer{i}_biases.bin"))
    }

    /// `weights` is `[in, units]` row-major.
    pub fn dense(mut self, weights: Vec<f64>, biases: Vec<f64>) -> Self {
        let (weights_file, biases_file) = self.files();
        self.layers.push(LayerSpec::Dense {
            units: biases.len(),
            weights_file,
            biases_file,
        });
        self.params.push(Some((weights, biases)));
        self
    }

    /// `weights` is `[kh, kw, in_ch, filters]` row-major.
    pub fn conv2d(mut self, kernel: [usize; 2], strides: [usize; 2], weights: Vec<f64>, biases: Vec<f64>) -> Self {
        let (weights_file, biases_file) = self.files();
        self.layers.push(LayerSpec::Conv2d {
            filters: biases.len(),
            kernel,
            strides,
            padding: Padding::Valid,
            weights_file,
            biases_file,
        });
        self.params.push(Some((weights, biases)));
        self
    }

    pub fn relu(self) -> Self {
        self.layer(LayerSpec::Relu)
    }

    pub fn maxpool2d(self, pool: [usize; 2], strides: [usize; 2]) -> Self {
        self.layer(LayerSpec::Maxpool2d { pool, strides })
    }

    pub fn flatten(self) -> Self {
        self.layer(LayerSpec::Flatten)
    }

    pub fn softmax(self) -> Self {
        self.layer(LayerSpec::Softmax)
    }

    fn layer(mut self, l: LayerSpec) -> Self {
        self.layers.push(l);
        self.params.push(None);
        self
    }

    pub fn build(self) -> Result<Model> {
        let spec = ModelSpec {
            name: self.name,
            input_shape: TensorShape::new(self.input_shape)?,
            layers: self.layers,
        };
        let shapes = spec.infer_shapes()?;
        let mut params = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.into_iter().enumerate() {
            params.push(match p {
                None => None,
                Some((w, b)) => {
                    let input = spec.layer_input_shape(&shapes, i);
                    let (ws, bs) = spec.layers[i].param_shapes(input).ok_or_else(|| Error::InvalidLayer {
                        layer: i,
                        reason: "layer takes no parameters".into(),
                    })?;
                    Some(LayerParams {
                        weights: Tensor::new(TensorShape::new(ws)?, w).map_err(|e| at_layer(e, i))?,
                        biases: Tensor::new(TensorShape::new(bs)?, b).map_err(|e| at_layer(e, i))?,
                    })
                }
            });
        }
        Model::new(spec, params)
    }
}

fn at_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::ShapeMismatch { expected, found, .. } => Error::ShapeMismatch {
            layer: Some(layer),
            expected,
            found,
        },
        other => other,
    }
}
