use serde::{Deserialize, Serialize};

use super::TensorShape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
}

/// One layer of the architecture description, tagged by `kind` in `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        strides: [usize; 2],
        #[serde(default)]
        padding: Padding,
        weights_file: String,
        biases_file: String,
    },
    Dense {
        units: usize,
        weights_file: String,
        biases_file: String,
    },
    Relu,
    Maxpool2d {
        pool: [usize; 2],
        strides: [usize; 2],
    },
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn param_files(&self) -> Option<(&str, &str)> {
        match self {
            LayerSpec::Conv2d {
                weights_file,
                biases_file,
                ..
            }
            | LayerSpec::Dense {
                weights_file,
                biases_file,
                ..
            } => Some((weights_file, biases_file)),
            _ => None,
        }
    }

    /// Expected `(weights, biases)` shapes given this layer's input shape.
    pub fn param_shapes(&self, input: &TensorShape) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d { filters, kernel, .. } => {
                let in_ch = *input.dims().last()?;
                Some((vec![kernel[0], kernel[1], in_ch, filters], vec![filters]))
            }
            LayerSpec::Dense { units, .. } => Some((vec![input.numel(), units], vec![units])),
            _ => None,
        }
    }
}

/// Architecture: input shape plus ordered layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: TensorShape,
    pub layers: Vec<LayerSpec>,
}

fn window_out(layer: usize, extent: usize, window: usize, stride: usize, what: &str) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidLayer {
            layer,
            reason: format!("{what} window and strides must be positive"),
        });
    }
    if window > extent {
        return Err(Error::shape(
            Some(layer),
            format!("{what} window {window} to fit input extent"),
            extent,
        ));
    }
    Ok((extent - window) / stride + 1)
}

impl ModelSpec {
    /// Output shape of every layer, in order.
    pub fn infer_shapes(&self) -> Result<Vec<TensorShape>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidLayer {
                layer: 0,
                reason: "model has no layers".into(),
            });
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let d = cur.dims();
            let next = match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    strides,
                    ..
                } => {
                    if d.len() != 3 {
                        return Err(Error::shape(Some(i), "rank-3 [h,w,c] input for conv2d", cur));
                    }
                    if filters == 0 {
                        return Err(Error::InvalidLayer {
                            layer: i,
                            reason: "conv2d needs at least one filter".into(),
                        });
                    }
                    let h = window_out(i, d[0], kernel[0], strides[0], "conv2d")?;
                    let w = window_out(i, d[1], kernel[1], strides[1], "conv2d")?;
                    vec![h, w, filters]
                }
                LayerSpec::Maxpool2d { pool, strides } => {
                    if d.len() != 3 {
                        return Err(Error::shape(Some(i), "rank-3 [h,w,c] input for maxpool2d", cur));
                    }
                    let h = window_out(i, d[0], pool[0], strides[0], "maxpool2d")?;
                    let w = window_out(i, d[1], pool[1], strides[1], "maxpool2d")?;
                    vec![h, w, d[2]]
                }
                LayerSpec::Dense { units, .. } => {
                    if d.len() != 1 {
                        return Err(Error::shape(
                            Some(i),
                            "rank-1 input for dense (add a flatten layer)",
                            cur,
                        ));
                    }
                    if units == 0 {
                        return Err(Error::InvalidLayer {
                            layer: i,
                            reason: "dense needs at least one unit".into(),
                        });
                    }
                    vec![units]
                }
                LayerSpec::Flatten => vec![cur.numel()],
                LayerSpec::Relu => d.to_vec(),
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::InvalidLayer {
                            layer: i,
                            reason: "softmax is only allowed as the final layer".into(),
                        });
                    }
                    if d.len() != 1 {
                        return Err(Error::shape(Some(i), "rank-1 input for softmax", cur));
                    }
                    d.to_vec()
                }
            };
            cur = TensorShape::new(next).map_err(|e| Error::shape(Some(i), "non-empty output", e))?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    /// Shape entering layer `index`.
    pub fn layer_input_shape<'a>(&'a self, shapes: &'a [TensorShape], index: usize) -> &'a TensorShape {
        if index == 0 {
            &self.input_shape
        } else {
            &shapes[index - 1]
        }
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    fn conv(filters: usize) -> LayerSpec {
        LayerSpec::Conv2d {
            filters,
            kernel: [3, 3],
            strides: [1, 1],
            padding: Padding::Valid,
            weights_file: "w0.bin".into(),
            biases_file: "b0.bin".into(),
        }
    }

    fn dense(units: usize) -> LayerSpec {
        LayerSpec::Dense {
            units,
            weights_file: "w.bin".into(),
            biases_file: "b.bin".into(),
        }
    }

    fn spec(layers: Vec<LayerSpec>) -> ModelSpec {
        ModelSpec {
            name: "t".into(),
            input_shape: shape(&[28, 28, 1]),
            layers,
        }
    }

    #[test]
    fn conv_then_pool_shapes() {
        let s = spec(vec![
            conv(4),
            LayerSpec::Maxpool2d {
                pool: [2, 2],
                strides: [2, 2],
            },
            LayerSpec::Flatten,
            dense(10),
            LayerSpec::Softmax,
        ]);
        let shapes = s.infer_shapes().unwrap();
        assert_eq!(shapes[0], shape(&[26, 26, 4]));
        assert_eq!(shapes[1], shape(&[13, 13, 4]));
        assert_eq!(shapes[2], shape(&[676]));
        assert_eq!(shapes[4], shape(&[10]));
    }

    #[test]
    fn dense_after_unflattened_tensor_is_rejected() {
        let s = spec(vec![
            conv(4),
            LayerSpec::Maxpool2d {
                pool: [2, 2],
                strides: [2, 2],
            },
            dense(10),
        ]);
        assert!(matches!(
            s.infer_shapes(),
            Err(Error::ShapeMismatch { layer: Some(2), .. })
        ));
    }

    #[test]
    fn softmax_must_be_last() {
        let s = spec(vec![LayerSpec::Flatten, LayerSpec::Softmax, dense(3)]);
        assert!(matches!(s.infer_shapes(), Err(Error::InvalidLayer { layer: 1, .. })));
    }

    #[test]
    fn empty_and_oversized_kernels_rejected() {
        assert!(spec(vec![]).infer_shapes().is_err());
        let mut s = spec(vec![conv(2)]);
        s.input_shape = shape(&[2, 2, 1]);
        assert!(matches!(s.infer_shapes(), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn json_kind_tags() {
        let json = serde_json::to_value(spec(vec![conv(2), LayerSpec::Relu])).unwrap();
        assert_eq!(json["layers"][0]["kind"], "conv2d");
        assert_eq!(json["layers"][0]["padding"], "valid");
        assert_eq!(json["layers"][1]["kind"], "relu");
        let pool: LayerSpec = serde_json::from_str(r#"{"kind":"maxpool2d","pool":[2,2],"strides":[2,2]}"#).unwrap();
        assert!(matches!(pool, LayerSpec::Maxpool2d { .. }));
        assert!(serde_json::from_str::<LayerSpec>(r#"{"kind":"sigmoid"}"#).is_err());
    }
}
