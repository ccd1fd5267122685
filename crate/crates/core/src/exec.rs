//! Reference forward pass.
//!
//! Dot products accumulate from `0.0` in ascending flat index order of the
//! receptive field and add the bias last, so results are reproducible
//! bit-for-bit. ReLU is active iff its input is strictly greater than zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LayerSpec, Model, Tensor};

/// ReLU on/off decisions of one ReLU layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ReluSigns {
    pub layer: usize,
    /// `true` iff the pre-activation was `> 0`.
    pub signs: Vec<bool>,
}

/// Selected element of every window of one max-pool layer, as the
/// row-major offset inside the window (`ky * pool_w + kx`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PoolChoices {
    pub layer: usize,
    pub choices: Vec<usize>,
}

/// Branch outcomes of one execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct ActivationPattern {
    pub relu: Vec<ReluSigns>,
    pub pool: Vec<PoolChoices>,
}

impl ActivationPattern {
    pub fn active_count(&self) -> usize {
        self.relu.iter().map(|l| l.signs.iter().filter(|&&s| s).count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Final values before softmax.
    pub logits: Tensor,
    /// Present iff the model ends in a softmax layer.
    pub probabilities: Option<Tensor>,
    pub label: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn conv2d(
    input: &[f64],
    in_dims: &[usize],
    out_dims: &[usize],
    kernel: [usize; 2],
    strides: [usize; 2],
    weights: &[f64],
    biases: &[f64],
) -> Vec<f64> {
    let (w_in, ch) = (in_dims[1], in_dims[2]);
    let (oh, ow, filters) = (out_dims[0], out_dims[1], out_dims[2]);
    let mut out = Vec::with_capacity(oh * ow * filters);
    for oy in 0..oh {
        for ox in 0..ow {
            for f in 0..filters {
                let mut acc = 0.0;
                for ky in 0..kernel[0] {
                    let row = (oy * strides[0] + ky) * w_in;
                    for kx in 0..kernel[1] {
                        let base = (row + ox * strides[1] + kx) * ch;
                        let wbase = (ky * kernel[1] + kx) * ch;
                        for c in 0..ch {
                            acc += input[base + c] * weights[(wbase + c) * filters + f];
                        }
                    }
                }
                out.push(acc + biases[f]);
            }
        }
    }
    out
}

pub(crate) fn dense(input: &[f64], units: usize, weights: &[f64], biases: &[f64]) -> Vec<f64> {
    (0..units)
        .map(|j| {
            let mut acc = 0.0;
            for (i, &x) in input.iter().enumerate() {
                acc += x * weights[i * units + j];
            }
            acc + biases[j]
        })
        .collect()
}

/// Flat input offsets of every pooling window, in output order; each inner
/// list is in ascending row-major order.
pub(crate) fn pool_windows(
    in_dims: &[usize],
    out_dims: &[usize],
    pool: [usize; 2],
    strides: [usize; 2],
) -> Vec<Vec<usize>> {
    let (w_in, ch) = (in_dims[1], in_dims[2]);
    let mut windows = Vec::with_capacity(out_dims.iter().product());
    for oy in 0..out_dims[0] {
        for ox in 0..out_dims[1] {
            for c in 0..ch {
                let mut win = Vec::with_capacity(pool[0] * pool[1]);
                for ky in 0..pool[0] {
                    for kx in 0..pool[1] {
                        win.push(((oy * strides[0] + ky) * w_in + ox * strides[1] + kx) * ch + c);
                    }
                }
                windows.push(win);
            }
        }
    }
    windows
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteActivation { layer, index }),
        None => Ok(()),
    }
}

/// Runs the network on one input.
pub fn forward(model: &Model, input: &Tensor) -> Result<(Prediction, ActivationPattern)> {
    if input.shape() != model.input_shape() {
        return Err(Error::shape(None, model.input_shape(), input.shape()));
    }
    if let Some(pos) = input.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::MalformedInput(format!("input value {pos} is not finite")));
    }

    let mut pattern = ActivationPattern::default();
    let mut cur = input.data().to_vec();
    let mut logits = None;
    for (i, layer) in model.spec().layers.iter().enumerate() {
        let in_dims = model.layer_input_shape(i).dims();
        let out_dims = model.shapes()[i].dims();
        cur = match *layer {
            LayerSpec::Conv2d { kernel, strides, .. } => {
                let p = model.params(i).expect("validated");
                conv2d(
                    &cur,
                    in_dims,
                    out_dims,
                    kernel,
                    strides,
                    p.weights.data(),
                    p.biases.data(),
                )
            }
            LayerSpec::Dense { units, .. } => {
                let p = model.params(i).expect("validated");
                dense(&cur, units, p.weights.data(), p.biases.data())
            }
            LayerSpec::Relu => {
                let signs: Vec<bool> = cur.iter().map(|&x| x > 0.0).collect();
                let out = cur
                    .iter()
                    .zip(&signs)
                    .map(|(&x, &on)| if on { x } else { 0.0 })
                    .collect();
                pattern.relu.push(ReluSigns { layer: i, signs });
                out
            }
            LayerSpec::Maxpool2d { pool, strides } => {
                let windows = pool_windows(in_dims, out_dims, pool, strides);
                let mut choices = Vec::with_capacity(windows.len());
                let out = windows
                    .iter()
                    .map(|win| {
                        let vals: Vec<f64> = win.iter().map(|&j| cur[j]).collect();
                        let k = argmax(&vals);
                        choices.push(k);
                        vals[k]
                    })
                    .collect();
                pattern.pool.push(PoolChoices { layer: i, choices });
                out
            }
            LayerSpec::Flatten => cur,
            LayerSpec::Softmax => {
                logits = Some(cur.clone());
                softmax(&cur)
            }
        };
        check_finite(&cur, i)?;
    }

    let out_shape = model.output_shape().clone();
    let prediction = match logits {
        Some(z) => Prediction {
            label: argmax(&z),
            logits: Tensor::new(out_shape.clone(), z)?,
            probabilities: Some(Tensor::new(out_shape, cur)?),
        },
        None => Prediction {
            label: argmax(&cur),
            logits: Tensor::new(out_shape, cur)?,
            probabilities: None,
        },
    };
    Ok((prediction, pattern))
}

/// Predicts every input in parallel; output order matches input order.
pub fn predict_batch(model: &Model, inputs: &[Tensor]) -> Result<Vec<Prediction>> {
    inputs.par_iter().map(|x| forward(model, x).map(|(p, _)| p)).collect()
}

/// Fraction of inputs whose predicted label equals the given label.
pub fn evaluate_dataset(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
    if inputs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = predict_batch(model, inputs)?;
    let hits = predictions.iter().zip(labels).filter(|(p, &l)| p.label == l).count();
    Ok(hits as f64 / inputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerParams, ModelSpec, Padding, TensorShape};
    use proptest::prelude::*;

    fn dense_model(weights: Vec<f64>, biases: Vec<f64>, inputs: usize, relu: bool, softmax: bool) -> Model {
        let units = biases.len();
        let mut layers = vec![LayerSpec::Dense {
            units,
            weights_file: "w.bin".into(),
            biases_file: "b.bin".into(),
        }];
        let mut params = vec![Some(LayerParams {
            weights: Tensor::new(TensorShape::new(vec![inputs, units]).unwrap(), weights).unwrap(),
            biases: Tensor::from_vec(biases),
        })];
        if relu {
            layers.push(LayerSpec::Relu);
            params.push(None);
        }
        if softmax {
            layers.push(LayerSpec::Softmax);
            params.push(None);
        }
        let spec = ModelSpec {
            name: "dense".into(),
            input_shape: TensorShape::new(vec![inputs]).unwrap(),
            layers,
        };
        Model::new(spec, params).unwrap()
    }

    #[test]
    fn zero_model_predicts_label_zero() {
        let m = dense_model(vec![0.0; 12], vec![0.0; 4], 3, true, true);
        let (p, _) = forward(&m, &Tensor::from_vec(vec![7.0, -2.0, 1.0])).unwrap();
        assert_eq!(p.logits.data(), &[0.0; 4]);
        assert_eq!(p.label, 0);
        assert_eq!(p.probabilities.unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn identity_dense_with_relu() {
        let m = dense_model(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, true, false);
        let (p, pat) = forward(&m, &Tensor::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(p.logits.data(), &[3.0, 0.0]);
        assert_eq!(p.label, 0);
        assert_eq!(pat.relu[0].signs, vec![true, false]);
        assert!(p.probabilities.is_none());
    }

    #[test]
    fn relu_at_exactly_zero_is_inactive() {
        let m = dense_model(vec![1.0], vec![0.0], 1, true, false);
        let (_, pat) = forward(&m, &Tensor::from_vec(vec![0.0])).unwrap();
        assert_eq!(pat.relu[0].signs, vec![false]);
    }

    #[test]
    fn wrong_input_shape_and_overflow() {
        let m = dense_model(vec![1e300, 1e300], vec![0.0], 2, false, false);
        assert!(matches!(
            forward(&m, &Tensor::from_vec(vec![1.0])),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            forward(&m, &Tensor::from_vec(vec![1e300, 1e300])),
            Err(Error::NonFiniteActivation { layer: 0, index: 0 })
        ));
    }

    #[test]
    fn conv_pool_hand_example() {
        // 3x3 single-channel input, 2x2 kernel of ones, then a 2x2 pool.
        let spec = ModelSpec {
            name: "c".into(),
            input_shape: TensorShape::new(vec![3, 3, 1]).unwrap(),
            layers: vec![
                LayerSpec::Conv2d {
                    filters: 1,
                    kernel: [2, 2],
                    strides: [1, 1],
                    padding: Padding::Valid,
                    weights_file: "w".into(),
                    biases_file: "b".into(),
                },
                LayerSpec::Maxpool2d {
                    pool: [2, 2],
                    strides: [1, 1],
                },
                LayerSpec::Flatten,
            ],
        };
        let params = vec![
            Some(LayerParams {
                weights: Tensor::new(TensorShape::new(vec![2, 2, 1, 1]).unwrap(), vec![1.0; 4]).unwrap(),
                biases: Tensor::from_vec(vec![0.5]),
            }),
            None,
            None,
        ];
        let m = Model::new(spec, params).unwrap();
        let x = Tensor::new(
            TensorShape::new(vec![3, 3, 1]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let (p, pat) = forward(&m, &x).unwrap();
        // conv output: [12.5, 16.5, 24.5, 28.5]; max is the last element.
        assert_eq!(p.logits.data(), &[28.5]);
        assert_eq!(pat.pool[0].choices, vec![3]);
    }

    #[test]
    fn evaluate_dataset_errors_and_accuracy() {
        let m = dense_model(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, false, false);
        assert!(matches!(evaluate_dataset(&m, &[], &[]), Err(Error::EmptyDataset)));
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        assert!(evaluate_dataset(&m, std::slice::from_ref(&x), &[]).is_err());
        assert_eq!(evaluate_dataset(&m, std::slice::from_ref(&x), &[1]).unwrap(), 1.0);
        assert_eq!(evaluate_dataset(&m, &[x.clone(), x], &[1, 0]).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn softmax_preserves_argmax(z in prop::collection::vec(-1e3f64..1e3, 1..12)) {
            let p = softmax(&z);
            prop_assert_eq!(argmax(&p), argmax(&z));
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn relu_and_pool_invariants(
            vals in prop::collection::vec(-5i32..5, 16),
            w in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            // 4x4x1 input -> 1x1 conv (1 filter) -> relu -> 2x2 pool
            let spec = ModelSpec {
                name: "p".into(),
                input_shape: TensorShape::new(vec![4, 4, 1]).unwrap(),
                layers: vec![
                    LayerSpec::Conv2d { filters: 1, kernel: [1, 1], strides: [1, 1], padding: Padding::Valid, weights_file: "w".into(), biases_file: "b".into() },
                    LayerSpec::Relu,
                    LayerSpec::Maxpool2d { pool: [2, 2], strides: [2, 2] },
                ],
            };
            let params = vec![
                Some(LayerParams {
                    weights: Tensor::new(TensorShape::new(vec![1, 1, 1, 1]).unwrap(), vec![w[0]]).unwrap(),
                    biases: Tensor::from_vec(vec![w[1]]),
                }),
                None,
                None,
            ];
            let m = Model::new(spec, params).unwrap();
            let x = Tensor::new(TensorShape::new(vec![4, 4, 1]).unwrap(), vals.iter().map(|&v| v as f64).collect()).unwrap();
            let (p1, pat) = forward(&m, &x).unwrap();
            let (p2, _) = forward(&m, &x).unwrap();
            prop_assert_eq!(p1.logits.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            p2.logits.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());

            let pre: Vec<f64> = x.data().iter().map(|&v| v * w[0] + w[1]).collect();
            let post: Vec<f64> = pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            for (&y, &xv) in post.iter().zip(&pre) {
                prop_assert!(y >= 0.0 && y >= xv && y * (y - xv) == 0.0);
            }
            let windows = pool_windows(&[4, 4, 1], &[2, 2, 1], [2, 2], [2, 2]);
            for (wi, win) in windows.iter().enumerate() {
                let k = pat.pool[0].choices[wi];
                let chosen = post[win[k]];
                prop_assert_eq!(chosen, p1.logits.data()[wi]);
                for (j, &idx) in win.iter().enumerate() {
                    prop_assert!(chosen >= post[idx]);
                    if j < k { prop_assert!(chosen > post[idx]); }
                }
            }
        }
    }
}
