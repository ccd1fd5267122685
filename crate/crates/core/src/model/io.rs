use std::path::{Component, Path};

use log::debug;

use super::{LayerParams, Model, ModelSpec, Tensor, TensorShape};
use crate::error::{Error, Result};

pub const MODEL_FILE: &str = "model.json";

/// Loads `model.json` and every parameter file it references from `dir`.
///
/// Each parameter file is read with a single `read` call and decoded in
/// place; there is no per-element text parsing anywhere on this path.
pub fn load_model(dir: &Path) -> Result<Model> {
    let json_path = dir.join(MODEL_FILE);
    let text = super::read_text(&json_path)?;
    let spec: ModelSpec =
        serde_json::from_str(&text).map_err(|e| Error::MalformedJson(format!("{}: {e}", json_path.display())))?;
    let shapes = spec.infer_shapes()?;

    let mut params = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let input = spec.layer_input_shape(&shapes, i);
        let (Some((wf, bf)), Some((ws, bs))) = (layer.param_files(), layer.param_shapes(input)) else {
            params.push(None);
            continue;
        };
        let weights = read_param_file(dir, wf, i, &ws, 0)?;
        let biases = read_param_file(dir, bf, i, &bs, weights.len())?;
        params.push(Some(LayerParams { weights, biases }));
    }
    let model = Model::new(spec, params)?;
    debug!(
        "loaded model {:?}: {} layers, {} parameters",
        model.spec().name,
        model.spec().layers.len(),
        model.num_parameters()
    );
    Ok(model)
}

fn check_relative(name: &str) -> Result<()> {
    let p = Path::new(name);
    let ok = !name.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::MalformedJson(format!(
            "parameter file {name:?} must be a relative path inside the model directory"
        )))
    }
}

fn read_param_file(dir: &Path, name: &str, layer: usize, dims: &[usize], base_offset: usize) -> Result<Tensor> {
    check_relative(name)?;
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::Io(e),
    })?;
    let shape = TensorShape::new(dims.to_vec())?;
    let expected = shape.numel();
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(Error::shape(
            Some(layer),
            format!("{expected} f64 values ({} bytes) in {name}", expected * 8),
            format!("{} bytes", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter {
            layer,
            offset: base_offset + pos,
        });
    }
    Tensor::new(shape, data)
}

/// Writes `model.json` and the parameter files into `dir`, creating it if needed.
pub fn save_model(model: &Model, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(model.spec()).map_err(|e| Error::MalformedJson(e.to_string()))?;
    json.push('\n');
    std::fs::write(dir.join(MODEL_FILE), json)?;
    for (i, layer) in model.spec().layers.iter().enumerate() {
        let (Some((wf, bf)), Some(p)) = (layer.param_files(), model.params(i)) else {
            continue;
        };
        check_relative(wf)?;
        check_relative(bf)?;
        write_param_file(&dir.join(wf), &p.weights)?;
        write_param_file(&dir.join(bf), &p.biases)?;
    }
    Ok(())
}

fn write_param_file(path: &Path, t: &Tensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerSpec, Padding};

    fn conv_model() -> Model {
        let spec = ModelSpec {
            name: "conv".into(),
            input_shape: TensorShape::new(vec![5, 5, 1]).unwrap(),
            layers: vec![
                LayerSpec::Conv2d {
                    filters: 2,
                    kernel: [3, 3],
                    strides: [1, 1],
                    padding: Padding::Valid,
                    weights_file: "w0.bin".into(),
                    biases_file: "b0.bin".into(),
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 3,
                    weights_file: "w3.bin".into(),
                    biases_file: "b3.bin".into(),
                },
            ],
        };
        let w0 = Tensor::new(
            TensorShape::new(vec![3, 3, 1, 2]).unwrap(),
            (0..18).map(|i| i as f64 * 0.5).collect(),
        )
        .unwrap();
        let b0 = Tensor::from_vec(vec![0.25, -1.0]);
        let w3 = Tensor::new(
            TensorShape::new(vec![18, 3]).unwrap(),
            (0..54).map(|i| (i as f64).sin()).collect(),
        )
        .unwrap();
        let b3 = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        Model::new(
            spec,
            vec![
                Some(LayerParams {
                    weights: w0,
                    biases: b0,
                }),
                None,
                None,
                Some(LayerParams {
                    weights: w3,
                    biases: b3,
                }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = conv_model();
        save_model(&m, dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.params(0).unwrap().weights.shape().dims(), &[3, 3, 1, 2]);
        assert_eq!(loaded.params(0).unwrap().weights.len(), 18);
    }

    #[test]
    fn truncated_weights_file_is_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&conv_model(), dir.path()).unwrap();
        let p = dir.path().join("w3.bin");
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_model(dir.path()),
            Err(Error::ShapeMismatch { layer: Some(3), .. })
        ));
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_model(dir.path()),
            Err(Error::ShapeMismatch { layer: Some(3), .. })
        ));
    }

    #[test]
    fn missing_files_and_bad_json() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::MissingFile(_))));
        save_model(&conv_model(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("b0.bin")).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::MissingFile(p)) if p.ends_with("b0.bin")));
        std::fs::write(dir.path().join(MODEL_FILE), "{\"name\": ").unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::MalformedJson(_))));
    }

    #[test]
    fn nan_parameter_is_reported_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&conv_model(), dir.path()).unwrap();
        let mut b = Vec::new();
        for v in [0.25, f64::NAN] {
            b.extend_from_slice(&f64::to_le_bytes(v));
        }
        std::fs::write(dir.path().join("b0.bin"), b).unwrap();
        assert!(matches!(
            load_model(dir.path()),
            Err(Error::NonFiniteParameter { layer: 0, offset: 19 })
        ));
    }

    #[test]
    fn escaping_parameter_paths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&conv_model(), dir.path()).unwrap();
        let json = std::fs::read_to_string(dir.path().join(MODEL_FILE)).unwrap();
        std::fs::write(dir.path().join(MODEL_FILE), json.replace("\"w0.bin\"", "\"../w0.bin\"")).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::MalformedJson(_))));
    }
}
