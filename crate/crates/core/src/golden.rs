//! Export manifests and golden reference outputs.
//!
//! An exporter writes, next to the model files, a `manifest.json`:
//!
//! ```json
//! {
//!   "source": "mnist.h5",
//!   "files": [{"path": "model.json", "bytes": 1234}, ...],
//!   "shapes": [{"layer": 0, "kind": "conv2d", "output": [26, 26, 4]}, ...],
//!   "golden": {
//!     "inputs_dir": "golden/inputs",
//!     "logits_file": "golden/logits.csv",
//!     "labels_file": "golden/labels.txt",
//!     "truth_file": "golden/truth.txt",
//!     "accuracy": 0.97,
//!     "count": 100
//!   }
//! }
//! ```
//!
//! Golden inputs are one CSV per image (sorted by file name), logits one CSV
//! row per image printed as `%.12e`, labels and truth one integer per line.
//! Paths are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::predict_batch;
use crate::model::{read_csv_dir, read_labels, read_text, Model, Tensor, MODEL_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub layer: usize,
    pub kind: String,
    pub output: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenSet {
    pub inputs_dir: String,
    pub logits_file: String,
    /// Labels the reference framework predicted.
    pub labels_file: String,
    /// Ground-truth labels, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_file: Option<String>,
    /// Reference accuracy against the truth labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportManifest {
    pub source: String,
    pub files: Vec<FileEntry>,
    pub shapes: Vec<LayerShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenSet>,
}

impl ExportManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedJson(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::MalformedJson(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Checks that every listed file exists with the listed size, that the
    /// model files are listed, and that the shape table matches `model`.
    pub fn verify(&self, dir: &Path, model: &Model) -> Result<()> {
        for f in &self.files {
            let p = resolve(dir, &f.path)?;
            let len = fs::metadata(&p).map_err(|_| Error::MissingFile(p.clone()))?.len();
            if len != f.bytes {
                return Err(Error::shape(None, format!("{} bytes in {}", f.bytes, f.path), len));
            }
        }
        let mut needed = vec![MODEL_FILE.to_string()];
        for l in &model.spec().layers {
            if let Some((w, b)) = l.param_files() {
                needed.push(w.to_string());
                needed.push(b.to_string());
            }
        }
        for n in needed {
            if !self.files.iter().any(|f| f.path == n) {
                return Err(Error::MalformedInput(format!("manifest does not list {n}")));
            }
        }
        if self.shapes.len() != model.shapes().len() {
            return Err(Error::shape(
                None,
                format!("{} layers", model.shapes().len()),
                self.shapes.len(),
            ));
        }
        for (s, (shape, layer)) in self.shapes.iter().zip(model.shapes().iter().zip(&model.spec().layers)) {
            if s.output != shape.dims() || s.kind != layer.kind_name() {
                return Err(Error::shape(
                    Some(s.layer),
                    format!("{} {shape}", layer.kind_name()),
                    format!("{} {:?}", s.kind, s.output),
                ));
            }
        }
        Ok(())
    }
}

fn resolve(dir: &Path, rel: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(Error::MalformedInput(format!(
            "manifest path {rel} must stay inside the export directory"
        )));
    }
    Ok(dir.join(p))
}

/// Golden data loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Golden {
    pub inputs: Vec<Tensor>,
    pub logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub truth: Option<Vec<usize>>,
    pub accuracy: Option<f64>,
}

impl Golden {
    pub fn load(dir: &Path, set: &GoldenSet, model: &Model) -> Result<Self> {
        let inputs = read_csv_dir(&resolve(dir, &set.inputs_dir)?, model.input_shape())?;
        let logits_path = resolve(dir, &set.logits_file)?;
        let text = read_text(&logits_path)?;
        let logits: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::MalformedInput(format!("{}: bad logit {v:?}", logits_path.display())))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let labels = read_labels(&resolve(dir, &set.labels_file)?)?;
        let truth = match &set.truth_file {
            Some(t) => Some(read_labels(&resolve(dir, t)?)?),
            None => None,
        };
        let n = set.count;
        let counts = [
            inputs.len(),
            logits.len(),
            labels.len(),
            truth.as_ref().map_or(n, Vec::len),
        ];
        if counts.iter().any(|&c| c != n) {
            return Err(Error::shape(None, format!("{n} golden records"), format!("{counts:?}")));
        }
        if logits.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::MalformedInput("golden logits must be finite".into()));
        }
        Ok(Golden {
            inputs,
            logits,
            labels,
            truth,
            accuracy: set.accuracy,
        })
    }

    /// Writes a golden set computed by this engine: the same files an
    /// exporter produces.
    pub fn write_engine(
        model: &Model,
        inputs: &[Tensor],
        truth: Option<&[usize]>,
        dir: &Path,
        prefix: &str,
    ) -> Result<GoldenSet> {
        let preds = predict_batch(model, inputs)?;
        let inputs_dir = format!("{prefix}/inputs");
        fs::create_dir_all(dir.join(&inputs_dir))?;
        for (i, x) in inputs.iter().enumerate() {
            x.write_csv(&dir.join(&inputs_dir).join(format!("{i:05}.csv")))?;
        }
        let mut logits = String::new();
        let mut labels = String::new();
        for p in &preds {
            let row: Vec<String> = p.logits.data().iter().map(|v| format!("{v:.12e}")).collect();
            logits.push_str(&row.join(","));
            logits.push('\n');
            labels.push_str(&format!("{}\n", p.label));
        }
        let logits_file = format!("{prefix}/logits.csv");
        let labels_file = format!("{prefix}/labels.txt");
        fs::write(dir.join(&logits_file), logits)?;
        fs::write(dir.join(&labels_file), labels)?;
        let (truth_file, accuracy) = match truth {
            Some(t) => {
                let f = format!("{prefix}/truth.txt");
                let body: String = t.iter().map(|l| format!("{l}\n")).collect();
                fs::write(dir.join(&f), body)?;
                let hits = preds.iter().zip(t).filter(|(p, &l)| p.label == l).count();
                (Some(f), Some(hits as f64 / inputs.len().max(1) as f64))
            }
            None => (None, None),
        };
        Ok(GoldenSet {
            inputs_dir,
            logits_file,
            labels_file,
            truth_file,
            accuracy,
            count: inputs.len(),
        })
    }
}

/// Agreement between the engine and a golden set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub count: usize,
    /// Indices whose engine label differs from the golden label.
    pub label_mismatches: Vec<usize>,
    pub max_logit_diff: f64,
    pub tolerance: f64,
    pub engine_accuracy: Option<f64>,
    pub golden_accuracy: Option<f64>,
    pub passed: bool,
}

pub fn check_parity(model: &Model, golden: &Golden, tolerance: f64) -> Result<ParityReport> {
    let preds = predict_batch(model, &golden.inputs)?;
    let mut mismatches = Vec::new();
    let mut max_diff = 0.0f64;
    for (i, (p, g)) in preds.iter().zip(&golden.logits).enumerate() {
        if g.len() != p.logits.len() {
            return Err(Error::shape(None, format!("{} logits", p.logits.len()), g.len()));
        }
        if p.label != golden.labels[i] {
            mismatches.push(i);
        }
        for (a, b) in p.logits.data().iter().zip(g) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let engine_accuracy = golden
        .truth
        .as_ref()
        .map(|t| preds.iter().zip(t).filter(|(p, &l)| p.label == l).count() as f64 / preds.len().max(1) as f64);
    let accuracy_ok = match (engine_accuracy, golden.accuracy) {
        (Some(e), Some(g)) => (e - g).abs() < 1e-12,
        _ => true,
    };
    Ok(ParityReport {
        count: preds.len(),
        passed: mismatches.is_empty() && max_diff <= tolerance && accuracy_ok,
        label_mismatches: mismatches,
        max_logit_diff: max_diff,
        tolerance,
        engine_accuracy,
        golden_accuracy: golden.accuracy,
    })
}

/// Manifest for a model saved with [`crate::model::save_model`] in `dir`,
/// listing the model files and any golden files already present.
pub fn manifest_for(model: &Model, dir: &Path, source: &str, golden: Option<GoldenSet>) -> Result<ExportManifest> {
    let mut paths = vec![MODEL_FILE.to_string()];
    for l in &model.spec().layers {
        if let Some((w, b)) = l.param_files() {
            paths.push(w.to_string());
            paths.push(b.to_string());
        }
    }
    if let Some(g) = &golden {
        let mut inputs: Vec<String> = fs::read_dir(dir.join(&g.inputs_dir))?
            .filter_map(|e| e.ok())
            .map(|e| format!("{}/{}", g.inputs_dir, e.file_name().to_string_lossy()))
            .collect();
        inputs.sort();
        paths.extend(inputs);
        paths.push(g.logits_file.clone());
        paths.push(g.labels_file.clone());
        paths.extend(g.truth_file.clone());
    }
    let files = paths
        .into_iter()
        .map(|path| {
            let bytes = fs::metadata(dir.join(&path))
                .map_err(|_| Error::MissingFile(dir.join(&path)))?
                .len();
            Ok(FileEntry { path, bytes })
        })
        .collect::<Result<_>>()?;
    let shapes = model
        .shapes()
        .iter()
        .zip(&model.spec().layers)
        .enumerate()
        .map(|(layer, (s, l))| LayerShape {
            layer,
            kind: l.kind_name().to_string(),
            output: s.dims().to_vec(),
        })
        .collect();
    Ok(ExportManifest {
        source: source.to_string(),
        files,
        shapes,
        golden,
    })
}
