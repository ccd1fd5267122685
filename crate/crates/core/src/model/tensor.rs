use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a tensor, channels-last for images (`[h, w, c]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("tensor shape must have at least one dim".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("dim {pos} of shape {dims:?} is zero")));
        }
        Ok(TensorShape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major flat offset of a multi-index, or `None` when out of range.
    pub fn flat_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.0.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.0) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.0.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.0).rev() {
            *slot = flat % d;
            flat /= d;
        }
        idx
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        TensorShape::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(s: TensorShape) -> Self {
        s.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Shaped, row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                None,
                format!("{} values for shape {shape}", shape.numel()),
                data.len(),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let data = vec![0.0; shape.numel()];
        Tensor { shape, data }
    }

    /// Rank-1 tensor. Panics on empty `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "tensor needs at least one element");
        Tensor {
            shape: TensorShape(vec![data.len()]),
            data,
        }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.shape.flat_index(index).map(|i| self.data[i])
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: TensorShape) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    /// Reads a comma-separated tensor file. Line breaks are treated as
    /// separators, so both one-line and one-row-per-line files work.
    pub fn read_csv(path: &Path, shape: &TensorShape) -> Result<Self> {
        let text = read_text(path)?;
        let data = parse_csv_values(&text).map_err(|e| Error::MalformedInput(format!("{}: {e}", path.display())))?;
        if data.len() != shape.numel() {
            return Err(Error::shape(
                None,
                format!("{} values for input shape {shape}", shape.numel()),
                format!("{} values in {}", data.len(), path.display()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedInput(format!(
                "{}: value {pos} is not finite",
                path.display()
            )));
        }
        Ok(Tensor {
            shape: shape.clone(),
            data,
        })
    }

    /// Writes the values on one line using shortest round-trip formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let line = self.data.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        std::fs::write(path, line + "\n")?;
        Ok(())
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

pub(crate) fn parse_csv_values(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("cannot parse {s:?} as a number")))
        .collect()
}

/// Reads a labels file: one non-negative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<usize>()
                .map_err(|_| Error::MalformedInput(format!("{}: bad label {l:?}", path.display())))
        })
        .collect()
}

/// Loads every `*.csv` file of a directory in file-name order.
pub fn read_csv_dir(dir: &Path, shape: &TensorShape) -> Result<Vec<Tensor>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(dir.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| Tensor::read_csv(p, shape)).collect()
}
