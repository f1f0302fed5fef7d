//! ReLU multilayer perceptron and its file format.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

pub const MODEL_FORMAT: &str = "mpc-warmstart-mlp";
pub const MODEL_VERSION: u32 = 1;

/// Affine layers `λ_l(a) = W_l a + b_l`, each but the last followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub widths: Vec<usize>,
    /// `weights[l]` is `widths[l+1] × widths[l]`.
    pub weights: Vec<Mat>,
    pub biases: Vec<Vector>,
    /// Seed the parameters were initialized from.
    pub seed: u64,
}

/// Gradient (or any other quantity) with the shape of a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vector>,
}

impl MlpGradient {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Mat::zeros(w.nrows(), w.ncols())).collect(),
            biases: model.biases.iter().map(|b| Vector::zeros(b.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Mat::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit)));
            biases.push(Vector::zeros(fan_out));
        }
        Ok(Self { widths: widths.to_vec(), weights, biases, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut a = x.clone();
        let last = self.layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = w * a + b;
            if l < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Forward pass on the columns of `x`, keeping every layer's
    /// pre-activation (needed for backpropagation).
    pub(crate) fn forward_cached(&self, x: &Mat) -> (Vec<Mat>, Vec<Mat>) {
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers());
        let last = self.layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut s = w * acts.last().unwrap();
            for mut col in s.column_iter_mut() {
                col += b;
            }
            let a = if l < last { s.map(|v| v.max(0.0)) } else { s.clone() };
            pre.push(s);
            acts.push(a);
        }
        (acts, pre)
    }

    pub fn forward_batch(&self, x: &Mat) -> Mat {
        self.forward_cached(x).0.pop().unwrap()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            widths: self.widths.clone(),
            seed: self.seed,
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| LayerBlob {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weights: encode_f64(w.transpose().as_slice()),
                    biases: encode_f64(b.as_slice()),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Parse { offset: 0, message: format!("unknown format '{}'", file.format) });
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Version { found: file.version, expected: MODEL_VERSION });
        }
        if file.widths.len() < 2 || file.layers.len() != file.widths.len() - 1 {
            return Err(Error::Parse { offset: 0, message: "layer count does not match widths".into() });
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, layer) in file.layers.iter().enumerate() {
            let (fan_in, fan_out) = (file.widths[l], file.widths[l + 1]);
            if layer.rows != fan_out || layer.cols != fan_in {
                return Err(Error::Parse { offset: 0, message: format!("layer {l} has shape {}x{}", layer.rows, layer.cols) });
            }
            let w = decode_f64(&layer.weights, fan_in * fan_out)?;
            let b = decode_f64(&layer.biases, fan_out)?;
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Parse { offset: 0, message: format!("layer {l} has non-finite entries") });
            }
            // stored row-major
            weights.push(Mat::from_row_slice(fan_out, fan_in, &w));
            biases.push(Vector::from_vec(b));
        }
        Ok(Self { widths: file.widths, weights, biases, seed: file.seed })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    widths: Vec<usize>,
    seed: u64,
    layers: Vec<LayerBlob>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerBlob {
    rows: usize,
    cols: usize,
    weights: String,
    biases: String,
}

pub(crate) fn encode_f64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub(crate) fn decode_f64(text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text.trim())
        .map_err(|e| Error::Parse { offset: 0, message: format!("bad base64 blob: {e}") })?;
    if bytes.len() != expected * 8 {
        return Err(Error::Parse {
            offset: 0,
            message: format!("blob holds {} bytes, expected {}", bytes.len(), expected * 8),
        });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Converts a serde_json line/column position into a byte offset.
pub(crate) fn json_error(text: &str, err: &serde_json::Error) -> Error {
    let (line, col) = (err.line(), err.column());
    let offset = if line == 0 {
        0
    } else {
        text.split_inclusive('\n').take(line - 1).map(str::len).sum::<usize>() + col.saturating_sub(1)
    };
    Error::Parse { offset: offset.min(text.len()), message: err.to_string() }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text = std::fs::read_to_string(path)?;
    MlpModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer() {
        let mut m = MlpModel::new(&[3, 3], 0).unwrap();
        m.weights[0] = Mat::identity(3, 3);
        let x = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn relu_pattern() {
        let mut m = MlpModel::new(&[2, 2, 2], 0).unwrap();
        m.weights[0] = Mat::identity(2, 2);
        m.biases[0] = Vector::from_vec(vec![-0.5, 0.0]);
        m.weights[1] = Mat::identity(2, 2);
        let y = m.forward(&Vector::from_vec(vec![0.2, 1.0])).unwrap();
        assert_eq!(y, Vector::from_vec(vec![0.0, 1.0]));
        let y = m.forward(&Vector::from_vec(vec![2.0, -1.0])).unwrap();
        assert_eq!(y, Vector::from_vec(vec![1.5, 0.0]));
    }

    #[test]
    fn width_mismatch() {
        let m = MlpModel::new(&[2, 4, 3], 1).unwrap();
        assert!(m.forward(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn parameter_count_matches_sys1_architecture() {
        assert_eq!(MlpModel::new(&[2, 32, 32, 30], 0).unwrap().parameter_count(), 2142);
    }

    #[test]
    fn json_round_trip() {
        let m = MlpModel::new(&[3, 5, 4], 42).unwrap();
        let back = MlpModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn version_mismatch_rejected() {
        let m = MlpModel::new(&[2, 2], 1).unwrap();
        let text = m.to_json().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(MlpModel::from_json(&text), Err(Error::Version { found: 7, .. })));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let m = MlpModel::new(&[2, 2], 1).unwrap();
        let text = m.to_json();
        let cut = &text[..text.len() / 2];
        match MlpModel::from_json(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
