//! Scalar-quantization surrogate text for dense feature vectors.
//!
//! A vector is centered, rotated by a seeded random orthogonal matrix, split
//! into positive and negative halves (CReLU), thresholded and scaled to
//! integers. The integers become term frequencies of synthetic codewords
//! `v1..v{2d}`, so a plain dot-product ranker over the resulting documents
//! scores exactly `dot(quantize(q), quantize(x))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::EncodeError;
use crate::model::KeyframeId;

/// Components at or below this are zeroed. Tuned for unit-variance inputs,
/// where it keeps roughly 3.6% of the `2d` CReLU components.
pub const DEFAULT_THRESHOLD: f64 = 1.8;
pub const DEFAULT_SCALE: f64 = 10.0;

/// Reserved prefix of visual codewords.
pub const CODEWORD_PREFIX: &str = "v";

const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// How the rotation matrix is rebuilt. Only the recipe is persisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationRecipe {
    Identity,
    /// Q factor of a seeded standard-normal matrix, column signs fixed so
    /// that R has a positive diagonal.
    GaussianQr { seed: u64 },
}

impl RotationRecipe {
    pub fn build(self, dim: usize) -> DMatrix<f64> {
        match self {
            RotationRecipe::Identity => DMatrix::identity(dim, dim),
            RotationRecipe::GaussianQr { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gaussian = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
                let qr = gaussian.qr();
                let mut q = qr.q();
                let r = qr.r();
                for (j, mut column) in q.column_iter_mut().enumerate() {
                    if r[(j, j)] < 0.0 {
                        column.neg_mut();
                    }
                }
                q
            }
        }
    }
}

/// Persisted form of an [`EncoderState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub version: u32,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub rotation: RotationRecipe,
    pub threshold: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    params: EncoderParams,
    rotation: DMatrix<f64>,
}

impl EncoderState {
    pub fn new(mean: Vec<f64>, rotation: RotationRecipe, threshold: f64, scale: f64) -> Result<Self, EncodeError> {
        Self::from_params(EncoderParams {
            version: STATE_VERSION,
            dim: mean.len(),
            mean,
            rotation,
            threshold,
            scale,
        })
    }

    pub fn from_params(params: EncoderParams) -> Result<Self, EncodeError> {
        if params.version != STATE_VERSION {
            return Err(EncodeError::InvalidParameter(format!("unsupported encoder version {}", params.version)));
        }
        if params.dim == 0 || params.mean.len() != params.dim {
            return Err(EncodeError::DimensionMismatch { expected: params.dim, actual: params.mean.len() });
        }
        if params.threshold.is_nan() || params.threshold < 0.0 {
            return Err(EncodeError::InvalidParameter(format!("threshold {} must be non-negative", params.threshold)));
        }
        if !params.scale.is_finite() || params.scale <= 0.0 {
            return Err(EncodeError::InvalidParameter(format!("scale {} must be positive", params.scale)));
        }
        if params.mean.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::NonFinite);
        }
        let rotation = params.rotation.build(params.dim);
        Ok(Self { params, rotation })
    }

    /// Fits the centering mean on `sample` and builds the seeded rotation.
    pub fn fit(sample: &[FeatureVector], seed: u64, threshold: f64, scale: f64) -> Result<Self, EncodeError> {
        let first = sample.first().ok_or(EncodeError::EmptySample)?;
        let dim = first.dim();
        let mut mean = vec![0.0; dim];
        for v in sample {
            check_vector(v, dim)?;
            for (m, x) in mean.iter_mut().zip(&v.0) {
                *m += x;
            }
        }
        let n = sample.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Self::new(mean, RotationRecipe::GaussianQr { seed }, threshold, scale)
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.params.mean
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn threshold(&self) -> f64 {
        self.params.threshold
    }

    pub fn scale(&self) -> f64 {
        self.params.scale
    }

    /// `rotation * (v - mean)`.
    pub fn rotate(&self, v: &FeatureVector) -> Result<DVector<f64>, EncodeError> {
        check_vector(v, self.dim())?;
        let centered = DVector::from_iterator(self.dim(), v.0.iter().zip(&self.params.mean).map(|(x, m)| x - m));
        Ok(&self.rotation * centered)
    }

    /// Integer term-frequency vector of length `2d`.
    pub fn quantize(&self, v: &FeatureVector) -> Result<Vec<u32>, EncodeError> {
        let u = self.rotate(v)?;
        let d = self.dim();
        let mut out = vec![0u32; 2 * d];
        for (i, &x) in u.iter().enumerate() {
            // CReLU: x feeds slot i, -x feeds slot i + d; at most one is positive
            let (slot, magnitude) = if x > 0.0 { (i, x) } else { (i + d, -x) };
            if magnitude > self.params.threshold {
                out[slot] = (self.params.scale * magnitude).floor() as u32;
            }
        }
        Ok(out)
    }

    pub fn encode(&self, v: &FeatureVector) -> Result<SurrogateDocument, EncodeError> {
        Ok(to_document(&self.quantize(v)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.params).expect("encoder params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EncodeError> {
        let params: EncoderParams =
            serde_json::from_str(text).map_err(|e| EncodeError::InvalidParameter(e.to_string()))?;
        Self::from_params(params)
    }
}

fn check_vector(v: &FeatureVector, dim: usize) -> Result<(), EncodeError> {
    if v.dim() != dim {
        return Err(EncodeError::DimensionMismatch { expected: dim, actual: v.dim() });
    }
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(EncodeError::NonFinite);
    }
    Ok(())
}

/// Codeword for zero-based component `i`.
pub fn codeword(i: usize) -> String {
    format!("{CODEWORD_PREFIX}{}", i + 1)
}

/// Sparse codeword frequencies of one quantized vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SurrogateDocument {
    /// Zero-based component index to frequency; frequencies are never zero.
    pub term_freqs: BTreeMap<usize, u32>,
}

impl SurrogateDocument {
    pub fn support(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    /// `(codeword, frequency)` pairs in component order.
    pub fn terms(&self) -> impl Iterator<Item = (String, u32)> + '_ {
        self.term_freqs.iter().map(|(&i, &f)| (codeword(i), f))
    }

    /// Text form: each codeword repeated by its frequency.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, freq) in self.terms() {
            for _ in 0..freq {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&word);
            }
        }
        out
    }
}

pub fn to_document(q: &[u32]) -> SurrogateDocument {
    SurrogateDocument {
        term_freqs: q.iter().enumerate().filter(|(_, &f)| f > 0).map(|(i, &f)| (i, f)).collect(),
    }
}

/// Fraction of zero components across documents of a `2d` codebook.
pub fn mean_sparsity<'a>(docs: impl IntoIterator<Item = &'a SurrogateDocument>, dim: usize) -> f64 {
    let (mut total, mut n) = (0usize, 0usize);
    for doc in docs {
        total += doc.support();
        n += 1;
    }
    if n == 0 {
        return 1.0;
    }
    1.0 - total as f64 / (n as f64 * 2.0 * dim as f64)
}

/// One line of the vector ingest file: `video:segment,f1,f2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLine {
    pub id: KeyframeId,
    pub vector: FeatureVector,
}

impl FromStr for VectorLine {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.trim().split(',');
        let id = parts.next().filter(|s| !s.is_empty()).ok_or("missing id")?;
        let id = id.trim().parse::<KeyframeId>().map_err(|e| e.to_string())?;
        let values = parts
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad component `{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("vector has no components".into());
        }
        Ok(VectorLine { id, vector: FeatureVector(values) })
    }
}

impl VectorLine {
    pub fn to_line(&self) -> String {
        let mut out = self.id.to_string();
        for v in &self.vector.0 {
            let _ = write!(out, ",{v}");
        }
        out
    }
}
