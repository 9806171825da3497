use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, Tape, Var};
use super::tensor::{gemm, Tensor};
use super::NeuralError;
use crate::parallel::map_jobs;

/// Rows per block in [`MlpModel::predict_features`]; a multiple of the
/// GEMM row tile, so blocking does not change any row's result.
pub const PREDICT_BLOCK: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    #[default]
    Silu,
}

impl Activation {
    pub(crate) fn id(self) -> u8 {
        match self {
            Self::Tanh => 0,
            Self::Silu => 1,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Self::Tanh),
            1 => Some(Self::Silu),
            _ => None,
        }
    }
}

/// How Fourier frequencies are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyInit {
    /// Magnitude `2π·2^s` with `s ~ U(−5, 5)` and a random sign.
    #[default]
    LogUniform,
    /// `N(0, π)` (standard deviation π).
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub n_freq: usize,
    #[serde(default)]
    pub init: FrequencyInit,
    /// Append the raw inputs after the sine and cosine features.
    #[serde(default = "yes")]
    pub pass_through: bool,
}

fn yes() -> bool {
    true
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            n_freq: 10,
            init: FrequencyInit::LogUniform,
            pass_through: true,
        }
    }
}

/// Fixed random Fourier features `[sin(xBᵀ), cos(xBᵀ), x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    pub spec: EmbeddingSpec,
    pub input_dim: usize,
    /// `n_freq × input_dim`, row-major.
    pub freqs: Vec<f64>,
}

impl FourierEmbedding {
    pub fn output_dim(&self) -> usize {
        2 * self.spec.n_freq
            + if self.spec.pass_through {
                self.input_dim
            } else {
                0
            }
    }

    /// Features for a batch `x` of shape `n × input_dim`.
    pub fn features(&self, x: &Tensor) -> Tensor {
        let (n, d, m) = (x.rows(), self.input_dim, self.spec.n_freq);
        let mut z = vec![0.0; n * m];
        gemm(n, d, m, x.data(), false, &self.freqs, true, 0.0, &mut z);
        let width = self.output_dim();
        let mut out = vec![0.0; n * width];
        for (r, row) in out.chunks_mut(width).enumerate() {
            let zr = &z[r * m..(r + 1) * m];
            for (k, &v) in zr.iter().enumerate() {
                (row[k], row[m + k]) = v.sin_cos();
            }
            if self.spec.pass_through {
                row[2 * m..].copy_from_slice(&x.data()[r * d..(r + 1) * d]);
            }
        }
        Tensor::matrix(n, width, out).expect("feature buffer sized above")
    }
}

/// Fully connected network; hidden layers use the activation, the last
/// layer is linear with a single output.
///
/// Parameters are stored as `[W₀, b₀, W₁, b₁, …]` with `Wₗ` of shape
/// `fan_in × fan_out` so a layer computes `x·Wₗ + bₗ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layer_sizes: Vec<usize>,
    pub(crate) activation: Activation,
    pub(crate) embedding: Option<FourierEmbedding>,
    pub(crate) params: Vec<Tensor>,
}

impl MlpModel {
    /// Raw input dimension followed by every layer width, output last.
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn embedding(&self) -> Option<&FourierEmbedding> {
        self.embedding.as_ref()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn n_layers(&self) -> usize {
        self.params.len() / 2
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Copies parameters from another model of identical architecture.
    pub fn load_params(&mut self, other: &MlpModel) -> Result<(), NeuralError> {
        if other.layer_sizes != self.layer_sizes {
            return Err(NeuralError::Shape("architectures differ".into()));
        }
        self.params.clone_from(&other.params);
        Ok(())
    }

    /// Network input for a batch of raw points: the embedding features, or
    /// the points themselves.
    pub fn features(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        if x.cols() != self.input_dim() {
            return Err(NeuralError::Shape(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(match &self.embedding {
            Some(e) => e.features(x),
            None => x.clone(),
        })
    }

    /// Places every parameter on the tape as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Records the forward pass from precomputed features; returns the
    /// `n × 1` output node.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        features: Var,
    ) -> Result<Var, NeuralError> {
        let mut h = features;
        let last = self.n_layers() - 1;
        for l in 0..=last {
            let z = tape.linear(h, params[2 * l], params[2 * l + 1])?;
            h = if l == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => tape.tanh(z),
                    Activation::Silu => tape.silu(z),
                }
            };
        }
        Ok(h)
    }

    /// Forward pass from precomputed features without recording.
    ///
    /// Rows are pushed through the whole network in blocks of
    /// [`PREDICT_BLOCK`] so the activations stay in cache.
    pub fn predict_features(&self, features: &Tensor) -> Vec<f64> {
        let (n, d) = (features.rows(), features.cols());
        if n <= PREDICT_BLOCK {
            return self.predict_rows(features.data(), n, d);
        }
        let starts: Vec<usize> = (0..n).step_by(PREDICT_BLOCK).collect();
        map_jobs(starts, |s| {
            let e = (s + PREDICT_BLOCK).min(n);
            self.predict_rows(&features.data()[s * d..e * d], e - s, d)
        })
        .concat()
    }

    fn predict_rows(&self, rows: &[f64], n: usize, width: usize) -> Vec<f64> {
        let widest = self.layer_sizes[1..].iter().copied().max().unwrap_or(1);
        let mut h = rows.to_vec();
        let mut z = Vec::with_capacity(n * widest);
        let mut width = width;
        let last = self.n_layers() - 1;
        for l in 0..=last {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let out_w = w.cols();
            z.clear();
            z.resize(n * out_w, 0.0);
            gemm(n, width, out_w, &h, false, w.data(), false, 0.0, &mut z);
            for row in z.chunks_mut(out_w) {
                row.iter_mut().zip(b.data()).for_each(|(o, b)| *o += b);
            }
            if l != last {
                match self.activation {
                    Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::Silu => z.iter_mut().for_each(|v| *v *= sigmoid(*v)),
                }
            }
            std::mem::swap(&mut h, &mut z);
            width = out_w;
        }
        h
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>, NeuralError> {
        Ok(self.predict_features(&self.features(x)?))
    }
}

/// Builds a network with Glorot-normal weights and zero biases.
///
/// `layer_sizes` lists the raw input dimension, the hidden widths and the
/// output width. Draws come from `ChaCha8Rng::seed_from_u64(seed)`:
/// embedding frequencies first, then each weight matrix in row-major order.
pub fn init_mlp(
    layer_sizes: &[usize],
    activation: Activation,
    embedding: Option<EmbeddingSpec>,
    seed: u64,
) -> Result<MlpModel, NeuralError> {
    if layer_sizes.len() < 3 {
        return Err(NeuralError::Config(
            "need an input size, at least one hidden layer and an output size".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(NeuralError::Config("layer sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = layer_sizes[0];
    let embedding = match embedding {
        Some(spec) if spec.n_freq == 0 => {
            return Err(NeuralError::Config(
                "embedding needs at least one frequency".into(),
            ))
        }
        Some(spec) => {
            let count = spec.n_freq * input_dim;
            let freqs = match spec.init {
                FrequencyInit::LogUniform => (0..count)
                    .map(|_| {
                        let mag = 2.0 * PI * 2f64.powf(rng.gen_range(-5.0..5.0));
                        if rng.gen_bool(0.5) {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect(),
                FrequencyInit::Normal => {
                    let dist = Normal::new(0.0, PI).expect("positive standard deviation");
                    (0..count).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            Some(FourierEmbedding {
                spec,
                input_dim,
                freqs,
            })
        }
        None => None,
    };
    let mut fan_in = embedding
        .as_ref()
        .map_or(input_dim, FourierEmbedding::output_dim);
    let mut params = Vec::with_capacity(2 * (layer_sizes.len() - 1));
    for &fan_out in &layer_sizes[1..] {
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive standard deviation");
        let w = (0..fan_in * fan_out)
            .map(|_| dist.sample(&mut rng))
            .collect();
        params.push(Tensor::matrix(fan_in, fan_out, w)?);
        params.push(Tensor::matrix(1, fan_out, vec![0.0; fan_out])?);
        fan_in = fan_out;
    }
    Ok(MlpModel {
        layer_sizes: layer_sizes.to_vec(),
        activation,
        embedding,
        params,
    })
}

/// Output values plus, when taped, the parameter leaves and output node.
pub type BatchOutput = (Vec<f64>, Option<(Vec<Var>, Var)>);

/// Evaluates the model on the rows of `x`. With a tape, the graph is
/// recorded and the parameter leaves and output node are returned too.
pub fn mlp_forward_batch(
    model: &MlpModel,
    x: &Tensor,
    tape: Option<&mut Tape>,
) -> Result<BatchOutput, NeuralError> {
    let features = model.features(x)?;
    match tape {
        None => Ok((model.predict_features(&features), None)),
        Some(tape) => {
            let params = model.register(tape);
            let input = tape.constant(features);
            let out = model.forward_tape(tape, &params, input)?;
            Ok((tape.value(out).data().to_vec(), Some((params, out))))
        }
    }
}
