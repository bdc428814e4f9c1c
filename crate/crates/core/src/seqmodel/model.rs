use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{attention, dense, run_lstm, unstack_time, DenseVars, LstmVars};
use super::spec::{Init, InputShape, Layer, ModelSpec};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Negative-side slope of every LeakyReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Post-processing of the network's scalar output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `factor · y`
    Scale {
        factor: f64,
    },
    /// `factor · exp(y)`
    ExpScale {
        factor: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

/// A layer stack and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub seed: u64,
    pub output: OutputTransform,
    pub params: Vec<NamedTensor>,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shapes
            .into_iter()
            .map(|p| {
                let n = p.shape.iter().product();
                let data = match p.init {
                    Init::Uniform { fan_in } => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        let dist = Uniform::new_inclusive(-bound, bound);
                        (0..n).map(|_| dist.sample(&mut rng)).collect()
                    }
                    Init::Constant(c) => vec![c; n],
                };
                NamedTensor {
                    name: p.name,
                    tensor: Tensor::from_parts(p.shape, data),
                }
            })
            .collect();
        Ok(Self {
            spec,
            seed,
            output: OutputTransform::Identity,
            params,
        })
    }

    /// Checks that stored parameters agree with the spec.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.spec.param_shapes()?;
        if shapes.len() != self.params.len() {
            return Err(Error::InvalidSpec(format!(
                "spec expects {} parameter tensors, model has {}",
                shapes.len(),
                self.params.len()
            )));
        }
        for (want, have) in shapes.iter().zip(&self.params) {
            if want.name != have.name || want.shape != have.tensor.shape() {
                return Err(Error::InvalidSpec(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    have.name,
                    have.tensor.shape(),
                    want.name,
                    want.shape
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn input_shape(&self) -> InputShape {
        self.spec.input
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|p| &p.tensor)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|p| &mut p.tensor)
    }

    /// Puts every parameter on the tape, in storage order.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.tensor.clone())
                } else {
                    tape.constant(p.tensor.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass of a `[B, T, F]` batch on `tape` and
    /// returns the `[B]` predictions. `params` comes from [`Model::register`].
    pub fn graph<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        input: Var,
        params: &[Var],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let InputShape { seq_len, features } = self.spec.input;
        let batch = match *tape.value(input).shape() {
            [b, t, f] if t == seq_len && f == features => b,
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "model input",
                    lhs: tape.value(input).shape().to_vec(),
                    rhs: vec![0, seq_len, features],
                })
            }
        };

        let mut cursor = params.iter().copied();
        let mut next = || cursor.next().expect("parameter list matches spec");
        let mut x = input;
        let mut sequence: Option<Vec<Var>> = None;

        for layer in &self.spec.layers {
            match *layer {
                Layer::Conv1d { stride, .. } => {
                    let (k, b) = (next(), next());
                    x = tape.conv1d(x, k, b, stride)?;
                }
                Layer::Lstm { hidden } => {
                    let vars: Vec<Var> = (0..12).map(|_| next()).collect();
                    let lstm = LstmVars::from_slice(&vars);
                    let steps = unstack_time(tape, x)?;
                    let h0 = tape.constant(Tensor::zeros(&[batch, hidden]));
                    let c0 = tape.constant(Tensor::zeros(&[batch, hidden]));
                    let out = run_lstm(tape, &steps, &lstm, h0, c0)?;
                    x = out.h;
                    sequence = Some(out.hidden);
                }
                Layer::Attention { .. } => {
                    let proj = DenseVars {
                        weight: next(),
                        bias: next(),
                    };
                    let hidden = sequence.as_deref().expect("attention follows the LSTM");
                    x = attention(tape, hidden, x, &proj)?;
                }
                Layer::Dense { .. } => {
                    let layer = DenseVars {
                        weight: next(),
                        bias: next(),
                    };
                    x = dense(tape, x, &layer)?;
                }
                Layer::Dropout { p } => x = tape.dropout(x, p, training, rng)?,
                Layer::LeakyRelu => x = tape.leaky_relu(x, LEAKY_SLOPE),
                Layer::Sigmoid => x = tape.sigmoid(x),
            }
        }

        let flat = tape.reshape(x, &[batch])?;
        Ok(match self.output {
            OutputTransform::Identity => flat,
            OutputTransform::Scale { factor } => tape.scale(flat, factor),
            OutputTransform::ExpScale { factor } => {
                let e = tape.exp(flat);
                tape.scale(e, factor)
            }
        })
    }

    /// Per-example predictions for a `[B, T, F]` batch.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let input = tape.constant(batch.clone());
        let out = self.graph(&mut tape, input, &params, training, rng)?;
        Ok(tape.value(out).clone())
    }

    /// Inference-mode predictions (dropout off).
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<f64>> {
        // Inference never draws from the RNG.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(batch, false, &mut rng)?.into_data())
    }
}

/// Hidden size of the classifier's LSTM (and attention).
pub const CLASSIFIER_HIDDEN: usize = 16;
pub const CLASSIFIER_DENSE: usize = 16;
pub const CLASSIFIER_DROPOUT: f64 = 0.3;
pub const CLASSIFIER_CYCLES: usize = 5;

pub const PREDICTOR_FILTERS: usize = 15;
pub const PREDICTOR_KERNEL: usize = 4;
pub const PREDICTOR_STRIDE: usize = 4;
pub const PREDICTOR_HIDDEN: usize = 32;
pub const PREDICTOR_DENSE: usize = 64;
pub const PREDICTOR_DROPOUT: f64 = 0.2;
pub const PREDICTOR_CYCLES: usize = 100;

/// LSTM(16) → [Attention(16)] → Dense(16) → LeakyReLU → Dropout(0.3) →
/// Dense(16) → LeakyReLU → Dropout(0.3) → Dense(1) → Sigmoid over 5 cycles.
pub fn classifier_spec(features: usize, with_attention: bool) -> ModelSpec {
    let mut layers = vec![Layer::Lstm {
        hidden: CLASSIFIER_HIDDEN,
    }];
    if with_attention {
        layers.push(Layer::Attention {
            hidden: CLASSIFIER_HIDDEN,
        });
    }
    for _ in 0..2 {
        layers.extend([
            Layer::Dense {
                out: CLASSIFIER_DENSE,
            },
            Layer::LeakyRelu,
            Layer::Dropout {
                p: CLASSIFIER_DROPOUT,
            },
        ]);
    }
    layers.extend([Layer::Dense { out: 1 }, Layer::Sigmoid]);
    ModelSpec {
        input: InputShape {
            seq_len: CLASSIFIER_CYCLES,
            features,
        },
        layers,
    }
}

/// Conv1D(15, K=4, stride 4) → LSTM(32) → Dense(64) → LeakyReLU →
/// Dropout(0.2) → Dense(64) → LeakyReLU → Dropout(0.2) → Dense(1) over
/// 100 cycles, with no output activation.
pub fn predictor_spec(features: usize) -> ModelSpec {
    let mut layers = vec![
        Layer::Conv1d {
            filters: PREDICTOR_FILTERS,
            kernel: PREDICTOR_KERNEL,
            stride: PREDICTOR_STRIDE,
        },
        Layer::Lstm {
            hidden: PREDICTOR_HIDDEN,
        },
    ];
    for _ in 0..2 {
        layers.extend([
            Layer::Dense {
                out: PREDICTOR_DENSE,
            },
            Layer::LeakyRelu,
            Layer::Dropout {
                p: PREDICTOR_DROPOUT,
            },
        ]);
    }
    layers.push(Layer::Dense { out: 1 });
    ModelSpec {
        input: InputShape {
            seq_len: PREDICTOR_CYCLES,
            features,
        },
        layers,
    }
}

pub fn build_classifier(features: usize, with_attention: bool, seed: u64) -> Result<Model> {
    Model::init(classifier_spec(features, with_attention), seed)
}

pub fn build_predictor(features: usize, seed: u64) -> Result<Model> {
    Model::init(predictor_spec(features), seed)
}
