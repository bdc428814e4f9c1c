use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of a declarative layer stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum Layer {
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Lstm {
        hidden: usize,
    },
    Attention {
        hidden: usize,
    },
    Dense {
        out: usize,
    },
    Dropout {
        p: f64,
    },
    LeakyRelu,
    Sigmoid,
}

/// `(sequence length, features per step)` of one example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub seq_len: usize,
    pub features: usize,
}

/// Layer stack plus the input it consumes.
///
/// Topology: an optional `Conv1d`, exactly one `Lstm`, an optional
/// `Attention` directly after it, then a head of dense layers, dropout and
/// activations ending in a single output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: InputShape,
    pub layers: Vec<Layer>,
}

/// How a parameter tensor is initialised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    Uniform {
        fan_in: usize,
    },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Names of the twelve LSTM blocks, in storage order.
pub const LSTM_BLOCKS: [&str; 12] = [
    "w_ii", "w_if", "w_ig", "w_io", "w_hi", "w_hf", "w_hg", "w_ho", "b_i", "b_f", "b_g", "b_o",
];

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

impl ModelSpec {
    /// Checks the topology and returns every parameter's shape in order.
    pub fn param_shapes(&self) -> Result<Vec<ParamShape>> {
        let InputShape { seq_len, features } = self.input;
        if seq_len == 0 || features == 0 {
            return Err(invalid("input extents must be positive"));
        }
        let mut shapes = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, init: Init| {
            shapes.push(ParamShape { name, shape, init })
        };

        let mut len = seq_len;
        let mut width = features;
        let mut lstm_hidden = None;
        let mut dense_count = 0;
        let mut prev: Option<Layer> = None;

        for layer in &self.layers {
            match *layer {
                Layer::Conv1d {
                    filters,
                    kernel,
                    stride,
                } => {
                    if lstm_hidden.is_some() || prev.is_some() {
                        return Err(invalid("conv1d must be the first layer, before the LSTM"));
                    }
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(invalid(
                            "conv1d filters, kernel and stride must be positive",
                        ));
                    }
                    if len < kernel {
                        return Err(Error::SequenceShorterThanKernel { len, kernel });
                    }
                    push(
                        "conv.kernels".into(),
                        vec![filters, kernel, width],
                        Init::Uniform {
                            fan_in: kernel * width,
                        },
                    );
                    push("conv.bias".into(), vec![filters], Init::Constant(0.0));
                    len = (len - kernel) / stride + 1;
                    width = filters;
                }
                Layer::Lstm { hidden } => {
                    if lstm_hidden.is_some() {
                        return Err(invalid("only one LSTM layer is supported"));
                    }
                    if hidden == 0 {
                        return Err(invalid("LSTM hidden size must be positive"));
                    }
                    for (i, block) in LSTM_BLOCKS.iter().enumerate() {
                        let (shape, init) = match i {
                            0..=3 => (vec![hidden, width], Init::Uniform { fan_in: width }),
                            4..=7 => (vec![hidden, hidden], Init::Uniform { fan_in: hidden }),
                            9 => (vec![hidden], Init::Constant(FORGET_BIAS)),
                            _ => (vec![hidden], Init::Constant(0.0)),
                        };
                        push(format!("lstm.{block}"), shape, init);
                    }
                    lstm_hidden = Some(hidden);
                    width = hidden;
                }
                Layer::Attention { hidden } => {
                    if !matches!(prev, Some(Layer::Lstm { .. })) {
                        return Err(invalid("attention must directly follow the LSTM"));
                    }
                    if Some(hidden) != lstm_hidden {
                        return Err(invalid(format!(
                            "attention size {hidden} must equal LSTM hidden size {}",
                            lstm_hidden.unwrap_or(0)
                        )));
                    }
                    push(
                        "attn.proj.weight".into(),
                        vec![hidden, 2 * hidden],
                        Init::Uniform { fan_in: 2 * hidden },
                    );
                    push("attn.proj.bias".into(), vec![hidden], Init::Constant(0.0));
                }
                Layer::Dense { out } => {
                    if lstm_hidden.is_none() {
                        return Err(invalid("dense layers must come after the LSTM"));
                    }
                    if out == 0 {
                        return Err(invalid("dense output size must be positive"));
                    }
                    push(
                        format!("dense{dense_count}.weight"),
                        vec![out, width],
                        Init::Uniform { fan_in: width },
                    );
                    push(
                        format!("dense{dense_count}.bias"),
                        vec![out],
                        Init::Constant(0.0),
                    );
                    dense_count += 1;
                    width = out;
                }
                Layer::Dropout { p } => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::InvalidProbability(p));
                    }
                    if lstm_hidden.is_none() {
                        return Err(invalid("dropout must come after the LSTM"));
                    }
                }
                Layer::LeakyRelu | Layer::Sigmoid => {
                    if lstm_hidden.is_none() {
                        return Err(invalid("activations must come after the LSTM"));
                    }
                }
            }
            prev = Some(*layer);
        }
        if lstm_hidden.is_none() {
            return Err(invalid("an LSTM layer is required"));
        }
        if width != 1 {
            return Err(invalid(format!(
                "model must end in a single output, got width {width}"
            )));
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }

    /// Number of LSTM steps after the optional convolution.
    pub fn lstm_steps(&self) -> usize {
        match self.layers.first() {
            Some(Layer::Conv1d { kernel, stride, .. }) if self.input.seq_len >= *kernel => {
                (self.input.seq_len - kernel) / stride + 1
            }
            _ => self.input.seq_len,
        }
    }

    pub fn has_attention(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Attention { .. }))
    }

    pub fn ends_in_sigmoid(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Sigmoid))
    }
}
