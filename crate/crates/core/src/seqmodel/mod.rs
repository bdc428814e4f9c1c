//! Layers and the two sequence models: the LSTM (optionally attention)
//! classifier over the first 5 cycles and the Conv1D + LSTM cycle-life
//! regressor over the first 100.

mod layers;
mod model;
mod spec;

pub use layers::{
    attend, attention, attention_weights, dense, lstm_step, run_lstm, unstack_time, DenseVars,
    LstmOutput, LstmParams, LstmVars,
};
pub use model::*;
pub use spec::{Init, InputShape, Layer, ModelSpec, ParamShape, FORGET_BIAS, LSTM_BLOCKS};
