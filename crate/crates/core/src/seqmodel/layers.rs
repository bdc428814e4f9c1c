//! Layer forward passes expressed as tape operations.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of a single LSTM layer.
///
/// Input matrices are `[hidden, input]`, recurrent matrices
/// `[hidden, hidden]`, biases `[hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_ii: Tensor,
    pub w_if: Tensor,
    pub w_ig: Tensor,
    pub w_io: Tensor,
    pub w_hi: Tensor,
    pub w_hf: Tensor,
    pub w_hg: Tensor,
    pub w_ho: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_g: Tensor,
    pub b_o: Tensor,
}

/// [`LstmParams`] registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_ii: Var,
    pub w_if: Var,
    pub w_ig: Var,
    pub w_io: Var,
    pub w_hi: Var,
    pub w_hf: Var,
    pub w_hg: Var,
    pub w_ho: Var,
    pub b_i: Var,
    pub b_f: Var,
    pub b_g: Var,
    pub b_o: Var,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wi = || Tensor::zeros(&[hidden, input]);
        let wh = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_ii: wi(),
            w_if: wi(),
            w_ig: wi(),
            w_io: wi(),
            w_hi: wh(),
            w_hf: wh(),
            w_hg: wh(),
            w_ho: wh(),
            b_i: b(),
            b_f: b(),
            b_g: b(),
            b_o: b(),
        }
    }

    /// Blocks in storage order.
    pub fn blocks(&self) -> [&Tensor; 12] {
        [
            &self.w_ii, &self.w_if, &self.w_ig, &self.w_io, &self.w_hi, &self.w_hf, &self.w_hg,
            &self.w_ho, &self.b_i, &self.b_f, &self.b_g, &self.b_o,
        ]
    }

    pub fn from_blocks(blocks: [Tensor; 12]) -> Self {
        let [w_ii, w_if, w_ig, w_io, w_hi, w_hf, w_hg, w_ho, b_i, b_f, b_g, b_o] = blocks;
        Self {
            w_ii,
            w_if,
            w_ig,
            w_io,
            w_hi,
            w_hf,
            w_hg,
            w_ho,
            b_i,
            b_f,
            b_g,
            b_o,
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_i.len()
    }

    /// Puts every block on the tape, as parameters or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> LstmVars {
        let vars: Vec<Var> = self
            .blocks()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        LstmVars::from_slice(&vars)
    }
}

impl LstmVars {
    /// `vars` must hold the twelve blocks in storage order.
    pub fn from_slice(vars: &[Var]) -> Self {
        let v = |i: usize| vars[i];
        Self {
            w_ii: v(0),
            w_if: v(1),
            w_ig: v(2),
            w_io: v(3),
            w_hi: v(4),
            w_hf: v(5),
            w_hg: v(6),
            w_ho: v(7),
            b_i: v(8),
            b_f: v(9),
            b_g: v(10),
            b_o: v(11),
        }
    }
}

/// Dense layer weights on a tape: `weight` is `[out, in]`, `bias` `[out]`.
#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

/// `x · Wᵀ + b`.
pub fn dense(tape: &mut Tape, x: Var, layer: &DenseVars) -> Result<Var> {
    let z = tape.matmul_nt(x, layer.weight)?;
    tape.add_row(z, layer.bias)
}

fn gate(tape: &mut Tape, x: Var, h: Var, w_in: Var, w_rec: Var, bias: Var) -> Result<Var> {
    let a = tape.matmul_nt(x, w_in)?;
    let b = tape.matmul_nt(h, w_rec)?;
    let s = tape.add(a, b)?;
    tape.add_row(s, bias)
}

/// One LSTM step over a batch. `x_t` is `[B, input]`, `h` and `c` are
/// `[B, hidden]`.
///
/// ```text
/// i = σ(W_ii x + W_hi h + b_i)    f = σ(W_if x + W_hf h + b_f)
/// g = tanh(W_ig x + W_hg h + b_g) o = σ(W_io x + W_ho h + b_o)
/// c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(tape: &mut Tape, x_t: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let pre_i = gate(tape, x_t, h, p.w_ii, p.w_hi, p.b_i)?;
    let pre_f = gate(tape, x_t, h, p.w_if, p.w_hf, p.b_f)?;
    let pre_g = gate(tape, x_t, h, p.w_ig, p.w_hg, p.b_g)?;
    let pre_o = gate(tape, x_t, h, p.w_io, p.w_ho, p.b_o)?;
    let i = tape.sigmoid(pre_i);
    let f = tape.sigmoid(pre_f);
    let g = tape.tanh(pre_g);
    let o = tape.sigmoid(pre_o);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Hidden states of every step plus the final `(h, c)`.
#[derive(Clone, Debug)]
pub struct LstmOutput {
    pub hidden: Vec<Var>,
    pub h: Var,
    pub c: Var,
}

/// Splits `[B, T, C]` into `T` step inputs of shape `[B, C]`.
pub fn unstack_time(tape: &mut Tape, seq: Var) -> Result<Vec<Var>> {
    let steps = match tape.value(seq).shape() {
        &[_, t, _] => t,
        other => {
            return Err(Error::InvalidShape {
                shape: other.to_vec(),
                reason: "expected [B, T, C]".into(),
            })
        }
    };
    (0..steps).map(|t| tape.time_step(seq, t)).collect()
}

/// Runs [`lstm_step`] over `inputs` starting from `(h0, c0)`.
pub fn run_lstm(
    tape: &mut Tape,
    inputs: &[Var],
    p: &LstmVars,
    h0: Var,
    c0: Var,
) -> Result<LstmOutput> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (mut h, mut c) = (h0, c0);
    let mut hidden = Vec::with_capacity(inputs.len());
    for &x in inputs {
        (h, c) = lstm_step(tape, x, h, c, p)?;
        hidden.push(h);
    }
    Ok(LstmOutput { hidden, h, c })
}

/// Scaled dot-product weights of each hidden state against `query`,
/// returned as a `[B, T]` row-stochastic matrix.
pub fn attention_weights(tape: &mut Tape, hidden: &[Var], query: Var) -> Result<Var> {
    if hidden.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (_, h) = tape
        .value(query)
        .dims2()
        .ok_or_else(|| Error::InvalidShape {
            shape: tape.value(query).shape().to_vec(),
            reason: "attention query must be [B, H]".into(),
        })?;
    let inv_sqrt = 1.0 / (h as f64).sqrt();
    let mut scores = Vec::with_capacity(hidden.len());
    for &ht in hidden {
        let prod = tape.mul(ht, query)?;
        let dot = tape.row_sum(prod)?;
        scores.push(tape.scale(dot, inv_sqrt));
    }
    let stacked = tape.concat_cols(&scores)?;
    tape.softmax_rows(stacked)
}

/// Context vector `Σ_t w_t · h_t` and the weights that produced it.
pub fn attend(tape: &mut Tape, hidden: &[Var], query: Var) -> Result<(Var, Var)> {
    let weights = attention_weights(tape, hidden, query)?;
    let mut context = None;
    for (t, &ht) in hidden.iter().enumerate() {
        let w = tape.slice_cols(weights, t, 1)?;
        let term = tape.mul_col(ht, w)?;
        context = Some(match context {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((context.expect("non-empty"), weights))
}

/// Attention block: context against the query, then `concat(context,
/// query)` projected back to the hidden size.
pub fn attention(tape: &mut Tape, hidden: &[Var], query: Var, proj: &DenseVars) -> Result<Var> {
    let (context, _) = attend(tape, hidden, query)?;
    let joined = tape.concat_cols(&[context, query])?;
    dense(tape, joined, proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check_many;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn zero_step(c0: f64) -> (Tensor, Tensor) {
        let p = LstmParams::zeros(3, 2);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let x = tape.constant(Tensor::filled(&[1, 3], 0.7));
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let c = tape.constant(Tensor::filled(&[1, 2], c0));
        let (h1, c1) = lstm_step(&mut tape, x, h, c, &vars).unwrap();
        (tape.value(h1).clone(), tape.value(c1).clone())
    }

    #[test]
    fn zero_params_zero_state() {
        let (h, c) = zero_step(0.0);
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_halve_cell() {
        let (_, c) = zero_step(0.8);
        assert!(c.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn step_dimension_mismatch() {
        let p = LstmParams::zeros(3, 2);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[1, 4]));
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let c = tape.constant(Tensor::zeros(&[1, 2]));
        assert!(lstm_step(&mut tape, x, h, c, &vars).is_err());
    }

    #[test]
    fn run_lstm_empty() {
        let p = LstmParams::zeros(3, 2);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let err = run_lstm(&mut tape, &[], &vars, h, h).unwrap_err();
        assert!(err.to_string().contains("empty sequence"));
    }

    #[test]
    fn run_lstm_single_step_matches_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks: Vec<Tensor> = (0..12)
            .map(|i| {
                if i < 4 {
                    random(&mut rng, &[2, 3])
                } else if i < 8 {
                    random(&mut rng, &[2, 2])
                } else {
                    random(&mut rng, &[2])
                }
            })
            .collect();
        let p = LstmParams::from_blocks(blocks.try_into().unwrap());
        let x = random(&mut rng, &[1, 1, 3]);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let seq = tape.constant(x);
        let steps = unstack_time(&mut tape, seq).unwrap();
        let z = tape.constant(Tensor::zeros(&[1, 2]));
        let out = run_lstm(&mut tape, &steps, &vars, z, z).unwrap();
        let (h1, _) = lstm_step(&mut tape, steps[0], z, z, &vars).unwrap();
        assert_eq!(tape.value(out.h), tape.value(h1));
        assert_eq!(out.hidden.len(), 1);
    }

    #[test]
    fn constant_input_with_zero_params_stays_zero() {
        let p = LstmParams::zeros(2, 3);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let seq = tape.constant(Tensor::filled(&[1, 5, 2], 1.5));
        let steps = unstack_time(&mut tape, seq).unwrap();
        let z = tape.constant(Tensor::zeros(&[1, 3]));
        let out = run_lstm(&mut tape, &steps, &vars, z, z).unwrap();
        for h in out.hidden {
            assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_state_attention_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h1 = random(&mut rng, &[2, 4]);
        let q = random(&mut rng, &[2, 4]);
        let mut tape = Tape::new();
        let hv = tape.constant(h1.clone());
        let qv = tape.constant(q);
        let (ctx, w) = attend(&mut tape, &[hv], qv).unwrap();
        assert_eq!(tape.value(w).data(), &[1.0, 1.0]);
        assert_eq!(tape.value(ctx), &h1);
    }

    #[test]
    fn identical_states_give_that_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random(&mut rng, &[1, 4]);
        let q = random(&mut rng, &[1, 4]);
        let mut tape = Tape::new();
        let hs: Vec<Var> = (0..6).map(|_| tape.constant(h.clone())).collect();
        let qv = tape.constant(q);
        let (ctx, _) = attend(&mut tape, &hs, qv).unwrap();
        assert!(tape.value(ctx).max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn lstm_step_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (input, hidden, batch) = (3, 4, 2);
        let mut inputs: Vec<Tensor> = (0..12)
            .map(|i| match i {
                0..=3 => random(&mut rng, &[hidden, input]),
                4..=7 => random(&mut rng, &[hidden, hidden]),
                _ => random(&mut rng, &[hidden]),
            })
            .collect();
        inputs.push(random(&mut rng, &[batch, input]));
        inputs.push(random(&mut rng, &[batch, hidden]));
        inputs.push(random(&mut rng, &[batch, hidden]));
        let weights = random(&mut rng, &[batch, hidden]);
        let err = gradient_check_many(
            |tape: &mut Tape, v: &[Var]| {
                let p = LstmVars::from_slice(&v[..12]);
                let (h, _) = lstm_step(tape, v[12], v[13], v[14], &p)?;
                let w = tape.constant(weights.clone());
                let wh = tape.mul(h, w)?;
                Ok(tape.sum(wh))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
