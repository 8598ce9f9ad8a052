//! LSTM cells and sequence runners built from tape operations.
//!
//! Weights follow the fused layout: one input matrix `wx` of shape
//! `(4·hidden, input)`, one recurrent matrix `wh` of shape `(4·hidden,
//! hidden)`, and one bias of length `4·hidden`, with gate order input,
//! forget, cell, output. The forget-gate bias initializes to 1.0 so memory
//! cells start out retentive.

use rand_core::RngCore;

use super::tape::{Tape, Var};
use super::tensor::TensorData;
use super::{NumError, Scalar};

/// Host-side LSTM weights, before they are registered on a tape.
#[derive(Debug, Clone)]
pub struct LstmParams<S: Scalar> {
    pub wx: TensorData<S>,
    pub wh: TensorData<S>,
    pub b: TensorData<S>,
}

impl<S: Scalar> LstmParams<S> {
    /// Uniform(-scale, scale) weights with the forget-gate bias set to 1.0.
    pub fn init<R: RngCore + ?Sized>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let wx = TensorData::uniform(vec![4 * hidden, input], -scale, scale, rng);
        let wh = TensorData::uniform(vec![4 * hidden, hidden], -scale, scale, rng);
        let mut b = TensorData::zeros(vec![4 * hidden]);
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = S::ONE;
        }
        LstmParams { wx, wh, b }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    /// Precision conversion (f32 training ↔ f64 verification).
    pub fn cast<T: Scalar>(&self) -> LstmParams<T> {
        LstmParams {
            wx: self.wx.cast(),
            wh: self.wh.cast(),
            b: self.b.cast(),
        }
    }
}

/// Tape handles for one LSTM's weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

/// One step of the cell: `(h, c) = step(x, h_prev, c_prev)`.
pub fn lstm_cell_step<S: Scalar>(
    tape: &mut Tape<S>,
    vars: LstmVars,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var), NumError> {
    let hidden = tape.value(vars.b).len() / 4;
    let from_x = tape.matmul(vars.wx, x)?;
    let from_h = tape.matmul(vars.wh, h_prev)?;
    let sum = tape.add(from_x, from_h)?;
    let pre = tape.add(sum, vars.b)?;

    let i_pre = tape.slice(pre, 0, hidden)?;
    let f_pre = tape.slice(pre, hidden, hidden)?;
    let g_pre = tape.slice(pre, 2 * hidden, hidden)?;
    let o_pre = tape.slice(pre, 3 * hidden, hidden)?;

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(o, c_act)?;
    Ok((h, c))
}

/// Outputs of a unidirectional pass; `outputs[t]` always lines up with
/// `inputs[t]` even for a reversed pass.
pub struct LstmRunOut {
    pub outputs: Vec<Var>,
    pub final_h: Var,
    pub final_c: Var,
}

/// Runs a cell over a sequence from a zero initial state.
pub fn lstm_run<S: Scalar>(
    tape: &mut Tape<S>,
    vars: LstmVars,
    inputs: &[Var],
    reverse: bool,
) -> Result<LstmRunOut, NumError> {
    if inputs.is_empty() {
        return Err(NumError::EmptySequence { op: "lstm_run" });
    }
    let hidden = tape.value(vars.b).len() / 4;
    let mut h = tape.constant(TensorData::zeros(vec![hidden]));
    let mut c = tape.constant(TensorData::zeros(vec![hidden]));
    let mut outputs = vec![h; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        let (nh, nc) = lstm_cell_step(tape, vars, inputs[t], h, c)?;
        h = nh;
        c = nc;
        outputs[t] = h;
    }
    Ok(LstmRunOut {
        outputs,
        final_h: h,
        final_c: c,
    })
}

/// Outputs of a bidirectional pass: per-position `[fwd ⊕ bwd]` vectors plus
/// the concatenated final hidden states of both directions.
pub struct BiLstmOut {
    pub outputs: Vec<Var>,
    pub final_h: Var,
}

/// Runs forward and backward cells over the sequence and concatenates them.
pub fn bilstm_run<S: Scalar>(
    tape: &mut Tape<S>,
    fwd: LstmVars,
    bwd: LstmVars,
    inputs: &[Var],
) -> Result<BiLstmOut, NumError> {
    let f = lstm_run(tape, fwd, inputs, false)?;
    let b = lstm_run(tape, bwd, inputs, true)?;
    let mut outputs = Vec::with_capacity(inputs.len());
    for (hf, hb) in f.outputs.iter().zip(&b.outputs) {
        outputs.push(tape.concat(&[*hf, *hb])?);
    }
    let final_h = tape.concat(&[f.final_h, b.final_h])?;
    Ok(BiLstmOut { outputs, final_h })
}
