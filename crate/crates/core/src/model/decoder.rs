//! Decoder: one attention-fed LSTM step per output token, emitting a mixture
//! distribution over the base vocabulary extended with the example's copyable
//! tokens.
//!
//! Each step attends over both encoder memories, combines the two contexts
//! with the hidden state into an output state, and blends three
//! distributions:
//!
//! * generation: softmax over the base vocabulary;
//! * prototype copy: the assertion-side attention weights, scattered onto
//!   the positions' tokens;
//! * edit copy: the edit-side attention logits, re-normalized over positions
//!   whose query side is a real token, scattered onto those tokens.
//!
//! Two learned sigmoid gates mix them: `γ` chooses generation vs. copying,
//! `θ` chooses which source to copy from. When the edit script offers no
//! copyable token, the edit-copy distribution would be degenerate, so `θ` is
//! pinned to 1 and the mixture stays a proper distribution.

use crate::num::{lstm_cell_step, Scalar, Tape, TensorData, Var};

use super::encoder::{DropoutCfg, EncoderOut};
use super::input::ModelInput;
use super::params::ParamVars;
use super::ModelError;

/// Recurrent decoder state: hidden and cell vectors plus the previous output
/// state that gets fed back into the next step's input.
#[derive(Debug, Clone, Copy)]
pub struct DecState {
    pub h: Var,
    pub c: Var,
    pub o_prev: Var,
}

/// Pins one or both mixture gates to constants; used by diagnostics and by
/// tests that need to isolate a single mixture component.
#[derive(Debug, Clone, Copy, Default)]
pub struct GateOverride {
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
}

/// Everything one decode step produces.
pub struct StepOut {
    pub state: DecState,
    /// Mixture over the extended vocabulary (`vocab + ext` slots).
    pub mixture: Var,
    /// Generation-vs-copy gate (1 element).
    pub gamma: Var,
    /// Prototype-vs-edit copy gate (1 element).
    pub theta: Var,
    pub p_vocab: Var,
    pub p_ass: Var,
    pub p_ft: Var,
    /// Attention over prototype assertion positions.
    pub attn_ass: Var,
    /// Attention over edit positions (unmasked; the context view).
    pub attn_edit: Var,
}

/// Projects the encoder's final-state summary into the decoder's first
/// recurrent state; the previous-output feed starts at zero.
pub fn init_state<S: Scalar>(
    tape: &mut Tape<S>,
    pv: &ParamVars,
    enc: &EncoderOut,
) -> Result<DecState, ModelError> {
    let h = tape.matmul(pv.init_h_w, enc.init_concat)?;
    let c = tape.matmul(pv.init_c_w, enc.init_concat)?;
    let o_prev = tape.constant(TensorData::zeros(vec![pv.dims.dec_hidden]));
    Ok(DecState { h, c, o_prev })
}

/// Runs one decoder step conditioned on the previous token id (base
/// vocabulary; copied out-of-vocabulary emissions feed back as UNK).
pub fn decode_step<S: Scalar>(
    tape: &mut Tape<S>,
    pv: &ParamVars,
    input: &ModelInput,
    enc: &EncoderOut,
    state: &DecState,
    prev_id: usize,
    mut dropout: DropoutCfg<'_>,
    gates: Option<GateOverride>,
) -> Result<StepOut, ModelError> {
    let total = pv.dims.vocab + input.ext.len();

    // Recurrence.
    let prev_embed = tape.embed_row(pv.token_embed, prev_id)?;
    let x = tape.concat(&[prev_embed, state.o_prev])?;
    let (h, c) = lstm_cell_step(tape, pv.dec_lstm, x, state.h, state.c)?;

    // Dropout applies to the state's consumers, never the recurrent path.
    let mut s = h;
    if let Some((rate, rng)) = &mut dropout {
        if *rate > 0.0 {
            s = tape.dropout(s, *rate, &mut **rng)?;
        }
    }

    // Attention over the prototype assertion.
    let proj_ass = tape.matmul(pv.dec_attn_ass, s)?;
    let ass_logits = tape.matmul(enc.z_ass, proj_ass)?;
    let attn_ass = tape.softmax_masked(ass_logits, None)?;
    let ctx_ass = tape.matmul_t(enc.z_ass, attn_ass)?;

    // Attention over the edit script.
    let proj_edit = tape.matmul(pv.dec_attn_edit, s)?;
    let edit_logits = tape.matmul(enc.z_edit, proj_edit)?;
    let attn_edit = tape.softmax_masked(edit_logits, None)?;
    let ctx_edit = tape.matmul_t(enc.z_edit, attn_edit)?;

    // Output state and generation distribution.
    let combined = tape.concat(&[ctx_ass, ctx_edit, s])?;
    let pre_o = tape.matmul(pv.combine_w, combined)?;
    let pre_o = tape.add(pre_o, pv.combine_b)?;
    let o = tape.tanh(pre_o);
    let vocab_logits = tape.matmul(pv.out_w, o)?;
    let vocab_logits = tape.add(vocab_logits, pv.out_b)?;
    let p_vocab = tape.softmax_masked(vocab_logits, None)?;

    // Copy distributions, scattered onto the extended vocabulary.
    let ass_slots: Vec<Option<usize>> = input.ass_ext_ids.iter().map(|&i| Some(i)).collect();
    let p_ass = tape.scatter_add(attn_ass, &ass_slots, total)?;

    let gamma = match gates.and_then(|g| g.gamma) {
        Some(v) => tape.scalar_const(v),
        None => {
            let z = tape.matmul(pv.gate_gamma_w, combined)?;
            let z = tape.add(z, pv.gate_gamma_b)?;
            tape.sigmoid(z)
        }
    };
    // A script with no copyable query token pins θ to 1 (overrides included):
    // the edit-copy distribution has no support to normalize over.
    let (theta, p_ft) = if !input.has_copyable_slot() {
        let theta = tape.scalar_const(1.0);
        let p_ft = tape.constant(TensorData::zeros(vec![total]));
        (theta, p_ft)
    } else {
        let theta = match gates.and_then(|g| g.theta) {
            Some(v) => tape.scalar_const(v),
            None => {
                let z = tape.matmul(pv.gate_theta_w, combined)?;
                let z = tape.add(z, pv.gate_theta_b)?;
                tape.sigmoid(z)
            }
        };
        let ft_weights = tape.softmax_masked(edit_logits, Some(&input.copy_mask))?;
        let p_ft = tape.scatter_add(ft_weights, &input.copy_slot_ext_ids, total)?;
        (theta, p_ft)
    };

    // Mixture: γ·P_vocab + (1-γ)·(θ·P_ass + (1-θ)·P_ft).
    let p_vocab_full = tape.pad_zeros(p_vocab, input.ext.len())?;
    let gen_part = tape.mul_scalar(p_vocab_full, gamma)?;
    let one_minus_theta = tape.affine(theta, -1.0, 1.0);
    let ass_part = tape.mul_scalar(p_ass, theta)?;
    let ft_part = tape.mul_scalar(p_ft, one_minus_theta)?;
    let copy_mix = tape.add(ass_part, ft_part)?;
    let one_minus_gamma = tape.affine(gamma, -1.0, 1.0);
    let copy_part = tape.mul_scalar(copy_mix, one_minus_gamma)?;
    let mixture = tape.add(gen_part, copy_part)?;

    Ok(StepOut {
        state: DecState { h, c, o_prev: o },
        mixture,
        gamma,
        theta,
        p_vocab,
        p_ass,
        p_ft,
        attn_ass,
        attn_edit,
    })
}
