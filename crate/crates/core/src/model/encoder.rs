//! Encoder: turns the prototype assertion and the edit script into two
//! attention-ready memories plus an initial state summary for the decoder.
//!
//! Pipeline per example:
//!
//! 1. Embed assertion tokens; embed each edit as retrieved ⊕ query ⊕ action.
//! 2. Run one bidirectional layer over each stream for contextual states.
//! 3. Cross-attend each stream over the other with a single shared bilinear
//!    map (transposed for the reverse direction), and append the attended
//!    summary to each contextual state.
//! 4. Run a second bidirectional layer per stream over those fused vectors;
//!    its per-position outputs are the decoder's attention memories and its
//!    final states seed the decoder.

use rand_chacha::ChaCha8Rng;

use crate::num::{bilstm_run, NumError, Scalar, Tape, Var};

use super::input::ModelInput;
use super::params::ParamVars;
use super::ModelError;

/// Attention memories and decoder seed produced by [`encode`].
pub struct EncoderOut {
    /// Prototype-assertion memory, one row per token (`T_a × attn`).
    pub z_ass: Var,
    /// Edit-script memory, one row per edit (`T_e × attn`).
    pub z_edit: Var,
    /// Concatenated final states of both second-layer passes (`2 · attn`).
    pub init_concat: Var,
}

/// Dropout switch: `None` at inference, rate and stream during training.
pub type DropoutCfg<'a> = Option<(f64, &'a mut ChaCha8Rng)>;

fn apply_dropout<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &mut [Var],
    dropout: &mut DropoutCfg<'_>,
) -> Result<(), NumError> {
    if let Some((rate, rng)) = dropout {
        if *rate > 0.0 {
            for v in vars {
                *v = tape.dropout(*v, *rate, &mut **rng)?;
            }
        }
    }
    Ok(())
}

/// Runs the full encoder over one example.
pub fn encode<S: Scalar>(
    tape: &mut Tape<S>,
    pv: &ParamVars,
    input: &ModelInput,
    mut dropout: DropoutCfg<'_>,
) -> Result<EncoderOut, ModelError> {
    // 1. Embeddings.
    let mut ass_embeds = Vec::with_capacity(input.ass_ids.len());
    for &id in &input.ass_ids {
        ass_embeds.push(tape.embed_row(pv.token_embed, id)?);
    }
    let mut edit_embeds = Vec::with_capacity(input.edit_r_ids.len());
    for ((&r, &q), &a) in input
        .edit_r_ids
        .iter()
        .zip(&input.edit_q_ids)
        .zip(&input.edit_action_ids)
    {
        let er = tape.embed_row(pv.token_embed, r)?;
        let eq = tape.embed_row(pv.token_embed, q)?;
        let ea = tape.embed_row(pv.action_embed, a)?;
        edit_embeds.push(tape.concat(&[er, eq, ea])?);
    }

    // 2. Contextual layer per stream.
    let ass_ctx = bilstm_run(tape, pv.enc_ass_fwd, pv.enc_ass_bwd, &ass_embeds)?;
    let edit_ctx = bilstm_run(tape, pv.enc_edit_fwd, pv.enc_edit_bwd, &edit_embeds)?;
    let mut h_ass = ass_ctx.outputs;
    let mut h_edit = edit_ctx.outputs;
    apply_dropout(tape, &mut h_ass, &mut dropout)?;
    apply_dropout(tape, &mut h_edit, &mut dropout)?;

    let mat_ass = tape.stack(&h_ass)?;
    let mat_edit = tape.stack(&h_edit)?;

    // 3. Cross-attention, shared bilinear map in both directions.
    let mut fused_ass = Vec::with_capacity(h_ass.len());
    for &h in &h_ass {
        let proj = tape.matmul(pv.attn_co, h)?;
        let logits = tape.matmul(mat_edit, proj)?;
        let weights = tape.softmax_masked(logits, None)?;
        let attended = tape.matmul_t(mat_edit, weights)?;
        fused_ass.push(tape.concat(&[attended, h])?);
    }
    let mut fused_edit = Vec::with_capacity(h_edit.len());
    for &h in &h_edit {
        let proj = tape.matmul_t(pv.attn_co, h)?;
        let logits = tape.matmul(mat_ass, proj)?;
        let weights = tape.softmax_masked(logits, None)?;
        let attended = tape.matmul_t(mat_ass, weights)?;
        fused_edit.push(tape.concat(&[attended, h])?);
    }

    // 4. Modeling layer per stream.
    let ass_mod = bilstm_run(tape, pv.mod_ass_fwd, pv.mod_ass_bwd, &fused_ass)?;
    let edit_mod = bilstm_run(tape, pv.mod_edit_fwd, pv.mod_edit_bwd, &fused_edit)?;
    let mut z_ass_rows = ass_mod.outputs;
    let mut z_edit_rows = edit_mod.outputs;
    apply_dropout(tape, &mut z_ass_rows, &mut dropout)?;
    apply_dropout(tape, &mut z_edit_rows, &mut dropout)?;

    let z_ass = tape.stack(&z_ass_rows)?;
    let z_edit = tape.stack(&z_edit_rows)?;
    let init_concat = tape.concat(&[ass_mod.final_h, edit_mod.final_h])?;
    Ok(EncoderOut {
        z_ass,
        z_edit,
        init_concat,
    })
}
