//! Model dimensions and the full parameter set.
//!
//! Field declaration order is a contract: the optimizer's moment buffers and
//! the checkpoint layout both key off the order produced by [`ModelParams::named`].

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::num::{LstmParams, LstmVars, Scalar, Tape, TensorData, Var};

use super::vocab::SPECIALS;
use super::ModelError;

/// Weight matrices initialize uniformly in ±this; biases start at zero apart
/// from LSTM forget gates.
pub const INIT_SCALE: f64 = 0.1;

/// Number of edit actions (insert, delete, equal, replace).
const ACTIONS: usize = 4;

/// Size hyperparameters. The attention width is tied to the encoder: every
/// bidirectional layer contributes `2 · enc_hidden` per position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Base vocabulary size, reserved symbols included.
    pub vocab: usize,
    /// Token embedding width.
    pub embed: usize,
    /// Edit-action embedding width.
    pub action_embed: usize,
    /// Hidden size per direction of every bidirectional layer.
    pub enc_hidden: usize,
    /// Decoder hidden size.
    pub dec_hidden: usize,
}

impl ModelDims {
    /// Published defaults for everything except the data-dependent
    /// vocabulary size.
    pub fn defaults(vocab: usize) -> Self {
        ModelDims {
            vocab,
            embed: 300,
            action_embed: 16,
            enc_hidden: 256,
            dec_hidden: 512,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab < SPECIALS.len() {
            return Err(ModelError::Config {
                message: format!(
                    "vocab size {} is smaller than the {} reserved symbols",
                    self.vocab,
                    SPECIALS.len()
                ),
            });
        }
        for (name, v) in [
            ("embed", self.embed),
            ("action_embed", self.action_embed),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
        ] {
            if v == 0 {
                return Err(ModelError::Config {
                    message: format!("{name} must be positive"),
                });
            }
        }
        Ok(())
    }

    /// Per-position width of bidirectional outputs; also the attention width.
    pub fn attn(&self) -> usize {
        2 * self.enc_hidden
    }

    /// Edit-stream embedding width: retrieved ⊕ query ⊕ action.
    pub fn edit_input(&self) -> usize {
        2 * self.embed + self.action_embed
    }

    /// Input width of the post-attention layers: attended ⊕ contextual.
    pub fn mod_input(&self) -> usize {
        2 * self.attn()
    }

    /// Width of the concatenated final states that seed the decoder.
    pub fn init_concat(&self) -> usize {
        2 * self.attn()
    }

    /// Decoder LSTM input width: previous embedding ⊕ previous output state.
    pub fn dec_input(&self) -> usize {
        self.embed + self.dec_hidden
    }

    /// Width of [context ⊕ edit context ⊕ decoder state].
    pub fn combine_input(&self) -> usize {
        2 * self.attn() + self.dec_hidden
    }
}

/// Every trainable tensor in the model, in checkpoint order.
#[derive(Debug, Clone)]
pub struct ModelParams<S: Scalar> {
    pub dims: ModelDims,
    /// When set, the token embedding table is excluded from gradients and
    /// optimizer updates (pretrained embeddings).
    pub frozen_embed: bool,

    pub token_embed: TensorData<S>,
    pub action_embed: TensorData<S>,
    pub enc_ass_fwd: LstmParams<S>,
    pub enc_ass_bwd: LstmParams<S>,
    pub enc_edit_fwd: LstmParams<S>,
    pub enc_edit_bwd: LstmParams<S>,
    pub attn_co: TensorData<S>,
    pub mod_ass_fwd: LstmParams<S>,
    pub mod_ass_bwd: LstmParams<S>,
    pub mod_edit_fwd: LstmParams<S>,
    pub mod_edit_bwd: LstmParams<S>,
    pub init_h_w: TensorData<S>,
    pub init_c_w: TensorData<S>,
    pub dec_lstm: LstmParams<S>,
    pub dec_attn_ass: TensorData<S>,
    pub dec_attn_edit: TensorData<S>,
    pub combine_w: TensorData<S>,
    pub combine_b: TensorData<S>,
    pub out_w: TensorData<S>,
    pub out_b: TensorData<S>,
    pub gate_gamma_w: TensorData<S>,
    pub gate_gamma_b: TensorData<S>,
    pub gate_theta_w: TensorData<S>,
    pub gate_theta_b: TensorData<S>,
}

/// Expands to the full named-tensor listing; keeps the two accessor variants
/// textually identical.
macro_rules! param_list {
    ($self:ident, $($r:tt)*) => {
        vec![
            ("token_embed", $($r)* $self.token_embed),
            ("action_embed", $($r)* $self.action_embed),
            ("enc_ass_fwd.wx", $($r)* $self.enc_ass_fwd.wx),
            ("enc_ass_fwd.wh", $($r)* $self.enc_ass_fwd.wh),
            ("enc_ass_fwd.b", $($r)* $self.enc_ass_fwd.b),
            ("enc_ass_bwd.wx", $($r)* $self.enc_ass_bwd.wx),
            ("enc_ass_bwd.wh", $($r)* $self.enc_ass_bwd.wh),
            ("enc_ass_bwd.b", $($r)* $self.enc_ass_bwd.b),
            ("enc_edit_fwd.wx", $($r)* $self.enc_edit_fwd.wx),
            ("enc_edit_fwd.wh", $($r)* $self.enc_edit_fwd.wh),
            ("enc_edit_fwd.b", $($r)* $self.enc_edit_fwd.b),
            ("enc_edit_bwd.wx", $($r)* $self.enc_edit_bwd.wx),
            ("enc_edit_bwd.wh", $($r)* $self.enc_edit_bwd.wh),
            ("enc_edit_bwd.b", $($r)* $self.enc_edit_bwd.b),
            ("attn_co", $($r)* $self.attn_co),
            ("mod_ass_fwd.wx", $($r)* $self.mod_ass_fwd.wx),
            ("mod_ass_fwd.wh", $($r)* $self.mod_ass_fwd.wh),
            ("mod_ass_fwd.b", $($r)* $self.mod_ass_fwd.b),
            ("mod_ass_bwd.wx", $($r)* $self.mod_ass_bwd.wx),
            ("mod_ass_bwd.wh", $($r)* $self.mod_ass_bwd.wh),
            ("mod_ass_bwd.b", $($r)* $self.mod_ass_bwd.b),
            ("mod_edit_fwd.wx", $($r)* $self.mod_edit_fwd.wx),
            ("mod_edit_fwd.wh", $($r)* $self.mod_edit_fwd.wh),
            ("mod_edit_fwd.b", $($r)* $self.mod_edit_fwd.b),
            ("mod_edit_bwd.wx", $($r)* $self.mod_edit_bwd.wx),
            ("mod_edit_bwd.wh", $($r)* $self.mod_edit_bwd.wh),
            ("mod_edit_bwd.b", $($r)* $self.mod_edit_bwd.b),
            ("init_h_w", $($r)* $self.init_h_w),
            ("init_c_w", $($r)* $self.init_c_w),
            ("dec_lstm.wx", $($r)* $self.dec_lstm.wx),
            ("dec_lstm.wh", $($r)* $self.dec_lstm.wh),
            ("dec_lstm.b", $($r)* $self.dec_lstm.b),
            ("dec_attn_ass", $($r)* $self.dec_attn_ass),
            ("dec_attn_edit", $($r)* $self.dec_attn_edit),
            ("combine_w", $($r)* $self.combine_w),
            ("combine_b", $($r)* $self.combine_b),
            ("out_w", $($r)* $self.out_w),
            ("out_b", $($r)* $self.out_b),
            ("gate_gamma_w", $($r)* $self.gate_gamma_w),
            ("gate_gamma_b", $($r)* $self.gate_gamma_b),
            ("gate_theta_w", $($r)* $self.gate_theta_w),
            ("gate_theta_b", $($r)* $self.gate_theta_b),
        ]
    };
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh random parameters. The sampling order is the declaration order,
    /// so a fixed RNG seed fully determines every tensor.
    pub fn init(dims: ModelDims, frozen_embed: bool, rng: &mut impl RngCore) -> Result<Self, ModelError> {
        dims.validate()?;
        let s = INIT_SCALE;
        let u = |shape: Vec<usize>, rng: &mut dyn RngCore| TensorData::uniform(shape, -s, s, rng);
        let (v, e, a, eh, dh) = (
            dims.vocab,
            dims.embed,
            dims.action_embed,
            dims.enc_hidden,
            dims.dec_hidden,
        );
        let at = dims.attn();
        Ok(ModelParams {
            dims,
            frozen_embed,
            token_embed: u(vec![v, e], rng),
            action_embed: u(vec![ACTIONS, a], rng),
            enc_ass_fwd: LstmParams::init(e, eh, s, rng),
            enc_ass_bwd: LstmParams::init(e, eh, s, rng),
            enc_edit_fwd: LstmParams::init(dims.edit_input(), eh, s, rng),
            enc_edit_bwd: LstmParams::init(dims.edit_input(), eh, s, rng),
            attn_co: u(vec![at, at], rng),
            mod_ass_fwd: LstmParams::init(dims.mod_input(), eh, s, rng),
            mod_ass_bwd: LstmParams::init(dims.mod_input(), eh, s, rng),
            mod_edit_fwd: LstmParams::init(dims.mod_input(), eh, s, rng),
            mod_edit_bwd: LstmParams::init(dims.mod_input(), eh, s, rng),
            init_h_w: u(vec![dh, dims.init_concat()], rng),
            init_c_w: u(vec![dh, dims.init_concat()], rng),
            dec_lstm: LstmParams::init(dims.dec_input(), dh, s, rng),
            dec_attn_ass: u(vec![at, dh], rng),
            dec_attn_edit: u(vec![at, dh], rng),
            combine_w: u(vec![dh, dims.combine_input()], rng),
            combine_b: TensorData::zeros(vec![dh]),
            out_w: u(vec![v, dh], rng),
            out_b: TensorData::zeros(vec![v]),
            gate_gamma_w: u(vec![1, dims.combine_input()], rng),
            gate_gamma_b: TensorData::zeros(vec![1]),
            gate_theta_w: u(vec![1, dims.combine_input()], rng),
            gate_theta_b: TensorData::zeros(vec![1]),
        })
    }

    /// All-zero parameters with the right shapes (checkpoint loading).
    pub fn zeros(dims: ModelDims, frozen_embed: bool) -> Result<Self, ModelError> {
        struct ZeroRng;
        impl RngCore for ZeroRng {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                dest.fill(0);
            }
            fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
                dest.fill(0);
                Ok(())
            }
        }
        let mut params = Self::init(dims, frozen_embed, &mut ZeroRng)?;
        for (_, t) in params.named_mut() {
            for v in t.data_mut() {
                *v = S::ZERO;
            }
        }
        Ok(params)
    }

    /// Every tensor with its stable name, in checkpoint order.
    pub fn named(&self) -> Vec<(&'static str, &TensorData<S>)> {
        param_list!(self, &)
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut TensorData<S>)> {
        param_list!(self, &mut)
    }

    /// The tensors the optimizer may update; excludes a frozen embedding
    /// table.
    pub fn trainable(&self) -> Vec<(&'static str, &TensorData<S>)> {
        let frozen = self.frozen_embed;
        self.named()
            .into_iter()
            .filter(|(name, _)| !(frozen && *name == "token_embed"))
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<(&'static str, &mut TensorData<S>)> {
        let frozen = self.frozen_embed;
        self.named_mut()
            .into_iter()
            .filter(|(name, _)| !(frozen && *name == "token_embed"))
            .collect()
    }

    /// Total scalar count.
    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Precision conversion (f32 training ↔ f64 verification).
    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            dims: self.dims,
            frozen_embed: self.frozen_embed,
            token_embed: self.token_embed.cast(),
            action_embed: self.action_embed.cast(),
            enc_ass_fwd: self.enc_ass_fwd.cast(),
            enc_ass_bwd: self.enc_ass_bwd.cast(),
            enc_edit_fwd: self.enc_edit_fwd.cast(),
            enc_edit_bwd: self.enc_edit_bwd.cast(),
            attn_co: self.attn_co.cast(),
            mod_ass_fwd: self.mod_ass_fwd.cast(),
            mod_ass_bwd: self.mod_ass_bwd.cast(),
            mod_edit_fwd: self.mod_edit_fwd.cast(),
            mod_edit_bwd: self.mod_edit_bwd.cast(),
            init_h_w: self.init_h_w.cast(),
            init_c_w: self.init_c_w.cast(),
            dec_lstm: self.dec_lstm.cast(),
            dec_attn_ass: self.dec_attn_ass.cast(),
            dec_attn_edit: self.dec_attn_edit.cast(),
            combine_w: self.combine_w.cast(),
            combine_b: self.combine_b.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
            gate_gamma_w: self.gate_gamma_w.cast(),
            gate_gamma_b: self.gate_gamma_b.cast(),
            gate_theta_w: self.gate_theta_w.cast(),
            gate_theta_b: self.gate_theta_b.cast(),
        }
    }

    /// Registers every tensor on a tape. A frozen embedding table goes in as
    /// a constant so the backward pass skips it.
    pub fn register(&self, tape: &mut Tape<S>) -> ParamVars {
        let mut reg = |t: &TensorData<S>| tape.param(t.clone());
        let lstm = |tape: &mut Tape<S>, p: &LstmParams<S>| LstmVars {
            wx: tape.param(p.wx.clone()),
            wh: tape.param(p.wh.clone()),
            b: tape.param(p.b.clone()),
        };
        let token_embed = if self.frozen_embed {
            tape.constant(self.token_embed.clone())
        } else {
            reg(&self.token_embed)
        };
        ParamVars {
            dims: self.dims,
            token_embed,
            action_embed: tape.param(self.action_embed.clone()),
            enc_ass_fwd: lstm(tape, &self.enc_ass_fwd),
            enc_ass_bwd: lstm(tape, &self.enc_ass_bwd),
            enc_edit_fwd: lstm(tape, &self.enc_edit_fwd),
            enc_edit_bwd: lstm(tape, &self.enc_edit_bwd),
            attn_co: tape.param(self.attn_co.clone()),
            mod_ass_fwd: lstm(tape, &self.mod_ass_fwd),
            mod_ass_bwd: lstm(tape, &self.mod_ass_bwd),
            mod_edit_fwd: lstm(tape, &self.mod_edit_fwd),
            mod_edit_bwd: lstm(tape, &self.mod_edit_bwd),
            init_h_w: tape.param(self.init_h_w.clone()),
            init_c_w: tape.param(self.init_c_w.clone()),
            dec_lstm: lstm(tape, &self.dec_lstm),
            dec_attn_ass: tape.param(self.dec_attn_ass.clone()),
            dec_attn_edit: tape.param(self.dec_attn_edit.clone()),
            combine_w: tape.param(self.combine_w.clone()),
            combine_b: tape.param(self.combine_b.clone()),
            out_w: tape.param(self.out_w.clone()),
            out_b: tape.param(self.out_b.clone()),
            gate_gamma_w: tape.param(self.gate_gamma_w.clone()),
            gate_gamma_b: tape.param(self.gate_gamma_b.clone()),
            gate_theta_w: tape.param(self.gate_theta_w.clone()),
            gate_theta_b: tape.param(self.gate_theta_b.clone()),
        }
    }
}

/// Tape handles for one registration of the parameters, in the same field
/// order as [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub dims: ModelDims,
    pub token_embed: Var,
    pub action_embed: Var,
    pub enc_ass_fwd: LstmVars,
    pub enc_ass_bwd: LstmVars,
    pub enc_edit_fwd: LstmVars,
    pub enc_edit_bwd: LstmVars,
    pub attn_co: Var,
    pub mod_ass_fwd: LstmVars,
    pub mod_ass_bwd: LstmVars,
    pub mod_edit_fwd: LstmVars,
    pub mod_edit_bwd: LstmVars,
    pub init_h_w: Var,
    pub init_c_w: Var,
    pub dec_lstm: LstmVars,
    pub dec_attn_ass: Var,
    pub dec_attn_edit: Var,
    pub combine_w: Var,
    pub combine_b: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub gate_gamma_w: Var,
    pub gate_gamma_b: Var,
    pub gate_theta_w: Var,
    pub gate_theta_b: Var,
}

impl ParamVars {
    /// Tape handles in the same order as [`ModelParams::named`], paired with
    /// the same names (gradient collection).
    pub fn named(&self) -> Vec<(&'static str, Var)> {
        let lstm = |name: &'static str, v: &LstmVars| -> [(&'static str, Var); 3] {
            // Names must match param_list!; the suffixes are fixed.
            let (wx, wh, b) = match name {
                "enc_ass_fwd" => ("enc_ass_fwd.wx", "enc_ass_fwd.wh", "enc_ass_fwd.b"),
                "enc_ass_bwd" => ("enc_ass_bwd.wx", "enc_ass_bwd.wh", "enc_ass_bwd.b"),
                "enc_edit_fwd" => ("enc_edit_fwd.wx", "enc_edit_fwd.wh", "enc_edit_fwd.b"),
                "enc_edit_bwd" => ("enc_edit_bwd.wx", "enc_edit_bwd.wh", "enc_edit_bwd.b"),
                "mod_ass_fwd" => ("mod_ass_fwd.wx", "mod_ass_fwd.wh", "mod_ass_fwd.b"),
                "mod_ass_bwd" => ("mod_ass_bwd.wx", "mod_ass_bwd.wh", "mod_ass_bwd.b"),
                "mod_edit_fwd" => ("mod_edit_fwd.wx", "mod_edit_fwd.wh", "mod_edit_fwd.b"),
                "mod_edit_bwd" => ("mod_edit_bwd.wx", "mod_edit_bwd.wh", "mod_edit_bwd.b"),
                "dec_lstm" => ("dec_lstm.wx", "dec_lstm.wh", "dec_lstm.b"),
                _ => unreachable!("unknown lstm name {name}"),
            };
            [(wx, v.wx), (wh, v.wh), (b, v.b)]
        };
        let mut out = vec![
            ("token_embed", self.token_embed),
            ("action_embed", self.action_embed),
        ];
        out.extend(lstm("enc_ass_fwd", &self.enc_ass_fwd));
        out.extend(lstm("enc_ass_bwd", &self.enc_ass_bwd));
        out.extend(lstm("enc_edit_fwd", &self.enc_edit_fwd));
        out.extend(lstm("enc_edit_bwd", &self.enc_edit_bwd));
        out.push(("attn_co", self.attn_co));
        out.extend(lstm("mod_ass_fwd", &self.mod_ass_fwd));
        out.extend(lstm("mod_ass_bwd", &self.mod_ass_bwd));
        out.extend(lstm("mod_edit_fwd", &self.mod_edit_fwd));
        out.extend(lstm("mod_edit_bwd", &self.mod_edit_bwd));
        out.push(("init_h_w", self.init_h_w));
        out.push(("init_c_w", self.init_c_w));
        out.extend(lstm("dec_lstm", &self.dec_lstm));
        out.extend([
            ("dec_attn_ass", self.dec_attn_ass),
            ("dec_attn_edit", self.dec_attn_edit),
            ("combine_w", self.combine_w),
            ("combine_b", self.combine_b),
            ("out_w", self.out_w),
            ("out_b", self.out_b),
            ("gate_gamma_w", self.gate_gamma_w),
            ("gate_gamma_b", self.gate_gamma_b),
            ("gate_theta_w", self.gate_theta_w),
            ("gate_theta_b", self.gate_theta_b),
        ]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    fn tiny() -> ModelDims {
        ModelDims {
            vocab: 8,
            embed: 4,
            action_embed: 2,
            enc_hidden: 3,
            dec_hidden: 5,
        }
    }

    #[test]
    fn shapes_follow_the_dimension_contract() {
        let dims = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::<f32>::init(dims, false, &mut rng).unwrap();
        assert_eq!(p.token_embed.shape(), &[8, 4]);
        assert_eq!(p.action_embed.shape(), &[4, 2]);
        assert_eq!(p.enc_ass_fwd.wx.shape(), &[12, 4]);
        assert_eq!(p.enc_edit_fwd.wx.shape(), &[12, 10]); // 2·4 + 2
        assert_eq!(p.attn_co.shape(), &[6, 6]);
        assert_eq!(p.mod_ass_fwd.wx.shape(), &[12, 12]); // input 2·attn
        assert_eq!(p.init_h_w.shape(), &[5, 12]);
        assert_eq!(p.dec_lstm.wx.shape(), &[20, 9]); // 4·dec × (embed+dec)
        assert_eq!(p.dec_attn_ass.shape(), &[6, 5]);
        assert_eq!(p.combine_w.shape(), &[5, 17]); // 2·attn + dec
        assert_eq!(p.out_w.shape(), &[8, 5]);
        assert_eq!(p.gate_gamma_w.shape(), &[1, 17]);
    }

    #[test]
    fn named_listing_is_stable_and_complete() {
        let dims = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::<f32>::init(dims, false, &mut rng).unwrap();
        let names: Vec<&str> = p.named().iter().map(|(n, _)| *n).collect();
        assert_eq!(names.len(), 42);
        assert_eq!(names[0], "token_embed");
        assert_eq!(*names.last().unwrap(), "gate_theta_b");
        // No duplicates.
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        // Tape registration lists the same names in the same order.
        let mut tape = crate::num::Tape::<f32>::new();
        let pv = p.register(&mut tape);
        let var_names: Vec<&str> = pv.named().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, var_names);
    }

    #[test]
    fn frozen_embeddings_leave_the_trainable_set() {
        let dims = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::<f32>::init(dims, true, &mut rng).unwrap();
        assert_eq!(p.trainable().len(), 41);
        assert!(p.trainable().iter().all(|(n, _)| *n != "token_embed"));
        // And the tape refuses to push gradients into the frozen table.
        let mut tape = crate::num::Tape::<f32>::new();
        let pv = p.register(&mut tape);
        let row = tape.embed_row(pv.token_embed, 0).unwrap();
        let loss = tape.sum_all(row);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(pv.token_embed).is_none());
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        let dims = tiny();
        let a =
            ModelParams::<f32>::init(dims, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b =
            ModelParams::<f32>::init(dims, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for ((_, ta), (_, tb)) in a.named().iter().zip(b.named()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn invalid_dims_are_rejected() {
        let mut dims = tiny();
        dims.enc_hidden = 0;
        assert!(dims.validate().is_err());
        let mut dims = tiny();
        dims.vocab = 3;
        assert!(dims.validate().is_err());
    }
}
