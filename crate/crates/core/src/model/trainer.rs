//! Teacher-forced training with batched gradient accumulation, global-norm
//! clipping, Adam updates, and perplexity-based early stopping.
//!
//! Every example runs on its own tape; gradients accumulate across the batch
//! and are scaled by the batch's token count, so the effective loss is the
//! mean cross-entropy per target token. With a fixed seed the whole procedure
//! is bit-reproducible: epoch shuffles and per-example dropout masks derive
//! from (seed, epoch, example index) alone.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::Tap;
use crate::lexer::TokenSeq;
use crate::editseq::align;
use crate::num::{clip_global_norm, Adam, AdamConfig, Tape, TensorData, Var};
use crate::retrieval::RetrievalIndex;

use super::decoder::decode_step;
use super::encoder::encode;
use super::generate::{generate, GenConfig};
use super::input::{build_input, encode_target, ModelInput, TargetEncoding};
use super::params::ModelParams;
use super::vocab::Vocab;
use super::{decoder, ModelError};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub dropout: f64,
    pub clip_norm: f64,
    /// Tail-truncation bound for the prototype assertion and edit script.
    pub max_len: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-perplexity improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 8,
            dropout: 0.2,
            clip_norm: 5.0,
            max_len: 512,
            max_epochs: 200,
            patience: 5,
            seed: 0,
        }
    }
}

/// One ready-to-train example: the encoded input, its provenance, and the
/// teacher-forcing view of the reference assertion.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub id: u64,
    pub retrieved_id: u64,
    pub retrieval_score: f64,
    pub input: ModelInput,
    pub target_tokens: TokenSeq,
    pub target: TargetEncoding,
}

/// Builds pairs for a whole split: retrieve each query's prototype, align the
/// focal tests into an edit script, and encode against the vocabulary.
/// `exclude_self` must be set when `taps` are members of the index's corpus.
pub fn build_pairs(
    taps: &[Tap],
    index: &RetrievalIndex,
    vocab: &Vocab,
    max_len: usize,
    exclude_self: bool,
) -> Result<Vec<TrainingPair>, ModelError> {
    let mut pairs = Vec::with_capacity(taps.len());
    for tap in taps {
        let exclude = exclude_self.then_some(tap.id);
        let query = crate::lexer::dedup_bag(&tap.focal_test);
        let hit = index.retrieve_top1(&query, exclude)?;
        let edits = align(&hit.retrieved_focal_test, &tap.focal_test);
        let input = build_input(&hit.retrieved_assertion, &edits, vocab, max_len)?;
        let target = encode_target(&tap.assertion, vocab, &input.ext);
        pairs.push(TrainingPair {
            id: tap.id,
            retrieved_id: hit.tap_id,
            retrieval_score: hit.score,
            input,
            target_tokens: tap.assertion.clone(),
            target,
        });
    }
    if pairs.is_empty() {
        return Err(ModelError::NoPairs);
    }
    Ok(pairs)
}

/// Keyed RNG streams: dropout masks and shuffles must not share state.
fn keyed_rng(seed: u64, epoch: u64, example: u64, stream: u8) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&example.to_le_bytes());
    key[24] = stream;
    ChaCha8Rng::from_seed(key)
}

fn shuffled_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = keyed_rng(seed, epoch, 0, 1);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Stateful training driver; exposes single epochs so callers can interleave
/// their own evaluation schedule.
pub struct Trainer {
    params: ModelParams<f32>,
    cfg: TrainConfig,
    adam: Adam<f32>,
    epochs_run: usize,
}

impl Trainer {
    pub fn new(params: ModelParams<f32>, cfg: TrainConfig) -> Trainer {
        Trainer {
            params,
            adam: Adam::new(cfg.adam),
            cfg,
            epochs_run: 0,
        }
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    /// Sum of per-token losses for one example's tape, plus its token count.
    fn example_loss(
        tape: &mut Tape<f32>,
        pv: &super::params::ParamVars,
        pair: &TrainingPair,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(Var, usize), ModelError> {
        let mut dropout = dropout;
        let enc = encode(tape, pv, &pair.input, dropout.as_mut().map(|(r, g)| (*r, &mut **g)))?;
        let mut state = decoder::init_state(tape, pv, &enc)?;
        let mut losses = Vec::with_capacity(pair.target.target_slots.len());
        for (&prev, &target) in pair.target.prev_ids.iter().zip(&pair.target.target_slots) {
            let out = decode_step(
                tape,
                pv,
                &pair.input,
                &enc,
                &state,
                prev,
                dropout.as_mut().map(|(r, g)| (*r, &mut **g)),
                None,
            )?;
            state = out.state;
            losses.push(tape.neg_log_pick(out.mixture, target)?);
        }
        let loss = tape.add_n(&losses)?;
        Ok((loss, losses.len()))
    }

    /// Runs one epoch over shuffled batches; returns mean loss per token.
    pub fn run_epoch(&mut self, pairs: &[TrainingPair]) -> Result<f64, ModelError> {
        if pairs.is_empty() {
            return Err(ModelError::NoPairs);
        }
        let epoch = self.epochs_run as u64;
        let (seed, cfg) = (self.cfg.seed, self.cfg);
        let order = shuffled_order(pairs.len(), seed, epoch);
        let mut epoch_loss = 0.0f64;
        let mut epoch_tokens = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let trainable_names: Vec<&'static str> =
                self.params.trainable().iter().map(|(n, _)| *n).collect();
            let mut accum: Vec<TensorData<f32>> = self
                .params
                .trainable()
                .iter()
                .map(|(_, t)| TensorData::zeros(t.shape().to_vec()))
                .collect();
            let mut batch_tokens = 0usize;

            for &idx in batch {
                let pair = &pairs[idx];
                let mut tape = Tape::<f32>::new();
                let pv = self.params.register(&mut tape);
                let mut rng = keyed_rng(seed, epoch, idx as u64, 0);
                let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
                let (loss, tokens) = Self::example_loss(&mut tape, &pv, pair, dropout)?;
                let loss_val = f64::from(tape.value(loss).item());
                if !loss_val.is_finite() {
                    return Err(ModelError::Diverged {
                        epoch: self.epochs_run,
                    });
                }
                epoch_loss += loss_val;
                batch_tokens += tokens;

                let mut grads = tape.backward(loss)?;
                for ((name, var), acc) in pv
                    .named()
                    .into_iter()
                    .filter(|(n, _)| trainable_names.contains(n))
                    .zip(accum.iter_mut())
                {
                    debug_assert!(trainable_names.contains(&name));
                    if let Some(g) = grads.take(var) {
                        acc.add_assign(&g)?;
                    }
                }
            }

            // Mean-per-token loss: scale the summed gradients, then clip.
            let scale = 1.0 / batch_tokens as f32;
            for acc in &mut accum {
                for v in acc.data_mut() {
                    *v *= scale;
                }
            }
            let mut grad_refs: Vec<&mut TensorData<f32>> = accum.iter_mut().collect();
            clip_global_norm(&mut grad_refs, cfg.clip_norm);
            let grad_views: Vec<&TensorData<f32>> = accum.iter().collect();
            let mut param_refs: Vec<&mut TensorData<f32>> = self
                .params
                .trainable_mut()
                .into_iter()
                .map(|(_, t)| t)
                .collect();
            self.adam.step(&mut param_refs, &grad_views)?;
            epoch_tokens += batch_tokens;
        }

        self.epochs_run += 1;
        Ok(epoch_loss / epoch_tokens as f64)
    }

    /// Teacher-forced perplexity without dropout: exp(total CE / tokens).
    pub fn validation_perplexity(&self, pairs: &[TrainingPair]) -> Result<f64, ModelError> {
        perplexity(&self.params, pairs)
    }

    /// Fraction of pairs whose greedy decode reproduces the reference
    /// assertion exactly.
    pub fn training_exact_match(
        &self,
        pairs: &[TrainingPair],
        vocab: &Vocab,
    ) -> Result<f64, ModelError> {
        let cfg = GenConfig::default();
        let mut hits = 0usize;
        for pair in pairs {
            let out = generate(&self.params, vocab, &pair.input, &cfg)?;
            if out.tokens == pair.target_tokens {
                hits += 1;
            }
        }
        Ok(hits as f64 / pairs.len() as f64)
    }
}

/// Teacher-forced perplexity of a parameter set over pairs, dropout off.
pub fn perplexity(
    params: &ModelParams<f32>,
    pairs: &[TrainingPair],
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::NoPairs);
    }
    let mut total = 0.0f64;
    let mut tokens = 0usize;
    for pair in pairs {
        let mut tape = Tape::<f32>::new();
        let pv = params.register(&mut tape);
        let (loss, n) = Trainer::example_loss(&mut tape, &pv, pair, None)?;
        total += f64::from(tape.value(loss).item());
        tokens += n;
    }
    Ok((total / tokens as f64).exp())
}

/// Per-epoch telemetry emitted by [`train`].
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_perplexity: f64,
}

/// Outcome of a full training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_perplexity: f64,
    pub history: Vec<EpochStats>,
}

/// Full training loop: epochs until `max_epochs` or until validation
/// perplexity stops improving for `patience` consecutive epochs. Returns the
/// parameters from the best epoch. With no validation pairs, training
/// perplexity stands in.
pub fn train(
    params: ModelParams<f32>,
    train_pairs: &[TrainingPair],
    val_pairs: &[TrainingPair],
    cfg: TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(ModelParams<f32>, TrainReport), ModelError> {
    let mut trainer = Trainer::new(params, cfg);
    let mut best: Option<(usize, f64, ModelParams<f32>)> = None;
    let mut stall = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let train_loss = trainer.run_epoch(train_pairs)?;
        let val_perplexity = if val_pairs.is_empty() {
            trainer.validation_perplexity(train_pairs)?
        } else {
            trainer.validation_perplexity(val_pairs)?
        };
        let stats = EpochStats {
            epoch,
            train_loss,
            val_perplexity,
        };
        progress(&stats);
        history.push(stats);

        let improved = best
            .as_ref()
            .map_or(true, |(_, best_ppl, _)| val_perplexity < *best_ppl);
        if improved {
            best = Some((epoch, val_perplexity, trainer.params().clone()));
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_perplexity, best_params) =
        best.expect("at least one epoch ran");
    Ok((
        best_params,
        TrainReport {
            epochs: history.len(),
            best_epoch,
            best_val_perplexity,
            history,
        },
    ))
}
