//! Per-example model input: integer-encoded prototype assertion and edit
//! script, plus the example-local extension of the vocabulary that makes
//! out-of-vocabulary tokens copyable.

use std::collections::HashMap;

use crate::editseq::{Edit, EditSequence};
use crate::lexer::TokenSeq;

use super::vocab::{Vocab, EMPTY, EOS, SOS, UNK};
use super::ModelError;

/// Example-local vocabulary extension: out-of-vocabulary tokens that occur in
/// the prototype assertion or in the query side of the edit script, in first
/// occurrence order (assertion first). Extended id `k` maps to full
/// distribution slot `base_len + k`.
#[derive(Debug, Clone, Default)]
pub struct ExtVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl ExtVocab {
    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    /// Offset of `token` within the extension, if present.
    pub fn ext_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, ext_id: usize) -> &str {
        &self.tokens[ext_id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface form for a full-distribution slot: base vocabulary below
    /// `vocab.len()`, extension tokens above.
    pub fn surface<'a>(&'a self, vocab: &'a Vocab, slot: usize) -> &'a str {
        if slot < vocab.len() {
            vocab.token(slot)
        } else {
            self.token(slot - vocab.len())
        }
    }
}

/// One example, integer-encoded and ready to run through the model.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// Prototype assertion tokens after truncation.
    pub ass_tokens: TokenSeq,
    /// Edit script after truncation.
    pub edits: EditSequence,
    /// Base-vocabulary ids of the prototype assertion (UNK where OOV).
    pub ass_ids: Vec<usize>,
    /// Retrieved-side token id per edit (EMPTY for inserts).
    pub edit_r_ids: Vec<usize>,
    /// Query-side token id per edit (EMPTY for deletes).
    pub edit_q_ids: Vec<usize>,
    /// Edit action codes 0..4.
    pub edit_action_ids: Vec<usize>,
    /// Example-local vocabulary extension.
    pub ext: ExtVocab,
    /// Full-distribution slot per prototype assertion position.
    pub ass_ext_ids: Vec<usize>,
    /// Full-distribution slot of each edit's query token; `None` for deletes.
    pub copy_slot_ext_ids: Vec<Option<usize>>,
    /// True at edit positions whose query side is a real token.
    pub copy_mask: Vec<bool>,
}

impl ModelInput {
    /// Size of the example's full output distribution.
    pub fn dist_len(&self, vocab: &Vocab) -> usize {
        vocab.len() + self.ext.len()
    }

    /// Whether any edit position offers a copyable query token.
    pub fn has_copyable_slot(&self) -> bool {
        self.copy_mask.iter().any(|&b| b)
    }
}

/// Keeps the last `max_len` elements; assertions sit at the end of a focal
/// test, so when something must go it is the oldest context.
fn truncate_tail<T>(mut xs: Vec<T>, max_len: usize) -> Vec<T> {
    if xs.len() > max_len {
        xs.drain(..xs.len() - max_len);
    }
    xs
}

/// Encodes a (prototype assertion, edit script) pair against the vocabulary.
/// Both sequences are tail-truncated to `max_len` first; the extension only
/// covers tokens that survive truncation.
pub fn build_input(
    assertion: &TokenSeq,
    edits: &[Edit],
    vocab: &Vocab,
    max_len: usize,
) -> Result<ModelInput, ModelError> {
    let ass_tokens = truncate_tail(assertion.clone(), max_len);
    let edits = truncate_tail(edits.to_vec(), max_len);
    if ass_tokens.is_empty() {
        return Err(ModelError::Config {
            message: "prototype assertion is empty".into(),
        });
    }
    if edits.is_empty() {
        return Err(ModelError::Config {
            message: "edit script is empty".into(),
        });
    }

    let mut ext = ExtVocab::default();
    let mut ass_ids = Vec::with_capacity(ass_tokens.len());
    let mut ass_ext_ids = Vec::with_capacity(ass_tokens.len());
    for tok in &ass_tokens {
        ass_ids.push(vocab.id_or_unk(tok));
        ass_ext_ids.push(match vocab.id(tok) {
            Some(id) => id,
            None => vocab.len() + ext.intern(tok),
        });
    }

    let mut edit_r_ids = Vec::with_capacity(edits.len());
    let mut edit_q_ids = Vec::with_capacity(edits.len());
    let mut edit_action_ids = Vec::with_capacity(edits.len());
    let mut copy_slot_ext_ids = Vec::with_capacity(edits.len());
    let mut copy_mask = Vec::with_capacity(edits.len());
    for edit in &edits {
        edit_r_ids.push(edit.retrieved.as_deref().map_or(EMPTY, |t| vocab.id_or_unk(t)));
        edit_q_ids.push(edit.query.as_deref().map_or(EMPTY, |t| vocab.id_or_unk(t)));
        edit_action_ids.push(edit.action.code() as usize);
        match edit.query.as_deref() {
            Some(tok) => {
                let slot = match vocab.id(tok) {
                    Some(id) => id,
                    None => vocab.len() + ext.intern(tok),
                };
                copy_slot_ext_ids.push(Some(slot));
                copy_mask.push(true);
            }
            None => {
                copy_slot_ext_ids.push(None);
                copy_mask.push(false);
            }
        }
    }

    Ok(ModelInput {
        ass_tokens,
        edits,
        ass_ids,
        edit_r_ids,
        edit_q_ids,
        edit_action_ids,
        ext,
        ass_ext_ids,
        copy_slot_ext_ids,
        copy_mask,
    })
}

/// Teacher-forcing view of a target assertion.
#[derive(Debug, Clone)]
pub struct TargetEncoding {
    /// What the decoder should produce at each step: full-distribution slots
    /// with EOS appended; tokens that are neither in the base vocabulary nor
    /// copyable collapse to UNK.
    pub target_slots: Vec<usize>,
    /// What the decoder consumes at each step: SOS followed by the target's
    /// base-vocabulary ids (UNK where OOV — extension tokens have no
    /// embedding rows).
    pub prev_ids: Vec<usize>,
}

/// Encodes a reference assertion for teacher forcing against an example's
/// extension.
pub fn encode_target(target: &TokenSeq, vocab: &Vocab, ext: &ExtVocab) -> TargetEncoding {
    let mut target_slots = Vec::with_capacity(target.len() + 1);
    let mut prev_ids = Vec::with_capacity(target.len() + 1);
    prev_ids.push(SOS);
    for tok in target {
        let slot = vocab
            .id(tok)
            .or_else(|| ext.ext_id(tok).map(|k| vocab.len() + k))
            .unwrap_or(UNK);
        target_slots.push(slot);
        prev_ids.push(vocab.id_or_unk(tok));
    }
    target_slots.push(EOS);
    TargetEncoding {
        target_slots,
        prev_ids,
    }
}
