//! Token vocabulary with reserved special symbols.

use std::collections::HashMap;

use crate::lexer::TokenSeq;

use super::ModelError;

/// Padding (reserved; sequences are processed unpadded but the slot keeps
/// embedding row 0 stable).
pub const PAD: usize = 0;
/// Out-of-vocabulary token.
pub const UNK: usize = 1;
/// Decoder start symbol.
pub const SOS: usize = 2;
/// Decoder stop symbol.
pub const EOS: usize = 3;
/// Empty side of an insert/delete edit.
pub const EMPTY: usize = 4;

/// Surfaces of the reserved symbols, in id order.
pub const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<empty>"];

/// Immutable token ↔ id mapping. Ids 0..5 are the reserved symbols; the rest
/// are corpus tokens ordered by descending count, ties broken by token text.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from token sequences. Tokens seen fewer than
    /// `min_count` times are dropped; `max_size`, when set, caps the total
    /// size including the reserved symbols.
    pub fn build<'a>(
        seqs: impl IntoIterator<Item = &'a TokenSeq>,
        min_count: usize,
        max_size: Option<usize>,
    ) -> Vocab {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in seqs {
            for tok in seq {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, count)| count >= min_count.max(1) && !SPECIALS.contains(&tok))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let cap = max_size.unwrap_or(usize::MAX).max(SPECIALS.len());
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for (tok, _) in ranked {
            if tokens.len() >= cap {
                break;
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens).expect("constructed token list is well-formed")
    }

    /// Rebuilds a vocabulary from an explicit token list (checkpoint load).
    /// The list must start with the reserved symbols and contain no
    /// duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab, ModelError> {
        if tokens.len() < SPECIALS.len()
            || tokens[..SPECIALS.len()]
                .iter()
                .zip(SPECIALS)
                .any(|(t, s)| t != s)
        {
            return Err(ModelError::Config {
                message: "vocabulary must begin with the reserved symbols".into(),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(ModelError::Config {
                    message: format!("duplicate vocabulary token {tok:?}"),
                });
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
