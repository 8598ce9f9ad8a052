//! Run configuration: one JSON-serializable struct holding every knob the
//! pipeline reads, so an experiment is fully described by a config file plus
//! a seed. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use assertedit::corpus::DataFormat;
use assertedit::model::{GenConfig, ModelDims, TrainConfig};
use assertedit::num::AdamConfig;
use assertedit::retrieval::Coefficient;

/// Every tunable of the pipeline, with library defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Similarity coefficient for prototype retrieval.
    pub coefficient: Coefficient,
    /// On-disk dataset layout.
    pub data_format: DataFormat,
    /// Tokens seen fewer times than this stay out of the vocabulary.
    pub vocab_min_count: usize,
    /// Hard cap on vocabulary size (specials included).
    pub vocab_max_size: Option<usize>,
    pub embed_dim: usize,
    pub action_embed_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub dropout: f64,
    /// Tail-truncation bound on assertion and edit-script lengths.
    pub max_len: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Decode-length cap for generation.
    pub max_decode_len: usize,
    /// Beam width; 1 decodes greedily.
    pub beam: usize,
    pub seed: u64,
    /// Optional word-vector file: `token v1 .. vN` per line.
    pub pretrained_embeddings: Option<PathBuf>,
    /// Keep the token embedding table out of the trainable set.
    pub freeze_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            coefficient: Coefficient::Jaccard,
            data_format: DataFormat::Jsonl,
            vocab_min_count: 1,
            vocab_max_size: None,
            embed_dim: 300,
            action_embed_dim: 16,
            enc_hidden: 256,
            dec_hidden: 512,
            lr: 0.001,
            clip_norm: 5.0,
            batch_size: 8,
            dropout: 0.2,
            max_len: 512,
            max_epochs: 200,
            patience: 5,
            max_decode_len: 64,
            beam: 1,
            seed: 0,
            pretrained_embeddings: None,
            freeze_embeddings: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, value) in [
            ("embed_dim", self.embed_dim),
            ("action_embed_dim", self.action_embed_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("beam", self.beam),
        ] {
            anyhow::ensure!(value > 0, "{name} must be positive");
        }
        anyhow::ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must be in [0, 1)"
        );
        anyhow::ensure!(self.lr > 0.0, "lr must be positive");
        anyhow::ensure!(self.clip_norm > 0.0, "clip_norm must be positive");
        Ok(())
    }

    /// Model dimensions once the vocabulary size is known.
    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed_dim,
            action_embed: self.action_embed_dim,
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            dropout: self.dropout,
            clip_norm: self.clip_norm,
            max_len: self.max_len,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            max_len: self.max_decode_len,
            beam: self.beam,
        }
    }
}
