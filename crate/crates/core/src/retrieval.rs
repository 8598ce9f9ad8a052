//! Bag-of-token retrieval over focal tests.
//!
//! A query focal test is scored against every corpus entry on deduplicated
//! token bags and the best entry's assertion becomes the prototype for
//! editing. Three coefficients are supported; with `|A ∩ B|` written `i`:
//!
//! * Jaccard: `i / |A ∪ B|`
//! * Dice:    `i / (|A| + |B|)`
//! * Overlap: `i / min(|A|, |B|)`
//!
//! Dice here is intentionally the unscaled variant (no factor 2), so a bag's
//! self-similarity is 1/2; it is a strictly monotone function of Jaccard, so
//! both pick the same winner. Ties and all-zero scores resolve to the lowest
//! TAP id, and a query entry can be excluded so corpus members never retrieve
//! themselves while building training pairs.
//!
//! Scoring runs either as a linear scan or through an inverted token index;
//! both compute the same integer intersection counts and therefore agree
//! bit-for-bit.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Tap;
use crate::lexer::{dedup_bag, TokenBag, TokenSeq};

/// Similarity coefficient used to rank corpus entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Jaccard,
    Dice,
    Overlap,
}

impl Coefficient {
    pub const ALL: [Coefficient; 3] = [Coefficient::Jaccard, Coefficient::Dice, Coefficient::Overlap];

    pub fn name(self) -> &'static str {
        match self {
            Coefficient::Jaccard => "jaccard",
            Coefficient::Dice => "dice",
            Coefficient::Overlap => "overlap",
        }
    }

    fn code(self) -> u8 {
        match self {
            Coefficient::Jaccard => 0,
            Coefficient::Dice => 1,
            Coefficient::Overlap => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Coefficient::Jaccard),
            1 => Some(Coefficient::Dice),
            2 => Some(Coefficient::Overlap),
            _ => None,
        }
    }
}

impl std::str::FromStr for Coefficient {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(Coefficient::Jaccard),
            "dice" => Ok(Coefficient::Dice),
            "overlap" => Ok(Coefficient::Overlap),
            other => Err(format!(
                "unknown coefficient `{other}` (expected jaccard, dice, or overlap)"
            )),
        }
    }
}

impl std::fmt::Display for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn intersection_size(a: &TokenBag, b: &TokenBag) -> usize {
    // Iterate the smaller bag and probe the larger one.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|t| large.contains(*t)).count()
}

fn score_from_counts(c: Coefficient, inter: usize, len_a: usize, len_b: usize) -> f64 {
    let denom = match c {
        Coefficient::Jaccard => len_a + len_b - inter,
        Coefficient::Dice => len_a + len_b,
        Coefficient::Overlap => len_a.min(len_b),
    };
    if denom == 0 {
        0.0
    } else {
        inter as f64 / denom as f64
    }
}

/// Similarity between two token bags under the given coefficient. Empty bags
/// (degenerate denominators) score 0.
pub fn similarity(c: Coefficient, a: &TokenBag, b: &TokenBag) -> f64 {
    score_from_counts(c, intersection_size(a, b), a.len(), b.len())
}

/// One indexed corpus entry: the focal-test token bag plus the token
/// sequences needed to report a retrieval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub tap_id: u64,
    pub bag: TokenBag,
    pub focal_test: TokenSeq,
    pub assertion: TokenSeq,
}

/// Top-1 retrieval outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub tap_id: u64,
    pub score: f64,
    pub retrieved_focal_test: TokenSeq,
    pub retrieved_assertion: TokenSeq,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot build a retrieval index from an empty corpus")]
    EmptyCorpus,
    #[error("every index entry was excluded; nothing to retrieve")]
    AllExcluded,
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a retrieval index (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported index version {found} (expected {expected})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: invalid coefficient code {code}")]
    BadCoefficient { path: PathBuf, code: u8 },
    #[error("{path}: truncated or corrupt index: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("index entry {tap_id} has no matching TAP in the supplied corpus")]
    MissingTap { tap_id: u64 },
}

const INDEX_MAGIC: [u8; 4] = *b"EIDX";
const INDEX_VERSION: u32 = 1;

/// Inverted-index-accelerated top-1 retriever over focal-test token bags.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    coefficient: Coefficient,
    entries: Vec<IndexEntry>,
    /// token -> entry positions whose bag contains it.
    postings: HashMap<String, Vec<u32>>,
}

impl RetrievalIndex {
    /// Builds an index over `corpus`, deduplicating each focal test into its
    /// token bag.
    pub fn build(corpus: &[Tap], coefficient: Coefficient) -> Result<Self, RetrievalError> {
        let entries: Vec<IndexEntry> = corpus
            .iter()
            .map(|tap| IndexEntry {
                tap_id: tap.id,
                bag: dedup_bag(&tap.focal_test),
                focal_test: tap.focal_test.clone(),
                assertion: tap.assertion.clone(),
            })
            .collect();
        Self::from_entries(entries, coefficient)
    }

    fn from_entries(
        entries: Vec<IndexEntry>,
        coefficient: Coefficient,
    ) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (pos, entry) in entries.iter().enumerate() {
            for token in &entry.bag {
                postings.entry(token.clone()).or_default().push(pos as u32);
            }
        }
        Ok(RetrievalIndex {
            coefficient,
            entries,
            postings,
        })
    }

    pub fn coefficient(&self) -> Coefficient {
        self.coefficient
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Top-1 retrieval via the inverted index: only entries sharing at least
    /// one token with the query are scored, everything else is known to
    /// score 0. Falls back to the lowest-id entry when nothing overlaps.
    pub fn retrieve_top1(
        &self,
        query: &TokenBag,
        exclude: Option<u64>,
    ) -> Result<RetrievalResult, RetrievalError> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for token in query {
            if let Some(posting) = self.postings.get(token) {
                for &pos in posting {
                    *counts.entry(pos).or_insert(0) += 1;
                }
            }
        }
        let mut best: Option<(f64, u64, usize)> = None;
        for (&pos, &inter) in &counts {
            let entry = &self.entries[pos as usize];
            if Some(entry.tap_id) == exclude {
                continue;
            }
            let score = score_from_counts(self.coefficient, inter, query.len(), entry.bag.len());
            if better(best, score, entry.tap_id) {
                best = Some((score, entry.tap_id, pos as usize));
            }
        }
        // Zero-overlap queries score 0 against everything; keep the same
        // lowest-id winner the linear scan would produce.
        let zero_fallback = || {
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| Some(e.tap_id) != exclude)
                .min_by_key(|(_, e)| e.tap_id)
                .map(|(pos, e)| (0.0, e.tap_id, pos))
        };
        let resolved = match best {
            Some((score, id, pos)) if score > 0.0 => Some((score, id, pos)),
            _ => zero_fallback(),
        };
        let (score, tap_id, pos) = resolved.ok_or(RetrievalError::AllExcluded)?;
        let entry = &self.entries[pos];
        Ok(RetrievalResult {
            tap_id,
            score,
            retrieved_focal_test: entry.focal_test.clone(),
            retrieved_assertion: entry.assertion.clone(),
        })
    }

    /// Top-1 retrieval by scanning every entry. Kept as the reference path;
    /// must agree exactly with [`RetrievalIndex::retrieve_top1`].
    pub fn retrieve_top1_linear(
        &self,
        query: &TokenBag,
        exclude: Option<u64>,
    ) -> Result<RetrievalResult, RetrievalError> {
        let mut best: Option<(f64, u64, usize)> = None;
        for (pos, entry) in self.entries.iter().enumerate() {
            if Some(entry.tap_id) == exclude {
                continue;
            }
            let inter = intersection_size(query, &entry.bag);
            let score = score_from_counts(self.coefficient, inter, query.len(), entry.bag.len());
            if better(best, score, entry.tap_id) {
                best = Some((score, entry.tap_id, pos));
            }
        }
        let (score, tap_id, pos) = best.ok_or(RetrievalError::AllExcluded)?;
        let entry = &self.entries[pos];
        Ok(RetrievalResult {
            tap_id,
            score,
            retrieved_focal_test: entry.focal_test.clone(),
            retrieved_assertion: entry.assertion.clone(),
        })
    }

    /// Serializes the index: a fixed header (magic, version, coefficient,
    /// entry count) followed by each entry's TAP id and length-prefixed UTF-8
    /// bag tokens.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io_err = |source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&INDEX_MAGIC);
        buf.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        buf.push(self.coefficient.code());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for entry in &self.entries {
            buf.extend_from_slice(&entry.tap_id.to_le_bytes());
            buf.extend_from_slice(&(entry.bag.len() as u32).to_le_bytes());
            for token in &entry.bag {
                buf.extend_from_slice(&(token.len() as u32).to_le_bytes());
                buf.extend_from_slice(token.as_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&buf).map_err(io_err)?;
        Ok(())
    }

    /// Reads an index back and re-binds each entry's token sequences from
    /// `corpus` (the file stores only ids and bags).
    pub fn load(path: &Path, corpus: &[Tap]) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let corrupt = |message: &str| RetrievalError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut reader = io::Cursor::new(&bytes);
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|_| corrupt("missing header"))?;
        if magic != INDEX_MAGIC {
            return Err(RetrievalError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let version = read_u32(&mut reader).map_err(|_| corrupt("missing version"))?;
        if version != INDEX_VERSION {
            return Err(RetrievalError::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let mut code = [0u8; 1];
        reader
            .read_exact(&mut code)
            .map_err(|_| corrupt("missing coefficient"))?;
        let coefficient =
            Coefficient::from_code(code[0]).ok_or(RetrievalError::BadCoefficient {
                path: path.to_path_buf(),
                code: code[0],
            })?;
        let count = read_u64(&mut reader).map_err(|_| corrupt("missing entry count"))?;

        let by_id: HashMap<u64, &Tap> = corpus.iter().map(|t| (t.id, t)).collect();
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let tap_id = read_u64(&mut reader).map_err(|_| corrupt("truncated entry"))?;
            let token_count = read_u32(&mut reader).map_err(|_| corrupt("truncated entry"))?;
            let mut bag = TokenBag::new();
            for _ in 0..token_count {
                let len = read_u32(&mut reader).map_err(|_| corrupt("truncated token"))? as usize;
                let mut raw = vec![0u8; len];
                reader
                    .read_exact(&mut raw)
                    .map_err(|_| corrupt("truncated token"))?;
                let token =
                    String::from_utf8(raw).map_err(|_| corrupt("token is not valid UTF-8"))?;
                bag.insert(token);
            }
            let tap = by_id
                .get(&tap_id)
                .ok_or(RetrievalError::MissingTap { tap_id })?;
            entries.push(IndexEntry {
                tap_id,
                bag,
                focal_test: tap.focal_test.clone(),
                assertion: tap.assertion.clone(),
            });
        }
        if reader.position() != bytes.len() as u64 {
            return Err(corrupt("trailing bytes after last entry"));
        }
        Self::from_entries(entries, coefficient)
    }
}

/// Strict-improvement rule: higher score wins, equal scores go to the lower
/// TAP id.
fn better(current: Option<(f64, u64, usize)>, score: f64, tap_id: u64) -> bool {
    match current {
        None => true,
        Some((best_score, best_id, _)) => {
            score > best_score || (score == best_score && tap_id < best_id)
        }
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
