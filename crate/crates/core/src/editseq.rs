//! Token-level edit scripts between two focal tests.
//!
//! [`align`] diffs the retrieved focal test against the query via a
//! longest-common-subsequence alignment and emits one [`Edit`] per token
//! slot. Within each changed hunk the deleted and inserted runs are paired
//! positionally into `Replace` edits; the unpaired tail stays as plain
//! deletes or inserts. Projecting an edit sequence back onto either side
//! reproduces the original token sequence exactly.
//!
//! The JSONL form of an edit is `{"r": ..., "q": ..., "a": ...}` — the
//! retrieved-side token, the query-side token, and the action — with absent
//! sides encoded as `null`.

use serde::{Deserialize, Serialize};

use crate::lexer::TokenSeq;

/// What happened to a token slot between the retrieved and query sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Insert,
    Delete,
    Equal,
    Replace,
}

impl EditAction {
    /// Stable embedding-table row for each action.
    pub fn code(self) -> u32 {
        match self {
            EditAction::Insert => 0,
            EditAction::Delete => 1,
            EditAction::Equal => 2,
            EditAction::Replace => 3,
        }
    }
}

/// One aligned token slot. `Insert` has no retrieved token and `Delete` no
/// query token; `Equal` and `Replace` carry both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    #[serde(rename = "r")]
    pub retrieved: Option<String>,
    #[serde(rename = "q")]
    pub query: Option<String>,
    #[serde(rename = "a")]
    pub action: EditAction,
}

impl Edit {
    pub fn equal(token: &str) -> Self {
        Edit {
            retrieved: Some(token.to_string()),
            query: Some(token.to_string()),
            action: EditAction::Equal,
        }
    }

    pub fn replace(retrieved: &str, query: &str) -> Self {
        Edit {
            retrieved: Some(retrieved.to_string()),
            query: Some(query.to_string()),
            action: EditAction::Replace,
        }
    }

    pub fn delete(retrieved: &str) -> Self {
        Edit {
            retrieved: Some(retrieved.to_string()),
            query: None,
            action: EditAction::Delete,
        }
    }

    pub fn insert(query: &str) -> Self {
        Edit {
            retrieved: None,
            query: Some(query.to_string()),
            action: EditAction::Insert,
        }
    }
}

pub type EditSequence = Vec<Edit>;

/// One serialized training pair: which TAP was edited toward which prototype,
/// and the resulting edit script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: u64,
    pub retrieved_id: u64,
    pub score: f64,
    pub edits: EditSequence,
}

/// Raw diff steps before hunk pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Equal,
    Delete,
    Insert,
}

/// Aligns `retrieved` against `query` into an edit sequence using an
/// LCS-based minimal edit script.
pub fn align(retrieved: &[String], query: &[String]) -> EditSequence {
    let steps = diff_steps(retrieved, query);
    let mut edits = Vec::with_capacity(steps.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut k = 0usize;
    while k < steps.len() {
        if steps[k] == Step::Equal {
            edits.push(Edit::equal(&retrieved[i]));
            i += 1;
            j += 1;
            k += 1;
            continue;
        }
        // Collect one maximal changed hunk and pair its sides positionally.
        let mut deleted = Vec::new();
        let mut inserted = Vec::new();
        while k < steps.len() && steps[k] != Step::Equal {
            match steps[k] {
                Step::Delete => {
                    deleted.push(i);
                    i += 1;
                }
                Step::Insert => {
                    inserted.push(j);
                    j += 1;
                }
                Step::Equal => unreachable!(),
            }
            k += 1;
        }
        let paired = deleted.len().min(inserted.len());
        for p in 0..paired {
            edits.push(Edit::replace(&retrieved[deleted[p]], &query[inserted[p]]));
        }
        for &d in &deleted[paired..] {
            edits.push(Edit::delete(&retrieved[d]));
        }
        for &q in &inserted[paired..] {
            edits.push(Edit::insert(&query[q]));
        }
    }
    edits
}

/// Computes the step sequence of a minimal edit script via an LCS table.
/// Backtracking prefers matches, then deletions, so the output is
/// deterministic.
fn diff_steps(a: &[String], b: &[String]) -> Vec<Step> {
    let (n, m) = (a.len(), b.len());
    // lcs[i][j] = LCS length of a[i..] and b[j..], flattened row-major.
    let width = m + 1;
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if a[i] == b[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }
    let mut steps = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        if a[i] == b[j] {
            steps.push(Step::Equal);
            i += 1;
            j += 1;
        } else if lcs[(i + 1) * width + j] >= lcs[i * width + j + 1] {
            steps.push(Step::Delete);
            i += 1;
        } else {
            steps.push(Step::Insert);
            j += 1;
        }
    }
    steps.extend(std::iter::repeat(Step::Delete).take(n - i));
    steps.extend(std::iter::repeat(Step::Insert).take(m - j));
    steps
}

/// Recovers the retrieved-side token sequence from an edit sequence.
pub fn project_retrieved(edits: &[Edit]) -> TokenSeq {
    edits
        .iter()
        .filter_map(|e| e.retrieved.clone())
        .collect()
}

/// Recovers the query-side token sequence from an edit sequence.
pub fn project_query(edits: &[Edit]) -> TokenSeq {
    edits.iter().filter_map(|e| e.query.clone()).collect()
}

/// Unit-cost Levenshtein distance (insert / delete / substitute) between two
/// token sequences.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}
