//! Scoring for generated assertions: exact-match accuracy, corpus-level BLEU,
//! per-assert-type breakdowns, and edit-distance histograms.
//!
//! All metrics compare token sequences. Two sequences count as an exact match
//! when their canonical single-space joinings are equal. BLEU pools clipped
//! n-gram counts over the whole corpus (the multi-BLEU convention) with no
//! smoothing, so any empty pooled precision yields a hard zero.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::classify_assertion;
use crate::editseq::edit_distance;
use crate::lexer::TokenSeq;

/// Histogram bucket labels, in ascending distance order.
pub const BUCKET_LABELS: [&str; 7] = ["0", "1", "2", "3", "(3,5]", "(5,10]", ">10"];

/// Errors from metric computation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/reference length mismatch: {predictions} vs {references}")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },
    #[error("cannot evaluate an empty corpus")]
    Empty,
}

fn check_paired(predictions: &[TokenSeq], references: &[TokenSeq]) -> Result<(), EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

fn is_match(prediction: &[String], reference: &[String]) -> bool {
    prediction.join(" ") == reference.join(" ")
}

/// Percentage of predictions whose single-space joining equals the
/// reference's.
pub fn exact_match_accuracy(
    predictions: &[TokenSeq],
    references: &[TokenSeq],
) -> Result<f64, EvalError> {
    check_paired(predictions, references)?;
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| is_match(p, r))
        .count();
    Ok(hits as f64 / predictions.len() as f64 * 100.0)
}

/// Corpus-level BLEU in [0, 100]: clipped 1..4-gram counts pooled over all
/// pairs, geometric mean, brevity penalty `exp(1 - r/c)` when the candidate
/// side is shorter. Any pooled precision of zero (including an empty
/// denominator) makes the whole score zero; there is no smoothing.
pub fn corpus_bleu(predictions: &[TokenSeq], references: &[TokenSeq]) -> Result<f64, EvalError> {
    check_paired(predictions, references)?;
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, reference) in predictions.iter().zip(references) {
            let cand_grams = ngram_counts(cand, n);
            let ref_grams = ngram_counts(reference, n);
            for (gram, count) in &cand_grams {
                matched += (*count).min(ref_grams.get(gram).copied().unwrap_or(0));
                total += count;
            }
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c: usize = predictions.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let brevity = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * (log_sum / 4.0).exp())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn bucket_label(distance: usize) -> &'static str {
    match distance {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4..=5 => "(3,5]",
        6..=10 => "(5,10]",
        _ => ">10",
    }
}

/// Token edit distances between paired sequences, bucketed into the seven
/// fixed labels. Every label is present in the result, zero or not, so bucket
/// totals always equal the number of pairs.
pub fn edit_distance_histogram(
    left: &[TokenSeq],
    right: &[TokenSeq],
) -> Result<BTreeMap<String, usize>, EvalError> {
    if left.len() != right.len() {
        return Err(EvalError::LengthMismatch {
            predictions: left.len(),
            references: right.len(),
        });
    }
    let mut buckets: BTreeMap<String, usize> = BUCKET_LABELS
        .iter()
        .map(|label| (label.to_string(), 0))
        .collect();
    for (a, b) in left.iter().zip(right) {
        *buckets.get_mut(bucket_label(edit_distance(a, b))).unwrap() += 1;
    }
    Ok(buckets)
}

/// Exact-match tallies for one assertion category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeStats {
    pub correct: usize,
    pub total: usize,
    /// Percentage of this category's references matched exactly.
    pub accuracy: f64,
}

/// Exact-match accuracy split by the reference's assertion category.
/// Categories with no references are omitted.
pub fn per_type_report(
    predictions: &[TokenSeq],
    references: &[TokenSeq],
) -> Result<BTreeMap<String, TypeStats>, EvalError> {
    check_paired(predictions, references)?;
    let mut tallies: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for (prediction, reference) in predictions.iter().zip(references) {
        let entry = tallies
            .entry(classify_assertion(reference).name())
            .or_insert((0, 0));
        entry.1 += 1;
        if is_match(prediction, reference) {
            entry.0 += 1;
        }
    }
    Ok(tallies
        .into_iter()
        .map(|(name, (correct, total))| {
            let stats = TypeStats {
                correct,
                total,
                accuracy: correct as f64 / total as f64 * 100.0,
            };
            (name.to_string(), stats)
        })
        .collect())
}

/// Every metric for one prediction/reference set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub exact_matches: usize,
    /// Exact-match accuracy as a percentage.
    pub accuracy: f64,
    pub bleu: f64,
    pub per_type: BTreeMap<String, TypeStats>,
    /// Edit distances between predictions and references, bucketed.
    pub edit_distance: BTreeMap<String, usize>,
}

/// Computes the full [`EvalReport`] for paired predictions and references.
pub fn evaluate(predictions: &[TokenSeq], references: &[TokenSeq]) -> Result<EvalReport, EvalError> {
    check_paired(predictions, references)?;
    let exact_matches = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| is_match(p, r))
        .count();
    Ok(EvalReport {
        total: predictions.len(),
        exact_matches,
        accuracy: exact_matches as f64 / predictions.len() as f64 * 100.0,
        bleu: corpus_bleu(predictions, references)?,
        per_type: per_type_report(predictions, references)?,
        edit_distance: edit_distance_histogram(predictions, references)?,
    })
}

/// Renders a report as aligned plain-text tables.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "total:        {}", report.total);
    let _ = writeln!(
        out,
        "exact match:  {}/{} ({:.2}%)",
        report.exact_matches, report.total, report.accuracy
    );
    let _ = writeln!(out, "BLEU:         {:.2}", report.bleu);
    let _ = writeln!(out, "\nby assert type:");
    let name_width = report
        .per_type
        .keys()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("type".len());
    let _ = writeln!(out, "  {:name_width$}  correct  total  accuracy", "type");
    for (name, stats) in &report.per_type {
        let _ = writeln!(
            out,
            "  {:name_width$}  {:>7}  {:>5}  {:>7.2}%",
            name, stats.correct, stats.total, stats.accuracy
        );
    }
    let _ = writeln!(out, "\nedit distance to reference:");
    for label in BUCKET_LABELS {
        let _ = writeln!(out, "  {:6}  {}", label, report.edit_distance[label]);
    }
    out
}
