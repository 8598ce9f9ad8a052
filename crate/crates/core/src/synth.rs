//! Synthetic near-duplicate corpora for tests and benchmarks.
//!
//! The generator emits "families" of TAPs that share everything except one
//! constant token. Training twins guarantee that retrieval (with
//! self-exclusion) finds a prototype exactly one edit away, and because every
//! constant is unique to its TAP, a frequency-thresholded vocabulary drops
//! them all: the only way to produce the right constant is to copy it out of
//! the edit script. Equals-style families put the constant in the assertion
//! (so a verbatim prototype copy is wrong), while True/False/NotNull families
//! keep it out (so the prototype is already correct) — giving an evaluation
//! split with both retrieval-fixable and retrieval-sufficient cases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::corpus::{Dataset, Tap};
use crate::lexer::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    EqualsInt,
    True,
    EqualsString,
    False,
    NotNull,
}

const WHEEL: [Kind; 5] = [
    Kind::EqualsInt,
    Kind::True,
    Kind::EqualsString,
    Kind::False,
    Kind::NotNull,
];

const VERBS: [&str; 8] = [
    "compute", "scale", "merge", "parse", "fold", "hash", "pack", "split",
];
const NOUNS: [&str; 8] = [
    "Total", "Value", "Count", "Digits", "Range", "Key", "Bits", "Words",
];

fn kind_of(family: usize) -> Kind {
    WHEEL[family % WHEEL.len()]
}

fn method_name(family: usize) -> String {
    let mut name = format!("{}{}", VERBS[family % 8], NOUNS[(family / 8) % 8]);
    if family >= 64 {
        name.push_str(&(family / 64).to_string());
    }
    name
}

/// Receiver variable and result variable for a family's focal template.
fn fixtures(kind: Kind) -> (&'static str, &'static str) {
    match kind {
        Kind::EqualsInt => ("v", "calc"),
        Kind::True => ("flag", "checker"),
        Kind::EqualsString => ("s", "fmt"),
        Kind::False => ("empty", "store"),
        Kind::NotNull => ("item", "repo"),
    }
}

fn constant_token(kind: Kind, n: u64) -> String {
    match kind {
        Kind::EqualsString => format!("\"id{n}\""),
        _ => n.to_string(),
    }
}

fn make_tap(id: u64, family: usize, raw_constant: u64) -> Tap {
    let kind = kind_of(family);
    let (var, recv) = fixtures(kind);
    let constant = constant_token(kind, raw_constant);
    let focal_test: TokenSeq = [
        var,
        "=",
        recv,
        ".",
        &method_name(family),
        "(",
        &constant,
        ")",
        ";",
    ]
    .iter()
    .map(|t| t.to_string())
    .collect();
    let assertion: TokenSeq = match kind {
        Kind::EqualsInt | Kind::EqualsString => {
            vec!["assertEquals", "(", &constant, ",", var, ")"]
        }
        Kind::True => vec!["assertTrue", "(", var, ")"],
        Kind::False => vec!["assertFalse", "(", var, ")"],
        Kind::NotNull => vec!["assertNotNull", "(", var, ")"],
    }
    .into_iter()
    .map(str::to_string)
    .collect();
    Tap {
        id,
        focal_test,
        assertion,
    }
}

/// Draws `take` distinct values from `start..start+len` in shuffled order.
fn shuffled_pool(start: u64, len: usize, take: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut pool: Vec<u64> = (start..start + len as u64).collect();
    for i in (1..pool.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool
}

/// Builds a dataset of near-duplicate TAPs.
///
/// The train split holds `train_pairs` twin pairs (two TAPs differing only in
/// their constant token), and the validation/test splits hold fresh instances
/// of those same families with never-seen constants, so every split retrieves
/// a one-edit-away prototype from the train corpus. Constant pools for the
/// three splits are disjoint. The same seed always yields the same dataset.
///
/// With `train_pairs = 0` there are no families to instantiate, so all three
/// splits come back empty.
pub fn near_duplicate_dataset(
    train_pairs: usize,
    validation: usize,
    test: usize,
    seed: u64,
) -> Dataset {
    let mut dataset = Dataset {
        name: format!("near-duplicate-{seed}"),
        ..Dataset::default()
    };
    if train_pairs == 0 {
        return dataset;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_width = (4 * train_pairs).max(400);
    let val_width = (4 * validation).max(400);
    let test_width = (4 * test).max(400);
    let train_consts = shuffled_pool(100, train_width, 2 * train_pairs, &mut rng);
    let val_start = 100 + train_width as u64;
    let val_consts = shuffled_pool(val_start, val_width, validation, &mut rng);
    let test_start = val_start + val_width as u64;
    let test_consts = shuffled_pool(test_start, test_width, test, &mut rng);

    let mut next_id = 0u64;
    let mut fresh_id = || {
        let id = next_id;
        next_id += 1;
        id
    };
    for family in 0..train_pairs {
        dataset
            .train
            .push(make_tap(fresh_id(), family, train_consts[2 * family]));
        dataset
            .train
            .push(make_tap(fresh_id(), family, train_consts[2 * family + 1]));
    }
    for (k, &constant) in val_consts.iter().enumerate() {
        dataset
            .validation
            .push(make_tap(fresh_id(), k % train_pairs, constant));
    }
    for (k, &constant) in test_consts.iter().enumerate() {
        dataset
            .test
            .push(make_tap(fresh_id(), k % train_pairs, constant));
    }
    dataset
}
