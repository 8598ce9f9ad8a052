//! Release gate: one integration test per acceptance criterion, so
//! `cargo test --test acceptance` prints a single pass/fail line for each.
//!
//! Every check here is either an independent re-implementation (brute-force
//! oracles, a second BLEU), a hand-computed fixture, or an end-to-end run of
//! the shipped binary; nothing asserts the library against itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use assertedit::corpus::{DataFormat, Tap};
use assertedit::editseq::{
    align, edit_distance, project_query, project_retrieved, Edit, EditAction,
};
use assertedit::eval::{corpus_bleu, BUCKET_LABELS};
use assertedit::lexer::dedup_bag;
use assertedit::model::{
    build_input, build_pairs, decode_step, encode, generate, init_state, GateOverride, GenConfig,
    ModelDims, ModelError, ModelInput, ModelParams, TrainConfig, Trainer, Vocab, SOS,
};
use assertedit::num::{grad_check, NumError, Tape, TensorData};
use assertedit::retrieval::{Coefficient, RetrievalIndex};
use assertedit::synth::near_duplicate_dataset;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

// ---------------------------------------------------------------- helpers

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Uniform draw from `0..n` (modulo bias is irrelevant at test scale).
fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn pick(rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
    pool[below(rng, pool.len())].to_string()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_assertedit"))
}

// ------------------------------------------------- 1. gradient fidelity

/// Pipe a model failure into the numeric error type `grad_check` expects.
fn num_err(err: ModelError) -> NumError {
    NumError::InvalidArg {
        op: "decode-loss",
        message: err.to_string(),
    }
}

/// A small example whose single-step loss touches every parameter tensor:
/// the target token is simultaneously in-vocabulary, present in the
/// prototype assertion, and offered as a copyable edit token, so all three
/// mixture components and both gates carry gradient.
fn grad_fixture(seed: u64) -> (ModelParams<f64>, ModelInput, usize) {
    let corpus = vec![toks("assertEquals ( a , b ) ; x y")];
    let vocab = Vocab::build(&corpus, 1, None);
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: 5,
        action_embed: 3,
        enc_hidden: 4,
        dec_hidden: 6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::<f64>::init(dims, false, &mut rng).unwrap();
    let assertion = toks("assertEquals ( NEW1 )");
    let edits = vec![
        Edit::equal("x"),
        Edit::replace("a", "NEW2"),
        Edit::insert("("),
        Edit::delete("b"),
    ];
    let input = build_input(&assertion, &edits, &vocab, 512).unwrap();
    let target = vocab.id("(").unwrap();
    (params, input, target)
}

/// Scalar loss of one teacher-forced decode step from SOS.
fn one_step_loss(
    params: &ModelParams<f64>,
    input: &ModelInput,
    target: usize,
) -> Result<f64, NumError> {
    let mut tape = Tape::<f64>::new();
    let pv = params.register(&mut tape);
    let enc = encode(&mut tape, &pv, input, None).map_err(num_err)?;
    let state = init_state(&mut tape, &pv, &enc).map_err(num_err)?;
    let out =
        decode_step(&mut tape, &pv, input, &enc, &state, SOS, None, None).map_err(num_err)?;
    let loss = tape.neg_log_pick(out.mixture, target)?;
    Ok(tape.value(loss).data()[0])
}

/// Reverse-mode gradients of the same loss for every named tensor.
fn analytic_grads(
    params: &ModelParams<f64>,
    input: &ModelInput,
    target: usize,
) -> BTreeMap<&'static str, TensorData<f64>> {
    let mut tape = Tape::<f64>::new();
    let pv = params.register(&mut tape);
    let enc = encode(&mut tape, &pv, input, None).unwrap();
    let state = init_state(&mut tape, &pv, &enc).unwrap();
    let out = decode_step(&mut tape, &pv, input, &enc, &state, SOS, None, None).unwrap();
    let loss = tape.neg_log_pick(out.mixture, target).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let shapes: BTreeMap<&'static str, Vec<usize>> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    pv.named()
        .into_iter()
        .map(|(name, var)| {
            let g = grads
                .take(var)
                .unwrap_or_else(|| TensorData::zeros(shapes[name].clone()));
            (name, g)
        })
        .collect()
}

#[test]
fn criterion_1_gradient_fidelity() {
    let start = Instant::now();
    for seed in 0..5u64 {
        let (params, input, target) = grad_fixture(seed);
        let analytic = analytic_grads(&params, &input, target);

        // Layer groups: everything sharing a name prefix before the first
        // dot (an LSTM's wx/wh/b, a linear layer's w/b) is one layer.
        let mut groups: BTreeMap<&str, Vec<&'static str>> = BTreeMap::new();
        for (name, _) in params.named() {
            let key = name.split('.').next().unwrap();
            groups.entry(key).or_default().push(name);
        }

        let tensors: BTreeMap<&'static str, TensorData<f64>> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let mut checked = 0usize;
        for (layer, members) in &groups {
            let theta: Vec<TensorData<f64>> =
                members.iter().map(|m| tensors[m].clone()).collect();
            let grads: Vec<TensorData<f64>> =
                members.iter().map(|m| analytic[m].clone()).collect();
            let report = grad_check(
                &theta,
                &grads,
                |t| {
                    let mut p = params.clone();
                    for (m, replacement) in members.iter().zip(t) {
                        for (name, slot) in p.named_mut() {
                            if name == *m {
                                *slot = replacement.clone();
                            }
                        }
                    }
                    one_step_loss(&p, &input, target)
                },
                1e-5,
            )
            .unwrap();
            assert!(
                report.ok(1e-4),
                "seed {seed}, layer {layer}: max relative error {:.3e} at {:?}",
                report.max_rel_err,
                report.worst,
            );
            checked += report.checked;
        }
        assert_eq!(checked, params.param_count(), "seed {seed}: coverage gap");
    }
    assert!(
        start.elapsed() < Duration::from_secs(60),
        "gradient check exceeded a minute: {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------- 2. distribution sanity

const POOL: [&str; 12] = [
    "assertEquals",
    "assertTrue",
    "(",
    ")",
    ",",
    ";",
    "a",
    "b",
    "x",
    "y",
    "foo",
    "bar",
];

/// Random vocabulary, dimensions, parameters, and model input; the edit
/// script always offers at least one copyable token so the edit-copy
/// distribution is live.
fn random_case(case: u64, rng: &mut ChaCha8Rng) -> (ModelParams<f64>, Vocab, ModelInput) {
    let corpus = vec![(0..8 + below(rng, 9))
        .map(|_| pick(rng, &POOL))
        .collect::<Vec<_>>()];
    let vocab = Vocab::build(&corpus, 1, None);
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: 2 + below(rng, 4),
        action_embed: 2 + below(rng, 3),
        enc_hidden: 2 + below(rng, 4),
        dec_hidden: 2 + below(rng, 5),
    };
    let params = ModelParams::<f64>::init(dims, false, rng).unwrap();

    let mut fresh = 0u32;
    let mut name = |rng: &mut ChaCha8Rng| {
        if below(rng, 4) == 0 {
            fresh += 1;
            format!("OOV{case}_{fresh}")
        } else {
            pick(rng, &POOL)
        }
    };
    let assertion: Vec<String> = (0..1 + below(rng, 5)).map(|_| name(rng)).collect();
    let mut edits: Vec<Edit> = (0..1 + below(rng, 6))
        .map(|_| match below(rng, 4) {
            0 => Edit::equal(&name(rng)),
            1 => Edit::replace(&name(rng), &name(rng)),
            2 => Edit::insert(&name(rng)),
            _ => Edit::delete(&name(rng)),
        })
        .collect();
    if edits.iter().all(|e| e.query.is_none()) {
        edits.push(Edit::equal("x"));
    }
    let input = build_input(&assertion, &edits, &vocab, 512).unwrap();
    assert!(input.has_copyable_slot());
    (params, vocab, input)
}

fn run_step(
    params: &ModelParams<f64>,
    input: &ModelInput,
    prev: usize,
    gates: Option<GateOverride>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut tape = Tape::<f64>::new();
    let pv = params.register(&mut tape);
    let enc = encode(&mut tape, &pv, input, None).unwrap();
    let state = init_state(&mut tape, &pv, &enc).unwrap();
    let out = decode_step(&mut tape, &pv, input, &enc, &state, prev, None, gates).unwrap();
    (
        tape.value(out.p_vocab).data().to_vec(),
        tape.value(out.p_ass).data().to_vec(),
        tape.value(out.p_ft).data().to_vec(),
        tape.value(out.mixture).data().to_vec(),
    )
}

fn assert_distribution(label: &str, case: u64, p: &[f64]) {
    assert!(
        p.iter().all(|&v| v >= 0.0),
        "case {case}: negative mass in {label}"
    );
    let sum: f64 = p.iter().sum();
    assert!(
        (sum - 1.0).abs() < 1e-6,
        "case {case}: {label} sums to {sum}"
    );
}

#[test]
fn criterion_2_distribution_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000u64 {
        let (params, vocab, input) = random_case(case, &mut rng);
        let prev = below(&mut rng, vocab.len());
        let total = vocab.len() + input.ext.len();

        let (p_vocab, p_ass, p_ft, mixture) = run_step(&params, &input, prev, None);
        assert_eq!(p_vocab.len(), vocab.len());
        assert_eq!(mixture.len(), total);
        assert_distribution("P_vocab", case, &p_vocab);
        assert_distribution("P_ass", case, &p_ass);
        assert_distribution("P_ft", case, &p_ft);
        assert_distribution("mixture", case, &mixture);

        // Pure prototype copy: mass may only sit on prototype tokens.
        let (_, _, _, proto) = run_step(
            &params,
            &input,
            prev,
            Some(GateOverride {
                gamma: Some(0.0),
                theta: Some(1.0),
            }),
        );
        let allowed: BTreeSet<usize> = input.ass_ext_ids.iter().copied().collect();
        for (slot, &p) in proto.iter().enumerate() {
            if !allowed.contains(&slot) {
                assert_eq!(p, 0.0, "case {case}: prototype copy leaked to slot {slot}");
            }
        }
        assert_distribution("prototype mixture", case, &proto);

        // Pure edit copy: mass may only sit on the script's query tokens.
        let (_, _, _, ft) = run_step(
            &params,
            &input,
            prev,
            Some(GateOverride {
                gamma: Some(0.0),
                theta: Some(0.0),
            }),
        );
        let allowed: BTreeSet<usize> = input.copy_slot_ext_ids.iter().flatten().copied().collect();
        for (slot, &p) in ft.iter().enumerate() {
            if !allowed.contains(&slot) {
                assert_eq!(p, 0.0, "case {case}: edit copy leaked to slot {slot}");
            }
        }
        assert_distribution("edit-copy mixture", case, &ft);
    }
}

// ------------------------------------------------- 3. retrieval oracle

/// Independent linear scan mirroring the documented contract: highest
/// score wins, ties and zero overlap resolve to the lowest id.
fn oracle_top1(
    taps: &[Tap],
    query: &BTreeSet<String>,
    exclude: Option<u64>,
    coeff: Coefficient,
) -> u64 {
    let mut best: Option<(f64, u64)> = None;
    for tap in taps {
        if Some(tap.id) == exclude {
            continue;
        }
        let bag: BTreeSet<&str> = tap.focal_test.iter().map(String::as_str).collect();
        let inter = query.iter().filter(|t| bag.contains(t.as_str())).count();
        let denom = match coeff {
            Coefficient::Jaccard => query.len() + bag.len() - inter,
            Coefficient::Dice => query.len() + bag.len(),
            Coefficient::Overlap => query.len().min(bag.len()),
        };
        let score = if denom == 0 {
            0.0
        } else {
            inter as f64 / denom as f64
        };
        // Ascending ids plus a strict comparison keep the lowest id on ties.
        if best.is_none() || score > best.unwrap().0 {
            best = Some((score, tap.id));
        }
    }
    best.unwrap().1
}

fn random_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tap> {
    let pool: Vec<String> = (0..40).map(|i| format!("t{i}")).collect();
    let pool_refs: Vec<&str> = pool.iter().map(String::as_str).collect();
    (0..n)
        .map(|id| Tap {
            id: id as u64,
            focal_test: (0..1 + below(rng, 15))
                .map(|_| pick(rng, &pool_refs))
                .collect(),
            assertion: toks("assertTrue ( t0 )"),
        })
        .collect()
}

#[test]
fn criterion_3_retrieval_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool: Vec<String> = (0..40).map(|i| format!("t{i}")).collect();
    let pool_refs: Vec<&str> = pool.iter().map(String::as_str).collect();
    for _ in 0..100 {
        let n = 1 + below(&mut rng, 1000);
        let taps = random_corpus(&mut rng, n);
        let indexes: Vec<RetrievalIndex> = Coefficient::ALL
            .iter()
            .map(|&c| RetrievalIndex::build(&taps, c).unwrap())
            .collect();
        for _ in 0..3 {
            let query_seq: Vec<String> =
                (0..1 + below(&mut rng, 15)).map(|_| pick(&mut rng, &pool_refs)).collect();
            let query = dedup_bag(&query_seq);
            let exclude = if n >= 2 && below(&mut rng, 2) == 0 {
                Some(below(&mut rng, n) as u64)
            } else {
                None
            };
            let mut winners = Vec::new();
            for (coeff, index) in Coefficient::ALL.iter().zip(&indexes) {
                let got = index.retrieve_top1(&query, exclude).unwrap();
                let want = oracle_top1(&taps, &query, exclude, *coeff);
                assert_eq!(
                    got.tap_id, want,
                    "{coeff:?} disagreed with the linear oracle (n={n})"
                );
                winners.push(got.tap_id);
            }
            // Jaccard and its unscaled-Dice monotone transform must agree.
            assert_eq!(winners[0], winners[1], "Jaccard and Dice winners differ");
        }
    }
}

// ------------------------------------------------- 4. diff round-trip

/// Memo-free recursive edit distance; exponential in the mismatch count.
fn naive_distance(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if a[0] == b[0] {
        return naive_distance(&a[1..], &b[1..]);
    }
    let replace = naive_distance(&a[1..], &b[1..]);
    let delete = naive_distance(&a[1..], b);
    let insert = naive_distance(a, &b[1..]);
    1 + replace.min(delete).min(insert)
}

fn random_seq(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[&str]) -> Vec<String> {
    (0..below(rng, max_len + 1))
        .map(|_| pick(rng, alphabet))
        .collect()
}

/// Applies a handful of random token edits to `base`.
fn mutate(rng: &mut ChaCha8Rng, base: &[String], alphabet: &[&str]) -> Vec<String> {
    let mut out = base.to_vec();
    for _ in 0..below(rng, 7) {
        match below(rng, 3) {
            0 if !out.is_empty() => {
                let at = below(rng, out.len());
                out[at] = pick(rng, alphabet);
            }
            1 if !out.is_empty() => {
                let at = below(rng, out.len());
                out.remove(at);
            }
            _ => {
                let at = below(rng, out.len() + 1);
                out.insert(at, pick(rng, alphabet));
            }
        }
    }
    out
}

#[test]
fn criterion_4_alignment_round_trip_and_distance_oracle() {
    let small = ["w0", "w1", "w2"];
    let wide = ["w0", "w1", "w2", "w3", "w4", "w5"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut oracle_pairs = 0usize;
    for i in 0..10_000 {
        let (a, b) = if i % 2 == 0 {
            let base = random_seq(&mut rng, 20, &wide);
            let edited = mutate(&mut rng, &base, &wide);
            (base, edited)
        } else {
            (
                random_seq(&mut rng, 20, &small),
                random_seq(&mut rng, 20, &small),
            )
        };

        let edits = align(&a, &b);
        assert_eq!(project_retrieved(&edits), a, "left projection broke");
        assert_eq!(project_query(&edits), b, "right projection broke");
        assert!(
            align(&a, &a)
                .iter()
                .all(|e| matches!(e.action, EditAction::Equal)),
            "self-alignment emitted a non-Equal action"
        );

        if a.len() <= 12 && b.len() <= 12 {
            assert_eq!(
                edit_distance(&a, &b),
                naive_distance(&a, &b),
                "distance mismatch for {a:?} vs {b:?}"
            );
            oracle_pairs += 1;
        }
    }
    assert!(oracle_pairs >= 1000, "only {oracle_pairs} oracle pairs");
}

// --------------------------------------------------- 5. BLEU fixtures

/// Second BLEU implementation, written against the textbook definition.
fn reference_bleu(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, reference) in pairs {
            let mut ref_counts: BTreeMap<&[String], usize> = BTreeMap::new();
            for w in reference.windows(n) {
                *ref_counts.entry(w).or_default() += 1;
            }
            let mut cand_counts: BTreeMap<&[String], usize> = BTreeMap::new();
            for w in cand.windows(n) {
                *cand_counts.entry(w).or_default() += 1;
            }
            for (w, c) in cand_counts {
                matched += c.min(ref_counts.get(w).copied().unwrap_or(0));
            }
            total += cand.len().saturating_sub(n - 1);
        }
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c: usize = pairs.iter().map(|(cand, _)| cand.len()).sum();
    let r: usize = pairs.iter().map(|(_, reference)| reference.len()).sum();
    let brevity = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    100.0 * brevity * (log_sum / 4.0).exp()
}

#[test]
fn criterion_5_bleu_fixtures() {
    // Hand-worked two-sentence corpus: modified precisions 9/10, 6/8, 3/6,
    // 1/4 with no length penalty give 100·(0.9·0.75·0.5·0.25)^(1/4).
    let preds = vec![toks("the cat is on the mat"), toks("a b c d")];
    let refs = vec![toks("the cat sat on the mat"), toks("a b c d")];
    let got = corpus_bleu(&preds, &refs).unwrap();
    assert!(
        (got - 53.89561679446264).abs() < 0.01,
        "two-sentence fixture scored {got}"
    );

    // A candidate with no 4-gram overlap scores exactly zero.
    let got = corpus_bleu(&[toks("a b c d e")], &[toks("a b c e d")]).unwrap();
    assert_eq!(got, 0.0, "missing 4-grams must zero the score");

    // Identical corpora score exactly 100.
    let got = corpus_bleu(&refs, &refs).unwrap();
    assert_eq!(got, 100.0, "identical corpora scored {got}");

    // Short candidate with perfect precisions: pure brevity penalty
    // 100·e^(1−6/4).
    let got = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e f")]).unwrap();
    assert!(
        (got - 60.653065971263345).abs() < 0.01,
        "brevity fixture scored {got}"
    );

    // Random corpora agree with the independent implementation.
    let alphabet = ["u", "v", "w", "x", "y", "z"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..1 + below(&mut rng, 8))
            .map(|_| {
                (
                    (0..1 + below(&mut rng, 10)).map(|_| pick(&mut rng, &alphabet)).collect(),
                    (0..1 + below(&mut rng, 10)).map(|_| pick(&mut rng, &alphabet)).collect(),
                )
            })
            .collect();
        let preds: Vec<Vec<String>> = pairs.iter().map(|(c, _)| c.clone()).collect();
        let refs: Vec<Vec<String>> = pairs.iter().map(|(_, r)| r.clone()).collect();
        let got = corpus_bleu(&preds, &refs).unwrap();
        let want = reference_bleu(&pairs);
        assert!((got - want).abs() < 1e-9, "got {got}, reference {want}");
    }
}

// ------------------------------------------------ 6. overfit experiment

#[test]
fn criterion_6_overfit_beats_retrieval_on_held_out_twins() {
    let start = Instant::now();
    let ds = near_duplicate_dataset(25, 10, 20, 42);
    let seqs: Vec<Vec<String>> = ds
        .train
        .iter()
        .flat_map(|t| [t.focal_test.clone(), t.assertion.clone()])
        .collect();
    let vocab = Vocab::build(&seqs, 3, None);
    let index = RetrievalIndex::build(&ds.train, Coefficient::Jaccard).unwrap();
    let train_pairs = build_pairs(&ds.train, &index, &vocab, 512, true).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params =
        ModelParams::<f32>::init(ModelDims::defaults(vocab.len()), false, &mut rng).unwrap();
    let mut trainer = Trainer::new(params, TrainConfig::default());

    let mut exact = 0.0;
    let mut epochs = 0usize;
    while epochs < 200 {
        trainer.run_epoch(&train_pairs).unwrap();
        epochs += 1;
        if epochs % 3 == 0 || epochs == 200 {
            exact = trainer.training_exact_match(&train_pairs, &vocab).unwrap();
            if exact >= 0.9 {
                break;
            }
        }
    }
    assert!(
        exact >= 0.9,
        "training exact match only {exact:.2} after {epochs} epochs"
    );
    assert!(
        start.elapsed() < Duration::from_secs(600),
        "training took {:?}",
        start.elapsed()
    );

    // Held-out near-duplicates: the editor must match or beat copying the
    // retrieved assertion verbatim.
    let params = trainer.into_params();
    let test_pairs = build_pairs(&ds.test, &index, &vocab, 512, false).unwrap();
    let gen_cfg = GenConfig::default();
    let mut model_hits = 0usize;
    let mut retrieval_hits = 0usize;
    for (pair, tap) in test_pairs.iter().zip(&ds.test) {
        assert_eq!(pair.id, tap.id);
        let out = generate(&params, &vocab, &pair.input, &gen_cfg).unwrap();
        if out.tokens == tap.assertion {
            model_hits += 1;
        }
        let hit = index.retrieve_top1(&dedup_bag(&tap.focal_test), None).unwrap();
        if hit.retrieved_assertion == tap.assertion {
            retrieval_hits += 1;
        }
    }
    assert!(
        model_hits >= retrieval_hits,
        "model {model_hits}/{} vs retrieval {retrieval_hits}/{}",
        ds.test.len(),
        ds.test.len()
    );
}

// --------------------------------------------- 7. analysis methodology

#[test]
fn criterion_7_analyze_emits_the_bucket_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    near_duplicate_dataset(25, 10, 20, 7)
        .save_dir(&data, DataFormat::Jsonl)
        .unwrap();

    let output = bin()
        .args(["analyze", "--dataset"])
        .arg(&data)
        .args(["--split", "test"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();

    let histogram = report["edit_distance"].as_object().unwrap();
    let keys: BTreeSet<&str> = histogram.keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = BUCKET_LABELS.iter().copied().collect();
    assert_eq!(keys, expected, "bucket labels diverged");
    let total: u64 = histogram.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 20, "buckets must partition the corpus");
    assert_eq!(report["total"].as_u64(), Some(20));
}

// --------------------------------------------------- 8. determinism

fn train_and_generate(root: &Path, data: &Path, config: &Path, queries: &Path) -> Vec<u8> {
    fs::create_dir_all(root).unwrap();
    let checkpoint = root.join("model.ckpt");
    let predictions = root.join("predictions.txt");

    let output = bin()
        .arg("--config")
        .arg(config)
        .args(["train", "--dataset"])
        .arg(data)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--out")
        .arg(root.join("train.json"))
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let output = bin()
        .arg("--config")
        .arg(config)
        .args(["generate", "--dataset"])
        .arg(data)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--batch")
        .arg(queries)
        .arg("--pretokenized")
        .arg("--out")
        .arg(&predictions)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "generate failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    fs::read(&predictions).unwrap()
}

#[test]
fn criterion_8_repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ds = near_duplicate_dataset(6, 2, 4, 9);
    ds.save_dir(&data, DataFormat::Jsonl).unwrap();

    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "embed_dim": 16,
  "action_embed_dim": 4,
  "enc_hidden": 8,
  "dec_hidden": 16,
  "max_epochs": 2,
  "vocab_min_count": 3,
  "max_decode_len": 12,
  "seed": 7
}"#,
    )
    .unwrap();

    let queries = dir.path().join("queries.txt");
    let lines: Vec<String> = ds.test.iter().map(|t| t.focal_test.join(" ")).collect();
    fs::write(&queries, lines.join("\n") + "\n").unwrap();

    let first = train_and_generate(&dir.path().join("run1"), &data, &config, &queries);
    let second = train_and_generate(&dir.path().join("run2"), &data, &config, &queries);
    assert!(!first.is_empty(), "predictions were empty");
    assert_eq!(first, second, "prediction files differ between runs");

    let ck1 = fs::read(dir.path().join("run1/model.ckpt")).unwrap();
    let ck2 = fs::read(dir.path().join("run2/model.ckpt")).unwrap();
    assert_eq!(ck1, ck2, "checkpoints differ between runs");
}
