//! Benchmarks for the pipeline's hot paths: prototype retrieval (inverted
//! index vs. linear scan), edit-script alignment, and the model's encoder
//! and decoder steps at full configured dimensions.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use assertedit::editseq::align;
use assertedit::lexer::{dedup_bag, TokenSeq};
use assertedit::model::{
    build_pairs, decode_step, encode, generate, init_state, GenConfig, ModelDims, ModelParams,
    TrainingPair, Vocab,
};
use assertedit::num::Tape;
use assertedit::retrieval::{Coefficient, RetrievalIndex};
use assertedit::synth::near_duplicate_dataset;

fn bench_retrieval(c: &mut Criterion) {
    let ds = near_duplicate_dataset(250, 0, 0, 11);
    let index = RetrievalIndex::build(&ds.train, Coefficient::Jaccard).unwrap();
    let query = dedup_bag(&ds.train[123].focal_test);
    let mut group = c.benchmark_group("retrieval_500_taps");
    group.bench_function("inverted", |b| {
        b.iter(|| index.retrieve_top1(black_box(&query), Some(123)).unwrap())
    });
    group.bench_function("linear", |b| {
        b.iter(|| {
            index
                .retrieve_top1_linear(black_box(&query), Some(123))
                .unwrap()
        })
    });
    group.finish();
}

fn bench_align(c: &mut Criterion) {
    // Two ~120-token sequences sharing a long skeleton with scattered edits.
    let base: TokenSeq = (0..120).map(|i| format!("tok{}", i % 40)).collect();
    let mut edited = base.clone();
    for i in (7..edited.len()).step_by(13) {
        edited[i] = format!("changed{i}");
    }
    edited.insert(60, "extra".to_string());
    c.bench_function("align_120_tokens", |b| {
        b.iter(|| align(black_box(&base), black_box(&edited)))
    });
}

/// One ready-to-encode training pair plus matching parameters.
fn model_fixture() -> (ModelParams<f32>, Vocab, TrainingPair) {
    let ds = near_duplicate_dataset(8, 0, 0, 5);
    let seqs = ds.train.iter().flat_map(|t| [&t.focal_test, &t.assertion]);
    let vocab = Vocab::build(seqs, 1, None);
    let index = RetrievalIndex::build(&ds.train, Coefficient::Jaccard).unwrap();
    let pairs = build_pairs(&ds.train, &index, &vocab, 512, true).unwrap();
    let dims = ModelDims::defaults(vocab.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::<f32>::init(dims, false, &mut rng).unwrap();
    (params, vocab, pairs.into_iter().next().unwrap())
}

fn bench_model(c: &mut Criterion) {
    let (params, vocab, pair) = model_fixture();
    let mut group = c.benchmark_group("model_default_dims");
    group.sample_size(10);
    group.bench_function("encode", |b| {
        b.iter_batched(
            Tape::new,
            |mut tape| {
                let pv = params.register(&mut tape);
                encode(&mut tape, &pv, black_box(&pair.input), None).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("decode_step", |b| {
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let enc = encode(&mut tape, &pv, &pair.input, None).unwrap();
        let state = init_state(&mut tape, &pv, &enc).unwrap();
        b.iter(|| {
            decode_step(
                &mut tape,
                &pv,
                &pair.input,
                &enc,
                black_box(&state),
                2,
                None,
                None,
            )
            .unwrap()
        })
    });
    group.bench_function("generate_greedy", |b| {
        let cfg = GenConfig {
            max_len: 8,
            beam: 1,
        };
        b.iter(|| generate(&params, &vocab, black_box(&pair.input), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_retrieval, bench_align, bench_model);
criterion_main!(benches);
