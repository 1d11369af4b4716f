use alexandria_bench::{sample_document, sample_text};
use alexandria_core::corpus::chunk_document;
use alexandria_core::overlap_analysis::plagiarism_score;
use alexandria_core::provenance::{jaccard, minhash_signature, shingle_set, DEFAULT_MINHASH_SEED};
use alexandria_core::ChunkPolicy;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn shingling(c: &mut Criterion) {
    let mut g = c.benchmark_group("shingle_set");
    for words in [250usize, 2_000] {
        let text = sample_text(words, 1);
        g.bench_with_input(BenchmarkId::from_parameter(words), &text, |b, t| {
            b.iter(|| shingle_set(black_box(t), 5))
        });
    }
    g.finish();
}

fn set_similarity(c: &mut Criterion) {
    let a = shingle_set(&sample_text(2_000, 1), 5);
    let b = shingle_set(&sample_text(2_000, 2), 5);
    c.bench_function("jaccard_2000w", |bch| {
        bch.iter(|| jaccard(black_box(&a), black_box(&b)))
    });

    let mut g = c.benchmark_group("minhash_signature");
    for k in [64usize, 128, 256] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |bch, &k| {
            bch.iter(|| minhash_signature(black_box(&a), k, DEFAULT_MINHASH_SEED).unwrap())
        });
    }
    g.finish();
}

fn chunking(c: &mut Criterion) {
    let doc = sample_document(40, 3);
    c.bench_function("chunk_token_range_4800w", |b| {
        b.iter(|| {
            chunk_document(
                black_box(&doc),
                ChunkPolicy::TokenRange { min: 200, max: 500 },
            )
            .unwrap()
        })
    });
    c.bench_function("chunk_word_target_4800w", |b| {
        b.iter(|| chunk_document(black_box(&doc), ChunkPolicy::WordTarget { words: 200 }).unwrap())
    });
}

fn plagiarism(c: &mut Criterion) {
    let source = sample_text(300, 4);
    let other = sample_text(300, 5);
    c.bench_function("plagiarism_300w", |b| {
        b.iter(|| plagiarism_score(black_box(&source), black_box(&other)))
    });
}

criterion_group!(benches, shingling, set_similarity, chunking, plagiarism);
criterion_main!(benches);
