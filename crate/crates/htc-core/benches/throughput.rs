//! Batch-classification throughput: rayon runner vs the sequential
//! fallback, plus the fuzzy-resolution hot loop. Mock-backed, so the
//! numbers isolate harness overhead (rendering, resolution, scoring)
//! from network time.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use htc_core::client::{EchoOracle, LlmClient, RetryPolicy};
use htc_core::dataset::{Dataset, LabeledDocument};
use htc_core::normalize::resolve_label;
use htc_core::prompts::PromptTemplates;
use htc_core::strategies::{
    classify_batch_parallel, classify_batch_sequential, RunConfig,
};
use htc_core::taxonomy::Taxonomy;
use htc_core::Strategy;

fn shaped_dataset(shape: &[usize], n_test: usize) -> Dataset {
    let names: Vec<Vec<String>> = shape
        .iter()
        .enumerate()
        .map(|(d, n)| (0..*n).map(|i| format!("level{} node{}", d + 1, i)).collect())
        .collect();
    let leaves = shape[shape.len() - 1];
    let paths: Vec<Vec<String>> = (0..leaves)
        .map(|leaf| {
            let mut idx = leaf;
            let mut rev = vec![names[shape.len() - 1][leaf].clone()];
            for d in (0..shape.len() - 1).rev() {
                idx %= shape[d];
                rev.push(names[d][idx].clone());
            }
            rev.reverse();
            rev
        })
        .collect();
    let taxonomy = Taxonomy::build(&paths).unwrap();
    let mk = |i: usize| {
        let names = &paths[i % paths.len()];
        LabeledDocument {
            doc_id: format!("bench-{i}"),
            text: format!("benchmark passage number {i}"),
            gold_names: names.clone(),
            gold: taxonomy.lookup_path(names).unwrap(),
        }
    };
    Dataset {
        name: "bench".into(),
        train: (0..8).map(mk).collect(),
        test: (0..n_test).map(mk).collect(),
        taxonomy,
    }
}

fn bench_batch(c: &mut Criterion) {
    let dataset = shaped_dataset(&[6, 62, 309], 64);
    let client =
        LlmClient::new(Arc::new(EchoOracle::from_dataset(&dataset))).with_retry(RetryPolicy::none());
    let templates = PromptTemplates::default();

    let mut group = c.benchmark_group("classify_batch");
    group.sample_size(20);
    for strategy in [Strategy::Dl, Strategy::Tmh] {
        let mut cfg = RunConfig::new(strategy, 0, 7, "bench-model");
        cfg.concurrency = 4;
        group.bench_with_input(
            BenchmarkId::new("sequential", strategy.as_str()),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    classify_batch_sequential(
                        black_box(&dataset.test),
                        &dataset.taxonomy,
                        &templates,
                        &[],
                        &client,
                        cfg,
                    )
                })
            },
        );
        group.bench_with_input(
            BenchmarkId::new("parallel", strategy.as_str()),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    classify_batch_parallel(
                        black_box(&dataset.test),
                        &dataset.taxonomy,
                        &templates,
                        &[],
                        &client,
                        cfg,
                    )
                })
            },
        );
    }
    group.finish();
}

fn bench_resolution(c: &mut Criterion) {
    let dataset = shaped_dataset(&[6, 62, 309], 1);
    let leaves: Vec<String> =
        dataset.taxonomy.leaves().iter().map(|n| n.name.clone()).collect();
    c.bench_function("resolve_label/309_candidates", |b| {
        b.iter(|| resolve_label(black_box("level3 nodee 155"), black_box(&leaves)).unwrap())
    });
}

criterion_group!(benches, bench_batch, bench_resolution);
criterion_main!(benches);
