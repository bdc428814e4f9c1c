use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use cyclelife_core::autodiff::{Tape, Tensor};
use cyclelife_core::datapipe::{
    build_features, clean_cycle, reduce_cycle, select_features, OutlierConfig, PipelineOptions,
    Task,
};
use cyclelife_core::seqmodel::{build_classifier, build_predictor, run_lstm, LstmParams};
use cyclelife_core::synthgen::{generate_corpus, SynthConfig};
use cyclelife_core::trainer::{train, TrainConfig};

fn filled(shape: &[usize], phase: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|i| 0.1 * ((i as f64) * 0.37 + phase).sin())
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let a = filled(&[128, 64], 0.0);
    let b = filled(&[64, 128], 1.0);
    c.bench_function("matmul_128x64x128_fwd_bwd", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let x = tape.param(a.clone());
            let y = tape.param(b.clone());
            let z = tape.matmul(x, y).unwrap();
            let s = tape.sum(z);
            black_box(tape.backward(s).unwrap());
        })
    });
}

fn lstm(c: &mut Criterion) {
    let mut params = LstmParams::zeros(15, 32);
    for (k, t) in [
        &mut params.w_ii,
        &mut params.w_if,
        &mut params.w_ig,
        &mut params.w_io,
        &mut params.w_hi,
        &mut params.w_hf,
        &mut params.w_hg,
        &mut params.w_ho,
    ]
    .into_iter()
    .enumerate()
    {
        *t = filled(t.shape(), k as f64);
    }
    let seq = filled(&[32, 5, 15], 2.0);
    c.bench_function("lstm_b32_t5_fwd_bwd", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let p = params.register(&mut tape, true);
            let x = tape.constant(seq.clone());
            let steps = cyclelife_core::seqmodel::unstack_time(&mut tape, x).unwrap();
            let h0 = tape.constant(Tensor::zeros(&[32, 32]));
            let c0 = tape.constant(Tensor::zeros(&[32, 32]));
            let out = run_lstm(&mut tape, &steps, &p, h0, c0).unwrap();
            let s = tape.sum(out.h);
            black_box(tape.backward(s).unwrap());
        })
    });
}

fn models(c: &mut Criterion) {
    let classifier = build_classifier(15, true, 0).unwrap();
    let batch = filled(&[79, 5, 15], 3.0);
    c.bench_function("classifier_predict_79", |bench| {
        bench.iter(|| black_box(classifier.predict(&batch).unwrap()))
    });

    let predictor = build_predictor(15, 0).unwrap();
    let batch = filled(&[16, 100, 15], 4.0);
    c.bench_function("predictor_predict_16", |bench| {
        bench.iter(|| black_box(predictor.predict(&batch).unwrap()))
    });
}

fn pipeline(c: &mut Criterion) {
    let cfg = SynthConfig {
        n_batteries: 4,
        stored_cycles: Some(5),
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let cycle = corpus[0].cycles[0].clone();
    let outliers = OutlierConfig::default();
    c.bench_function("clean_and_reduce_cycle", |bench| {
        bench.iter(|| {
            let cleaned = clean_cycle(black_box(&cycle), &outliers).unwrap();
            black_box(reduce_cycle(&cleaned).unwrap())
        })
    });
}

fn training_epoch(c: &mut Criterion) {
    let cfg = SynthConfig {
        n_batteries: 40,
        points_per_cycle: 50,
        stored_cycles: Some(5),
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let opts = PipelineOptions::default();
    let feats = build_features(
        &corpus[..32],
        Task::Classify,
        &select_features(),
        None,
        &opts,
    )
    .unwrap();
    let val = build_features(
        &corpus[32..],
        Task::Classify,
        &select_features(),
        Some(&feats.norm),
        &opts,
    )
    .unwrap();
    let train_cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    c.bench_function("classifier_epoch_32", |bench| {
        bench.iter_batched(
            || build_classifier(15, false, 0).unwrap(),
            |model| black_box(train(model, &feats, &val, &train_cfg).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, matmul, lstm, models, pipeline, training_epoch);
criterion_main!(benches);
