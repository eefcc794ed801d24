use asc_core::audio::{default_recipes, synth_scene_clip};
use asc_core::features::{feature_divergence, log_mel, FeatureParams};
use asc_core::quality::odg_proxy;
use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use std::hint::black_box;

fn features(c: &mut Criterion) {
    let clip = synth_scene_clip(&default_recipes()[1], 3.0, 0).unwrap();
    let other = synth_scene_clip(&default_recipes()[6], 3.0, 0).unwrap();
    let p = FeatureParams::default();
    let mut group = c.benchmark_group("features");
    group.throughput(Throughput::Elements(clip.len() as u64));
    group.bench_function("log_mel/3s", |b| {
        b.iter(|| log_mel(black_box(&clip), &p).unwrap())
    });
    let (a, o) = (log_mel(&clip, &p).unwrap(), log_mel(&other, &p).unwrap());
    group.bench_function("divergence/3s", |b| {
        b.iter(|| feature_divergence(black_box(&a), black_box(&o)).unwrap())
    });
    group.sample_size(20);
    group.bench_function("odg_proxy/3s", |b| {
        b.iter(|| odg_proxy(black_box(&clip), black_box(&other)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, features);
criterion_main!(benches);
