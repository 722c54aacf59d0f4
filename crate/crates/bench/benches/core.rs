use criterion::{black_box, criterion_group, criterion_main, Criterion};

use vqid_core::decoders::DecoderKind;
use vqid_core::ensemble::{CompressionConstraint, MappingPolicy};
use vqid_core::exponents::{inner_divergence_min, zero_rate_closed_forms};
use vqid_core::simulation::{Simulator, SystemConfig};
use vqid_core::types::{enumerate_types, type_class_size, ConditionalKernel, Distribution, JointDistribution};

fn desk(n: usize) -> SystemConfig {
    SystemConfig::new(
        Distribution::new(vec![0.65, 0.35]).unwrap(),
        ConditionalKernel::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
        n,
        0.15,
        MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap(),
        CompressionConstraint::ExcessProbability { rate: 0.2, excess_exponent: 1.0 },
    )
    .unwrap()
}

fn types(c: &mut Criterion) {
    c.bench_function("type_class_sizes n=12 k=4", |b| {
        b.iter(|| enumerate_types(black_box(12), 4).unwrap().iter().map(|t| type_class_size(t).ln).sum::<f64>())
    });
}

fn inner(c: &mut Criterion) {
    let q_xy = JointDistribution::from_flat(3, 3, vec![0.2, 0.05, 0.05, 0.05, 0.2, 0.05, 0.1, 0.1, 0.2]).unwrap();
    let q_zy = ConditionalKernel::new(vec![vec![0.6, 0.2, 0.2], vec![0.3, 0.4, 0.3], vec![0.1, 0.1, 0.8]]).unwrap();
    let w = ConditionalKernel::new(vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]]).unwrap();
    c.bench_function("inner_divergence_min 3x3", |b| {
        b.iter(|| inner_divergence_min(black_box(&q_xy), &q_zy, &w, 1e-10).unwrap().value)
    });
    let g = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
    c.bench_function("zero_rate_closed_forms", |b| b.iter(|| zero_rate_closed_forms(black_box(&g)).e0));
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trial n=8");
    group.sample_size(10);
    for d in [DecoderKind::Universal, DecoderKind::Mmi, DecoderKind::ApproxMl, DecoderKind::ExactMl] {
        let sim = Simulator::new(desk(8), vec![d], 1).unwrap();
        group.bench_function(d.name(), |b| b.iter(|| sim.count_errors(black_box(64)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, types, inner, trials);
criterion_main!(benches);
