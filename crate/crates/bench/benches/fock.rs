use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

use birefsense_core::fock::{certified_statistics, run_plan_fock, OracleSettings};
use birefsense_core::pipeline::plan;
use birefsense_core::{InterferometerConfig, ModeIndex};

fn fock(c: &mut Criterion) {
    let cfg = InterferometerConfig {
        gain: 0.3,
        seed: BTreeMap::from([(ModeIndex::SIGNAL_H, Complex64::new(0.5, 0.0))]),
        phi_b: 0.4,
        delta: 0.2,
        ..Default::default()
    };
    let p = plan(&cfg).unwrap();
    let mut group = c.benchmark_group("fock");
    group.sample_size(10);
    for cutoff in [8, 12, 16] {
        group.bench_function(format!("run_cutoff_{cutoff}"), |b| {
            b.iter(|| run_plan_fock(&p, cutoff, 1 << 25).unwrap())
        });
    }
    group.bench_function("certified", |b| {
        b.iter(|| certified_statistics(&p, &[vec![2]], &OracleSettings::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fock);
criterion_main!(benches);
