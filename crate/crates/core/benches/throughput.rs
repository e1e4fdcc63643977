use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use conquer_core::datagen::{generate_federated, DgpKind, DgpSpec};
use conquer_core::federation::{global_gradient, run_algorithm1, RoundConfig, SmoothingPlan};
use conquer_core::kernels::Kernel;
use conquer_core::smoothed_qr::{fit_conquer, GdBbConfig};

fn workloads(c: &mut Criterion, label: &str, run: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let spec = DgpSpec::new(DgpKind::LinearHetero(0.2), 10, 2000, 50, 0.8, 2.0, 1).unwrap();
    let fed = generate_federated(&spec, 0).unwrap();
    let plan = SmoothingPlan::with_scale(&fed, 0.8, 2.5, Kernel::Gaussian).unwrap();
    let loss = plan.global_loss().unwrap();
    let init = fit_conquer(fed.master(), &plan.local_loss().unwrap(), None, &GdBbConfig::default())
        .unwrap()
        .beta;
    let mut group = c.benchmark_group(label);
    group.sample_size(10);
    group.bench_function("global_gradient", |b| {
        b.iter(|| run(&mut || {
            black_box(global_gradient(&fed, &init, &loss).unwrap());
        }))
    });
    group.bench_function("algorithm1_t10", |b| {
        b.iter(|| run(&mut || {
            black_box(run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap());
        }))
    });
    group.bench_function("generate", |b| {
        b.iter(|| run(&mut || {
            black_box(generate_federated(&spec, 1).unwrap());
        }))
    });
    group.finish();
}

#[cfg(feature = "parallel")]
fn bench(c: &mut Criterion) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    workloads(c, "single_thread", &|f| single.install(|| f()));
    workloads(c, "full_pool", &|f| f());
}

#[cfg(not(feature = "parallel"))]
fn bench(c: &mut Criterion) {
    workloads(c, "sequential", &|f| f());
}

criterion_group!(benches, bench);
criterion_main!(benches);
