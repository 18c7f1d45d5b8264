//! Kernel throughput with the default thread pool against a single worker.
//! Build with `--no-default-features` to measure the purely sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use microcount_tensor::gemm::{gemm, MatRef};
use microcount_tensor::{Conv2dSpec, Graph, ParamStore, Tensor, Var};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", single), ("all-threads", all)]
}

fn bench_gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    for n in [64usize, 256] {
        let a: Vec<f32> = (0..n * n).map(|i| (i % 7) as f32 * 0.1).collect();
        let b: Vec<f32> = (0..n * n).map(|i| (i % 5) as f32 * 0.2).collect();
        let mut out = vec![0.0f32; n * n];
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |bench, &n| {
                pool.install(|| bench.iter(|| gemm(MatRef::new(&a, n, n), MatRef::new(&b, n, n), &mut out, false)))
            });
        }
    }
    group.finish();
}

fn bench_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_forward_backward");
    group.sample_size(10);
    let x = Tensor::from_fn([8, 16, 32, 32], |i| ((i % 13) as f32 - 6.0) * 0.05);
    let mut store = ParamStore::new();
    let w = store.trainable("w", Tensor::from_fn([32, 16, 3, 3], |i| ((i % 11) as f32 - 5.0) * 0.02)).unwrap();
    let spec = Conv2dSpec { stride: 1, padding: 1, groups: 1 };
    for (label, pool) in pools() {
        group.bench_function(label, |bench| {
            pool.install(|| {
                bench.iter(|| {
                    let mut g = Graph::new();
                    let wv = g.param(&store, w);
                    let y = g.conv2d(&Var::constant(x.clone()), &wv, None, spec).unwrap();
                    let loss = g.mean_all(&y).unwrap();
                    g.backward(&loss, &mut store).unwrap();
                    store.zero_grad();
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gemm, bench_conv);
criterion_main!(benches);
