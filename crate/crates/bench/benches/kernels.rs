use bfftrack::tensor::{kernels, Graph, Tensor};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [16usize, 64, 256] {
        let a = Tensor::uniform(&[n, n], 1.0, &mut rng);
        let b = Tensor::uniform(&[n, n], 1.0, &mut rng);
        let mut out = vec![0.0; n * n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, &n| {
            bch.iter(|| kernels::gemm(black_box(a.data()), black_box(b.data()), &mut out, n, n, n))
        });
    }
    g.finish();
}

fn attention_block(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = Tensor::uniform(&[64, 8, 16], 1.0, &mut rng);
    let k = Tensor::uniform(&[64, 8, 16], 1.0, &mut rng);
    c.bench_function("bmm_softmax_backward 64x8x16", |b| {
        b.iter(|| {
            let g = Graph::new();
            let qv = g.var(q.clone());
            let s = qv.bmm(g.constant(k.clone()), true).unwrap().softmax_rows().unwrap().sum();
            black_box(g.backward(s).unwrap());
        })
    });
}

criterion_group!(benches, gemm, attention_block);
criterion_main!(benches);
