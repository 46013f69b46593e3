//! Benchmarks for the hot paths of the expansion pipeline: contact-series
//! products, sup norms, and one application of the transfer operator.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64 as C64;
use planarop_core::expansion::op_t;
use planarop_core::polar_series::ContactSeries;
use planarop_core::potential::{build_droplet, Family, PotentialModel};

fn dense_series(d_max: usize, u_max: usize, sigma: f64) -> ContactSeries {
    let mut f = ContactSeries::zeros(d_max, u_max, sigma);
    for d in -(d_max as i64)..=(d_max as i64) {
        for n in 0..=u_max {
            let amp = 0.7f64.powi(d.unsigned_abs() as i32 + n as i32);
            f.set(d, n, C64::new(amp, 0.3 * amp));
        }
    }
    f
}

fn contact_multiply(c: &mut Criterion) {
    let mut group = c.benchmark_group("contact_multiply");
    for n in [32usize, 64, 128] {
        let f = dense_series(n, n, 0.2);
        let g = dense_series(n, n, 0.2);
        group.bench_function(format!("d_max_{n}"), |b| b.iter(|| f.multiply(&g)));
    }
    group.finish();
}

fn contact_sup_norm(c: &mut Criterion) {
    let mut group = c.benchmark_group("contact_sup_norm");
    for n in [64usize, 128] {
        let f = dense_series(n, n, 0.2);
        group.bench_function(format!("d_max_{n}"), |b| b.iter(|| f.sup_norm(0.1)));
    }
    group.finish();
}

fn transfer_operator(c: &mut Criterion) {
    let geom = build_droplet(&Family::Elliptic { t: 0.2 }).unwrap();
    let model = PotentialModel::build(geom, 64, 0.2).unwrap();
    let seed = model.b0.clone();
    c.bench_function("op_t_elliptic_n64", |b| {
        b.iter_batched(
            || seed.clone(),
            |f| op_t(&model, &f, model.sigma0 / 2.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, contact_multiply, contact_sup_norm, transfer_operator);
criterion_main!(benches);
