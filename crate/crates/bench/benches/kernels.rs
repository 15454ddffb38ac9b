use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use subband_bench::{test_image, test_tensor};
use subband_core::nn::{conv2d, conv_transpose2d};
use subband_core::{decompose, encode, CodeblockGrid};

fn dwt(c: &mut Criterion) {
    let img = test_image(256, 3);
    let mut g = c.benchmark_group("dwt53");
    for levels in [1, 3, 5] {
        g.bench_with_input(BenchmarkId::from_parameter(levels), &levels, |b, &l| {
            b.iter(|| decompose(black_box(&img), l).unwrap())
        });
    }
    g.finish();
}

fn codestream(c: &mut Criterion) {
    let img = test_image(256, 3);
    let pyr = decompose(&img, 3).unwrap();
    let grid = CodeblockGrid::square(64).unwrap();
    c.bench_function("encode_256_L3", |b| b.iter(|| encode(black_box(&pyr), grid).unwrap()));
    let cs = encode(&pyr, grid).unwrap();
    let mut g = c.benchmark_group("decode_partial");
    for level in [3, 2, 0] {
        g.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, &t| {
            b.iter(|| cs.decode_partial(black_box(t)).unwrap())
        });
    }
    g.finish();
}

fn conv(c: &mut Criterion) {
    let x = test_tensor(&[8, 12, 32, 32]);
    let w = test_tensor(&[16, 12, 3, 3]);
    c.bench_function("conv3x3_8x12x32x32", |b| b.iter(|| conv2d(black_box(&x), &w, None, 1, 1).unwrap()));
    let wt = test_tensor(&[12, 12, 2, 2]);
    c.bench_function("tconv2x2_8x12x32x32", |b| {
        b.iter(|| conv_transpose2d(black_box(&x), &wt, None, 2, 0).unwrap())
    });
}

criterion_group!(benches, dwt, codestream, conv);
criterion_main!(benches);
