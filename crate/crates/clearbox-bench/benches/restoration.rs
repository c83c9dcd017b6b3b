use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use clearbox::image::test_card;
use clearbox::purifier::{
    gaussian_denoise, median_denoise, motion_psf, richardson_lucy, upscale, wiener_deblur, Interp,
};

fn bench_stages(c: &mut Criterion) {
    let img = test_card(256, 256, 3).unwrap();
    let psf = motion_psf(9, 15.0).unwrap();
    let blurred = psf.blur(&img);

    c.bench_function("median_r1_256", |b| {
        b.iter(|| median_denoise(black_box(&img), 1).unwrap())
    });
    c.bench_function("gaussian_s1.5_256", |b| {
        b.iter(|| gaussian_denoise(black_box(&img), 1.5).unwrap())
    });
    c.bench_function("wiener_256", |b| {
        b.iter(|| wiener_deblur(black_box(&blurred), &psf, 1e-3).unwrap())
    });
    c.bench_function("richardson_lucy_10_256", |b| {
        b.iter(|| richardson_lucy(black_box(&blurred), &psf, 10).unwrap())
    });
    c.bench_function("upscale_bicubic_x2_256", |b| {
        b.iter(|| upscale(black_box(&img), 2, Interp::Bicubic).unwrap())
    });
}

fn bench_psf(c: &mut Criterion) {
    c.bench_function("motion_psf_15", |b| {
        b.iter(|| motion_psf(black_box(15), black_box(37.0)).unwrap())
    });
}

criterion_group!(benches, bench_stages, bench_psf);
criterion_main!(benches);
