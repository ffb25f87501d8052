mod common;

use common::*;
use fdprox::geometry::{estimate_eta, select_lambda, LambdaGrid};
use fdprox::regularizer::RegularizerKind;
use fdprox::rng;
use fdprox::signal::{generate_sparse_blocks, Shape};

#[test]
fn eta_curve_is_unimodal_within_noise() {
    let mut r = rng::stream(201, 0);
    let cases = [
        (RegularizerKind::L1, Shape::Vector(200), sparse_vector(&mut r, 200, 10)),
        (
            RegularizerKind::Nuclear,
            Shape::Matrix(15, 15),
            lowrank_matrix(&mut r, 15, 2),
        ),
    ];
    for (kind, shape, x) in cases {
        let est = estimate_eta(&regularizer(kind, shape), &[x], 1000, &LambdaGrid::default(), 5).unwrap();
        for w in est.curve.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            assert!(
                !(b.value > a.value + 3.0 * b.std_error && b.value > c.value + 3.0 * b.std_error),
                "{kind}: bump at lambda={}",
                b.lambda
            );
        }
        let grid_min = est.curve.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
        assert!(est.eta <= grid_min + 1e-12);
    }
}

#[test]
fn collection_eta_is_max_over_members() {
    let mut r = rng::stream(202, 0);
    let reg = regularizer(RegularizerKind::L1, Shape::Vector(100));
    let xs = vec![sparse_vector(&mut r, 100, 2), sparse_vector(&mut r, 100, 20)];
    let est = estimate_eta(&reg, &xs, 800, &LambdaGrid::default(), 3).unwrap();
    let max = est.per_signal_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(est.eta, max);
    // the denser signal dominates
    assert!(est.per_signal_values[1] > est.per_signal_values[0]);
    let alone = estimate_eta(&reg, &xs[1..], 800, &LambdaGrid::default(), 3).unwrap();
    assert!(alone.eta <= est.eta + 1e-12);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let mut r = rng::stream(203, 0);
    let reg = regularizer(RegularizerKind::Nuclear, Shape::Matrix(8, 8));
    let x = lowrank_matrix(&mut r, 8, 1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_eta(&reg, std::slice::from_ref(&x), 300, &LambdaGrid::default(), 9).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn subdifferential_distance_concentrates() {
    // P[dist^2 > 2 (E dist)^2 + 2 sigma^2 t^2] <= 2 exp(-t^2 / 2)
    let mut r = rng::stream(204, 0);
    let sigma = 0.7;
    let trials = 4000;
    let cases = [
        (
            RegularizerKind::L1,
            Shape::Vector(60),
            sparse_vector(&mut r, 60, 6),
            1.5,
        ),
        (
            RegularizerKind::Nuclear,
            Shape::Matrix(10, 10),
            lowrank_matrix(&mut r, 10, 1),
            2.0,
        ),
    ];
    for (kind, shape, x, lambda) in cases {
        let sub = regularizer(kind, shape).subdiff_at(&x).unwrap();
        let d: Vec<f64> = (0..trials)
            .map(|_| {
                let e: Vec<f64> = rng::normal_vec(&mut r, shape.len()).iter().map(|v| v * sigma).collect();
                sub.profile(&e).unwrap().dist(lambda)
            })
            .collect();
        let (m, _) = mean_se(&d);
        for t in [1.0f64, 2.0, 3.0] {
            let cut = 2.0 * m * m + 2.0 * sigma * sigma * t * t;
            let freq = d.iter().filter(|&&v| v * v > cut).count() as f64 / trials as f64;
            let bound = (2.0 * (-t * t / 2.0).exp()).min(1.0);
            let slack = 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
            assert!(freq <= bound + slack, "{kind} t={t}: {freq} > {bound}");
        }
    }
}

#[test]
fn exp2_family_lambda_is_finite_and_positive() {
    let s = generate_sparse_blocks(1000, 1000, 10, 30, 1.0, 1.2, 11).unwrap();
    let reg = regularizer(RegularizerKind::L1, Shape::Vector(1000));
    let lambda = select_lambda(&reg, &s.distinct_values(), 10, 2.5, 500, 4).unwrap();
    // diagnostic only; the hand-picked settings use 1 and 2
    assert!(lambda.is_finite() && lambda > 0.0 && lambda < 10.0, "{lambda}");
}
