mod common;

use fdprox::detector::{detect, detect_streaming, DetectorConfig, Mode};
use fdprox::harness::{run_exp1, run_rate_verification, Exp1Params, RateFamily, RateParams};
use fdprox::regularizer::RegularizerKind;
use fdprox::rng;
use fdprox::signal::{corrupt, generate_sparse_blocks, ObservationSequence, Shape};
use proptest::prelude::*;

fn fd(y: &[f64], theta: usize, t: usize) -> f64 {
    // 1-based t: mean(Y[t+1..t+theta]) - mean(Y[t-theta+1..t])
    let th = theta as f64;
    let after: f64 = y[t..t + theta].iter().sum::<f64>() / th;
    let before: f64 = y[t - theta..t].iter().sum::<f64>() / th;
    after - before
}

proptest! {
    #[test]
    fn identity_pipeline_is_the_filtered_derivative(
        y in prop::collection::vec(-100.0f64..100.0, 2..120),
        theta_frac in 0.0f64..1.0,
    ) {
        let n = y.len();
        let theta = 1 + ((n / 2 - 1) as f64 * theta_frac) as usize;
        let obs = ObservationSequence::new(Shape::Vector(1), y.iter().map(|&v| vec![v]).collect()).unwrap();
        let rep = detect(&obs, &DetectorConfig::new(theta, 1.0, 0.0, RegularizerKind::Identity)).unwrap();
        prop_assert_eq!(rep.derivative.len(), n - 2 * theta + 1);
        for t in theta..=n - theta {
            let want = fd(&y, theta, t).abs();
            prop_assert!((rep.s_at(t).unwrap() - want).abs() <= 1e-12 * (1.0 + want), "t={}", t);
        }
    }

    #[test]
    fn raising_gamma_shrinks_the_detections(seed in 0u64..1000, g1 in 0.01f64..5.0, dg in 0.0f64..5.0) {
        let s = generate_sparse_blocks(20, 120, 6, 4, 1.0, 1.3, seed).unwrap();
        let obs = corrupt(&s, 1.0, seed + 1).unwrap();
        let a = detect(&obs, &DetectorConfig::new(5, g1, 0.5, RegularizerKind::L1)).unwrap();
        let b = detect(&obs, &DetectorConfig::new(5, g1 + dg, 0.5, RegularizerKind::L1)).unwrap();
        for (x, y) in a.thresholded.iter().zip(&b.thresholded) {
            prop_assert!(*y == 0.0 || y == x);
        }
        for g in &b.groups {
            prop_assert!(a.groups.iter().any(|h| h.lo <= g.lo && g.hi <= h.hi));
        }
    }
}

#[test]
fn raising_gamma_can_split_a_group() {
    // S nonzero at 10, 14, 18 with theta = 5: one group; drop the middle
    // entry and the gap of 8 separates the ends
    let mut y = vec![0.0; 40];
    for (t, v) in [(10, 2.0), (14, 1.0), (18, 2.0)] {
        y[t] = v;
    }
    let (low, _) = fdprox::detector::group_and_select(&fdprox::detector::threshold(&y, 0.5), 0, 5, Mode::Full);
    let (high, _) = fdprox::detector::group_and_select(&fdprox::detector::threshold(&y, 1.5), 0, 5, Mode::Full);
    assert_eq!(low.len(), 1);
    assert_eq!(high.len(), 2);
}

#[test]
fn report_invariants() {
    for seed in 0..20 {
        let s = generate_sparse_blocks(50, 300, 6, 5, 0.5, 1.3, seed).unwrap();
        let obs = corrupt(&s, 1.0, seed).unwrap();
        let theta = 8;
        let rep = detect(&obs, &DetectorConfig::new(theta, 1.5, 0.8, RegularizerKind::L1)).unwrap();
        assert_eq!(rep.estimates.len(), rep.groups.len());
        for (e, g) in rep.estimates.iter().zip(&rep.groups) {
            assert!(g.contains(*e));
            assert!((theta..=300 - theta).contains(e));
        }
        for w in rep.groups.windows(2) {
            assert!(w[1].lo - w[0].hi > theta);
        }
        let groups_only = detect(
            &obs,
            &DetectorConfig::new(theta, 1.5, 0.8, RegularizerKind::L1).with_mode(Mode::GroupsOnly),
        )
        .unwrap();
        assert_eq!(groups_only.groups, rep.groups);
        assert!(groups_only.estimates.is_empty());
    }
}

#[test]
fn exp2_data_streams_row_by_row() {
    let s = generate_sparse_blocks(1000, 1000, 10, 30, 1.0, 1.2, 3).unwrap();
    let obs = corrupt(&s, 2.5, 4).unwrap();
    for (theta, lambda, gamma) in [(10, 1.0, 15.0), (30, 2.0, 6.0)] {
        let cfg = DetectorConfig::new(theta, gamma, lambda, RegularizerKind::L1);
        let batch = detect(&obs, &cfg).unwrap();
        let (_, stream) = detect_streaming(obs.data.iter().map(|r| r.as_slice()), obs.shape, &cfg).unwrap();
        assert_eq!(batch.canonical_json().unwrap(), stream.canonical_json().unwrap());
    }
}

#[test]
fn noiseless_exp1_baseline_is_triangular() {
    let params = Exp1Params {
        d: 30,
        sigma: 0.0,
        scales: vec![1.0, 2.0],
        ..Default::default()
    };
    let res = run_exp1(&params, 1, 5).unwrap();
    for t in &res.trials {
        let base = &t.baseline;
        for time in base.s_start..base.s_start + base.derivative.len() {
            let k = time.abs_diff(50);
            let want = if k < 5 { t.delta * (5 - k) as f64 / 5.0 } else { 0.0 };
            assert!((base.s_at(time).unwrap() - want).abs() < 1e-12, "t={time}");
        }
        // the denoised trace peaks at the change and falls off on both sides
        let p = &t.proposed;
        assert_eq!(p.estimates, vec![50]);
        for time in 46..50 {
            assert!(p.s_at(time).unwrap() <= p.s_at(time + 1).unwrap());
            assert!(p.s_at(100 - time).unwrap() <= p.s_at(99 - time).unwrap());
        }
    }
}

#[test]
fn event_and_group_rates_match_their_bounds() {
    let sparse = run_rate_verification(&RateParams::default(), 200, 77).unwrap();
    let s = &sparse.summary;
    assert!(s.groups_hold(), "{s:?}");
    assert!(s.events_hold(), "{s:?}");

    let lowrank = RateParams {
        family: RateFamily::CutMatrix { d: 10 },
        n: 400,
        eta_samples: 500,
        ..Default::default()
    };
    let res = run_rate_verification(&lowrank, 200, 78).unwrap();
    let s = &res.summary;
    assert!(s.success_holds() && s.groups_hold() && s.events_hold(), "{s:?}");
}

#[test]
fn seeds_give_distinct_noise() {
    let s = generate_sparse_blocks(5, 10, 2, 1, 1.0, 2.0, 0).unwrap();
    let a = corrupt(&s, 1.0, rng::derive_seed(1, 0)).unwrap();
    let b = corrupt(&s, 1.0, rng::derive_seed(1, 1)).unwrap();
    assert_ne!(a.data, b.data);
}
