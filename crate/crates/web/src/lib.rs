//! Three demo operations for the static page in `www/`.
//!
//! Each returns a JSON string so the page needs no glue beyond
//! `JSON.parse`. The functions are plain Rust and tested natively; the
//! wasm exports in [`bindings`] only forward to them.

use fdprox::detector::{detect, DetectorConfig};
use fdprox::geometry::{analytic_eta_bound, estimate_eta, EtaBoundKind, LambdaGrid};
use fdprox::harness::PeakContrast;
use fdprox::regularizer::{Regularizer, RegularizerKind};
use fdprox::rng::derive_seed;
use fdprox::signal::{corrupt, generate_planted_lowrank, generate_sparse_blocks};
use serde_json::json;

/// Largest dimension the page may request; keeps one call well under a second.
pub const MAX_DIM: usize = 2000;
pub const MAX_MATRIX_SIDE: usize = 60;

fn err(e: fdprox::Error) -> String {
    e.to_string()
}

fn check(ok: bool, msg: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Sparse blocks under noise: the l1 detector next to the plain filtered derivative.
#[allow(clippy::too_many_arguments)]
pub fn sparse_detect(
    p: usize,
    n: usize,
    k_blocks: usize,
    s: usize,
    sigma: f64,
    theta: usize,
    lambda: f64,
    gamma: f64,
    seed: u64,
) -> Result<String, String> {
    check(p <= MAX_DIM, "p is too large for the demo")?;
    let signal = generate_sparse_blocks(p, n, k_blocks, s, 1.0, 1.2, seed).map_err(err)?;
    let obs = corrupt(&signal, sigma, derive_seed(seed, 1)).map_err(err)?;
    let proposed = detect(&obs, &DetectorConfig::new(theta, gamma, lambda, RegularizerKind::L1)).map_err(err)?;
    let baseline = detect(&obs, &DetectorConfig::new(theta, gamma, 0.0, RegularizerKind::Identity)).map_err(err)?;
    Ok(json!({
        "tau_star": signal.tau_star(),
        "delta_min": signal.delta_min(),
        "s_start": proposed.s_start,
        "S": proposed.derivative,
        "S_baseline": baseline.derivative,
        "estimates": proposed.estimates,
        "groups": proposed.groups,
        "baseline_estimates": baseline.estimates,
        "gamma": gamma,
    })
    .to_string())
}

/// One change between rank-one matrices; peak-to-median contrast of both traces.
pub fn lowrank_contrast(
    d: usize,
    scale: f64,
    sigma: f64,
    theta: usize,
    lambda: f64,
    seed: u64,
) -> Result<String, String> {
    check(d <= MAX_MATRIX_SIDE, "d is too large for the demo")?;
    let n = 100;
    let signal = generate_planted_lowrank(d, n, n / 2, scale, seed).map_err(err)?;
    let obs = corrupt(&signal, sigma, derive_seed(seed, 1)).map_err(err)?;
    let gamma = signal.delta_min().unwrap_or(1.0) / 2.0;
    let proposed = detect(
        &obs,
        &DetectorConfig::new(theta, gamma, lambda, RegularizerKind::Nuclear),
    )
    .map_err(err)?;
    let baseline = detect(&obs, &DetectorConfig::new(theta, gamma, 0.0, RegularizerKind::Identity)).map_err(err)?;
    let (cp, cb) = (
        PeakContrast::of(&proposed.derivative),
        PeakContrast::of(&baseline.derivative),
    );
    Ok(json!({
        "tau_star": signal.tau_star(),
        "s_start": proposed.s_start,
        "S": proposed.derivative,
        "S_baseline": baseline.derivative,
        "estimates": proposed.estimates,
        "baseline_estimates": baseline.estimates,
        "gamma": gamma,
        "contrast": cp.ratio(),
        "baseline_contrast": cb.ratio(),
        "proposed_wins": cp.beats(&cb),
    })
    .to_string())
}

/// Monte Carlo curve `lambda -> E dist(g, lambda d||x||_1)` for one s-sparse vector.
pub fn eta_curve(p: usize, s: usize, samples: usize, seed: u64) -> Result<String, String> {
    check(p <= MAX_DIM, "p is too large for the demo")?;
    check((1..=5000).contains(&samples), "samples must lie in 1..=5000")?;
    let signal = generate_sparse_blocks(p, 1, 1, s, 1.0, 1.0, seed).map_err(err)?;
    let reg = Regularizer::new(RegularizerKind::L1, signal.shape()).map_err(err)?;
    let est = estimate_eta(
        &reg,
        &signal.distinct_values(),
        samples,
        &LambdaGrid::default(),
        derive_seed(seed, 1),
    )
    .map_err(err)?;
    let bound = analytic_eta_bound(EtaBoundKind::Sparse { s, p }).map_err(err)?;
    Ok(json!({
        "curve": est.curve,
        "eta": est.eta,
        "lambda_star": est.lambda_star,
        "std_error": est.std_error,
        "bound": bound,
    })
    .to_string())
}

#[cfg(target_arch = "wasm32")]
pub mod bindings {
    use wasm_bindgen::prelude::*;

    fn js(r: Result<String, String>) -> Result<String, JsValue> {
        r.map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    #[allow(clippy::too_many_arguments)]
    pub fn sparse_detect(
        p: usize,
        n: usize,
        k_blocks: usize,
        s: usize,
        sigma: f64,
        theta: usize,
        lambda: f64,
        gamma: f64,
        seed: u32,
    ) -> Result<String, JsValue> {
        js(super::sparse_detect(
            p,
            n,
            k_blocks,
            s,
            sigma,
            theta,
            lambda,
            gamma,
            seed as u64,
        ))
    }

    #[wasm_bindgen]
    pub fn lowrank_contrast(
        d: usize,
        scale: f64,
        sigma: f64,
        theta: usize,
        lambda: f64,
        seed: u32,
    ) -> Result<String, JsValue> {
        js(super::lowrank_contrast(d, scale, sigma, theta, lambda, seed as u64))
    }

    #[wasm_bindgen]
    pub fn eta_curve(p: usize, s: usize, samples: usize, seed: u32) -> Result<String, JsValue> {
        js(super::eta_curve(p, s, samples, seed as u64))
    }
}
