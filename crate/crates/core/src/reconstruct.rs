//! Signal reconstruction on the stretches between estimated change-points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{ChangePointReport, Mode};
use crate::error::{Error, Result};
use crate::geometry::{scale_lambda, RecoveryCondition};
use crate::regularizer::Regularizer;
use crate::signal::ObservationSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaPrimePolicy {
    Fixed {
        lambda: f64,
    },
    /// `lambda' = sigma / sqrt(m) * lambda_star`.
    Auto {
        lambda_star: f64,
        sigma: f64,
    },
}

impl LambdaPrimePolicy {
    fn resolve(&self, m: usize) -> Result<f64> {
        let l = match *self {
            LambdaPrimePolicy::Fixed { lambda } => lambda,
            LambdaPrimePolicy::Auto { lambda_star, sigma } => scale_lambda(lambda_star, sigma, m),
        };
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::config(format!("lambda' must be finite and >= 0, got {l}")));
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEstimate {
    /// Bracketing change-points (0 and n stand for the sequence ends).
    pub t1: usize,
    pub t2: usize,
    /// Averaged times `[t1 + theta + 1, t2 - theta]`, 1-based inclusive.
    pub interval: [usize; 2],
    pub m: usize,
    pub lambda_prime: f64,
    pub x_bar: Vec<f64>,
}

pub fn reconstruct_segment(
    obs: &ObservationSequence,
    t1: usize,
    t2: usize,
    theta: usize,
    reg: &Regularizer,
    policy: &LambdaPrimePolicy,
) -> Result<SegmentEstimate> {
    if t2 > obs.n() || t2 <= t1 || t2 - t1 <= 2 * theta {
        return Err(Error::config(format!(
            "segment ({t1}, {t2}] with theta={theta} leaves nothing to average (need t2 - t1 > 2 theta, t2 <= n={})",
            obs.n()
        )));
    }
    let lo = t1 + theta + 1;
    let hi = t2 - theta;
    let m = hi - lo + 1;
    let mut mean = vec![0.0; obs.shape.len()];
    for t in lo..=hi {
        for (a, &y) in mean.iter_mut().zip(obs.row(t)) {
            *a += y;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    let lambda_prime = policy.resolve(m)?;
    let x_bar = reg.prox(&mean, lambda_prime)?.x_hat;
    Ok(SegmentEstimate {
        t1,
        t2,
        interval: [lo, hi],
        m,
        lambda_prime,
        x_bar,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSegment {
    pub t1: usize,
    pub t2: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub segments: Vec<SegmentEstimate>,
    pub warnings: Vec<SkippedSegment>,
    /// Whether the per-segment error bound is backed by a satisfied
    /// recovery condition and a full-mode report.
    pub bound_applicable: bool,
}

/// Reconstructs every stretch between consecutive estimates (and the
/// sequence ends) that is longer than `2 theta`.
pub fn reconstruct_all(
    obs: &ObservationSequence,
    report: &ChangePointReport,
    theta: usize,
    reg: &Regularizer,
    policy: &LambdaPrimePolicy,
    condition: Option<&RecoveryCondition>,
) -> Result<Reconstruction> {
    if report.n != obs.n() {
        return Err(Error::config(format!(
            "report covers n={} but observations have n={}",
            report.n,
            obs.n()
        )));
    }
    let mut cuts = vec![0];
    cuts.extend(report.estimates.iter().copied());
    cuts.push(obs.n());
    let pairs: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    let (ok, short): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|&(a, b)| b > a && b - a > 2 * theta);
    let segments = ok
        .par_iter()
        .map(|&(a, b)| reconstruct_segment(obs, a, b, theta, reg, policy))
        .collect::<Result<Vec<_>>>()?;
    let warnings = short
        .into_iter()
        .map(|(t1, t2)| SkippedSegment {
            t1,
            t2,
            reason: format!("interval length {} <= 2 theta = {}", t2.saturating_sub(t1), 2 * theta),
        })
        .collect();
    Ok(Reconstruction {
        segments,
        warnings,
        bound_applicable: report.config.mode == Mode::Full && condition.is_some_and(|c| c.satisfied),
    })
}

/// `2 sigma^2 / m * (eta^2 + s^2)`.
pub fn reconstruction_error_bound(sigma: f64, m: usize, eta: f64, s: f64) -> f64 {
    2.0 * sigma * sigma / m as f64 * (eta * eta + s * s)
}
