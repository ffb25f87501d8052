//! Gaussian distance estimates and the recovery condition.
//!
//! The Gaussian distance of a collection of signals is
//! `inf_lambda max_j E_g[dist(g, lambda * d||X_j||_C)]` with `g ~ N(0, I)`.
//! It is estimated by Monte Carlo with common random numbers: every
//! candidate `lambda` and every signal sees the same Gaussian draws, so the
//! argmin over `lambda` is stable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::{DistProfile, Regularizer, Subdifferential};
use crate::rng;

pub const DEFAULT_NUM_SAMPLES: usize = 2000;

/// Candidate values of the noise-normalized `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub points: usize,
    pub lo: f64,
    /// Upper end; `None` means `E||g||_2 ~ sqrt(p)` in the gauge's own units.
    pub hi: Option<f64>,
    /// Also evaluate `lambda = 0`.
    pub include_zero: bool,
    /// Refine the best grid point with a golden-section search between its neighbours.
    pub refine: bool,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            points: 50,
            lo: 1e-2,
            hi: None,
            include_zero: true,
            refine: true,
        }
    }
}

impl LambdaGrid {
    fn values(&self, default_hi: f64) -> Result<Vec<f64>> {
        let hi = self.hi.unwrap_or(default_hi);
        if self.points < 2 || !(self.lo > 0.0) || !(hi > self.lo) {
            return Err(Error::config(format!(
                "lambda grid needs >= 2 points and 0 < lo < hi (got {} points on [{}, {hi}])",
                self.points, self.lo
            )));
        }
        let ratio = (hi / self.lo).ln() / (self.points - 1) as f64;
        let mut v: Vec<f64> = Vec::with_capacity(self.points + 1);
        if self.include_zero {
            v.push(0.0);
        }
        v.extend((0..self.points).map(|i| self.lo * (ratio * i as f64).exp()));
        Ok(v)
    }
}

/// Monte Carlo estimate of the Gaussian distance of a signal collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub eta: f64,
    /// Minimizing noise-normalized `lambda`.
    pub lambda_star: f64,
    pub num_samples: usize,
    /// Standard error of `eta` (of the worst signal's mean at `lambda_star`).
    pub std_error: f64,
    /// `E[dist]` at `lambda_star` for each distinct representative.
    pub per_signal_values: Vec<f64>,
    /// `(lambda, max_j E[dist], std_error)` over the grid.
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub value: f64,
    pub std_error: f64,
}

fn dedup(reps: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for r in reps {
        if !out.contains(&r.as_slice()) {
            out.push(r);
        }
    }
    out
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        sum += v;
        sq += v * v;
    }
    let mean = sum / n;
    let var = if n > 1.0 {
        ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// Estimates `eta_C` of the representatives.
pub fn estimate_eta(
    reg: &Regularizer,
    representatives: &[Vec<f64>],
    num_samples: usize,
    grid: &LambdaGrid,
    seed: u64,
) -> Result<EtaEstimate> {
    if representatives.is_empty() {
        return Err(Error::config("estimate_eta needs at least one representative"));
    }
    if num_samples == 0 {
        return Err(Error::config("estimate_eta needs at least one sample"));
    }
    let reps = dedup(representatives);
    let subdiffs: Vec<Subdifferential> = reps.iter().map(|r| reg.subdiff_at(r)).collect::<Result<_>>()?;
    let p = reg.shape().len();
    let scale = subdiffs[0].lambda_scale();
    let lambdas = grid.values((p as f64).sqrt() / scale)?;

    let profiles_for = |i: usize| -> Result<Vec<DistProfile>> {
        let mut r = rng::stream(seed, i as u64);
        let g = rng::normal_vec(&mut r, p);
        subdiffs.iter().map(|s| s.profile(&g)).collect()
    };

    // pass 1: every (sample, representative, lambda) on the grid
    let per_sample: Vec<Vec<f64>> = (0..num_samples)
        .into_par_iter()
        .map(|i| {
            let profiles = profiles_for(i)?;
            Ok(profiles
                .iter()
                .flat_map(|pr| lambdas.iter().map(move |&l| pr.dist(l)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let nl = lambdas.len();
    let stats = |j: usize, k: usize| mean_and_se(per_sample.iter().map(|row| row[j * nl + k]));
    let curve: Vec<CurvePoint> = (0..nl)
        .map(|k| {
            let (value, std_error) = (0..reps.len())
                .map(|j| stats(j, k))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty representatives");
            CurvePoint {
                lambda: lambdas[k],
                value,
                std_error,
            }
        })
        .collect();
    let best = (0..nl)
        .min_by(|&a, &b| curve[a].value.total_cmp(&curve[b].value))
        .expect("non-empty grid");

    let mut lambda_star = lambdas[best];
    if grid.refine && nl >= 3 {
        let lo = lambdas[best.saturating_sub(1)];
        let hi = lambdas[(best + 1).min(nl - 1)];
        // pass 2: profiles truncated to the bracket, then golden section
        let truncated: Vec<Vec<DistProfile>> = (0..num_samples)
            .into_par_iter()
            .map(|i| Ok(profiles_for(i)?.into_iter().map(|p| p.truncated(lo)).collect()))
            .collect::<Result<_>>()?;
        let objective = |l: f64| -> f64 {
            (0..reps.len())
                .map(|j| truncated.iter().map(|row| row[j].dist(l)).sum::<f64>() / num_samples as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let refined = golden_section(objective, lo, hi, 1e-6 * hi.max(1e-12));
        if objective(refined) <= curve[best].value {
            lambda_star = refined;
        }
        let per: Vec<(f64, f64)> = (0..reps.len())
            .map(|j| mean_and_se(truncated.iter().map(|row| row[j].dist(lambda_star))))
            .collect();
        return Ok(finish(lambda_star, per, num_samples, curve));
    }
    let per: Vec<(f64, f64)> = (0..reps.len()).map(|j| stats(j, best)).collect();
    Ok(finish(lambda_star, per, num_samples, curve))
}

fn finish(lambda_star: f64, per: Vec<(f64, f64)>, num_samples: usize, curve: Vec<CurvePoint>) -> EtaEstimate {
    let worst = per
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .copied()
        .expect("non-empty representatives");
    EtaEstimate {
        eta: worst.0,
        lambda_star,
        num_samples,
        std_error: worst.1,
        per_signal_values: per.iter().map(|v| v.0).collect(),
        curve,
    }
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form upper bounds on the Gaussian distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaBoundKind {
    /// `s`-sparse vectors in `R^p` under the l1 norm.
    Sparse { s: usize, p: usize },
    /// Rank-`r` matrices in `R^{d x d}` under the nuclear norm.
    LowRank { r: usize, d: usize },
}

pub fn analytic_eta_bound(kind: EtaBoundKind) -> Result<f64> {
    match kind {
        EtaBoundKind::Sparse { s, p } => {
            if s == 0 || s > p {
                return Err(Error::config(format!("sparse bound needs 1 <= s <= p (s={s}, p={p})")));
            }
            let (s, p) = (s as f64, p as f64);
            Ok((2.0 * s * (p / s).ln() + 1.5 * s).sqrt() + 7.0)
        }
        EtaBoundKind::LowRank { r, d } => {
            if r == 0 || r > d {
                return Err(Error::config(format!(
                    "low-rank bound needs 1 <= r <= d (r={r}, d={d})"
                )));
            }
            Ok((6.0 * r as f64 * d as f64).sqrt() + 7.0)
        }
    }
}

/// Scales a noise-normalized `lambda_star` to a window of `window` averaged
/// observations at noise level `sigma`.
pub fn scale_lambda(lambda_star: f64, sigma: f64, window: usize) -> f64 {
    sigma / (window as f64).sqrt() * lambda_star
}

/// `lambda = (sigma / sqrt(theta)) * argmin_lambda max_j E[dist(g, lambda d||X_j||)]`.
pub fn select_lambda(
    reg: &Regularizer,
    representatives: &[Vec<f64>],
    theta: usize,
    sigma: f64,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    if theta < 1 {
        return Err(Error::config("theta must be >= 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma must be > 0, got {sigma}")));
    }
    let est = estimate_eta(reg, representatives, num_samples, &LambdaGrid::default(), seed)?;
    Ok(scale_lambda(est.lambda_star, sigma, theta))
}

/// Sufficient condition `Delta_min^2 T_min >= 64 sigma^2 (eta + r sqrt(2 ln n))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCondition {
    pub delta_min: f64,
    pub t_min: f64,
    pub sigma: f64,
    pub n: usize,
    pub r: f64,
    pub eta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl RecoveryCondition {
    /// `eta + r sqrt(2 ln n)`.
    pub fn complexity(&self) -> f64 {
        complexity(self.eta, self.r, self.n)
    }

    /// Smallest threshold allowed for window `theta`:
    /// `2 sigma / sqrt(theta) * (eta + r sqrt(2 ln n))`.
    pub fn gamma_lower_bound(&self, theta: usize) -> f64 {
        2.0 * self.sigma / (theta as f64).sqrt() * self.complexity()
    }

    /// Guaranteed localization radius for window `theta`.
    pub fn location_error_bound(&self, theta: usize) -> f64 {
        let ln_n = (self.n as f64).ln();
        let th = theta as f64;
        let fine = (4.0 * self.r * ln_n.sqrt() / self.eta + 4.0) * self.sigma * self.eta / self.delta_min * th.sqrt();
        fine.min(th)
    }
}

fn complexity(eta: f64, r: f64, n: usize) -> f64 {
    eta + r * (2.0 * (n as f64).ln()).sqrt()
}

/// Smallest `Delta_min` meeting the condition with equality for a given `t_min`.
pub fn boundary_delta(t_min: f64, sigma: f64, n: usize, r: f64, eta: f64) -> f64 {
    8.0 * sigma * complexity(eta, r, n) / t_min.sqrt()
}

pub fn check_recovery_condition(
    delta_min: f64,
    t_min: f64,
    sigma: f64,
    n: usize,
    r: f64,
    eta: f64,
) -> Result<RecoveryCondition> {
    if !(r > 1.0) {
        return Err(Error::config(format!("r must be > 1, got {r}")));
    }
    if n < 2 {
        return Err(Error::config(format!("n must be >= 2, got {n}")));
    }
    let lhs = delta_min * delta_min * t_min;
    let c = complexity(eta, r, n);
    let rhs = 64.0 * sigma * sigma * c * c;
    Ok(RecoveryCondition {
        delta_min,
        t_min,
        sigma,
        n,
        r,
        eta,
        lhs,
        rhs,
        satisfied: lhs >= rhs,
    })
}

/// `theta = floor(T_min / 4)`, `gamma = Delta_min / 2`.
pub fn theorem_parameter_rule(delta_min: f64, t_min: usize) -> Result<(usize, f64)> {
    if t_min < 4 {
        return Err(Error::config(format!("t_min must be >= 4, got {t_min}")));
    }
    Ok((t_min / 4, delta_min / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::RegularizerKind;
    use crate::signal::Shape;

    #[test]
    fn analytic_bounds() {
        let b = analytic_eta_bound(EtaBoundKind::Sparse { s: 30, p: 1000 }).unwrap();
        assert!((b - 22.99).abs() <= 0.01, "{b}");
        let b = analytic_eta_bound(EtaBoundKind::Sparse { s: 40, p: 40 }).unwrap();
        assert!((b - (60f64.sqrt() + 7.0)).abs() < 1e-12);
        let b = analytic_eta_bound(EtaBoundKind::LowRank { r: 1, d: 200 }).unwrap();
        assert!((b - 41.64).abs() < 0.005, "{b}");
        assert!(analytic_eta_bound(EtaBoundKind::Sparse { s: 5, p: 4 }).is_err());
        assert!(analytic_eta_bound(EtaBoundKind::LowRank { r: 0, d: 4 }).is_err());
    }

    #[test]
    fn recovery_condition_examples() {
        let c = check_recovery_condition(4.0, 2000.0, 1.0, 1000, 1.1, 23.0).unwrap();
        assert_eq!(c.lhs, 32000.0);
        assert!((c.rhs - 46962.6).abs() < 0.5, "{}", c.rhs);
        assert!(!c.satisfied);

        let k = 23.0 + 1.1 * (2.0 * 1000f64.ln()).sqrt();
        let t = 64.0 * k * k;
        let c = check_recovery_condition(1.0, t, 1.0, 1000, 1.1, 23.0).unwrap();
        assert!(c.satisfied && (c.lhs - c.rhs).abs() < 1e-9 * c.rhs);

        let c = check_recovery_condition(1e9, 1.0, 1.0, 1000, 1.1, 23.0).unwrap();
        assert!(c.satisfied);
        assert!(check_recovery_condition(1.0, 1.0, 1.0, 1000, 1.0, 23.0).is_err());
        assert!(check_recovery_condition(1.0, 1.0, 1.0, 1, 1.5, 23.0).is_err());

        let d = boundary_delta(100.0, 0.5, 500, 1.5, 7.0);
        let c = check_recovery_condition(d, 100.0, 0.5, 500, 1.5, 7.0).unwrap();
        assert!((c.lhs / c.rhs - 1.0).abs() < 1e-12);
        // at the Remark's parameters the threshold equals its lower bound
        assert!((c.gamma_lower_bound(25) - d / 2.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_rule() {
        assert_eq!(theorem_parameter_rule(2.0, 40).unwrap(), (10, 1.0));
        assert_eq!(theorem_parameter_rule(1.0, 4).unwrap(), (1, 0.5));
        assert_eq!(theorem_parameter_rule(0.5, 399).unwrap(), (99, 0.25));
        assert!(theorem_parameter_rule(1.0, 3).is_err());
    }

    #[test]
    fn select_lambda_scaling_and_errors() {
        assert_eq!(scale_lambda(2.0, 0.5, 4), 0.5);
        let id = Regularizer::new(RegularizerKind::Identity, Shape::Vector(3)).unwrap();
        assert!(matches!(
            select_lambda(&id, &[vec![1.0, 0.0, 0.0]], 4, 1.0, 10, 0),
            Err(Error::Capability(_))
        ));
        let l1 = Regularizer::new(RegularizerKind::L1, Shape::Vector(3)).unwrap();
        assert!(select_lambda(&l1, &[vec![1.0, 0.0, 0.0]], 0, 1.0, 10, 0).is_err());
        assert!(select_lambda(&l1, &[vec![1.0, 0.0, 0.0]], 4, 0.0, 10, 0).is_err());
    }

    #[test]
    fn one_dimensional_eta_matches_quadrature() {
        // E|g - lambda| = 2 phi(lambda) + lambda (2 Phi(lambda) - 1), minimized at 0
        let reg = Regularizer::new(RegularizerKind::L1, Shape::Vector(1)).unwrap();
        let est = estimate_eta(&reg, &[vec![1.0]], 4000, &LambdaGrid::default(), 3).unwrap();
        let quad = quad_abs_shift(0.0);
        assert!((quad - 0.797_884_560_8).abs() < 1e-6);
        assert!(est.eta <= 0.80 + 3.0 * est.std_error, "{est:?}");
        assert!((est.eta - quad).abs() <= 4.0 * est.std_error, "{est:?}");
        assert!(est.lambda_star < 0.05);
    }

    // E|g - lambda| by the trapezoid rule on [-12, 12]
    fn quad_abs_shift(lambda: f64) -> f64 {
        let steps = 200_000;
        let h = 24.0 / steps as f64;
        (0..=steps)
            .map(|i| {
                let x = -12.0 + i as f64 * h;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * (x - lambda).abs() * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn single_representative_matches_pointwise_estimate() {
        let reg = Regularizer::new(RegularizerKind::L1, Shape::Vector(50)).unwrap();
        let mut x = vec![0.0; 50];
        x[..5].iter_mut().for_each(|v| *v = 1.0);
        let a = estimate_eta(&reg, &[x.clone()], 500, &LambdaGrid::default(), 1).unwrap();
        let b = estimate_eta(&reg, &[x.clone(), x.clone()], 500, &LambdaGrid::default(), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_signal_values.len(), 1);
        assert_eq!(a.eta, a.per_signal_values[0]);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
