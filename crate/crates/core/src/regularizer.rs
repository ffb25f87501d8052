//! Gauge functions and their proximal operators.
//!
//! A [`Regularizer`] pairs a gauge `||.||_C` with the signal shape it acts
//! on. Besides `prox` it exposes the Euclidean distance from a vector to the
//! scaled subdifferential `lambda * d||x||_C`, which drives the Gaussian
//! distance estimates in [`crate::geometry`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot};
use crate::signal::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    /// No regularization; the prox is the identity (plain filtered derivative).
    Identity,
    L1,
    Nuclear,
    /// Nuclear-norm ball scaled to contain every `d x d` matrix of nuclear
    /// norm at most `d`; gauge is `||X||_* / d`.
    NuclearBallScaled,
}

impl RegularizerKind {
    /// The string used on the command line.
    pub fn cli_name(&self) -> &'static str {
        match self {
            RegularizerKind::Identity => "none",
            RegularizerKind::L1 => "l1",
            RegularizerKind::Nuclear => "nuclear",
            RegularizerKind::NuclearBallScaled => "nuclear-ball",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "identity" => Ok(RegularizerKind::Identity),
            "l1" => Ok(RegularizerKind::L1),
            "nuclear" => Ok(RegularizerKind::Nuclear),
            "nuclear-ball" | "nuclear_ball_scaled" => Ok(RegularizerKind::NuclearBallScaled),
            other => Err(Error::config(format!(
                "unknown regularizer '{other}' (expected l1, nuclear, nuclear-ball or none)"
            ))),
        }
    }
}

/// Output of the proximal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub x_hat: Vec<f64>,
    /// `0.5 ||y - x_hat||^2 + lambda ||x_hat||_C`.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    kind: RegularizerKind,
    shape: Shape,
}

impl Regularizer {
    pub fn new(kind: RegularizerKind, shape: Shape) -> Result<Self> {
        match (kind, shape) {
            (RegularizerKind::Nuclear, Shape::Vector(_)) => {
                Err(Error::config("nuclear regularizer needs a matrix shape"))
            }
            (RegularizerKind::NuclearBallScaled, Shape::Matrix(r, c)) if r != c => Err(Error::config(format!(
                "nuclear-ball regularizer needs a square shape, got {r}x{c}"
            ))),
            (RegularizerKind::NuclearBallScaled, Shape::Vector(_)) => {
                Err(Error::config("nuclear-ball regularizer needs a matrix shape"))
            }
            _ => Ok(Self { kind, shape }),
        }
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Skewness constant of the atomic set, where it is known: 1 for the
    /// l1 and nuclear norms, whose dual unit balls are symmetric.
    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            RegularizerKind::L1 | RegularizerKind::Nuclear => Some(1.0),
            _ => None,
        }
    }

    pub fn has_closed_form_subdiff_dist(&self) -> bool {
        self.kind != RegularizerKind::Identity
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.len() {
            return Err(Error::Shape {
                expected: self.shape.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn dims(&self) -> (usize, usize) {
        match self.shape {
            Shape::Matrix(r, c) => (r, c),
            Shape::Vector(p) => (p, 1),
        }
    }

    /// Divisor applied to the nuclear norm (1, or `d` for the scaled ball).
    fn nuclear_scale(&self) -> f64 {
        match self.kind {
            RegularizerKind::NuclearBallScaled => self.dims().0 as f64,
            _ => 1.0,
        }
    }

    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(match self.kind {
            RegularizerKind::Identity => 0.0,
            RegularizerKind::L1 => x.iter().map(|v| v.abs()).sum(),
            RegularizerKind::Nuclear | RegularizerKind::NuclearBallScaled => {
                let (r, c) = self.dims();
                linalg::singular_values(x, r, c)?.iter().sum::<f64>() / self.nuclear_scale()
            }
        })
    }

    /// Exact minimizer of `0.5 ||y - x||^2 + lambda ||x||_C`.
    pub fn prox(&self, y: &[f64], lambda: f64) -> Result<ProxResult> {
        self.check_len(y)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 || self.kind == RegularizerKind::Identity {
            return Ok(ProxResult {
                x_hat: y.to_vec(),
                objective: lambda * self.gauge(y)?,
            });
        }
        let (x_hat, gauge) = match self.kind {
            RegularizerKind::L1 => {
                let x: Vec<f64> = y.iter().map(|&v| soft_threshold(v, lambda)).collect();
                let g = x.iter().map(|v| v.abs()).sum();
                (x, g)
            }
            _ => {
                let (r, c) = self.dims();
                let scale = self.nuclear_scale();
                let svd = linalg::svd(y, r, c)?;
                let shrunk: Vec<f64> = svd
                    .singular_values
                    .iter()
                    .map(|&s| (s - lambda / scale).max(0.0))
                    .collect();
                let g = shrunk.iter().sum::<f64>() / scale;
                (svd.recombine(&shrunk), g)
            }
        };
        let fit: f64 = y.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(ProxResult {
            x_hat,
            objective: 0.5 * fit + lambda * gauge,
        })
    }

    /// Precomputes the subdifferential structure of the gauge at `x_ref`.
    pub fn subdiff_at(&self, x_ref: &[f64]) -> Result<Subdifferential> {
        self.check_len(x_ref)?;
        match self.kind {
            RegularizerKind::Identity => Err(Error::Capability(
                "the identity regularizer has no subdifferential distance".into(),
            )),
            RegularizerKind::L1 => Ok(Subdifferential {
                lambda_scale: 1.0,
                structure: Structure::L1 {
                    signs: x_ref.iter().map(|&v| sign(v)).collect(),
                },
            }),
            _ => {
                let (rows, cols) = self.dims();
                let svd = linalg::svd(x_ref, rows, cols)?;
                let top = svd.singular_values.first().copied().unwrap_or(0.0);
                let tol = top * 1e-10 * rows.max(cols) as f64;
                let rank = svd.singular_values.iter().filter(|&&s| s > tol && s > 0.0).count();
                let u = (0..rank).flat_map(|i| svd.u_col(i).to_vec()).collect();
                let v = (0..rank).flat_map(|i| svd.v_col(i).to_vec()).collect();
                Ok(Subdifferential {
                    lambda_scale: 1.0 / self.nuclear_scale(),
                    structure: Structure::Nuclear { rows, cols, rank, u, v },
                })
            }
        }
    }

    /// Euclidean distance from `g` to `lambda * d||x_ref||_C`.
    pub fn subdiff_dist(&self, x_ref: &[f64], g: &[f64], lambda: f64) -> Result<f64> {
        self.check_len(g)?;
        if !(lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(self.subdiff_at(x_ref)?.profile(g)?.dist(lambda))
    }
}

/// `sign(v) * max(|v| - t, 0)`, with `sign(0) = 0`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
enum Structure {
    L1 {
        signs: Vec<f64>,
    },
    Nuclear {
        rows: usize,
        cols: usize,
        rank: usize,
        // column-major rows x rank / cols x rank
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

/// The subdifferential `d||x||_C` at a fixed reference point.
///
/// For both shipped gauges the squared distance from `g` to
/// `lambda * d||x||_C` has the form
/// `a - 2 lambda b + lambda^2 c + sum_i (x_i - lambda)_+^2`,
/// where `(a, b, c)` come from the part of `g` aligned with the support
/// (or tangent space) and `x_i` are the magnitudes of the orthogonal part.
#[derive(Debug, Clone)]
pub struct Subdifferential {
    lambda_scale: f64,
    structure: Structure,
}

impl Subdifferential {
    /// Factor applied to `lambda` before comparing with the dual norm.
    pub fn lambda_scale(&self) -> f64 {
        self.lambda_scale
    }

    /// Decomposes `g` once so that distances for many `lambda` are cheap.
    pub fn profile(&self, g: &[f64]) -> Result<DistProfile> {
        let (a, b, c, mut tail) = match &self.structure {
            Structure::L1 { signs } => {
                if g.len() != signs.len() {
                    return Err(Error::Shape {
                        expected: signs.len(),
                        got: g.len(),
                    });
                }
                let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                let mut tail = Vec::new();
                for (&gi, &si) in g.iter().zip(signs) {
                    if si == 0.0 {
                        tail.push(gi.abs());
                    } else {
                        a += gi * gi;
                        b += si * gi;
                        c += 1.0;
                    }
                }
                (a, b, c, tail)
            }
            Structure::Nuclear { rows, cols, rank, u, v } => {
                let (rows, cols, rank) = (*rows, *cols, *rank);
                if g.len() != rows * cols {
                    return Err(Error::Shape {
                        expected: rows * cols,
                        got: g.len(),
                    });
                }
                // trace(U' G V)
                let mut b = 0.0;
                for k in 0..rank {
                    let uk = &u[k * rows..(k + 1) * rows];
                    let vk = &v[k * cols..(k + 1) * cols];
                    for (r, &ur) in uk.iter().enumerate() {
                        b += ur * dot(&g[r * cols..(r + 1) * cols], vk);
                    }
                }
                // P_T-perp(G) = (I - UU') G (I - VV')
                let mut perp = g.to_vec();
                for k in 0..rank {
                    let uk = &u[k * rows..(k + 1) * rows];
                    // w = U_k' G  (row vector of length cols)
                    let mut w = vec![0.0; cols];
                    for (r, &ur) in uk.iter().enumerate() {
                        for (wc, &x) in w.iter_mut().zip(&perp[r * cols..(r + 1) * cols]) {
                            *wc += ur * x;
                        }
                    }
                    for (r, &ur) in uk.iter().enumerate() {
                        for (x, &wc) in perp[r * cols..(r + 1) * cols].iter_mut().zip(&w) {
                            *x -= ur * wc;
                        }
                    }
                }
                for k in 0..rank {
                    let vk = &v[k * cols..(k + 1) * cols];
                    for r in 0..rows {
                        let row = &mut perp[r * cols..(r + 1) * cols];
                        let proj = dot(row, vk);
                        for (x, &vc) in row.iter_mut().zip(vk) {
                            *x -= proj * vc;
                        }
                    }
                }
                let g_sq = dot(g, g);
                let perp_sq = dot(&perp, &perp);
                let tail = linalg::singular_values(&perp, rows, cols)?;
                ((g_sq - perp_sq).max(0.0), b, rank as f64, tail)
            }
        };
        tail.sort_by(|x, y| y.total_cmp(x));
        let mut prefix1 = Vec::with_capacity(tail.len() + 1);
        let mut prefix2 = Vec::with_capacity(tail.len() + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        prefix1.push(0.0);
        prefix2.push(0.0);
        for &x in &tail {
            s1 += x;
            s2 += x * x;
            prefix1.push(s1);
            prefix2.push(s2);
        }
        Ok(DistProfile {
            lambda_scale: self.lambda_scale,
            a,
            b,
            c,
            tail,
            prefix1,
            prefix2,
        })
    }
}

/// `dist(g, lambda * d||x||_C)` as a function of `lambda` for fixed `g` and `x`.
#[derive(Debug, Clone)]
pub struct DistProfile {
    lambda_scale: f64,
    a: f64,
    b: f64,
    c: f64,
    /// Descending.
    tail: Vec<f64>,
    prefix1: Vec<f64>,
    prefix2: Vec<f64>,
}

impl DistProfile {
    pub fn dist(&self, lambda: f64) -> f64 {
        let l = lambda * self.lambda_scale;
        let aligned = self.a - 2.0 * l * self.b + l * l * self.c;
        let k = self.tail.partition_point(|&x| x > l);
        let shrunk = self.prefix2[k] - 2.0 * l * self.prefix1[k] + (k as f64) * l * l;
        (aligned.max(0.0) + shrunk.max(0.0)).sqrt()
    }

    /// Drops tail entries that cannot matter for any `lambda >= min_lambda`.
    pub fn truncated(mut self, min_lambda: f64) -> Self {
        let l = min_lambda * self.lambda_scale;
        let k = self.tail.partition_point(|&x| x > l);
        self.tail.truncate(k);
        self.prefix1.truncate(k + 1);
        self.prefix2.truncate(k + 1);
        self
    }
}
