//! Piecewise-constant signals, noisy observation sequences and the synthetic
//! generators used by the experiments.
//!
//! Time indices are 1-based throughout the public API: a segment covers
//! `start..=end` and `t` is a change-point when `X[t] != X[t + 1]`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist2, norm2};
use crate::rng;

/// Shape of one signal value. Matrices are stored flattened row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(p) => p,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(p) => vec![p],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = String;

    fn try_from(v: Vec<usize>) -> Result<Self, String> {
        match v.as_slice() {
            [p] if *p > 0 => Ok(Shape::Vector(*p)),
            [r, c] if *r > 0 && *c > 0 => Ok(Shape::Matrix(*r, *c)),
            _ => Err(format!("invalid shape {v:?}")),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Vector(p) => write!(f, "{p}"),
            Shape::Matrix(r, c) => write!(f, "{r}x{c}"),
        }
    }
}

/// One constant stretch `start..=end` (1-based, inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub value: Vec<f64>,
}

/// Ground-truth signal `X*[1..=n]` together with its change-point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantSignal {
    n: usize,
    shape: Shape,
    segments: Vec<Segment>,
    tau_star: Vec<usize>,
}

impl PiecewiseConstantSignal {
    /// Validates that the segments tile `1..=n` and that adjacent values differ.
    pub fn from_segments(shape: Shape, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::config("signal needs at least one segment"));
        }
        let mut next = 1;
        for (i, seg) in segments.iter().enumerate() {
            if seg.start != next || seg.end < seg.start {
                return Err(Error::config(format!(
                    "segment {i} covers {}..={} but must start at {next}",
                    seg.start, seg.end
                )));
            }
            if seg.value.len() != shape.len() {
                return Err(Error::Shape {
                    expected: shape.len(),
                    got: seg.value.len(),
                });
            }
            if i > 0 && segments[i - 1].value == seg.value {
                return Err(Error::config(format!(
                    "segments {} and {i} have identical values",
                    i - 1
                )));
            }
            next = seg.end + 1;
        }
        let tau_star = segments[..segments.len() - 1].iter().map(|s| s.end).collect();
        Ok(Self {
            n: next - 1,
            shape,
            segments,
            tau_star,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Sorted change-points `t` with `X[t] != X[t+1]`.
    pub fn tau_star(&self) -> &[usize] {
        &self.tau_star
    }

    /// `X*[t]` for 1-based `t`.
    pub fn value_at(&self, t: usize) -> &[f64] {
        assert!((1..=self.n).contains(&t), "time index {t} outside 1..={}", self.n);
        let i = self.segments.partition_point(|s| s.end < t);
        &self.segments[i].value
    }

    /// Segment values with duplicates removed (first occurrence order).
    pub fn distinct_values(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for s in &self.segments {
            if !out.contains(&s.value) {
                out.push(s.value.clone());
            }
        }
        out
    }

    /// Smallest Euclidean change size over the change-points, if any.
    pub fn delta_min(&self) -> Option<f64> {
        self.segments
            .windows(2)
            .map(|w| dist2(&w[0].value, &w[1].value))
            .min_by(f64::total_cmp)
    }

    /// Smallest spacing between consecutive change-points (needs two of them).
    pub fn t_min(&self) -> Option<usize> {
        self.tau_star.windows(2).map(|w| w[1] - w[0]).min()
    }

    /// The same signal with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                start: s.start,
                end: s.end,
                value: s.value.iter().map(|v| v * factor).collect(),
            })
            .collect();
        Self::from_segments(self.shape, segments)
    }

    /// Dense rows `X*[1..=n]`.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.n);
        for s in &self.segments {
            for _ in s.start..=s.end {
                rows.push(s.value.clone());
            }
        }
        rows
    }
}

/// Observations `Y[t] = X*[t] + eps[t]`, stored as `n` rows of `shape.len()` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub shape: Shape,
    pub data: Vec<Vec<f64>>,
    /// Noise level, when known (generated data).
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
}

impl ObservationSequence {
    pub fn new(shape: Shape, data: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|r| r.len() != shape.len()) {
            return Err(Error::Shape {
                expected: shape.len(),
                got: bad.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            sigma: None,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Row `Y[t]` for 1-based `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t - 1]
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every coordinate of the signal.
pub fn corrupt(signal: &PiecewiseConstantSignal, sigma: f64, seed: u64) -> Result<ObservationSequence> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
    }
    let p = signal.shape.len();
    let mut data = Vec::with_capacity(signal.n);
    for seg in &signal.segments {
        for t in seg.start..=seg.end {
            let mut row = seg.value.clone();
            if sigma > 0.0 {
                let mut r = rng::stream(seed, t as u64);
                let mut noise = vec![0.0; p];
                rng::fill_normal(&mut r, &mut noise);
                for (y, g) in row.iter_mut().zip(&noise) {
                    *y += sigma * g;
                }
            }
            data.push(row);
        }
    }
    Ok(ObservationSequence {
        shape: signal.shape,
        data,
        sigma: Some(sigma),
        seed: Some(seed),
    })
}

/// Parameters of a synthetic signal family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    /// Equal-length blocks of sparse vectors with geometrically growing amplitude.
    SparseBlocks {
        p: usize,
        n: usize,
        k_blocks: usize,
        s: usize,
        base: f64,
        growth: f64,
    },
    /// One change between two random rank-one `d x d` matrices.
    PlantedLowrank {
        d: usize,
        n: usize,
        change_at: usize,
        scale: f64,
    },
    /// Sign outer products `a a'` switching at the given change-points.
    CutMatrix {
        d: usize,
        n: usize,
        change_points: Vec<usize>,
    },
    /// Explicit segments.
    Custom { shape: Shape, segments: Vec<Segment> },
}

impl SignalSpec {
    pub fn generate(&self, seed: u64) -> Result<PiecewiseConstantSignal> {
        match self {
            SignalSpec::SparseBlocks {
                p,
                n,
                k_blocks,
                s,
                base,
                growth,
            } => generate_sparse_blocks(*p, *n, *k_blocks, *s, *base, *growth, seed),
            SignalSpec::PlantedLowrank { d, n, change_at, scale } => {
                generate_planted_lowrank(*d, *n, *change_at, *scale, seed)
            }
            SignalSpec::CutMatrix { d, n, change_points } => generate_cut_matrix(*d, *n, change_points, seed),
            SignalSpec::Custom { shape, segments } => PiecewiseConstantSignal::from_segments(*shape, segments.clone()),
        }
    }
}

const MAX_RESAMPLE: usize = 100;

/// `k_blocks` equal blocks; block `k` (1-based) has `s` entries equal to
/// `base * growth^(k-1)` at locations drawn uniformly without replacement,
/// independently per block.
pub fn generate_sparse_blocks(
    p: usize,
    n: usize,
    k_blocks: usize,
    s: usize,
    base: f64,
    growth: f64,
    seed: u64,
) -> Result<PiecewiseConstantSignal> {
    if p == 0 || n == 0 || k_blocks == 0 {
        return Err(Error::config("p, n and k_blocks must be positive"));
    }
    if !n.is_multiple_of(k_blocks) {
        return Err(Error::config(format!("k_blocks={k_blocks} does not divide n={n}")));
    }
    if s > p {
        return Err(Error::config(format!("sparsity s={s} exceeds dimension p={p}")));
    }
    let len = n / k_blocks;
    let mut segments: Vec<Segment> = Vec::with_capacity(k_blocks);
    for k in 0..k_blocks {
        let amp = base * growth.powi(k as i32);
        let mut r = rng::stream(seed, k as u64);
        let mut attempt = 0;
        let value = loop {
            let mut v = vec![0.0; p];
            for i in index::sample(&mut r, p, s) {
                v[i] = amp;
            }
            match segments.last() {
                Some(prev) if prev.value == v => {
                    attempt += 1;
                    if attempt >= MAX_RESAMPLE {
                        return Err(Error::config(format!(
                            "block {} cannot differ from its predecessor (s={s}, p={p}, growth={growth})",
                            k + 1
                        )));
                    }
                }
                _ => break v,
            }
        };
        segments.push(Segment {
            start: k * len + 1,
            end: (k + 1) * len,
            value,
        });
    }
    PiecewiseConstantSignal::from_segments(Shape::Vector(p), segments)
}

fn random_direction(r: &mut rng::Rng, d: usize, scale: f64) -> Vec<f64> {
    loop {
        let mut v = rng::normal_vec(r, d);
        let nrm = norm2(&v);
        if nrm > 0.0 {
            v.iter_mut().for_each(|x| *x *= scale / nrm);
            return v;
        }
    }
}

/// Two segments of `d x d` rank-one matrices `u v'`, with `u`, `v` uniform
/// directions of Euclidean norm `scale`, switching after `change_at`.
pub fn generate_planted_lowrank(
    d: usize,
    n: usize,
    change_at: usize,
    scale: f64,
    seed: u64,
) -> Result<PiecewiseConstantSignal> {
    if d == 0 {
        return Err(Error::config("dimension d must be positive"));
    }
    if change_at < 1 || change_at >= n {
        return Err(Error::config(format!("change_at={change_at} must lie in 1..{n}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!(
            "scale={scale} must be positive so the two segments differ"
        )));
    }
    let mut r = rng::stream(seed, 0);
    let mut outer = || {
        let u = random_direction(&mut r, d, scale);
        let v = random_direction(&mut r, d, scale);
        u.iter()
            .flat_map(|&a| v.iter().map(move |&b| a * b))
            .collect::<Vec<f64>>()
    };
    let first = outer();
    let second = outer();
    PiecewiseConstantSignal::from_segments(
        Shape::Matrix(d, d),
        vec![
            Segment {
                start: 1,
                end: change_at,
                value: first,
            },
            Segment {
                start: change_at + 1,
                end: n,
                value: second,
            },
        ],
    )
}

/// Segments valued `a a'` for fresh uniform sign vectors `a`, switching after
/// each of `change_points`. A draw equal to the previous segment is redrawn.
pub fn generate_cut_matrix(d: usize, n: usize, change_points: &[usize], seed: u64) -> Result<PiecewiseConstantSignal> {
    if d == 0 || n == 0 {
        return Err(Error::config("d and n must be positive"));
    }
    if change_points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("change_points must be strictly increasing"));
    }
    if let Some(&bad) = change_points.iter().find(|&&t| t < 1 || t >= n) {
        return Err(Error::config(format!("change-point {bad} outside 1..{n}")));
    }
    let mut r = rng::stream(seed, 0);
    let mut bounds: Vec<usize> = change_points.to_vec();
    bounds.push(n);
    let mut segments: Vec<Segment> = Vec::with_capacity(bounds.len());
    let mut start = 1;
    for (i, &end) in bounds.iter().enumerate() {
        let mut attempt = 0;
        let value = loop {
            let a: Vec<f64> = (0..d)
                .map(|_| if rand::Rng::random::<bool>(&mut r) { 1.0 } else { -1.0 })
                .collect();
            let v: Vec<f64> = a.iter().flat_map(|&x| a.iter().map(move |&y| x * y)).collect();
            match segments.last() {
                Some(prev) if prev.value == v => {
                    attempt += 1;
                    if attempt >= MAX_RESAMPLE {
                        return Err(Error::config(format!(
                            "segment {} kept matching its predecessor after {MAX_RESAMPLE} draws (d={d})",
                            i + 1
                        )));
                    }
                }
                _ => break v,
            }
        };
        segments.push(Segment { start, end, value });
        start = end + 1;
    }
    PiecewiseConstantSignal::from_segments(Shape::Matrix(d, d), segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    #[test]
    fn sparse_blocks_layout() {
        let s = generate_sparse_blocks(1000, 1000, 10, 30, 1.0, 1.2, 3).unwrap();
        assert_eq!(s.tau_star(), &[100, 200, 300, 400, 500, 600, 700, 800, 900]);
        for (k, seg) in s.segments().iter().enumerate() {
            assert_eq!(seg.end - seg.start + 1, 100);
            let nz: Vec<f64> = seg.value.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 30);
            let want = 1.2f64.powi(k as i32);
            assert!(nz.iter().all(|&v| v == want));
        }
    }

    #[test]
    fn sparse_blocks_small_cases() {
        let s = generate_sparse_blocks(5, 4, 1, 0, 1.0, 1.2, 0).unwrap();
        assert!(s.tau_star().is_empty());
        assert!(s.value_at(3).iter().all(|&v| v == 0.0));

        let s = generate_sparse_blocks(8, 6, 2, 2, 1.0, 2.0, 7).unwrap();
        assert_eq!(s.tau_star(), &[3]);
        let nz: Vec<f64> = s.value_at(4).iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz, vec![2.0, 2.0]);
    }

    #[test]
    fn sparse_blocks_rejects_bad_config() {
        assert!(generate_sparse_blocks(10, 7, 2, 1, 1.0, 1.0, 0).is_err());
        assert!(generate_sparse_blocks(3, 4, 2, 4, 1.0, 1.0, 0).is_err());
        // zero-sparsity blocks are all identical
        assert!(generate_sparse_blocks(3, 4, 2, 0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn planted_lowrank_properties() {
        for scale in [1.0, 2.0] {
            let s = generate_planted_lowrank(20, 100, 50, scale, 9).unwrap();
            assert_eq!(s.tau_star(), &[50]);
            assert_eq!(s.shape(), Shape::Matrix(20, 20));
            for seg in s.segments() {
                let sv = singular_values(&seg.value, 20, 20).unwrap();
                assert!((sv[0] - scale * scale).abs() < 1e-10);
                assert!(sv[1] < 1e-10);
            }
        }
        assert!(generate_planted_lowrank(3, 2, 1, 0.0, 1).is_err());
        assert!(generate_planted_lowrank(3, 10, 10, 1.0, 1).is_err());
    }

    #[test]
    fn cut_matrix_small_cases() {
        let s = generate_cut_matrix(4, 10, &[5], 1).unwrap();
        assert_eq!(s.tau_star(), &[5]);
        for seg in s.segments() {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(seg.value[i * 4 + j], seg.value[j * 4 + i]);
                    assert_eq!(seg.value[i * 4 + j].abs(), 1.0);
                }
            }
            let sv = singular_values(&seg.value, 4, 4).unwrap();
            assert!((sv[0] - 4.0).abs() < 1e-12 && sv[1] < 1e-12);
        }

        let s = generate_cut_matrix(1, 3, &[], 5).unwrap();
        assert_eq!(s.segments()[0].value, vec![1.0]);

        // Only two distinct sign outer products exist for d = 2, so three
        // segments must alternate.
        let s = generate_cut_matrix(2, 6, &[2, 4], 3).unwrap();
        assert_eq!(s.tau_star(), &[2, 4]);
        let v: Vec<&Vec<f64>> = s.segments().iter().map(|g| &g.value).collect();
        assert_ne!(v[0], v[1]);
        assert_ne!(v[1], v[2]);
        assert_eq!(v[0], v[2]);

        assert!(generate_cut_matrix(1, 4, &[2], 0).is_err());
        assert!(generate_cut_matrix(3, 4, &[4], 0).is_err());
    }

    #[test]
    fn corrupt_noiseless_is_identity() {
        let s = generate_sparse_blocks(6, 8, 2, 2, 1.0, 1.5, 2).unwrap();
        let y = corrupt(&s, 0.0, 1).unwrap();
        assert_eq!(y.data, s.dense());
        assert!(corrupt(&s, -1.0, 1).is_err());
    }

    #[test]
    fn corrupt_variance_matches_sigma() {
        let s = generate_sparse_blocks(200, 600, 3, 10, 1.0, 2.0, 4).unwrap();
        let sigma = 0.7;
        let y = corrupt(&s, sigma, 8).unwrap();
        let dense = s.dense();
        let (mut sum, mut sq, mut cnt) = (0.0, 0.0, 0.0);
        for (yr, xr) in y.data.iter().zip(&dense) {
            for (a, b) in yr.iter().zip(xr) {
                let e = a - b;
                sum += e;
                sq += e * e;
                cnt += 1.0;
            }
        }
        let var = sq / cnt - (sum / cnt).powi(2);
        assert!(cnt >= 1e5);
        assert!(
            (var / (sigma * sigma) - 1.0).abs() < 0.05,
            "variance ratio {}",
            var / (sigma * sigma)
        );
    }

    #[test]
    fn tau_star_matches_dense_differences() {
        let s = generate_cut_matrix(3, 40, &[7, 19, 33], 12).unwrap();
        let dense = s.dense();
        let recomputed: Vec<usize> = (1..s.n()).filter(|&t| dense[t - 1] != dense[t]).collect();
        assert_eq!(recomputed, s.tau_star());
    }

    #[test]
    fn from_segments_validates_tiling() {
        let seg = |a, b, v: f64| Segment {
            start: a,
            end: b,
            value: vec![v],
        };
        assert!(
            PiecewiseConstantSignal::from_segments(Shape::Vector(1), vec![seg(1, 3, 0.0), seg(5, 6, 1.0)]).is_err()
        );
        assert!(
            PiecewiseConstantSignal::from_segments(Shape::Vector(1), vec![seg(1, 3, 0.0), seg(4, 6, 0.0)]).is_err()
        );
        let s = PiecewiseConstantSignal::from_segments(Shape::Vector(1), vec![seg(1, 3, 0.0), seg(4, 6, 2.0)]).unwrap();
        assert_eq!(s.delta_min(), Some(2.0));
        assert_eq!(s.t_min(), None);
    }
}
