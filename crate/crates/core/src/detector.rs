//! Change-point estimation by proximal denoising of windowed means.
//!
//! Times are 1-based in every public result. `S` is reported for
//! `theta <= t <= n - theta`, with `S[t] = ||Xhat[t+1] - Xhat[t-theta+1]||`,
//! where `Xhat[i]` denoises the mean of `Y[i..i+theta-1]`.

use std::collections::VecDeque;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

// std has no clock on wasm32-unknown-unknown; timings read zero there
#[cfg(target_arch = "wasm32")]
#[derive(Clone, Copy)]
struct Instant;

#[cfg(target_arch = "wasm32")]
impl Instant {
    fn now() -> Self {
        Instant
    }

    fn elapsed(&self) -> std::time::Duration {
        std::time::Duration::ZERO
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist2;
use crate::regularizer::{Regularizer, RegularizerKind};
use crate::signal::{ObservationSequence, Shape};

/// Exact window sums are recomputed every this many windows.
pub const RECOMPUTE_INTERVAL: usize = 1 << 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    GroupsOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "groups" | "groups_only" | "groups-only" => Ok(Mode::GroupsOnly),
            other => Err(Error::config(format!("unknown mode '{other}' (expected full|groups)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub theta: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub regularizer: RegularizerKind,
    #[serde(default)]
    pub mode: Mode,
}

impl DetectorConfig {
    pub fn new(theta: usize, gamma: f64, lambda: f64, regularizer: RegularizerKind) -> Self {
        Self {
            theta,
            gamma,
            lambda,
            regularizer,
            mode: Mode::Full,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta < 1 {
            return Err(Error::config("theta must be >= 1"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// A maximal run of above-threshold indices, closed under gaps of at most `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Group {
    pub lo: usize,
    pub hi: usize,
}

impl From<[usize; 2]> for Group {
    fn from(v: [usize; 2]) -> Self {
        Group { lo: v[0], hi: v[1] }
    }
}

impl From<Group> for [usize; 2] {
    fn from(g: Group) -> Self {
        [g.lo, g.hi]
    }
}

impl Group {
    pub fn contains(&self, t: usize) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// Wall-clock per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub filter: f64,
    pub denoise: f64,
    pub difference: f64,
    pub threshold: f64,
    pub group: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub n: usize,
    /// Empty in groups-only mode.
    pub estimates: Vec<usize>,
    pub groups: Vec<Group>,
    /// Time index of the first entry of `S` and `thresholded` (equals theta).
    pub s_start: usize,
    #[serde(rename = "S")]
    pub derivative: Vec<f64>,
    pub thresholded: Vec<f64>,
    pub config: DetectorConfig,
    pub timing_ms: Timing,
}

impl ChangePointReport {
    /// `S[t]` for a 1-based time `t`, if in range.
    pub fn s_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.s_start)
            .and_then(|i| self.derivative.get(i))
            .copied()
    }

    /// JSON with the timing block removed, for comparing runs.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timing_ms");
        }
        Ok(serde_json::to_string(&v)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMeans {
    pub theta: usize,
    /// `ybar[i-1]` is the mean of `Y[i..i+theta-1]`.
    pub ybar: Vec<Vec<f64>>,
}

/// Sliding-window mean with a running sum; shared by batch and streaming
/// paths so both produce bit-identical means.
#[derive(Debug, Clone)]
pub(crate) struct WindowAccumulator {
    theta: usize,
    p: usize,
    ring: VecDeque<Vec<f64>>,
    sum: Vec<f64>,
    windows: usize,
}

impl WindowAccumulator {
    pub(crate) fn new(theta: usize, p: usize) -> Self {
        Self {
            theta,
            p,
            ring: VecDeque::with_capacity(theta + 1),
            sum: vec![0.0; p],
            windows: 0,
        }
    }

    /// Feeds one observation; returns the mean of the window that it completes.
    pub(crate) fn push(&mut self, row: &[f64]) -> Result<Option<Vec<f64>>> {
        if row.len() != self.p {
            return Err(Error::Shape {
                expected: self.p,
                got: row.len(),
            });
        }
        self.ring.push_back(row.to_vec());
        if self.ring.len() < self.theta {
            return Ok(None);
        }
        let old = if self.ring.len() > self.theta {
            self.ring.pop_front()
        } else {
            None
        };
        match old {
            Some(old) if !self.windows.is_multiple_of(RECOMPUTE_INTERVAL) => {
                for ((s, &a), &b) in self.sum.iter_mut().zip(row).zip(&old) {
                    *s = *s + a - b;
                }
            }
            _ => {
                self.sum.iter_mut().for_each(|s| *s = 0.0);
                for r in &self.ring {
                    for (s, &a) in self.sum.iter_mut().zip(r) {
                        *s += a;
                    }
                }
            }
        }
        self.windows += 1;
        let th = self.theta as f64;
        Ok(Some(self.sum.iter().map(|s| s / th).collect()))
    }
}

pub fn filter_means(obs: &ObservationSequence, theta: usize) -> Result<WindowMeans> {
    if theta < 1 || theta > obs.n() {
        return Err(Error::config(format!(
            "theta must satisfy 1 <= theta <= n (theta={theta}, n={})",
            obs.n()
        )));
    }
    let mut acc = WindowAccumulator::new(theta, obs.shape.len());
    let mut ybar = Vec::with_capacity(obs.n() - theta + 1);
    for row in &obs.data {
        if let Some(m) = acc.push(row)? {
            ybar.push(m);
        }
    }
    Ok(WindowMeans { theta, ybar })
}

/// `prox(Ybar[i], lambda)` for every window, in parallel.
pub fn denoise_windows(means: &WindowMeans, reg: &Regularizer, lambda: f64) -> Result<Vec<Vec<f64>>> {
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    means
        .ybar
        .par_iter()
        .map(|y| reg.prox(y, lambda).map(|r| r.x_hat))
        .collect()
}

/// `S[t]` for `theta <= t <= n - theta`; entry `k` is time `theta + k`.
pub fn difference(xhat: &[Vec<f64>], theta: usize) -> Vec<f64> {
    // 0-based: S at time t pairs xhat[t] with xhat[t - theta]
    (theta..xhat.len()).map(|t| dist2(&xhat[t], &xhat[t - theta])).collect()
}

pub fn threshold(s: &[f64], gamma: f64) -> Vec<f64> {
    s.iter().map(|&v| if v < gamma { 0.0 } else { v }).collect()
}

/// Incremental grouping of thresholded derivative values.
#[derive(Debug, Clone)]
pub(crate) struct Grouper {
    theta: usize,
    open: Option<(Group, usize, f64)>,
}

impl Grouper {
    pub(crate) fn new(theta: usize) -> Self {
        Self { theta, open: None }
    }

    /// Offers `S[t]` (after thresholding); returns a group closed by it.
    pub(crate) fn push(&mut self, t: usize, v: f64) -> Option<(Group, usize)> {
        if let Some((g, _, _)) = &self.open {
            if t - g.hi > self.theta {
                let closed = self.finish();
                self.push(t, v);
                return closed;
            }
        }
        if v == 0.0 {
            return None;
        }
        match &mut self.open {
            None => self.open = Some((Group { lo: t, hi: t }, t, v)),
            Some((g, best_t, best_v)) => {
                g.hi = t;
                if v > *best_v {
                    *best_t = t;
                    *best_v = v;
                }
            }
        }
        None
    }

    pub(crate) fn finish(&mut self) -> Option<(Group, usize)> {
        self.open.take().map(|(g, t, _)| (g, t))
    }
}

/// Groups nonzero entries of `s` (entry `k` is time `s_start + k`).
pub fn group_and_select(s: &[f64], s_start: usize, theta: usize, mode: Mode) -> (Vec<Group>, Vec<usize>) {
    let mut grouper = Grouper::new(theta);
    let mut found = Vec::new();
    for (k, &v) in s.iter().enumerate() {
        found.extend(grouper.push(s_start + k, v));
    }
    found.extend(grouper.finish());
    let groups = found.iter().map(|f| f.0).collect();
    let estimates = match mode {
        Mode::Full => found.iter().map(|f| f.1).collect(),
        Mode::GroupsOnly => Vec::new(),
    };
    (groups, estimates)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn detect(obs: &ObservationSequence, config: &DetectorConfig) -> Result<ChangePointReport> {
    config.validate()?;
    let n = obs.n();
    if n < 2 * config.theta {
        return Err(Error::config(format!(
            "need n >= 2 theta (n={n}, theta={})",
            config.theta
        )));
    }
    let reg = Regularizer::new(config.regularizer, obs.shape)?;
    let mut timing = Timing::default();
    let start = Instant::now();

    let t0 = Instant::now();
    let means = filter_means(obs, config.theta)?;
    timing.filter = ms(t0);

    let t0 = Instant::now();
    let xhat = denoise_windows(&means, &reg, config.lambda)?;
    timing.denoise = ms(t0);

    let t0 = Instant::now();
    let s = difference(&xhat, config.theta);
    timing.difference = ms(t0);

    let t0 = Instant::now();
    let st = threshold(&s, config.gamma);
    timing.threshold = ms(t0);

    let t0 = Instant::now();
    let (groups, estimates) = group_and_select(&st, config.theta, config.theta, config.mode);
    timing.group = ms(t0);
    timing.total = ms(start);

    Ok(ChangePointReport {
        n,
        estimates,
        groups,
        s_start: config.theta,
        derivative: s,
        thresholded: st,
        config: config.clone(),
        timing_ms: timing,
    })
}

/// A group finalized by the streaming detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEvent {
    pub group: Group,
    /// `None` in groups-only mode.
    pub estimate: Option<usize>,
}

/// Online version of [`detect`]: one observation at a time, bounded memory
/// apart from the derivative trace kept for the final report.
#[derive(Debug)]
pub struct StreamingDetector {
    config: DetectorConfig,
    reg: Regularizer,
    acc: WindowAccumulator,
    xhat: VecDeque<Vec<f64>>,
    windows: usize,
    n: usize,
    grouper: Grouper,
    derivative: Vec<f64>,
    thresholded: Vec<f64>,
    groups: Vec<Group>,
    estimates: Vec<usize>,
    timing: Timing,
}

impl StreamingDetector {
    pub fn new(config: DetectorConfig, shape: Shape) -> Result<Self> {
        config.validate()?;
        let reg = Regularizer::new(config.regularizer, shape)?;
        Ok(Self {
            acc: WindowAccumulator::new(config.theta, shape.len()),
            xhat: VecDeque::with_capacity(config.theta + 1),
            windows: 0,
            n: 0,
            grouper: Grouper::new(config.theta),
            derivative: Vec::new(),
            thresholded: Vec::new(),
            groups: Vec::new(),
            estimates: Vec::new(),
            timing: Timing::default(),
            config,
            reg,
        })
    }

    pub fn observations_seen(&self) -> usize {
        self.n
    }

    fn record(&mut self, closed: Option<(Group, usize)>, out: &mut Vec<GroupEvent>) {
        if let Some((g, t)) = closed {
            self.groups.push(g);
            let estimate = match self.config.mode {
                Mode::Full => {
                    self.estimates.push(t);
                    Some(t)
                }
                Mode::GroupsOnly => None,
            };
            out.push(GroupEvent { group: g, estimate });
        }
    }

    /// Feeds the next observation; returns groups that became final.
    pub fn push(&mut self, row: &[f64]) -> Result<Vec<GroupEvent>> {
        let start = Instant::now();
        let mut out = Vec::new();
        let t0 = Instant::now();
        let mean = self.acc.push(row)?;
        self.timing.filter += ms(t0);
        self.n += 1;
        if let Some(mean) = mean {
            let t0 = Instant::now();
            let xh = self.reg.prox(&mean, self.config.lambda)?.x_hat;
            self.timing.denoise += ms(t0);
            self.windows += 1;
            self.xhat.push_back(xh);
            let theta = self.config.theta;
            if self.xhat.len() > theta {
                // window w = windows completes S at t = w - 1
                let t = self.windows - 1;
                let t0 = Instant::now();
                let s = dist2(&self.xhat[theta], &self.xhat[0]);
                self.xhat.pop_front();
                self.timing.difference += ms(t0);
                let t0 = Instant::now();
                let st = if s < self.config.gamma { 0.0 } else { s };
                self.timing.threshold += ms(t0);
                self.derivative.push(s);
                self.thresholded.push(st);
                let t0 = Instant::now();
                let closed = self.grouper.push(t, st);
                self.record(closed, &mut out);
                self.timing.group += ms(t0);
            }
        }
        self.timing.total += ms(start);
        Ok(out)
    }

    /// Ends the stream, returning the remaining events and the full report.
    pub fn finish(mut self) -> (Vec<GroupEvent>, ChangePointReport) {
        let mut out = Vec::new();
        let closed = self.grouper.finish();
        self.record(closed, &mut out);
        let report = ChangePointReport {
            n: self.n,
            estimates: self.estimates,
            groups: self.groups,
            s_start: self.config.theta,
            derivative: self.derivative,
            thresholded: self.thresholded,
            config: self.config,
            timing_ms: self.timing,
        };
        (out, report)
    }
}

/// Runs the streaming detector over a row iterator.
pub fn detect_streaming<'a, I>(
    rows: I,
    shape: Shape,
    config: &DetectorConfig,
) -> Result<(Vec<GroupEvent>, ChangePointReport)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut det = StreamingDetector::new(config.clone(), shape)?;
    let mut events = Vec::new();
    for row in rows {
        events.extend(det.push(row)?);
    }
    let (tail, report) = det.finish();
    events.extend(tail);
    Ok((events, report))
}
