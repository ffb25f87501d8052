use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fdprox::detector::{self, detect_streaming, ChangePointReport, DetectorConfig};
use fdprox::format::{read_observations, write_csv, write_observations, SignalSidecar};
use fdprox::geometry::{
    analytic_eta_bound, check_recovery_condition, estimate_eta, scale_lambda, EtaBoundKind, EtaEstimate, LambdaGrid,
};
use fdprox::harness::{run_experiment, ExperimentConfig, ExperimentId, ExperimentOutcome, ExperimentParams};
use fdprox::reconstruct::{reconstruct_all, reconstruction_error_bound, LambdaPrimePolicy};
use fdprox::regularizer::{Regularizer, RegularizerKind};
use fdprox::rng::derive_seed;
use fdprox::signal::{corrupt, ObservationSequence, PiecewiseConstantSignal, SignalSpec};
use fdprox::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::{DetectArgs, EtaArgs, ExperimentArgs, GenerateArgs, ReconstructArgs, SignalKind};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", serde_json::to_string(value)?) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn read_obs(path: &Path) -> Result<ObservationSequence> {
    read_observations(open(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn read_sidecar(path: &Path) -> Result<(SignalSidecar, PiecewiseConstantSignal)> {
    let side: SignalSidecar =
        serde_json::from_reader(open(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let sig = side.to_signal()?;
    Ok((side, sig))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn require<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required for --kind {kind}")))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(Error::Config(format!(
            "--sigma must be finite and >= 0, got {}",
            a.sigma
        )));
    }
    let spec = match a.kind {
        SignalKind::SparseBlocks => SignalSpec::SparseBlocks {
            p: require(a.p, "p", "sparse-blocks")?,
            n: a.n,
            k_blocks: require(a.k_blocks, "k-blocks", "sparse-blocks")?,
            s: require(a.s, "s", "sparse-blocks")?,
            base: a.base,
            growth: a.growth,
        },
        SignalKind::PlantedLowrank => SignalSpec::PlantedLowrank {
            d: require(a.d, "d", "planted-lowrank")?,
            n: a.n,
            change_at: a.change_at.unwrap_or(a.n / 2),
            scale: a.scale,
        },
        SignalKind::CutMatrix => SignalSpec::CutMatrix {
            d: require(a.d, "d", "cut-matrix")?,
            n: a.n,
            change_points: require(a.change_points.clone(), "change-points", "cut-matrix")?,
        },
    };
    let signal = spec.generate(a.seed)?;
    let obs = corrupt(&signal, a.sigma, derive_seed(a.seed, 1))?;
    let side_path = a
        .signal_out
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output, ".signal.json"));

    let mut w = create(&a.output)?;
    write_observations(&mut w, &obs)?;
    w.flush()?;
    write_json(
        Some(&side_path),
        &SignalSidecar::new(&signal, Some(a.seed), Some(a.sigma)),
    )?;

    write_json(
        None,
        &json!({
            "output": a.output,
            "signal": side_path,
            "n": signal.n(),
            "shape": signal.shape(),
            "tau_star": signal.tau_star(),
            "delta_min": signal.delta_min(),
            "t_min": signal.t_min(),
            "sigma": a.sigma,
            "seed": a.seed,
        }),
    )
}

#[derive(Serialize)]
struct AutoLambda {
    lambda: f64,
    lambda_star: f64,
    eta: f64,
    sigma: f64,
    num_samples: usize,
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    #[serde(flatten)]
    report: &'a ChangePointReport,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_auto: Option<AutoLambda>,
}

/// `eta` and `lambda_star` of the distinct values in a sidecar.
fn sidecar_eta(
    kind: RegularizerKind,
    signal: &PiecewiseConstantSignal,
    samples: usize,
    seed: u64,
) -> Result<EtaEstimate> {
    let reg = Regularizer::new(kind, signal.shape())?;
    estimate_eta(&reg, &signal.distinct_values(), samples, &LambdaGrid::default(), seed)
}

fn noise_level(flag: Option<f64>, side: &SignalSidecar, why: &str) -> Result<f64> {
    let sigma = flag
        .or(side.sigma)
        .ok_or_else(|| Error::Config(format!("{why} needs --sigma (the sidecar records none)")))?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("{why} needs sigma > 0, got {sigma}")));
    }
    Ok(sigma)
}

pub fn detect(a: &DetectArgs) -> Result<()> {
    let obs = read_obs(&a.input)?;
    let mut lambda_auto = None;
    let lambda = if a.lambda == "auto" {
        if a.prox == RegularizerKind::Identity {
            return Err(Error::Config(
                "--lambda auto needs a regularizer other than --prox none".into(),
            ));
        }
        let side_path = a
            .signal
            .as_deref()
            .ok_or_else(|| Error::Config("--lambda auto needs --signal <sidecar.json>".into()))?;
        let (side, signal) = read_sidecar(side_path)?;
        let sigma = noise_level(a.sigma, &side, "--lambda auto")?;
        let est = sidecar_eta(a.prox, &signal, a.samples, a.seed)?;
        let lambda = scale_lambda(est.lambda_star, sigma, a.theta);
        lambda_auto = Some(AutoLambda {
            lambda,
            lambda_star: est.lambda_star,
            eta: est.eta,
            sigma,
            num_samples: est.num_samples,
        });
        lambda
    } else {
        a.lambda
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("--lambda expects a number or 'auto', got '{}'", a.lambda)))?
    };
    let config = DetectorConfig::new(a.theta, a.gamma, lambda, a.prox).with_mode(a.mode);
    config.validate()?;
    let report = if a.stream {
        detect_streaming(obs.data.iter().map(Vec::as_slice), obs.shape, &config)?.1
    } else {
        detector::detect(&obs, &config)?
    };
    write_json(
        a.output.as_deref(),
        &DetectOutput {
            report: &report,
            seed: a.seed,
            lambda_auto,
        },
    )
}

pub fn eta(a: &EtaArgs) -> Result<()> {
    use fdprox::signal::{generate_planted_lowrank, generate_sparse_blocks};
    let (reps, shape, bound) = match a.prox {
        RegularizerKind::L1 => {
            let s = a
                .sparsity
                .ok_or_else(|| Error::Config("--sparsity is required for --prox l1".into()))?;
            let sig = generate_sparse_blocks(a.dim, 1, 1, s, 1.0, 1.0, a.seed)?;
            let bound = analytic_eta_bound(EtaBoundKind::Sparse { s, p: a.dim })?;
            (sig.distinct_values(), sig.shape(), Some(bound))
        }
        RegularizerKind::Nuclear | RegularizerKind::NuclearBallScaled => {
            let r = a
                .rank
                .ok_or_else(|| Error::Config(format!("--rank is required for --prox {}", a.prox)))?;
            if r == 0 || r > a.dim {
                return Err(Error::Config(format!("--rank must lie in 1..={}, got {r}", a.dim)));
            }
            // sum of r independent rank-one matrices is rank r almost surely
            let mut x = vec![0.0; a.dim * a.dim];
            for k in 0..r {
                let sig = generate_planted_lowrank(a.dim, 2, 1, 1.0, derive_seed(a.seed, k as u64))?;
                x.iter_mut().zip(sig.value_at(1)).for_each(|(a, b)| *a += b);
            }
            let bound = analytic_eta_bound(EtaBoundKind::LowRank { r, d: a.dim })?;
            (vec![x], fdprox::signal::Shape::Matrix(a.dim, a.dim), Some(bound))
        }
        RegularizerKind::Identity => {
            return Err(Error::Config("eta is undefined for --prox none".into()));
        }
    };
    let reg = Regularizer::new(a.prox, shape)?;
    let est = estimate_eta(&reg, &reps, a.samples, &LambdaGrid::default(), derive_seed(a.seed, 1))?;
    write_json(
        a.output.as_deref(),
        &json!({
            "prox": a.prox.cli_name(),
            "dim": a.dim,
            "sparsity": a.sparsity,
            "rank": a.rank,
            "eta": est.eta,
            "lambda_star": est.lambda_star,
            "std_error": est.std_error,
            "bound": bound,
            "num_samples": est.num_samples,
            "curve": est.curve,
            "seed": a.seed,
        }),
    )
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let obs = read_obs(&a.input)?;
    let report: ChangePointReport =
        serde_json::from_reader(open(&a.report)?).map_err(|e| Error::Config(format!("{}: {e}", a.report.display())))?;
    let theta = a.theta.unwrap_or(report.config.theta);
    if theta < 1 {
        return Err(Error::Config("--theta must be >= 1".into()));
    }
    let kind = a.prox.unwrap_or(report.config.regularizer);
    let reg = Regularizer::new(kind, obs.shape)?;

    let mut eta = None;
    let mut condition = None;
    let policy = if let Some(l) = a.lambda_prime {
        LambdaPrimePolicy::Fixed { lambda: l }
    } else if let (Some(path), true) = (a.signal.as_deref(), kind != RegularizerKind::Identity) {
        let (side, signal) = read_sidecar(path)?;
        let sigma = noise_level(a.sigma, &side, "automatic lambda'")?;
        let est = sidecar_eta(kind, &signal, a.samples, a.seed)?;
        if let (Some(dm), Some(tm)) = (signal.delta_min(), signal.t_min()) {
            condition = Some(check_recovery_condition(dm, tm as f64, sigma, obs.n(), a.r, est.eta)?);
        }
        let policy = LambdaPrimePolicy::Auto {
            lambda_star: est.lambda_star,
            sigma,
        };
        eta = Some((est.eta, sigma));
        policy
    } else {
        // keep the detector's per-observation scaling: lambda * sqrt(theta / m)
        LambdaPrimePolicy::Auto {
            lambda_star: report.config.lambda * (report.config.theta as f64).sqrt(),
            sigma: 1.0,
        }
    };
    let rec = reconstruct_all(&obs, &report, theta, &reg, &policy, condition.as_ref())?;

    let rows: Vec<Vec<f64>> = rec.segments.iter().map(|s| s.x_bar.clone()).collect();
    let mut w = create(&a.output)?;
    write_csv(&mut w, obs.shape, &rows)?;
    w.flush()?;

    let segments: Vec<_> = rec
        .segments
        .iter()
        .map(|s| {
            json!({
                "t1": s.t1,
                "t2": s.t2,
                "interval": s.interval,
                "m": s.m,
                "lambda_prime": s.lambda_prime,
                "error_bound_s3": eta.filter(|_| rec.bound_applicable)
                    .map(|(e, sigma)| reconstruction_error_bound(sigma, s.m, e, 3.0)),
            })
        })
        .collect();
    let meta = a.meta.clone().unwrap_or_else(|| a.output.with_extension("json"));
    write_json(
        Some(&meta),
        &json!({
            "n": obs.n(),
            "shape": obs.shape,
            "theta": theta,
            "prox": kind.cli_name(),
            "policy": policy,
            "segments": segments,
            "warnings": rec.warnings,
            "bound_applicable": rec.bound_applicable,
            "condition": condition,
            "values": a.output,
            "seed": a.seed,
        }),
    )
}

fn default_trials(id: ExperimentId) -> usize {
    match id {
        ExperimentId::Exp1Lowrank => 20,
        ExperimentId::Exp2Sparse => 50,
        ExperimentId::TradeoffSampling => 20,
        ExperimentId::RateVerification => 200,
    }
}

fn id_name(id: ExperimentId) -> String {
    serde_json::to_value(id)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_traces(dir: &Path, outcome: &ExperimentOutcome) -> Result<PathBuf> {
    let (name, header, lines): (&str, &str, Vec<String>) = match outcome {
        ExperimentOutcome::Exp1Lowrank(r) => {
            let mut lines = Vec::new();
            for (i, tr) in r.trials.iter().enumerate() {
                for (k, (sp, sb)) in tr.proposed.derivative.iter().zip(&tr.baseline.derivative).enumerate() {
                    let t = tr.proposed.s_start + k;
                    lines.push(format!("{i},{},{},{t},{sp},{sb}", tr.seed, tr.scale));
                }
            }
            ("exp1_traces.csv", "trial,seed,scale,t,s_proposed,s_baseline", lines)
        }
        ExperimentOutcome::Exp2Sparse(r) => {
            let mut lines = Vec::new();
            for (i, tr) in r.trials.iter().enumerate() {
                for (j, run) in tr.runs.iter().enumerate() {
                    for (k, s) in run.report.derivative.iter().enumerate() {
                        let t = run.report.s_start + k;
                        lines.push(format!("{i},{},{},{},{t},{s}", tr.seed, j + 1, run.report.config.theta));
                    }
                }
            }
            ("exp2_traces.csv", "trial,seed,run,theta,t,s", lines)
        }
        ExperimentOutcome::TradeoffSampling(r) => {
            let mut lines = Vec::new();
            for (i, tr) in r.trials.iter().enumerate() {
                for (label, run) in [("coarse", &tr.coarse), ("fine", &tr.fine)] {
                    for (g, w) in run.groups.iter().zip(&run.windows) {
                        lines.push(format!("{i},{},{label},{},{},{},{}", tr.seed, g.lo, g.hi, w[0], w[1]));
                    }
                }
            }
            (
                "tradeoff_windows.csv",
                "trial,seed,sampling,lo,hi,window_lo,window_hi",
                lines,
            )
        }
        ExperimentOutcome::RateVerification(r) => {
            let lines = r
                .trials
                .iter()
                .enumerate()
                .map(|(i, tr)| {
                    let viol: Vec<String> = tr.reconstruction_violations.iter().map(|v| v.to_string()).collect();
                    format!(
                        "{i},{},{},{},{},{},{},{}",
                        tr.seed,
                        tr.success,
                        tr.groups_ok,
                        tr.e1_failed,
                        tr.e2_failed,
                        opt(tr.max_location_error),
                        viol.join(";")
                    )
                })
                .collect();
            (
                "rates_trials.csv",
                "trial,seed,success,groups_ok,e1_failed,e2_failed,max_location_error,reconstruction_violations",
                lines,
            )
        }
    };
    let path = dir.join(name);
    let mut w = create(&path)?;
    writeln!(w, "{header}")?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(path)
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let trials = a.trials.unwrap_or_else(|| default_trials(a.id));
    if trials == 0 {
        return Err(Error::Config("--trials must be >= 1".into()));
    }
    let config = ExperimentConfig {
        trials,
        seed: a.seed,
        experiment: ExperimentParams::defaults(a.id),
    };
    let result = run_experiment(&config)?;
    std::fs::create_dir_all(&a.out)?;
    let name = id_name(a.id);
    let json_path = a.out.join(format!("{name}.json"));
    write_json(Some(&json_path), &result)?;
    let traces = write_traces(&a.out, &result.outcome)?;
    let summary = match &result.outcome {
        ExperimentOutcome::Exp1Lowrank(r) => serde_json::to_value(&r.summary)?,
        ExperimentOutcome::Exp2Sparse(r) => serde_json::to_value(&r.summary)?,
        ExperimentOutcome::TradeoffSampling(r) => serde_json::to_value(&r.summary)?,
        ExperimentOutcome::RateVerification(r) => serde_json::to_value(&r.summary)?,
    };
    write_json(
        None,
        &json!({
            "id": name,
            "seed": a.seed,
            "trials": trials,
            "files": [json_path, traces],
            "summary": summary,
        }),
    )
}
