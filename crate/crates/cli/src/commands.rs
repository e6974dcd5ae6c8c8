use std::path::{Path, PathBuf};

use jdevar_core::data::{load_prices, to_log_returns, ReturnSample};
use jdevar_core::estimate::{fit_els, ElsProblem};
use jdevar_core::model::{ModelKind, ModelParams, TruncationPolicy};
use jdevar_core::optimize::{
    attainable_range, efficient_frontier, evar_objective_gradient, kkt_check, recover_multipliers, target_grid,
    write_frontier_csv, FrontierEntry, KktReport, Multipliers, Portfolio, RiskKind, BOUND_TOL,
};
use jdevar_core::risk::{evar_model, stdev_portfolio, RiskLevel};
use jdevar_core::{Error, ErrorCategory};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::args::{EvarArgs, FitArgs, Format, FrontierArgs, KktArgs, ModelArg, ParamsInput, RiskArg, SimulateArgs};

const SIGN_CONVENTION: &str = "returns are gains; EVaR is a loss figure, larger means riskier";

/// A failed command: machine-readable kind, message and exit code.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into(), exit_code: 2 }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit_code = match e.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Solver => 4,
        };
        Self { kind: e.code().into(), message: e.to_string(), exit_code }
    }
}

/// Bytes destined for a file, or stdout when `path` is `None`.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

/// Everything a command produced. `deferred` is reported after the
/// artifacts are written, for partial successes.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub deferred: Option<Failure>,
}

impl Outcome {
    fn single(path: Option<PathBuf>, bytes: Vec<u8>) -> Self {
        Self { artifacts: vec![Artifact { path, bytes }], deferred: None }
    }
}

fn level_from(confidence: f64) -> Result<RiskLevel, Failure> {
    RiskLevel::from_confidence(confidence).map_err(|_| {
        Failure::config("INVALID_PARAMETER", format!("--alpha is a confidence level in (0,1), got {confidence}"))
    })
}

fn preamble(kind: ModelKind, level: RiskLevel) -> Vec<String> {
    vec![
        format!("model: {kind}"),
        format!("confidence {} maps to EVaR level alpha = 1 - confidence = {}", level.confidence(), level.alpha()),
        SIGN_CONVENTION.to_string(),
    ]
}

fn convention(level: RiskLevel) -> serde_json::Value {
    json!({
        "confidence": level.confidence(),
        "alpha": level.alpha(),
        "mapping": "alpha = 1 - confidence",
        "sign": SIGN_CONVENTION,
    })
}

fn load_params(input: &ParamsInput) -> Result<ModelParams, Failure> {
    let text = std::fs::read_to_string(&input.params).map_err(|e| Failure {
        kind: "IO_ERROR".into(),
        message: format!("{}: {e}", input.params.display()),
        exit_code: 3,
    })?;
    let params = ModelParams::from_json_str(&text)?;
    if let Some(expected) = input.model {
        let got = params.as_model().kind();
        if got != model_kind(expected) {
            return Err(Failure::config("MODEL_MISMATCH", format!("expected {} but {} holds {got}", model_kind(expected), input.params.display())));
        }
    }
    Ok(params)
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::One => ModelKind::Model1,
        ModelArg::Two => ModelKind::Model2,
    }
}

fn parse_weights(text: &str, n: usize) -> Result<DVector<f64>, Failure> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::config("INVALID_PARAMETER", format!("--weights is not a comma-separated list of numbers: {text:?}")))?;
    if values.len() != n {
        return Err(Failure::config("INVALID_PARAMETER", format!("{} weights for {n} assets", values.len())));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Failure::config("INVALID_PARAMETER", "weights must be finite and non-negative"));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Failure::config("INVALID_PARAMETER", format!("weights sum to {sum}, expected 1")));
    }
    Ok(DVector::from_vec(values))
}

fn parse_targets(spec: Option<&str>, means: &DVector<f64>) -> Result<Vec<f64>, Failure> {
    let (lo, hi) = attainable_range(means);
    let grid = match spec {
        None => target_grid(lo, hi, 10)?,
        Some(text) => {
            let parts: Vec<&str> = text.split(':').collect();
            let bad = || Failure::config("INVALID_PARAMETER", format!("--targets expects min:max:count, got {text:?}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
            target_grid(min, max, count).map_err(|e| Failure::config("INVALID_PARAMETER", e.to_string()))?
        }
    };
    let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    if let Some(t) = grid.iter().find(|&&t| t < lo - slack || t > hi + slack) {
        return Err(Failure::config(
            "INFEASIBLE_TARGET",
            format!("target {t} outside attainable range [{lo}, {hi}]"),
        ));
    }
    Ok(grid)
}

fn to_json(value: &impl Serialize) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn fit(args: &FitArgs) -> Result<Outcome, Failure> {
    if args.starts == 0 {
        return Err(Failure::config("INVALID_PARAMETER", "--starts must be at least 1"));
    }
    let data = match (&args.returns, args.prices.is_empty()) {
        (Some(path), _) => {
            let file = std::fs::File::open(path).map_err(Error::from)?;
            ReturnSample::read_csv(file)?
        }
        (None, false) => to_log_returns(&load_prices(&args.prices)?)?,
        (None, true) => return Err(Failure::config("MISSING_INPUT", "fit needs --prices or --returns")),
    };
    let problem = ElsProblem::new(data, model_kind(args.model))?;
    let result = fit_els(&problem, args.starts, args.seed)?;
    Ok(Outcome::single(args.out.clone(), to_json(&result)?))
}

#[derive(Serialize)]
struct EvarReport {
    model: ModelKind,
    convention: serde_json::Value,
    weights: Vec<f64>,
    expected_return: f64,
    stdev: f64,
    evar: f64,
    s_star: f64,
    iterations: usize,
    converged: bool,
    /// Mixture density at the mean return vector, when it can be evaluated.
    density_at_mean: Option<f64>,
}

pub fn evar(args: &EvarArgs) -> Result<Outcome, Failure> {
    let level = level_from(args.alpha)?;
    let params = load_params(&args.input)?;
    let model = params.as_model();
    let weights = parse_weights(&args.weights, model.n_assets())?;
    let defaults = TruncationPolicy::default();
    let policy = TruncationPolicy::new(
        args.tail_mass.unwrap_or(defaults.tail_mass),
        args.max_terms.unwrap_or(defaults.max_terms),
    )
    .map_err(|e| Failure::config("INVALID_PARAMETER", e.to_string()))?;

    let result = evar_model(model, &weights, level)?;
    let means = model.mean();
    let report = EvarReport {
        model: model.kind(),
        convention: convention(level),
        weights: weights.iter().copied().collect(),
        expected_return: means.dot(&weights),
        stdev: stdev_portfolio(&model.covariance(), &weights)?,
        evar: result.value,
        s_star: result.s_star,
        iterations: result.iterations,
        converged: result.converged,
        density_at_mean: model.density(&means, &policy).ok(),
    };
    let bytes = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut out = String::new();
            for line in preamble(report.model, level) {
                out += &format!("# {line}\n");
            }
            out += "expected_return,stdev,evar,s_star,iterations,converged,density_at_mean";
            for i in 1..=report.weights.len() {
                out += &format!(",w_{i}");
            }
            out += &format!(
                "\n{:.10},{:.10},{:.10},{:.10},{},{},{}",
                report.expected_return,
                report.stdev,
                report.evar,
                report.s_star,
                report.iterations,
                report.converged,
                report.density_at_mean.map_or(String::new(), |d| format!("{d:.10e}")),
            );
            for w in &report.weights {
                out += &format!(",{w:.10}");
            }
            out.push('\n');
            out.into_bytes()
        }
    };
    Ok(Outcome::single(args.out.clone(), bytes))
}

/// `dir/stem.ext` becomes `dir/stem_<suffix>.ext`.
fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

pub fn frontier(args: &FrontierArgs) -> Result<Outcome, Failure> {
    let level = level_from(args.alpha)?;
    let params = load_params(&args.input)?;
    let model = params.as_model();
    let targets = parse_targets(args.targets.as_deref(), &model.mean())?;
    let kinds: &[RiskKind] = match args.risk {
        RiskArg::Evar => &[RiskKind::Evar],
        RiskArg::Stdev => &[RiskKind::Stdev],
        RiskArg::Both => &[RiskKind::Evar, RiskKind::Stdev],
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Failure::config("INVALID_PARAMETER", "--jobs must be at least 1"));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| Failure::config("THREAD_POOL", e.to_string()))?;

    let curves: Vec<(RiskKind, Vec<FrontierEntry>)> =
        kinds.iter().map(|&k| (k, pool.install(|| efficient_frontier(model, level, &targets, k)))).collect();
    let failed = curves.iter().flat_map(|(_, c)| c).filter(|e| e.point.is_none()).count();
    let deferred = (failed > 0).then(|| Failure {
        kind: "FRONTIER_POINTS_FAILED".into(),
        message: format!("{failed} frontier point(s) could not be solved; see the output for per-target errors"),
        exit_code: 4,
    });

    let n = model.n_assets();
    let artifacts = match args.format {
        Format::Json => {
            let mut doc = serde_json::Map::new();
            doc.insert("model".into(), json!(model.kind()));
            doc.insert("convention".into(), convention(level));
            for (kind, entries) in &curves {
                doc.insert(kind.to_string(), serde_json::to_value(entries).map_err(Error::from)?);
            }
            vec![Artifact { path: args.out.clone(), bytes: to_json(&doc)? }]
        }
        Format::Csv => {
            let render = |kind: RiskKind, entries: &[FrontierEntry]| -> Result<Vec<u8>, Failure> {
                let mut lines = preamble(model.kind(), level);
                lines.push(format!("risk: {kind} (each row minimizes {kind} at its target)"));
                let mut buf = Vec::new();
                write_frontier_csv(&mut buf, entries, n, &lines)?;
                Ok(buf)
            };
            match (&args.out, curves.len()) {
                (Some(path), 2) => curves
                    .iter()
                    .map(|(k, e)| Ok(Artifact { path: Some(suffixed(path, &k.to_string())), bytes: render(*k, e)? }))
                    .collect::<Result<_, Failure>>()?,
                _ => {
                    let mut bytes = Vec::new();
                    for (i, (k, e)) in curves.iter().enumerate() {
                        if i > 0 {
                            bytes.push(b'\n');
                        }
                        bytes.extend(render(*k, e)?);
                    }
                    vec![Artifact { path: args.out.clone(), bytes }]
                }
            }
        }
    };
    Ok(Outcome { artifacts, deferred })
}

#[derive(Serialize)]
struct KktOutput {
    model: ModelKind,
    convention: serde_json::Value,
    weights: Vec<f64>,
    s: f64,
    target_return: f64,
    multipliers_source: &'static str,
    max_violation: f64,
    report: KktReport,
}

pub fn kkt(args: &KktArgs) -> Result<Outcome, Failure> {
    let level = level_from(args.alpha)?;
    let params = load_params(&args.input)?;
    let model = params.as_model();
    let n = model.n_assets();
    let weights = parse_weights(&args.weights, n)?;
    if !(args.s.is_finite() && args.s > 0.0) {
        return Err(Failure::config("INVALID_PARAMETER", format!("--s must be positive, got {}", args.s)));
    }
    let means = model.mean();
    let target = args.target.unwrap_or_else(|| means.dot(&weights));
    let (multipliers, source) = match &args.multipliers {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            let m: Multipliers = serde_json::from_str(&text).map_err(Error::from)?;
            if m.nu.len() != n + 1 {
                return Err(Failure::config("INVALID_PARAMETER", format!("expected {} values in nu, got {}", n + 1, m.nu.len())));
            }
            (m, "supplied")
        }
        None => {
            let grad = evar_objective_gradient(model, level, &weights, args.s)?;
            (recover_multipliers(&grad, &means, &weights, args.s, BOUND_TOL), "recovered")
        }
    };
    let point = Portfolio::new(weights.clone(), target);
    let report = kkt_check(model, level, &point, args.s, &multipliers)?;
    let out = KktOutput {
        model: model.kind(),
        convention: convention(level),
        weights: weights.iter().copied().collect(),
        s: args.s,
        target_return: target,
        multipliers_source: source,
        max_violation: report.max_violation(),
        report,
    };
    Ok(Outcome::single(args.out.clone(), to_json(&out)?))
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, Failure> {
    if args.count == 0 {
        return Err(Failure::config("INVALID_PARAMETER", "--count must be at least 1"));
    }
    let params = load_params(&args.input)?;
    let sample = params.as_model().sample(args.count, args.seed)?;
    let mut bytes = Vec::new();
    sample.write_csv(&mut bytes)?;
    Ok(Outcome::single(args.out.clone(), bytes))
}
