//! `aif` command-line front end: argument model, data ingestion, dispatch and
//! report/CSV emission.

use std::fs;
use std::path::{Path, PathBuf};

use aif_core::design::CurveRow;
use aif_core::l_estimator::LWeights;
use aif_core::{
    aif_convergence_study, aif_empirical, aif_finite_eta, aif_population, builtin_psi,
    exponential_tradeoff, gross_error_sensitivity, l_aif, l_estimate, min_aif_location,
    min_aif_scale, optimal_attack, ordering_safety_threshold, smallest_feasible_xi, solve,
    tradeoff_curve, tradeoff_location, tradeoff_scale, BuiltinPsi, DesignKind, DesignedPsi,
    DistributionModel, NormOrder, PopulationContext, PsiSpec, QuadOptions,
};
use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Attack,
    Aif,
    AifPop,
    Converge,
    DesignMin,
    DesignTradeoff,
    TradeoffCurve,
    LAif,
}

#[derive(Debug, Clone, Parser, Serialize)]
#[command(
    name = "aif",
    version,
    about = "Adversarial influence functions for robust estimators"
)]
pub struct Args {
    #[arg(long, value_enum)]
    pub command: Command,
    /// Builtin ψ (mean, huber, gaussian-scale-mle) or a designed-ψ JSON file.
    #[arg(long)]
    pub psi: Option<String>,
    /// Huber corner.
    #[arg(long)]
    pub b: Option<f64>,
    /// standard-normal, exponential-rate-1 (alias exponential, shifted-exponential),
    /// uniform(a,b) or tabulated:PATH.
    #[arg(long)]
    pub model: Option<String>,
    /// Norm order: a number ≥ 1 or inf.
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Decreasing η grid for the finite-η AIF extrapolation (aif).
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub xi_grid: Option<Vec<f64>>,
    /// location or scale.
    #[arg(long, default_value = "location")]
    pub kind: String,
    /// Use the closed-form exponential solution (design-tradeoff).
    #[arg(long)]
    pub closed_form: bool,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// L-estimator weights CSV (one weight per line).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// α for α-trimmed mean weights (l-aif).
    #[arg(long)]
    pub trim: Option<f64>,
    /// Sample size for generated L-estimator weights without data.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "aif-out")]
    pub out: PathBuf,
    /// Absolute quadrature tolerance for population integrals.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Points in the sampled ψ CSV.
    #[arg(long, default_value_t = 401)]
    pub samples: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] aif_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for domain errors, 2 for usage, parse and I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One value per line; a single header line is skipped when line 1 does not
/// parse. NaN and infinities are rejected.
pub fn ingest_str(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(CliError::Parse(format!(
                    "line {}: non-finite value {v} is not allowed",
                    i + 1
                )))
            }
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::Parse(format!(
                    "line {}: cannot parse {field:?} as a number",
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Parse("no data values found".into()));
    }
    Ok(out)
}

pub fn ingest(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ingest_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn parse_model(s: &str) -> CliResult<DistributionModel> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    match lower.as_str() {
        "standard-normal" | "normal" => return Ok(DistributionModel::StandardNormal),
        "exponential-rate-1" | "exponential" | "shifted-exponential" => {
            return Ok(DistributionModel::ExponentialRate1)
        }
        _ => {}
    }
    if let Some(path) = t.strip_prefix("tabulated:") {
        let p = Path::new(path);
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        return Ok(DistributionModel::Tabulated(
            aif_core::Tabulated::from_csv_str(&text)?,
        ));
    }
    if let Some(inner) = lower
        .strip_prefix("uniform(")
        .and_then(|r| r.strip_suffix(')'))
    {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if let [a, b] = parts[..] {
            let a: f64 = a
                .parse()
                .map_err(|_| CliError::Usage(format!("bad uniform bound {a:?}")))?;
            let b: f64 = b
                .parse()
                .map_err(|_| CliError::Usage(format!("bad uniform bound {b:?}")))?;
            return Ok(DistributionModel::uniform(a, b)?);
        }
    }
    Err(CliError::Usage(format!(
        "unknown model {s:?} (expected standard-normal, exponential-rate-1, uniform(a,b) or tabulated:PATH)"
    )))
}

pub fn parse_kind(s: &str) -> CliResult<DesignKind> {
    s.parse::<DesignKind>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// A ψ selected on the command line: builtin or a designed ψ loaded from JSON.
pub enum PsiChoice {
    Builtin(BuiltinPsi),
    Designed(Box<DesignedPsi>),
}

impl PsiChoice {
    pub fn spec(&self) -> CliResult<PsiSpec> {
        match self {
            PsiChoice::Builtin(b) => Ok(builtin_psi(*b)?),
            PsiChoice::Designed(d) => Ok(d.to_psi_spec()),
        }
    }

    fn describe(&self) -> Value {
        match self {
            PsiChoice::Builtin(b) => json!(b),
            PsiChoice::Designed(d) => json!({"designed": d.label()}),
        }
    }
}

pub fn parse_psi(name: &str, b: Option<f64>) -> CliResult<PsiChoice> {
    let path = Path::new(name);
    if name.ends_with(".json") || path.is_file() {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let d: DesignedPsi = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: not a designed psi: {e}", path.display())))?;
        return Ok(PsiChoice::Designed(Box::new(d)));
    }
    BuiltinPsi::parse(name, b)
        .map(PsiChoice::Builtin)
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// A CSV artifact: file name, header and rows of already formatted cells.
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Report plus artifacts of one run.
pub struct Outcome {
    pub report: Value,
    pub tables: Vec<Table>,
    pub json_files: Vec<(String, Value)>,
}

fn need<T: Clone>(v: &Option<T>, flag: &str, command: Command) -> CliResult<T> {
    v.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "--{flag} is required for --command {}",
            command_name(command)
        ))
    })
}

fn command_name(c: Command) -> String {
    c.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// JSON has no infinities; non-finite numbers are written as strings.
fn finite_or_text(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn design_outputs(d: &DesignedPsi, samples: usize) -> CliResult<(Value, Table)> {
    let kkt = d.kkt_report()?;
    let (lo, hi) = d.plot_range();
    let rows = d
        .sample_curve(lo, hi, samples)
        .into_iter()
        .map(|(x, y)| vec![num(x), num(y)])
        .collect();
    let results = json!({
        "design": d,
        "boundary_a": d.active_region.last().map(|r| finite_or_text(r.hi)),
        "kkt": kkt,
        "kkt_failures": kkt.failures(aif_core::design::KKT_TOLERANCE),
    });
    Ok((
        results,
        Table {
            name: "psi.csv".into(),
            header: vec!["x", "psi"],
            rows,
        },
    ))
}

pub fn run(args: &Args) -> CliResult<Outcome> {
    let cmd = args.command;
    let p: NormOrder = args
        .p
        .parse()
        .map_err(|e: aif_core::Error| CliError::Usage(e.to_string()))?;
    let opts = QuadOptions::with_abs_tol(args.tol);
    let mut tables = Vec::new();
    let mut json_files: Vec<(String, Value)> = Vec::new();
    let mut inputs = serde_json::Map::new();
    let mut echo = |k: &str, v: Value| {
        inputs.insert(k.to_string(), v);
    };

    let results: Value = match cmd {
        Command::Fit | Command::Attack | Command::Aif => {
            let psi = parse_psi(&need(&args.psi, "psi", cmd)?, args.b)?;
            let data_path = need(&args.data, "data", cmd)?;
            let data = ingest(&data_path)?;
            echo("psi", psi.describe());
            echo("data", json!(data_path.display().to_string()));
            echo("n", json!(data.len()));
            let spec = psi.spec()?;
            match cmd {
                Command::Fit => json!({ "estimate": solve(&spec, &data)? }),
                Command::Attack => {
                    let eta = need(&args.eta, "eta", cmd)?;
                    echo("eta", json!(eta));
                    echo("p", json!(p));
                    let plan = optimal_attack(&spec, &data, eta, p)?;
                    tables.push(Table {
                        name: "attack.csv".into(),
                        header: vec!["n", "x", "delta", "x_attacked"],
                        rows: data
                            .iter()
                            .zip(&plan.delta)
                            .enumerate()
                            .map(|(i, (x, d))| vec![i.to_string(), num(*x), num(*d), num(x + d)])
                            .collect(),
                    });
                    json!({ "plan": plan, "budget_used": plan.budget_used() })
                }
                _ => {
                    echo("p", json!(p));
                    let mut r = json!({ "aif": aif_empirical(&spec, &data, p)? });
                    if let Some(grid) = &args.eta_grid {
                        echo("eta_grid", json!(grid));
                        r["aif_finite_eta"] = json!(aif_finite_eta(&spec, &data, p, grid)?);
                    }
                    r
                }
            }
        }
        Command::AifPop | Command::Converge => {
            let psi = parse_psi(&need(&args.psi, "psi", cmd)?, args.b)?;
            let model_name = need(&args.model, "model", cmd)?;
            let model = parse_model(&model_name)?;
            echo("psi", psi.describe());
            echo("model", json!(model));
            echo("p", json!(p));
            let spec = psi.spec()?;
            let theta = match spec.kind() {
                aif_core::PsiKind::Scale => 1.0,
                _ => 0.0,
            };
            let ctx = PopulationContext::with_theta(model, spec, theta, opts)?;
            if cmd == Command::AifPop {
                let aif = aif_population(&ctx, p)?;
                let gamma = gross_error_sensitivity(&ctx)?;
                json!({
                    "aif": aif,
                    "aif_value": finite_or_text(aif.value),
                    "gamma_star": finite_or_text(gamma),
                    "fisher_residual": ctx.fisher_residual,
                    "fisher_warning": ctx.fisher_warning(),
                })
            } else {
                let grid = need(&args.n_grid, "n-grid", cmd)?;
                echo("n_grid", json!(grid));
                echo("seed", json!(args.seed));
                let rows = aif_convergence_study(&ctx, p, &grid, args.seed)?;
                tables.push(Table {
                    name: "convergence.csv".into(),
                    header: vec!["N", "empirical_aif", "population_aif", "rel_error"],
                    rows: rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.n.to_string(),
                                num(r.empirical_aif),
                                num(r.population_aif),
                                num(r.rel_error),
                            ]
                        })
                        .collect(),
                });
                json!({ "rows": rows })
            }
        }
        Command::DesignMin => {
            let kind = parse_kind(&args.kind)?;
            echo("kind", json!(kind));
            let d = match kind {
                DesignKind::Location => min_aif_location(),
                DesignKind::Scale => {
                    let model = parse_model(&need(&args.model, "model", cmd)?)?;
                    echo("model", json!(model));
                    min_aif_scale(&model)?
                }
            };
            let (r, t) = design_outputs(&d, args.samples)?;
            tables.push(t);
            json_files.push(("design.json".into(), json!(d)));
            r
        }
        Command::DesignTradeoff => {
            let kind = parse_kind(&args.kind)?;
            let xi = need(&args.xi, "xi", cmd)?;
            echo("kind", json!(kind));
            echo("xi", json!(xi));
            echo("closed_form", json!(args.closed_form));
            let d = if args.closed_form {
                if kind != DesignKind::Location {
                    return Err(CliError::Usage(
                        "--closed-form applies to the location design on exponential-rate-1".into(),
                    ));
                }
                if let Some(m) = &args.model {
                    if parse_model(m)? != DistributionModel::ExponentialRate1 {
                        return Err(CliError::Usage(
                            "--closed-form requires --model exponential-rate-1".into(),
                        ));
                    }
                }
                echo("model", json!(DistributionModel::ExponentialRate1));
                exponential_tradeoff(xi)?
            } else {
                let model = parse_model(&need(&args.model, "model", cmd)?)?;
                echo("model", json!(model));
                match kind {
                    DesignKind::Location => tradeoff_location(&model, xi)?,
                    DesignKind::Scale => tradeoff_scale(&model, xi)?,
                }
            };
            let (r, t) = design_outputs(&d, args.samples)?;
            tables.push(t);
            json_files.push(("design.json".into(), json!(d)));
            r
        }
        Command::TradeoffCurve => {
            let kind = parse_kind(&args.kind)?;
            let model = parse_model(&need(&args.model, "model", cmd)?)?;
            let grid = need(&args.xi_grid, "xi-grid", cmd)?;
            echo("kind", json!(kind));
            echo("model", json!(model));
            echo("xi_grid", json!(grid));
            let rows: Vec<CurveRow> = tradeoff_curve(&model, &grid, kind)?;
            tables.push(Table {
                name: "tradeoff_curve.csv".into(),
                header: vec!["xi", "aif", "gamma_star"],
                rows: rows
                    .iter()
                    .map(|r| vec![num(r.xi), opt_num(r.aif), opt_num(r.gamma_star)])
                    .collect(),
            });
            json!({
                "rows": rows,
                "smallest_feasible_xi": smallest_feasible_xi(&model, kind),
            })
        }
        Command::LAif => {
            let data = match &args.data {
                Some(path) => {
                    echo("data", json!(path.display().to_string()));
                    Some(ingest(path)?)
                }
                None => None,
            };
            let n = data.as_ref().map(Vec::len).or(args.n);
            let w = match (&args.weights, args.trim) {
                (Some(path), None) => {
                    echo("weights", json!(path.display().to_string()));
                    let text = fs::read_to_string(path).map_err(io_err(path))?;
                    LWeights::from_csv_str(&text)
                        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
                }
                (None, Some(alpha)) => {
                    echo("trim", json!(alpha));
                    let n = n.ok_or_else(|| {
                        CliError::Usage("--trim needs --data or --n to fix N".into())
                    })?;
                    LWeights::alpha_trimmed(alpha, n)?
                }
                (None, None) => {
                    return Err(CliError::Usage(
                        "--command l-aif needs --weights or --trim".into(),
                    ))
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage(
                        "--weights and --trim are mutually exclusive".into(),
                    ))
                }
            };
            echo("p", json!(p));
            let mut r = json!({ "weights": w, "aif": l_aif(&w, p)? });
            if let Some(data) = &data {
                r["estimate"] = json!(l_estimate(&w, data)?);
                r["ordering_threshold"] = json!(ordering_safety_threshold(data, p)?);
            }
            r
        }
    };

    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "aif",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "seed": args.seed,
        "inputs": Value::Object(inputs),
        "results": results,
        "artifacts": tables
            .iter()
            .map(|t| t.name.clone())
            .chain(json_files.iter().map(|(n, _)| n.clone()))
            .collect::<Vec<_>>(),
    });
    Ok(Outcome {
        report,
        tables,
        json_files,
    })
}

/// Write `report.json`, CSV tables and JSON artifacts into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report_path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    fs::write(&report_path, text + "\n").map_err(io_err(&report_path))?;
    for (name, value) in &outcome.json_files {
        let path = dir.join(name);
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Parse(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    for table in &outcome.tables {
        let path = dir.join(&table.name);
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let csv_err = |e: csv::Error| CliError::Parse(format!("{}: {e}", path.display()));
        w.write_record(&table.header).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}
