//! Command-line front end. `run` takes argv and output streams and returns
//! the process exit code: 0 on success, 1 on a domain error, 2 on a usage
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::fitting::{self, Assessment, FitConfig, ScenarioOrder, ScoringRule};
use crate::formats::{self, to_canonical_json, Document};
use crate::inference::{compile, Evidence};
use crate::model::scale_to_unit;
use crate::montecarlo::{estimate_sensitivities, EstimatedReport, SamplerConfig, SamplingMethod};
use crate::sensitivity::{
    query_scenario, sensitivities, Scenario, SensitivityReport, SensitivitySummary, TargetDistribution,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Name that resolves to the bundled example when no such file exists.
pub const BUILTIN: &str = "dyspnea";

#[derive(Parser, Debug)]
#[command(name = "bnsens", version, about = "Bayesian network parameter sensitivity and fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a document and report every problem found.
    Validate(FileArg),
    /// Posterior distribution of the target.
    Query(ScenarioArgs),
    /// Exact sensitivities of the target posterior.
    Sens {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Only report parameters of these nodes (comma-separated).
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<String>>,
        /// Per-node maximum absolute sensitivity only.
        #[arg(long)]
        summary: bool,
    },
    /// Sampling estimates of the sensitivities with standard errors.
    McSens {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "lw")]
        method: MethodArg,
        #[arg(long = "n", default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit parameters to the document's assessments.
    Fit {
        #[command(flatten)]
        file: FileArg,
        #[arg(long, value_enum, default_value = "log")]
        rule: RuleArg,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Visit assessments in a seeded random order each epoch.
        #[arg(long)]
        shuffle: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Outlier cut as a multiple of the median distance.
        #[arg(long, default_value_t = 3.0)]
        factor: f64,
        /// Absolute outlier distance; overrides --factor.
        #[arg(long)]
        threshold: Option<f64>,
        /// Write the fitted document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flag assessments far from the current model.
    Outliers {
        #[command(flatten)]
        file: FileArg,
        #[arg(long, value_enum, default_value = "log")]
        rule: RuleArg,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        factor: f64,
    },
    /// Run the HTTP service.
    #[cfg(feature = "service")]
    Serve {
        /// TOML file with `host`, `port`, `history_cap` and `snapshot_dir`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Args, Debug)]
struct FileArg {
    /// Document path, or `dyspnea` for the bundled example.
    file: String,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[command(flatten)]
    file: FileArg,
    /// Observed values as `VAR=state,VAR=state`.
    #[arg(long, value_parser = parse_evidence)]
    evidence: Option<Evidence>,
    #[arg(long)]
    target: Option<String>,
    /// Use the document's scenario at this index.
    #[arg(long, conflicts_with_all = ["evidence", "target"])]
    scenario: Option<usize>,
}

fn parse_evidence(s: &str) -> Result<Evidence, String> {
    Evidence::parse(s).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Lw,
    Reject,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    Log,
    Quad,
}

impl From<RuleArg> for ScoringRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Log => ScoringRule::Logarithmic,
            RuleArg::Quad => ScoringRule::Quadratic,
        }
    }
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Domain(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DOMAIN
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "usage error: {m}");
            EXIT_USAGE
        }
    }
}

fn read_document(file: &str) -> Result<Document, Failure> {
    if file == BUILTIN && !Path::new(file).exists() {
        return Ok(formats::dyspnea_document());
    }
    let text = std::fs::read_to_string(file).map_err(|e| Failure::Domain(format!("cannot read `{file}`: {e}")))?;
    formats::parse_document(&text).map_err(|e| Failure::Domain(format!("{file}: {e}")))
}

/// Reads a document and rescales every table row to unit sum.
fn load(file: &str) -> Result<Document, Failure> {
    let mut doc = read_document(file)?;
    doc.network = scale_to_unit(&doc.network);
    Ok(doc)
}

fn resolve_scenario(args: &ScenarioArgs, doc: &Document) -> Result<Scenario, Failure> {
    if let Some(i) = args.scenario {
        return doc
            .scenarios
            .get(i)
            .cloned()
            .ok_or_else(|| Failure::Usage(format!("document has no scenario {i}")));
    }
    match &args.target {
        Some(t) => Ok(Scenario::new(args.evidence.clone().unwrap_or_default(), t)),
        None => Err(Failure::Usage("--target (or --scenario) is required".into())),
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, format: OutputFormat, value: &T, table: impl FnOnce() -> String) -> Outcome {
    let text = match format {
        OutputFormat::Json => to_canonical_json(value),
        OutputFormat::Table => table(),
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Domain(format!("write failed: {e}")))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Validate(f) => validate(&f, out),
        Command::Query(s) => {
            let doc = load(&s.file.file)?;
            let sc = resolve_scenario(&s, &doc)?;
            let result = query_scenario(&compile(&doc.network), &sc)?;
            emit(out, s.file.format, &result, || distribution_table(&result))
        }
        Command::Sens {
            scenario,
            nodes,
            summary,
        } => {
            let doc = load(&scenario.file.file)?;
            let sc = resolve_scenario(&scenario, &doc)?;
            let report = sensitivities(&doc.network, &sc, nodes.as_deref())?;
            if summary {
                let s = SensitivitySummary::from(&report);
                emit(out, scenario.file.format, &s, || summary_table(&s))
            } else {
                emit(out, scenario.file.format, &report, || report_table(&report))
            }
        }
        Command::McSens {
            scenario,
            method,
            samples,
            seed,
        } => {
            let doc = load(&scenario.file.file)?;
            let sc = resolve_scenario(&scenario, &doc)?;
            let cfg = SamplerConfig {
                method: match method {
                    MethodArg::Lw => SamplingMethod::LikelihoodWeighting,
                    MethodArg::Reject => SamplingMethod::LogicRejection,
                },
                sample_count: samples,
                seed,
            };
            if samples == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            let report = estimate_sensitivities(&doc.network, &sc, &cfg)?;
            emit(out, scenario.file.format, &report, || estimate_table(&report))
        }
        Command::Fit {
            file,
            rule,
            step,
            epochs,
            restarts,
            seed,
            shuffle,
            tol,
            factor,
            threshold,
            out: target,
        } => {
            let doc = load(&file.file)?;
            let cfg = FitConfig {
                step_size: step,
                max_epochs: epochs,
                convergence_tol: tol,
                restarts,
                scenario_order: if shuffle {
                    ScenarioOrder::Shuffled
                } else {
                    ScenarioOrder::FixedCycle
                },
                seed,
                outlier_factor: factor,
                outlier_threshold: threshold,
                ..FitConfig::default()
            };
            let result = fitting::fit(&doc.network, &doc.assessments, rule.into(), &cfg).map_err(|e| match e {
                Error::InvalidConfig(m) => Failure::Usage(m),
                other => other.into(),
            })?;
            if let Some(path) = target {
                let fitted = Document {
                    network: result.network.clone(),
                    ..doc.clone()
                };
                std::fs::write(&path, formats::serialize_document(&fitted))
                    .map_err(|e| Failure::Domain(format!("cannot write `{}`: {e}", path.display())))?;
            }
            emit(out, file.format, &result, || fit_table(&result, &doc.assessments))
        }
        Command::Outliers {
            file,
            rule,
            threshold,
            factor,
        } => {
            let doc = load(&file.file)?;
            let distances = fitting::assessment_distances(&doc.network, &doc.assessments, rule.into())?;
            let report = OutlierReport {
                rule: rule.into(),
                flagged: fitting::flag_outliers(&distances, factor, threshold),
                distances,
            };
            emit(out, file.format, &report, || outlier_table(&report, &doc.assessments))
        }
        #[cfg(feature = "service")]
        Command::Serve { config, host, port } => {
            let mut cfg = match config {
                Some(p) => crate::service::ServiceConfig::from_file(&p)?,
                None => crate::service::ServiceConfig::default(),
            };
            if let Some(h) = host {
                cfg.host = h;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            crate::service::serve_blocking(cfg).map_err(|e| Failure::Domain(e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct ValidationReport {
    ok: bool,
    issues: Vec<formats::Issue>,
}

fn validate(f: &FileArg, out: &mut dyn Write) -> Outcome {
    let text = if f.file == BUILTIN && !Path::new(&f.file).exists() {
        formats::serialize_document(&formats::dyspnea_document())
    } else {
        std::fs::read_to_string(&f.file).map_err(|e| Failure::Domain(format!("cannot read `{}`: {e}", f.file)))?
    };
    let report = match formats::parse_document(&text) {
        Ok(_) => ValidationReport {
            ok: true,
            issues: Vec::new(),
        },
        Err(e) => ValidationReport {
            ok: false,
            issues: e.issues,
        },
    };
    emit(out, f.format, &report, || {
        if report.ok {
            "OK\n".to_string()
        } else {
            report.issues.iter().map(|i| format!("{i}\n")).collect()
        }
    })?;
    if report.ok {
        Ok(())
    } else {
        Err(Failure::Domain(format!("{}: {} problem(s)", f.file, report.issues.len())))
    }
}

#[derive(Serialize)]
struct OutlierReport {
    rule: ScoringRule,
    distances: Vec<f64>,
    flagged: Vec<usize>,
}

/// Four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..=5).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}

fn scenario_line(sc: &Scenario) -> String {
    let ev: Vec<String> = sc.evidence.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("P({} | {})\n", sc.target, ev.join(", "))
}

fn distribution_table(r: &TargetDistribution) -> String {
    let mut s = scenario_line(&r.scenario);
    for (st, p) in r.target_states.iter().zip(&r.distribution) {
        s += &format!("  {st:<12} {}\n", sig4(*p));
    }
    s
}

fn summary_table(r: &SensitivitySummary) -> String {
    let mut s = scenario_line(&r.scenario);
    s += &format!("  {:<8} {:>10}  {}\n", "node", "max |dP|", "attained at");
    for (node, m) in &r.node_max {
        s += &format!("  {node:<8} {:>10}  {} for {}\n", sig4(m.value), m.param, m.target_state);
    }
    s
}

fn report_table(r: &SensitivityReport) -> String {
    let mut s = scenario_line(&r.scenario);
    for e in &r.entries {
        s += &format!("  {:<28} {:<10} {:>11}\n", e.param.to_string(), e.target_state, sig4(e.value));
    }
    if !r.frozen.is_empty() {
        s += &format!("  frozen: {}\n", r.frozen.len());
    }
    s += &format!("  structural zeros: {}, passes: {}\n", r.structural_zero.len(), r.passes);
    s
}

fn estimate_table(r: &EstimatedReport) -> String {
    let mut s = scenario_line(&r.scenario);
    s += &format!("  {} samples, {} with positive weight\n", r.config.sample_count, r.accepted);
    for e in &r.entries {
        let (v, se) = match (e.value, e.std_error) {
            (Some(v), Some(se)) => (sig4(v), sig4(se)),
            _ => ("undefined".into(), "-".into()),
        };
        s += &format!("  {:<28} {:<10} {v:>11} ± {se}\n", e.param.to_string(), e.target_state);
    }
    s
}

fn fit_table(r: &fitting::FitResult, assessments: &[Assessment]) -> String {
    let first = r.objective_trace.first().copied().unwrap_or(0.0);
    let last = r.objective_trace.last().copied().unwrap_or(0.0);
    let mut s = format!(
        "objective {} -> {} over {} epochs (restart {}, converged: {})\n",
        sig4(first),
        sig4(last),
        r.objective_trace.len() - 1,
        r.best_restart,
        r.converged
    );
    for (i, (a, d)) in assessments.iter().zip(&r.distances).enumerate() {
        let mark = if r.outliers.contains(&i) { "  outlier" } else { "" };
        s += &format!("  [{i}] {:<40} {}{mark}\n", scenario_line(&a.scenario).trim_end(), sig4(*d));
    }
    s
}

fn outlier_table(r: &OutlierReport, assessments: &[Assessment]) -> String {
    let mut s = String::new();
    for (i, (a, d)) in assessments.iter().zip(&r.distances).enumerate() {
        let mark = if r.flagged.contains(&i) { "  outlier" } else { "" };
        s += &format!("  [{i}] {:<40} {}{mark}\n", scenario_line(&a.scenario).trim_end(), sig4(*d));
    }
    if r.flagged.is_empty() {
        s += "no outliers\n";
    }
    s
}
