//! The `altchain` command-line tool.
//!
//! Every command reads an optional TOML config (`--config`), overlays the
//! command-line flags and writes one table as CSV or JSON. Exit codes:
//! 0 success, 1 configuration error, 2 numerical non-convergence, 3 failed
//! validation check.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::ldp::{self, MdFamily, RateFamily};
use crate::model::RateQuad;
use crate::oracle::uniformization;
use crate::pgf::{self, TimeChange};
use crate::pmf::{self, pmf_window_lenient};
use crate::sim::{self, McEstimate, SimConfig};
use crate::specfun::{mittag_leffler, TruncationPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CONVERGENCE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "ALTCHAIN_WORKERS";

/// Runs with fewer paths than this have MC checks reported as inconclusive
/// rather than failed.
pub const UNDERPOWERED_PATHS: u64 = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "altchain",
    version,
    about = "Alternating-rate Markov chains on the integers"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the table here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, global = true)]
    alpha1: Option<f64>,
    #[arg(long, global = true)]
    alpha2: Option<f64>,
    #[arg(long, global = true)]
    beta1: Option<f64>,
    #[arg(long, global = true)]
    beta2: Option<f64>,
    #[arg(long, global = true, value_enum)]
    clock: Option<ClockKind>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Table of state probabilities around the start state.
    Pmf {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<i64>,
        #[arg(long)]
        radius: Option<u32>,
        /// Absolute truncation tolerance of the series.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        max_terms: Option<usize>,
    },
    /// Probability generating function on a list of `z` values.
    Pgf {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<i64>,
        #[arg(long, value_delimiter = ',')]
        z: Option<Vec<f64>>,
    },
    /// Mean and variance of the plain chain.
    Moments {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<i64>,
    },
    /// Large or moderate deviation rate function on a grid of `y`.
    Rate {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, allow_hyphen_values = true)]
        y_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        y_max: Option<f64>,
        #[arg(long)]
        y_step: Option<f64>,
        /// Emit the quadratic moderate deviation rate instead.
        #[arg(long)]
        moderate: bool,
    },
    /// Cross-check closed forms against Monte Carlo and uniformization.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<i64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ClockKind {
    Identity,
    InverseStable,
    TemperedStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Figure2,
}

/// The config file. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    format: Option<Format>,
    output: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    rates: RatesFile,
    #[serde(default)]
    time_change: ClockFile,
    #[serde(default)]
    pmf: PmfFile,
    #[serde(default)]
    pgf: PgfFile,
    #[serde(default)]
    moments: MomentsFile,
    #[serde(default)]
    rate: RateFile,
    #[serde(default)]
    validate: ValidateFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatesFile {
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockFile {
    kind: Option<ClockKind>,
    nu: Option<f64>,
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmfFile {
    t: Option<f64>,
    k: Option<i64>,
    radius: Option<u32>,
    tolerance: Option<f64>,
    max_terms: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgfFile {
    t: Option<f64>,
    k: Option<i64>,
    z: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsFile {
    t: Option<f64>,
    k: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    preset: Option<Preset>,
    y_min: Option<f64>,
    y_max: Option<f64>,
    y_step: Option<f64>,
    moderate: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateFile {
    seed: Option<u64>,
    paths: Option<u64>,
    t: Option<f64>,
    k: Option<i64>,
}

/// A failed command with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. }
            | Error::PrecisionLoss { .. }
            | Error::BracketFailure { .. } => EXIT_CONVERGENCE,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Bool(bool),
    Text(String),
    Null,
}

/// A command's output: named columns plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits, `inf`/`-inf`/`nan` for non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// Inverse of [`format_float`].
pub fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(&self.columns);
        for row in &self.rows {
            let rec: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Num(x) => format_float(*x),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Text(s) => s.clone(),
                    Cell::Null => String::new(),
                })
                .collect();
            let _ = w.write_record(&rec);
        }
        w.into_inner()
            .ok()
            .and_then(|b| String::from_utf8(b).ok())
            .unwrap_or_default()
    }

    /// `{"meta": ..., "rows": [...]}`; a non-finite number becomes `null`
    /// with a sibling `<column>_nonfinite` holding `"inf"`, `"-inf"` or `"nan"`.
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    let v = match cell {
                        Cell::Int(i) => json!(i),
                        Cell::Num(x) if x.is_finite() => json!(x),
                        Cell::Num(x) => {
                            obj.insert(format!("{col}_nonfinite"), json!(format_float(*x)));
                            Value::Null
                        }
                        Cell::Bool(b) => json!(b),
                        Cell::Text(s) => json!(s),
                        Cell::Null => Value::Null,
                    };
                    obj.insert((*col).to_string(), v);
                }
                Value::Object(obj)
            })
            .collect();
        json!({ "meta": self.meta, "rows": rows })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).unwrap_or_default();
                s.push('\n');
                s
            }
        }
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
}

/// Fully merged settings shared by every command.
struct Settings {
    format: Format,
    output: Option<PathBuf>,
    workers: usize,
    q: RateQuad,
    clock: TimeChange,
    nu: Option<f64>,
    mu: Option<f64>,
}

fn settings(cli: &Cli, file: &FileConfig) -> Result<Settings, CliError> {
    let m = &cli.model;
    let r = &file.rates;
    let q = RateQuad::new(
        m.alpha1.or(r.alpha1).unwrap_or(1.0),
        m.alpha2.or(r.alpha2).unwrap_or(1.0),
        m.beta1.or(r.beta1).unwrap_or(1.0),
        m.beta2.or(r.beta2).unwrap_or(1.0),
    )?;
    let nu = m.nu.or(file.time_change.nu);
    let mu = m.mu.or(file.time_change.mu);
    let kind = m
        .clock
        .or(file.time_change.kind)
        .unwrap_or(ClockKind::Identity);
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::config(format!("time_change.{name} is required for this clock")))
    };
    let clock = match kind {
        ClockKind::Identity => TimeChange::Identity,
        ClockKind::InverseStable => TimeChange::inverse_stable(need(nu, "nu")?)?,
        ClockKind::TemperedStable => TimeChange::tempered_stable(need(nu, "nu")?, need(mu, "mu")?)?,
    };
    let workers = cli
        .workers
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::config("workers must be at least 1"));
    }
    Ok(Settings {
        format: cli.format.or(file.format).unwrap_or(Format::Csv),
        output: cli.output.clone().or_else(|| file.output.clone()),
        workers,
        q,
        clock,
        nu,
        mu,
    })
}

fn base_meta(command: &str, s: &Settings) -> Map<String, Value> {
    let mut meta = Map::new();
    meta.insert("command".into(), json!(command));
    meta.insert("rates".into(), json!(s.q.as_tuple()));
    meta.insert(
        "time_change".into(),
        serde_json::to_value(s.clock).unwrap_or(Value::Null),
    );
    meta
}

fn check_t(t: f64) -> Result<f64, CliError> {
    if t.is_finite() && t >= 0.0 {
        Ok(t)
    } else {
        Err(CliError::config(format!(
            "t must be finite and non-negative, got {t}"
        )))
    }
}

/// The table plus an optional error to report after it has been written.
type Outcome = (Table, Option<CliError>);

/// `t`, `k`, `radius`, `tolerance`, `max_terms` from the command line.
type PmfFlags = (
    Option<f64>,
    Option<i64>,
    Option<u32>,
    Option<f64>,
    Option<usize>,
);

fn cmd_pmf(s: &Settings, file: &PmfFile, flags: PmfFlags) -> Result<Outcome, CliError> {
    let (t, k, radius, tol, max_terms) = flags;
    let t = check_t(t.or(file.t).unwrap_or(1.0))?;
    let k = k.or(file.k).unwrap_or(0);
    let radius = radius.or(file.radius).unwrap_or(40);
    let default = TruncationPolicy::default();
    let pol = TruncationPolicy::new(
        tol.or(file.tolerance).unwrap_or(default.abs_tol()),
        max_terms.or(file.max_terms).unwrap_or(default.max_terms()),
    )?;
    let table = pmf_window_lenient(&s.q, &s.clock, k, t, radius, &pol)?;
    let mut meta = base_meta("pmf", s);
    meta.insert("t".into(), json!(t));
    meta.insert("k".into(), json!(k));
    meta.insert("radius".into(), json!(radius));
    meta.insert(
        "normalization_defect".into(),
        json!(table.normalization_defect),
    );
    meta.insert("failures".into(), json!(table.failures));
    eprintln!(
        "normalization defect: {}",
        format_float(table.normalization_defect)
    );
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.n),
                Cell::Num(r.p),
                Cell::Num(r.tail_estimate),
                Cell::Num(r.rounding_bound),
                Cell::Bool(r.clamped),
            ]
        })
        .collect();
    let out = Table {
        meta,
        columns: vec![
            "n",
            "probability",
            "tail_estimate",
            "rounding_bound",
            "clamped",
        ],
        rows,
    };
    let err = (!table.failures.is_empty()).then(|| {
        let mut msg = format!(
            "{} of {} states did not converge:",
            table.failures.len(),
            2 * radius + 1
        );
        for (n, e) in &table.failures {
            let _ = write!(msg, "\n  n = {n}: {e}");
        }
        CliError {
            code: EXIT_CONVERGENCE,
            message: msg,
        }
    });
    Ok((out, err))
}

fn cmd_pgf(
    s: &Settings,
    file: &PgfFile,
    t: Option<f64>,
    k: Option<i64>,
    z: Option<Vec<f64>>,
) -> Result<Outcome, CliError> {
    let t = check_t(t.or(file.t).unwrap_or(1.0))?;
    let k = k.or(file.k).unwrap_or(0);
    let zs = z
        .or_else(|| file.z.clone())
        .unwrap_or_else(|| vec![0.5, 1.0, 1.5]);
    let pol = TruncationPolicy::default();
    let mut rows = Vec::with_capacity(zs.len());
    for z in &zs {
        let v = pgf::pgf(&s.q, &s.clock, *z, t, k, &pol)?;
        rows.push(vec![Cell::Num(*z), Cell::Num(v.value)]);
    }
    let mut meta = base_meta("pgf", s);
    meta.insert("t".into(), json!(t));
    meta.insert("k".into(), json!(k));
    Ok((
        Table {
            meta,
            columns: vec!["z", "value"],
            rows,
        },
        None,
    ))
}

fn cmd_moments(
    s: &Settings,
    file: &MomentsFile,
    t: Option<f64>,
    k: Option<i64>,
) -> Result<Outcome, CliError> {
    if s.clock != TimeChange::Identity {
        return Err(CliError::config(
            "moments are available for the identity clock only",
        ));
    }
    let t = check_t(t.or(file.t).unwrap_or(1.0))?;
    let k = k.or(file.k).unwrap_or(0);
    let mean = pgf::mean_base(&s.q, t, k)?;
    let var = pgf::variance_base(&s.q, t, k)?;
    let mut meta = base_meta("moments", s);
    meta.insert("t".into(), json!(t));
    meta.insert("k".into(), json!(k));
    Ok((
        Table {
            meta,
            columns: vec!["quantity", "value"],
            rows: vec![
                vec![Cell::Text("mean".into()), Cell::Num(mean)],
                vec![Cell::Text("variance".into()), Cell::Num(var)],
            ],
        },
        None,
    ))
}

fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CliError::config(format!(
            "y range [{lo}, {hi}] is not a finite interval"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::config(format!(
            "y_step must be positive, got {step}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(CliError::config("y grid has more than a million points"));
    }
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

fn rate_family(s: &Settings) -> RateFamily {
    match s.clock {
        TimeChange::Identity => RateFamily::Base,
        TimeChange::InverseStable { nu } => RateFamily::Fractional { nu },
        TimeChange::TemperedStable { nu, mu } => RateFamily::Tempered { nu, mu },
    }
}

fn cmd_rate(
    s: &Settings,
    file: &RateFile,
    preset: Option<Preset>,
    range: (Option<f64>, Option<f64>, Option<f64>),
    moderate: bool,
) -> Result<Outcome, CliError> {
    let mut meta = base_meta("rate", s);
    let curve_rows = |curves: &[ldp::RateCurve]| -> Vec<Vec<Cell>> {
        curves
            .iter()
            .flat_map(|c| {
                c.points.iter().map(|p| {
                    vec![
                        Cell::Text(c.family.name()),
                        Cell::Num(p.y),
                        Cell::Num(p.rate),
                        Cell::Num(p.argmax_gamma),
                        Cell::Bool(p.kink),
                    ]
                })
            })
            .collect()
    };
    let columns = vec!["curve", "y", "rate", "argmax_gamma", "kink_flag"];
    if preset.or(file.preset) == Some(Preset::Figure2) {
        let curves = ldp::figure2()?;
        meta.insert("preset".into(), json!("figure2"));
        meta.insert("rates".into(), json!(curves[0].rates));
        meta.insert(
            "ordering_radius".into(),
            json!(ldp::ordering_radius(&curves)),
        );
        return Ok((
            Table {
                meta,
                columns,
                rows: curve_rows(&curves),
            },
            None,
        ));
    }
    let (lo, hi, step) = range;
    let ys = grid(
        lo.or(file.y_min).unwrap_or(-0.5),
        hi.or(file.y_max).unwrap_or(0.5),
        step.or(file.y_step).unwrap_or(0.01),
    )?;
    let family = rate_family(s);
    if moderate || file.moderate.unwrap_or(false) {
        let md = match family {
            RateFamily::Base => MdFamily::Base,
            RateFamily::Fractional { nu } => MdFamily::Fractional { nu },
            RateFamily::Tempered { nu, mu } => MdFamily::Tempered { nu, mu },
        };
        let c = ldp::md_curvature(&s.q, &md)?;
        meta.insert("sigma_sq".into(), json!(c.sigma_sq));
        let rows = ys
            .iter()
            .map(|&y| {
                vec![
                    Cell::Text(format!("moderate-{}", family.name())),
                    Cell::Num(y),
                    Cell::Num(c.rate(y)),
                ]
            })
            .collect();
        return Ok((
            Table {
                meta,
                columns: vec!["curve", "y", "rate"],
                rows,
            },
            None,
        ));
    }
    let curve = ldp::rate_curve(&s.q, &family, &ys)?;
    meta.insert("zero".into(), json!(family.zero(&s.q)));
    Ok((
        Table {
            meta,
            columns,
            rows: curve_rows(&[curve]),
        },
        None,
    ))
}

/// Outcome of one validation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A Monte Carlo miss on an underpowered run.
    Inconclusive,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// One row of the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub analytic: f64,
    pub oracle: f64,
    pub tolerance: f64,
    pub std_error: Option<f64>,
    pub status: Status,
}

/// Parameters of the validation suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub q: RateQuad,
    pub t: f64,
    pub k: i64,
    pub nu: f64,
    pub mu: f64,
    pub seed: u64,
    pub paths: u64,
    pub workers: usize,
}

fn exact_check(name: &str, analytic: f64, oracle: f64, tolerance: f64) -> Check {
    let ok = (analytic - oracle).abs() <= tolerance;
    Check {
        name: name.into(),
        analytic,
        oracle,
        tolerance,
        std_error: None,
        status: if ok { Status::Pass } else { Status::Fail },
    }
}

fn mc_check(name: &str, analytic: f64, est: McEstimate, underpowered: bool) -> Check {
    let tolerance = 3.0 * est.std_error;
    let ok = (analytic - est.mean).abs() <= tolerance;
    Check {
        name: name.into(),
        analytic,
        oracle: est.mean,
        tolerance,
        std_error: Some(est.std_error),
        status: match (ok, underpowered) {
            (true, _) => Status::Pass,
            (false, true) => Status::Inconclusive,
            (false, false) => Status::Fail,
        },
    }
}

/// Runs the cross-check suite: closed forms against uniformization and
/// against Monte Carlo estimates with a 3 standard error band.
pub fn validation_suite(c: &SuiteConfig) -> crate::Result<Vec<Check>> {
    let pol = TruncationPolicy::default();
    let (q, t, k) = (&c.q, c.t, c.k);
    let frac = TimeChange::inverse_stable(c.nu)?;
    let temp = TimeChange::tempered_stable(c.nu, c.mu)?;
    let under = c.paths < UNDERPOWERED_PATHS;
    let mut out = vec![
        exact_check(
            "pgf-normalization-base",
            pgf::pgf_base(q, 1.0, t, k)?.value,
            1.0,
            1e-12,
        ),
        exact_check(
            "pgf-normalization-fractional",
            pgf::pgf(q, &frac, 1.0, t, k, &pol)?.value,
            1.0,
            1e-12,
        ),
        exact_check(
            "pgf-normalization-tempered",
            pgf::pgf(q, &temp, 1.0, t, k, &pol)?.value,
            1.0,
            1e-12,
        ),
    ];
    let table = uniformization(q, k, t, k - 120, k + 120)?;
    for n in k - 3..=k + 3 {
        let p = pmf::pmf_base(q, k, n, t, &pol)?.p;
        out.push(exact_check(
            &format!("pmf-base-uniformization-n{n}"),
            p,
            table.get(n),
            1e-9,
        ));
    }
    let cfg = SimConfig::new(c.seed, c.paths, t, c.workers)?;
    let id = TimeChange::Identity;
    out.push(mc_check(
        "mc-mean-base",
        pgf::mean_base(q, t, k)?,
        sim::mc_mean(&cfg, &id, q, k),
        under,
    ));
    out.push(mc_check(
        "mc-variance-base",
        pgf::variance_base(q, t, k)?,
        sim::mc_variance(&cfg, &id, q, k),
        under,
    ));
    out.push(mc_check(
        "mc-pmf-fractional",
        pmf::pmf_fractional(q, k, k, t, c.nu, &pol)?.p,
        sim::mc_pmf(&cfg, &frac, q, k, k),
        under,
    ));
    out.push(mc_check(
        "mc-pmf-tempered",
        pmf::pmf_tempered(q, k, k, t, c.nu, c.mu, &pol)?.p,
        sim::mc_pmf(&cfg, &temp, q, k, k),
        under,
    ));
    let gamma = -1.0;
    let (nu, mu) = (c.nu, c.mu);
    out.push(mc_check(
        "mc-inverse-stable-laplace",
        mittag_leffler(nu, gamma * t.powf(nu), &pol)?,
        sim::mc_estimate(&cfg, |rng| {
            (gamma * sim::sample_inverse_stable(nu, t, rng)).exp()
        }),
        under,
    ));
    if mu > 0.0 {
        let draws = sim::mc_samples(&cfg, |rng| sim::sample_tempered_stable(nu, mu, t, rng));
        out.push(mc_check(
            "mc-tempered-clock-mean",
            nu * mu.powf(nu - 1.0) * t,
            McEstimate::from_samples(&draws),
            under,
        ));
        out.push(mc_check(
            "mc-tempered-clock-variance",
            -nu * (nu - 1.0) * mu.powf(nu - 2.0) * t,
            McEstimate::variance_of(&draws),
            under,
        ));
    }
    Ok(out)
}

fn cmd_validate(
    s: &Settings,
    file: &ValidateFile,
    flags: (Option<u64>, Option<u64>, Option<f64>, Option<i64>),
) -> Result<Outcome, CliError> {
    let (seed, paths, t, k) = flags;
    let suite = SuiteConfig {
        q: s.q,
        t: check_t(t.or(file.t).unwrap_or(1.0))?,
        k: k.or(file.k).unwrap_or(0),
        nu: s.nu.unwrap_or(0.5),
        mu: s.mu.unwrap_or(1.0),
        seed: seed.or(file.seed).unwrap_or(42),
        paths: paths.or(file.paths).unwrap_or(100_000),
        workers: s.workers,
    };
    if suite.paths == 0 {
        return Err(CliError::config("paths must be at least 1"));
    }
    let checks = validation_suite(&suite)?;
    let underpowered = suite.paths < UNDERPOWERED_PATHS;
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    let mut meta = base_meta("validate", s);
    meta.insert("seed".into(), json!(suite.seed));
    meta.insert("paths".into(), json!(suite.paths));
    meta.insert("t".into(), json!(suite.t));
    meta.insert("k".into(), json!(suite.k));
    meta.insert("nu".into(), json!(suite.nu));
    meta.insert("mu".into(), json!(suite.mu));
    meta.insert("underpowered".into(), json!(underpowered));
    meta.insert("failed".into(), json!(failed));
    if underpowered {
        eprintln!(
            "warning: {} paths is underpowered; Monte Carlo intervals are wide and misses are reported as inconclusive",
            suite.paths
        );
    }
    let rows = checks
        .iter()
        .map(|c| {
            vec![
                Cell::Text(c.name.clone()),
                Cell::Num(c.analytic),
                Cell::Num(c.oracle),
                Cell::Num(c.tolerance),
                c.std_error.map_or(Cell::Null, Cell::Num),
                Cell::Bool(c.std_error.is_some() && underpowered),
                Cell::Text(c.status.as_str().into()),
            ]
        })
        .collect();
    let table = Table {
        meta,
        columns: vec![
            "name",
            "analytic",
            "oracle",
            "tolerance",
            "std_error",
            "wide_ci",
            "status",
        ],
        rows,
    };
    let err = (failed > 0).then(|| CliError {
        code: EXIT_VALIDATION,
        message: format!("{failed} of {} checks failed", checks.len()),
    });
    Ok((table, err))
}

fn emit(s: &Settings, table: &Table) -> Result<(), CliError> {
    let text = table.render(s.format);
    match &s.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::config(format!("cannot write to stdout: {e}"))),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let s = settings(&cli, &file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {} workers: {e}", s.workers)))?;
    let (table, err) = pool.install(|| match cli.command {
        Command::Pmf {
            t,
            k,
            radius,
            tolerance,
            max_terms,
        } => cmd_pmf(&s, &file.pmf, (t, k, radius, tolerance, max_terms)),
        Command::Pgf { t, k, ref z } => cmd_pgf(&s, &file.pgf, t, k, z.clone()),
        Command::Moments { t, k } => cmd_moments(&s, &file.moments, t, k),
        Command::Rate {
            preset,
            y_min,
            y_max,
            y_step,
            moderate,
        } => cmd_rate(&s, &file.rate, preset, (y_min, y_max, y_step), moderate),
        Command::Validate { seed, paths, t, k } => {
            cmd_validate(&s, &file.validate, (seed, paths, t, k))
        }
    })?;
    emit(&s, &table)?;
    err.map_or(Ok(()), Err)
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
