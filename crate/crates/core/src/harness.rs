//! Monte Carlo size and power experiments.
//!
//! A cell is one (model, θ, error law, n) combination. Replication `r` of a
//! cell draws its sample with seed `derive([master, key(errors, n), r])` and,
//! under bootstrap calibration, its resamples with
//! `derive([master, key(errors, n), r, 1])` on stream `l` for replicate `l`.
//! The key is a hash of the error-law name and `n` only, so models and θ
//! values sharing a law and sample size see the same regressors and errors
//! (common random numbers), and adding cells never moves existing streams.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. List
//! values are whitespace separated; numeric lists also accept commas.
//!
//! ```text
//! dgps        = s_null p1:0.2     # model or model:theta
//! thetas      = 0.1 0.5           # for alternatives listed without theta
//! errors      = normal t5 uniform lognormal chisq1
//! n           = 100, 250
//! tests       = q:quadratic q0:linex:0.5,1 glr
//! kernel      = uniform
//! bandwidth   = rot:2/9
//! calibration = bootstrap         # or asymptotic
//! bootstrap   = 99
//! boot_mode   = conditional       # or wild
//! levels      = 0.10 0.05
//! reps        = 500
//! seed        = 1
//! truncation  = clip              # or reject
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Analysis;
use crate::bootstrap::{bootstrap_tests, BootstrapMode, DEFAULT_REPLICATIONS};
use crate::dgp::{gen_sample, DgpSpec, ErrorLaw, Model, Truncation};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::methods::{parse_test, SpecTest};
use crate::seed;
use crate::smoothing::{parse_bandwidth, parse_number};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_REPS: usize = 500;
/// Abort a cell when more than this fraction of replications is degenerate.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    Asymptotic,
    Bootstrap,
}

/// One data-generating design without its error law and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub model: String,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dgps: Vec<DesignSpec>,
    pub thetas: Vec<f64>,
    pub errors: Vec<ErrorLaw>,
    pub ns: Vec<usize>,
    pub tests: Vec<String>,
    pub kernel: Kernel,
    pub bandwidth: String,
    pub calibration: Calibration,
    pub bootstrap: usize,
    pub boot_mode: BootstrapMode,
    pub levels: Vec<f64>,
    pub reps: usize,
    pub master_seed: u64,
    pub truncation: Truncation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            dgps: vec![DesignSpec {
                model: "s_null".into(),
                theta: None,
            }],
            thetas: Vec::new(),
            errors: vec![ErrorLaw::Normal],
            ns: vec![100],
            tests: vec!["q:quadratic".into(), "q0:quadratic".into(), "glr".into()],
            kernel: Kernel::Uniform,
            bandwidth: "rot:2/9".into(),
            calibration: Calibration::Bootstrap,
            bootstrap: DEFAULT_REPLICATIONS,
            boot_mode: BootstrapMode::Conditional,
            levels: vec![0.10, 0.05],
            reps: DEFAULT_REPS,
            master_seed: 1,
            truncation: Truncation::Clip,
        }
    }
}

/// A fully resolved cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: Model,
    pub errors: ErrorLaw,
    pub n: usize,
}

fn numbers(value: &str) -> Vec<&str> {
    value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .collect()
}

fn words(value: &str) -> Vec<&str> {
    value.split_whitespace().collect()
}

const PUBLISHED_TESTS: &str = "q:linex:0,1 q0:linex:0,1 q:linex:0.2,1 q0:linex:0.2,1 \
q:linex:0.5,1 q0:linex:0.5,1 q:linex:1,1 q0:linex:1,1 glr";

fn preset_text(name: &str) -> Option<String> {
    let common = format!(
        "tests = {PUBLISHED_TESTS}\nkernel = uniform\nbandwidth = rot:2/9\nn = 100 250 500\nlevels = 0.10 0.05\n"
    );
    let body = match name {
        "table2" => "dgps = s_null\nerrors = normal t5 uniform lognormal chisq1\ncalibration = asymptotic\n",
        "table3" => "dgps = s_null\nerrors = normal t5 uniform lognormal chisq1\ncalibration = bootstrap\n",
        "table4" => "dgps = p1\nthetas = 0.1 0.2 0.3 0.5 1.0\nerrors = normal\ncalibration = bootstrap\n",
        "table5" => "dgps = p2\nthetas = -1 -0.5 -0.2 0.2 0.5 1.0\nerrors = normal\ncalibration = bootstrap\n",
        "table6" => "dgps = p3\nthetas = -1 -0.5 0.5 1.0 1.5\nerrors = normal\ncalibration = bootstrap\n",
        _ => return None,
    };
    Some(format!("name = {name}\n{common}{body}"))
}

pub const PRESETS: [&str; 5] = ["table2", "table3", "table4", "table5", "table6"];

impl ExperimentConfig {
    /// Grid of one of the published simulation tables at the default desk
    /// scale (500 replications, seed 1).
    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown preset `{name}` (expected one of: {})",
                PRESETS.join(", ")
            ))
        })?;
        Self::parse(&text)
    }

    /// Parses the flat `key = value` format; unspecified keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            let wrap = |e: Error| err(format!("{key}: {e}"));
            match key.as_str() {
                "name" => cfg.name = value.to_string(),
                "dgps" | "dgp" => {
                    cfg.dgps = words(value)
                        .into_iter()
                        .map(|w| {
                            let (model, theta) = match w.split_once(':') {
                                Some((m, t)) => (m, Some(parse_number(t)?)),
                                None => (w, None),
                            };
                            Model::from_name(model, 0.0)?;
                            Ok(DesignSpec {
                                model: model.to_ascii_lowercase(),
                                theta,
                            })
                        })
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "thetas" | "theta" => {
                    cfg.thetas = numbers(value)
                        .into_iter()
                        .map(parse_number)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "errors" | "dist" => {
                    cfg.errors = words(value)
                        .into_iter()
                        .map(str::parse)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "n" | "ns" => {
                    cfg.ns = numbers(value)
                        .into_iter()
                        .map(|s| {
                            s.parse::<usize>().map_err(|_| {
                                Error::InvalidArgument(format!("`{s}` is not a count"))
                            })
                        })
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "tests" => cfg.tests = words(value).into_iter().map(String::from).collect(),
                "kernel" => cfg.kernel = value.parse().map_err(wrap)?,
                "bandwidth" => cfg.bandwidth = value.to_string(),
                "calibration" => {
                    cfg.calibration = match value.to_ascii_lowercase().as_str() {
                        "asymptotic" => Calibration::Asymptotic,
                        "bootstrap" => Calibration::Bootstrap,
                        other => {
                            return Err(err(format!(
                                "calibration must be asymptotic or bootstrap, got `{other}`"
                            )))
                        }
                    }
                }
                "bootstrap" | "b" => {
                    cfg.bootstrap = value
                        .parse()
                        .map_err(|_| err(format!("bootstrap: `{value}` is not a count")))?
                }
                "boot_mode" => cfg.boot_mode = value.parse().map_err(wrap)?,
                "levels" => {
                    cfg.levels = numbers(value)
                        .into_iter()
                        .map(parse_number)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "reps" => {
                    cfg.reps = value
                        .parse()
                        .map_err(|_| err(format!("reps: `{value}` is not a count")))?
                }
                "seed" | "master_seed" => {
                    cfg.master_seed = value.parse().map_err(|_| {
                        err(format!("seed: `{value}` is not a 64-bit unsigned integer"))
                    })?
                }
                "truncation" => cfg.truncation = value.parse().map_err(wrap)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(
            out,
            "dgps = {}",
            join(
                self.dgps
                    .iter()
                    .map(|d| match d.theta {
                        Some(t) => format!("{}:{t:?}", d.model),
                        None => d.model.clone(),
                    })
                    .collect()
            )
        );
        if !self.thetas.is_empty() {
            let _ = writeln!(
                out,
                "thetas = {}",
                join(self.thetas.iter().map(|t| format!("{t:?}")).collect())
            );
        }
        let _ = writeln!(
            out,
            "errors = {}",
            join(self.errors.iter().map(|e| e.name().into()).collect())
        );
        let _ = writeln!(
            out,
            "n = {}",
            join(self.ns.iter().map(|n| n.to_string()).collect())
        );
        let _ = writeln!(out, "tests = {}", self.tests.join(" "));
        let _ = writeln!(out, "kernel = {}", self.kernel);
        let _ = writeln!(out, "bandwidth = {}", self.bandwidth);
        let cal = match self.calibration {
            Calibration::Asymptotic => "asymptotic",
            Calibration::Bootstrap => "bootstrap",
        };
        let _ = writeln!(out, "calibration = {cal}");
        let _ = writeln!(out, "bootstrap = {}", self.bootstrap);
        let _ = writeln!(out, "boot_mode = {}", self.boot_mode);
        let _ = writeln!(
            out,
            "levels = {}",
            join(self.levels.iter().map(|l| format!("{l:?}")).collect())
        );
        let _ = writeln!(out, "reps = {}", self.reps);
        let _ = writeln!(out, "seed = {}", self.master_seed);
        let trunc = match self.truncation {
            Truncation::Clip => "clip",
            Truncation::Reject => "reject",
        };
        let _ = writeln!(out, "truncation = {trunc}");
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return bad(format!("levels must lie in (0, 1), got {:?}", self.levels));
        }
        if self.dgps.is_empty()
            || self.errors.is_empty()
            || self.ns.is_empty()
            || self.tests.is_empty()
        {
            return bad("dgps, errors, n and tests must be nonempty".into());
        }
        if self.calibration == Calibration::Bootstrap && self.bootstrap == 0 {
            return bad("bootstrap replications must be at least 1".into());
        }
        parse_bandwidth(&self.bandwidth)?;
        let tests = self.resolved_tests()?;
        if self.calibration == Calibration::Asymptotic {
            if let Some(t) = tests.iter().find(|t| t.method() == crate::stats::Method::F) {
                return bad(format!(
                    "test `{}` has no asymptotic calibration; use calibration = bootstrap",
                    t.descriptor()
                ));
            }
        }
        self.cells()?;
        Ok(())
    }

    fn resolved_tests(&self) -> Result<Vec<Arc<dyn SpecTest>>> {
        self.tests.iter().map(|t| parse_test(t)).collect()
    }

    /// Expands the grid in (design, θ, error law, n) order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut designs = Vec::new();
        for d in &self.dgps {
            let thetas: Vec<f64> = match (d.theta, d.model.as_str()) {
                (Some(t), _) => vec![t],
                (None, "s_null" | "null" | "s" | "s1") => vec![0.0],
                (None, _) if self.thetas.is_empty() => {
                    return Err(Error::InvalidArgument(format!(
                        "model `{}` needs a theta (`{}:<theta>` or a `thetas` list)",
                        d.model, d.model
                    )))
                }
                (None, _) => self.thetas.clone(),
            };
            for t in thetas {
                designs.push(Model::from_name(&d.model, t)?);
            }
        }
        let mut cells = Vec::new();
        for &model in &designs {
            for &errors in &self.errors {
                for &n in &self.ns {
                    cells.push(Cell { model, errors, n });
                }
            }
        }
        Ok(cells)
    }

    /// SHA-256 over everything except the cell grid, so reports of
    /// different grids under the same settings can be merged.
    pub fn settings_hash(&self) -> String {
        let settings = serde_json::json!({
            "tests": self.tests,
            "kernel": self.kernel,
            "bandwidth": self.bandwidth,
            "calibration": self.calibration,
            "bootstrap": if self.calibration == Calibration::Bootstrap { self.bootstrap } else { 0 },
            "boot_mode": self.boot_mode,
            "levels": self.levels,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "truncation": self.truncation,
        });
        let digest = Sha256::digest(settings.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed key of an (error law, n) pair.
pub fn cell_key(errors: ErrorLaw, n: usize) -> u64 {
    let digest = Sha256::digest(format!("errors={};n={n}", errors.name()).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn replication_seed(master: u64, cell: &Cell, r: usize) -> u64 {
    seed::derive(&[master, cell_key(cell.errors, cell.n), r as u64])
}

pub fn bootstrap_seed(master: u64, cell: &Cell, r: usize) -> u64 {
    seed::derive(&[master, cell_key(cell.errors, cell.n), r as u64, 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub test: String,
    pub level: f64,
    pub rejections: usize,
    /// Percent of valid replications rejecting.
    pub rate: f64,
    /// `100·√(r(1−r)/reps)`.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    pub theta: f64,
    pub errors: ErrorLaw,
    pub n: usize,
    pub reps: usize,
    pub valid_reps: usize,
    pub degenerate_reps: usize,
    pub results: Vec<RateEntry>,
}

impl CellResult {
    pub fn rate(&self, test: &str, level: f64) -> Option<&RateEntry> {
        self.results
            .iter()
            .find(|e| e.test == test && (e.level - level).abs() < 1e-12)
    }

    fn same_cell(&self, other: &CellResult) -> bool {
        self.model == other.model
            && self.theta.to_bits() == other.theta.to_bits()
            && self.errors == other.errors
            && self.n == other.n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub cells: Vec<CellResult>,
    /// Same rows as `cells`, one line per (cell, test, level).
    pub table_csv: String,
    /// Run-environment details; not part of any hash or comparison of results.
    pub metadata: Metadata,
}

impl MCReport {
    pub fn find(&self, model: &str, theta: f64, errors: ErrorLaw, n: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.model == model && (c.theta - theta).abs() < 1e-12 && c.errors == errors && c.n == n
        })
    }

    /// Results with metadata stripped, for reproducibility comparisons.
    pub fn results_eq(&self, other: &MCReport) -> bool {
        self.config_hash == other.config_hash
            && self.cells == other.cells
            && self.table_csv == other.table_csv
    }
}

pub fn table_csv(cells: &[CellResult]) -> String {
    let mut out =
        String::from("model,theta,errors,n,test,level,rate,mc_se,rejections,valid_reps\n");
    for c in cells {
        for e in &c.results {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.1},{:.2},{},{}",
                c.model,
                c.theta,
                c.errors,
                c.n,
                e.test,
                e.level,
                e.rate,
                e.mc_se,
                e.rejections,
                c.valid_reps
            );
        }
    }
    out
}

/// Aligned text rendering with one row per cell and one column per
/// (test, level).
pub fn table_text(report: &MCReport) -> String {
    let mut out = String::new();
    let Some(first) = report.cells.first() else {
        return "(no cells)\n".into();
    };
    let headers: Vec<String> = first
        .results
        .iter()
        .map(|e| format!("{}@{}%", e.test, e.level * 100.0))
        .collect();
    let width = headers.iter().map(|h| h.len()).max().unwrap_or(6).max(6);
    let _ = write!(
        out,
        "{:<8} {:>6} {:<10} {:>5}",
        "model", "theta", "errors", "n"
    );
    for h in &headers {
        let _ = write!(out, " {h:>width$}");
    }
    out.push('\n');
    for c in &report.cells {
        let _ = write!(
            out,
            "{:<8} {:>6} {:<10} {:>5}",
            c.model,
            c.theta,
            c.errors.name(),
            c.n
        );
        for e in &c.results {
            let _ = write!(out, " {:>width$}", format!("{:.1}", e.rate));
        }
        out.push('\n');
    }
    out
}

fn mc_se(rate_fraction: f64, reps: usize) -> f64 {
    if reps == 0 {
        return 0.0;
    }
    100.0 * (rate_fraction * (1.0 - rate_fraction) / reps as f64).sqrt()
}

/// Rejection flags per (test, level), or `None` for a degenerate replication.
fn run_replication(
    cfg: &ExperimentConfig,
    tests: &[Arc<dyn SpecTest>],
    cell: &Cell,
    r: usize,
) -> Result<Option<Vec<bool>>> {
    let spec = DgpSpec {
        model: cell.model,
        errors: cell.errors,
        n: cell.n,
        seed: replication_seed(cfg.master_seed, cell, r),
        truncation: cfg.truncation,
    };
    let sample = gen_sample(&spec)?;
    let selector = parse_bandwidth(&cfg.bandwidth)?;
    let outcome = (|| -> Result<Vec<f64>> {
        let prepared = Analysis::prepare(&sample, cfg.kernel, selector.as_ref())?;
        match cfg.calibration {
            Calibration::Asymptotic => {
                let ctx = prepared.analysis.asymptotic_context(None)?;
                tests
                    .iter()
                    .map(|t| {
                        let s = t.statistic(&prepared.evaluation)?;
                        Ok(t.asymptotic(s, &ctx)?.p_value)
                    })
                    .collect()
            }
            Calibration::Bootstrap => Ok(bootstrap_tests(
                &prepared,
                tests,
                cfg.boot_mode,
                cfg.bootstrap,
                bootstrap_seed(cfg.master_seed, cell, r),
            )?
            .into_iter()
            .map(|o| o.p_star)
            .collect()),
        }
    })();
    match outcome {
        Ok(p_values) => Ok(Some(
            p_values
                .iter()
                .flat_map(|&p| cfg.levels.iter().map(move |&a| p < a))
                .collect(),
        )),
        Err(e) if e.is_degenerate() => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    tests: &[Arc<dyn SpecTest>],
    cell: &Cell,
) -> Result<CellResult> {
    let flags: Vec<Option<Vec<bool>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_replication(cfg, tests, cell, r))
        .collect::<Result<_>>()?;
    let degenerate_reps = flags.iter().filter(|f| f.is_none()).count();
    if degenerate_reps as f64 > MAX_DEGENERATE_FRACTION * cfg.reps as f64 {
        return Err(Error::Degenerate(format!(
            "cell {} theta={} errors={} n={}: {degenerate_reps} of {} replications degenerate",
            cell.model.name(),
            cell.model.theta(),
            cell.errors,
            cell.n,
            cfg.reps
        )));
    }
    let valid: Vec<&Vec<bool>> = flags.iter().flatten().collect();
    let valid_reps = valid.len();
    let mut results = Vec::with_capacity(tests.len() * cfg.levels.len());
    for (i, t) in tests.iter().enumerate() {
        for (j, &level) in cfg.levels.iter().enumerate() {
            let k = i * cfg.levels.len() + j;
            let rejections = valid.iter().filter(|f| f[k]).count();
            let frac = if valid_reps == 0 {
                0.0
            } else {
                rejections as f64 / valid_reps as f64
            };
            results.push(RateEntry {
                test: t.descriptor(),
                level,
                rejections,
                rate: 100.0 * frac,
                mc_se: mc_se(frac, valid_reps),
            });
        }
    }
    Ok(CellResult {
        model: cell.model.name().to_string(),
        theta: cell.model.theta(),
        errors: cell.errors,
        n: cell.n,
        reps: cfg.reps,
        valid_reps,
        degenerate_reps,
        results,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MCReport> {
    run_experiment_with(cfg, |_, _, _| {})
}

/// Runs every cell in grid order; `progress(done, total, cell)` is called
/// after each cell.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, progress: F) -> Result<MCReport>
where
    F: Fn(usize, usize, &CellResult),
{
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let tests = cfg.resolved_tests()?;
    let grid = cfg.cells()?;
    let mut cells = Vec::with_capacity(grid.len());
    for (i, cell) in grid.iter().enumerate() {
        let res = run_cell(cfg, &tests, cell)?;
        progress(i + 1, grid.len(), &res);
        cells.push(res);
    }
    Ok(MCReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        config_hash: cfg.settings_hash(),
        master_seed: cfg.master_seed,
        table_csv: table_csv(&cells),
        cells,
        metadata: Metadata {
            started_unix,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

pub fn persist_report(report: &MCReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn parse_report(text: &str) -> Result<MCReport> {
    let report: MCReport = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    })?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                report.schema_version
            ),
        });
    }
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<MCReport> {
    parse_report(&std::fs::read_to_string(path)?)
}

/// Combines reports produced under identical settings. Cells present in
/// both must agree exactly; the union keeps `a`'s order followed by new
/// cells from `b`.
pub fn merge_reports(a: &MCReport, b: &MCReport) -> Result<MCReport> {
    if a.config_hash != b.config_hash {
        return Err(Error::ConfigHashMismatch {
            left: a.config_hash.clone(),
            right: b.config_hash.clone(),
        });
    }
    let mut cells = a.cells.clone();
    for c in &b.cells {
        match cells.iter().find(|x| x.same_cell(c)) {
            Some(existing) if existing != c => {
                return Err(Error::InvalidArgument(format!(
                    "cell {} theta={} errors={} n={} differs between reports",
                    c.model, c.theta, c.errors, c.n
                )))
            }
            Some(_) => {}
            None => cells.push(c.clone()),
        }
    }
    let mut config = a.config.clone();
    for d in &b.config.dgps {
        if !config.dgps.contains(d) {
            config.dgps.push(d.clone());
        }
    }
    for t in &b.config.thetas {
        if !config.thetas.iter().any(|x| x.to_bits() == t.to_bits()) {
            config.thetas.push(*t);
        }
    }
    for e in &b.config.errors {
        if !config.errors.contains(e) {
            config.errors.push(*e);
        }
    }
    for n in &b.config.ns {
        if !config.ns.contains(n) {
            config.ns.push(*n);
        }
    }
    Ok(MCReport {
        schema_version: SCHEMA_VERSION,
        config,
        config_hash: a.config_hash.clone(),
        master_seed: a.master_seed,
        table_csv: table_csv(&cells),
        cells,
        metadata: Metadata {
            started_unix: a.metadata.started_unix.min(b.metadata.started_unix),
            wall_clock_seconds: a.metadata.wall_clock_seconds + b.metadata.wall_clock_seconds,
            threads: a.metadata.threads.max(b.metadata.threads),
            version: a.metadata.version.clone(),
        },
    })
}
