use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use spectest::analysis::{observe, Analysis, ObservedTest};
use spectest::bootstrap::{bootstrap_tests, BootstrapMode, BootstrapOutcome};
use spectest::dgp::{gen_sample, DeltaShape, DgpSpec, ErrorLaw, Model, Truncation};
use spectest::efficiency::{are_table, pitman_are, Convention};
use spectest::harness::{self, ExperimentConfig};
use spectest::io;
use spectest::kernels::{Kernel, DEFAULT_TOL};
use spectest::loss::Loss;
use spectest::methods::{SpecTest, TestRegistry};
use spectest::smoothing::{parse_bandwidth, parse_number};

const EXIT_DATA: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

const GRAMMAR: &str = "\
Grammars:
  kernel     uniform | epanechnikov | biweight | triweight
  bandwidth  fixed:<h>            e.g. fixed:0.35
             rot:<omega>          h = S_X n^-omega, e.g. rot:2/9 or rot:0.2
             cv[:<c1>,<c2>,<grid>] leave-one-out CV, default cv:0.5,2,20
  loss       quadratic | tq:<c> | linex:<alpha>,<beta>   e.g. tq:1.5, linex:0.5,1
  test       q[:<loss>] | q0[:<loss>] | glr | f          e.g. q:linex:0.2,1
  boot-mode  conditional | wild
  dist       normal | t5 | uniform | lognormal | chisq1
  dgp        s_null | p1 | p2 | p3 | local
  shape      quadratic | abs
  truncation clip | reject
  convention eq52 | table1

Exit status: 0 success, 2 usage or data error, 3 numerically degenerate sample.";

#[derive(Parser)]
#[command(name = "spectest", version, about = "Loss-function and GLR specification tests for regression models", after_help = GRAMMAR)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel functionals a, b, c, d, t for a product kernel.
    Constants {
        #[arg(long, default_value = "uniform")]
        kernel: Kernel,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Pitman relative efficiency of the loss test over the GLR test.
    Are {
        #[arg(long, default_value = "uniform")]
        kernel: Kernel,
        /// Bandwidth rate exponent, decimal or fraction (e.g. 2/9).
        #[arg(long, value_parser = number)]
        omega: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value = "eq52")]
        convention: Convention,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Efficiency table for the four kernels next to the published values.
    AreTable {
        /// Rate exponents, comma or space separated.
        #[arg(long, default_value = "1/5,2/9")]
        omegas: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Simulate a sample and write it as `y,x1[,x2,x3]` CSV.
    Gen {
        #[arg(long, default_value = "s_null")]
        dgp: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value = "normal")]
        dist: ErrorLaw,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "clip")]
        truncation: Truncation,
        /// Departure shape for `--dgp local`.
        #[arg(long, default_value = "quadratic")]
        shape: DeltaShape,
        /// Number of regressors for `--dgp local`.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Bandwidth rate of the local drift for `--dgp local`.
        #[arg(long, default_value = "2/9", value_parser = number)]
        omega: f64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run specification tests on a data file.
    Test {
        /// CSV with header `y,x1[,x2,x3]`.
        #[arg(
            long,
            conflicts_with = "residuals",
            required_unless_present = "residuals"
        )]
        data: Option<PathBuf>,
        /// CSV with header `resid,x1[,x2,x3]` of residuals from a user-fitted null
        /// model; asymptotic calibration only.
        #[arg(long)]
        residuals: Option<PathBuf>,
        #[arg(long, default_value = "uniform")]
        kernel: Kernel,
        #[arg(long, default_value = "rot:2/9")]
        bandwidth: String,
        /// Loss used by `q` and `q0` entries that do not name one.
        #[arg(long, default_value = "quadratic")]
        loss: Loss,
        /// Test descriptors, space separated or repeated.
        #[arg(long, num_args = 1.., default_values = ["q", "q0", "glr"])]
        tests: Vec<String>,
        /// Bootstrap replications; asymptotic calibration only when absent.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, default_value = "conditional")]
        boot_mode: BootstrapMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Support measure used in the centering; estimated from the regressor
        /// ranges when absent.
        #[arg(long)]
        omega_measure: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Monte Carlo size/power experiment from a preset or a config file.
    Mc {
        /// table2 | table3 | table4 | table5 | table6
        preset: Option<String>,
        /// Flat `key = value` config file.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample sizes overriding the config, comma or space separated.
        #[arg(long)]
        n: Option<String>,
        /// Report file (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Print per-cell progress on standard error.
        #[arg(long)]
        progress: bool,
    },
}

fn number(s: &str) -> Result<f64, String> {
    parse_number(s).map_err(|e| e.to_string())
}

fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn to_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn constants(kernel: Kernel, dim: usize, tol: f64, format: Format) -> anyhow::Result<()> {
    let c = kernel.constants(dim, tol)?;
    match format {
        Format::Json => emit(&to_json(&json!({
            "kernel": kernel.name(), "dim": dim, "tol": tol,
            "a": c.a, "b": c.b, "c": c.c, "d": c.d, "t": c.t,
            "efficiency_ratio": c.efficiency_ratio(),
        }))),
        Format::Csv => emit(&format!(
            "kernel,dim,a,b,c,d,t,efficiency_ratio\n{},{dim},{},{},{},{},{},{}",
            kernel, c.a, c.b, c.c, c.d, c.t, c.efficiency_ratio()
        )),
        Format::Text => emit(&format!(
            "kernel {} (p = {dim})\na = {:.12}\nb = {:.12}\nc = {:.12}\nd = {:.12}\nt = {:.12}\n4d/b = {:.12}",
            kernel, c.a, c.b, c.c, c.d, c.t, c.efficiency_ratio()
        )),
    }
}

fn are(
    kernel: Kernel,
    omega: f64,
    dim: usize,
    convention: Convention,
    format: Format,
) -> anyhow::Result<()> {
    let r = pitman_are(kernel, dim, omega, convention)?;
    match format {
        Format::Json => emit(&serde_json::to_string_pretty(&r)?),
        Format::Csv => emit(&format!(
            "kernel,p,omega,convention,ratio,exponent,are\n{},{},{},{},{},{},{}",
            r.kernel, r.p, r.omega, r.convention, r.ratio, r.exponent, r.are
        )),
        Format::Text => emit(&format!(
            "kernel {} p = {} omega = {} convention {}\nratio 4d/b = {:.6}\nexponent = {:.6}\nARE = {:.6}",
            r.kernel, r.p, r.omega, r.convention, r.ratio, r.exponent, r.are
        )),
    }
}

fn number_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t).map_err(Into::into))
        .collect()
}

fn are_table_cmd(omegas: &str, format: Format) -> anyhow::Result<()> {
    let table = are_table(&number_list(omegas)?)?;
    match format {
        Format::Json => emit(&serde_json::to_string_pretty(&table)?),
        Format::Csv => emit(&table.to_csv()),
        Format::Text => emit(&table.to_text()),
    }
}

#[allow(clippy::too_many_arguments)]
fn gen(
    dgp: &str,
    theta: f64,
    dist: ErrorLaw,
    n: usize,
    seed: u64,
    truncation: Truncation,
    shape: DeltaShape,
    dim: usize,
    omega: f64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let model = if dgp.eq_ignore_ascii_case("local") {
        Model::Local { shape, dim, omega }
    } else {
        Model::from_name(dgp, theta)?
    };
    let spec = DgpSpec {
        model,
        errors: dist,
        n,
        seed,
        truncation,
    };
    let sample = gen_sample(&spec)?;
    match out {
        Some(path) => {
            io::save_sample(&sample, path).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(io::write_sample(&sample, std::io::stdout().lock())?),
    }
}

fn resolve_tests(descriptors: &[String], loss: Loss) -> anyhow::Result<Vec<Arc<dyn SpecTest>>> {
    let registry = TestRegistry::default();
    descriptors
        .iter()
        .flat_map(|d| d.split_whitespace())
        .map(|d| {
            let d = match d {
                "q" | "q0" => format!("{d}:{loss}"),
                other => other.to_string(),
            };
            registry.parse(&d).map_err(Into::into)
        })
        .collect()
}

fn outcome_json(o: &ObservedTest, boot: Option<&BootstrapOutcome>) -> Value {
    let asym = o.asymptotic.as_ref().map(|a| {
        json!({
            "factor": a.factor, "centering": a.centering, "scaling": a.scaling,
            "z": a.z, "p_value": a.p_value,
        })
    });
    json!({
        "test": o.test,
        "statistic": o.statistic,
        "asymptotic": asym,
        "asymptotic_note": o.asymptotic_note,
        "bootstrap_p_star": boot.map(|b| b.p_star),
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

#[allow(clippy::too_many_arguments)]
fn test_cmd(
    data: Option<&Path>,
    residuals: Option<&Path>,
    kernel: Kernel,
    bandwidth: &str,
    loss: Loss,
    tests: &[String],
    bootstrap: Option<usize>,
    boot_mode: BootstrapMode,
    seed: u64,
    omega_measure: Option<f64>,
    format: Format,
) -> anyhow::Result<()> {
    let selector = parse_bandwidth(bandwidth)?;
    let tests = resolve_tests(tests, loss)?;
    if let Some(om) = omega_measure {
        if !(om > 0.0 && om.is_finite()) {
            bail!(spectest::Error::InvalidArgument(format!(
                "--omega-measure must be positive, got {om}"
            )));
        }
    }
    let (analysis, evaluation, n, p, prepared) = match (data, residuals) {
        (Some(path), _) => {
            let sample = io::parse_data(path)?;
            let (n, p) = (sample.n(), sample.dim());
            let prep = Analysis::prepare(&sample, kernel, selector.as_ref())?;
            (
                prep.analysis.clone(),
                prep.evaluation.clone(),
                n,
                p,
                Some(prep),
            )
        }
        (None, Some(path)) => {
            if bootstrap.is_some() {
                bail!(spectest::Error::Unsupported(
                    "--bootstrap needs --data; residual input has no null model to refit".into()
                ));
            }
            let (resid, x) = io::parse_residuals(path)?;
            let (n, p) = (x.n(), x.dim());
            let (an, ev) = Analysis::prepare_residuals(&resid, &x, kernel, selector.as_ref())?;
            (an, ev, n, p, None)
        }
        (None, None) => bail!(spectest::Error::InvalidArgument(
            "one of --data or --residuals is required".into()
        )),
    };
    let ctx = analysis.asymptotic_context(omega_measure)?;
    let observed = observe(&tests, &evaluation, &ctx)?;
    let boot = match (bootstrap, prepared.as_ref()) {
        (Some(b), Some(prep)) => Some(bootstrap_tests(prep, &tests, boot_mode, b, seed)?),
        _ => None,
    };
    let boot_at = |i: usize| boot.as_ref().map(|v| &v[i]);
    let bw = analysis.bandwidth();
    match format {
        Format::Json => {
            let results: Vec<Value> = observed
                .iter()
                .enumerate()
                .map(|(i, o)| outcome_json(o, boot_at(i)))
                .collect();
            emit(&to_json(&json!({
                "schema_version": 1,
                "n": n,
                "p": p,
                "kernel": kernel.name(),
                "bandwidth": bw,
                "omega_measure": ctx.omega_measure,
                "loss": loss.to_string(),
                "seed": seed,
                "bootstrap": bootstrap.map(|b| json!({"replications": b, "mode": boot_mode.to_string()})),
                "tests": results,
            })))
        }
        Format::Csv => {
            let mut s = String::from("test,statistic,factor,centering,scaling,z,p_value,p_star\n");
            for (i, o) in observed.iter().enumerate() {
                let a = o.asymptotic.as_ref();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    o.test,
                    o.statistic,
                    a.map_or(String::new(), |a| a.factor.to_string()),
                    a.map_or(String::new(), |a| a.centering.to_string()),
                    a.map_or(String::new(), |a| a.scaling.to_string()),
                    a.map_or(String::new(), |a| a.z.to_string()),
                    a.map_or(String::new(), |a| a.p_value.to_string()),
                    boot_at(i).map_or(String::new(), |b| b.p_star.to_string()),
                ));
            }
            emit(&s)
        }
        Format::Text => {
            let mut s = format!(
                "n = {n}, p = {p}, kernel {kernel}, h = {:.6}, Omega = {:.6}, seed {seed}\n",
                bw.h, ctx.omega_measure
            );
            if let Some(b) = bootstrap {
                s.push_str(&format!("bootstrap: {b} replications, {boot_mode}\n"));
            }
            s.push_str(&format!(
                "{:<22} {:>12} {:>10} {:>10} {:>8}\n",
                "test", "statistic", "z", "p-value", "p*"
            ));
            for (i, o) in observed.iter().enumerate() {
                let a = o.asymptotic.as_ref();
                s.push_str(&format!(
                    "{:<22} {:>12.5} {:>10} {:>10} {:>8}\n",
                    o.test,
                    o.statistic,
                    fmt_opt(a.map(|a| a.z), 4),
                    fmt_opt(a.map(|a| a.p_value), 4),
                    fmt_opt(boot_at(i).map(|b| b.p_star), 3),
                ));
            }
            emit(&s)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn mc(
    preset: Option<&str>,
    config: Option<&Path>,
    reps: Option<usize>,
    seed: Option<u64>,
    ns: Option<&str>,
    out: Option<&Path>,
    format: Format,
    progress: bool,
) -> anyhow::Result<()> {
    let mut cfg = match (preset, config) {
        (Some(name), _) => ExperimentConfig::preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
        (None, None) => bail!(spectest::Error::InvalidArgument(
            "give a preset name or --config".into()
        )),
    };
    if let Some(r) = reps {
        cfg.reps = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(list) = ns {
        cfg.ns = list
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .with_context(|| format!("`{t}` is not a sample size"))
            })
            .collect::<anyhow::Result<_>>()?;
    }
    let report = harness::run_experiment_with(&cfg, |done, total, cell| {
        if progress {
            eprintln!(
                "[{done}/{total}] {} theta={} {} n={}",
                cell.model, cell.theta, cell.errors, cell.n
            );
        }
    })?;
    if let Some(path) = out {
        harness::persist_report(&report, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    match format {
        Format::Json => emit(&serde_json::to_string_pretty(&report)?),
        Format::Csv => emit(&report.table_csv),
        Format::Text => emit(&harness::table_text(&report)),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Constants {
            kernel,
            dim,
            tol,
            format,
        } => constants(kernel, dim, tol, format),
        Command::Are {
            kernel,
            omega,
            dim,
            convention,
            format,
        } => are(kernel, omega, dim, convention, format),
        Command::AreTable { omegas, format } => are_table_cmd(&omegas, format),
        Command::Gen {
            dgp,
            theta,
            dist,
            n,
            seed,
            truncation,
            shape,
            dim,
            omega,
            out,
        } => gen(
            &dgp,
            theta,
            dist,
            n,
            seed,
            truncation,
            shape,
            dim,
            omega,
            out.as_deref(),
        ),
        Command::Test {
            data,
            residuals,
            kernel,
            bandwidth,
            loss,
            tests,
            bootstrap,
            boot_mode,
            seed,
            omega_measure,
            format,
        } => test_cmd(
            data.as_deref(),
            residuals.as_deref(),
            kernel,
            &bandwidth,
            loss,
            &tests,
            bootstrap,
            boot_mode,
            seed,
            omega_measure,
            format,
        ),
        Command::Mc {
            preset,
            config,
            reps,
            seed,
            n,
            out,
            format,
            progress,
        } => mc(
            preset.as_deref(),
            config.as_deref(),
            reps,
            seed,
            n.as_deref(),
            out.as_deref(),
            format,
            progress,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let broken_pipe = err
                .chain()
                .filter_map(|e| e.downcast_ref::<std::io::Error>())
                .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe);
            if broken_pipe {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {err:#}");
            let degenerate = err
                .chain()
                .filter_map(|e| e.downcast_ref::<spectest::Error>())
                .any(spectest::Error::is_degenerate);
            ExitCode::from(if degenerate {
                EXIT_DEGENERATE
            } else {
                EXIT_DATA
            })
        }
    }
}
