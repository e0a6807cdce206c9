//! `whj`: command-line front end for the wasserstein-hj library.
//!
//! Every subcommand writes its JSON result to `--out` (stdout when absent)
//! and, with `--csv`, a flat table of the main quantities. `oracle` writes
//! CSV only.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use wasserstein_hj::classical::ClosedForm;
use wasserstein_hj::eulerpoisson::{boundary_momentum_check, euler_poisson_residual, optimality_condition_check};
use wasserstein_hj::viscosity::{direction_family, subsolution_probe, supersolution_probe};
use wasserstein_hj::{
    dp_check_with, hje_residual_wasserstein, minimize_classical_with, minimize_generalized_with, wasserstein,
    wasserstein_hopf_lax_with, Error, EulerPoissonReport, Measure, NewtonOptions, ScalarField, Spec, Strategy,
    TestCotangent, TestFunction,
};

#[derive(Parser, Debug)]
#[command(
    name = "whj",
    version,
    about = "Value functions and Hamilton-Jacobi checks on discrete measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Problem specification (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// JSON output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV summary file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Number of time steps N.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Optimizer gradient tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Optimizer iteration cap.
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Seed for randomly generated measures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Where the input measure comes from.
#[derive(Args, Debug, Clone)]
struct MeasureArgs {
    /// Measure file `{"points": [[..]], "weights": [..]}`; a random measure
    /// is drawn from `--seed` when absent.
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Particle count of the random measure.
    #[arg(long, default_value_t = 10)]
    particles: usize,
    /// Dimension of the random measure; defaults to the one implied by the
    /// spec, else 1.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StrategyArg {
    Auto,
    Joint,
    Decoupled,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Wasserstein distance and an optimal plan between two measures.
    Wp {
        #[command(flatten)]
        cfg: RunConfig,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Classical value u(x, t) and its minimizing path.
    ClassicalU {
        #[command(flatten)]
        cfg: RunConfig,
        /// Comma separated coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        t: f64,
    },
    /// Generalized value U(μ, t) and its minimizing ensemble.
    Value {
        #[command(flatten)]
        cfg: RunConfig,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
    },
    /// Hopf-Lax formula over measures (requires V ≡ 0).
    HopfLax {
        #[command(flatten)]
        cfg: RunConfig,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long)]
        t: f64,
    },
    /// Dynamic programming consistency at an intermediate time.
    DpCheck {
        #[command(flatten)]
        cfg: RunConfig,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long, default_value_t = 0.6)]
        t: f64,
        #[arg(long, default_value_t = 0.3)]
        s: f64,
    },
    /// Euler-Poisson residuals and optimality conditions along the minimizer.
    EulerPoisson {
        #[command(flatten)]
        cfg: RunConfig,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long)]
        t: f64,
    },
    /// Viscosity sub/supersolution probes for closed-form data.
    ViscosityProbe {
        #[command(flatten)]
        cfg: RunConfig,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long)]
        t: f64,
        /// Step for the subsolution difference quotients.
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Steps for the supersolution probe.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.025,0.0125")]
        h_sequence: Vec<f64>,
        /// Shift added to the exact time slope a.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        slope_shift: f64,
    },
    /// Closed-form table of u(x, t) = a(t)|x|^p/p for V = |x|^p/p, g ≡ 0.
    Oracle {
        #[command(flatten)]
        cfg: RunConfig,
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1", allow_hyphen_values = true)]
        x: Vec<f64>,
    },
}

/// Failure with a machine-readable kind and the process exit code.
struct Failure {
    kind: String,
    msg: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_)
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyMeasure
            | Error::HorizonExceeded { .. }
            | Error::BeyondBlowup { .. } => 2,
            Error::NoConvergence { .. } => 3,
            _ => 1,
        };
        Failure {
            kind: e.kind().to_string(),
            msg: e.to_string(),
            code,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            kind: "io".into(),
            msg: e.to_string(),
            code: 1,
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure {
            kind: "io".into(),
            msg: e.to_string(),
            code: 1,
        }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure {
        kind: "validation".into(),
        msg: msg.into(),
        code: 2,
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn read_file(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure {
        kind: "io".into(),
        msg: format!("{}: {e}", path.display()),
        code: 1,
    })
}

fn load_spec(cfg: &RunConfig) -> Res<Spec> {
    let path = cfg.spec.as_ref().ok_or_else(|| validation("--spec is required"))?;
    Ok(Spec::from_json(&read_file(path)?)?)
}

fn load_measure(path: &Path) -> Res<Measure> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn input_measure(m: &MeasureArgs, cfg: &RunConfig, spec: Option<&Spec>) -> Res<Measure> {
    if let Some(path) = &m.measure {
        return load_measure(path);
    }
    if m.particles == 0 {
        return Err(validation("--particles must be positive"));
    }
    let dim = m.dim.or_else(|| spec.and_then(Spec::dim_hint)).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = (0..m.particles)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let weights = (0..m.particles).map(|_| rng.gen_range(0.1..1.0)).collect();
    Ok(Measure::new(points, weights)?)
}

fn options(cfg: &RunConfig) -> Res<NewtonOptions<f64>> {
    if !(cfg.tol > 0.0) {
        return Err(validation("--tol must be positive"));
    }
    if cfg.grid < 2 {
        return Err(validation("--grid must be at least 2"));
    }
    Ok(NewtonOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    })
}

fn emit_json<S: Serialize>(cfg: &RunConfig, value: &S) -> Res<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        kind: "serialize".into(),
        msg: e.to_string(),
        code: 1,
    })?;
    text.push('\n');
    match &cfg.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Writes `rows` under `header` to `path`, or to stdout when `path` is
/// `None` and `to_stdout` is set.
fn emit_csv(path: Option<&Path>, to_stdout: bool, header: &[String], rows: &[Vec<String>]) -> Res<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p)?),
        None if to_stdout => Box::new(io::stdout()),
        None => return Ok(()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn coord_header(prefix: &[&str], dim: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|j| format!("x{j}")))
        .collect()
}

fn num(v: f64) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct PlanEntry {
    i: usize,
    j: usize,
    mass: f64,
}

#[derive(Serialize)]
struct WpOutput {
    p: f64,
    distance: f64,
    cost: f64,
    plan: Vec<PlanEntry>,
}

#[derive(Serialize)]
struct OracleRow {
    p: f64,
    t: f64,
    x: f64,
    a: f64,
    u: f64,
}

#[derive(Serialize)]
struct EulerPoissonOutput {
    t: f64,
    residuals: EulerPoissonReport<f64>,
    boundary_momentum: f64,
    /// Present when the data has an explicit value function.
    optimality: Option<f64>,
}

#[derive(Serialize)]
struct ViscosityOutput {
    t: f64,
    hje_residual: f64,
    candidate: TestCotangent<f64>,
    subsolution: wasserstein_hj::viscosity::SubsolutionReport<f64>,
    supersolution: wasserstein_hj::viscosity::SupersolutionReport<f64>,
}

fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Wp { cfg, mu, nu, p } => {
            if !(p >= 1.0) {
                return Err(validation("--p must be at least 1"));
            }
            let (mu, nu) = (load_measure(&mu)?, load_measure(&nu)?);
            let (distance, plan) = wasserstein(&mu, &nu, p)?;
            let entries: Vec<PlanEntry> = plan.support().map(|(i, j, mass)| PlanEntry { i, j, mass }).collect();
            let rows: Vec<Vec<String>> = entries
                .iter()
                .map(|e| vec![e.i.to_string(), e.j.to_string(), num(e.mass)])
                .collect();
            emit_csv(
                cfg.csv.as_deref(),
                false,
                &["i".into(), "j".into(), "mass".into()],
                &rows,
            )?;
            emit_json(
                &cfg,
                &WpOutput {
                    p,
                    distance,
                    cost: plan.cost(),
                    plan: entries,
                },
            )
        }
        Command::ClassicalU { cfg, x, t } => {
            let spec = load_spec(&cfg)?;
            let opts = options(&cfg)?;
            if x.is_empty() {
                return Err(validation("--x is required"));
            }
            let report = minimize_classical_with(&x, t, &spec, cfg.grid, None, &opts)?;
            let rows: Vec<Vec<String>> = (0..=report.path.steps())
                .map(|i| {
                    std::iter::once(num(report.path.time(i)))
                        .chain(report.path.node(i).iter().map(|&v| num(v)))
                        .collect()
                })
                .collect();
            emit_csv(cfg.csv.as_deref(), false, &coord_header(&["s"], x.len()), &rows)?;
            emit_json(&cfg, &report)
        }
        Command::Value { cfg, m, t, strategy } => {
            let spec = load_spec(&cfg)?;
            let opts = options(&cfg)?;
            let mu = input_measure(&m, &cfg, Some(&spec))?;
            let strategy = match strategy {
                StrategyArg::Auto => Strategy::Auto,
                StrategyArg::Joint => Strategy::Joint,
                StrategyArg::Decoupled => Strategy::Decoupled,
            };
            let report = minimize_generalized_with(&mu, t, &spec, cfg.grid, strategy, &opts)?;
            let mut rows = Vec::new();
            for (k, path) in report.path.paths().iter().enumerate() {
                for i in 0..=path.steps() {
                    let mut r = vec![k.to_string(), num(path.time(i))];
                    r.extend(path.node(i).iter().map(|&v| num(v)));
                    rows.push(r);
                }
            }
            emit_csv(
                cfg.csv.as_deref(),
                false,
                &coord_header(&["particle", "s"], mu.dim()),
                &rows,
            )?;
            emit_json(&cfg, &report)
        }
        Command::HopfLax { cfg, m, t } => {
            let spec = load_spec(&cfg)?;
            let opts = options(&cfg)?;
            let mu = input_measure(&m, &cfg, Some(&spec))?;
            let r = wasserstein_hopf_lax_with(&mu, t, spec.initial_functional(), &spec, &opts)?;
            let rows: Vec<Vec<String>> = r
                .tau
                .points()
                .zip(r.tau.weights())
                .enumerate()
                .map(|(k, (x, &w))| {
                    let mut row = vec![k.to_string(), num(w)];
                    row.extend(x.iter().map(|&v| num(v)));
                    row
                })
                .collect();
            emit_csv(
                cfg.csv.as_deref(),
                false,
                &coord_header(&["particle", "weight"], mu.dim()),
                &rows,
            )?;
            emit_json(&cfg, &r)
        }
        Command::DpCheck { cfg, m, t, s } => {
            let spec = load_spec(&cfg)?;
            let opts = options(&cfg)?;
            let mu = input_measure(&m, &cfg, Some(&spec))?;
            let r = dp_check_with(&mu, t, s, &spec, cfg.grid, &opts)?;
            let header = ["lhs", "rhs", "residual", "s"].map(String::from);
            emit_csv(
                cfg.csv.as_deref(),
                false,
                &header,
                &[vec![num(r.lhs), num(r.rhs), num(r.residual), num(r.s)]],
            )?;
            emit_json(&cfg, &r)
        }
        Command::EulerPoisson { cfg, m, t } => {
            let spec = load_spec(&cfg)?;
            let opts = options(&cfg)?;
            let mu = input_measure(&m, &cfg, Some(&spec))?;
            let best = minimize_generalized_with(&mu, t, &spec, cfg.grid, Strategy::Auto, &opts)?;
            let sigma = &best.path;
            let residuals = euler_poisson_residual(sigma, &spec, &TestFunction::default_set(sigma))?;
            let boundary_momentum = boundary_momentum_check(sigma, &spec)?;
            let optimality = match ClosedForm::from_spec(&spec, t) {
                Ok(cf) => Some(optimality_condition_check(sigma, &spec, |x, s| cf.u(x, s))?),
                Err(_) => None,
            };
            let mut header = vec!["test".to_string(), "continuity".to_string()];
            header.extend((0..mu.dim()).map(|k| format!("momentum{k}")));
            let rows: Vec<Vec<String>> = residuals
                .per_test
                .iter()
                .map(|r| {
                    let mut row = vec![r.name.clone(), num(r.continuity)];
                    row.extend(r.momentum.iter().map(|&v| num(v)));
                    row
                })
                .collect();
            emit_csv(cfg.csv.as_deref(), false, &header, &rows)?;
            emit_json(
                &cfg,
                &EulerPoissonOutput {
                    t,
                    residuals,
                    boundary_momentum,
                    optimality,
                },
            )
        }
        Command::ViscosityProbe {
            cfg,
            m,
            t,
            h,
            h_sequence,
            slope_shift,
        } => {
            let spec = load_spec(&cfg)?;
            let mu = input_measure(&m, &cfg, Some(&spec))?;
            let cf = ClosedForm::from_spec(&spec, t)?;
            let u = |nu: &Measure, s: f64| -> wasserstein_hj::Result<f64> {
                nu.points().zip(nu.weights()).map(|(x, &w)| Ok(w * cf.u(x, s)?)).sum()
            };
            let xi = mu.points().map(|x| cf.grad_u(x, t)).collect::<Result<Vec<_>, _>>()?;
            let a: f64 = mu
                .points()
                .zip(mu.weights())
                .map(|(x, &w)| Ok(w * cf.u_t(x, t)?))
                .sum::<wasserstein_hj::Result<f64>>()?;
            let cand = TestCotangent::new(&mu, xi, a + slope_shift)?;
            let dirs = direction_family(&mu, &cand, spec.p(), 1.0)?;
            let subsolution = subsolution_probe(u, &mu, t, &cand, &dirs, h, &spec)?;
            let supersolution = supersolution_probe(u, &mu, t, &cand, &h_sequence, &spec, cfg.grid)?;
            let rows: Vec<Vec<String>> = subsolution
                .directions
                .iter()
                .map(|d| vec![d.label.clone(), num(d.inequality), num(d.violation), num(d.dp_gap)])
                .collect();
            let header = ["direction", "inequality", "violation", "dp_gap"].map(String::from);
            emit_csv(cfg.csv.as_deref(), false, &header, &rows)?;
            emit_json(
                &cfg,
                &ViscosityOutput {
                    t,
                    hje_residual: hje_residual_wasserstein(&spec, &mu, t)?,
                    candidate: cand,
                    subsolution,
                    supersolution,
                },
            )
        }
        Command::Oracle { cfg, p, t, x } => {
            if t.is_empty() {
                return Err(validation("--t is required"));
            }
            let spec = Spec::new(p, ScalarField::Zero, ScalarField::p_power(p))?;
            let t_max = t.iter().copied().fold(0.0, f64::max);
            let cf = ClosedForm::from_spec(&spec, t_max)?;
            let mut table = Vec::new();
            for &ti in &t {
                for &xi in &x {
                    table.push(OracleRow {
                        p,
                        t: ti,
                        x: xi,
                        a: cf.a(ti)?,
                        u: cf.u(&[xi], ti)?,
                    });
                }
            }
            let rows: Vec<Vec<String>> = table
                .iter()
                .map(|r| vec![num(r.p), num(r.t), num(r.x), num(r.a), num(r.u)])
                .collect();
            let header = ["p", "t", "x", "a", "u"].map(String::from);
            emit_csv(cfg.csv.as_deref(), cfg.csv.is_none(), &header, &rows)?;
            if cfg.out.is_some() {
                emit_json(&cfg, &table)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.msg.replace('\n', " ");
            eprintln!("error kind={} msg={msg}", f.kind);
            ExitCode::from(f.code)
        }
    }
}
