//! The `fodsid` command line: `simulate`, `identify`, `certify`,
//! `montecarlo` and `forecast`, driven by a JSON [`RunConfig`] with flag
//! overrides.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure (a degenerate fit counts only under `--strict`). Failures print
//! a JSON object `{"error": {...}}` on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::certify::{
    evaluate_bound, evaluate_bound_with_inputs, monte_carlo_campaign, spectral_radius,
    tightest_certificate, CampaignConfig,
};
use crate::config::{RunConfig, SimGenerator};
use crate::error::Error;
use crate::forecast::{
    default_p, load_series, window_size_sweep, windowed_fit_predict, write_sweep_csv,
};
use crate::frac::{augment_with, FracSystem};
use crate::ident::{
    ols_fit_with, ols_fit_with_inputs_opts, operator_norm_error, submatrix_error_report,
};
use crate::io::{matrix_to_rows, meta_path, read_trajectory_csv, write_trajectory_csv};
use crate::sim::{gaussian_inputs, simulate_augmented, simulate_exact_with};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "fodsid",
    version,
    about = "Fractional-order system identification toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// System description JSON.
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Fail on degenerate fits.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV.
    Simulate,
    /// Fit the augmented transition matrix to a trajectory CSV.
    Identify,
    /// Evaluate the sample-complexity certificate.
    Certify,
    /// Run a Monte-Carlo campaign of simulate-and-fit trials.
    Montecarlo,
    /// Windowed OLS forecasting on a multichannel CSV.
    Forecast,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Identify => "identify",
            Command::Certify => "certify",
            Command::Montecarlo => "montecarlo",
            Command::Forecast => "forecast",
        }
    }
}

/// A failure tagged with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl CliError {
    fn config(error: Error) -> Self {
        CliError {
            code: EXIT_CONFIG,
            error,
        }
    }

    fn data(error: Error) -> Self {
        CliError {
            code: EXIT_DATA,
            error,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code {
            EXIT_CONFIG => "config",
            EXIT_DATA => "data",
            _ => "numerical",
        }
    }

    fn to_json(&self) -> Value {
        let mut e = json!({
            "code": self.code,
            "kind": self.kind(),
            "message": self.error.to_string(),
        });
        if let Error::Io { path, .. } = &self.error {
            e["path"] = json!(path.display().to_string());
        }
        json!({ "error": e })
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Config(_) | Error::Domain(_) | Error::Json(_) => EXIT_CONFIG,
            Error::Data(_) | Error::Csv(_) | Error::Io { .. } => EXIT_DATA,
            Error::Numerical(_) => EXIT_NUMERICAL,
        };
        CliError { code, error }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FODSID_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::config)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = &cli.system {
        cfg.system = Some(s.clone());
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.force |= cli.force;
    cfg.strict |= cli.strict;
    Ok(cfg)
}

struct Context {
    cfg: RunConfig,
    command: Command,
}

impl Context {
    fn system(&self) -> CliResult<FracSystem> {
        let path = self.cfg.system.as_ref().ok_or_else(|| {
            CliError::config(Error::config(
                "no system file given (`system` key or --system)",
            ))
        })?;
        FracSystem::load(path).map_err(|e| match e {
            Error::Io { path, source } => CliError::config(Error::Io { path, source }),
            other => CliError::config(other),
        })
    }

    fn output(&self, name: &str) -> CliResult<PathBuf> {
        let path = self.cfg.out_dir.join(name);
        if path.exists() && !self.cfg.force {
            return Err(CliError::config(Error::config(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            ))));
        }
        Ok(path)
    }

    fn provenance(&self) -> Value {
        json!({
            "tool": "fodsid",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.command.name(),
            "config": self.cfg.to_json_value(),
        })
    }

    fn create(&self, path: &Path) -> CliResult<BufWriter<File>> {
        std::fs::create_dir_all(&self.cfg.out_dir)
            .map_err(|e| CliError::data(Error::io(&self.cfg.out_dir, e)))?;
        File::create(path)
            .map(BufWriter::new)
            .map_err(|e| CliError::data(Error::io(path, e)))
    }

    fn write_json(&self, path: &Path, value: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
        std::fs::create_dir_all(&self.cfg.out_dir)
            .map_err(|e| CliError::data(Error::io(&self.cfg.out_dir, e)))?;
        std::fs::write(path, text).map_err(|e| CliError::data(Error::io(path, e)))
    }

    fn x0(&self, given: &Option<Vec<f64>>, n: usize) -> CliResult<DVector<f64>> {
        match given {
            Some(v) if v.len() != n => Err(CliError::config(Error::config(format!(
                "x0 has length {}, system has n = {n}",
                v.len()
            )))),
            Some(v) => Ok(DVector::from_row_slice(v)),
            None => Ok(DVector::from_element(n, 1.0)),
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let ctx = Context {
        cfg,
        command: cli.command,
    };
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Identify => cmd_identify(&ctx),
        Command::Certify => cmd_certify(&ctx),
        Command::Montecarlo => cmd_montecarlo(&ctx),
        Command::Forecast => cmd_forecast(&ctx),
    }
}

fn cmd_simulate(ctx: &Context) -> CliResult<()> {
    let sec = &ctx.cfg.simulate;
    let system = ctx.system()?;
    let csv_path = ctx.output(&sec.output)?;
    let meta = meta_path(&csv_path);
    if meta.exists() && !ctx.cfg.force {
        return Err(CliError::config(Error::config(format!(
            "{} exists; pass --force to overwrite",
            meta.display()
        ))));
    }
    let x0 = ctx.x0(&sec.x0, system.n())?;
    let seed = ctx.cfg.master_seed;
    let inputs = match system.b() {
        Some(b) => Some(gaussian_inputs(b.ncols(), sec.horizon, sec.sigma_u, seed)?),
        None => None,
    };
    let mut traj = match sec.generator {
        SimGenerator::Exact => simulate_exact_with(
            &system,
            &x0,
            sec.horizon,
            seed,
            inputs.as_ref(),
            ctx.cfg.a0_convention,
        )?,
        SimGenerator::Augmented => {
            let aug = augment_with(&system, sec.p, ctx.cfg.a0_convention)?;
            simulate_augmented(
                &aug,
                system.sigma(),
                &x0,
                sec.horizon,
                seed,
                inputs.as_ref(),
            )?
        }
    };
    if inputs.is_some() {
        traj = traj.with_sigma_u(sec.sigma_u);
    }
    write_trajectory_csv(&traj, ctx.create(&csv_path)?)?;
    let mut meta_json = serde_json::to_value(&traj.meta).map_err(Error::from)?;
    meta_json["provenance"] = ctx.provenance();
    ctx.write_json(&meta, &meta_json)
}

fn cmd_identify(ctx: &Context) -> CliResult<()> {
    let sec = &ctx.cfg.identify;
    let traj_path = sec
        .trajectory
        .clone()
        .unwrap_or_else(|| ctx.cfg.out_dir.join(&ctx.cfg.simulate.output));
    let out = ctx.output(&sec.output)?;
    let traj = read_trajectory_csv(&traj_path).map_err(CliError::data)?;
    let system = match &ctx.cfg.system {
        Some(_) => Some(ctx.system()?),
        None => None,
    };
    let aug = system
        .as_ref()
        .map(|s| augment_with(s, sec.p, ctx.cfg.a0_convention))
        .transpose()?;
    let opts = sec.ols_options();
    let btilde = aug.as_ref().and_then(|a| a.btilde());
    let est = match (btilde, traj.inputs()) {
        (Some(bt), Some(_)) if sec.use_inputs => ols_fit_with_inputs_opts(&traj, sec.p, bt, &opts)?,
        _ => ols_fit_with(&traj, sec.p, &opts)?,
    };

    let mut doc = est.to_json();
    if let Some(aug) = &aug {
        if aug.n() == traj.n() {
            let report = submatrix_error_report(&est, aug)?;
            doc["truth"] = json!({
                "Atilde": matrix_to_rows(aug.atilde()),
                "op_error": operator_norm_error(&est, aug)?,
                "block_errors": report.blocks,
            });
        }
    }
    doc["provenance"] = ctx.provenance();
    ctx.write_json(&out, &doc)?;
    if est.degenerate {
        log::warn!(
            "regressors are rank deficient (rank {} < {})",
            est.rank,
            est.d()
        );
        if ctx.cfg.strict {
            return Err(CliError {
                code: EXIT_NUMERICAL,
                error: Error::Numerical(format!(
                    "degenerate fit: regressor rank {} < {}",
                    est.rank,
                    est.d()
                )),
            });
        }
    }
    Ok(())
}

fn cmd_certify(ctx: &Context) -> CliResult<()> {
    let sec = &ctx.cfg.certify;
    let system = ctx.system()?;
    let out = ctx.output(&sec.output)?;
    let aug = augment_with(&system, sec.p, ctx.cfg.a0_convention)?;
    let constants = &ctx.cfg.constants;
    let with_inputs = match (aug.btilde(), sec.sigma_u) {
        (Some(b), Some(su)) => Some((b, su)),
        (None, Some(_)) => {
            return Err(CliError::config(Error::config(
                "certify.sigma_u given but the system has no input matrix",
            )))
        }
        _ => None,
    };
    let cert = match (sec.k, with_inputs) {
        (Some(k), Some((b, su))) => evaluate_bound_with_inputs(
            aug.atilde(),
            b,
            sec.big_k,
            k,
            sec.delta,
            system.sigma(),
            su,
            constants,
        )?,
        (Some(k), None) => evaluate_bound(
            aug.atilde(),
            sec.big_k,
            k,
            sec.delta,
            system.sigma(),
            constants,
        )?,
        (None, inputs) => tightest_certificate(
            aug.atilde(),
            inputs,
            sec.big_k,
            sec.delta,
            system.sigma(),
            constants,
        )?,
    };
    let stability = spectral_radius(aug.atilde())?;
    let mut doc = serde_json::to_value(&cert).map_err(Error::from)?;
    doc["stability"] = serde_json::to_value(stability).map_err(Error::from)?;
    doc["provenance"] = ctx.provenance();
    ctx.write_json(&out, &doc)
}

fn cmd_montecarlo(ctx: &Context) -> CliResult<()> {
    let sec = &ctx.cfg.montecarlo;
    let system = ctx.system()?;
    let out = ctx.output(&sec.output)?;
    let meta = meta_path(&out);
    let campaign = CampaignConfig {
        p: sec.p,
        k_list: sec.k_list.clone(),
        trials: sec.trials,
        delta: sec.delta,
        constants: ctx.cfg.constants,
        master_seed: ctx.cfg.master_seed,
        x0: sec.x0.clone(),
        sigma_u: sec.sigma_u,
        simulator: sec.simulator,
        ols: sec.ols,
        threads: ctx.cfg.threads,
    };
    let table = monte_carlo_campaign(&system, &campaign)?;
    for w in &table.warnings {
        log::warn!("{w}");
    }
    table.write_csv(ctx.create(&out)?)?;
    let doc = json!({
        "variant": table.variant,
        "stability": table.stability,
        "warnings": table.warnings,
        "median_slope": table.median_slope(),
        "rows": table.rows,
        "provenance": ctx.provenance(),
    });
    ctx.write_json(&meta, &doc)
}

fn cmd_forecast(ctx: &Context) -> CliResult<()> {
    let sec = &ctx.cfg.forecast;
    let input = sec
        .input
        .as_ref()
        .ok_or_else(|| CliError::config(Error::config("forecast.input is not set")))?;
    let pred_path = ctx.output(&sec.predictions_output)?;
    let sweep_path = ctx.output(&sec.sweep_output)?;
    let meta = meta_path(&pred_path);
    let series = load_series(input, &sec.load).map_err(CliError::data)?;
    let alpha = sec
        .alpha
        .clone()
        .unwrap_or_else(|| vec![0.5; series.channels()]);
    let p = sec.p.unwrap_or_else(|| default_p(sec.window_size));

    let run = || -> CliResult<_> {
        let fc = windowed_fit_predict(&series, &alpha, p, sec.window_size, &sec.options)?;
        let sweep = window_size_sweep(&series, &alpha, sec.p, &sec.window_sizes, &sec.options);
        Ok((fc, sweep))
    };
    let (fc, sweep) = match ctx.cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| CliError::config(Error::config(format!("cannot build thread pool: {e}"))))?
            .install(run)?,
        None => run()?,
    };

    fc.write_predictions_csv(&series, ctx.create(&pred_path)?)?;
    write_sweep_csv(&sweep, ctx.create(&sweep_path)?)?;
    let degenerate = fc
        .per_window_estimates
        .iter()
        .filter(|e| e.degenerate)
        .count();
    let doc = json!({
        "channels": series.names,
        "samples": series.len(),
        "alpha": alpha,
        "p": p,
        "window_size": sec.window_size,
        "num_windows": fc.metrics.num_windows,
        "degenerate_windows": degenerate,
        "metrics": fc.metrics,
        "sweep": sweep,
        "provenance": ctx.provenance(),
    });
    ctx.write_json(&meta, &doc)?;
    if degenerate > 0 && ctx.cfg.strict {
        return Err(CliError {
            code: EXIT_NUMERICAL,
            error: Error::Numerical(format!("{degenerate} window fits are rank deficient")),
        });
    }
    Ok(())
}
