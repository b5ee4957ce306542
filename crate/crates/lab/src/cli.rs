//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use driftlab_core::filter::{run_filter, Regime};
use driftlab_core::simulate::{simulate_indexed, MarketPath, NodeKind};
use driftlab_core::value::strategy_along;
use driftlab_core::{DateScheme, Model};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SchemeKind};
use crate::experiments::{
    cov_error_deterministic, cov_error_poisson, mean_error, pathwise_utility_gap, table2a, table2b, value_function,
    ConvergenceReport, ExperimentError, ValueReport,
};
use crate::mc::Runner;
use crate::output::{fmt_f64, fmt_opt, OutputSet, RunInfo, Table};

/// Overrides `output.dir` from the config file.
pub const OUTPUT_DIR_ENV: &str = "DRIFTLAB_OUTPUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about = "Filtering and convergence experiments for hidden-drift models with expert opinions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Run configuration (flat key = value file).
    pub config: PathBuf,
    /// Worker threads; 0 uses all cores. Does not affect results.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate market paths and expert opinions.
    Simulate(Common),
    /// Run the R, J, Z and F filters along simulated paths.
    Filter(Common),
    /// Convergence of the Z covariance to the J covariance.
    ConvergeCov(Common),
    /// Convergence of the Z conditional mean to the J conditional mean.
    ConvergeMean(Common),
    /// Value functions of the R, Z, J and F investors.
    Value(Common),
    /// Value functions with deterministic dates.
    Table2a(Common),
    /// Value functions with Poisson dates, with confidence intervals.
    Table2b(Common),
    /// Terminal log-wealth gap between Z and J strategies.
    UtilityGap(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter(_) => "filter",
            Command::ConvergeCov(_) => "converge-cov",
            Command::ConvergeMean(_) => "converge-mean",
            Command::Value(_) => "value",
            Command::Table2a(_) => "table2a",
            Command::Table2b(_) => "table2b",
            Command::UtilityGap(_) => "utility-gap",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Filter(c)
            | Command::ConvergeCov(c)
            | Command::ConvergeMean(c)
            | Command::Value(c)
            | Command::Table2a(c)
            | Command::Table2b(c)
            | Command::UtilityGap(c) => c,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(dir) => {
            println!("outputs written to {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config, applying the output-directory override.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

/// Runs one command; returns the directory holding its outputs.
pub fn execute(command: &Command) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let common = command.common();
    let cfg = load_config(&common.config)?;
    let model = cfg.validated_model()?;
    let runner = Runner::new(common.threads);
    let mut out = OutputSet::create(&cfg.output_dir.join(command.name()))?;
    match command {
        Command::Simulate(_) => simulate(&cfg, &model, &mut out)?,
        Command::Filter(_) => filter(&cfg, &model, &mut out)?,
        Command::ConvergeCov(_) => {
            let schemes = level_schemes(&cfg);
            let report = match cfg.scheme.kind {
                SchemeKind::Deterministic => cov_error_deterministic(&model, &schemes, cfg.numerics.h_max)?,
                SchemeKind::Poisson => cov_error_poisson(
                    &model,
                    &schemes,
                    cfg.experiment.p,
                    cfg.mc.n_mc,
                    cfg.mc.seed,
                    cfg.numerics.h_max,
                    &runner,
                )?,
            };
            write_convergence(&cfg, &report, &mut out)?;
        }
        Command::ConvergeMean(_) => {
            let report = mean_error(
                &model,
                &level_schemes(&cfg),
                cfg.experiment.p,
                cfg.numerics.checkpoints,
                cfg.numerics.full_sup,
                cfg.mc.n_mc,
                cfg.mc.seed,
                cfg.numerics.h_max,
                &runner,
            )?;
            write_convergence(&cfg, &report, &mut out)?;
        }
        Command::UtilityGap(_) => {
            let report = pathwise_utility_gap(
                &model,
                &level_schemes(&cfg),
                cfg.experiment.x0,
                cfg.mc.n_mc,
                cfg.mc.seed,
                cfg.numerics.h_max,
                &runner,
            )?;
            write_convergence(&cfg, &report, &mut out)?;
        }
        Command::Value(_) => {
            let scheme = cfg.scheme.scheme();
            let mut rows = Vec::new();
            for regime in [Regime::R, Regime::Z, Regime::J, Regime::F] {
                let s = (regime == Regime::Z).then_some(&scheme);
                rows.push(value_function(
                    &model,
                    regime,
                    s,
                    cfg.experiment.x0,
                    cfg.value_step(),
                    Some(cfg.mc.n_mc),
                    cfg.mc.seed,
                    &runner,
                )?);
            }
            write_values("value.csv", &rows, &mut out)?;
        }
        Command::Table2a(_) => {
            let rows = table2a(&model, &cfg.experiment.table2a_n, cfg.experiment.x0, cfg.value_step())?;
            write_values("table2a.csv", &rows, &mut out)?;
        }
        Command::Table2b(_) => {
            let rows = table2b(
                &model,
                &cfg.experiment.table2b_lambda,
                cfg.experiment.x0,
                cfg.value_step(),
                cfg.mc.n_mc,
                cfg.mc.seed,
                &runner,
            )?;
            write_values("table2b.csv", &rows, &mut out)?;
        }
    }
    let info = RunInfo { command: command.name(), version: VERSION, seed: cfg.mc.seed, config: cfg.echo() };
    out.write_manifest(&info, started.elapsed())?;
    Ok(out.dir().to_path_buf())
}

fn level_schemes(cfg: &RunConfig) -> Vec<DateScheme> {
    cfg.scheme.scheme_list()
}

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}_{i}"))
}

fn matrix_cols(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).flat_map(|i| (1..=d).map(move |j| format!("{prefix}_{i}{j}"))).collect()
}

fn nums(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|&x| fmt_f64(x))
}

fn paths_of(cfg: &RunConfig, model: &Model) -> Result<Vec<MarketPath>, ExperimentError> {
    let scheme = cfg.scheme.scheme();
    let h = cfg.h_max_for(&scheme);
    (0..cfg.experiment.paths)
        .map(|p| Ok(simulate_indexed(model, &scheme, h, &[], cfg.mc.seed, p as u64)?))
        .collect()
}

fn simulate(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<(), CliError> {
    let d = model.dim();
    let mut header = vec!["path".to_string(), "time".to_string()];
    header.extend(numbered("mu", d));
    header.extend(numbered("dR", d));
    header.extend(numbered("dJ", d));
    header.push("flag".into());
    let mut table = Table::new(header);
    let mut opinions = Table::new(["path".to_string(), "k".to_string(), "time".to_string()].into_iter().chain(numbered("z", d)));
    for (p, path) in paths_of(cfg, model)?.iter().enumerate() {
        let grid = &path.grid;
        for (i, &t) in grid.nodes().iter().enumerate() {
            let mut row = vec![p.to_string(), fmt_f64(t)];
            row.extend(nums(path.mu_at(i)));
            // Increments over the interval ending at this node.
            if i == 0 {
                row.extend(std::iter::repeat_n(String::new(), 2 * d));
            } else {
                row.extend(nums(path.returns_at(i - 1)));
                row.extend(nums(path.expert_at(i - 1)));
            }
            row.push(match grid.kinds()[i] {
                NodeKind::Plain => "0".into(),
                NodeKind::InfoDate(_) => "1".into(),
            });
            table.push(row);
        }
        for op in &path.opinions {
            let mut row = vec![p.to_string(), op.k.to_string(), fmt_f64(op.time)];
            row.extend(nums(&op.value));
            opinions.push(row);
        }
    }
    out.write_table("paths.csv", &table)?;
    out.write_table("opinions.csv", &opinions)?;
    println!("simulated {} path(s), {} opinion(s)", cfg.experiment.paths, opinions.len());
    Ok(())
}

fn filter(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<(), CliError> {
    let d = model.dim();
    let scheme = cfg.scheme.scheme();
    let mut header = vec!["path".to_string(), "time".to_string(), "regime".to_string()];
    header.extend(numbered("m_hat", d));
    header.extend(matrix_cols("q", d));
    header.extend(numbered("pi", d));
    header.push("is_update".into());
    let mut traj = Table::new(header);
    let mut jh = vec!["path".to_string(), "regime".to_string(), "k".to_string(), "time".to_string()];
    jh.extend(numbered("m_pre", d));
    jh.extend(numbered("m_post", d));
    jh.extend(matrix_cols("q_pre", d));
    jh.extend(matrix_cols("q_post", d));
    let mut jumps = Table::new(jh);
    for (p, path) in paths_of(cfg, model)?.iter().enumerate() {
        for regime in Regime::ALL {
            let tr = run_filter(regime, model, &scheme, path).map_err(ExperimentError::from)?;
            let pi = strategy_along(model, &tr);
            let mut next_jump = 0;
            for (i, st) in tr.states.iter().enumerate() {
                let is_update = next_jump < tr.jumps.len() && tr.jumps[next_jump].node == i;
                if is_update {
                    next_jump += 1;
                }
                let mut row = vec![p.to_string(), fmt_f64(st.t), regime.name().to_string()];
                row.extend(nums(&st.m_hat));
                row.extend(nums(st.q.as_slice()));
                row.extend(nums(&pi[i]));
                row.push(if is_update { "1" } else { "0" }.into());
                traj.push(row);
            }
            for j in &tr.jumps {
                let mut row = vec![p.to_string(), regime.name().to_string(), j.k.to_string(), fmt_f64(j.time)];
                row.extend(nums(&j.pre.m_hat));
                row.extend(nums(&j.post.m_hat));
                row.extend(nums(j.pre.q.as_slice()));
                row.extend(nums(j.post.q.as_slice()));
                jumps.push(row);
            }
        }
    }
    out.write_table("trajectory.csv", &traj)?;
    out.write_table("jumps.csv", &jumps)?;
    println!("filtered {} path(s) under R, J, Z, F", cfg.experiment.paths);
    Ok(())
}

/// Acceptance window for a fitted slope: the configured one, or ±0.15
/// around the expected slope.
pub fn slope_window(cfg: &RunConfig, report: &ConvergenceReport) -> Option<(f64, f64)> {
    cfg.experiment.slope_window.or(report.expected_slope.map(|e| (e - 0.15, e + 0.15)))
}

pub fn summary_text(cfg: &RunConfig, report: &ConvergenceReport) -> String {
    let mut s = String::new();
    let line = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<16} {v}\n"));
    line(&mut s, "quantity", report.quantity.name().into());
    line(&mut s, "scheme", report.scheme_kind.name().into());
    line(&mut s, "p", fmt_f64(report.p));
    line(&mut s, "levels", report.levels.iter().map(|&l| fmt_f64(l)).collect::<Vec<_>>().join(" "));
    match report.slope {
        Some(f) => {
            line(&mut s, "slope", fmt_f64(f.slope));
            line(&mut s, "slope_stderr", fmt_f64(f.stderr));
            line(&mut s, "intercept", fmt_f64(f.intercept));
        }
        None => line(&mut s, "slope", "not fitted (fewer than 3 positive errors)".into()),
    }
    line(&mut s, "expected_slope", fmt_opt(report.expected_slope));
    if let Some((lo, hi)) = slope_window(cfg, report) {
        let verdict = match report.slope_within(lo, hi) {
            Some(true) => "inside",
            Some(false) => "outside",
            None => "n/a",
        };
        line(&mut s, "window", format!("[{}, {}] {verdict}", fmt_f64(lo), fmt_f64(hi)));
    }
    if !report.excluded.is_empty() {
        let ex: Vec<String> = report.excluded.iter().map(|&i| fmt_f64(report.levels[i])).collect();
        line(&mut s, "below_resolution", ex.join(" "));
    }
    for d in &report.diagnostics {
        line(&mut s, &format!("{}_slope", d.name), d.slope.map_or_else(String::new, |f| fmt_f64(f.slope)));
    }
    if let Some(n) = report.n_mc {
        line(&mut s, "n_mc", n.to_string());
    }
    if let Some(seed) = report.seed {
        line(&mut s, "seed", seed.to_string());
    }
    s
}

fn write_convergence(cfg: &RunConfig, report: &ConvergenceReport, out: &mut OutputSet) -> Result<(), CliError> {
    let mut header: Vec<String> = ["level", "error", "std_error", "fitted", "h_max"].map(String::from).to_vec();
    header.extend(report.diagnostics.iter().map(|d| d.name.to_string()));
    let mut table = Table::new(header);
    for (i, &level) in report.levels.iter().enumerate() {
        let mut row = vec![
            fmt_f64(level),
            fmt_f64(report.errors[i]),
            fmt_opt(report.std_errors[i]),
            fmt_opt(report.slope.map(|f| f.predict(level))),
            fmt_opt(report.h_max.get(i).copied()),
        ];
        row.extend(report.diagnostics.iter().map(|d| fmt_f64(d.values[i])));
        table.push(row);
    }
    out.write_table(&format!("{}.csv", report.quantity.name()), &table)?;
    let summary = summary_text(cfg, report);
    print!("{summary}");
    out.write_bytes("summary.txt", summary.as_bytes())?;
    Ok(())
}

fn write_values(name: &str, rows: &[ValueReport], out: &mut OutputSet) -> Result<(), CliError> {
    let mut table = Table::new(["investor", "regime", "scheme", "level", "value", "ci_lo", "ci_hi", "sd", "n_mc", "x0"]);
    for r in rows {
        println!("{:<16} {}", r.label(), fmt_f64(r.value));
        table.push(vec![
            r.label(),
            r.regime.name().to_string(),
            r.scheme_kind.map(|k| k.name().to_string()).unwrap_or_default(),
            fmt_opt(r.level),
            fmt_f64(r.value),
            fmt_opt(r.ci.map(|c| c.0)),
            fmt_opt(r.ci.map(|c| c.1)),
            fmt_opt(r.sd),
            r.n_mc.map(|n| n.to_string()).unwrap_or_default(),
            fmt_f64(r.x0),
        ]);
    }
    out.write_table(name, &table)?;
    Ok(())
}
