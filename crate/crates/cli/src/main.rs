//! `localu`: command-line front end for the estimators and Monte Carlo checks.
//!
//! Every command reads a JSON config, writes CSV files, `summary.json` and
//! `manifest.json` into `--out`, and exits with 0 on success, 2 when a check
//! in the summary fails and 1 on any error.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use localu::estimator::surface;
use localu::harness::{
    bench, run_bias_rate, run_clt, run_degenerate_decay, run_uniform_bandwidth, verify_hoeffding,
    Experiment, ExperimentConfig, HoeffdingSpec, DEGENERACY_TOLERANCE, RESIDUAL_TOLERANCE,
};
use localu::models::sample;
use localu::theory::theorem7_sigma;
use localu::BaseLaw;
use output::{fmt9, opt9, Check, Csv, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Estimate,
    HoeffdingVerify,
    CltCheck,
    UniformCheck,
    DecayCheck,
    BiasRate,
    Sigma,
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::HoeffdingVerify => "hoeffding-verify",
            Command::CltCheck => "clt-check",
            Command::UniformCheck => "uniform-check",
            Command::DecayCheck => "decay-check",
            Command::BiasRate => "bias-rate",
            Command::Sigma => "sigma",
            Command::Bench => "bench",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "localu",
    version,
    about = "Local U-statistic estimators and their limit theory"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the replication pool.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the kernel-evaluation budget of the config file.
    #[arg(long)]
    budget: Option<f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

fn experiment(cli: &Cli) -> Result<Experiment> {
    let mut cfg: ExperimentConfig = read_json(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = cli.budget {
        cfg.budget = budget;
    }
    Ok(Experiment::new(cfg)?)
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SigmaConfig {
    base: String,
    #[serde(default = "default_dim")]
    dim: usize,
}

/// Runs one command and returns whether all of its checks passed, plus the seed used.
fn dispatch(cli: &Cli, out: &mut Outputs) -> Result<(bool, Option<u64>)> {
    let cmd = cli.command.name();
    match cli.command {
        Command::Estimate => {
            let exp = experiment(cli)?;
            let cost: f64 = exp.config.n.iter().map(|n| exp.sample_cost(*n)).sum();
            exp.check_budget(cost)?;
            let mut csv = Csv::new(&["t", "lambda", "U", "centered_u", "n", "h_n"]);
            let mut rows = 0usize;
            for &n in &exp.config.n {
                let s = sample(&exp.model, n, exp.config.seed)?;
                let h = exp.h_n(n);
                let surf = surface(
                    &s,
                    &exp.model,
                    &exp.kernel,
                    &exp.t_points(),
                    &exp.config.lambda_grid,
                    h,
                    exp.config.path,
                )?;
                for (l, lambda) in surf.lambda_grid.iter().enumerate() {
                    for (j, t) in exp.config.t_grid.iter().enumerate() {
                        let centred = surf.centered.as_ref().map(|c| c[l][j]);
                        csv.push(vec![
                            fmt9(*t),
                            fmt9(*lambda),
                            fmt9(surf.values[l][j]),
                            opt9(centred),
                            n.to_string(),
                            fmt9(h),
                        ]);
                        rows += 1;
                    }
                }
            }
            out.csv("estimate.csv", &csv)?;
            let pass = out.summary(cmd, Vec::new(), serde_json::json!({ "rows": rows }))?;
            Ok((pass, Some(exp.config.seed)))
        }
        Command::HoeffdingVerify => {
            let mut spec: HoeffdingSpec = read_json(&cli.config)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let cases = verify_hoeffding(&spec)?;
            let mut csv = Csv::new(&[
                "case",
                "model",
                "kernel",
                "h",
                "t",
                "n",
                "residual",
                "degeneracy",
                "pass",
            ]);
            for c in &cases {
                csv.push(vec![
                    c.id.to_string(),
                    format!("\"{}\"", c.model),
                    c.kernel.clone(),
                    fmt9(c.h),
                    fmt9(c.t),
                    c.n.to_string(),
                    fmt9(c.residual),
                    fmt9(c.degeneracy),
                    c.pass.to_string(),
                ]);
            }
            out.csv("hoeffding.csv", &csv)?;
            let worst_r = cases.iter().fold(0.0_f64, |a, c| a.max(c.residual));
            let worst_d = cases.iter().fold(0.0_f64, |a, c| a.max(c.degeneracy));
            let checks = vec![
                Check::at_most("max decomposition residual", worst_r, RESIDUAL_TOLERANCE),
                Check::at_most("max degeneracy violation", worst_d, DEGENERACY_TOLERANCE),
            ];
            let pass = out.summary(cmd, checks, serde_json::json!({ "cases": cases.len() }))?;
            Ok((pass, Some(spec.seed)))
        }
        Command::CltCheck => {
            let exp = experiment(cli)?;
            let runs = run_clt(&exp)?;
            let mut csv = Csv::new(&["n", "t", "lambda", "statistic", "value"]);
            let mut checks = Vec::new();
            for r in &runs {
                for c in &r.cells {
                    let stats = [
                        ("mean", Some(c.mean)),
                        ("variance", Some(c.variance)),
                        ("scaled_variance", Some(c.scaled_variance)),
                        ("theory_variance", Some(c.theory_variance)),
                        ("ks_statistic", c.ks_statistic),
                        ("ks_p_value", c.ks_p_value),
                    ];
                    for (name, v) in stats {
                        if let Some(v) = v {
                            csv.push(vec![
                                r.n.to_string(),
                                fmt9(c.t),
                                fmt9(c.lambda),
                                name.into(),
                                fmt9(v),
                            ]);
                        }
                    }
                    let cell = format!("n={} t={} lambda={}", r.n, c.t, c.lambda);
                    if c.theory_variance > 0.0 {
                        let rel = (c.variance - c.theory_variance).abs() / c.theory_variance;
                        checks.push(Check::at_most(
                            format!("{cell}: relative variance error"),
                            rel,
                            0.15,
                        ));
                    }
                    if let Some(p) = c.ks_p_value {
                        checks.push(Check::at_least(format!("{cell}: KS p-value"), p, 0.01));
                    }
                    checks.push(Check::holds(
                        format!("{cell}: mean within 3 sd/sqrt(R) of 0"),
                        c.centering_ok,
                    ));
                }
                for s in std::iter::once(&r.discrepancy).chain(&r.norms) {
                    csv.push(vec![
                        r.n.to_string(),
                        String::new(),
                        String::new(),
                        format!("median_discrepancy_p{}", s.p),
                        fmt9(s.median),
                    ]);
                }
            }
            out.csv("clt.csv", &csv)?;
            let pass = out.summary(cmd, checks, &runs)?;
            Ok((pass, Some(exp.config.seed)))
        }
        Command::UniformCheck => {
            let exp = experiment(cli)?;
            let res = run_uniform_bandwidth(&exp)?;
            let mut csv = Csv::new(&["n", "h_n", "statistic", "value"]);
            for row in &res.rows {
                let (n, h) = (row.n.to_string(), fmt9(row.h_n));
                csv.push(vec![
                    n.clone(),
                    h.clone(),
                    "median_D_n".into(),
                    fmt9(row.median_discrepancy),
                ]);
                for (p, v) in &row.median_norms {
                    csv.push(vec![n.clone(), h.clone(), format!("median_L{p}"), fmt9(*v)]);
                }
                csv.push(vec![
                    n,
                    h,
                    "lambda_variance_spread".into(),
                    fmt9(row.lambda_spread),
                ]);
            }
            out.csv("uniform.csv", &csv)?;
            let mut checks = Vec::new();
            if res.rows.len() >= 2 {
                checks.push(Check::at_most(
                    "median D_n at largest n over smallest n",
                    res.ratio,
                    0.5,
                ));
                checks.push(Check::holds(
                    "median D_n decreases along the ladder",
                    res.decreasing,
                ));
            }
            let summary = serde_json::json!({ "rows": res.rows, "ratio": res.ratio, "decreasing": res.decreasing });
            let pass = out.summary(cmd, checks, summary)?;
            Ok((pass, Some(exp.config.seed)))
        }
        Command::DecayCheck => {
            let exp = experiment(cli)?;
            let res = run_degenerate_decay(&exp)?;
            let mut csv = Csv::new(&[
                "n",
                "h_n",
                "mean_max_term",
                "median_max_term",
                "standard_error",
            ]);
            for r in &res.rows {
                csv.push(vec![
                    r.n.to_string(),
                    fmt9(r.h_n),
                    fmt9(r.mean_max_term),
                    fmt9(r.median_max_term),
                    fmt9(r.standard_error),
                ]);
            }
            out.csv("decay.csv", &csv)?;
            let mut checks = Vec::new();
            if res.rows.len() >= 2 {
                checks.push(Check::at_most(
                    "fitted log-log slope",
                    res.slope,
                    0.9 * res.predicted_slope,
                ));
                checks.push(Check::holds(
                    "medians decrease along the ladder",
                    res.monotone,
                ));
            }
            let pass = out.summary(cmd, checks, &res)?;
            Ok((pass, Some(exp.config.seed)))
        }
        Command::BiasRate => {
            let exp = experiment(cli)?;
            let res = run_bias_rate(&exp)?;
            let mut fit = Csv::new(&["h", "bias"]);
            for (h, b) in res.fit.h.iter().zip(&res.fit.bias) {
                fit.push(vec![fmt9(*h), fmt9(*b)]);
            }
            out.csv("bias_fit.csv", &fit)?;
            let mut mc = Csv::new(&[
                "n",
                "h_n",
                "bias",
                "standard_error",
                "root_n_bias",
                "root_n_standard_error",
                "n_h_2k",
            ]);
            for r in &res.stochastic {
                mc.push(vec![
                    r.n.to_string(),
                    fmt9(r.h_n),
                    fmt9(r.bias),
                    fmt9(r.standard_error),
                    fmt9(r.root_n_bias),
                    fmt9(r.root_n_standard_error),
                    fmt9(r.n_h_2k),
                ]);
            }
            out.csv("bias_stochastic.csv", &mc)?;
            let k = res.kernel_order as f64;
            let checks = vec![Check::at_most(
                format!("|slope/{k} - 1| for an order-{k} kernel"),
                (res.fit.slope / k - 1.0).abs(),
                0.05,
            )];
            let pass = out.summary(cmd, checks, &res)?;
            Ok((pass, Some(exp.config.seed)))
        }
        Command::Sigma => {
            let cfg: SigmaConfig = read_json(&cli.config)?;
            let law: BaseLaw = cfg
                .base
                .parse()
                .map_err(|e| anyhow!("invalid configuration field `base`: {e}"))?;
            let s = theorem7_sigma(&law, cfg.dim)?;
            let mut csv = Csv::new(&["base", "dim", "sigma2", "int_f2", "int_f3"]);
            csv.push(vec![
                cfg.base.clone(),
                cfg.dim.to_string(),
                fmt9(s.sigma2),
                fmt9(s.int_f2),
                fmt9(s.int_f3),
            ]);
            out.csv("sigma.csv", &csv)?;
            let pass = out.summary(cmd, Vec::new(), s)?;
            Ok((pass, None))
        }
        Command::Bench => {
            let exp = experiment(cli)?;
            let rows = bench(&exp)?;
            let mut csv = Csv::new(&["n", "t_naive", "t_fast", "max_abs_diff"]);
            for r in &rows {
                if r.skipped {
                    csv.push(vec![
                        r.n.to_string(),
                        "skipped".into(),
                        "skipped".into(),
                        String::new(),
                    ]);
                } else {
                    csv.push(vec![
                        r.n.to_string(),
                        opt9(r.t_naive),
                        opt9(r.t_fast),
                        opt9(r.max_abs_diff),
                    ]);
                }
            }
            out.csv("bench.csv", &csv)?;
            let checks = rows
                .iter()
                .filter(|r| !r.skipped)
                .map(|r| {
                    Check::at_most(
                        format!("n={}: max |fast - naive|", r.n),
                        r.max_abs_diff.unwrap_or(f64::INFINITY),
                        localu::harness::BENCH_TOLERANCE,
                    )
                })
                .collect();
            let pass = out.summary(cmd, checks, &rows)?;
            Ok((pass, Some(exp.config.seed)))
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut out = Outputs::new(&cli.out)?;
    let (pass, seed) = dispatch(cli, &mut out)?;
    out.finish(
        cli.command.name(),
        &cli.config,
        seed,
        start.elapsed().as_secs_f64(),
    )?;
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!(
                "{}: at least one check failed; see {}",
                cli.command.name(),
                cli.out.join("summary.json").display()
            );
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
