use serde::Serialize;

use super::Experiment;
use crate::error::{Error, Result};
use crate::estimator::{evaluate_grid, route};
use crate::models::sample_replication;
use crate::par::{try_map_indexed, Schedule};
use crate::stats::{mean, std_dev};
use crate::theory::{bias_slope, BiasFit};

const DEFAULT_H_GRID: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// Monte Carlo bias of `U_n(t)` at the ladder bandwidth `h_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticBiasRow {
    pub n: usize,
    pub h_n: f64,
    /// Mean over replications of `U_n(t) − f_g(t)`.
    pub bias: f64,
    pub standard_error: f64,
    /// `√n · bias`, which should vanish when `n·h_n^{2k} → 0`.
    pub root_n_bias: f64,
    pub root_n_standard_error: f64,
    /// `n·h_n^{2k}` for a kernel of order `k`.
    pub n_h_2k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRateResult {
    pub t: f64,
    pub kernel_order: u32,
    pub fit: BiasFit,
    pub stochastic: Vec<StochasticBiasRow>,
}

/// Deterministic bias slope over `h_grid` and the simulated bias along the ladder.
pub fn run_bias_rate(exp: &Experiment) -> Result<BiasRateResult> {
    let (model, kernel, cfg) = (&exp.model, &exp.kernel, &exp.config);
    let t = cfg.t_grid[0];
    let hs = cfg
        .h_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_H_GRID.to_vec());
    let fit = bias_slope(model, kernel, t, &hs)?;

    let t_pts = vec![vec![t]];
    let path = route(model, kernel, &t_pts, cfg.path);
    let cost: f64 = cfg
        .n
        .iter()
        .map(|n| cfg.replications as f64 * path.cost(*n, model.m(), 1, kernel, exp.h_n(*n)))
        .sum();
    exp.check_budget(cost)?;

    let target = model.fg(&[t])?;
    let order = kernel.order();
    let mut stochastic = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let h = exp.h_n(n);
        let errors = try_map_indexed(Schedule::default(), cfg.replications, |r| {
            let sample = sample_replication(model, n, cfg.seed, r as u64)?;
            let u = evaluate_grid(&sample, model, kernel, &t_pts, &[h], cfg.path)?;
            Ok::<_, Error>(u[0][0] - target)
        })?;
        let bias = mean(&errors);
        let se = std_dev(&errors) / (errors.len() as f64).sqrt();
        let root_n = (n as f64).sqrt();
        stochastic.push(StochasticBiasRow {
            n,
            h_n: h,
            bias,
            standard_error: se,
            root_n_bias: root_n * bias,
            root_n_standard_error: root_n * se,
            n_h_2k: n as f64 * h.powi(2 * order as i32),
        });
    }
    Ok(BiasRateResult {
        t,
        kernel_order: order,
        fit,
        stochastic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    #[test]
    fn deterministic_and_stochastic_parts() {
        let mut cfg = ExperimentConfig::new("normal01:sum:m=2", "gaussian", vec![100, 400]);
        cfg.replications = 20;
        let res = run_bias_rate(&Experiment::new(cfg).unwrap()).unwrap();
        assert!((1.9..=2.1).contains(&res.fit.slope), "{}", res.fit.slope);
        assert_eq!(res.kernel_order, 2);
        assert_eq!(res.stochastic.len(), 2);
        for row in &res.stochastic {
            assert!(row.standard_error > 0.0);
            assert!(row.bias.abs() < 0.1);
        }
    }
}
