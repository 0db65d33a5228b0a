use std::time::Instant;

use serde::Serialize;

use super::Experiment;
use crate::error::{Error, Result};
use crate::estimator::{evaluate_grid, mean_term, route};
use crate::hoeffding::{KernelFn, Projection, SymmetrizedKernel};
use crate::models::sample_replication;
use crate::numeric::log_log_slope;
use crate::par::{try_map_indexed, Schedule};
use crate::stats::{mean, median, std_dev};

/// Rough number of integrand evaluations behind one conditional projection.
const PROJECTION_COST: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub h_n: f64,
    /// Monte Carlo mean of `max_t |√n·U_n^{(2)}(π₂K̄_{h_n})|`.
    pub mean_max_term: f64,
    pub median_max_term: f64,
    pub standard_error: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayResult {
    pub rows: Vec<DecayRow>,
    /// Log-log slope of the mean term against `n`.
    pub slope: f64,
    /// `−(1 − γ)/2`, the order of `√n / (n·h_n^{1/2})`.
    pub predicted_slope: f64,
    /// Medians strictly decrease along the ladder.
    pub monotone: bool,
}

/// Size of the second-order Hoeffding term along the ladder, for `m = 2`.
pub fn run_degenerate_decay(exp: &Experiment) -> Result<DecayResult> {
    let (model, kernel, cfg) = (&exp.model, &exp.kernel, &exp.config);
    if model.m() != 2 || model.sample_dim() != 1 {
        return Err(Error::UnsupportedModel(format!(
            "the degenerate-term experiment needs m = 2 and scalar observations, got `{model}`"
        )));
    }
    let t_pts = exp.t_points();
    let per_rep: f64 = cfg
        .n
        .iter()
        .map(|n| {
            let r = route(model, kernel, &t_pts, cfg.path);
            r.cost(*n, 2, t_pts.len(), kernel, exp.h_n(*n))
                + PROJECTION_COST * (*n * t_pts.len()) as f64
        })
        .sum();
    exp.check_budget(per_rep * cfg.replications as f64)?;

    let mut rows = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let start = Instant::now();
        let h = exp.h_n(n);
        let kbar = SymmetrizedKernel::new(kernel.clone(), h, model.clone())?;
        let overall = cfg
            .t_grid
            .iter()
            .map(|t| {
                if model.has_analytic() {
                    mean_term(model, kernel, &[*t], h)
                } else {
                    let at = kbar.at(*t);
                    Projection::new(model.base(), &at as &dyn KernelFn).partial(&[])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let root_n = (n as f64).sqrt();
        let terms = try_map_indexed(Schedule::default(), cfg.replications, |r| {
            let sample = sample_replication(model, n, cfg.seed, r as u64)?;
            let u = evaluate_grid(&sample, model, kernel, &t_pts, &[h], cfg.path)?;
            let mut worst: f64 = 0.0;
            for (j, t) in cfg.t_grid.iter().enumerate() {
                let at = kbar.at(*t);
                let projection = Projection::new(model.base(), &at as &dyn KernelFn);
                let mut lin = 0.0;
                for x in sample.values() {
                    lin += projection.partial(&[*x])?;
                }
                let term = u[0][j] - 2.0 * lin / n as f64 + overall[j];
                worst = worst.max((root_n * term).abs());
            }
            Ok::<_, Error>(worst)
        })?;
        rows.push(DecayRow {
            n,
            h_n: h,
            mean_max_term: mean(&terms),
            median_max_term: median(&terms),
            standard_error: std_dev(&terms) / (terms.len() as f64).sqrt(),
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_max_term).collect();
    let slope = if rows.len() >= 2 {
        log_log_slope(&ns, &ys).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(DecayResult {
        monotone: rows
            .windows(2)
            .all(|w| w[1].median_max_term < w[0].median_max_term),
        rows,
        slope,
        predicted_slope: -(1.0 - cfg.gamma) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    #[test]
    fn discrete_model_runs_and_is_reproducible() {
        let mut cfg = ExperimentConfig::new(
            "discrete(0,1,3;0.2,0.5,0.3):sum:m=2",
            "uniform",
            vec![40, 80],
        );
        cfg.replications = 4;
        cfg.c = 2.0;
        cfg.t_grid = vec![1.0, 4.0];
        let exp = Experiment::new(cfg).unwrap();
        let a = run_degenerate_decay(&exp).unwrap();
        let b = run_degenerate_decay(&exp).unwrap();
        assert_eq!(a.rows.len(), 2);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.mean_max_term, y.mean_max_term);
            assert!(x.mean_max_term.is_finite());
        }
    }

    #[test]
    fn rejects_higher_order_models() {
        let cfg = ExperimentConfig::new("normal01:sum:m=3", "gaussian", vec![50]);
        let exp = Experiment::new(cfg).unwrap();
        assert!(matches!(
            run_degenerate_decay(&exp),
            Err(Error::UnsupportedModel(_))
        ));
    }
}
