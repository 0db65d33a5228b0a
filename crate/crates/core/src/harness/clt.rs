use std::time::Instant;

use serde::Serialize;

use super::{grid_weights, Experiment, PNorm};
use crate::error::{Error, Result};
use crate::estimator::{evaluate_grid, mean_term, route, Route};
use crate::models::sample_replication;
use crate::par::{try_map_indexed, Schedule};
use crate::stats::{ks_normal, mean, median, variance};
use crate::theory::limit_variance;

/// Replication statistics of `u_{n,λ}(t)` for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub t: f64,
    pub lambda: f64,
    pub mean: f64,
    pub variance: f64,
    /// `λ²·variance`, the variance of `λ·u_{n,λ}(t)`.
    pub scaled_variance: f64,
    pub theory_variance: f64,
    /// KS test against `N(0, theory_variance)`; absent when the limit is degenerate.
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    /// `|mean| ≤ 3·sd/√R`.
    pub centering_ok: bool,
}

/// One grid norm of `u_{n,λ} − v̄_n`, maximised over λ, per replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSummary {
    pub p: PNorm,
    pub per_replication: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltResult {
    pub n: usize,
    pub h_n: f64,
    pub replications: usize,
    pub route: Route,
    /// Cells in λ-major order.
    pub cells: Vec<CellStats>,
    /// `D_n = max_{λ, t} |u_{n,λ}(t) − v̄_n(t)|` per replication.
    pub discrepancy: NormSummary,
    /// One entry per configured norm.
    pub norms: Vec<NormSummary>,
    /// Largest `(max − min)/min` of the empirical variances across λ at a fixed `t`.
    pub lambda_spread: f64,
    pub runtime_secs: f64,
}

impl CltResult {
    pub fn cell(&self, t: f64, lambda: f64) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.t == t && c.lambda == lambda)
    }
}

struct Replication {
    /// `u[l][j] = u_{n,λ_l}(t_j)`.
    u: Vec<Vec<f64>>,
    vbar: Vec<f64>,
}

/// Runs [`run_clt_at`] at every sample size of the ladder.
pub fn run_clt(exp: &Experiment) -> Result<Vec<CltResult>> {
    exp.check_budget(exp.grid_cost())?;
    exp.config.n.iter().map(|n| run_clt_at(exp, *n)).collect()
}

/// Pointwise CLT experiment at sample size `n`.
pub fn run_clt_at(exp: &Experiment, n: usize) -> Result<CltResult> {
    let start = Instant::now();
    let (model, kernel, cfg) = (&exp.model, &exp.kernel, &exp.config);
    if !model.has_analytic() {
        return Err(Error::UnsupportedModel(format!(
            "`{model}` has no closed-form conditional density"
        )));
    }
    let h = exp.h_n(n);
    let t_pts = exp.t_points();
    let lhs: Vec<f64> = cfg.lambda_grid.iter().map(|l| l * h).collect();
    let means = lhs
        .iter()
        .map(|lh| {
            t_pts
                .iter()
                .map(|t| mean_term(model, kernel, t, *lh))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let theory = t_pts
        .iter()
        .map(|t| limit_variance(model, t))
        .collect::<Result<Vec<_>>>()?;
    let fg = t_pts
        .iter()
        .map(|t| model.fg(t))
        .collect::<Result<Vec<_>>>()?;
    let m = model.m() as f64;
    let root_n = (n as f64).sqrt();

    let reps = try_map_indexed(Schedule::default(), cfg.replications, |r| {
        let sample = sample_replication(model, n, cfg.seed, r as u64)?;
        let raw = evaluate_grid(&sample, model, kernel, &t_pts, &lhs, cfg.path)?;
        let u = raw
            .iter()
            .zip(&means)
            .map(|(row, mu)| row.iter().zip(mu).map(|(v, c)| root_n * (v - c)).collect())
            .collect();
        let mut vbar = Vec::with_capacity(t_pts.len());
        for (t, f) in t_pts.iter().zip(&fg) {
            let mut acc = 0.0;
            for x in sample.points() {
                acc += model.fbar(t, x)? - m * f;
            }
            vbar.push(acc / root_n);
        }
        Ok::<_, Error>(Replication { u, vbar })
    })?;

    let big_r = cfg.replications;
    let mut cells = Vec::new();
    for (l, lambda) in cfg.lambda_grid.iter().enumerate() {
        for (j, t) in cfg.t_grid.iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|rep| rep.u[l][j]).collect();
            let mu = mean(&values);
            let var = variance(&values);
            let (ks_statistic, ks_p_value) = if theory[j] > 0.0 {
                let (d, p) = ks_normal(&values, 0.0, theory[j])?;
                (Some(d), Some(p))
            } else {
                (None, None)
            };
            cells.push(CellStats {
                t: *t,
                lambda: *lambda,
                mean: mu,
                variance: var,
                scaled_variance: lambda * lambda * var,
                theory_variance: theory[j],
                ks_statistic,
                ks_p_value,
                centering_ok: mu.abs() <= 3.0 * var.sqrt() / (big_r as f64).sqrt(),
            });
        }
    }

    let weights = grid_weights(&cfg.t_grid);
    let summarise = |p: PNorm| {
        let per_replication: Vec<f64> = reps
            .iter()
            .map(|rep| {
                rep.u
                    .iter()
                    .map(|row| {
                        let diff: Vec<f64> =
                            row.iter().zip(&rep.vbar).map(|(a, b)| a - b).collect();
                        p.apply(&diff, &weights)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        NormSummary {
            p,
            median: median(&per_replication),
            per_replication,
        }
    };

    let k = cfg.t_grid.len();
    let lambda_spread = (0..k)
        .map(|j| {
            let vars: Vec<f64> = (0..cfg.lambda_grid.len())
                .map(|l| cells[l * k + j].variance)
                .collect();
            let lo = vars.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vars.iter().cloned().fold(0.0, f64::max);
            if hi == lo {
                0.0
            } else {
                (hi - lo) / lo
            }
        })
        .fold(0.0, f64::max);

    Ok(CltResult {
        n,
        h_n: h,
        replications: big_r,
        route: route(model, kernel, &t_pts, cfg.path),
        cells,
        discrepancy: summarise(PNorm::Sup),
        norms: cfg.p_norms.iter().map(|p| summarise(*p)).collect(),
        lambda_spread,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    fn small() -> Experiment {
        let mut cfg = ExperimentConfig::new("normal01:sum:m=2", "gaussian", vec![60]);
        cfg.replications = 2;
        cfg.t_grid = vec![-0.5, 0.0, 0.5];
        cfg.lambda_grid = vec![0.5, 1.0];
        cfg.p_norms = vec![PNorm::L1, PNorm::L2, PNorm::Sup];
        Experiment::new(cfg).unwrap()
    }

    #[test]
    fn smoke_run_populates_every_field() {
        let res = run_clt(&small()).unwrap();
        assert_eq!(res.len(), 1);
        let r = &res[0];
        assert_eq!(r.cells.len(), 6);
        for c in &r.cells {
            assert!(c.variance.is_finite() && c.variance >= 0.0);
            assert!(c.theory_variance > 0.0);
            let p = c.ks_p_value.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert_eq!(r.discrepancy.per_replication.len(), 2);
        assert_eq!(r.norms.len(), 3);
        assert!(r.lambda_spread.is_finite());
    }

    #[test]
    fn single_cell_discrepancy_is_pointwise() {
        let mut cfg = small().config;
        cfg.t_grid = vec![0.25];
        cfg.lambda_grid = vec![1.0];
        let exp = Experiment::new(cfg).unwrap();
        let r = run_clt_at(&exp, 60).unwrap();
        let sup = &r.discrepancy.per_replication;
        let l1 = &r.norms[0].per_replication;
        // With one grid point every norm reduces to the absolute difference.
        for (a, b) in sup.iter().zip(l1) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reproducible_across_schedules() {
        let exp = small();
        let a = run_clt_at(&exp, 60).unwrap();
        #[cfg(feature = "parallel")]
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_clt_at(&exp, 60))
            .unwrap();
        #[cfg(not(feature = "parallel"))]
        let b = run_clt_at(&exp, 60).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.norms, b.norms);
    }

    #[test]
    fn model_without_closed_form_is_rejected() {
        let mut cfg = small().config;
        cfg.model = "discrete(0,1;0.5,0.5):sum:m=2".into();
        cfg.kernel = "uniform".into();
        let exp = Experiment::new(cfg).unwrap();
        assert!(matches!(run_clt(&exp), Err(Error::UnsupportedModel(_))));
    }
}
