use std::time::Instant;

use serde::Serialize;

use super::Experiment;
use crate::error::{Error, Result};
use crate::estimator::{evaluate_grid, route, EvalPath, Route};
use crate::models::sample;

/// Largest accepted `|fast − naive|` over the grid.
pub const BENCH_TOLERANCE: f64 = 1e-3;

/// Ladder entries below this size are reported but not timed.
const MIN_TIMED_N: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    /// Fastest of the timing repeats, in seconds.
    pub t_naive: Option<f64>,
    pub t_fast: Option<f64>,
    pub max_abs_diff: Option<f64>,
    pub within_tolerance: bool,
    pub skipped: bool,
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let v = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Times the naive enumeration against the fast route on one sample per ladder entry.
pub fn bench(exp: &Experiment) -> Result<Vec<BenchRow>> {
    let (model, kernel, cfg) = (&exp.model, &exp.kernel, &exp.config);
    let t_pts = exp.t_points();
    let fast = route(model, kernel, &t_pts, EvalPath::Fast);
    if fast == Route::Naive {
        return Err(Error::UnsupportedFastPath(format!(
            "no fast route for `{model}` with kernel `{}`",
            kernel.name()
        )));
    }
    let cells = t_pts.len() * cfg.lambda_grid.len();
    let lmax = cfg.lambda_grid.iter().cloned().fold(0.0, f64::max);
    let cost: f64 = cfg
        .n
        .iter()
        .map(|n| {
            let lh = lmax * exp.h_n(*n);
            cfg.repeats as f64
                * (Route::Naive.cost(*n, model.m(), cells, kernel, lh)
                    + fast.cost(*n, model.m(), cells, kernel, lh))
        })
        .sum();
    exp.check_budget(cost)?;

    cfg.n
        .iter()
        .map(|&n| {
            if n < MIN_TIMED_N {
                return Ok(BenchRow {
                    n,
                    t_naive: None,
                    t_fast: None,
                    max_abs_diff: None,
                    within_tolerance: true,
                    skipped: true,
                });
            }
            let s = sample(model, n, cfg.seed)?;
            let lhs: Vec<f64> = cfg.lambda_grid.iter().map(|l| l * exp.h_n(n)).collect();
            let (t_naive, slow) = best_of(cfg.repeats, || {
                evaluate_grid(&s, model, kernel, &t_pts, &lhs, EvalPath::Naive)
            })?;
            let (t_fast, quick) = best_of(cfg.repeats, || {
                evaluate_grid(&s, model, kernel, &t_pts, &lhs, EvalPath::Fast)
            })?;
            let diff = slow
                .iter()
                .flatten()
                .zip(quick.iter().flatten())
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            Ok(BenchRow {
                n,
                t_naive: Some(t_naive),
                t_fast: Some(t_fast),
                max_abs_diff: Some(diff),
                within_tolerance: diff <= BENCH_TOLERANCE,
                skipped: false,
            })
        })
        .collect()
}
