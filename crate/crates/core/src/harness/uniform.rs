use std::cell::Cell;

use serde::Serialize;

use super::{run_clt, CltResult, Experiment, PNorm};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{Sample, SampleModel};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformRow {
    pub n: usize,
    pub h_n: f64,
    /// Median over replications of `D_n`.
    pub median_discrepancy: f64,
    /// Median grid norm per configured `p`.
    pub median_norms: Vec<(PNorm, f64)>,
    pub lambda_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformResult {
    pub rows: Vec<UniformRow>,
    /// Median `D_n` at the largest `n` over the median at the smallest.
    pub ratio: f64,
    /// Whether the median discrepancy decreases at every step of the ladder.
    pub decreasing: bool,
    pub runs: Vec<CltResult>,
}

/// Median of `sup_λ max_t |u_{n,λ}(t) − v̄_n(t)|` along the ladder.
pub fn run_uniform_bandwidth(exp: &Experiment) -> Result<UniformResult> {
    let runs = run_clt(exp)?;
    let rows: Vec<UniformRow> = runs
        .iter()
        .map(|r| UniformRow {
            n: r.n,
            h_n: r.h_n,
            median_discrepancy: r.discrepancy.median,
            median_norms: r.norms.iter().map(|s| (s.p, s.median)).collect(),
            lambda_spread: r.lambda_spread,
        })
        .collect();
    let first = rows[0].median_discrepancy;
    let last = rows[rows.len() - 1].median_discrepancy;
    let decreasing = rows
        .windows(2)
        .all(|w| w[1].median_discrepancy < w[0].median_discrepancy);
    Ok(UniformResult {
        ratio: last / first,
        decreasing,
        rows,
        runs,
    })
}

/// Pieces of the deterministic inequality
/// `|v̄_n * K_lh − v̄_n|(t) ≤ w_δ(v̄_n)·‖K‖₁ + 2·sup|v̄_n|·∫_{|lh·v| > δ} |K(v)| dv`
/// evaluated on one sample. The modulus `w_δ` and the supremum are taken over a
/// grid of spacing `δ/8` covering every point the kernel window reaches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingBound {
    /// `max_t |(v̄_n * K_lh)(t) − v̄_n(t)|` over the supplied `t` values.
    pub discrepancy: f64,
    pub bound: f64,
    pub modulus: f64,
    pub sup_vbar: f64,
    pub kernel_l1: f64,
    pub tail_mass: f64,
}

pub fn smoothing_bound(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    lh: f64,
    t_grid: &[f64],
    delta: f64,
) -> Result<SmoothingBound> {
    if model.out_dim() != 1 || kernel.dim() != 1 {
        return Err(Error::Domain(
            "the smoothing bound is implemented for scalar g".into(),
        ));
    }
    if !(lh > 0.0 && delta > 0.0) || t_grid.is_empty() {
        return Err(Error::Domain(
            "need lh > 0, δ > 0 and a nonempty grid".into(),
        ));
    }
    let m = model.m() as f64;
    let root_n = (sample.n() as f64).sqrt();
    let vbar = |s: f64| -> Result<f64> {
        let centre = m * model.fg(&[s])?;
        let mut acc = 0.0;
        for x in sample.points() {
            acc += model.fbar(&[s], x)? - centre;
        }
        Ok(acc / root_n)
    };

    let r = kernel.support_radius().unwrap_or(kernel.axis_radius());
    let quad = Quadrature::new(1e-9);
    let failure = Cell::new(None);
    let mut discrepancy: f64 = 0.0;
    for t in t_grid {
        let smoothed = quad.integrate_with_breaks(
            |v| {
                let k = kernel.eval1(v);
                if k == 0.0 {
                    return 0.0;
                }
                match vbar(t - lh * v) {
                    Ok(y) => k * y,
                    Err(e) => {
                        failure.set(Some(e));
                        0.0
                    }
                }
            },
            -r,
            r,
            &kernel.kinks(),
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        discrepancy = discrepancy.max((smoothed - vbar(*t)?).abs());
    }

    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min) - r * lh - delta;
    let hi = t_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + r * lh + delta;
    let step = delta / 8.0;
    let count = ((hi - lo) / step).ceil() as usize + 1;
    let values = (0..count)
        .map(|i| vbar(lo + step * i as f64))
        .collect::<Result<Vec<_>>>()?;
    let sup_vbar = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut modulus: f64 = 0.0;
    for i in 0..count {
        for j in (i + 1)..count.min(i + 9) {
            modulus = modulus.max((values[j] - values[i]).abs());
        }
    }

    let kernel_l1 =
        quad.integrate_with_breaks(|v| kernel.eval1(v).abs(), -r, r, &kernel.kinks())?;
    let cut = delta / lh;
    let tail_mass = if cut >= r {
        0.0
    } else {
        2.0 * quad.integrate_with_breaks(|v| kernel.eval1(v).abs(), cut, r, &kernel.kinks())?
    };
    Ok(SmoothingBound {
        discrepancy,
        bound: modulus * kernel_l1 + 2.0 * sup_vbar * tail_mass,
        modulus,
        sup_vbar,
        kernel_l1,
        tail_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;
    use crate::models::sample;

    #[test]
    fn narrow_window_obeys_bound() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let s = sample(&model, 400, 17).unwrap();
        for (name, lh, delta) in [("uniform", 0.02, 0.01), ("gaussian", 0.02, 0.05)] {
            let k = Kernel::from_name(name, 1).unwrap();
            let b = smoothing_bound(&s, &model, &k, lh, &[-0.5, 0.0, 0.7], delta).unwrap();
            assert!(b.discrepancy <= b.bound, "{name}: {b:?}");
            assert!((b.kernel_l1 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ladder_rows_match_runs() {
        let mut cfg = ExperimentConfig::new("normal01:sum:m=2", "gaussian", vec![50, 100]);
        cfg.replications = 3;
        cfg.lambda_grid = vec![0.5, 2.0];
        let res = run_uniform_bandwidth(&Experiment::new(cfg).unwrap()).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert_eq!(
            res.rows[1].median_discrepancy,
            res.runs[1].discrepancy.median
        );
        assert!(res.ratio > 0.0);
    }
}
