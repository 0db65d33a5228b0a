//! The local U-statistic
//!
//! `U_n(t, λ) = ((n−m)!/n!) Σ_{(i_1,…,i_m)} K_{λh}(t − g(X_{i_1}, …, X_{i_m}))`
//!
//! summed over ordered tuples of distinct indices, and its centred, `√n`-scaled
//! version. [`u_naive`] is the exact O(n^m) reference. The other paths are
//! faster and are validated against it:
//!
//! * [`u_fast_distance`]: pair counts for indicator kernels at `t = 0`
//!   (sorting in one dimension, spatial cells in two or three). Exact.
//! * [`SortedLinearPairs`]: pair counts for indicator kernels and linear `g`
//!   with `m = 2`, at any `t`. Exact.
//! * [`PairMeasure`] / [`u_fast_sum`]: binned FFT convolution for continuous
//!   kernels and linear `g`. Exact up to binning for `m = 2`; for `m > 2` the
//!   diagonal terms are not removed.

mod distance;
mod fft;
mod integral_f2;
mod mean;
mod naive;
mod sorted;

pub use distance::{u_fast_distance, PairCount};
pub use fft::{u_fast_sum, PairMeasure, DEFAULT_STEP};
pub use integral_f2::estimate_integral_f2;
pub use mean::{mean_term, u_process};
pub use naive::{u_naive, u_naive_with};
pub use sorted::SortedLinearPairs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{GSpec, Sample, SampleModel};
use crate::numeric::falling_factorial;
use crate::par::{try_map_indexed, Schedule};

/// Which evaluation routes [`evaluate_grid`] may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPath {
    /// Always the O(n^m) enumeration.
    Naive,
    /// Exact counting paths where they apply, otherwise naive.
    #[default]
    Exact,
    /// Like `Exact`, and the binned FFT path for continuous kernels.
    Fast,
}

/// `U_n(t, λ)` (and its centred version) over a `(t, λ)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSurface {
    pub t_grid: Vec<Vec<f64>>,
    pub lambda_grid: Vec<f64>,
    /// `values[l][j] = U_n(t_j, λ_l)`.
    pub values: Vec<Vec<f64>>,
    /// `√n (U_n − (K_{λh} * f_g)(t))`, present when `f_g` is known.
    pub centered: Option<Vec<Vec<f64>>>,
    pub n: usize,
    pub h_n: f64,
    pub kernel: String,
    pub model: String,
}

pub(crate) fn check_inputs(sample: &Sample, model: &SampleModel, kernel: &Kernel) -> Result<()> {
    if sample.dim() != model.sample_dim() {
        return Err(Error::Domain(format!(
            "sample has dimension {} but model `{model}` expects {}",
            sample.dim(),
            model.sample_dim()
        )));
    }
    if kernel.dim() != model.out_dim() {
        return Err(Error::Domain(format!(
            "kernel `{}` lives on R^{} but g takes values in R^{}",
            kernel.name(),
            kernel.dim(),
            model.out_dim()
        )));
    }
    if sample.n() < model.m() {
        return Err(Error::InsufficientSample {
            needed: model.m(),
            got: sample.n(),
        });
    }
    Ok(())
}

pub(crate) fn check_bandwidth(lh: f64) -> Result<()> {
    if lh > 0.0 && lh.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "bandwidth must be positive, got {lh}"
        )))
    }
}

/// Converts an integer hit count of an indicator kernel into `U_n`. Every
/// counting path and the naive sum go through this one function.
pub(crate) fn finalize_count(kernel: &Kernel, count: u64, lh: f64, n: usize, m: usize) -> f64 {
    let height = kernel.indicator_level().unwrap_or(0.0) / lh;
    count as f64 * height / falling_factorial(n, m)
}

/// The algorithm [`evaluate_grid`] uses for a given model, kernel and grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Naive,
    SortedCounts,
    PairCounts,
    Fft,
}

impl Route {
    /// Rough number of kernel evaluations (or predicate checks) for one
    /// sample of size `n` over `cells` grid cells with largest bandwidth `lh_max`.
    pub fn cost(&self, n: usize, m: usize, cells: usize, kernel: &Kernel, lh_max: f64) -> f64 {
        let nf = n as f64;
        match self {
            Route::Naive => falling_factorial(n, m) * cells as f64,
            Route::SortedCounts => 2.0 * nf * nf.max(2.0).log2() * cells as f64,
            Route::PairCounts => nf * nf.max(2.0).log2() + nf * cells as f64,
            Route::Fft => {
                let window = 2.0 * kernel.axis_radius() * lh_max / DEFAULT_STEP;
                nf * m as f64 + cells as f64 * window
            }
        }
    }
}

/// Chooses the evaluation route. Exact counting is used for indicator
/// kernels whenever it applies; the binned FFT path only under [`EvalPath::Fast`].
pub fn route(model: &SampleModel, kernel: &Kernel, t_grid: &[Vec<f64>], path: EvalPath) -> Route {
    let indicator = kernel.indicator_level().is_some();
    let scalar = model.sample_dim() == 1 && model.out_dim() == 1;
    let all_zero = t_grid.iter().all(|t| t.iter().all(|v| *v == 0.0));
    if path != EvalPath::Naive && indicator {
        if scalar && model.m() == 2 && model.is_linear() {
            return Route::SortedCounts;
        }
        if all_zero
            && matches!(model.g(), GSpec::Distance | GSpec::Difference)
            && model.sample_dim() <= 3
        {
            return Route::PairCounts;
        }
    }
    if path == EvalPath::Fast && !indicator && kernel.is_continuous() && scalar && model.is_linear()
    {
        return Route::Fft;
    }
    Route::Naive
}

/// `U_n(t, λh)` for each `lh` (outer) and `t` (inner).
pub fn evaluate_grid(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t_grid: &[Vec<f64>],
    lh_values: &[f64],
    path: EvalPath,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(sample, model, kernel)?;
    for lh in lh_values {
        check_bandwidth(*lh)?;
    }
    for t in t_grid {
        if t.len() != model.out_dim() {
            return Err(Error::Domain(format!(
                "grid point has dimension {}, expected {}",
                t.len(),
                model.out_dim()
            )));
        }
    }
    match route(model, kernel, t_grid, path) {
        Route::SortedCounts => {
            let pairs = SortedLinearPairs::new(sample, model, kernel)?;
            Ok(lh_values
                .iter()
                .map(|lh| t_grid.iter().map(|t| pairs.value(t[0], *lh)).collect())
                .collect())
        }
        Route::PairCounts => {
            let counts = u_fast_distance(sample, model, kernel, lh_values)?;
            Ok(counts.iter().map(|c| vec![c.value; t_grid.len()]).collect())
        }
        Route::Fft => {
            let measure = PairMeasure::new(sample, model, DEFAULT_STEP)?;
            Ok(lh_values
                .iter()
                .map(|lh| {
                    t_grid
                        .iter()
                        .map(|t| measure.evaluate(kernel, t[0], *lh))
                        .collect()
                })
                .collect())
        }
        Route::Naive => lh_values
            .iter()
            .map(|lh| {
                t_grid
                    .iter()
                    .map(|t| u_naive_with(sample, model, kernel, t, *lh, Schedule::default()))
                    .collect()
            })
            .collect(),
    }
}

/// Evaluates `U_n` over the `(t, λ)` grid with bandwidth `λ·h_n`, plus the
/// centred process when `f_g` is available.
pub fn surface(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t_grid: &[Vec<f64>],
    lambda_grid: &[f64],
    h_n: f64,
    path: EvalPath,
) -> Result<EstimateSurface> {
    check_bandwidth(h_n)?;
    if t_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::config("grid", "t and λ grids must be nonempty"));
    }
    let lhs: Vec<f64> = lambda_grid.iter().map(|l| l * h_n).collect();
    let values = evaluate_grid(sample, model, kernel, t_grid, &lhs, path)?;
    let centered = if model.has_analytic() {
        let root_n = (sample.n() as f64).sqrt();
        let cells = lhs.len() * t_grid.len();
        let means = try_map_indexed(Schedule::default(), cells, |c| {
            let (l, j) = (c / t_grid.len(), c % t_grid.len());
            mean_term(model, kernel, &t_grid[j], lhs[l])
        });
        match means {
            Ok(means) => Some(
                values
                    .iter()
                    .enumerate()
                    .map(|(l, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, u)| root_n * (u - means[l * t_grid.len() + j]))
                            .collect()
                    })
                    .collect(),
            ),
            Err(Error::UnsupportedModel(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(EstimateSurface {
        t_grid: t_grid.to_vec(),
        lambda_grid: lambda_grid.to_vec(),
        values,
        centered,
        n: sample.n(),
        h_n,
        kernel: kernel.name().to_string(),
        model: model.to_string(),
    })
}
