use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{Sample, SampleModel};

use super::{check_bandwidth, check_inputs, finalize_count};

/// Exact pair counts for an indicator kernel and `g(x, y) = c₁x + c₂y` on
/// scalar data. For fixed `x_i` the hits form a contiguous run of the sorted
/// sample, located by two binary searches that use the naive predicate itself.
#[derive(Debug, Clone)]
pub struct SortedLinearPairs<'a> {
    model: &'a SampleModel,
    kernel: &'a Kernel,
    sorted: Vec<f64>,
    c2_positive: bool,
}

/// Position of `t − g` relative to the kernel support.
#[derive(PartialEq, Eq)]
enum Side {
    Above,
    Hit,
    Below,
}

impl<'a> SortedLinearPairs<'a> {
    pub fn new(sample: &Sample, model: &'a SampleModel, kernel: &'a Kernel) -> Result<Self> {
        if kernel.indicator_level().is_none() {
            return Err(Error::UnsupportedFastPath(format!(
                "sorted counting needs an indicator kernel, got `{}`",
                kernel.name()
            )));
        }
        if !(model.is_linear() && model.m() == 2 && model.sample_dim() == 1) {
            return Err(Error::UnsupportedFastPath(format!(
                "sorted counting needs scalar data and linear g with m = 2, model is `{model}`"
            )));
        }
        check_inputs(sample, model, kernel)?;
        let mut sorted = sample.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            model,
            kernel,
            sorted,
            c2_positive: model.coefficients()[1] > 0.0,
        })
    }

    fn side(&self, t: f64, lh: f64, xi: f64, xj: f64) -> Side {
        let u = t - self.model.g_pair(xi, xj);
        if self.kernel.indicator_hit(lh, &[u]) {
            Side::Hit
        } else if u > 0.0 {
            Side::Above
        } else {
            Side::Below
        }
    }

    /// Number of ordered pairs `i ≠ j` with `K_{lh}(t − g(X_i, X_j)) ≠ 0`.
    pub fn count(&self, t: f64, lh: f64) -> u64 {
        let v = &self.sorted;
        // With c₂ > 0, t − g decreases along the sorted sample.
        let (first, last) = if self.c2_positive {
            (Side::Above, Side::Below)
        } else {
            (Side::Below, Side::Above)
        };
        let mut total = 0u64;
        for &xi in v {
            let lo = v.partition_point(|&xj| self.side(t, lh, xi, xj) == first);
            let hi = v.partition_point(|&xj| self.side(t, lh, xi, xj) != last);
            let mut c = hi.saturating_sub(lo) as u64;
            if self.side(t, lh, xi, xi) == Side::Hit {
                c -= 1;
            }
            total += c;
        }
        total
    }

    /// `U_n(t, lh)`; bitwise equal to the naive sum.
    pub fn value(&self, t: f64, lh: f64) -> f64 {
        finalize_count(self.kernel, self.count(t, lh), lh, self.sorted.len(), 2)
    }

    /// Checked variant of [`SortedLinearPairs::value`].
    pub fn try_value(&self, t: f64, lh: f64) -> Result<f64> {
        check_bandwidth(lh)?;
        if !t.is_finite() {
            return Err(Error::Domain(format!("t must be finite, got {t}")));
        }
        Ok(self.value(t, lh))
    }
}
