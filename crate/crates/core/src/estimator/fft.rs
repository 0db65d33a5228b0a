use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{Sample, SampleModel};
use crate::numeric::{falling_factorial, fft_convolve};
use crate::par::{map_indexed, Schedule};

use super::{check_bandwidth, check_inputs};

/// Default grid spacing of the binned paths.
pub const DEFAULT_STEP: f64 = 1e-3;

/// The empirical measure of `g(X_{i_1}, …, X_{i_m})` over tuples, linearly
/// binned onto the grid `kΔ`.
///
/// Each scaled observation `c_j X_i` is split between its two neighbouring
/// nodes; the binned measures of the `m` summands are convolved by FFT. For
/// `m = 2` the binned diagonal `i₁ = i₂` is subtracted exactly, leaving the
/// binned off-diagonal pair measure. For `m > 2` the full product measure is
/// kept, so tuples with repeated indices are included with relative weight
/// `O(1/n)`.
#[derive(Debug, Clone)]
pub struct PairMeasure {
    step: f64,
    origin: i64,
    weights: Vec<f64>,
    norm: f64,
    m: usize,
}

fn split(v: f64, step: f64) -> (i64, f64) {
    let pos = v / step;
    let k = pos.floor();
    (k as i64, pos - k)
}

fn bin(values: impl Iterator<Item = f64> + Clone, step: f64) -> (i64, Vec<f64>) {
    let lo = values.clone().map(|v| split(v, step).0).min().unwrap_or(0);
    let hi = values.clone().map(|v| split(v, step).0).max().unwrap_or(0) + 1;
    let mut w = vec![0.0; (hi - lo + 1) as usize];
    for v in values {
        let (k, f) = split(v, step);
        let idx = (k - lo) as usize;
        w[idx] += 1.0 - f;
        w[idx + 1] += f;
    }
    (lo, w)
}

impl PairMeasure {
    pub fn new(sample: &Sample, model: &SampleModel, step: f64) -> Result<Self> {
        if !(model.is_linear() && model.sample_dim() == 1) {
            return Err(Error::UnsupportedFastPath(format!(
                "binned convolution needs scalar data and linear g, model is `{model}`"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!(
                "grid step must be positive, got {step}"
            )));
        }
        let n = sample.n();
        let m = model.m();
        if n < m {
            return Err(Error::InsufficientSample { needed: m, got: n });
        }
        let x = sample.values();
        let c = model.coefficients();
        let mut origin = 0i64;
        let mut weights = vec![1.0];
        for cj in c {
            let (lo, w) = bin(x.iter().map(|v| cj * v), step);
            weights = fft_convolve(&weights, &w);
            origin += lo;
        }
        let norm = if m == 2 {
            let (lo_a, _) = bin(x.iter().map(|v| c[0] * v), step);
            let (lo_b, _) = bin(x.iter().map(|v| c[1] * v), step);
            debug_assert_eq!(lo_a + lo_b, origin);
            for v in x {
                let (ka, fa) = split(c[0] * v, step);
                let (kb, fb) = split(c[1] * v, step);
                let base = ((ka - lo_a) + (kb - lo_b)) as usize;
                weights[base] -= (1.0 - fa) * (1.0 - fb);
                weights[base + 1] -= fa * (1.0 - fb) + (1.0 - fa) * fb;
                weights[base + 2] -= fa * fb;
            }
            falling_factorial(n, 2)
        } else {
            (n as f64).powi(m as i32)
        };
        Ok(Self {
            step,
            origin,
            weights,
            norm,
            m,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Binned `U_n(t, lh)` for a one-dimensional kernel.
    pub fn evaluate(&self, kernel: &Kernel, t: f64, lh: f64) -> f64 {
        let reach = kernel.axis_radius() * lh;
        let first = (((t - reach) / self.step).floor() as i64 - self.origin).max(0);
        let last = (((t + reach) / self.step).ceil() as i64 - self.origin)
            .min(self.weights.len() as i64 - 1);
        let mut acc = 0.0;
        let mut k = first;
        while k <= last {
            let w = self.weights[k as usize];
            if w != 0.0 {
                let node = (k + self.origin) as f64 * self.step;
                acc += w * kernel.scaled1(lh, t - node);
            }
            k += 1;
        }
        acc / self.norm
    }
}

/// `U_n` on a uniform grid of `t` values by the binned FFT path.
pub fn u_fast_sum(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t_grid: &[f64],
    lh: f64,
    step: f64,
) -> Result<Vec<f64>> {
    check_inputs(sample, model, kernel)?;
    check_bandwidth(lh)?;
    if !kernel.is_continuous() {
        return Err(Error::UnsupportedFastPath(format!(
            "binned evaluation of the discontinuous kernel `{}` is not accurate; use the counting paths",
            kernel.name()
        )));
    }
    if t_grid.len() >= 3 {
        let d0 = t_grid[1] - t_grid[0];
        let uniform = d0 > 0.0
            && t_grid
                .windows(2)
                .all(|w| ((w[1] - w[0]) - d0).abs() <= 1e-9 * d0.abs().max(1.0));
        if !uniform {
            return Err(Error::Domain(
                "t grid must be uniformly spaced and increasing".into(),
            ));
        }
    }
    let measure = PairMeasure::new(sample, model, step)?;
    Ok(map_indexed(Schedule::default(), t_grid.len(), |j| {
        measure.evaluate(kernel, t_grid[j], lh)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::u_naive;

    #[test]
    fn three_points_against_naive() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.2, 0.4]);
        let k = Kernel::gaussian();
        let grid: Vec<f64> = (0..=40).map(|i| -0.5 + 0.05 * i as f64).collect();
        let fast = u_fast_sum(&s, &model, &k, &grid, 0.2, 1e-3).unwrap();
        for (t, f) in grid.iter().zip(&fast) {
            let exact = u_naive(&s, &model, &k, &[*t], 0.2).unwrap();
            assert!((f - exact).abs() <= 1e-3, "t={t}: {f} vs {exact}");
        }
    }

    #[test]
    fn one_observation_is_insufficient() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let s = Sample::from_scalars(&[0.3]);
        assert!(matches!(
            u_fast_sum(&s, &model, &Kernel::gaussian(), &[0.0], 0.2, 1e-3),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn rejects_irregular_grids_and_indicators() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let s = Sample::from_scalars(&[0.3, 0.1, 0.7]);
        assert!(u_fast_sum(&s, &model, &Kernel::gaussian(), &[0.0, 0.1, 0.5], 0.2, 1e-3).is_err());
        assert!(matches!(
            u_fast_sum(&s, &model, &Kernel::uniform(), &[0.0], 0.2, 1e-3),
            Err(Error::UnsupportedFastPath(_))
        ));
    }

    #[test]
    fn pair_measure_has_pair_mass() {
        let model: SampleModel = "normal01:difference".parse().unwrap();
        let s = crate::models::sample(&model, 25, 4).unwrap();
        let pm = PairMeasure::new(&s, &model, 1e-3).unwrap();
        let mass: f64 = pm.weights.iter().sum();
        assert!((mass - 600.0).abs() < 1e-8);
    }

    #[test]
    fn triple_sums_are_close_to_naive() {
        let model: SampleModel = "normal01:sum:m=3".parse().unwrap();
        let s = crate::models::sample(&model, 40, 8).unwrap();
        let pm = PairMeasure::new(&s, &model, 1e-3).unwrap();
        let k = Kernel::gaussian();
        for t in [-1.0, 0.0, 0.8] {
            let exact = u_naive(&s, &model, &k, &[t], 0.3).unwrap();
            // Repeated-index tuples carry weight 1 − n(n−1)(n−2)/n³ ≈ 7%.
            assert!((pm.evaluate(&k, t, 0.3) - exact).abs() < 0.1 * exact.max(0.05));
        }
    }
}
