//! Limit quantities: variances and covariances of the Gaussian limit
//! process, the intrinsic metric `ρ`, the interpoint-process variance `σ²`,
//! cross-covariances for simultaneous convolution estimation and kernel
//! bias predictions.
//!
//! All expectations over `X` are adaptive quadratures with absolute
//! tolerance well below `1e-9`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{BaseLaw, ConvolutionPower, SampleModel};
use crate::numeric::log_log_slope;
use crate::quadrature::Quadrature;

const TOL: f64 = 1e-11;

/// `E φ(f̄(s, X), f̄(t, X))` for a scalar or planar observation.
fn expect_pair(
    model: &SampleModel,
    s: &[f64],
    t: &[f64],
    phi: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let failure = std::cell::Cell::new(None);
    let eval = |x: &[f64]| -> f64 {
        match (model.fbar(s, x), model.fbar(t, x)) {
            (Ok(a), Ok(b)) => phi(a, b),
            (Err(e), _) | (_, Err(e)) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    if !model.has_analytic() {
        // Surface the model's own explanation.
        model.fbar(s, &vec![0.0; model.sample_dim()])?;
    }
    let law = model.base();
    let v = match model.sample_dim() {
        1 => {
            let mut breaks = Vec::new();
            if s.len() == 1 {
                breaks.extend(model.fbar_breakpoints(s[0]));
                breaks.extend(model.fbar_breakpoints(t[0]));
            }
            law.expect(|x| eval(&[x]), &breaks, TOL)?
        }
        2 => {
            let (lo, hi) = law.support();
            let kinks = law.kinks();
            let dens = |x: f64| law.density(x).unwrap_or(0.0);
            Quadrature::new(1e-9).integrate_2d(
                |x, y| eval(&[x, y]) * dens(x) * dens(y),
                lo,
                hi,
                &kinks,
                |_| lo,
                |_| hi,
                |_| kinks.clone(),
            )?
        }
        d => {
            return Err(Error::UnsupportedModel(format!(
                "limit quantities by quadrature need sample dimension ≤ 2, got {d}"
            )))
        }
    };
    match failure.take() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `Var f̄(t, X) = E f̄²(t, X) − (m f_g(t))²`.
pub fn limit_variance(model: &SampleModel, t: &[f64]) -> Result<f64> {
    covariance(model, t, t)
}

/// `Cov(f̄(s, X), f̄(t, X))`.
pub fn covariance(model: &SampleModel, s: &[f64], t: &[f64]) -> Result<f64> {
    let m = model.m() as f64;
    let e = expect_pair(model, s, t, |a, b| a * b)?;
    Ok(e - m * m * model.fg(s)? * model.fg(t)?)
}

/// `ρ(u, v) = √Var(f̄(u, X) − f̄(v, X))`, computed from the difference directly.
pub fn rho(model: &SampleModel, u: &[f64], v: &[f64]) -> Result<f64> {
    let m = model.m() as f64;
    let e = expect_pair(model, u, v, |a, b| (a - b) * (a - b))?;
    let mean = m * (model.fg(u)? - model.fg(v)?);
    Ok((e - mean * mean).max(0.0).sqrt())
}

/// The covariance structure of the Gaussian limit of `u_{n,λ}`.
#[derive(Debug, Clone, Copy)]
pub struct LimitLaw<'a> {
    pub model: &'a SampleModel,
}

impl LimitLaw<'_> {
    pub fn variance(&self, t: &[f64]) -> Result<f64> {
        limit_variance(self.model, t)
    }

    pub fn covariance(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        covariance(self.model, s, t)
    }

    pub fn rho(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        rho(self.model, u, v)
    }
}

/// `σ² = 4[∫f³ − (∫f²)²]` together with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpointSigma {
    pub sigma2: f64,
    pub int_f2: f64,
    pub int_f3: f64,
}

/// `σ²` of the interpoint process for observations in R^d with i.i.d.
/// coordinates from `law`. The power integrals are closed forms, so a
/// constant density gives exactly zero.
pub fn theorem7_sigma(law: &BaseLaw, dim: usize) -> Result<InterpointSigma> {
    let (Some(i2), Some(i3)) = (law.density_power_integral(2), law.density_power_integral(3))
    else {
        return Err(Error::UnsupportedModel(
            "σ² needs a law with a density".into(),
        ));
    };
    let d = dim as i32;
    let int_f2 = i2.powi(d);
    let int_f3 = i3.powi(d);
    Ok(InterpointSigma {
        sigma2: (4.0 * (int_f3 - int_f2 * int_f2)).max(0.0),
        int_f2,
        int_f3,
    })
}

/// `∫ f^k` by adaptive quadrature (an independent route to the closed forms).
pub fn density_power_integral_quadrature(law: &BaseLaw, k: i32) -> Result<f64> {
    if !law.is_continuous() {
        return Err(Error::UnsupportedModel("law has no density".into()));
    }
    law.expect(|x| law.density(x).unwrap_or(0.0).powi(k - 1), &[], 1e-13)
}

/// `Cov(i f^{*(i−1)}(s − X), j f^{*(j−1)}(t − X))`, the limit covariance of
/// the simultaneous estimators of `f^{*i}(s)` and `f^{*j}(t)`.
pub fn convolution_cross_covariance(
    law: &BaseLaw,
    i: usize,
    j: usize,
    s: f64,
    t: f64,
) -> Result<f64> {
    if i < 2 || j < 2 {
        return Err(Error::Domain(format!(
            "orders must be at least 2, got {i} and {j}"
        )));
    }
    let a = ConvolutionPower::new(law, i - 1)?;
    let b = ConvolutionPower::new(law, j - 1)?;
    let (wi, wj) = (i as f64, j as f64);
    let mut breaks: Vec<f64> = a.kinks().iter().map(|k| s - k).collect();
    breaks.extend(b.kinks().iter().map(|k| t - k));
    let ea = law.expect(|x| wi * a.eval(s - x), &breaks, TOL)?;
    let eb = law.expect(|x| wj * b.eval(t - x), &breaks, TOL)?;
    let eab = law.expect(|x| wi * a.eval(s - x) * wj * b.eval(t - x), &breaks, TOL)?;
    Ok(eab - ea * eb)
}

/// `(K_h * f_g)(t) − f_g(t) = ∫ K(v) (f_g(t − h v) − f_g(t)) dv`, for scalar `g`.
pub fn bias_prediction(model: &SampleModel, kernel: &Kernel, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    if model.out_dim() != 1 || kernel.dim() != 1 {
        return Err(Error::UnsupportedModel(
            "bias prediction is implemented for d = 1".into(),
        ));
    }
    let f0 = model.fg(&[t])?;
    let r = kernel.support_radius().unwrap_or(kernel.axis_radius());
    let mut breaks = kernel.kinks();
    breaks.extend(model.fg_kinks().iter().map(|k| (t - k) / h));
    let failure = std::cell::Cell::new(None);
    let v = Quadrature::new(1e-15)
        .with_pieces(16)
        .integrate_with_breaks(
            |v| match model.fg(&[t - h * v]) {
                Ok(f) => kernel.eval1(v) * (f - f0),
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            },
            -r,
            r,
            &breaks,
        );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    // Tiny biases may stall at the floating floor; a looser target is still far below them.
    match v {
        Ok(v) => Ok(v),
        Err(_) => Quadrature::new(1e-13)
            .with_pieces(16)
            .integrate_with_breaks(
                |v| kernel.eval1(v) * (model.fg(&[t - h * v]).unwrap_or(f64::NAN) - f0),
                -r,
                r,
                &breaks,
            ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasFit {
    pub h: Vec<f64>,
    pub bias: Vec<f64>,
    /// Slope of `log|bias|` on `log h` over the points with `|bias| ≥ 1e-12`.
    pub slope: f64,
    pub excluded: Vec<f64>,
}

pub fn bias_slope(model: &SampleModel, kernel: &Kernel, t: f64, hs: &[f64]) -> Result<BiasFit> {
    let bias = hs
        .iter()
        .map(|h| bias_prediction(model, kernel, t, *h))
        .collect::<Result<Vec<_>>>()?;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut excluded = Vec::new();
    for (h, b) in hs.iter().zip(&bias) {
        if b.abs() >= 1e-12 {
            lx.push(*h);
            ly.push(b.abs());
        } else {
            excluded.push(*h);
        }
    }
    let slope = log_log_slope(&lx, &ly)
        .ok_or_else(|| Error::Numeric("fewer than two bandwidths with measurable bias".into()))?;
    Ok(BiasFit {
        h: hs.to_vec(),
        bias,
        slope,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(s: &str) -> SampleModel {
        s.parse().unwrap()
    }

    #[test]
    fn normal_sum_variance() {
        let v = limit_variance(&model("normal01:sum:m=2"), &[0.0]).unwrap();
        assert_abs_diff_eq!(v, 0.04924271076407072, epsilon = 1e-9);
    }

    #[test]
    fn uniform_distance_variance() {
        let m = model("uniform01:distance");
        assert_abs_diff_eq!(limit_variance(&m, &[0.3]).unwrap(), 0.96, epsilon = 1e-9);
        // f̄(0.5, x) = 2 for almost every x.
        assert_abs_diff_eq!(limit_variance(&m, &[0.5]).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn sigma_values() {
        let n = theorem7_sigma(&BaseLaw::Normal01, 1).unwrap();
        assert_abs_diff_eq!(n.sigma2, 0.04924271076407072, epsilon = 1e-12);
        assert_eq!(theorem7_sigma(&BaseLaw::Uniform01, 1).unwrap().sigma2, 0.0);
        assert_eq!(theorem7_sigma(&BaseLaw::Uniform01, 2).unwrap().sigma2, 0.0);
        let tri = theorem7_sigma(&BaseLaw::Triangular, 1).unwrap();
        assert_abs_diff_eq!(tri.sigma2, 8.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tri.int_f2, 4.0 / 3.0, epsilon = 1e-15);
        assert!(theorem7_sigma(&"discrete(0;1)".parse().unwrap(), 1).is_err());
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for law in [
            BaseLaw::Normal01,
            BaseLaw::Triangular,
            BaseLaw::Exponential1,
            BaseLaw::Uniform01,
        ] {
            for k in [2, 3] {
                let q = density_power_integral_quadrature(&law, k).unwrap();
                assert_abs_diff_eq!(
                    q,
                    law.density_power_integral(k as u32).unwrap(),
                    epsilon = 1e-11
                );
            }
        }
    }

    #[test]
    fn sigma_is_the_difference_model_variance_at_zero() {
        for (spec, law) in [
            ("normal01:difference", BaseLaw::Normal01),
            ("triangular:difference", BaseLaw::Triangular),
        ] {
            let v = limit_variance(&model(spec), &[0.0]).unwrap();
            assert_abs_diff_eq!(v, theorem7_sigma(&law, 1).unwrap().sigma2, epsilon = 1e-8);
        }
    }

    #[test]
    fn rho_properties() {
        let m = model("normal01:sum:m=2");
        assert_eq!(rho(&m, &[0.4], &[0.4]).unwrap(), 0.0);
        let a = rho(&m, &[0.0], &[0.1]).unwrap();
        let b = rho(&m, &[0.0], &[0.01]).unwrap();
        assert!(b < a && b > 0.0);
        assert_abs_diff_eq!(
            rho(&m, &[0.3], &[-0.7]).unwrap(),
            rho(&m, &[-0.7], &[0.3]).unwrap(),
            epsilon = 1e-12
        );
        // Var(A − B) = Var A + Var B − 2 Cov(A, B).
        let (s, t) = ([0.2], [-0.5]);
        let lhs = rho(&m, &s, &t).unwrap().powi(2);
        let rhs = limit_variance(&m, &s).unwrap() + limit_variance(&m, &t).unwrap()
            - 2.0 * covariance(&m, &s, &t).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
    }

    #[test]
    fn cross_covariance() {
        let c = convolution_cross_covariance(&BaseLaw::Normal01, 2, 3, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(c, 0.03720912543346802, epsilon = 1e-9);
        let v = convolution_cross_covariance(&BaseLaw::Normal01, 2, 2, 0.4, 0.4).unwrap();
        assert_abs_diff_eq!(
            v,
            limit_variance(&model("normal01:sum:m=2"), &[0.4]).unwrap(),
            epsilon = 1e-9
        );
        for law in [BaseLaw::Uniform01, BaseLaw::Exponential1] {
            let vi = convolution_cross_covariance(&law, 2, 2, 0.7, 0.7).unwrap();
            let vj = convolution_cross_covariance(&law, 3, 3, 1.1, 1.1).unwrap();
            let cij = convolution_cross_covariance(&law, 2, 3, 0.7, 1.1).unwrap();
            assert!(vi >= 0.0 && vj >= 0.0 && vi * vj - cij * cij >= -1e-10);
        }
    }

    #[test]
    fn bias_orders() {
        let m = model("normal01:sum:m=2");
        let hs = [0.4, 0.2, 0.1, 0.05];
        let two = bias_slope(&m, &Kernel::gaussian(), 0.0, &hs).unwrap();
        assert!((1.9..=2.1).contains(&two.slope), "{two:?}");
        let four = bias_slope(&m, &Kernel::gaussian4(), 0.0, &hs).unwrap();
        assert!((3.8..=4.2).contains(&four.slope), "{four:?}");
    }

    #[test]
    fn symmetric_kernels_have_no_first_order_bias() {
        let m = model("normal01:sum:m=2");
        let b1 = bias_prediction(&m, &Kernel::epanechnikov(), 0.7, 0.02).unwrap();
        let b2 = bias_prediction(&m, &Kernel::epanechnikov(), 0.7, 0.01).unwrap();
        assert!((b1 / 0.02).abs() < 1e-3 && (b2 / b1 - 0.25).abs() < 0.01);
    }
}
