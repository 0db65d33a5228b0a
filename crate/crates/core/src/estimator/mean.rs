use crate::error::{Error, Result};
use crate::kernels::{length_scale, Kernel};
use crate::models::{Sample, SampleModel};
use crate::quadrature::Quadrature;

use super::check_bandwidth;

const MEAN_TOL: f64 = 1e-9;

/// `E K_{lh}(t − g) = (K_{lh} * f_g)(t)` by quadrature, written as
/// `∫ K(v) f_g(t − lh^{1/d} v) dv`.
pub fn mean_term(model: &SampleModel, kernel: &Kernel, t: &[f64], lh: f64) -> Result<f64> {
    check_bandwidth(lh)?;
    let d = model.out_dim();
    if kernel.dim() != d || t.len() != d {
        return Err(Error::Domain(format!(
            "kernel dimension {}, t dimension {} and g dimension {d} must agree",
            kernel.dim(),
            t.len()
        )));
    }
    // Probe once so unsupported models fail with their own error.
    model.fg(t)?;
    let s = length_scale(lh, d);
    let r = kernel.support_radius().unwrap_or(kernel.axis_radius());
    let quad = Quadrature::new(MEAN_TOL).with_pieces(8);
    match d {
        1 => {
            let t0 = t[0];
            let (lo, hi) = model.fg_range();
            let mut breaks = kernel.kinks();
            breaks.extend(model.fg_kinks().iter().map(|k| (t0 - k) / s));
            breaks.push((t0 - lo) / s);
            breaks.push((t0 - hi) / s);
            let failure = std::cell::Cell::new(None);
            let v = quad.integrate_with_breaks(
                |v| {
                    let k = kernel.eval1(v);
                    if k == 0.0 {
                        return 0.0;
                    }
                    match model.fg(&[t0 - s * v]) {
                        Ok(f) => k * f,
                        Err(e) => {
                            failure.set(Some(e));
                            0.0
                        }
                    }
                },
                -r,
                r,
                &breaks,
            )?;
            match failure.take() {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
        2 => {
            let ball = kernel.indicator_level().is_some();
            let half = |v1: f64| {
                if ball {
                    (r * r - v1 * v1).max(0.0).sqrt()
                } else {
                    r
                }
            };
            quad.integrate_2d(
                |v1, v2| {
                    kernel.evaluate(&[v1, v2])
                        * model
                            .fg(&[t[0] - s * v1, t[1] - s * v2])
                            .unwrap_or(f64::NAN)
                },
                -r,
                r,
                &kernel_axis_kinks(kernel),
                |v1| -half(v1),
                half,
                |_| kernel_axis_kinks(kernel),
            )
        }
        _ => Err(Error::UnsupportedModel(format!(
            "mean term by quadrature is implemented for d ≤ 2, got d = {d}"
        ))),
    }
}

fn kernel_axis_kinks(kernel: &Kernel) -> Vec<f64> {
    match kernel.support_radius() {
        Some(r) if kernel.indicator_level().is_none() => vec![-r, r],
        _ => Vec::new(),
    }
}

/// `u_{n,λ}(t) = √n (U_n(t, λ) − (K_{λh_n} * f_g)(t))`, with `U_n` from the exact paths.
pub fn u_process(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t: &[f64],
    lambda: f64,
    h_n: f64,
) -> Result<f64> {
    let lh = lambda * h_n;
    let mean = mean_term(model, kernel, t, lh)?;
    let u = super::evaluate_grid(
        sample,
        model,
        kernel,
        &[t.to_vec()],
        &[lh],
        super::EvalPath::Exact,
    )?[0][0];
    Ok((sample.n() as f64).sqrt() * (u - mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_smoothing_of_normal_sum() {
        // Convolving N(0, 2) with N(0, h²) gives N(0, 2 + h²).
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let v = mean_term(&model, &Kernel::gaussian(), &[0.0], 0.2).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI * 2.04).sqrt();
        assert!((v - 0.279315464961422).abs() < 1e-9);
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn indicator_on_triangular_density() {
        // f_g(s) = s on [0,1], 2 − s on [1,2]; window [0.8, 1.4] with height 1/0.6.
        let model: SampleModel = "uniform01:sum:m=2".parse().unwrap();
        let v = mean_term(&model, &Kernel::uniform(), &[1.1], 0.6).unwrap();
        let mass = (1.0 - 0.64) / 2.0 + (2.0 * 0.4 - (1.96 - 1.0) / 2.0);
        assert!((v - mass / 0.6).abs() < 1e-10, "{v}");
    }

    #[test]
    fn planar_ball_mean() {
        // Normal difference in the plane: f_g is N(0, 2I); the disk average of radius √h.
        let model: SampleModel = "normal01:difference:d=2".parse().unwrap();
        let h = 0.1;
        let v = mean_term(&model, &Kernel::indicator_ball(2), &[0.0, 0.0], h).unwrap();
        // P(|Y| ≤ √h) for Y ~ N(0, 2I), divided by the disk area πh.
        let exact = (1.0 - (-h / 4.0).exp()) / (std::f64::consts::PI * h);
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }

    #[test]
    fn discrete_model_is_unsupported() {
        let model: SampleModel = "discrete(0,1;0.5,0.5):sum:m=2".parse().unwrap();
        assert!(matches!(
            mean_term(&model, &Kernel::gaussian(), &[0.0], 0.2),
            Err(Error::UnsupportedModel(_))
        ));
    }
}
