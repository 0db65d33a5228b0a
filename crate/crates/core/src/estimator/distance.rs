use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::{length_scale, Kernel};
use crate::models::{GSpec, Sample, SampleModel};
use crate::par::{map_indexed, Schedule};

use super::{check_bandwidth, check_inputs, finalize_count};

/// Ordered pair count of an indicator kernel at one bandwidth, with the
/// corresponding value of `U_n(0, λh)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCount {
    pub lh: f64,
    pub count: u64,
    pub value: f64,
}

/// `U_n(0, λh)` for the distance or difference model with an indicator kernel,
/// computed by counting close pairs. The result is bitwise identical to
/// [`super::u_naive`] because the same pair predicate and final conversion are used.
pub fn u_fast_distance(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    lh_grid: &[f64],
) -> Result<Vec<PairCount>> {
    if kernel.indicator_level().is_none() {
        return Err(Error::UnsupportedFastPath(format!(
            "pair counting needs an indicator kernel, got `{}`",
            kernel.name()
        )));
    }
    if !matches!(model.g(), GSpec::Distance | GSpec::Difference) {
        return Err(Error::UnsupportedFastPath(format!(
            "pair counting needs g = distance or difference, model is `{model}`"
        )));
    }
    if model.sample_dim() > 3 {
        return Err(Error::UnsupportedFastPath(
            "pair counting is implemented for sample dimension ≤ 3".into(),
        ));
    }
    check_inputs(sample, model, kernel)?;
    let n = sample.n();
    let radius_unit = kernel.support_radius().unwrap_or(1.0);

    let sorted = (sample.dim() == 1).then(|| {
        let mut v = sample.values().to_vec();
        v.sort_by(f64::total_cmp);
        v
    });
    lh_grid
        .iter()
        .map(|&lh| {
            check_bandwidth(lh)?;
            let unordered = match &sorted {
                Some(v) => sweep_count(v, |a, b| scalar_hit(model, kernel, lh, a, b)),
                None => {
                    let r = radius_unit * length_scale(lh, kernel.dim());
                    cell_count(sample, r, |a, b| vector_hit(model, kernel, lh, a, b))
                }
            };
            let count = 2 * unordered;
            Ok(PairCount {
                lh,
                count,
                value: finalize_count(kernel, count, lh, n, 2),
            })
        })
        .collect()
}

#[inline]
fn scalar_hit(model: &SampleModel, kernel: &Kernel, lh: f64, a: f64, b: f64) -> bool {
    kernel.indicator_hit(lh, &[0.0 - model.g_pair(a, b)])
}

fn vector_hit(model: &SampleModel, kernel: &Kernel, lh: f64, a: &[f64], b: &[f64]) -> bool {
    let mut g = [0.0; 3];
    let out = &mut g[..model.out_dim()];
    model.g_into(&[a, b], out);
    let mut u = [0.0; 3];
    for (uk, gk) in u.iter_mut().zip(out.iter()) {
        *uk = 0.0 - gk;
    }
    kernel.indicator_hit(lh, &u[..model.out_dim()])
}

/// Unordered pairs `i < j` of the sorted values with `hit(v_i, v_j)`, for a
/// predicate that only weakens as `v_j − v_i` grows.
fn sweep_count(v: &[f64], hit: impl Fn(f64, f64) -> bool) -> u64 {
    let n = v.len();
    let mut j = 0;
    let mut pairs = 0u64;
    for i in 0..n {
        j = j.max(i + 1);
        while j < n && hit(v[i], v[j]) {
            j += 1;
        }
        pairs += (j - i - 1) as u64;
    }
    pairs
}

/// Unordered close pairs found through a grid of cells with side at least `r`.
fn cell_count(sample: &Sample, r: f64, hit: impl Fn(&[f64], &[f64]) -> bool + Sync) -> u64 {
    let d = sample.dim();
    let side = if r > 0.0 { r * (1.0 + 1e-9) } else { 1.0 };
    let key = |p: &[f64]| {
        let mut k = [0i64; 3];
        for (kk, x) in k.iter_mut().zip(p) {
            *kk = (x / side).floor() as i64;
        }
        k
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in sample.points().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let offsets: Vec<[i64; 3]> = (0..3i64.pow(d as u32))
        .map(|code| {
            let mut o = [0i64; 3];
            let mut c = code;
            for slot in o.iter_mut().take(d) {
                *slot = c % 3 - 1;
                c /= 3;
            }
            o
        })
        .collect();
    let partial = map_indexed(Schedule::default(), sample.n(), |i| {
        let p = sample.point(i);
        let k = key(p);
        let mut c = 0u64;
        for o in &offsets {
            let nk = [k[0] + o[0], k[1] + o[1], k[2] + o[2]];
            if let Some(members) = cells.get(&nk) {
                for &j in members {
                    if j > i && hit(p, sample.point(j)) {
                        c += 1;
                    }
                }
            }
        }
        c
    });
    partial.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::u_naive;

    #[test]
    fn hand_example() {
        let model: SampleModel = "uniform01:distance".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.1, 0.5]);
        let k = Kernel::indicator_ball(1);
        let c = u_fast_distance(&s, &model, &k, &[0.2]).unwrap();
        assert_eq!(c[0].count, 2);
        assert_eq!(c[0].value, u_naive(&s, &model, &k, &[0.0], 0.2).unwrap());
    }

    #[test]
    fn extreme_radii() {
        let model: SampleModel = "uniform01:distance".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.1, 0.5, 0.7]);
        let k = Kernel::indicator_ball(1);
        let c = u_fast_distance(&s, &model, &k, &[1e-300, 10.0]).unwrap();
        assert_eq!(c[0].count, 0);
        assert_eq!(c[1].count, 12);
    }

    #[test]
    fn rejects_smooth_kernels() {
        let model: SampleModel = "uniform01:distance".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.1]);
        assert!(matches!(
            u_fast_distance(&s, &model, &Kernel::gaussian(), &[0.2]),
            Err(Error::UnsupportedFastPath(_))
        ));
    }

    #[test]
    fn planar_and_spatial_counts_match_naive() {
        for spec in [
            "uniform01:distance:d=2",
            "normal01:difference:d=2",
            "uniform01:difference:d=3",
        ] {
            let model: SampleModel = spec.parse().unwrap();
            let k = Kernel::indicator_ball(model.out_dim());
            let s = crate::models::sample(&model, 60, 11).unwrap();
            let t = vec![0.0; model.out_dim()];
            for lh in [0.01, 0.05, 0.3] {
                let fast = u_fast_distance(&s, &model, &k, &[lh]).unwrap()[0].value;
                assert_eq!(
                    fast,
                    u_naive(&s, &model, &k, &t, lh).unwrap(),
                    "{spec} lh={lh}"
                );
            }
        }
    }
}
