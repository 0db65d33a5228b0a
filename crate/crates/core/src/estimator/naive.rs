use crate::error::Result;
use crate::kernels::Kernel;
use crate::models::{Sample, SampleModel};
use crate::numeric::falling_factorial;
use crate::par::{map_indexed, Schedule};

use super::{check_bandwidth, check_inputs, finalize_count};

/// Exact `U_n(t, λh)` by enumerating every ordered tuple of distinct indices.
pub fn u_naive(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t: &[f64],
    lh: f64,
) -> Result<f64> {
    u_naive_with(sample, model, kernel, t, lh, Schedule::default())
}

/// [`u_naive`] with an explicit schedule. Partial sums are formed per first
/// index and added in index order, so the result does not depend on `schedule`.
pub fn u_naive_with(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    t: &[f64],
    lh: f64,
    schedule: Schedule,
) -> Result<f64> {
    check_inputs(sample, model, kernel)?;
    check_bandwidth(lh)?;
    if t.len() != model.out_dim() {
        return Err(crate::Error::Domain(format!(
            "t has dimension {}, expected {}",
            t.len(),
            model.out_dim()
        )));
    }
    let n = sample.n();
    let m = model.m();
    let scalar_pairs = m == 2 && sample.dim() == 1 && model.out_dim() == 1;
    let x = sample.values();

    if kernel.indicator_level().is_some() {
        let partial: Vec<u64> = if scalar_pairs {
            let t0 = t[0];
            map_indexed(schedule, n, |i| {
                let xi = x[i];
                let mut c = 0u64;
                for (j, xj) in x.iter().enumerate() {
                    if j != i && kernel.indicator_hit(lh, &[t0 - model.g_pair(xi, *xj)]) {
                        c += 1;
                    }
                }
                c
            })
        } else {
            map_indexed(schedule, n, |i| {
                let mut c = 0u64;
                let mut buf = TupleBuffers::new(model);
                for_each_tuple(n, m, i, |idx| {
                    let u = buf.argument(sample, model, t, idx);
                    if kernel.indicator_hit(lh, u) {
                        c += 1;
                    }
                });
                c
            })
        };
        return Ok(finalize_count(kernel, partial.iter().sum(), lh, n, m));
    }

    let partial: Vec<f64> = if scalar_pairs {
        let t0 = t[0];
        map_indexed(schedule, n, |i| {
            let xi = x[i];
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                if j != i {
                    acc += kernel.scaled1(lh, t0 - model.g_pair(xi, *xj));
                }
            }
            acc
        })
    } else {
        map_indexed(schedule, n, |i| {
            let mut acc = 0.0;
            let mut buf = TupleBuffers::new(model);
            for_each_tuple(n, m, i, |idx| {
                let u = buf.argument(sample, model, t, idx);
                acc += kernel.scaled(lh, u);
            });
            acc
        })
    };
    Ok(partial.iter().sum::<f64>() / falling_factorial(n, m))
}

struct TupleBuffers {
    g: Vec<f64>,
    u: Vec<f64>,
}

impl TupleBuffers {
    fn new(model: &SampleModel) -> Self {
        Self {
            g: vec![0.0; model.out_dim()],
            u: vec![0.0; model.out_dim()],
        }
    }

    /// `t − g(X_{idx_1}, …, X_{idx_m})`.
    fn argument(
        &mut self,
        sample: &Sample,
        model: &SampleModel,
        t: &[f64],
        idx: &[usize],
    ) -> &[f64] {
        let views: Vec<&[f64]> = idx.iter().map(|i| sample.point(*i)).collect();
        model.g_into(&views, &mut self.g);
        for ((u, tk), gk) in self.u.iter_mut().zip(t).zip(&self.g) {
            *u = tk - gk;
        }
        &self.u
    }
}

/// Calls `f` on every ordered `m`-tuple of distinct indices below `n` whose
/// first entry is `first`.
pub(crate) fn for_each_tuple(n: usize, m: usize, first: usize, mut f: impl FnMut(&[usize])) {
    fn rec(
        n: usize,
        m: usize,
        idx: &mut Vec<usize>,
        used: &mut [bool],
        f: &mut impl FnMut(&[usize]),
    ) {
        if idx.len() == m {
            f(idx);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                idx.push(j);
                rec(n, m, idx, used, f);
                idx.pop();
                used[j] = false;
            }
        }
    }
    let mut used = vec![false; n];
    used[first] = true;
    let mut idx = Vec::with_capacity(m);
    idx.push(first);
    rec(n, m, &mut idx, &mut used, &mut f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn hand_enumerated_sum() {
        let model: SampleModel = "uniform01:sum:m=2".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.2, 0.4]);
        let k = Kernel::uniform();
        let u = u_naive(&s, &model, &k, &[0.5], 0.4).unwrap();
        assert!((u - 5.0 / 3.0).abs() < 1e-12, "{u}");
        assert_eq!(u_naive(&s, &model, &k, &[3.0], 0.4).unwrap(), 0.0);
    }

    #[test]
    fn hand_enumerated_distance() {
        let model: SampleModel = "uniform01:distance".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 0.1, 0.5]);
        let u = u_naive(&s, &model, &Kernel::indicator_ball(1), &[0.0], 0.2).unwrap();
        assert!((u - 5.0 / 6.0).abs() < 1e-12, "{u}");
    }

    #[test]
    fn too_small_sample() {
        let model: SampleModel = "normal01:sum:m=3".parse().unwrap();
        let s = Sample::from_scalars(&[0.0, 1.0]);
        assert_eq!(
            u_naive(&s, &model, &Kernel::gaussian(), &[0.0], 0.5),
            Err(Error::InsufficientSample { needed: 3, got: 2 })
        );
    }

    #[test]
    fn tuple_count_is_falling_factorial() {
        let mut c = 0;
        for first in 0..5 {
            for_each_tuple(5, 3, first, |idx| {
                assert_eq!(idx.len(), 3);
                c += 1;
            });
        }
        assert_eq!(c, 60);
    }

    #[test]
    fn generic_path_matches_scalar_path() {
        let model: SampleModel = "normal01:lincomb(1,-0.5)".parse().unwrap();
        let s = crate::models::sample(&model, 30, 5).unwrap();
        let k = Kernel::gaussian();
        let fast = u_naive(&s, &model, &k, &[0.3], 0.4).unwrap();
        // Enumerate through the generic tuple machinery by hand.
        let mut acc = 0.0;
        for i in 0..30 {
            for_each_tuple(30, 2, i, |idx| {
                let g = model.g_scalar(&[s.values()[idx[0]], s.values()[idx[1]]]);
                acc += k.scaled1(0.4, 0.3 - g);
            });
        }
        assert!((fast - acc / 870.0).abs() < 1e-13);
    }
}
