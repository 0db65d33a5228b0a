//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Every expectation in the crate reduces to one or two nested calls of
//! [`Quadrature::integrate`]. Callers pass known non-smooth points of the
//! integrand as breakpoints; the interval is additionally pre-split so that
//! narrow peaks are not missed by the first 15-point rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Number of equal pieces each breakpoint-delimited segment starts with.
    pub initial_pieces: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(1e-9)
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kron += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

impl Quadrature {
    pub fn new(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            max_intervals: 20_000,
            initial_pieces: 8,
        }
    }

    pub fn with_pieces(mut self, pieces: usize) -> Self {
        self.initial_pieces = pieces.max(1);
        self
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        self.integrate_with_breaks(f, a, b, &[])
    }

    /// Integrates `f` over `[a, b]`, splitting first at every breakpoint that
    /// falls strictly inside the interval.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        breaks: &[f64],
    ) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Numeric(format!(
                "integration limits must be finite, got [{a}, {b}]"
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        if a > b {
            return self.integrate_with_breaks(f, b, a, breaks).map(|v| -v);
        }
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|x| x.is_finite() && *x > a && *x < b)
            .collect();
        cuts.push(a);
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut total_err = 0.0;
        let mut settled_err = 0.0;
        for w in cuts.windows(2) {
            let width = (w[1] - w[0]) / self.initial_pieces as f64;
            for p in 0..self.initial_pieces {
                let lo = w[0] + width * p as f64;
                let hi = if p + 1 == self.initial_pieces {
                    w[1]
                } else {
                    w[0] + width * (p + 1) as f64
                };
                let (value, error) = kronrod(&f, lo, hi);
                total += value;
                total_err += error;
                heap.push(Segment {
                    a: lo,
                    b: hi,
                    value,
                    error,
                });
            }
        }

        let mut count = heap.len();
        loop {
            if !total.is_finite() {
                return Err(Error::Numeric(
                    "integrand produced a non-finite value (divergent integral?)".into(),
                ));
            }
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= target {
                return Ok(total);
            }
            let Some(worst) = heap.pop() else {
                // Every remaining segment hit the resolution floor.
                return Ok(total);
            };
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b)
                || (worst.b - worst.a) <= 1e-15 * (1.0 + worst.a.abs().max(worst.b.abs()))
            {
                // Cannot split further; its value stays in `total` but it is no longer refined.
                settled_err += worst.error;
                if settled_err > target {
                    return Err(Error::Numeric(format!(
                        "quadrature hit floating resolution near {mid} with error {settled_err:.3e}"
                    )));
                }
                continue;
            }
            if count >= self.max_intervals {
                return Err(Error::Numeric(format!(
                    "quadrature did not converge: error estimate {total_err:.3e} > tolerance {target:.3e}"
                )));
            }
            let (v1, e1) = kronrod(&f, worst.a, mid);
            let (v2, e2) = kronrod(&f, mid, worst.b);
            total += v1 + v2 - worst.value;
            total_err += e1 + e2 - worst.error;
            // Guard against cancellation drift in the running error sum.
            if total_err < 0.0 {
                total_err = heap.iter().map(|s| s.error).sum::<f64>() + e1 + e2 + settled_err;
            }
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: v2,
                error: e2,
            });
            count += 1;
        }
    }

    /// Iterated integral of `f(x, y)` over `x ∈ [a, b]`, `y ∈ [lo(x), hi(x)]`.
    /// `y_breaks(x)` supplies breakpoints of the inner integrand.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate_2d<F, L, H, B>(
        &self,
        f: F,
        a: f64,
        b: f64,
        x_breaks: &[f64],
        lo: L,
        hi: H,
        y_breaks: B,
    ) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64,
        L: Fn(f64) -> f64,
        H: Fn(f64) -> f64,
        B: Fn(f64) -> Vec<f64>,
    {
        let inner = Quadrature {
            abs_tol: self.abs_tol * 1e-2 / (b - a).abs().max(1.0),
            ..*self
        };
        let failure = std::cell::Cell::new(None);
        let outer = |x: f64| {
            let br = y_breaks(x);
            match inner.integrate_with_breaks(|y| f(x, y), lo(x), hi(x), &br) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            }
        };
        let v = self.integrate_with_breaks(outer, a, b, x_breaks)?;
        match failure.take() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}
