//! Data-generating models: the law of one observation, the function `g` of
//! `m` observations, and the analytic conditional densities `f̄_i(t, x)` of
//! `g(X_1, …, X_m)` given `X_i = x` together with the target density `f_g`.
//!
//! For linear statistics `g = Σ c_i X_i` the conditional density given the
//! `i`-th argument is the density of the remaining terms evaluated at
//! `t − c_i x`, i.e. a convolution of the other summands' densities.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::{binomial, factorial, fft_convolve};
use crate::quadrature::Quadrature;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const GRID_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::config(
                "base_law",
                "discrete law needs matching, nonempty support and probabilities",
            ));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || ((probs.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "base_law",
                "discrete probabilities must be nonnegative and sum to 1",
            ));
        }
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<f64>) -> Self {
        let p = 1.0 / support.len() as f64;
        let probs = vec![p; support.len()];
        Self { support, probs }
    }

    /// Index of `x` in the support, by exact comparison.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.support.iter().position(|s| *s == x)
    }
}

/// Law of a single coordinate of an observation; vector observations use
/// i.i.d. coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseLaw {
    Uniform01,
    Normal01,
    /// Density `2x` on `[0, 1]`.
    Triangular,
    Exponential1,
    Discrete(DiscreteLaw),
}

impl BaseLaw {
    pub fn is_continuous(&self) -> bool {
        !matches!(self, BaseLaw::Discrete(_))
    }

    /// Density at `x`; `None` for discrete laws.
    pub fn density(&self, x: f64) -> Option<f64> {
        Some(match self {
            BaseLaw::Uniform01 => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            BaseLaw::Normal01 => FRAC_1_SQRT_2PI * (-0.5 * x * x).exp(),
            BaseLaw::Triangular => {
                if (0.0..=1.0).contains(&x) {
                    2.0 * x
                } else {
                    0.0
                }
            }
            BaseLaw::Exponential1 => {
                if x >= 0.0 {
                    (-x).exp()
                } else {
                    0.0
                }
            }
            BaseLaw::Discrete(_) => return None,
        })
    }

    /// Integration range covering all but a negligible amount of mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            BaseLaw::Uniform01 | BaseLaw::Triangular => (0.0, 1.0),
            BaseLaw::Normal01 => (-10.0, 10.0),
            BaseLaw::Exponential1 => (0.0, 40.0),
            BaseLaw::Discrete(d) => {
                let lo = d.support.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = d.support.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    /// Points where the density is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            BaseLaw::Uniform01 | BaseLaw::Triangular => vec![0.0, 1.0],
            BaseLaw::Exponential1 => vec![0.0],
            BaseLaw::Normal01 | BaseLaw::Discrete(_) => Vec::new(),
        }
    }

    /// `∫ f^k` in closed form, for continuous laws.
    pub fn density_power_integral(&self, k: u32) -> Option<f64> {
        let k = k as f64;
        match self {
            BaseLaw::Uniform01 => Some(1.0),
            BaseLaw::Triangular => Some(2f64.powf(k) / (k + 1.0)),
            BaseLaw::Normal01 => {
                Some((2.0 * std::f64::consts::PI).powf(-(k - 1.0) / 2.0) / k.sqrt())
            }
            BaseLaw::Exponential1 => Some(1.0 / k),
            BaseLaw::Discrete(_) => None,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BaseLaw::Uniform01 => rng.gen::<f64>(),
            BaseLaw::Normal01 => StandardNormal.sample(rng),
            BaseLaw::Triangular => rng.gen::<f64>().sqrt(),
            BaseLaw::Exponential1 => Exp1.sample(rng),
            BaseLaw::Discrete(d) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (x, p) in d.support.iter().zip(&d.probs) {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                *d.support.last().expect("nonempty support")
            }
        }
    }

    fn label(&self) -> String {
        match self {
            BaseLaw::Uniform01 => "uniform01".into(),
            BaseLaw::Normal01 => "normal01".into(),
            BaseLaw::Triangular => "triangular".into(),
            BaseLaw::Exponential1 => "exponential1".into(),
            BaseLaw::Discrete(d) => {
                let s: Vec<String> = d.support.iter().map(|x| x.to_string()).collect();
                let p: Vec<String> = d.probs.iter().map(|x| x.to_string()).collect();
                format!("discrete({};{})", s.join(","), p.join(","))
            }
        }
    }

    /// `∫ φ(x) f(x) dx` over the law, for continuous laws.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64], tol: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        let mut br = self.kinks();
        br.extend_from_slice(breaks);
        Quadrature::new(tol).with_pieces(16).integrate_with_breaks(
            |x| phi(x) * self.density(x).unwrap_or(0.0),
            lo,
            hi,
            &br,
        )
    }
}

impl FromStr for BaseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform01" => Ok(BaseLaw::Uniform01),
            "normal01" => Ok(BaseLaw::Normal01),
            "triangular" => Ok(BaseLaw::Triangular),
            "exponential1" => Ok(BaseLaw::Exponential1),
            other => {
                let inner = other
                    .strip_prefix("discrete(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown base law `{other}`")))?;
                let (sup, prob) = inner.split_once(';').ok_or_else(|| {
                    Error::Parse(format!("discrete law `{other}` needs `support;probs`"))
                })?;
                let nums = |txt: &str| -> Result<Vec<f64>> {
                    txt.split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::Parse(format!("`{v}`: {e}")))
                        })
                        .collect()
                };
                Ok(BaseLaw::Discrete(DiscreteLaw::new(
                    nums(sup)?,
                    nums(prob)?,
                )?))
            }
        }
    }
}

/// The density of a fixed linear combination `Σ c_j X_j` of i.i.d. scalars.
#[derive(Debug, Clone)]
pub(crate) enum LinearDensity {
    Normal {
        sd: f64,
    },
    Scaled {
        law: BaseLaw,
        c: f64,
    },
    /// Sum of `k` standard uniforms shifted by `-shift`.
    IrwinHall {
        k: usize,
        shift: f64,
    },
    Gamma {
        k: usize,
    },
    TwoTerm {
        law: BaseLaw,
        c1: f64,
        c2: f64,
    },
    Grid(Arc<GridDensity>),
}

#[derive(Debug, Clone)]
pub(crate) struct GridDensity {
    origin: f64,
    step: f64,
    values: Vec<f64>,
}

impl GridDensity {
    fn build(law: &BaseLaw, coeffs: &[f64]) -> Result<Self> {
        let step = GRID_STEP;
        let quad = Quadrature::new(1e-13);
        let mut origin = 0.0;
        let mut masses: Vec<f64> = vec![1.0];
        for &c in coeffs {
            let (a, b) = law.support();
            let (lo, hi) = if c > 0.0 {
                (c * a, c * b)
            } else {
                (c * b, c * a)
            };
            let first = (lo / step).floor() as i64 - 1;
            let last = (hi / step).ceil() as i64 + 1;
            let breaks: Vec<f64> = law.kinks().iter().map(|k| c * k).collect();
            let mut cell = Vec::with_capacity((last - first + 1) as usize);
            for i in first..=last {
                let x = i as f64 * step;
                let m = quad.integrate_with_breaks(
                    |s| law.density(s / c).unwrap_or(0.0) / c.abs(),
                    x - 0.5 * step,
                    x + 0.5 * step,
                    &breaks,
                )?;
                cell.push(m);
            }
            masses = fft_convolve(&masses, &cell);
            origin += first as f64 * step;
        }
        let values = masses.into_iter().map(|m| m.max(0.0) / step).collect();
        Ok(Self {
            origin,
            step,
            values,
        })
    }

    fn eval(&self, s: f64) -> f64 {
        let pos = (s - self.origin) / self.step;
        if pos < 0.0 || pos > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        let w = pos - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }
}

impl LinearDensity {
    fn build(law: &BaseLaw, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("linear combination with no terms".into()));
        }
        Ok(match law {
            BaseLaw::Discrete(_) => {
                return Err(Error::UnsupportedModel(
                    "discrete base laws have no density".into(),
                ))
            }
            BaseLaw::Normal01 => LinearDensity::Normal {
                sd: coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
            },
            _ if coeffs.len() == 1 => LinearDensity::Scaled {
                law: law.clone(),
                c: coeffs[0],
            },
            BaseLaw::Uniform01 if coeffs.iter().all(|c| c.abs() == 1.0) => {
                LinearDensity::IrwinHall {
                    k: coeffs.len(),
                    shift: coeffs.iter().filter(|c| **c < 0.0).count() as f64,
                }
            }
            BaseLaw::Exponential1 if coeffs.iter().all(|c| *c == 1.0) => {
                LinearDensity::Gamma { k: coeffs.len() }
            }
            _ if coeffs.len() == 2 => LinearDensity::TwoTerm {
                law: law.clone(),
                c1: coeffs[0],
                c2: coeffs[1],
            },
            _ => LinearDensity::Grid(Arc::new(GridDensity::build(law, coeffs)?)),
        })
    }

    fn eval(&self, s: f64) -> f64 {
        match self {
            LinearDensity::Normal { sd } => FRAC_1_SQRT_2PI * (-0.5 * (s / sd).powi(2)).exp() / sd,
            LinearDensity::Scaled { law, c } => law.density(s / c).unwrap_or(0.0) / c.abs(),
            LinearDensity::IrwinHall { k, shift } => {
                let x = s + shift;
                let k = *k;
                if x < 0.0 || x > k as f64 {
                    return 0.0;
                }
                let top = (x.floor() as usize).min(k);
                let mut acc = 0.0;
                for j in 0..=top {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * binomial(k, j) * (x - j as f64).powi(k as i32 - 1);
                }
                (acc / factorial(k - 1)).max(0.0)
            }
            LinearDensity::Gamma { k } => {
                if s < 0.0 {
                    0.0
                } else {
                    s.powi(*k as i32 - 1) * (-s).exp() / factorial(k - 1)
                }
            }
            LinearDensity::TwoTerm { law, c1, c2 } => {
                let breaks: Vec<f64> = law.kinks().iter().map(|k| (s - c1 * k) / c2).collect();
                law.expect(
                    |y| law.density((s - c2 * y) / c1).unwrap_or(0.0) / c1.abs(),
                    &breaks,
                    1e-12,
                )
                .unwrap_or(f64::NAN)
            }
            LinearDensity::Grid(g) => g.eval(s),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            LinearDensity::Normal { .. } | LinearDensity::Grid(_) => Vec::new(),
            LinearDensity::Scaled { law, c } => law.kinks().iter().map(|k| c * k).collect(),
            LinearDensity::IrwinHall { k, shift } => (0..=*k).map(|j| j as f64 - shift).collect(),
            LinearDensity::Gamma { .. } => vec![0.0],
            LinearDensity::TwoTerm { law, c1, c2 } => {
                let ks = law.kinks();
                ks.iter()
                    .flat_map(|a| ks.iter().map(move |b| c1 * a + c2 * b))
                    .collect()
            }
        }
    }
}

/// The density `f^{*k}` of a sum of `k` i.i.d. draws from a continuous law.
#[derive(Debug, Clone)]
pub struct ConvolutionPower {
    inner: LinearDensity,
}

impl ConvolutionPower {
    pub fn new(law: &BaseLaw, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("convolution power must be at least 1".into()));
        }
        Ok(Self {
            inner: LinearDensity::build(law, &vec![1.0; k])?,
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.inner.eval(s)
    }

    pub fn kinks(&self) -> Vec<f64> {
        self.inner.kinks()
    }
}

/// The function `g` applied to `m` observations.
#[derive(Debug, Clone, PartialEq)]
pub enum GSpec {
    Sum,
    LinearCombination(Vec<f64>),
    /// `x₁ − x₂`.
    Difference,
    /// `|x₁ − x₂|` (Euclidean norm).
    Distance,
}

#[derive(Debug, Clone)]
enum Analytic {
    Unavailable(String),
    Linear {
        partial: Vec<LinearDensity>,
        full: LinearDensity,
    },
    Distance,
}

#[derive(Debug, Clone)]
pub struct SampleModel {
    base: BaseLaw,
    sample_dim: usize,
    m: usize,
    g: GSpec,
    coeffs: Vec<f64>,
    analytic: Analytic,
}

impl SampleModel {
    pub fn new(base: BaseLaw, g: GSpec, m: usize, sample_dim: usize) -> Result<Self> {
        if sample_dim == 0 {
            return Err(Error::config("d", "sample dimension must be positive"));
        }
        let m = match &g {
            GSpec::Difference | GSpec::Distance => {
                if m != 2 {
                    return Err(Error::config("m", "difference and distance need m = 2"));
                }
                2
            }
            GSpec::LinearCombination(c) => {
                if c.len() < 2 || c.iter().any(|v| *v == 0.0 || !v.is_finite()) {
                    return Err(Error::config(
                        "g",
                        "linear combination needs at least two finite nonzero coefficients",
                    ));
                }
                c.len()
            }
            GSpec::Sum => {
                if m < 2 {
                    return Err(Error::config("m", "need m ≥ 2"));
                }
                m
            }
        };
        let coeffs = match &g {
            GSpec::Sum => vec![1.0; m],
            GSpec::LinearCombination(c) => c.clone(),
            GSpec::Difference => vec![1.0, -1.0],
            GSpec::Distance => Vec::new(),
        };
        let analytic = if !base.is_continuous() {
            Analytic::Unavailable("discrete base laws have no densities".into())
        } else {
            match &g {
                GSpec::Distance if sample_dim <= 2 => Analytic::Distance,
                GSpec::Distance => Analytic::Unavailable(format!(
                    "no analytic distance density for sample dimension {sample_dim}"
                )),
                _ => {
                    let partial = (0..m)
                        .map(|i| {
                            let rest: Vec<f64> = coeffs
                                .iter()
                                .enumerate()
                                .filter(|(j, _)| *j != i)
                                .map(|(_, c)| *c)
                                .collect();
                            LinearDensity::build(&base, &rest)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let full = LinearDensity::build(&base, &coeffs)?;
                    Analytic::Linear { partial, full }
                }
            }
        };
        Ok(Self {
            base,
            sample_dim,
            m,
            g,
            coeffs,
            analytic,
        })
    }

    pub fn base(&self) -> &BaseLaw {
        &self.base
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn g(&self) -> &GSpec {
        &self.g
    }

    /// Coefficients `c_i` of a linear `g`; empty for the distance.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Dimension `d` of the value of `g`.
    pub fn out_dim(&self) -> usize {
        match self.g {
            GSpec::Distance => 1,
            _ => self.sample_dim,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.g {
            GSpec::Sum | GSpec::Distance => true,
            GSpec::Difference => false,
            GSpec::LinearCombination(c) => c.iter().all(|v| *v == c[0]),
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.g, GSpec::Distance)
    }

    pub fn has_analytic(&self) -> bool {
        !matches!(self.analytic, Analytic::Unavailable(_))
    }

    fn unsupported(&self) -> Error {
        match &self.analytic {
            Analytic::Unavailable(reason) => Error::UnsupportedModel(format!("{}: {reason}", self)),
            _ => Error::UnsupportedModel(format!("{self}")),
        }
    }

    /// `g(x_1, …, x_m)` written into `out` (length `out_dim`).
    pub fn g_into(&self, xs: &[&[f64]], out: &mut [f64]) {
        match &self.g {
            GSpec::Distance => {
                let (a, b) = (xs[0], xs[1]);
                out[0] = if a.len() == 1 {
                    (a[0] - b[0]).abs()
                } else {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                };
            }
            _ => {
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (c, x) in self.coeffs.iter().zip(xs) {
                        acc += if *c == 1.0 {
                            x[k]
                        } else if *c == -1.0 {
                            -x[k]
                        } else {
                            c * x[k]
                        };
                    }
                    *o = acc;
                }
            }
        }
    }

    /// `g` for scalar observations with scalar output.
    #[inline]
    pub fn g_scalar(&self, xs: &[f64]) -> f64 {
        let mut out = [0.0];
        let views: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
        self.g_into(&views, &mut out);
        out[0]
    }

    /// `g(x, y)` for scalar pairs, written to match [`SampleModel::g_into`] exactly.
    #[inline]
    pub fn g_pair(&self, x: f64, y: f64) -> f64 {
        match &self.g {
            GSpec::Distance => (x - y).abs(),
            _ => {
                let term = |c: f64, v: f64| {
                    if c == 1.0 {
                        v
                    } else if c == -1.0 {
                        -v
                    } else {
                        c * v
                    }
                };
                0.0 + term(self.coeffs[0], x) + term(self.coeffs[1], y)
            }
        }
    }

    /// Product density of one observation.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        x.iter().map(|v| self.base.density(*v)).product()
    }

    /// `f̄_i(t, x)`: density of `g` at `t` given that argument `i` equals `x`.
    pub fn fbar_i(&self, i: usize, t: &[f64], x: &[f64]) -> Result<f64> {
        self.check_point(t, x)?;
        match &self.analytic {
            Analytic::Unavailable(_) => Err(self.unsupported()),
            Analytic::Linear { partial, .. } => {
                let c = self.coeffs[i];
                Ok(t.iter()
                    .zip(x)
                    .map(|(tk, xk)| partial[i].eval(tk - c * xk))
                    .product())
            }
            Analytic::Distance => Ok(0.5 * self.fbar_distance(t[0], x)?),
        }
    }

    /// `f̄(t, x) = Σ_i f̄_i(t, x)`.
    pub fn fbar(&self, t: &[f64], x: &[f64]) -> Result<f64> {
        self.check_point(t, x)?;
        match &self.analytic {
            Analytic::Unavailable(_) => Err(self.unsupported()),
            Analytic::Linear { partial, .. } => Ok(partial
                .iter()
                .zip(&self.coeffs)
                .map(|(p, c)| {
                    t.iter()
                        .zip(x)
                        .map(|(tk, xk)| p.eval(tk - c * xk))
                        .product::<f64>()
                })
                .sum()),
            Analytic::Distance => self.fbar_distance(t[0], x),
        }
    }

    fn fbar_distance(&self, t: f64, x: &[f64]) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        let f = |v: f64| self.base.density(v).unwrap_or(0.0);
        if self.sample_dim == 1 {
            return Ok(2.0 * (f(x[0] + t) + f(x[0] - t)));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let (x1, x2) = (x[0], x[1]);
        let circle = Quadrature::new(1e-11).with_pieces(32).integrate(
            |th| f(x1 + t * th.cos()) * f(x2 + t * th.sin()),
            0.0,
            2.0 * std::f64::consts::PI,
        )?;
        Ok(2.0 * t * circle)
    }

    /// `f_g(t)`, the density of `g(X_1, …, X_m)`.
    pub fn fg(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.out_dim() {
            return Err(Error::Domain(format!(
                "t has dimension {}, model output has dimension {}",
                t.len(),
                self.out_dim()
            )));
        }
        match &self.analytic {
            Analytic::Unavailable(_) => Err(self.unsupported()),
            Analytic::Linear { full, .. } => Ok(t.iter().map(|tk| full.eval(*tk)).product()),
            Analytic::Distance => {
                let t = t[0];
                if t < 0.0 {
                    return Ok(0.0);
                }
                if self.sample_dim == 1 {
                    Ok(match self.base {
                        BaseLaw::Uniform01 => 2.0 * (1.0 - t).max(0.0),
                        BaseLaw::Normal01 => (-0.25 * t * t).exp() / std::f64::consts::PI.sqrt(),
                        BaseLaw::Exponential1 => (-t).exp(),
                        BaseLaw::Triangular => {
                            if t > 1.0 {
                                0.0
                            } else {
                                let s = 1.0 - t;
                                8.0 * (s * s * s / 3.0 + t * s * s / 2.0)
                            }
                        }
                        BaseLaw::Discrete(_) => return Err(self.unsupported()),
                    })
                } else {
                    match self.base {
                        BaseLaw::Normal01 => Ok(0.5 * t * (-0.25 * t * t).exp()),
                        BaseLaw::Uniform01 => Ok(unit_square_distance_density(t)),
                        _ => Err(Error::UnsupportedModel(format!(
                            "{self}: planar distance density only for normal01 and uniform01"
                        ))),
                    }
                }
            }
        }
    }

    /// Points in `x` (scalar observations) where `f̄(t, ·)` is not smooth.
    pub fn fbar_breakpoints(&self, t: f64) -> Vec<f64> {
        match &self.analytic {
            Analytic::Linear { partial, .. } => partial
                .iter()
                .zip(&self.coeffs)
                .flat_map(|(p, c)| p.kinks().into_iter().map(move |k| (t - k) / c))
                .collect(),
            Analytic::Distance => self
                .base
                .kinks()
                .iter()
                .flat_map(|k| [k - t, k + t])
                .collect(),
            Analytic::Unavailable(_) => Vec::new(),
        }
    }

    /// Points in `t` where `f̄(·, x)` is not smooth, for a scalar observation `x`.
    pub fn fbar_kinks_in_t(&self, x: f64) -> Vec<f64> {
        match &self.analytic {
            Analytic::Linear { partial, .. } => partial
                .iter()
                .zip(&self.coeffs)
                .flat_map(|(p, c)| p.kinks().into_iter().map(move |k| k + c * x))
                .collect(),
            Analytic::Distance => {
                let mut k = vec![0.0];
                for b in self.base.kinks() {
                    k.extend([b - x, x - b]);
                }
                k
            }
            Analytic::Unavailable(_) => Vec::new(),
        }
    }

    /// Points in `t` where `f_g` is not smooth.
    pub fn fg_kinks(&self) -> Vec<f64> {
        match &self.analytic {
            Analytic::Linear { full, .. } => full.kinks(),
            Analytic::Distance => {
                let mut k = vec![0.0];
                if matches!(self.base, BaseLaw::Uniform01 | BaseLaw::Triangular) {
                    k.push(if self.sample_dim == 1 {
                        1.0
                    } else {
                        2f64.sqrt()
                    });
                    if self.sample_dim == 2 {
                        k.push(1.0);
                    }
                }
                k
            }
            Analytic::Unavailable(_) => Vec::new(),
        }
    }

    /// Range of `t` outside of which `f_g` vanishes (or is negligible), per axis.
    pub fn fg_range(&self) -> (f64, f64) {
        let (lo, hi) = self.base.support();
        match &self.g {
            GSpec::Distance => (0.0, (hi - lo) * (self.sample_dim as f64).sqrt()),
            _ => {
                let mut a = 0.0;
                let mut b = 0.0;
                for c in &self.coeffs {
                    let (p, q) = if *c > 0.0 {
                        (c * lo, c * hi)
                    } else {
                        (c * hi, c * lo)
                    };
                    a += p;
                    b += q;
                }
                if matches!(self.base, BaseLaw::Normal01) {
                    let sd = self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
                    (-10.0 * sd, 10.0 * sd)
                } else {
                    (a, b)
                }
            }
        }
    }

    fn check_point(&self, t: &[f64], x: &[f64]) -> Result<()> {
        if t.len() != self.out_dim() || x.len() != self.sample_dim {
            return Err(Error::Domain(format!(
                "expected t in R^{} and x in R^{}, got {} and {}",
                self.out_dim(),
                self.sample_dim,
                t.len(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// Density of the distance between two independent uniform points of the unit square.
fn unit_square_distance_density(t: f64) -> f64 {
    use std::f64::consts::PI;
    if t <= 0.0 {
        0.0
    } else if t <= 1.0 {
        2.0 * t * (PI - 4.0 * t + t * t)
    } else if t <= 2f64.sqrt() {
        let s = (t * t - 1.0).sqrt();
        2.0 * t * (4.0 * s - (t * t + 2.0 - PI) - 4.0 * (1.0 / t).acos())
    } else {
        0.0
    }
}

impl fmt::Display for SampleModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.base.label())?;
        match &self.g {
            GSpec::Sum => write!(f, "sum:m={}", self.m)?,
            GSpec::LinearCombination(c) => {
                let s: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "lincomb({})", s.join(","))?
            }
            GSpec::Difference => write!(f, "difference")?,
            GSpec::Distance => write!(f, "distance")?,
        }
        if self.sample_dim != 1 {
            write!(f, ":d={}", self.sample_dim)?;
        }
        Ok(())
    }
}

impl FromStr for SampleModel {
    type Err = Error;

    /// Parses strings such as `normal01:sum:m=2`, `uniform01:distance`,
    /// `discrete(0,1;0.5,0.5):sum:m=2`, `normal01:lincomb(1,-2)` or
    /// `normal01:difference:d=2`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let base: BaseLaw = parts
            .next()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Parse(format!("empty model spec `{s}`")))?
            .parse()?;
        let g_txt = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("model spec `{s}` is missing the function g")))?
            .trim();
        let g = match g_txt {
            "sum" => GSpec::Sum,
            "difference" => GSpec::Difference,
            "distance" => GSpec::Distance,
            other => {
                let inner = other
                    .strip_prefix("lincomb(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown function `{other}`")))?;
                let c = inner
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("`{v}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                GSpec::LinearCombination(c)
            }
        };
        let mut m = match &g {
            GSpec::LinearCombination(c) => c.len(),
            _ => 2,
        };
        let mut d = 1;
        for opt in parts {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("option `{opt}` is not key=value")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("option `{opt}`: {e}")))?;
            match k.trim() {
                "m" => m = v,
                "d" => d = v,
                other => return Err(Error::Parse(format!("unknown model option `{other}`"))),
            }
        }
        SampleModel::new(base, g, m, d)
    }
}

/// `n` i.i.d. observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl Sample {
    pub fn from_values(dim: usize, data: Vec<f64>) -> Self {
        assert!(
            dim > 0 && data.len().is_multiple_of(dim),
            "data length must be a multiple of dim"
        );
        Self {
            dim,
            data,
            seed: 0,
            stream: 0,
        }
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self::from_values(1, values.to_vec())
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Raw row-major storage (the observations themselves when `dim == 1`).
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// `n` draws from `model` with the stream for replication 0 of `seed`.
pub fn sample(model: &SampleModel, n: usize, seed: u64) -> Result<Sample> {
    sample_replication(model, n, seed, 0)
}

/// Draws for replication `r` use ChaCha stream `r` of the master seed, so
/// replications are independent and can be generated in any order.
pub fn sample_replication(model: &SampleModel, n: usize, seed: u64, r: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    let dim = model.sample_dim();
    let data = (0..n * dim).map(|_| model.base().draw(&mut rng)).collect();
    Ok(Sample {
        dim,
        data,
        seed,
        stream: r,
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
    fn discrete_sample_stays_in_support() {
        let m = model("discrete(0,1;0.5,0.5):sum:m=2");
        let s = sample(&m, 4, 17).unwrap();
        assert_eq!(s.n(), 4);
        assert!(s.values().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn uniform_sample_mean() {
        let s = sample(&model("uniform01:sum:m=2"), 10_000, 3).unwrap();
        let mean = s.values().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic_and_streams_differ() {
        let m = model("normal01:sum:m=2");
        assert_eq!(sample(&m, 50, 9).unwrap(), sample(&m, 50, 9).unwrap());
        assert_ne!(
            sample_replication(&m, 50, 9, 1).unwrap().values(),
            sample_replication(&m, 50, 9, 2).unwrap().values()
        );
    }

    #[test]
    fn fbar_examples() {
        assert_abs_diff_eq!(
            model("normal01:sum:m=2").fbar(&[0.0], &[0.0]).unwrap(),
            0.797885,
            epsilon = 1e-6
        );
        assert_eq!(
            model("uniform01:sum:m=2").fbar(&[0.5], &[0.2]).unwrap(),
            2.0
        );
        assert_eq!(
            model("uniform01:distance").fbar(&[0.3], &[0.5]).unwrap(),
            4.0
        );
    }

    #[test]
    fn fg_examples() {
        assert_abs_diff_eq!(
            model("normal01:sum:m=2").fg(&[0.0]).unwrap(),
            0.282095,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            model("uniform01:sum:m=2").fg(&[1.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(model("uniform01:distance").fg(&[0.0]).unwrap(), 2.0);
        let dist = model("uniform01:distance");
        for t in [0.0, 0.25, 0.5] {
            assert_eq!(dist.fg(&[t]).unwrap(), 2.0 * (1.0 - t));
        }
    }

    #[test]
    fn discrete_models_refuse_densities() {
        let m = model("discrete(0,1;0.5,0.5):sum:m=2");
        assert!(matches!(
            m.fbar(&[0.0], &[0.0]),
            Err(Error::UnsupportedModel(_))
        ));
        assert!(matches!(m.fg(&[0.0]), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn bad_discrete_probabilities_rejected() {
        assert!("discrete(0,1;0.5,0.6):sum:m=2"
            .parse::<SampleModel>()
            .is_err());
        assert!("discrete(0,1;0.5):sum:m=2".parse::<SampleModel>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "normal01:sum:m=3",
            "uniform01:distance",
            "triangular:difference",
            "normal01:lincomb(1,-2,0.5)",
            "normal01:difference:d=2",
        ] {
            assert_eq!(model(s).to_string(), s);
        }
    }

    #[test]
    fn parse_errors_name_the_problem() {
        assert!(matches!(
            "cauchy:sum".parse::<SampleModel>(),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            "normal01:product".parse::<SampleModel>(),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            "normal01:distance:m=3".parse::<SampleModel>(),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn densities_have_unit_mass() {
        let q = Quadrature::new(1e-10).with_pieces(32);
        for s in [
            "normal01:sum:m=2",
            "uniform01:sum:m=3",
            "triangular:sum:m=2",
            "triangular:sum:m=3",
            "exponential1:sum:m=2",
            "exponential1:difference",
            "uniform01:lincomb(1,0.5)",
            "uniform01:distance",
            "triangular:distance",
            "exponential1:distance",
            "normal01:distance",
        ] {
            let m = model(s);
            let (lo, hi) = m.fg_range();
            let mass = q
                .integrate_with_breaks(|t| m.fg(&[t]).unwrap(), lo, hi, &m.fg_kinks())
                .unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "{s}: mass {mass}");
        }
    }

    #[test]
    fn planar_distance_densities_have_unit_mass() {
        let q = Quadrature::new(1e-9);
        for s in ["uniform01:distance:d=2", "normal01:distance:d=2"] {
            let m = model(s);
            let (lo, hi) = m.fg_range();
            let mass = q
                .integrate_with_breaks(|t| m.fg(&[t]).unwrap(), lo, hi.min(20.0), &m.fg_kinks())
                .unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "{s}: mass {mass}");
        }
    }

    #[test]
    fn fg_is_the_average_conditional_density() {
        for s in [
            "normal01:sum:m=2",
            "uniform01:sum:m=2",
            "uniform01:sum:m=3",
            "triangular:sum:m=2",
            "exponential1:sum:m=2",
            "normal01:lincomb(1,-2,0.5)",
            "uniform01:difference",
            "uniform01:distance",
            "triangular:distance",
            "normal01:distance",
        ] {
            let m = model(s);
            let (lo, hi) = m.fg_range();
            for i in 0..10 {
                let t = lo + (hi - lo) * (i as f64 + 0.37) / 10.0;
                let avg = m
                    .base()
                    .expect(
                        |x| m.fbar(&[t], &[x]).unwrap(),
                        &m.fbar_breakpoints(t),
                        1e-10,
                    )
                    .unwrap()
                    / m.m() as f64;
                let fg = m.fg(&[t]).unwrap();
                assert!((avg - fg).abs() < 1e-6, "{s} at t={t}: {avg} vs {fg}");
            }
        }
    }

    #[test]
    fn planar_distance_consistency() {
        // Midpoint rule over the unit square; the integrand is continuous.
        let m = model("uniform01:distance:d=2");
        let k = 120;
        for t in [0.3, 0.8, 1.2] {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let x = (i as f64 + 0.5) / k as f64;
                    let y = (j as f64 + 0.5) / k as f64;
                    acc += m.fbar(&[t], &[x, y]).unwrap();
                }
            }
            let avg = acc / (k * k) as f64 / 2.0;
            assert!((avg - m.fg(&[t]).unwrap()).abs() < 1e-3, "t={t}: {avg}");
        }
    }

    #[test]
    fn sum_density_matches_grid_convolution() {
        // Independent route: Simpson rule on the self-convolution integral.
        for (s, law) in [
            ("normal01:sum:m=2", BaseLaw::Normal01),
            ("uniform01:sum:m=2", BaseLaw::Uniform01),
        ] {
            let m = model(s);
            for t in [0.2, 0.5, 1.0, 1.5] {
                let t = if matches!(law, BaseLaw::Normal01) {
                    t - 0.75
                } else {
                    t
                };
                // Simpson over y for ∫ f(y) f(t − y) dy, split at the kinks.
                let conv = |a: f64, b: f64| {
                    let k = 2000;
                    let h = (b - a) / k as f64;
                    (0..=k)
                        .map(|i| {
                            let y = a + i as f64 * h;
                            let w = if i == 0 || i == k {
                                1.0
                            } else if i % 2 == 1 {
                                4.0
                            } else {
                                2.0
                            };
                            w * law.density(y).unwrap() * law.density(t - y).unwrap()
                        })
                        .sum::<f64>()
                        * h
                        / 3.0
                };
                let v = if matches!(law, BaseLaw::Uniform01) {
                    let (a, b) = ((t - 1.0).max(0.0), t.min(1.0));
                    conv(a, b)
                } else {
                    conv(-10.0, 10.0)
                };
                assert!((v - m.fg(&[t]).unwrap()).abs() < 1e-6, "{s} t={t}");
            }
        }
    }
}
