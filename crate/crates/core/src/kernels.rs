//! Kernels on R^d and the volume-scaling convention.
//!
//! Bandwidths here scale *volume*, not length: `K_h(t) = h^{-1} K(t / h^{1/d})`.
//! In one dimension this is the familiar `K(t/h)/h`; in `d` dimensions the
//! per-axis length scale is `h^{1/d}`. Most KDE software scales per axis, so
//! a bandwidth copied from elsewhere has to be raised to the power `d` first.
//!
//! Indicator kernels use closed sets: a point exactly on the boundary counts.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Below this magnitude a kernel value is treated as zero when truncating domains.
pub const NEGLIGIBLE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `1` on `[-1/2, 1/2]`.
    Uniform,
    Epanechnikov,
    Gaussian,
    /// `I_D / Vol(D)` with `D` the closed Euclidean unit ball.
    IndicatorBall,
    /// Even polynomial `Σ c_j u^{2j}` times a one-dimensional base kernel.
    Poly {
        base: Box<Kernel>,
        coeffs: Vec<f64>,
    },
    Product(Vec<Kernel>),
    Mixture(Vec<(f64, Kernel)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    name: String,
    dim: usize,
    shape: Shape,
    order: u32,
    support_radius: Option<f64>,
    axis_radius: f64,
}

/// Volume of the Euclidean unit ball in R^d.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0 + 1.0),
    }
}

/// Per-axis length scale `h^{1/d}` belonging to the volume bandwidth `h`.
pub fn length_scale(h: f64, dim: usize) -> f64 {
    match dim {
        1 => h,
        2 => h.sqrt(),
        3 => h.cbrt(),
        _ => h.powf(1.0 / dim as f64),
    }
}

/// Closed-ball membership shared by every indicator evaluation so that the
/// naive sum and the counting paths agree bit for bit.
pub fn within_closed_ball(u: &[f64], radius: f64) -> bool {
    if u.len() == 1 {
        u[0].abs() <= radius
    } else {
        u.iter().map(|x| x * x).sum::<f64>() <= radius * radius
    }
}

fn scan_axis_radius(f: impl Fn(f64) -> f64) -> f64 {
    let step = 0.01;
    let mut last = 0.0;
    let mut u = 0.0;
    while u <= 64.0 {
        if f(u).abs() >= NEGLIGIBLE || f(-u).abs() >= NEGLIGIBLE {
            last = u;
        }
        u += step;
    }
    last + step
}

impl Kernel {
    fn builtin(name: &str, dim: usize, shape: Shape, support_radius: Option<f64>) -> Self {
        let mut k = Kernel {
            name: name.to_string(),
            dim,
            shape,
            order: 2,
            support_radius,
            axis_radius: 0.0,
        };
        k.axis_radius = match support_radius {
            Some(r) => r,
            None => scan_axis_radius(|u| k.eval1_unchecked(u)),
        };
        k
    }

    /// Uniform kernel on `[-1/2, 1/2]`.
    pub fn uniform() -> Self {
        Self::builtin("uniform", 1, Shape::Uniform, Some(0.5))
    }

    pub fn epanechnikov() -> Self {
        Self::builtin("epanechnikov", 1, Shape::Epanechnikov, Some(1.0))
    }

    pub fn gaussian() -> Self {
        Self::builtin("gaussian", 1, Shape::Gaussian, None)
    }

    /// Fourth-order Gaussian-based kernel `½(3 − u²)φ(u)`.
    pub fn gaussian4() -> Self {
        make_higher_order(&Self::gaussian(), 4).expect("gaussian moment system is regular")
    }

    /// `I_D / Vol(D)` for the closed unit ball `D` of R^d. In one dimension
    /// this is `½·I[-1, 1]`.
    pub fn indicator_ball(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self::builtin("indicator-ball", dim, Shape::IndicatorBall, Some(1.0))
    }

    /// Product of one-dimensional kernels, one per axis.
    pub fn product(factors: Vec<Kernel>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|k| k.dim != 1) {
            return Err(Error::Construction(
                "product kernels need one or more one-dimensional factors".into(),
            ));
        }
        let dim = factors.len();
        let order = factors.iter().map(|k| k.order).min().unwrap_or(2);
        let support = factors
            .iter()
            .map(|k| k.support_radius)
            .collect::<Option<Vec<_>>>()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt());
        let axis_radius = factors.iter().map(|k| k.axis_radius).fold(0.0, f64::max);
        let name = factors
            .iter()
            .map(|k| k.name.as_str())
            .collect::<Vec<_>>()
            .join("x");
        Ok(Kernel {
            name,
            dim,
            shape: Shape::Product(factors),
            order,
            support_radius: support,
            axis_radius,
        })
    }

    /// Linear combination `Σ w_i K_i`. No normalisation is imposed.
    pub fn mixture(parts: Vec<(f64, Kernel)>) -> Result<Self> {
        let Some(dim) = parts.first().map(|(_, k)| k.dim) else {
            return Err(Error::Construction("empty mixture".into()));
        };
        if parts.iter().any(|(_, k)| k.dim != dim) {
            return Err(Error::Construction(
                "mixture parts differ in dimension".into(),
            ));
        }
        let order = parts.iter().map(|(_, k)| k.order).min().unwrap_or(2);
        let support = parts
            .iter()
            .map(|(_, k)| k.support_radius)
            .collect::<Option<Vec<_>>>()
            .map(|r| r.into_iter().fold(0.0, f64::max));
        let axis_radius = parts.iter().map(|(_, k)| k.axis_radius).fold(0.0, f64::max);
        Ok(Kernel {
            name: "mixture".into(),
            dim,
            shape: Shape::Mixture(parts),
            order,
            support_radius: support,
            axis_radius,
        })
    }

    /// Looks a kernel up by its CLI name. For `dim > 1` the one-dimensional
    /// names are turned into product kernels.
    pub fn from_name(name: &str, dim: usize) -> Result<Self> {
        let one = match name {
            "uniform" => Self::uniform(),
            "epanechnikov" => Self::epanechnikov(),
            "gaussian" => Self::gaussian(),
            "gaussian4" => Self::gaussian4(),
            "indicator-ball" => return Ok(Self::indicator_ball(dim)),
            other => {
                return Err(Error::Parse(format!(
                    "unknown kernel `{other}` (expected uniform, epanechnikov, gaussian, gaussian4, indicator-ball)"
                )))
            }
        };
        if dim == 1 {
            Ok(one)
        } else {
            Self::product(vec![one; dim])
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Moment order `k`: moments of orders `1..k` vanish.
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    /// Half-width of an axis-aligned box outside of which `|K| < 1e-14`.
    pub fn axis_radius(&self) -> f64 {
        self.axis_radius
    }

    /// Whether the kernel is continuous (binned evaluation is accurate).
    pub fn is_continuous(&self) -> bool {
        match &self.shape {
            Shape::Uniform | Shape::IndicatorBall => false,
            Shape::Epanechnikov | Shape::Gaussian => true,
            Shape::Poly { base, .. } => base.is_continuous(),
            Shape::Product(f) => f.iter().all(Kernel::is_continuous),
            Shape::Mixture(p) => p.iter().all(|(_, k)| k.is_continuous()),
        }
    }

    /// Non-smooth points of a one-dimensional kernel, in units of its argument.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Uniform => vec![-0.5, 0.5],
            Shape::Epanechnikov | Shape::IndicatorBall => vec![-1.0, 1.0],
            Shape::Gaussian => Vec::new(),
            Shape::Poly { base, .. } => base.kinks(),
            Shape::Product(_) => Vec::new(),
            Shape::Mixture(p) => p.iter().flat_map(|(_, k)| k.kinks()).collect(),
        }
    }

    /// The constant value `K` takes on its support, for indicator kernels.
    pub fn indicator_level(&self) -> Option<f64> {
        match &self.shape {
            Shape::Uniform => Some(1.0),
            Shape::IndicatorBall => Some(1.0 / unit_ball_volume(self.dim)),
            _ => None,
        }
    }

    /// Whether `K_h(u) ≠ 0`, for indicator kernels. Shared by [`Kernel::eval_scaled`]
    /// and the counting paths.
    pub fn indicator_hit(&self, h: f64, u: &[f64]) -> bool {
        match &self.shape {
            Shape::Uniform => (u[0] / h).abs() <= 0.5,
            Shape::IndicatorBall => within_closed_ball(u, length_scale(h, self.dim)),
            _ => false,
        }
    }

    /// `K(x)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.shape {
            Shape::Uniform => {
                if x[0].abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Epanechnikov => {
                let v = 1.0 - x[0] * x[0];
                if v > 0.0 {
                    0.75 * v
                } else {
                    0.0
                }
            }
            Shape::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * x[0] * x[0]).exp(),
            Shape::IndicatorBall => {
                if within_closed_ball(x, 1.0) {
                    1.0 / unit_ball_volume(self.dim)
                } else {
                    0.0
                }
            }
            Shape::Poly { base, coeffs } => {
                let u2 = x[0] * x[0];
                let mut p = 0.0;
                for c in coeffs.iter().rev() {
                    p = p * u2 + c;
                }
                p * base.evaluate(x)
            }
            Shape::Product(factors) => factors
                .iter()
                .zip(x)
                .map(|(k, xi)| k.evaluate(std::slice::from_ref(xi)))
                .product(),
            Shape::Mixture(parts) => parts.iter().map(|(w, k)| w * k.evaluate(x)).sum(),
        }
    }

    fn eval1_unchecked(&self, u: f64) -> f64 {
        self.evaluate(&[u])
    }

    /// `K(u)` for one-dimensional kernels.
    pub fn eval1(&self, u: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.eval1_unchecked(u)
    }

    /// `K_h(t) = h^{-1} K(t / h^{1/d})`.
    pub fn eval_scaled(&self, h: f64, t: &[f64]) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        if t.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has dimension {} but kernel `{}` lives on R^{}",
                t.len(),
                self.name,
                self.dim
            )));
        }
        Ok(self.scaled(h, t))
    }

    /// Unchecked `K_h(t)`; `h > 0` and `t.len() == dim` are the caller's job.
    #[inline]
    pub fn scaled(&self, h: f64, t: &[f64]) -> f64 {
        match &self.shape {
            Shape::Uniform | Shape::IndicatorBall => {
                if self.indicator_hit(h, t) {
                    self.indicator_level().unwrap_or(0.0) / h
                } else {
                    0.0
                }
            }
            _ if self.dim == 1 => self.evaluate(&[t[0] / h]) / h,
            _ => {
                let s = length_scale(h, self.dim);
                let u: Vec<f64> = t.iter().map(|x| x / s).collect();
                self.evaluate(&u) / h
            }
        }
    }

    /// `K_h(u)` for one-dimensional kernels.
    #[inline]
    pub fn scaled1(&self, h: f64, u: f64) -> f64 {
        self.scaled(h, std::slice::from_ref(&u))
    }

    fn is_even(&self) -> bool {
        (1..=40).all(|i| {
            let u = 0.0731 * i as f64;
            (self.eval1(u) - self.eval1(-u)).abs() <= 1e-15 * (1.0 + self.eval1(u).abs())
        })
    }
}

/// Table of mixed moments `∫ t^s K(t) dt` indexed by multi-index `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub entries: Vec<(Vec<u32>, f64)>,
}

impl MomentTable {
    pub fn get(&self, index: &[u32]) -> Option<f64> {
        self.entries
            .iter()
            .find(|(s, _)| s.as_slice() == index)
            .map(|(_, v)| *v)
    }

    /// Whether all moments of total order `1..order` vanish within `tol`, the
    /// zeroth moment is one, and some moment of total order `order` is nonzero.
    pub fn certifies_order(&self, order: u32, tol: f64) -> bool {
        let mass_ok = self
            .entries
            .iter()
            .filter(|(s, _)| s.iter().sum::<u32>() == 0)
            .all(|(_, v)| (v - 1.0).abs() <= tol);
        let low_ok = self
            .entries
            .iter()
            .filter(|(s, _)| (1..order).contains(&s.iter().sum::<u32>()))
            .all(|(_, v)| v.abs() <= tol);
        let top_nonzero = self
            .entries
            .iter()
            .filter(|(s, _)| s.iter().sum::<u32>() == order)
            .any(|(_, v)| v.abs() > tol);
        mass_ok && low_ok && top_nonzero
    }
}

fn multi_indices(dim: usize, max_order: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for s in 0..=left {
            cur[pos] = s;
            rec(pos + 1, left - s, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, max_order, &mut cur, &mut out);
    out.sort_by_key(|s| (s.iter().sum::<u32>(), std::cmp::Reverse(s.clone())));
    out
}

/// All mixed moments of total order `≤ max_order`, by adaptive quadrature to
/// absolute tolerance `1e-10`. Supports `d ∈ {1, 2}`.
pub fn check_moments(kernel: &Kernel, max_order: u32) -> Result<MomentTable> {
    let quad = Quadrature::new(1e-10).with_pieces(16);
    let r = kernel.axis_radius();
    let mut entries = Vec::new();
    match kernel.dim() {
        1 => {
            let mut breaks = kernel.kinks();
            breaks.push(0.0);
            for s in 0..=max_order {
                let v = quad.integrate_with_breaks(
                    |u| u.powi(s as i32) * kernel.eval1(u),
                    -r,
                    r,
                    &breaks,
                )?;
                entries.push((vec![s], v));
            }
        }
        2 => {
            let ball = matches!(kernel.shape, Shape::IndicatorBall);
            for s in multi_indices(2, max_order) {
                let (a, b) = (s[0] as i32, s[1] as i32);
                let v = quad.integrate_2d(
                    |x, y| x.powi(a) * y.powi(b) * kernel.evaluate(&[x, y]),
                    -r,
                    r,
                    &[0.0],
                    |_| -r,
                    |_| r,
                    |x| {
                        if ball {
                            let w = (1.0 - x * x).max(0.0).sqrt();
                            vec![-w, 0.0, w]
                        } else {
                            vec![0.0]
                        }
                    },
                )?;
                entries.push((s, v));
            }
        }
        d => {
            return Err(Error::Domain(format!(
                "moment quadrature supports d = 1 or 2, got {d}"
            )))
        }
    }
    Ok(MomentTable { entries })
}

/// Builds the order-`k` kernel `p(u)K(u)` with `p` the even polynomial of
/// degree `k − 2` for which the moments `1..k` vanish and the mass is one.
/// The result may be negative.
pub fn make_higher_order(kernel: &Kernel, k: u32) -> Result<Kernel> {
    if kernel.dim() != 1 {
        return Err(Error::Construction(
            "higher-order construction is one-dimensional; use product kernels for d > 1".into(),
        ));
    }
    if kernel.order() != 2 {
        return Err(Error::Construction(format!(
            "base kernel must have order 2, `{}` has order {}",
            kernel.name(),
            kernel.order()
        )));
    }
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::Construction(format!(
            "order must be even and ≥ 2, got {k}"
        )));
    }
    if !kernel.is_even() {
        return Err(Error::Construction(format!(
            "kernel `{}` is not even",
            kernel.name()
        )));
    }
    if k == 2 {
        return Ok(kernel.clone());
    }
    let moments = check_moments(kernel, 2 * k - 2)?;
    let size = (k / 2) as usize;
    let mu = |p: usize| moments.get(&[p as u32]).unwrap_or(f64::NAN);
    let a = DMatrix::from_fn(size, size, |i, j| mu(2 * i + 2 * j));
    let mut rhs = DVector::zeros(size);
    rhs[0] = 1.0;
    let coeffs = a
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Construction("singular moment system".into()))?;
    let mut out = Kernel {
        name: format!("{}{}", kernel.name(), k),
        dim: 1,
        shape: Shape::Poly {
            base: Box::new(kernel.clone()),
            coeffs: coeffs.iter().copied().collect(),
        },
        order: k,
        support_radius: kernel.support_radius(),
        axis_radius: 0.0,
    };
    out.axis_radius = match out.support_radius {
        Some(r) => r,
        None => scan_axis_radius(|u| out.eval1_unchecked(u)),
    };
    Ok(out)
}
