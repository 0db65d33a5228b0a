//! Hoeffding decomposition of the local U-statistic.
//!
//! For a symmetric kernel `L` of `m` arguments and the law `P` of one
//! observation, the projection of order `k` is
//!
//! `π_k L(x_1, …, x_k) = (δ_{x_1} − P) × ⋯ × (δ_{x_k} − P) × P^{m−k} L`,
//!
//! expanded here into `2^k` signed partial integrals `P^{m−|S|} L(x_S)`.
//! The U-statistic then splits as
//!
//! `U_n^{(m)}(L) − P^m L = Σ_{k=1}^{m} C(m, k) U_n^{(k)}(π_k L)`.
//!
//! Partial integrals are exact finite sums for discrete laws and iterated
//! adaptive quadrature (at most two nested levels) for continuous ones.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::{BaseLaw, GSpec, Sample, SampleModel};
use crate::numeric::{binomial, falling_factorial};
use crate::quadrature::Quadrature;

/// A symmetric function of `arity` scalar arguments.
pub trait KernelFn {
    fn arity(&self) -> usize;
    fn eval(&self, xs: &[f64]) -> f64;
    /// Points where `y ↦ eval(fixed, y)` is not smooth. Used as quadrature
    /// breakpoints; `fixed.len() < arity`.
    fn breaks(&self, _fixed: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// `K̄_h(t; x_1, …, x_m) = (1/m!) Σ_σ K_h(t − g(x_{σ_1}, …, x_{σ_m}))`.
#[derive(Debug, Clone)]
pub struct SymmetrizedKernel {
    kernel: Kernel,
    h: f64,
    model: SampleModel,
    perms: Vec<Vec<usize>>,
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

impl SymmetrizedKernel {
    pub fn new(kernel: Kernel, h: f64, model: SampleModel) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        if model.sample_dim() != 1 || model.out_dim() != 1 || kernel.dim() != 1 {
            return Err(Error::UnsupportedModel(format!(
                "projections are implemented for scalar observations and scalar g, model is `{model}`"
            )));
        }
        let perms = if model.is_symmetric() {
            vec![(0..model.m()).collect()]
        } else {
            permutations(model.m())
        };
        Ok(Self {
            kernel,
            h,
            model,
            perms,
        })
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn model(&self) -> &SampleModel {
        &self.model
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn evaluate(&self, t: f64, xs: &[f64]) -> f64 {
        let mut buf = [0.0f64; 8];
        let mut total = 0.0;
        for p in &self.perms {
            for (slot, &i) in buf.iter_mut().zip(p) {
                *slot = xs[i];
            }
            total += self
                .kernel
                .scaled1(self.h, t - self.model.g_scalar(&buf[..xs.len()]));
        }
        total / self.perms.len() as f64
    }

    /// The kernel as a function of the observations at a fixed `t`.
    pub fn at(&self, t: f64) -> KernelAt<'_> {
        KernelAt { kbar: self, t }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KernelAt<'a> {
    kbar: &'a SymmetrizedKernel,
    t: f64,
}

impl KernelFn for KernelAt<'_> {
    fn arity(&self) -> usize {
        self.kbar.m()
    }

    fn eval(&self, xs: &[f64]) -> f64 {
        self.kbar.evaluate(self.t, xs)
    }

    fn breaks(&self, fixed: &[f64]) -> Vec<f64> {
        let k = self.kbar;
        let h = k.h;
        let kinks = k.kernel.kinks();
        if kinks.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        match k.model.g() {
            GSpec::Distance => {
                // t − |x − y| = hκ
                for kappa in &kinks {
                    let r = self.t - h * kappa;
                    for x in fixed {
                        out.extend([x - r, x + r]);
                    }
                }
            }
            _ => {
                // Free argument y is the last slot; its coefficient depends on the permutation.
                let c = k.model.coefficients();
                let free_slot = k.m() - 1;
                let mut args = vec![0.0; k.m()];
                args[..fixed.len()].copy_from_slice(fixed);
                for p in &k.perms {
                    let mut offset = 0.0;
                    let mut coef = 0.0;
                    for (pos, &i) in p.iter().enumerate() {
                        if i == free_slot {
                            coef = c[pos];
                        } else if i < fixed.len() {
                            offset += c[pos] * args[i];
                        }
                    }
                    if fixed.len() + 1 == k.m() {
                        for kappa in &kinks {
                            out.push((self.t - offset - h * kappa) / coef);
                        }
                    }
                }
            }
        }
        out
    }
}

/// A constant function of `m` arguments.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel {
    pub m: usize,
    pub value: f64,
}

impl KernelFn for ConstantKernel {
    fn arity(&self) -> usize {
        self.m
    }

    fn eval(&self, _xs: &[f64]) -> f64 {
        self.value
    }
}

/// Projections of one kernel under one law, with the partial integrals
/// memoised by the (sorted) arguments that are held fixed.
pub struct Projection<'a> {
    law: BaseLaw,
    f: &'a dyn KernelFn,
    tol: f64,
    memo: RefCell<HashMap<Vec<u64>, f64>>,
}

impl<'a> Projection<'a> {
    pub fn new(law: &BaseLaw, f: &'a dyn KernelFn) -> Self {
        Self {
            law: law.clone(),
            f,
            tol: 1e-10,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn law(&self) -> &BaseLaw {
        &self.law
    }

    pub fn arity(&self) -> usize {
        self.f.arity()
    }

    /// `P^{m − |fixed|} f(fixed, ·)`.
    pub fn partial(&self, fixed: &[f64]) -> Result<f64> {
        let m = self.f.arity();
        if fixed.len() > m {
            return Err(Error::Domain(format!(
                "{} fixed arguments for a kernel of {m} arguments",
                fixed.len()
            )));
        }
        let mut key: Vec<u64> = fixed.iter().map(|x| x.to_bits()).collect();
        key.sort_unstable();
        if let Some(v) = self.memo.borrow().get(&key) {
            return Ok(*v);
        }
        let v = self.compute_partial(fixed)?;
        self.memo.borrow_mut().insert(key, v);
        Ok(v)
    }

    fn compute_partial(&self, fixed: &[f64]) -> Result<f64> {
        let m = self.f.arity();
        let free = m - fixed.len();
        if free == 0 {
            return Ok(self.f.eval(fixed));
        }
        let mut args = fixed.to_vec();
        args.resize(m, 0.0);
        match &self.law {
            BaseLaw::Discrete(d) => {
                fn rec(
                    f: &dyn KernelFn,
                    d: &crate::models::DiscreteLaw,
                    args: &mut [f64],
                    pos: usize,
                ) -> f64 {
                    if pos == args.len() {
                        return f.eval(args);
                    }
                    let mut acc = 0.0;
                    for (x, p) in d.support.iter().zip(&d.probs) {
                        args[pos] = *x;
                        acc += p * rec(f, d, args, pos + 1);
                    }
                    acc
                }
                Ok(rec(self.f, d, &mut args, fixed.len()))
            }
            law => match free {
                1 => law.expect(
                    |y| {
                        let mut a = args.clone();
                        a[m - 1] = y;
                        self.f.eval(&a)
                    },
                    &self.f.breaks(fixed),
                    self.tol,
                ),
                2 => {
                    let failure = Cell::new(None);
                    let inner_tol = self.tol * 1e-2;
                    let outer = law.expect(
                        |y| {
                            let mut with_y = fixed.to_vec();
                            with_y.push(y);
                            let br = self.f.breaks(&with_y);
                            let r = law.expect(
                                |z| {
                                    let mut a = with_y.clone();
                                    a.push(z);
                                    self.f.eval(&a)
                                },
                                &br,
                                inner_tol,
                            );
                            r.unwrap_or_else(|e| {
                                failure.set(Some(e));
                                0.0
                            })
                        },
                        &self.f.breaks(fixed),
                        self.tol,
                    )?;
                    match failure.take() {
                        Some(e) => Err(e),
                        None => Ok(outer),
                    }
                }
                _ => Err(Error::UnsupportedModel(format!(
                    "continuous projections integrate at most two arguments, {free} requested"
                ))),
            },
        }
    }

    /// `π_k f(x_1, …, x_k)`.
    pub fn pi(&self, k: usize, xs: &[f64]) -> Result<f64> {
        if k > self.f.arity() {
            return Err(Error::Domain(format!(
                "projection order {k} exceeds kernel arity {}",
                self.f.arity()
            )));
        }
        if xs.len() != k {
            return Err(Error::Domain(format!(
                "π_{k} takes {k} arguments, got {}",
                xs.len()
            )));
        }
        let mut total = 0.0;
        let mut subset = Vec::with_capacity(k);
        for mask in 0u32..(1 << k) {
            subset.clear();
            for (i, x) in xs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    subset.push(*x);
                }
            }
            let sign = if (k - subset.len()).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            total += sign * self.partial(&subset)?;
        }
        Ok(total)
    }
}

/// `π_k K̄_h(t; x_1, …, x_k)`.
pub fn project(kbar: &SymmetrizedKernel, k: usize, t: f64, xs: &[f64]) -> Result<f64> {
    let at = kbar.at(t);
    Projection::new(kbar.model().base(), &at).pi(k, xs)
}

/// `π_ℓ f` viewed as a kernel of `ℓ` arguments.
pub struct ProjectedKernel<'p, 'a> {
    projection: &'p Projection<'a>,
    order: usize,
}

impl<'p, 'a> ProjectedKernel<'p, 'a> {
    pub fn new(projection: &'p Projection<'a>, order: usize) -> Self {
        Self { projection, order }
    }
}

impl KernelFn for ProjectedKernel<'_, '_> {
    fn arity(&self) -> usize {
        self.order
    }

    fn eval(&self, xs: &[f64]) -> f64 {
        self.projection.pi(self.order, xs).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingDecomposition {
    pub t: f64,
    /// `terms[k] = U_n^{(k)}(π_k f)`, with `terms[0] = P^m f`.
    pub terms: Vec<f64>,
    /// `C(m, k)`.
    pub weights: Vec<f64>,
    /// `U_n^{(m)}(f) − P^m f`.
    pub lhs: f64,
    pub residual: f64,
}

/// `U_n^{(k)}(φ)` over ordered distinct `k`-tuples of `values`.
pub fn u_statistic_order(
    values: &[f64],
    k: usize,
    phi: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let n = values.len();
    if n < k {
        return Err(Error::InsufficientSample { needed: k, got: n });
    }
    if k == 0 {
        return phi(&[]);
    }
    fn rec(
        values: &[f64],
        k: usize,
        used: &mut [bool],
        cur: &mut Vec<f64>,
        phi: &mut dyn FnMut(&[f64]) -> Result<f64>,
    ) -> Result<f64> {
        if cur.len() == k {
            return phi(cur);
        }
        let mut acc = 0.0;
        for i in 0..values.len() {
            if !used[i] {
                used[i] = true;
                cur.push(values[i]);
                acc += rec(values, k, used, cur, phi)?;
                cur.pop();
                used[i] = false;
            }
        }
        Ok(acc)
    }
    let total = rec(
        values,
        k,
        &mut vec![false; n],
        &mut Vec::with_capacity(k),
        phi,
    )?;
    Ok(total / falling_factorial(n, k))
}

/// All terms of the decomposition of `U_n^{(m)}(f)` for the given data.
pub fn decompose_values(
    values: &[f64],
    projection: &Projection<'_>,
    t: f64,
) -> Result<HoeffdingDecomposition> {
    let m = projection.arity();
    if values.len() < m {
        return Err(Error::InsufficientSample {
            needed: m,
            got: values.len(),
        });
    }
    let mean = projection.partial(&[])?;
    let mut terms = vec![mean];
    for k in 1..=m {
        terms.push(u_statistic_order(values, k, &mut |xs| {
            projection.pi(k, xs)
        })?);
    }
    let full = u_statistic_order(values, m, &mut |xs| Ok(projection.f.eval(xs)))?;
    let weights: Vec<f64> = (0..=m).map(|k| binomial(m, k)).collect();
    let lhs = full - mean;
    let rhs: f64 = (1..=m).map(|k| weights[k] * terms[k]).sum();
    Ok(HoeffdingDecomposition {
        t,
        terms,
        weights,
        lhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Hoeffding decomposition of the local U-statistic at `t`.
pub fn decompose(
    sample: &Sample,
    kbar: &SymmetrizedKernel,
    t: f64,
) -> Result<HoeffdingDecomposition> {
    if sample.dim() != 1 {
        return Err(Error::Domain(
            "decomposition needs scalar observations".into(),
        ));
    }
    let at = kbar.at(t);
    let projection = Projection::new(kbar.model().base(), &at);
    decompose_values(sample.values(), &projection, t)
}

/// `max_{x_2, …, x_k} |E π_k f(X, x_2, …, x_k)|` over the support of a discrete law.
pub fn check_degeneracy(projection: &Projection<'_>, k: usize) -> Result<f64> {
    let BaseLaw::Discrete(d) = projection.law() else {
        return Err(Error::UnsupportedModel(
            "exact degeneracy checks need a discrete law".into(),
        ));
    };
    if k == 0 || k > projection.arity() {
        return Err(Error::Domain(format!(
            "degeneracy is defined for 1 ≤ k ≤ {}, got {k}",
            projection.arity()
        )));
    }
    let s = d.support.len();
    let mut worst: f64 = 0.0;
    let combos = s.pow(k as u32 - 1);
    let mut xs = vec![0.0; k];
    for code in 0..combos {
        let mut c = code;
        for slot in xs.iter_mut().skip(1) {
            *slot = d.support[c % s];
            c /= s;
        }
        let mut e = 0.0;
        for (x, p) in d.support.iter().zip(&d.probs) {
            xs[0] = *x;
            e += p * projection.pi(k, &xs)?;
        }
        worst = worst.max(e.abs());
    }
    Ok(worst)
}

/// `U_n^{(2)}(π₂K̄) = U_n − 2·mean_i P K̄(X_i, ·) + P²K̄` for `m = 2`, given the
/// already computed U-statistic `u_n`.
pub fn degenerate_term_m2(values: &[f64], projection: &Projection<'_>, u_n: f64) -> Result<f64> {
    if projection.arity() != 2 {
        return Err(Error::Domain("the shortcut is specific to m = 2".into()));
    }
    let mean = projection.partial(&[])?;
    let mut lin = 0.0;
    for x in values {
        lin += projection.partial(&[*x])?;
    }
    Ok(u_n - 2.0 * lin / values.len() as f64 + mean)
}

fn kernel_integral(
    kernel: &Kernel,
    mut breaks: Vec<f64>,
    f: impl Fn(f64) -> Result<f64>,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    let r = kernel.support_radius().unwrap_or(kernel.axis_radius());
    breaks.extend(kernel.kinks());
    let failure = Cell::new(None);
    let v = Quadrature::new(1e-11).integrate_with_breaks(
        |v| {
            let k = weight(v);
            if k == 0.0 {
                return 0.0;
            }
            match f(v) {
                Ok(y) => k * y,
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

/// `π₁K̄_h(t, x) = (1/m) ∫ (f̄(t − u, x) − E f̄(t − u, X)) K_h(u) du`.
pub fn pi1_convolution(
    model: &SampleModel,
    kernel: &Kernel,
    h: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    let m = model.m() as f64;
    let breaks: Vec<f64> = model
        .fbar_kinks_in_t(x)
        .into_iter()
        .chain(model.fg_kinks())
        .map(|k| (t - k) / h)
        .collect();
    let v = kernel_integral(
        kernel,
        breaks,
        |v| {
            let s = t - h * v;
            Ok(model.fbar(&[s], &[x])? - m * model.fg(&[s])?)
        },
        |v| kernel.eval1(v),
    )?;
    Ok(v / m)
}

/// Both sides of `√n·m·U_n^{(1)}(π₁K̄_{λh}) = (v̄_n * K_{λh})(t)`.
pub fn linear_term_vs_smoothed_empirical(
    sample: &Sample,
    model: &SampleModel,
    kernel: &Kernel,
    lambda: f64,
    h_n: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let h = lambda * h_n;
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    if sample.dim() != 1 || model.out_dim() != 1 {
        return Err(Error::UnsupportedModel(
            "identity check needs scalar data and g".into(),
        ));
    }
    let n = sample.n() as f64;
    let m = model.m() as f64;
    let mut lin = 0.0;
    for x in sample.values() {
        lin += pi1_convolution(model, kernel, h, t, *x)?;
    }
    let lhs = n.sqrt() * m * lin / n;

    let mut breaks: Vec<f64> = model.fg_kinks();
    for x in sample.values() {
        breaks.extend(model.fbar_kinks_in_t(*x));
    }
    let breaks = breaks.into_iter().map(|k| (t - k) / h).collect();
    let rhs = kernel_integral(
        kernel,
        breaks,
        |v| {
            let s = t - h * v;
            let fg = model.fg(&[s])?;
            let mut acc = 0.0;
            for x in sample.values() {
                acc += model.fbar(&[s], &[*x])? - m * fg;
            }
            Ok(acc / n.sqrt())
        },
        |v| kernel.eval1(v),
    )?;
    Ok((lhs, rhs))
}

/// Monte Carlo second moment of `π_k K̄_h(t, X_1, …, X_k)` against the bound
/// `((K²)_h * f_g)(t) / h = E K_h(t − g)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    pub lhs: f64,
    pub standard_error: f64,
    pub rhs: f64,
}

impl VarianceBound {
    /// `lhs ≤ rhs + 3·se`.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.standard_error
    }
}

pub fn projection_variance_bound(
    model: &SampleModel,
    kernel: &Kernel,
    h: f64,
    k: usize,
    t: f64,
    draws: usize,
    seed: u64,
) -> Result<VarianceBound> {
    if !model.base().is_continuous() || !model.has_analytic() {
        return Err(Error::UnsupportedModel(format!(
            "variance bound needs a continuous model with analytic f_g, got `{model}`"
        )));
    }
    if model.m() > 3 {
        return Err(Error::UnsupportedModel(
            "variance bound is implemented for m ≤ 3".into(),
        ));
    }
    if draws < 2 {
        return Err(Error::config(
            "draws",
            "need at least two Monte Carlo draws",
        ));
    }
    let kbar = SymmetrizedKernel::new(kernel.clone(), h, model.clone())?;
    let at = kbar.at(t);
    let projection = Projection::new(model.base(), &at);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut xs = vec![0.0; k];
    for _ in 0..draws {
        for x in xs.iter_mut() {
            *x = model.base().draw(&mut rng);
        }
        let v = projection.pi(k, &xs)?;
        let v2 = v * v;
        sum += v2;
        sum_sq += v2 * v2;
    }
    let nd = draws as f64;
    let lhs = sum / nd;
    let var = ((sum_sq / nd - lhs * lhs) * nd / (nd - 1.0)).max(0.0);
    let breaks = model.fg_kinks().into_iter().map(|c| (t - c) / h).collect();
    let rhs = kernel_integral(
        kernel,
        breaks,
        |v| model.fg(&[t - h * v]),
        |v| {
            let kv = kernel.eval1(v);
            kv * kv
        },
    )? / h;
    Ok(VarianceBound {
        lhs,
        standard_error: (var / nd).sqrt(),
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_model() -> SampleModel {
        "discrete(0,1;0.5,0.5):sum:m=2".parse().unwrap()
    }

    #[test]
    fn worked_fixture() {
        let kbar = SymmetrizedKernel::new(Kernel::uniform(), 1.0, coin_model()).unwrap();
        assert_eq!(project(&kbar, 0, 0.5, &[]).unwrap(), 0.75);
        assert_eq!(project(&kbar, 1, 0.5, &[0.0]).unwrap(), 0.25);
        assert_eq!(project(&kbar, 1, 0.5, &[1.0]).unwrap(), -0.25);
        assert_eq!(project(&kbar, 2, 0.5, &[0.0, 0.0]).unwrap(), -0.25);
        assert_eq!(project(&kbar, 2, 0.5, &[0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(project(&kbar, 2, 0.5, &[1.0, 1.0]).unwrap(), -0.25);
        let dec = decompose(&Sample::from_scalars(&[0.0, 1.0, 1.0]), &kbar, 0.5).unwrap();
        assert!((dec.lhs + 1.0 / 12.0).abs() < 1e-15);
        assert!((2.0 * dec.terms[1] + 1.0 / 6.0).abs() < 1e-15);
        assert!((dec.terms[2] - 1.0 / 12.0).abs() < 1e-15);
        assert!(dec.residual < 1e-15);
    }

    #[test]
    fn degeneracy_on_coin() {
        let kbar = SymmetrizedKernel::new(Kernel::uniform(), 1.0, coin_model()).unwrap();
        let at = kbar.at(0.5);
        let p = Projection::new(kbar.model().base(), &at);
        assert_eq!(check_degeneracy(&p, 1).unwrap(), 0.0);
        assert_eq!(check_degeneracy(&p, 2).unwrap(), 0.0);
    }

    #[test]
    fn constants_have_no_fluctuation() {
        let c = ConstantKernel { m: 3, value: 2.5 };
        let law: BaseLaw = "discrete(0,1,3;0.2,0.3,0.5)".parse().unwrap();
        let p = Projection::new(&law, &c);
        for k in 1..=3 {
            assert_eq!(p.pi(k, &vec![1.0; k]).unwrap(), 0.0);
            assert_eq!(check_degeneracy(&p, k).unwrap(), 0.0);
        }
        let dec = decompose_values(&[0.0, 3.0, 1.0, 1.0], &p, 0.0).unwrap();
        assert_eq!(dec.residual, 0.0);
        let err = p.pi(4, &[0.0; 4]);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn n_equals_m() {
        let model: SampleModel = "discrete(0,1,2;0.2,0.3,0.5):lincomb(1,-1,0.5)"
            .parse()
            .unwrap();
        let kbar = SymmetrizedKernel::new(Kernel::epanechnikov(), 0.7, model).unwrap();
        let dec = decompose(&Sample::from_scalars(&[2.0, 0.0, 1.0]), &kbar, 0.3).unwrap();
        assert!(dec.residual <= 1e-12);
    }

    #[test]
    fn symmetrization_is_permutation_invariant() {
        let model: SampleModel = "normal01:lincomb(1,-2,0.5)".parse().unwrap();
        let kbar = SymmetrizedKernel::new(Kernel::gaussian(), 0.5, model).unwrap();
        let a = kbar.evaluate(0.2, &[0.1, -0.4, 0.9]);
        for p in permutations(3) {
            let xs: Vec<f64> = p.iter().map(|i| [0.1, -0.4, 0.9][*i]).collect();
            assert!((kbar.evaluate(0.2, &xs) - a).abs() < 1e-15);
        }
    }

    #[test]
    fn pi0_is_the_smoothed_density() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let kbar = SymmetrizedKernel::new(Kernel::gaussian(), 0.2, model.clone()).unwrap();
        let p0 = project(&kbar, 0, 0.0, &[]).unwrap();
        let mean = crate::estimator::mean_term(&model, &Kernel::gaussian(), &[0.0], 0.2).unwrap();
        assert!((p0 - mean).abs() < 1e-8, "{p0} vs {mean}");
    }

    #[test]
    fn pi1_paths_agree() {
        for (spec, kernel) in [
            ("normal01:sum:m=2", Kernel::gaussian()),
            ("uniform01:sum:m=2", Kernel::uniform()),
            ("triangular:difference", Kernel::epanechnikov()),
        ] {
            let model: SampleModel = spec.parse().unwrap();
            let kbar = SymmetrizedKernel::new(kernel.clone(), 0.3, model.clone()).unwrap();
            for (t, x) in [(0.0, 0.1), (0.7, 0.5), (-0.2, 0.9)] {
                let raw = project(&kbar, 1, t, &[x]).unwrap();
                let conv = pi1_convolution(&model, &kernel, 0.3, t, x).unwrap();
                assert!(
                    (raw - conv).abs() < 1e-8,
                    "{spec} t={t} x={x}: {raw} vs {conv}"
                );
            }
        }
    }

    #[test]
    fn nesting_is_idempotent_and_annihilates_lower_orders() {
        let model: SampleModel = "discrete(0,1,2;0.5,0.25,0.25):sum:m=3".parse().unwrap();
        let kbar = SymmetrizedKernel::new(Kernel::uniform(), 1.5, model.clone()).unwrap();
        let at = kbar.at(2.0);
        let outer = Projection::new(model.base(), &at);
        for l in 1..=3usize {
            let pl = ProjectedKernel::new(&outer, l);
            let inner = Projection::new(model.base(), &pl);
            let xs = [0.0, 2.0, 1.0];
            for k in 1..=l {
                let nested = inner.pi(k, &xs[..k]).unwrap();
                let expected = if k == l {
                    outer.pi(l, &xs[..l]).unwrap()
                } else {
                    0.0
                };
                assert!((nested - expected).abs() < 1e-14, "k={k} l={l}");
            }
        }
    }

    #[test]
    fn variance_bound_normal_sum() {
        let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
        let b =
            projection_variance_bound(&model, &Kernel::gaussian(), 0.2, 1, 0.0, 4000, 1).unwrap();
        assert!(b.holds(), "{b:?}");
        let zero = Kernel::mixture(vec![(0.0, Kernel::gaussian())]).unwrap();
        let z = projection_variance_bound(&model, &zero, 0.2, 2, 0.0, 100, 1).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }

    #[test]
    fn continuous_arity_limit() {
        let model: SampleModel = "uniform01:sum:m=4".parse().unwrap();
        let kbar = SymmetrizedKernel::new(Kernel::gaussian(), 0.5, model).unwrap();
        assert!(matches!(
            project(&kbar, 1, 2.0, &[0.5]),
            Err(Error::UnsupportedModel(_))
        ));
    }
}
