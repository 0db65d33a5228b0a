use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hoeffding::{check_degeneracy, decompose, KernelFn, Projection, SymmetrizedKernel};
use crate::kernels::Kernel;
use crate::models::{BaseLaw, DiscreteLaw, GSpec, Sample, SampleModel};

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

const ATOMS: [f64; 7] = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
const COEFFICIENTS: [f64; 4] = [-1.0, 0.5, 1.0, 2.0];
const KERNELS: [&str; 3] = ["uniform", "epanechnikov", "gaussian"];

fn default_cases() -> usize {
    100
}
fn default_max_n() -> usize {
    6
}
fn default_max_support() -> usize {
    4
}
fn default_max_m() -> usize {
    3
}

/// Settings for the randomized exactness check on discrete models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoeffdingSpec {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_max_support")]
    pub max_support: usize,
    #[serde(default = "default_max_m")]
    pub max_m: usize,
}

impl Default for HoeffdingSpec {
    fn default() -> Self {
        Self {
            cases: default_cases(),
            seed: 0,
            max_n: default_max_n(),
            max_support: default_max_support(),
            max_m: default_max_m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoeffdingCase {
    pub id: usize,
    pub model: String,
    pub kernel: String,
    pub h: f64,
    pub t: f64,
    pub n: usize,
    pub residual: f64,
    /// Largest `|E π_k K̄(X, x_2, …, x_k)|` over `k` and the support.
    pub degeneracy: f64,
    pub pass: bool,
}

/// Decomposes random data from random discrete models and records the
/// identity residual and the degeneracy violation of every projection.
pub fn verify_hoeffding(spec: &HoeffdingSpec) -> Result<Vec<HoeffdingCase>> {
    if !(2..=3).contains(&spec.max_m) {
        return Err(Error::config("max_m", "must be 2 or 3"));
    }
    if spec.max_n < spec.max_m || spec.max_n > 8 {
        return Err(Error::config("max_n", "must lie between max_m and 8"));
    }
    if !(1..=ATOMS.len()).contains(&spec.max_support) {
        return Err(Error::config(
            "max_support",
            format!("must lie in 1..={}", ATOMS.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.cases)
        .map(|id| {
            let size = rng.gen_range(1..=spec.max_support);
            let mut support: Vec<f64> = Vec::with_capacity(size);
            while support.len() < size {
                let a = ATOMS[rng.gen_range(0..ATOMS.len())];
                if !support.contains(&a) {
                    support.push(a);
                }
            }
            support.sort_by(f64::total_cmp);
            let weights: Vec<f64> = (0..size).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let law = BaseLaw::Discrete(DiscreteLaw::new(support, probs)?);
            let m = rng.gen_range(2..=spec.max_m);
            let g = if rng.gen_bool(0.5) {
                GSpec::Sum
            } else {
                GSpec::LinearCombination(
                    (0..m)
                        .map(|_| COEFFICIENTS[rng.gen_range(0..COEFFICIENTS.len())])
                        .collect(),
                )
            };
            let model = SampleModel::new(law, g, m, 1)?;
            let kernel = Kernel::from_name(KERNELS[rng.gen_range(0..KERNELS.len())], 1)?;
            let h = rng.gen_range(0.3..2.0);
            let t = rng.gen_range(-2.0..3.0);
            let n = rng.gen_range(m..=spec.max_n);
            let mut draw = ChaCha8Rng::seed_from_u64(rng.gen());
            let data: Vec<f64> = (0..n).map(|_| model.base().draw(&mut draw)).collect();

            let kernel_name = kernel.name().to_string();
            let kbar = SymmetrizedKernel::new(kernel, h, model.clone())?;
            let dec = decompose(&Sample::from_scalars(&data), &kbar, t)?;
            let at = kbar.at(t);
            let projection = Projection::new(model.base(), &at as &dyn KernelFn);
            let mut degeneracy: f64 = 0.0;
            for k in 1..=m {
                degeneracy = degeneracy.max(check_degeneracy(&projection, k)?);
            }
            Ok(HoeffdingCase {
                id,
                model: model.to_string(),
                kernel: kernel_name,
                h,
                t,
                n,
                residual: dec.residual,
                degeneracy,
                pass: dec.residual <= RESIDUAL_TOLERANCE && degeneracy <= DEGENERACY_TOLERANCE,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_default_cases_pass() {
        let cases = verify_hoeffding(&HoeffdingSpec::default()).unwrap();
        assert_eq!(cases.len(), 100);
        assert!(cases.iter().all(|c| c.pass));
    }

    #[test]
    fn bad_settings_name_the_field() {
        let spec = HoeffdingSpec {
            max_m: 4,
            ..HoeffdingSpec::default()
        };
        match verify_hoeffding(&spec) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "max_m"),
            other => panic!("{other:?}"),
        }
    }
}
