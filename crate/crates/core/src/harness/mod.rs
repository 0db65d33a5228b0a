//! Seeded Monte Carlo experiments.
//!
//! An [`ExperimentConfig`] is the serialisable description of a run; it is
//! validated into an [`Experiment`], which owns the parsed model and kernel.
//! Replication `r` always draws from ChaCha stream `r` of the master seed and
//! per-replication results are collected in replication order, so every
//! result is a function of the configuration alone.

mod bench;
mod bias;
mod clt;
mod decay;
mod uniform;
mod verify;

pub use bench::{bench, BenchRow, BENCH_TOLERANCE};
pub use bias::{run_bias_rate, BiasRateResult, StochasticBiasRow};
pub use clt::{run_clt, run_clt_at, CellStats, CltResult, NormSummary};
pub use decay::{run_degenerate_decay, DecayResult, DecayRow};
pub use uniform::{
    run_uniform_bandwidth, smoothing_bound, SmoothingBound, UniformResult, UniformRow,
};
pub use verify::{
    verify_hoeffding, HoeffdingCase, HoeffdingSpec, DEGENERACY_TOLERANCE, RESIDUAL_TOLERANCE,
};

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{route, EvalPath};
use crate::kernels::Kernel;
use crate::models::SampleModel;

/// Default cap on kernel evaluations for one experiment.
pub const DEFAULT_BUDGET: f64 = 5e9;

/// A grid norm used for discrepancies between two functions sampled on the `t` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawNorm", into = "String")]
pub enum PNorm {
    L1,
    L2,
    Sup,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNorm {
    Number(f64),
    Text(String),
}

impl TryFrom<RawNorm> for PNorm {
    type Error = String;

    fn try_from(raw: RawNorm) -> std::result::Result<Self, String> {
        match raw {
            RawNorm::Number(1.0) => Ok(PNorm::L1),
            RawNorm::Number(2.0) => Ok(PNorm::L2),
            RawNorm::Number(p) => Err(format!("unsupported norm p = {p}")),
            RawNorm::Text(s) => s.parse(),
        }
    }
}

impl std::str::FromStr for PNorm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(PNorm::L1),
            "2" => Ok(PNorm::L2),
            "inf" | "infinity" | "sup" | "∞" => Ok(PNorm::Sup),
            other => Err(format!("unsupported norm `{other}` (expected 1, 2 or inf)")),
        }
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PNorm::L1 => "1",
            PNorm::L2 => "2",
            PNorm::Sup => "inf",
        })
    }
}

impl From<PNorm> for String {
    fn from(p: PNorm) -> String {
        p.to_string()
    }
}

impl PNorm {
    /// Grid norm of `diff` with quadrature weights `w` (ignored for the sup norm).
    pub fn apply(&self, diff: &[f64], w: &[f64]) -> f64 {
        match self {
            PNorm::Sup => diff.iter().fold(0.0, |a, d| a.max(d.abs())),
            PNorm::L1 => diff.iter().zip(w).map(|(d, w)| d.abs() * w).sum(),
            PNorm::L2 => diff
                .iter()
                .zip(w)
                .map(|(d, w)| d * d * w)
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Trapezoid-style weights for a sorted grid; a single point gets weight 1.
pub fn grid_weights(t: &[f64]) -> Vec<f64> {
    let k = t.len();
    if k <= 1 {
        return vec![1.0; k];
    }
    (0..k)
        .map(|j| {
            let left = if j == 0 { t[0] } else { t[j - 1] };
            let right = if j + 1 == k { t[k - 1] } else { t[j + 1] };
            0.5 * (right - left)
        })
        .collect()
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ladder {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match Ladder::deserialize(d)? {
        Ladder::One(n) => vec![n],
        Ladder::Many(v) => v,
    })
}

fn default_c() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.0 / 3.0
}
fn default_lambda() -> Vec<f64> {
    vec![1.0]
}
fn default_t() -> Vec<f64> {
    vec![0.0]
}
fn default_r() -> usize {
    100
}
fn default_norms() -> Vec<PNorm> {
    vec![PNorm::Sup]
}
fn default_budget() -> f64 {
    DEFAULT_BUDGET
}
fn default_repeats() -> usize {
    3
}

/// JSON-serialisable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model string, e.g. `normal01:sum:m=2`.
    pub model: String,
    /// Kernel name, e.g. `gaussian`.
    pub kernel: String,
    /// Sample size or ladder of sample sizes.
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    /// Bandwidth rule `h_n = c·n^{−γ}`.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_t")]
    pub t_grid: Vec<f64>,
    #[serde(rename = "R", alias = "replications", default = "default_r")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_norms")]
    pub p_norms: Vec<PNorm>,
    #[serde(default)]
    pub path: EvalPath,
    /// Cap on the estimated number of kernel evaluations.
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Bandwidths for the deterministic bias fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<Vec<f64>>,
    /// Timing repeats per ladder entry in `bench`; the minimum is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl ExperimentConfig {
    pub fn new(model: &str, kernel: &str, n: Vec<usize>) -> Self {
        Self {
            model: model.to_string(),
            kernel: kernel.to_string(),
            n,
            c: default_c(),
            gamma: default_gamma(),
            lambda_grid: default_lambda(),
            t_grid: default_t(),
            replications: default_r(),
            seed: 0,
            p_norms: default_norms(),
            path: EvalPath::Fast,
            budget: DEFAULT_BUDGET,
            h_grid: None,
            repeats: default_repeats(),
        }
    }
}

/// A validated configuration with its model and kernel.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SampleModel,
    pub kernel: Kernel,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let model: SampleModel = config
            .model
            .parse()
            .map_err(|e: Error| Error::config("model", e.to_string()))?;
        let kernel = Kernel::from_name(&config.kernel, model.out_dim())
            .map_err(|e| Error::config("kernel", e.to_string()))?;
        let exp = Self {
            config,
            model,
            kernel,
        };
        exp.validate()?;
        Ok(exp)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.n.is_empty() {
            return Err(Error::config("n", "at least one sample size is required"));
        }
        if c.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n", "the ladder must be strictly increasing"));
        }
        if c.n[0] < self.model.m() {
            return Err(Error::config(
                "n",
                format!(
                    "sample size {} is below the model order {}",
                    c.n[0],
                    self.model.m()
                ),
            ));
        }
        if !(c.c > 0.0 && c.c.is_finite()) {
            return Err(Error::config("c", format!("must be positive, got {}", c.c)));
        }
        if !(c.gamma > 0.0 && c.gamma < 1.0) {
            return Err(Error::config(
                "gamma",
                format!("must lie in (0, 1), got {}", c.gamma),
            ));
        }
        let n0 = c.n[0] as f64;
        if n0 * self.h_n(c.n[0]) < 10.0 {
            return Err(Error::config(
                "gamma",
                format!(
                    "n·h_n = {:.3} at n = {} is below 10",
                    n0 * self.h_n(c.n[0]),
                    c.n[0]
                ),
            ));
        }
        if c.replications < 2 {
            return Err(Error::config("R", "at least two replications are required"));
        }
        if c.lambda_grid.is_empty() || c.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::config(
                "lambda_grid",
                "must be a nonempty list of positive numbers",
            ));
        }
        if c.t_grid.is_empty() || c.t_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::config(
                "t_grid",
                "must be a nonempty list of finite numbers",
            ));
        }
        if c.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("t_grid", "must be strictly increasing"));
        }
        if c.p_norms.is_empty() {
            return Err(Error::config("p_norms", "at least one norm is required"));
        }
        if !(c.budget > 0.0) {
            return Err(Error::config("budget", "must be positive"));
        }
        if let Some(hs) = &c.h_grid {
            if hs.len() < 2 || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(Error::config(
                    "h_grid",
                    "needs at least two positive bandwidths",
                ));
            }
        }
        if c.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.model.out_dim() != 1 {
            return Err(Error::config(
                "model",
                "experiments are defined for real-valued g; use the estimator directly otherwise",
            ));
        }
        Ok(())
    }

    /// `h_n = c·n^{−γ}`.
    pub fn h_n(&self, n: usize) -> f64 {
        self.config.c * (n as f64).powf(-self.config.gamma)
    }

    pub fn t_points(&self) -> Vec<Vec<f64>> {
        self.config.t_grid.iter().map(|t| vec![*t]).collect()
    }

    /// Estimated kernel evaluations for one evaluation of `U_n` on the full
    /// grid at sample size `n`.
    pub fn sample_cost(&self, n: usize) -> f64 {
        let c = &self.config;
        let path = route(&self.model, &self.kernel, &self.t_points(), c.path);
        let cells = c.lambda_grid.len() * c.t_grid.len();
        let lmax = c.lambda_grid.iter().cloned().fold(0.0, f64::max);
        path.cost(n, self.model.m(), cells, &self.kernel, lmax * self.h_n(n))
    }

    /// [`Self::sample_cost`] summed over the ladder and the replications.
    pub fn grid_cost(&self) -> f64 {
        let r = self.config.replications as f64;
        self.config.n.iter().map(|n| r * self.sample_cost(*n)).sum()
    }

    /// Fails with [`Error::Budget`] when `needed` exceeds the configured cap.
    pub fn check_budget(&self, needed: f64) -> Result<()> {
        if needed > self.config.budget {
            Err(Error::Budget {
                needed,
                cap: self.config.budget,
            })
        } else {
            Ok(())
        }
    }
}
