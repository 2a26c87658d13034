//! Monte-Carlo check that bicluster centroids vary less than the raw data.
//!
//! Each trial draws `Z = X + Y` where `X` carries one `N(mu, sigma^2)` value
//! per column, shared by every row, and `Y` is independent `N(nu, tau^2)`
//! noise. The matrix is normalized and mined. The entries of every mined
//! centroid, taken in the raw scale of `Z`, form the augmented sample; the
//! raw sample is every entry of `Z` in the same biclusters' columns.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bicluster::{column_means, mine, MiningParams};
use crate::dataset::{normalize_minmax, FeatureMatrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticVarianceSpec {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    pub tau: f64,
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub mining: MiningParams,
}

impl Default for SyntheticVarianceSpec {
    fn default() -> Self {
        SyntheticVarianceSpec {
            mu: 0.0,
            sigma: 0.1,
            nu: 0.0,
            tau: 0.3,
            m: 200,
            n: 8,
            trials: 100,
            seed: 0,
            mining: MiningParams::default(),
        }
    }
}

impl SyntheticVarianceSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.sigma) || !positive(self.tau) {
            return Err(Error::InvalidParameter("sigma and tau must be positive".into()));
        }
        if !self.mu.is_finite() || !self.nu.is_finite() {
            return Err(Error::InvalidParameter("means must be finite".into()));
        }
        if self.m == 0 || self.n == 0 || self.trials == 0 {
            return Err(Error::InvalidParameter("m, n and trials must be positive".into()));
        }
        self.mining.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Over the mined columns, or the whole matrix when nothing was mined.
    pub raw_variance: f64,
    /// `None` when mining found no bicluster.
    pub augmented_variance: Option<f64>,
    pub n_biclusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub trials: usize,
    pub conclusive: usize,
    pub inconclusive: usize,
    /// Conclusive trials with augmented variance strictly below raw.
    pub passes: usize,
    /// `passes / conclusive`, `None` without conclusive trials.
    pub pass_fraction: Option<f64>,
    /// Means over conclusive trials.
    pub raw_variance: Option<f64>,
    pub augmented_variance: Option<f64>,
    pub outcomes: Vec<TrialOutcome>,
}

/// Population variance (denominator `n`).
fn variance<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().copied().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

pub fn draw_matrix(spec: &SyntheticVarianceSpec, trial: u64) -> Result<Array2<f64>> {
    let signal = Normal::new(spec.mu, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise = Normal::new(spec.nu, spec.tau).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut r = rng::stream(spec.seed.wrapping_add(trial), "variance-trial");
    let x: Vec<f64> = (0..spec.n).map(|_| signal.sample(&mut r)).collect();
    Ok(Array2::from_shape_fn((spec.m, spec.n), |(_, j)| x[j]).mapv(|v| v + noise.sample(&mut r)))
}

pub fn run_trial(spec: &SyntheticVarianceSpec, trial: u64) -> Result<TrialOutcome> {
    let z = draw_matrix(spec, trial)?;
    let matrix = FeatureMatrix::new(
        (0..spec.m).map(|i| i.to_string()).collect(),
        (0..spec.n).map(|j| format!("z{j}")).collect(),
        z.clone(),
        None,
    )?;
    let biclusters = mine(&normalize_minmax(&matrix), &spec.mining);
    if biclusters.is_empty() {
        return Ok(TrialOutcome {
            raw_variance: variance(z.iter()),
            augmented_variance: None,
            n_biclusters: 0,
        });
    }
    let centroids: Vec<f64> = biclusters
        .iter()
        .flat_map(|b| column_means(&z, &b.rows, &b.cols))
        .collect();
    let raw: Vec<f64> = biclusters
        .iter()
        .flat_map(|b| b.cols.iter().flat_map(|&c| z.column(c).to_vec()))
        .collect();
    Ok(TrialOutcome {
        raw_variance: variance(&raw),
        augmented_variance: Some(variance(&centroids)),
        n_biclusters: biclusters.len(),
    })
}

pub fn variance_reduction_check(spec: &SyntheticVarianceSpec) -> Result<VarianceReport> {
    spec.validate()?;
    let outcomes = (0..spec.trials as u64)
        .map(|t| run_trial(spec, t))
        .collect::<Result<Vec<_>>>()?;
    let conclusive: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.augmented_variance.is_some()).collect();
    let passes = conclusive
        .iter()
        .filter(|o| o.augmented_variance.is_some_and(|a| a < o.raw_variance))
        .count();
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| {
        (!conclusive.is_empty()).then(|| conclusive.iter().map(|o| f(o)).sum::<f64>() / conclusive.len() as f64)
    };
    Ok(VarianceReport {
        trials: spec.trials,
        conclusive: conclusive.len(),
        inconclusive: spec.trials - conclusive.len(),
        passes,
        pass_fraction: (!conclusive.is_empty()).then(|| passes as f64 / conclusive.len() as f64),
        raw_variance: mean(&|o| o.raw_variance),
        augmented_variance: mean(&|o| o.augmented_variance.expect("conclusive")),
        outcomes,
    })
}
