//! Batch normalization over the embedding axis, used only when enabled in
//! the training configuration.

use ndarray::{Array1, Array2, Axis};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Affine parameters and running statistics of one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        }
    }
}

pub(crate) struct BnCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_stats: bool,
    pub mean: Array1<f64>,
    /// Biased batch variance.
    pub var: Array1<f64>,
}

pub(crate) fn forward(bn: &BatchNorm, x: &Array2<f64>, batch_stats: bool) -> (Array2<f64>, BnCache) {
    let (mean, var) = if batch_stats {
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let var = x.var_axis(Axis(0), 0.0);
        (mean, var)
    } else {
        (bn.running_mean.clone(), bn.running_var.clone())
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let x_hat = (x - &mean) * &inv_std;
    let y = &x_hat * &bn.gamma + &bn.beta;
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_stats,
            mean,
            var,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward(
    bn: &BatchNorm,
    cache: &BnCache,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgamma = (dy * &cache.x_hat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dx_hat = dy * &bn.gamma;
    let dx = if cache.batch_stats {
        let n = dy.nrows() as f64;
        let sum = dx_hat.sum_axis(Axis(0));
        let dot = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
        ((&dx_hat * n) - &sum - &cache.x_hat * &dot) * &cache.inv_std / n
    } else {
        dx_hat * &cache.inv_std
    };
    (dx, dgamma, dbeta)
}

/// Exponential update of the running statistics after a training step.
pub(crate) fn update_running(bn: &mut BatchNorm, cache: &BnCache, batch: usize) {
    let unbiased = if batch > 1 {
        &cache.var * (batch as f64 / (batch as f64 - 1.0))
    } else {
        cache.var.clone()
    };
    bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + &cache.mean * BN_MOMENTUM;
    bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
}
