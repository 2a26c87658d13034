//! Browser bindings for three interactive views: mining a planted block,
//! an ROC curve for pasted scores, and the variance experiment.
//!
//! Every export returns a JSON string; `www/index.html` draws it on a canvas.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use kgda::bicluster::{mine, MiningParams};
use kgda::dataset::synthetic::planted_additive_block;
use kgda::eval::{roc_auc, variance_reduction_check, SyntheticVarianceSpec};

#[derive(Serialize)]
struct FoundBlock {
    rows: Vec<usize>,
    cols: Vec<usize>,
    msr: f64,
    row_recall: f64,
    col_recall: f64,
}

#[derive(Serialize)]
struct MiningView {
    values: Vec<Vec<f64>>,
    planted_rows: Vec<usize>,
    planted_cols: Vec<usize>,
    biclusters: Vec<FoundBlock>,
}

fn recall(planted: &[usize], found: &[usize]) -> f64 {
    planted.iter().filter(|x| found.contains(x)).count() as f64 / planted.len() as f64
}

#[allow(clippy::too_many_arguments)]
pub fn planted_mining_json(
    m: usize,
    n: usize,
    block_rows: usize,
    block_cols: usize,
    row_spread: f64,
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> Result<String, String> {
    if !(block_rows >= 2 && block_rows <= m && block_cols >= 2 && block_cols <= n && m <= 200 && n <= 40) {
        return Err(format!("block {block_rows}x{block_cols} does not fit a {m}x{n} matrix (max 200x40)"));
    }
    if !(0.0..=0.2).contains(&row_spread) {
        return Err("row spread must lie in [0, 0.2]".into());
    }
    let params = MiningParams {
        epsilon,
        delta,
        ..MiningParams::default()
    };
    params.validate().map_err(|e| e.to_string())?;
    let planted = planted_additive_block(m, n, block_rows, block_cols, row_spread, seed);
    let biclusters = mine(&planted.matrix, &params)
        .into_iter()
        .map(|b| FoundBlock {
            row_recall: recall(&planted.rows, &b.rows),
            col_recall: recall(&planted.cols, &b.cols),
            rows: b.rows,
            cols: b.cols,
            msr: b.msr,
        })
        .collect();
    let view = MiningView {
        values: planted.matrix.values.outer_iter().map(|r| r.to_vec()).collect(),
        planted_rows: planted.rows,
        planted_cols: planted.cols,
        biclusters,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// `labels` holds 1 for positives and 0 for negatives.
pub fn roc_json(scores: &[f64], labels: &[u8]) -> Result<String, String> {
    if scores.len() != labels.len() {
        return Err(format!("{} scores but {} labels", scores.len(), labels.len()));
    }
    let positive: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let roc = roc_auc(scores, &positive).map_err(|e| e.to_string())?;
    serde_json::to_string(&roc).map_err(|e| e.to_string())
}

pub fn variance_json(sigma: f64, tau: f64, m: usize, n: usize, trials: usize, seed: u64) -> Result<String, String> {
    if trials > 200 || m > 500 {
        return Err("at most 200 trials of 500 rows in the browser".into());
    }
    let spec = SyntheticVarianceSpec {
        sigma,
        tau,
        m,
        n,
        trials,
        seed,
        ..SyntheticVarianceSpec::default()
    };
    let report = variance_reduction_check(&spec).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn planted_mining(
    m: usize,
    n: usize,
    block_rows: usize,
    block_cols: usize,
    row_spread: f64,
    epsilon: f64,
    delta: f64,
    seed: u32,
) -> Result<String, JsError> {
    planted_mining_json(m, n, block_rows, block_cols, row_spread, epsilon, delta, seed.into())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn roc(scores: Vec<f64>, labels: Vec<u8>) -> Result<String, JsError> {
    roc_json(&scores, &labels).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn variance(sigma: f64, tau: f64, m: usize, n: usize, trials: usize, seed: u32) -> Result<String, JsError> {
    variance_json(sigma, tau, m, n, trials, seed.into()).map_err(|e| JsError::new(&e))
}
