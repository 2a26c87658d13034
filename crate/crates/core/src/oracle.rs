//! Slow reference computations used to cross-check the fast paths.
//!
//! Everything here is written directly from the defining formulas, without
//! sharing code with the modules it checks. The `check` command and the test
//! suites both use it.

use ndarray::{ArrayView2, Axis};
use rand::Rng;

use crate::bicluster::{Deletion, TIE_EPS};
use crate::rng;
use crate::tucker::{bce_loss, Gradients, Mode, TuckerModel};

/// Mean squared residue by explicit double summation.
pub fn msr_direct(values: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let nr = rows.len() as f64;
    let nc = cols.len() as f64;
    let mut total = 0.0;
    for &r in rows {
        for &c in cols {
            total += values[[r, c]];
        }
    }
    let overall = total / (nr * nc);
    let mut acc = 0.0;
    for &r in rows {
        let mut row_sum = 0.0;
        for &c in cols {
            row_sum += values[[r, c]];
        }
        for &c in cols {
            let mut col_sum = 0.0;
            for &r2 in rows {
                col_sum += values[[r2, c]];
            }
            let residue = values[[r, c]] - row_sum / nc - col_sum / nr + overall;
            acc += residue * residue;
        }
    }
    acc / (nr * nc)
}

/// The deletion an exhaustive search would choose: every permitted
/// single-row and single-column deletion is scored from scratch; ties
/// prefer rows, then lower indices.
pub fn best_deletion(
    values: ArrayView2<f64>,
    rows: &[usize],
    cols: &[usize],
    row_floor: usize,
    col_floor: usize,
) -> Option<Deletion> {
    let mut candidates: Vec<(f64, Deletion)> = Vec::new();
    if rows.len() > row_floor {
        for &r in rows {
            let kept: Vec<usize> = rows.iter().copied().filter(|&x| x != r).collect();
            candidates.push((msr_direct(values, &kept, cols), Deletion::Row(r)));
        }
    }
    if cols.len() > col_floor {
        for &c in cols {
            let kept: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            candidates.push((msr_direct(values, rows, &kept), Deletion::Col(c)));
        }
    }
    let mut best: Option<(f64, Deletion)> = None;
    for (score, del) in candidates {
        match best {
            Some((b, _)) if score >= b - TIE_EPS => {}
            _ => best = Some((score, del)),
        }
    }
    best.map(|(_, d)| d)
}

/// `σ(Σ_ijk W_ijk e_s[i] w_r[j] e_o[k])` by explicit triple summation.
pub fn tucker_probability(model: &TuckerModel, s: usize, r: usize, o: usize) -> f64 {
    let (ke, kr, _) = model.core.dim();
    let mut phi = 0.0;
    for i in 0..ke {
        for j in 0..kr {
            for k in 0..ke {
                phi += model.core[[i, j, k]] * model.entity[[s, i]] * model.relation[[r, j]] * model.entity[[o, k]];
            }
        }
    }
    1.0 / (1.0 + (-phi).exp())
}

/// Largest relative error between `grads` and central finite differences of
/// the batch loss over `probes` random parameter entries.
pub fn max_gradient_error(
    model: &TuckerModel,
    grads: &Gradients,
    queries: &[(usize, usize)],
    targets: ArrayView2<f64>,
    mode: Mode<'_>,
    probes: usize,
    seed: u64,
) -> f64 {
    const H: f64 = 1e-5;
    let loss = |m: &TuckerModel| {
        // The loss only depends on the forward pass.
        let (l, _) = m.loss_and_grads(queries, targets, mode);
        l
    };
    let mut rng = rng::stream(seed, "gradient-probes");
    let n_kinds = 3 + 2 * usize::from(model.bn0.is_some()) + 2 * usize::from(model.bn1.is_some());
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let kind = rng.random_range(0..n_kinds);
        let mut plus = model.clone();
        let mut minus = model.clone();
        let analytic = match kind {
            0 => {
                let idx = (rng.random_range(0..model.entity.nrows()), rng.random_range(0..model.entity.ncols()));
                plus.entity[idx] += H;
                minus.entity[idx] -= H;
                grads.entity[idx]
            }
            1 => {
                let idx = (rng.random_range(0..model.relation.nrows()), rng.random_range(0..model.relation.ncols()));
                plus.relation[idx] += H;
                minus.relation[idx] -= H;
                grads.relation[idx]
            }
            2 => {
                let (a, b, c) = model.core.dim();
                let idx = (rng.random_range(0..a), rng.random_range(0..b), rng.random_range(0..c));
                plus.core[idx] += H;
                minus.core[idx] -= H;
                grads.core[idx]
            }
            _ => {
                let k = kind - 3;
                let use_bn0 = model.bn0.is_some() && k < 2;
                let gamma = k % 2 == 0;
                let dim = model.entity_dim();
                let i = rng.random_range(0..dim);
                bn_vector(&mut plus, use_bn0, gamma)[i] += H;
                bn_vector(&mut minus, use_bn0, gamma)[i] -= H;
                let g = if use_bn0 { &grads.bn0 } else { &grads.bn1 }.as_ref().expect("layer gradient");
                if gamma {
                    g.0[i]
                } else {
                    g.1[i]
                }
            }
        };
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

fn bn_vector(model: &mut TuckerModel, bn0: bool, gamma: bool) -> &mut ndarray::Array1<f64> {
    let layer = if bn0 { model.bn0.as_mut() } else { model.bn1.as_mut() }.expect("layer present");
    if gamma {
        &mut layer.gamma
    } else {
        &mut layer.beta
    }
}

/// Forward-pass loss without any shared code beyond the model fields, for
/// cross-checking [`bce_loss`] on evaluation-mode batches.
pub fn eval_loss_direct(model: &TuckerModel, queries: &[(usize, usize)], targets: ArrayView2<f64>) -> f64 {
    let n_e = model.n_entities();
    let mut probs = ndarray::Array2::<f64>::zeros((queries.len(), n_e));
    for (q, &(s, r)) in queries.iter().enumerate() {
        for o in 0..n_e {
            probs[[q, o]] = tucker_probability(model, s, r, o);
        }
    }
    bce_loss(probs.view(), targets)
}

/// Fraction of positive/negative pairs ranked correctly, ties counting one
/// half (the Mann–Whitney statistic normalized to `[0, 1]`).
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Sample variance (n - 1 denominator) of all entries of a view.
pub fn sample_variance(values: ArrayView2<f64>) -> f64 {
    let flat: Vec<f64> = values.axis_iter(Axis(0)).flat_map(|r| r.to_vec()).collect();
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
