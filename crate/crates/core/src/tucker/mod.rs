//! Tucker-decomposition link predictor.
//!
//! A triple `(s, r, o)` is scored as `φ = W ×₁ e_s ×₂ w_r ×₃ e_o` where the
//! subject and object share one entity table and `W` is a shared
//! `k_e × k_r × k_e` core. The model outputs `σ(φ)` for every candidate
//! object at once (1-N scoring) and is trained with binary cross-entropy
//! averaged over entities.
//!
//! Dropout placement: `input_dropout` on the subject embedding,
//! `hidden_dropout1` on the relation-contracted core `W ×₂ w_r`,
//! `hidden_dropout2` on the hidden vector before the entity product. All
//! three use inverted scaling, so evaluation is a plain forward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;
use crate::rng;

pub mod adam;
mod bn;
pub mod checkpoint;
pub mod train;

pub use adam::OptimizerState;
pub use bn::BatchNorm;
pub use train::{train, train_with_state, TrainOutcome};

/// Probabilities are clamped into `[P_EPS, 1 - P_EPS]` inside the logarithms.
pub const P_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_input_dropout")]
    pub input_dropout: f64,
    #[serde(default = "TrainConfig::default_hidden_dropout1")]
    pub hidden_dropout1: f64,
    #[serde(default = "TrainConfig::default_hidden_dropout2")]
    pub hidden_dropout2: f64,
    #[serde(default = "TrainConfig::default_dim")]
    pub entity_dim: usize,
    #[serde(default = "TrainConfig::default_dim")]
    pub relation_dim: usize,
    #[serde(default = "TrainConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: Self::default_epochs(),
            learning_rate: Self::default_learning_rate(),
            input_dropout: Self::default_input_dropout(),
            hidden_dropout1: Self::default_hidden_dropout1(),
            hidden_dropout2: Self::default_hidden_dropout2(),
            entity_dim: Self::default_dim(),
            relation_dim: Self::default_dim(),
            batch_size: Self::default_batch_size(),
            seed: 0,
            batch_norm: false,
            label_smoothing: 0.0,
        }
    }
}

impl TrainConfig {
    fn default_epochs() -> usize {
        200
    }
    fn default_learning_rate() -> f64 {
        0.0005
    }
    fn default_input_dropout() -> f64 {
        0.3
    }
    fn default_hidden_dropout1() -> f64 {
        0.4
    }
    fn default_hidden_dropout2() -> f64 {
        0.5
    }
    fn default_dim() -> usize {
        200
    }
    fn default_batch_size() -> usize {
        128
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, rate) in [
            ("input_dropout", self.input_dropout),
            ("hidden_dropout1", self.hidden_dropout1),
            ("hidden_dropout2", self.hidden_dropout2),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.entity_dim == 0 || self.relation_dim == 0 {
            return bad("embedding dimensions must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing must lie in [0, 1), got {}", self.label_smoothing));
        }
        Ok(())
    }
}

/// Model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    /// `m_e × k_e`, shared by subjects and objects.
    pub entity: Array2<f64>,
    /// `m_r × k_r`.
    pub relation: Array2<f64>,
    /// `k_e × k_r × k_e`, indexed `[subject, relation, object]`.
    pub core: Array3<f64>,
    /// Normalization of the subject embedding (when enabled).
    pub bn0: Option<BatchNorm>,
    /// Normalization of the hidden vector (when enabled).
    pub bn1: Option<BatchNorm>,
    pub seed: u64,
}

/// Fresh parameters for `n_entities` and `n_relations`.
///
/// Embeddings are drawn from `U(-a, a)` with `a = sqrt(3 / k)` (unit
/// variance of the dot product per fan-in); the core from `U(-0.1, 0.1)`.
pub fn init_model(n_entities: usize, n_relations: usize, config: &TrainConfig) -> Result<TuckerModel> {
    if n_entities < 2 || n_relations < 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 entities and 1 relation, got {n_entities} and {n_relations}"
        )));
    }
    config.validate()?;
    let (ke, kr) = (config.entity_dim, config.relation_dim);
    let mut rng = rng::stream(config.seed, "init");
    let uniform = |a: f64| {
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        move |r: &mut rng::Rng| dist.sample(r)
    };
    let draw_e = uniform((3.0 / ke as f64).sqrt());
    let entity = Array2::from_shape_simple_fn((n_entities, ke), || draw_e(&mut rng));
    let draw_r = uniform((3.0 / kr as f64).sqrt());
    let relation = Array2::from_shape_simple_fn((n_relations, kr), || draw_r(&mut rng));
    let draw_w = uniform(0.1);
    let core = Array3::from_shape_simple_fn((ke, kr, ke), || draw_w(&mut rng));
    Ok(TuckerModel {
        entity,
        relation,
        core,
        bn0: config.batch_norm.then(|| BatchNorm::new(ke)),
        bn1: config.batch_norm.then(|| BatchNorm::new(ke)),
        seed: config.seed,
    })
}

/// Dropout masks for one batch, with inverted scaling folded in.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    /// `B × k_e`, entries `0` or `1 / (1 - p)`.
    pub input: Array2<f64>,
    /// Per query, a row-major `k_e × k_e` keep mask; `None` when the rate
    /// is zero.
    pub hidden1: Option<Vec<Vec<u8>>>,
    pub hidden1_scale: f64,
    /// `B × k_e`, entries `0` or `1 / (1 - p)`.
    pub hidden2: Array2<f64>,
}

impl DropoutMasks {
    /// Masks that keep everything.
    pub fn keep_all(batch: usize, dim: usize) -> Self {
        DropoutMasks {
            input: Array2::ones((batch, dim)),
            hidden1: None,
            hidden1_scale: 1.0,
            hidden2: Array2::ones((batch, dim)),
        }
    }

    pub fn sample<R: Rng>(rng: &mut R, batch: usize, dim: usize, config: &TrainConfig) -> Self {
        let mut vector_mask = |p: f64| {
            let scale = 1.0 / (1.0 - p);
            Array2::from_shape_simple_fn((batch, dim), || {
                if p > 0.0 && rng.random::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            })
        };
        let input = vector_mask(config.input_dropout);
        let hidden2 = vector_mask(config.hidden_dropout2);
        let p1 = config.hidden_dropout1;
        let hidden1 = (p1 > 0.0).then(|| {
            // Compare raw 32-bit draws against a fixed threshold.
            let threshold = (p1 * 4_294_967_296.0) as u64;
            (0..batch)
                .map(|_| {
                    (0..dim * dim)
                        .map(|_| u8::from(u64::from(rng.random::<u32>()) >= threshold))
                        .collect()
                })
                .collect()
        });
        DropoutMasks {
            input,
            hidden1,
            hidden1_scale: 1.0 / (1.0 - p1),
            hidden2,
        }
    }
}

/// Forward pass mode.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// No dropout; normalization uses running statistics.
    Eval,
    /// Dropout from the given masks; normalization uses batch statistics.
    Train(&'a DropoutMasks),
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entity: Array2<f64>,
    pub relation: Array2<f64>,
    pub core: Array3<f64>,
    /// `(dgamma, dbeta)` per normalization layer.
    pub bn0: Option<(Array1<f64>, Array1<f64>)>,
    pub bn1: Option<(Array1<f64>, Array1<f64>)>,
}

pub(crate) struct ForwardCache {
    /// Distinct relations of the batch, ascending.
    relations: Vec<usize>,
    /// Position of each query's relation in `relations`.
    rel_pos: Vec<usize>,
    bn0: Option<bn::BnCache>,
    /// Subject embeddings after normalization and input dropout.
    x: Array2<f64>,
    /// `W ×₂ w_r` per distinct relation: `n_rel × k_e × k_e`.
    contracted: Array3<f64>,
    bn1: Option<bn::BnCache>,
    /// Hidden vectors after normalization and dropout.
    hidden: Array2<f64>,
    pub(crate) probs: Array2<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TuckerModel {
    pub fn n_entities(&self) -> usize {
        self.entity.nrows()
    }

    pub fn n_relations(&self) -> usize {
        self.relation.nrows()
    }

    pub fn entity_dim(&self) -> usize {
        self.entity.ncols()
    }

    pub fn relation_dim(&self) -> usize {
        self.relation.ncols()
    }

    fn check_query(&self, subject: usize, relation: usize) -> Result<()> {
        if subject >= self.n_entities() {
            return Err(Error::IndexOutOfRange {
                index: subject,
                len: self.n_entities(),
            });
        }
        if relation >= self.n_relations() {
            return Err(Error::IndexOutOfRange {
                index: relation,
                len: self.n_relations(),
            });
        }
        Ok(())
    }

    /// `W ×₂ w_r` for each relation id, stacked: `n × k_e × k_e`.
    fn contract_relations(&self, relations: &[usize]) -> Array3<f64> {
        let ke = self.entity_dim();
        let rel = self.relation.select(Axis(0), relations);
        let mut out = Array3::zeros((relations.len(), ke, ke));
        for i in 0..ke {
            let w_i = self.core.index_axis(Axis(0), i);
            let mut dst = out.slice_mut(s![.., i, ..]);
            general_mat_mul(1.0, &rel, &w_i, 0.0, &mut dst);
        }
        out
    }

    pub(crate) fn forward(&self, queries: &[(usize, usize)], mode: Mode<'_>) -> ForwardCache {
        let batch = queries.len();
        let ke = self.entity_dim();
        let mut relations: Vec<usize> = queries.iter().map(|q| q.1).collect();
        relations.sort_unstable();
        relations.dedup();
        let rel_pos: Vec<usize> = queries
            .iter()
            .map(|q| relations.binary_search(&q.1).expect("relation collected"))
            .collect();
        let subjects: Vec<usize> = queries.iter().map(|q| q.0).collect();
        let train = matches!(mode, Mode::Train(_));

        let mut x = self.entity.select(Axis(0), &subjects);
        let bn0 = self.bn0.as_ref().map(|b| {
            let (y, cache) = bn::forward(b, &x, train);
            x = y;
            cache
        });
        if let Mode::Train(masks) = mode {
            x *= &masks.input;
        }

        let contracted = self.contract_relations(&relations);
        let mut hidden = Array2::zeros((batch, ke));
        for q in 0..batch {
            let m = contracted.index_axis(Axis(0), rel_pos[q]);
            let xq = x.row(q);
            let mut hq = hidden.row_mut(q);
            match mode {
                Mode::Train(DropoutMasks {
                    hidden1: Some(h1),
                    hidden1_scale,
                    ..
                }) => {
                    let mask = &h1[q];
                    for i in 0..ke {
                        let xi = xq[i] * hidden1_scale;
                        if xi == 0.0 {
                            continue;
                        }
                        let row = m.row(i);
                        let mrow = &mask[i * ke..(i + 1) * ke];
                        for k in 0..ke {
                            hq[k] += xi * row[k] * f64::from(mrow[k]);
                        }
                    }
                }
                _ => hq.assign(&xq.dot(&m)),
            }
        }
        let bn1 = self.bn1.as_ref().map(|b| {
            let (y, cache) = bn::forward(b, &hidden, train);
            hidden = y;
            cache
        });
        if let Mode::Train(masks) = mode {
            hidden *= &masks.hidden2;
        }
        let mut probs = hidden.dot(&self.entity.t());
        probs.mapv_inplace(sigmoid);
        ForwardCache {
            relations,
            rel_pos,
            bn0,
            x,
            contracted,
            bn1,
            hidden,
            probs,
        }
    }

    /// Evaluation-mode probabilities for a batch of `(subject, relation)`
    /// queries: `B × m_e`.
    pub fn score_batch(&self, queries: &[(usize, usize)]) -> Result<Array2<f64>> {
        for &(s, r) in queries {
            self.check_query(s, r)?;
        }
        if queries.is_empty() {
            return Ok(Array2::zeros((0, self.n_entities())));
        }
        Ok(self.forward(queries, Mode::Eval).probs)
    }

    /// Probability of every entity as the object of `(subject, relation)`.
    pub fn score_all(&self, subject: usize, relation: usize) -> Result<Vec<f64>> {
        Ok(self.score_batch(&[(subject, relation)])?.row(0).to_vec())
    }

    /// Training-mode scores with freshly drawn dropout masks.
    pub fn score_all_train<R: Rng>(
        &self,
        subject: usize,
        relation: usize,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_query(subject, relation)?;
        let masks = DropoutMasks::sample(rng, 1, self.entity_dim(), config);
        Ok(self
            .forward(&[(subject, relation)], Mode::Train(&masks))
            .probs
            .row(0)
            .to_vec())
    }

    /// Loss and analytic gradients for one batch.
    ///
    /// `targets` is `B × m_e`; the loss is binary cross-entropy averaged
    /// over entities and then over the batch.
    pub fn loss_and_grads(
        &self,
        queries: &[(usize, usize)],
        targets: ArrayView2<f64>,
        mode: Mode<'_>,
    ) -> (f64, Gradients) {
        let (loss, grads, _) = self.loss_grads_cache(queries, targets, mode);
        (loss, grads)
    }

    pub(crate) fn loss_grads_cache(
        &self,
        queries: &[(usize, usize)],
        targets: ArrayView2<f64>,
        mode: Mode<'_>,
    ) -> (f64, Gradients, ForwardCache) {
        let batch = queries.len();
        let n_e = self.n_entities();
        let ke = self.entity_dim();
        let cache = self.forward(queries, mode);
        let loss = bce_loss(cache.probs.view(), targets);

        let norm = (batch * n_e) as f64;
        let g_logits = (&cache.probs - &targets) / norm;

        let mut d_entity = g_logits.t().dot(&cache.hidden);
        let mut g_hidden = g_logits.dot(&self.entity);
        if let Mode::Train(masks) = mode {
            g_hidden *= &masks.hidden2;
        }
        let mut d_bn1 = None;
        if let (Some(b), Some(c)) = (&self.bn1, &cache.bn1) {
            let (dx, dg, db) = bn::backward(b, c, &g_hidden);
            g_hidden = dx;
            d_bn1 = Some((dg, db));
        }

        let mut g_contracted = Array3::<f64>::zeros(cache.contracted.raw_dim());
        let mut g_x = Array2::<f64>::zeros((batch, ke));
        for q in 0..batch {
            let pos = cache.rel_pos[q];
            let m = cache.contracted.index_axis(Axis(0), pos);
            let xq = cache.x.row(q);
            let gh = g_hidden.row(q);
            let mut gm = g_contracted.index_axis_mut(Axis(0), pos);
            let mut gx = g_x.row_mut(q);
            match mode {
                Mode::Train(DropoutMasks {
                    hidden1: Some(h1),
                    hidden1_scale,
                    ..
                }) => {
                    let mask = &h1[q];
                    for i in 0..ke {
                        let row = m.row(i);
                        let mrow = &mask[i * ke..(i + 1) * ke];
                        let xi = xq[i] * hidden1_scale;
                        let mut gmrow = gm.row_mut(i);
                        let mut acc = 0.0;
                        for k in 0..ke {
                            let keep = f64::from(mrow[k]);
                            acc += row[k] * keep * gh[k];
                            gmrow[k] += xi * gh[k] * keep;
                        }
                        gx[i] = acc * hidden1_scale;
                    }
                }
                _ => {
                    gx.assign(&m.dot(&gh));
                    for i in 0..ke {
                        gm.row_mut(i).scaled_add(xq[i], &gh);
                    }
                }
            }
        }

        if let Mode::Train(masks) = mode {
            g_x *= &masks.input;
        }
        let mut d_bn0 = None;
        if let (Some(b), Some(c)) = (&self.bn0, &cache.bn0) {
            let (dx, dg, db) = bn::backward(b, c, &g_x);
            g_x = dx;
            d_bn0 = Some((dg, db));
        }
        for (q, &(s, _)) in queries.iter().enumerate() {
            d_entity.row_mut(s).scaled_add(1.0, &g_x.row(q));
        }

        // Core and relation gradients through W ×₂ w_r, one subject slice at a time.
        let rel = self.relation.select(Axis(0), &cache.relations);
        let mut d_core = Array3::<f64>::zeros(self.core.raw_dim());
        let mut d_rel_batch = Array2::<f64>::zeros(rel.raw_dim());
        for i in 0..ke {
            let gm_i = g_contracted.slice(s![.., i, ..]);
            let mut dw_i = d_core.index_axis_mut(Axis(0), i);
            general_mat_mul(1.0, &rel.t(), &gm_i, 0.0, &mut dw_i);
            let w_i = self.core.index_axis(Axis(0), i);
            general_mat_mul(1.0, &gm_i, &w_i.t(), 1.0, &mut d_rel_batch);
        }
        let mut d_relation = Array2::<f64>::zeros(self.relation.raw_dim());
        for (k, &r) in cache.relations.iter().enumerate() {
            d_relation.row_mut(r).assign(&d_rel_batch.row(k));
        }

        (
            loss,
            Gradients {
                entity: d_entity,
                relation: d_relation,
                core: d_core,
                bn0: d_bn0,
                bn1: d_bn1,
            },
            cache,
        )
    }
}

/// Binary cross-entropy averaged over all entries.
pub fn bce_loss(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(targets.iter())
        .map(|(&p, &y)| {
            let p = p.clamp(P_EPS, 1.0 - P_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Diagnosis decision from the two label scores; ties go to benign.
pub fn decide(score_benign: f64, score_malignant: f64) -> Label {
    if score_malignant > score_benign {
        Label::Malignant
    } else {
        Label::Benign
    }
}

/// Malignant-label probability and predicted label for one patient entity.
pub fn predict_diagnosis(model: &TuckerModel, graph: &KnowledgeGraph, patient: usize) -> Result<(f64, Label)> {
    let scores = model.score_all(patient, graph.diagnosis_relation)?;
    let [benign, malignant] = graph.label_entities;
    Ok((scores[malignant], decide(scores[benign], scores[malignant])))
}

/// Batched [`predict_diagnosis`]: `(p_benign, p_malignant)` per patient.
pub fn diagnosis_scores(
    model: &TuckerModel,
    graph: &KnowledgeGraph,
    patients: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let queries: Vec<(usize, usize)> = patients.iter().map(|&p| (p, graph.diagnosis_relation)).collect();
    let [benign, malignant] = graph.label_entities;
    let mut out = Vec::with_capacity(patients.len());
    for chunk in queries.chunks(256) {
        let probs = model.score_batch(chunk)?;
        out.extend(probs.rows().into_iter().map(|row| (row[benign], row[malignant])));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;
    use crate::oracle;

    fn tiny(ke: usize, kr: usize, ne: usize, nr: usize, seed: u64, bn: bool) -> TuckerModel {
        let cfg = TrainConfig {
            entity_dim: ke,
            relation_dim: kr,
            seed,
            batch_norm: bn,
            ..TrainConfig::default()
        };
        let mut m = init_model(ne, nr, &cfg).unwrap();
        // Make the core matter at small sizes.
        m.core.mapv_inplace(|w| w * 10.0);
        m
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = TrainConfig {
            entity_dim: 4,
            relation_dim: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = init_model(10, 2, &cfg).unwrap();
        let b = init_model(10, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entity.dim(), (10, 4));
        assert_eq!(a.relation.dim(), (2, 3));
        assert_eq!(a.core.dim(), (4, 3, 4));
        assert!(init_model(1, 1, &cfg).is_err());
        assert!(init_model(2, 0, &cfg).is_err());
    }

    #[test]
    fn init_entries_are_centred() {
        let cfg = TrainConfig {
            entity_dim: 50,
            relation_dim: 50,
            seed: 1,
            ..TrainConfig::default()
        };
        let m = init_model(200, 10, &cfg).unwrap();
        for values in [m.entity.as_slice().unwrap(), m.core.as_slice().unwrap()] {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
        }
    }

    #[test]
    fn zero_core_gives_one_half() {
        let mut m = tiny(3, 2, 5, 2, 0, false);
        m.core.fill(0.0);
        assert!(m.score_all(1, 0).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn scalar_contraction() {
        let mut m = tiny(1, 1, 2, 1, 0, false);
        m.core[[0, 0, 0]] = 0.7;
        m.entity[[0, 0]] = 1.5;
        m.entity[[1, 0]] = -0.4;
        m.relation[[0, 0]] = 2.0;
        let p = m.score_all(0, 0).unwrap();
        assert!((p[1] - sigmoid(0.7 * 1.5 * 2.0 * -0.4)).abs() < 1e-15);
    }

    #[test]
    fn unknown_ids_are_errors() {
        let m = tiny(2, 2, 3, 1, 0, false);
        assert!(m.score_all(3, 0).is_err());
        assert!(m.score_all(0, 1).is_err());
    }

    #[test]
    fn matches_brute_force_contraction() {
        for seed in 0..20 {
            let m = tiny(3, 2, 5, 3, seed, false);
            for s in 0..5 {
                for r in 0..3 {
                    let fast = m.score_all(s, r).unwrap();
                    for (o, p) in fast.iter().enumerate() {
                        let slow = oracle::tucker_probability(&m, s, r, o);
                        assert!((p - slow).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn eval_scoring_is_repeatable() {
        let m = tiny(4, 3, 6, 2, 2, true);
        assert_eq!(m.score_all(2, 1).unwrap(), m.score_all(2, 1).unwrap());
    }

    #[test]
    fn train_scores_are_probabilities() {
        let m = tiny(4, 3, 6, 2, 2, false);
        let mut r = rng::stream(1, "t");
        let p = m.score_all_train(0, 1, &TrainConfig::default(), &mut r).unwrap();
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn loss_examples() {
        let targets = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let half = Array2::from_elem((1, 4), 0.5);
        assert!((bce_loss(half.view(), targets.view()) - 2f64.ln()).abs() < 1e-15);
        let perfect = targets.clone();
        assert!(bce_loss(perfect.view(), targets.view()) < 1e-11);
    }

    fn check_gradients(model: &TuckerModel, mode: Mode<'_>, queries: &[(usize, usize)], seed: u64) {
        let mut r = rng::stream(seed, "targets");
        let targets = Array2::from_shape_simple_fn((queries.len(), model.n_entities()), || {
            f64::from(u8::from(r.random_bool(0.3)))
        });
        let (_, grads) = model.loss_and_grads(queries, targets.view(), mode);
        let worst = oracle::max_gradient_error(model, &grads, queries, targets.view(), mode, 40, seed);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny(3, 2, 5, 3, 11, false);
        check_gradients(&m, Mode::Eval, &[(0, 1), (2, 1), (4, 0)], 1);
    }

    #[test]
    fn gradients_match_with_dropout_masks() {
        let m = tiny(3, 2, 5, 3, 12, false);
        let cfg = TrainConfig {
            entity_dim: 3,
            relation_dim: 2,
            ..TrainConfig::default()
        };
        let masks = DropoutMasks::sample(&mut rng::stream(3, "m"), 3, 3, &cfg);
        check_gradients(&m, Mode::Train(&masks), &[(0, 1), (2, 1), (4, 0)], 2);
    }

    #[test]
    fn gradients_match_with_batch_norm() {
        let m = tiny(3, 2, 5, 3, 13, true);
        let masks = DropoutMasks::keep_all(4, 3);
        check_gradients(&m, Mode::Train(&masks), &[(0, 1), (2, 1), (4, 0), (1, 2)], 3);
    }

    #[test]
    fn argmax_is_invariant_to_core_scaling() {
        for seed in 0..10 {
            let m = tiny(3, 2, 6, 2, seed, false);
            let mut scaled = m.clone();
            scaled.core.mapv_inplace(|w| w * 3.7);
            let a = m.score_all(0, 1).unwrap();
            let b = scaled.score_all(0, 1).unwrap();
            if a[4] != a[5] {
                assert_eq!(decide(a[4], a[5]), decide(b[4], b[5]));
            }
        }
    }

    #[test]
    fn tie_goes_to_benign() {
        assert_eq!(decide(0.2, 0.9), Label::Malignant);
        assert_eq!(decide(0.5, 0.5), Label::Benign);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            input_dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
