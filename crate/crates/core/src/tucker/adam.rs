//! Adam with bias correction, applied densely to every parameter tensor.

use ndarray::{Array, Dimension, Zip};

use super::{Gradients, TuckerModel};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct Moments<D: Dimension> {
    m: Array<f64, D>,
    v: Array<f64, D>,
}

impl<D: Dimension> Moments<D> {
    fn like(param: &Array<f64, D>) -> Self {
        Moments {
            m: Array::zeros(param.raw_dim()),
            v: Array::zeros(param.raw_dim()),
        }
    }

    fn step(&mut self, param: &mut Array<f64, D>, grad: &Array<f64, D>, lr_t: f64) {
        Zip::from(param)
            .and(grad)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|p, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + EPSILON);
            });
    }
}

/// First and second moments for every parameter tensor plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    entity: Moments<ndarray::Ix2>,
    relation: Moments<ndarray::Ix2>,
    core: Moments<ndarray::Ix3>,
    bn: Vec<Moments<ndarray::Ix1>>,
}

impl OptimizerState {
    pub fn new(model: &TuckerModel) -> Self {
        let mut bn = Vec::new();
        for layer in [&model.bn0, &model.bn1].into_iter().flatten() {
            bn.push(Moments::like(&layer.gamma));
            bn.push(Moments::like(&layer.beta));
        }
        OptimizerState {
            step: 0,
            entity: Moments::like(&model.entity),
            relation: Moments::like(&model.relation),
            core: Moments::like(&model.core),
            bn,
        }
    }

    /// One Adam update. The bias corrections are folded into the step size,
    /// `lr · sqrt(1 - β2^t) / (1 - β1^t)`.
    pub fn apply(&mut self, model: &mut TuckerModel, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = learning_rate * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
        self.entity.step(&mut model.entity, &grads.entity, lr_t);
        self.relation.step(&mut model.relation, &grads.relation, lr_t);
        self.core.step(&mut model.core, &grads.core, lr_t);
        let mut slots = self.bn.iter_mut();
        for (layer, grad) in [(&mut model.bn0, &grads.bn0), (&mut model.bn1, &grads.bn1)] {
            if let (Some(layer), Some((dg, db))) = (layer.as_mut(), grad) {
                slots.next().expect("gamma slot").step(&mut layer.gamma, dg, lr_t);
                slots.next().expect("beta slot").step(&mut layer.beta, db, lr_t);
            }
        }
    }
}
