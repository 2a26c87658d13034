//! Confusion counts and the derived classification metrics.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "one prediction per label");
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t.is_positive(), p.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// ACC, SEN, SPE and F1. A metric whose denominator is zero is `None`
/// and is written as `NA`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_confusion(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(Metrics {
        acc: (c.tp + c.tn) as f64 / total as f64,
        sen: ratio(c.tp, c.tp + c.fn_),
        spe: ratio(c.tn, c.tn + c.fp),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn worked_example() {
        let m = metrics_from_confusion(&counts(50, 10, 30, 10)).unwrap();
        assert!((m.acc - 0.8).abs() < 1e-12);
        assert!((m.sen.unwrap() - 50.0 / 60.0).abs() < 1e-12);
        assert!((m.spe.unwrap() - 0.75).abs() < 1e-12);
        assert!((m.f1.unwrap() - 100.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier() {
        let m = metrics_from_confusion(&counts(4, 0, 6, 0)).unwrap();
        assert_eq!((m.acc, m.sen, m.spe, m.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn undefined_denominators_are_flagged() {
        let m = metrics_from_confusion(&counts(0, 0, 0, 7)).unwrap();
        assert_eq!(m.sen, Some(0.0));
        assert_eq!(m.spe, None);
        assert_eq!(m.f1, Some(0.0));
        let m = metrics_from_confusion(&counts(0, 0, 3, 0)).unwrap();
        assert_eq!((m.sen, m.f1), (None, None));
        assert!(matches!(metrics_from_confusion(&counts(0, 0, 0, 0)), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn counts_from_predictions() {
        use Label::*;
        let c = ConfusionCounts::from_predictions(
            &[Malignant, Malignant, Benign, Benign, Benign],
            &[Malignant, Benign, Malignant, Benign, Benign],
        );
        assert_eq!(c, counts(1, 1, 2, 1));
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean_of_precision_and_sensitivity(
            tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50,
        ) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let m = metrics_from_confusion(&counts(tp, fp, tn, fn_)).unwrap();
            if let (Some(prec), Some(sen)) = (ratio(tp, tp + fp), m.sen) {
                if prec + sen > 0.0 {
                    let harmonic = 2.0 * prec * sen / (prec + sen);
                    prop_assert!((m.f1.unwrap() - harmonic).abs() < 1e-12);
                }
            }
        }
    }
}
