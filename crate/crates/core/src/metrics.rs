//! Accuracy assessment: confusion matrix, overall/average accuracy, Cohen's kappa.

use crate::error::{Error, Result};
use crate::model::LabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// K×K counts; rows are reference classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    /// Reference pixels per class that the classifier left unlabeled (0).
    pub unclassified: Vec<u64>,
    /// Per-class producer accuracy; `None` for classes absent from the reference.
    pub class_accuracy: Vec<Option<f64>>,
    pub overall: f64,
    /// Mean of the defined class accuracies.
    pub average: f64,
    pub kappa: f64,
}

impl MetricsReport {
    /// Computes a report directly from a K×K confusion matrix.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if let Some(row) = confusion.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!(
                "confusion row has {} entries, expected {k}",
                row.len()
            )));
        }
        Self::from_counts(confusion, vec![0; k])
    }

    fn from_counts(confusion: Vec<Vec<u64>>, unclassified: Vec<u64>) -> Result<Self> {
        let k = confusion.len();
        let row_sums: Vec<u64> = confusion
            .iter()
            .zip(&unclassified)
            .map(|(row, &u)| row.iter().sum::<u64>() + u)
            .collect();
        let col_sums: Vec<u64> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
        let total: u64 = row_sums.iter().sum();
        if total == 0 {
            return Err(Error::NothingToEvaluate);
        }
        let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let total_f = total as f64;
        let overall = trace as f64 / total_f;

        let class_accuracy: Vec<Option<f64>> = (0..k)
            .map(|i| (row_sums[i] > 0).then(|| confusion[i][i] as f64 / row_sums[i] as f64))
            .collect();
        let defined: Vec<f64> = class_accuracy.iter().flatten().copied().collect();
        let average = defined.iter().sum::<f64>() / defined.len() as f64;

        let chance = row_sums
            .iter()
            .zip(&col_sums)
            .map(|(&r, &c)| r as f64 * c as f64)
            .sum::<f64>()
            / (total_f * total_f);
        // Single-class agreement leaves chance agreement at 1.
        let kappa = if chance >= 1.0 {
            if overall >= 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (overall - chance) / (1.0 - chance)
        };

        Ok(Self {
            confusion,
            unclassified,
            class_accuracy,
            overall,
            average,
            kappa,
        })
    }

    pub fn class_count(&self) -> usize {
        self.confusion.len()
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum::<u64>() + self.unclassified.iter().sum::<u64>()
    }
}

/// Compares `predicted` against `reference` over the pixels where the
/// reference is nonzero. Predicted zeros count as misclassifications.
pub fn evaluate(predicted: &LabelMap, reference: &LabelMap, class_count: u32) -> Result<MetricsReport> {
    if predicted.height() != reference.height() || predicted.width() != reference.width() {
        return Err(Error::DimensionMismatch(format!(
            "predicted map is {}x{}, reference is {}x{}",
            predicted.height(),
            predicted.width(),
            reference.height(),
            reference.width()
        )));
    }
    let k = class_count as usize;
    let mut confusion = vec![vec![0u64; k]; k];
    let mut unclassified = vec![0u64; k];
    for (&p, &r) in predicted.labels().iter().zip(reference.labels()) {
        if r == 0 {
            continue;
        }
        for label in [p, r] {
            if label > class_count {
                return Err(Error::LabelOutOfRange {
                    label,
                    max: class_count,
                });
            }
        }
        if p == 0 {
            unclassified[r as usize - 1] += 1;
        } else {
            confusion[r as usize - 1][p as usize - 1] += 1;
        }
    }
    MetricsReport::from_counts(confusion, unclassified)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_agreement() {
        let m = LabelMap::new(2, 2, vec![1, 2, 2, 1]).unwrap();
        let r = evaluate(&m, &m, 2).unwrap();
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.average, 1.0);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn hand_computed_confusion() {
        // p_o = 85/100, p_e = (50*55 + 50*45)/100^2 = 0.5
        let r = MetricsReport::from_confusion(vec![vec![45, 5], vec![10, 40]]).unwrap();
        assert!((r.overall - 0.85).abs() < 1e-12);
        assert!((r.kappa - 0.70).abs() < 1e-12);
        assert!((r.average - 0.85).abs() < 1e-12);
        assert_eq!(r.class_accuracy, vec![Some(0.9), Some(0.8)]);
    }

    #[test]
    fn constant_predictor_is_chance() {
        let reference = LabelMap::new(1, 4, vec![1, 1, 2, 2]).unwrap();
        let predicted = LabelMap::filled(1, 4, 1);
        let r = evaluate(&predicted, &reference, 2).unwrap();
        assert!((r.overall - 0.5).abs() < 1e-12);
        assert!(r.kappa.abs() < 1e-12);
    }

    #[test]
    fn ignores_unlabeled_and_skips_absent_classes() {
        let reference = LabelMap::new(1, 4, vec![0, 1, 1, 0]).unwrap();
        let predicted = LabelMap::new(1, 4, vec![3, 1, 0, 2]).unwrap();
        let r = evaluate(&predicted, &reference, 3).unwrap();
        assert_eq!(r.total(), 2);
        assert_eq!(r.unclassified, vec![1, 0, 0]);
        assert_eq!(r.class_accuracy, vec![Some(0.5), None, None]);
        assert!((r.average - 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        let a = LabelMap::filled(2, 2, 1);
        let b = LabelMap::filled(2, 3, 1);
        assert!(matches!(evaluate(&a, &b, 1), Err(Error::DimensionMismatch(_))));
        let zeros = LabelMap::filled(2, 2, 0);
        assert!(matches!(evaluate(&a, &zeros, 1), Err(Error::NothingToEvaluate)));
        let big = LabelMap::filled(2, 2, 4);
        assert!(matches!(evaluate(&big, &a, 2), Err(Error::LabelOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            labels in proptest::collection::vec((1u32..=3, 0u32..=3), 1..60),
            perm_idx in 0usize..6,
        ) {
            let perms = [[1, 2, 3], [1, 3, 2], [2, 1, 3], [2, 3, 1], [3, 1, 2], [3, 2, 1]];
            let perm = perms[perm_idx];
            let map = |l: u32| if l == 0 { 0 } else { perm[l as usize - 1] };
            let n = labels.len();
            let reference = LabelMap::new(1, n, labels.iter().map(|p| p.0).collect()).unwrap();
            let predicted = LabelMap::new(1, n, labels.iter().map(|p| p.1).collect()).unwrap();
            let reference2 = LabelMap::new(1, n, labels.iter().map(|p| map(p.0)).collect()).unwrap();
            let predicted2 = LabelMap::new(1, n, labels.iter().map(|p| map(p.1)).collect()).unwrap();
            let a = evaluate(&predicted, &reference, 3).unwrap();
            let b = evaluate(&predicted2, &reference2, 3).unwrap();
            prop_assert!((a.overall - b.overall).abs() < 1e-12);
            prop_assert!((a.average - b.average).abs() < 1e-12);
            prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(a.confusion[i][j], b.confusion[perm[i] as usize - 1][perm[j] as usize - 1]);
                }
            }
            prop_assert!((0.0..=1.0).contains(&a.overall));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a.kappa));
        }

        #[test]
        fn kappa_one_iff_diagonal(conf in proptest::collection::vec(0u64..5, 9)) {
            let confusion: Vec<Vec<u64>> = conf.chunks(3).map(<[u64]>::to_vec).collect();
            prop_assume!(conf.iter().sum::<u64>() > 0);
            let diagonal = (0..3).all(|i| (0..3).all(|j| i == j || confusion[i][j] == 0));
            let r = MetricsReport::from_confusion(confusion).unwrap();
            prop_assert_eq!((r.kappa - 1.0).abs() < 1e-12, diagonal);
        }
    }
}
