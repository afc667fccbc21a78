use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BalanceCategory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: u64,
    pub accuracy: f64,
    /// Indexed by category code.
    pub per_class: [ClassMetrics; 3],
    pub f1_macro: f64,
    /// `confusion[true][pred]`, indexed by category code.
    pub confusion: [[u64; 3]; 3],
    pub cv_mean: Option<f64>,
    pub cv_std: Option<f64>,
}

impl EvalReport {
    pub fn new(y_true: &[BalanceCategory], y_pred: &[BalanceCategory]) -> Result<Self> {
        let confusion = confusion_matrix(y_true, y_pred)?;
        let n = y_true.len() as u64;
        let correct: u64 = (0..3).map(|c| confusion[c][c]).sum();
        let per_class = std::array::from_fn(|c| class_metrics(&confusion, c));
        Ok(EvalReport {
            n,
            accuracy: correct as f64 / n as f64,
            per_class,
            f1_macro: macro_from_confusion(&confusion),
            confusion,
            cv_mean: None,
            cv_std: None,
        })
    }
}

pub fn confusion_matrix(y_true: &[BalanceCategory], y_pred: &[BalanceCategory]) -> Result<[[u64; 3]; 3]> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            what: "true vs predicted labels",
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("label vector"));
    }
    let mut m = [[0u64; 3]; 3];
    for (t, p) in y_true.iter().zip(y_pred) {
        m[t.index()][p.index()] += 1;
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(m: &[[u64; 3]; 3], c: usize) -> ClassMetrics {
    let tp = m[c][c];
    let support: u64 = m[c].iter().sum();
    let predicted: u64 = (0..3).map(|t| m[t][c]).sum();
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, support);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support,
    }
}

/// Unweighted mean of per-class F1.
///
/// A class that never occurs in either vector is left out of the mean. A
/// class with support or predictions but no true positives scores 0, and
/// any 0/0 precision or recall is taken as 0.
fn macro_from_confusion(m: &[[u64; 3]; 3]) -> f64 {
    let mut sum = 0.0;
    let mut k = 0;
    for c in 0..3 {
        let seen = m[c].iter().sum::<u64>() + (0..3).map(|t| m[t][c]).sum::<u64>();
        if seen == 0 {
            continue;
        }
        sum += class_metrics(m, c).f1;
        k += 1;
    }
    sum / k as f64
}

pub fn f1_macro(y_true: &[BalanceCategory], y_pred: &[BalanceCategory]) -> Result<f64> {
    Ok(macro_from_confusion(&confusion_matrix(y_true, y_pred)?))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use BalanceCategory::*;

    const A: BalanceCategory = Imbalanced;
    const B: BalanceCategory = ModeratelyBalanced;
    const C: BalanceCategory = WellBalanced;

    /// Per-class F1 from raw counting, no confusion matrix.
    fn brute_f1(t: &[BalanceCategory], p: &[BalanceCategory]) -> f64 {
        let mut scores = Vec::new();
        for c in BalanceCategory::ALL {
            let tp = t.iter().zip(p).filter(|(a, b)| **a == c && **b == c).count() as f64;
            let fp = t.iter().zip(p).filter(|(a, b)| **a != c && **b == c).count() as f64;
            let fneg = t.iter().zip(p).filter(|(a, b)| **a == c && **b != c).count() as f64;
            if tp + fp + fneg == 0.0 {
                continue;
            }
            scores.push(2.0 * tp / (2.0 * tp + fp + fneg));
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    #[test]
    fn perfect_is_one() {
        let y = [A, B, C, C];
        assert_eq!(f1_macro(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn hand_example() {
        let t = [A, A, B, B, C, C];
        let p = [A, B, B, B, C, A];
        let r = EvalReport::new(&t, &p).unwrap();
        assert_abs_diff_eq!(r.per_class[0].f1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_class[1].f1, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_class[2].f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.f1_macro, 0.6556, epsilon = 5e-5);
        assert_abs_diff_eq!(r.accuracy, 4.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_prediction_on_balanced_set() {
        let t = [A, A, B, B, C, C];
        let p = [C; 6];
        // Only C has true positives: precision 1/3, recall 1.
        assert_abs_diff_eq!(f1_macro(&t, &p).unwrap(), brute_f1(&t, &p), epsilon = 1e-12);
        assert_abs_diff_eq!(f1_macro(&t, &p).unwrap(), 0.5 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn absent_class_is_skipped() {
        let t = [A, A, C];
        let p = [A, A, C];
        assert_eq!(f1_macro(&t, &p).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(f1_macro(&[A], &[A, B]).is_err());
        assert!(f1_macro(&[], &[]).is_err());
    }

    fn cat() -> impl Strategy<Value = BalanceCategory> {
        (0u8..3).prop_map(|c| BalanceCategory::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in prop::collection::vec((cat(), cat()), 1..60)) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = EvalReport::new(&t, &p).unwrap();
            prop_assert!((r.f1_macro - brute_f1(&t, &p)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.f1_macro));
            for c in 0..3 {
                prop_assert_eq!(r.confusion[c].iter().sum::<u64>(), r.per_class[c].support);
            }
        }

        #[test]
        fn invariant_under_relabeling(pairs in prop::collection::vec((cat(), cat()), 1..60), perm in Just([2u8, 0, 1])) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let map = |c: &BalanceCategory| BalanceCategory::from_code(perm[c.index()]).unwrap();
            let t2: Vec<_> = t.iter().map(map).collect();
            let p2: Vec<_> = p.iter().map(map).collect();
            prop_assert!((f1_macro(&t, &p).unwrap() - f1_macro(&t2, &p2).unwrap()).abs() < 1e-12);
        }
    }
}
