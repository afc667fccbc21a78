use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{FeatureMatrix, SCHEMA_VERSION};
use crate::model::BalanceCategory;

use super::tree::{grow, Binned, DecisionTree, GrowParams};
use super::{argmax_safe, check_training_set, Classifier, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 10,
            max_features: None,
            min_samples_split: 2,
            max_bins: 256,
        }
    }
}

/// Bagged Gini trees. Immutable once trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub schema_version: String,
    pub feature_names: Vec<String>,
    pub seed: u64,
    trees: Vec<DecisionTree>,
    importances: Vec<f64>,
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Normalised mean impurity decrease per feature, in schema order.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// Same model restricted to a subset (or reordering) of its trees.
    pub fn with_trees(&self, order: &[usize]) -> ForestModel {
        ForestModel {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn schema_version(&self) -> &str {
        &self.schema_version
    }

    fn predict_row(&self, x: &[f64]) -> Prediction {
        let mut votes = [0.0; 3];
        let mut proba = [0.0; 3];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total: f64 = counts.iter().sum();
            for c in 0..3 {
                proba[c] += counts[c] / total;
            }
            votes[argmax_safe(counts).index()] += 1.0;
        }
        let n = self.trees.len() as f64;
        for p in &mut proba {
            *p /= n;
        }
        Prediction {
            category: argmax_safe(&votes),
            proba,
        }
    }
}

pub fn train_forest(
    x: &FeatureMatrix,
    y: &[BalanceCategory],
    feature_names: &[String],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    check_training_set(x, y)?;
    let d = x.n_cols();
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        max_features: params
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d),
        min_samples_split: params.min_samples_split as f64,
    };
    let binned = Binned::new(x, params.max_bins);
    let labels: Vec<u8> = y.iter().map(|c| c.code()).collect();
    let n = labels.len();

    let fit_one = |t: usize| -> (DecisionTree, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut weights = vec![0.0; n];
        for _ in 0..n {
            weights[rng.random_range(0..n)] += 1.0;
        }
        let mut imp = vec![0.0; d];
        let tree = grow(&binned, &labels, &weights, &grow_params, &mut rng, &mut imp);
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        (tree, imp)
    };

    #[cfg(feature = "parallel")]
    let fitted: Vec<(DecisionTree, Vec<f64>)> = {
        use rayon::prelude::*;
        (0..params.n_trees).into_par_iter().map(fit_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fitted: Vec<(DecisionTree, Vec<f64>)> = (0..params.n_trees).map(fit_one).collect();

    let mut importances = vec![0.0; d];
    for (_, imp) in &fitted {
        for (acc, v) in importances.iter_mut().zip(imp) {
            *acc += v;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        params: params.clone(),
        schema_version: SCHEMA_VERSION.to_string(),
        feature_names: feature_names.to_vec(),
        seed,
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        importances,
    })
}

/// Features by descending importance; equal scores keep schema order.
pub fn feature_importance(model: &ForestModel) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .cloned()
        .zip(model.importances.iter().copied())
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    use super::*;
    use crate::error::Error;
    use BalanceCategory::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    /// Two Gaussian-free clusters split by x0 + x1 = 1, plus a noise column
    /// that is constant.
    fn toy(n: usize, seed: u64) -> (FeatureMatrix, Vec<BalanceCategory>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            data.extend([a, b, 0.5]);
            y.push(if a + b > 1.0 { WellBalanced } else { Imbalanced });
        }
        (FeatureMatrix::new(3, data).unwrap(), y)
    }

    #[test]
    fn fits_separable_toy_set() {
        let (x, y) = toy(200, 1);
        let model = train_forest(&x, &y, &names(3), &ForestParams::default(), 7).unwrap();
        let pred = model.predict_matrix(&x).unwrap();
        let acc = pred.iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / 200.0;
        assert!(acc >= 0.99, "accuracy {acc}");
        for t in model.trees() {
            assert!(t.depth() <= 10);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = toy(300, 2);
        let p = ForestParams {
            n_trees: 20,
            ..ForestParams::default()
        };
        let a = train_forest(&x, &y, &names(3), &p, 5).unwrap();
        let b = train_forest(&x, &y, &names(3), &p, 5).unwrap();
        assert_eq!(a, b);
        let (probe, _) = toy(100, 99);
        assert_eq!(a.predict_matrix(&probe).unwrap(), b.predict_matrix(&probe).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = toy(10, 3);
        let y = vec![WellBalanced; 10];
        assert!(matches!(
            train_forest(&x, &y, &names(3), &ForestParams::default(), 0),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn probabilities_normalised_and_importance_sums_to_one() {
        let (x, y) = toy(300, 4);
        let model = train_forest(&x, &y, &names(3), &ForestParams::default(), 1).unwrap();
        for i in 0..20 {
            let p = model.predict_row(x.row(i));
            assert_abs_diff_eq!(p.proba.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        let imp = feature_importance(&model);
        assert_abs_diff_eq!(imp.iter().map(|(_, v)| v).sum::<f64>(), 1.0, epsilon = 1e-9);
        // The constant column can never be split on.
        assert_eq!(imp.iter().find(|(n, _)| n == "f2").unwrap().1, 0.0);
    }

    #[test]
    fn single_tree_forest_matches_its_tree() {
        let (x, y) = toy(150, 5);
        let p = ForestParams {
            n_trees: 1,
            ..ForestParams::default()
        };
        let model = train_forest(&x, &y, &names(3), &p, 3).unwrap();
        for r in x.rows() {
            assert_eq!(model.predict_row(r).category, model.trees()[0].predict_row(r));
        }
    }

    #[test]
    fn tree_order_does_not_matter() {
        let (x, y) = toy(200, 6);
        let p = ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        };
        let model = train_forest(&x, &y, &names(3), &p, 8).unwrap();
        let reversed: Vec<usize> = (0..15).rev().collect();
        let other = model.with_trees(&reversed);
        let (probe, _) = toy(200, 61);
        assert_eq!(model.predict_matrix(&probe).unwrap(), other.predict_matrix(&probe).unwrap());
    }

    #[test]
    fn schema_mismatch_rejected() {
        let (x, y) = toy(50, 7);
        let model = train_forest(&x, &y, &names(3), &ForestParams { n_trees: 2, ..Default::default() }, 0).unwrap();
        let v = crate::features::FeatureVector {
            values: vec![0.0; 3],
            schema_version: "other".into(),
        };
        assert!(matches!(model.predict(&v), Err(Error::SchemaMismatch { .. })));
    }
}
