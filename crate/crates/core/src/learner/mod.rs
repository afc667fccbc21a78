//! Multi-class learners for balance prediction, their evaluation metrics and
//! the split / cross-validation protocol.

mod eval;
mod forest;
mod logreg;
mod split;
mod tree;

pub use eval::{confusion_matrix, f1_macro, ClassMetrics, EvalReport};
pub use forest::{feature_importance, train_forest, ForestModel, ForestParams};
pub use logreg::{train_logreg, LogRegModel, LogRegParams};
pub use split::{cross_validate, stratified_folds, stratified_split, CvScore, SplitIndices};
pub use tree::{DecisionTree, Node};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureVector};
use crate::model::BalanceCategory;

/// Category plus class probabilities indexed by category code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub category: BalanceCategory,
    pub proba: [f64; 3],
}

/// Anything that maps a feature row to a balance category.
pub trait Classifier: Sync {
    fn n_features(&self) -> usize;

    fn schema_version(&self) -> &str;

    /// Unchecked prediction on a raw row of `n_features()` values.
    fn predict_row(&self, x: &[f64]) -> Prediction;

    fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.schema_version != self.schema_version() {
            return Err(Error::SchemaMismatch {
                expected: self.schema_version().to_string(),
                actual: x.schema_version.clone(),
            });
        }
        if x.values.len() != self.n_features() {
            return Err(Error::LengthMismatch {
                what: "feature vector vs model",
                left: x.values.len(),
                right: self.n_features(),
            });
        }
        Ok(self.predict_row(&x.values))
    }

    fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<BalanceCategory>> {
        if x.n_rows() > 0 && x.n_cols() != self.n_features() {
            return Err(Error::LengthMismatch {
                what: "feature matrix vs model",
                left: x.n_cols(),
                right: self.n_features(),
            });
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            Ok((0..x.n_rows())
                .into_par_iter()
                .map(|i| self.predict_row(x.row(i)).category)
                .collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(x.rows().map(|r| self.predict_row(r).category).collect())
        }
    }
}

/// Index of the largest entry; ties resolve to the lowest index, which is the
/// less balanced category.
pub(crate) fn argmax_safe(v: &[f64; 3]) -> BalanceCategory {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    BalanceCategory::ALL[best]
}

pub(crate) fn check_training_set(x: &FeatureMatrix, y: &[BalanceCategory]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "feature rows vs labels",
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if y.iter().all(|c| *c == y[0]) {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// Either learner, tagged by kind when serialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Forest(ForestModel),
    Logreg(LogRegModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Forest(_) => "forest",
            TrainedModel::Logreg(_) => "logreg",
        }
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        match self {
            TrainedModel::Forest(m) => m.n_features(),
            TrainedModel::Logreg(m) => m.n_features(),
        }
    }

    fn schema_version(&self) -> &str {
        match self {
            TrainedModel::Forest(m) => m.schema_version(),
            TrainedModel::Logreg(m) => m.schema_version(),
        }
    }

    fn predict_row(&self, x: &[f64]) -> Prediction {
        match self {
            TrainedModel::Forest(m) => m.predict_row(x),
            TrainedModel::Logreg(m) => m.predict_row(x),
        }
    }
}
