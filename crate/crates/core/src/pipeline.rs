//! Training and evaluation runs over a feature table, shared by the CLI and
//! the integration tests.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_baseline, BaselineKind};
use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix, SCHEMA_VERSION};
use crate::io::{read_json, write_json, FeatureTable};
use crate::labeler::PolicyName;
use crate::learner::{
    cross_validate, feature_importance, stratified_split, train_forest, train_logreg, Classifier, EvalReport,
    ForestParams, LogRegParams, SplitIndices, TrainedModel,
};
use crate::model::{BalanceCategory, KpmRecord};
use crate::report::{category_table, BaselineEval, ModelEval, ReportBundle};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Logreg,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Forest => "forest",
            ModelKind::Logreg => "logreg",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forest" | "random-forest" | "rf" => Ok(ModelKind::Forest),
            "logreg" | "logistic" | "lr" => Ok(ModelKind::Logreg),
            _ => Err(Error::UnknownName {
                kind: "model",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub validation: f64,
    pub test: f64,
    /// Stratified folds over the training rows; below 2 disables it.
    pub cv_folds: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            validation: 0.15,
            test: 0.15,
            cv_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub forest: ForestParams,
    pub logreg: LogRegParams,
    pub split: SplitParams,
}

/// A trained model plus what is needed to reproduce and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub policy: PolicyName,
    pub seed: u64,
    pub split: SplitParams,
    pub model: TrainedModel,
    pub validation: EvalReport,
    pub test: EvalReport,
}

pub fn write_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let file: ModelFile = read_json(path)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::SchemaMismatch {
            expected: format!("model format {MODEL_FORMAT_VERSION}"),
            actual: format!("model format {}", file.format_version),
        });
    }
    if file.model.schema_version() != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.to_string(),
            actual: file.model.schema_version().to_string(),
        });
    }
    Ok(file)
}

fn feature_names() -> Vec<String> {
    features::schema().names().map(String::from).collect()
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

pub fn fit(kind: ModelKind, x: &FeatureMatrix, y: &[BalanceCategory], params: &TrainParams, seed: u64) -> Result<TrainedModel> {
    Ok(match kind {
        ModelKind::Forest => TrainedModel::Forest(train_forest(x, y, &feature_names(), &params.forest, seed)?),
        ModelKind::Logreg => TrainedModel::Logreg(train_logreg(x, y, &feature_names(), &params.logreg, seed)?),
    })
}

pub fn split_for(table: &FeatureTable, policy: PolicyName, split: &SplitParams, seed: u64) -> Result<SplitIndices> {
    stratified_split(&table.labels_for(policy)?, split.validation, split.test, seed)
}

/// Splits, fits on the training rows, scores validation and test rows, and
/// (when enabled) cross-validates on the training rows. The cross-validation
/// summary is attached to the test report.
pub fn train_model(
    table: &FeatureTable,
    policy: PolicyName,
    kind: ModelKind,
    params: &TrainParams,
    seed: u64,
) -> Result<ModelFile> {
    let labels = table.labels_for(policy)?;
    let split = stratified_split(&labels, params.split.validation, params.split.test, seed)?;
    let x_train = table.x.select(&split.train);
    let y_train = pick(&labels, &split.train);
    let model = fit(kind, &x_train, &y_train, params, seed)?;

    let score = |idx: &[usize]| -> Result<EvalReport> {
        EvalReport::new(&pick(&labels, idx), &model.predict_matrix(&table.x.select(idx))?)
    };
    let validation = score(&split.validation)?;
    let mut test = score(&split.test)?;
    if params.split.cv_folds >= 2 {
        let cv = cross_validate(&y_train, params.split.cv_folds, seed, |tr, te| {
            let m = fit(kind, &x_train.select(tr), &pick(&y_train, tr), params, seed)?;
            m.predict_matrix(&x_train.select(te))
        })?;
        log::info!("{kind} cv folds: {:?}", cv.fold_scores);
        test.cv_mean = Some(cv.mean);
        test.cv_std = Some(cv.std);
    }
    Ok(ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        policy,
        seed,
        split: params.split,
        model,
        validation,
        test,
    })
}

/// Scores every model and all six baselines on the same test rows. Baselines
/// are fitted on the training rows of the models' split. `records`, when
/// given, must be the labelled snapshots behind `table` and adds the
/// per-category network means.
pub fn evaluate(
    table: &FeatureTable,
    models: &[(String, ModelFile)],
    records: Option<&[KpmRecord]>,
) -> Result<ReportBundle> {
    let (_, first) = models.first().ok_or(Error::Empty("model list"))?;
    for (name, m) in models {
        if m.policy != first.policy || m.seed != first.seed || m.split != first.split {
            return Err(Error::Config(format!(
                "model {name} was trained with a different policy, seed or split than the first model"
            )));
        }
    }
    let policy = first.policy;
    let labels = table.labels_for(policy)?;
    let split = stratified_split(&labels, first.split.validation, first.split.test, first.seed)?;
    let x_test = table.x.select(&split.test);
    let y_test = pick(&labels, &split.test);

    let mut model_evals = Vec::new();
    let mut importance = Vec::new();
    for (name, m) in models {
        let mut eval = EvalReport::new(&y_test, &m.model.predict_matrix(&x_test)?)?;
        eval.cv_mean = m.test.cv_mean;
        eval.cv_std = m.test.cv_std;
        if importance.is_empty() {
            if let TrainedModel::Forest(f) = &m.model {
                importance = feature_importance(f);
            }
        }
        model_evals.push(ModelEval {
            name: name.clone(),
            eval,
        });
    }

    let x_train = table.x.select(&split.train);
    let y_train = pick(&labels, &split.train);
    let mut baselines = Vec::new();
    for kind in BaselineKind::ALL {
        let fitted = fit_baseline(kind, &x_train, &y_train)?;
        let eval = EvalReport::new(&y_test, &fitted.predict_batch(&x_test, first.seed)?)?;
        baselines.push(BaselineEval { fitted, eval });
    }

    let categories = match records {
        Some(r) => {
            if r.len() != table.snapshot_ids.len() || r.iter().zip(&table.snapshot_ids).any(|(a, b)| a.snapshot_id != *b) {
                return Err(Error::Config("snapshot file and feature file describe different snapshots".into()));
            }
            Some(category_table(r, policy)?)
        }
        None => None,
    };

    Ok(ReportBundle {
        policy,
        seed: first.seed,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        models: model_evals,
        baselines,
        importance,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::{attach_labels, ThresholdPolicy};
    use crate::model::Scenario;
    use crate::twin::{generate_dataset, TwinParams};

    fn table(n: usize) -> (Vec<KpmRecord>, FeatureTable) {
        let s = Scenario::new(5, 30, 0).unwrap();
        let mut recs: Vec<KpmRecord> = generate_dataset(&s, &TwinParams::default(), n, 4)
            .unwrap()
            .iter()
            .map(|snap| snap.state.kpm(snap.id, s.prb_per_ru))
            .collect();
        attach_labels(&mut recs, &ThresholdPolicy::builtin(PolicyName::Moderate)).unwrap();
        let t = FeatureTable::from_records(&recs).unwrap();
        (recs, t)
    }

    fn small() -> TrainParams {
        TrainParams {
            forest: ForestParams {
                n_trees: 20,
                ..ForestParams::default()
            },
            split: SplitParams {
                cv_folds: 3,
                ..SplitParams::default()
            },
            ..TrainParams::default()
        }
    }

    #[test]
    fn model_file_round_trip_preserves_predictions() {
        let (_, t) = table(600);
        let dir = tempfile::tempdir().unwrap();
        for kind in [ModelKind::Forest, ModelKind::Logreg] {
            let m = train_model(&t, PolicyName::Moderate, kind, &small(), 3).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            write_model(&path, &m).unwrap();
            let back = read_model(&path).unwrap();
            assert_eq!(back, m);
            for r in t.x.rows() {
                assert_eq!(back.model.predict_row(r), m.model.predict_row(r));
            }
            assert!(m.test.cv_mean.is_some());
        }
    }

    #[test]
    fn evaluate_covers_models_and_six_baselines() {
        let (recs, t) = table(600);
        let forest = train_model(&t, PolicyName::Moderate, ModelKind::Forest, &small(), 3).unwrap();
        let logreg = train_model(&t, PolicyName::Moderate, ModelKind::Logreg, &small(), 3).unwrap();
        let models = vec![("forest".to_string(), forest), ("logreg".to_string(), logreg)];
        let a = evaluate(&t, &models, Some(&recs)).unwrap();
        let b = evaluate(&t, &models, Some(&recs)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.baselines.len(), 6);
        assert_eq!(a.models.len(), 2);
        assert_eq!(a.importance.len(), features::schema().len());
        for m in &a.models {
            let total: u64 = m.eval.confusion.iter().flatten().sum();
            assert_eq!(total as usize, a.n_test);
        }
        assert!(a.categories.is_some());
    }

    #[test]
    fn mismatched_models_rejected() {
        let (_, t) = table(300);
        let p = TrainParams {
            split: SplitParams {
                cv_folds: 0,
                ..SplitParams::default()
            },
            ..small()
        };
        let a = train_model(&t, PolicyName::Moderate, ModelKind::Forest, &p, 1).unwrap();
        let b = train_model(&t, PolicyName::Moderate, ModelKind::Forest, &p, 2).unwrap();
        assert!(evaluate(&t, &[("a".into(), a), ("b".into(), b)], None).is_err());
    }
}
