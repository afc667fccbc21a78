//! Evaluation bundle and the plot-ready tables derived from it.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::labeler::PolicyName;
use crate::learner::EvalReport;
use crate::metrics;
use crate::model::{BalanceCategory, KpmRecord};

const EMPTY: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: BalanceCategory,
    pub count: u64,
    pub mean_qos: Option<f64>,
    pub mean_cv: Option<f64>,
    pub mean_power_w: Option<f64>,
    pub mean_n_active: Option<f64>,
}

/// Per-category network means under one policy's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    pub policy: PolicyName,
    /// Imbalanced, moderately balanced, well balanced.
    pub rows: Vec<CategoryRow>,
}

/// Relative change from imbalanced to well balanced, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub qos_pct: f64,
    pub cv_pct: f64,
    pub power_pct: f64,
}

fn pct_change(from: f64, to: f64) -> f64 {
    (to - from) / from * 100.0
}

impl CategoryTable {
    pub fn row(&self, c: BalanceCategory) -> &CategoryRow {
        &self.rows[c.index()]
    }

    pub fn improvement(&self) -> Option<Improvement> {
        let imb = self.row(BalanceCategory::Imbalanced);
        let wb = self.row(BalanceCategory::WellBalanced);
        Some(Improvement {
            qos_pct: pct_change(imb.mean_qos?, wb.mean_qos?),
            cv_pct: pct_change(imb.mean_cv?, wb.mean_cv?),
            power_pct: pct_change(imb.mean_power_w?, wb.mean_power_w?),
        })
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or(EMPTY.to_string(), |v| format!("{v:.prec$}"));
        let mut out = String::from("category,count,mean_qos,mean_cv,mean_power_w,mean_n_active\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.category.name(),
                r.count,
                opt(r.mean_qos, 2),
                opt(r.mean_cv, 3),
                opt(r.mean_power_w, 2),
                opt(r.mean_n_active, 2),
            );
        }
        match self.improvement() {
            Some(i) => {
                let _ = writeln!(
                    out,
                    "well_vs_imbalanced_change_pct,,{:+.1}%,{:+.1}%,{:+.1}%,",
                    i.qos_pct, i.cv_pct, i.power_pct
                );
            }
            None => {
                let _ = writeln!(out, "well_vs_imbalanced_change_pct,,{EMPTY},{EMPTY},{EMPTY},");
            }
        }
        out
    }
}

/// Means per category, using each record's stored label for `policy`.
pub fn category_table(records: &[KpmRecord], policy: PolicyName) -> Result<CategoryTable> {
    if records.is_empty() {
        return Err(Error::Empty("labelled dataset"));
    }
    let mut sums = [[0.0f64; 4]; 3];
    let mut counts = [0u64; 3];
    for r in records {
        let c = r.labels[policy.index()].ok_or_else(|| {
            Error::Config(format!("snapshot {} has no {policy} label", r.snapshot_id))
        })?;
        let cv = metrics::record_metrics(r)?.cv;
        let s = &mut sums[c.index()];
        s[0] += r.qos;
        s[1] += cv;
        s[2] += r.power_w;
        s[3] += r.n_active() as f64;
        counts[c.index()] += 1;
    }
    let rows = BalanceCategory::ALL
        .iter()
        .map(|&c| {
            let n = counts[c.index()];
            let mean = |k: usize| (n > 0).then(|| sums[c.index()][k] / n as f64);
            CategoryRow {
                category: c,
                count: n,
                mean_qos: mean(0),
                mean_cv: mean(1),
                mean_power_w: mean(2),
                mean_n_active: mean(3),
            }
        })
        .collect();
    Ok(CategoryTable { policy, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub name: String,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEval {
    pub fitted: Baseline,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub policy: PolicyName,
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub models: Vec<ModelEval>,
    pub baselines: Vec<BaselineEval>,
    /// Forest importances, descending.
    pub importance: Vec<(String, f64)>,
    pub categories: Option<CategoryTable>,
}

impl ReportBundle {
    pub fn best_model(&self) -> Option<&ModelEval> {
        self.models
            .iter()
            .reduce(|a, b| if b.eval.f1_macro > a.eval.f1_macro { b } else { a })
    }

    pub fn best_baseline(&self) -> Option<&BaselineEval> {
        self.baselines
            .iter()
            .reduce(|a, b| if b.eval.f1_macro > a.eval.f1_macro { b } else { a })
    }

    /// `(model_f1 / baseline_f1 - 1) * 100`; infinite when the baseline scores 0.
    pub fn improvement_pct(model_f1: f64, baseline_f1: f64) -> f64 {
        if baseline_f1 > 0.0 {
            (model_f1 / baseline_f1 - 1.0) * 100.0
        } else {
            f64::INFINITY
        }
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "policy={} seed={} n_train={} n_validation={} n_test={}",
            self.policy, self.seed, self.n_train, self.n_validation, self.n_test
        );
        for m in &self.models {
            let _ = write!(
                out,
                "model name={} f1_macro={:.4} accuracy={:.4}",
                m.name, m.eval.f1_macro, m.eval.accuracy
            );
            if let (Some(mean), Some(std)) = (m.eval.cv_mean, m.eval.cv_std) {
                let _ = write!(out, " cv_f1={mean:.4}+-{std:.4}");
            }
            out.push('\n');
        }
        for b in &self.baselines {
            let _ = writeln!(
                out,
                "baseline name={} f1_macro={:.4} accuracy={:.4}",
                b.fitted.kind(),
                b.eval.f1_macro,
                b.eval.accuracy
            );
        }
        if let (Some(m), Some(b)) = (self.best_model(), self.best_baseline()) {
            let _ = writeln!(
                out,
                "improvement model={} baseline={} pct={:.1}",
                m.name,
                b.fitted.kind(),
                Self::improvement_pct(m.eval.f1_macro, b.eval.f1_macro)
            );
        }
        for (name, v) in self.importance.iter().take(10) {
            let _ = writeln!(out, "importance feature={name} share={v:.4}");
        }
        if let Some(i) = self.categories.as_ref().and_then(CategoryTable::improvement) {
            let _ = writeln!(
                out,
                "well_vs_imbalanced qos_pct={:+.1} cv_pct={:+.1} power_pct={:+.1}",
                i.qos_pct, i.cv_pct, i.power_pct
            );
        }
        out
    }

    /// Rows for every model and baseline: per-class F1 and the macro score.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from(
            "name,kind,accuracy,f1_imbalanced,f1_moderately_balanced,f1_well_balanced,f1_macro,cv_mean,cv_std\n",
        );
        let opt = |v: Option<f64>| v.map_or(EMPTY.to_string(), |v| format!("{v:.6}"));
        let mut line = |name: &str, kind: &str, e: &EvalReport| {
            let _ = writeln!(
                out,
                "{name},{kind},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                e.accuracy,
                e.per_class[0].f1,
                e.per_class[1].f1,
                e.per_class[2].f1,
                e.f1_macro,
                opt(e.cv_mean),
                opt(e.cv_std)
            );
        };
        for m in &self.models {
            line(&m.name, "model", &m.eval);
        }
        for b in &self.baselines {
            line(b.fitted.kind().as_str(), "baseline", &b.eval);
        }
        out
    }

    /// Baseline F1 scores and the best model's relative improvement over each.
    pub fn baseline_comparison_csv(&self) -> String {
        let mut out = String::from("baseline,f1_macro,best_model,best_model_f1_macro,improvement_pct\n");
        if let Some(m) = self.best_model() {
            for b in &self.baselines {
                let _ = writeln!(
                    out,
                    "{},{:.6},{},{:.6},{:.1}",
                    b.fitted.kind(),
                    b.eval.f1_macro,
                    m.name,
                    m.eval.f1_macro,
                    Self::improvement_pct(m.eval.f1_macro, b.eval.f1_macro)
                );
            }
        }
        out
    }

    pub fn importance_csv(&self) -> String {
        let mut out = String::from("rank,feature,importance\n");
        for (i, (name, v)) in self.importance.iter().enumerate() {
            let _ = writeln!(out, "{},{name},{v:.6}", i + 1);
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("name,true,predicted,count\n");
        let mut emit = |name: &str, e: &EvalReport| {
            for t in BalanceCategory::ALL {
                for p in BalanceCategory::ALL {
                    let _ = writeln!(out, "{name},{},{},{}", t.name(), p.name(), e.confusion[t.index()][p.index()]);
                }
            }
        };
        for m in &self.models {
            emit(&m.name, &m.eval);
        }
        for b in &self.baselines {
            emit(b.fitted.kind().as_str(), &b.eval);
        }
        out
    }

    /// Writes every table into `dir` and returns the file names written.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("scores.csv", self.scores_csv()),
            ("baseline_comparison.csv", self.baseline_comparison_csv()),
            ("feature_importance.csv", self.importance_csv()),
            ("confusion.csv", self.confusion_csv()),
            ("summary.txt", self.summary()),
        ];
        if let Some(t) = &self.categories {
            files.push(("category_means.csv", t.to_csv()));
        }
        let mut names = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            names.push(name.to_string());
        }
        Ok(names)
    }
}
