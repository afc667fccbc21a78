use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BalanceCategory;

use super::eval::f1_macro;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(labels: &[BalanceCategory], rng: &mut ChaCha8Rng) -> [Vec<usize>; 3] {
    let mut groups: [Vec<usize>; 3] = Default::default();
    for (i, c) in labels.iter().enumerate() {
        groups[c.index()].push(i);
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups
}

fn require(groups: &[Vec<usize>; 3], need: usize) -> Result<()> {
    for (c, g) in groups.iter().enumerate() {
        if !g.is_empty() && g.len() < need {
            return Err(Error::InsufficientClass {
                class: BalanceCategory::ALL[c].name(),
                have: g.len(),
                need,
            });
        }
    }
    Ok(())
}

/// Per-class allocation: `floor(n_c * f)` to validation and test, the rest to
/// train. Each output list is sorted.
pub fn stratified_split(
    labels: &[BalanceCategory],
    validation: f64,
    test: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(0.0..1.0).contains(&validation) || !(0.0..1.0).contains(&test) || validation + test >= 1.0 {
        return Err(Error::Config(format!(
            "split fractions {validation}/{test} leave no training data"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("label vector"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = by_class(labels, &mut rng);
    require(&groups, 3)?;
    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for g in &groups {
        let nv = (g.len() as f64 * validation).floor() as usize;
        let nt = (g.len() as f64 * test).floor() as usize;
        out.validation.extend(&g[..nv]);
        out.test.extend(&g[nv..nv + nt]);
        out.train.extend(&g[nv + nt..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// `k` disjoint folds covering every index; each class is dealt round-robin.
pub fn stratified_folds(labels: &[BalanceCategory], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = by_class(labels, &mut rng);
    require(&groups, k)?;
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for g in &groups {
        for &i in g {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

/// Runs `fit_predict(train_idx, test_idx)` per fold and scores the returned
/// predictions for `test_idx` with F1-macro.
pub fn cross_validate<F>(labels: &[BalanceCategory], k: usize, seed: u64, mut fit_predict: F) -> Result<CvScore>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<BalanceCategory>>,
{
    let folds = stratified_folds(labels, k, seed)?;
    let mut scores = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let pred = fit_predict(&train, test)?;
        let truth: Vec<BalanceCategory> = test.iter().map(|&i| labels[i]).collect();
        scores.push(f1_macro(&truth, &pred)?);
    }
    let mean = scores.iter().sum::<f64>() / k as f64;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(CvScore {
        fold_scores: scores,
        mean,
        std,
    })
}
