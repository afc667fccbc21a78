//! Non-learned comparators scored through the same evaluation path as the
//! trained models.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix};
use crate::model::{BalanceCategory, MAX_RUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    RandomPrior,
    EnergyFirst,
    ConservativeAll,
    MajorityClass,
    RuCountRule,
    LoadBasedRule,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::RandomPrior,
        BaselineKind::EnergyFirst,
        BaselineKind::ConservativeAll,
        BaselineKind::MajorityClass,
        BaselineKind::RuCountRule,
        BaselineKind::LoadBasedRule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::RandomPrior => "random-prior",
            BaselineKind::EnergyFirst => "energy-first",
            BaselineKind::ConservativeAll => "conservative-all",
            BaselineKind::MajorityClass => "majority-class",
            BaselineKind::RuCountRule => "ru-count-rule",
            BaselineKind::LoadBasedRule => "load-based-rule",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::UnknownName {
                kind: "baseline",
                value: s.to_string(),
            })
    }
}

/// A fitted strategy with whatever state it learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Baseline {
    /// Empirical label distribution, indexed by category code.
    RandomPrior { prior: [f64; 3] },
    EnergyFirst,
    ConservativeAll,
    MajorityClass { label: BalanceCategory },
    /// Modal label per active-RU count (index 0 unused), falling back to the
    /// global majority for counts never seen in training.
    RuCountRule { by_count: Vec<BalanceCategory> },
    /// Mean DL PRB cut points `low <= high` and the label of each region:
    /// `x <= low`, `low < x <= high`, `x > high`.
    LoadBasedRule { low: f64, high: f64, labels: [BalanceCategory; 3] },
}

const LOAD_GRID_STEP: f64 = 5.0;

fn column(x: &FeatureMatrix, name: &str) -> Result<usize> {
    let col = features::schema()
        .index_of(name)
        .ok_or(Error::UnknownName {
            kind: "feature",
            value: name.to_string(),
        })?;
    if x.n_rows() > 0 && x.n_cols() != features::schema().len() {
        return Err(Error::LengthMismatch {
            what: "feature matrix vs schema",
            left: x.n_cols(),
            right: features::schema().len(),
        });
    }
    Ok(col)
}

/// Most frequent label; ties resolve to the less balanced category.
fn modal(counts: &[u64; 3]) -> BalanceCategory {
    let mut best = 0;
    for c in 1..3 {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    BalanceCategory::ALL[best]
}

fn tally<'a>(labels: impl Iterator<Item = &'a BalanceCategory>) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for c in labels {
        counts[c.index()] += 1;
    }
    counts
}

pub fn fit_baseline(kind: BaselineKind, x: &FeatureMatrix, y: &[BalanceCategory]) -> Result<Baseline> {
    if y.is_empty() {
        return Err(Error::Empty("baseline training labels"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "feature rows vs labels",
            left: x.n_rows(),
            right: y.len(),
        });
    }
    let counts = tally(y.iter());
    let majority = modal(&counts);
    Ok(match kind {
        BaselineKind::RandomPrior => {
            let n = y.len() as f64;
            Baseline::RandomPrior {
                prior: counts.map(|c| c as f64 / n),
            }
        }
        BaselineKind::EnergyFirst => Baseline::EnergyFirst,
        BaselineKind::ConservativeAll => Baseline::ConservativeAll,
        BaselineKind::MajorityClass => Baseline::MajorityClass { label: majority },
        BaselineKind::RuCountRule => {
            let col = column(x, "n_active")?;
            let mut per = vec![[0u64; 3]; MAX_RUS + 1];
            for (i, c) in y.iter().enumerate() {
                let k = (x.get(i, col).round() as usize).min(MAX_RUS);
                per[k][c.index()] += 1;
            }
            let by_count = per
                .iter()
                .map(|p| if p.iter().sum::<u64>() == 0 { majority } else { modal(p) })
                .collect();
            Baseline::RuCountRule { by_count }
        }
        BaselineKind::LoadBasedRule => fit_load_rule(x, y, majority)?,
    })
}

fn fit_load_rule(x: &FeatureMatrix, y: &[BalanceCategory], majority: BalanceCategory) -> Result<Baseline> {
    let col = column(x, "dl_prb_mean")?;
    let steps = (100.0 / LOAD_GRID_STEP) as usize;
    // bins[b] counts rows whose value falls in (grid[b-1], grid[b]]; the last
    // bin collects everything above 100.
    let mut bins = vec![[0u64; 3]; steps + 2];
    for (i, c) in y.iter().enumerate() {
        let v = x.get(i, col);
        let b = if v <= 0.0 {
            0
        } else {
            ((v / LOAD_GRID_STEP).ceil() as usize).min(steps + 1)
        };
        bins[b][c.index()] += 1;
    }
    let mut prefix = vec![[0u64; 3]; bins.len() + 1];
    for (b, h) in bins.iter().enumerate() {
        for c in 0..3 {
            prefix[b + 1][c] = prefix[b][c] + h[c];
        }
    }
    let range = |a: usize, b: usize| -> [u64; 3] { std::array::from_fn(|c| prefix[b][c] - prefix[a][c]) };
    let region = |counts: [u64; 3]| -> (BalanceCategory, u64) {
        if counts.iter().sum::<u64>() == 0 {
            (majority, 0)
        } else {
            let m = modal(&counts);
            (m, counts[m.index()])
        }
    };

    let mut best: Option<(u64, usize, usize, [BalanceCategory; 3])> = None;
    for lo in 0..=steps {
        for hi in lo..=steps {
            let (a, ca) = region(range(0, lo + 1));
            let (b, cb) = region(range(lo + 1, hi + 1));
            let (c, cc) = region(range(hi + 1, bins.len()));
            let correct = ca + cb + cc;
            if best.is_none_or(|(bc, ..)| correct > bc) {
                best = Some((correct, lo, hi, [a, b, c]));
            }
        }
    }
    let (_, lo, hi, labels) = best.expect("grid is non-empty");
    Ok(Baseline::LoadBasedRule {
        low: lo as f64 * LOAD_GRID_STEP,
        high: hi as f64 * LOAD_GRID_STEP,
        labels,
    })
}

impl Baseline {
    pub fn kind(&self) -> BaselineKind {
        match self {
            Baseline::RandomPrior { .. } => BaselineKind::RandomPrior,
            Baseline::EnergyFirst => BaselineKind::EnergyFirst,
            Baseline::ConservativeAll => BaselineKind::ConservativeAll,
            Baseline::MajorityClass { .. } => BaselineKind::MajorityClass,
            Baseline::RuCountRule { .. } => BaselineKind::RuCountRule,
            Baseline::LoadBasedRule { .. } => BaselineKind::LoadBasedRule,
        }
    }

    /// Prediction for one feature row. `row` and `seed` only matter for
    /// [`Baseline::RandomPrior`], whose draw for row `i` comes from its own
    /// stream so that results do not depend on evaluation order.
    pub fn predict_row(&self, x: &[f64], row: u64, seed: u64) -> BalanceCategory {
        match self {
            Baseline::RandomPrior { prior } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(row);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += prior[c];
                    if u < acc {
                        return BalanceCategory::ALL[c];
                    }
                }
                BalanceCategory::ALL[prior.iter().rposition(|p| *p > 0.0).unwrap_or(0)]
            }
            Baseline::EnergyFirst => BalanceCategory::WellBalanced,
            Baseline::ConservativeAll => BalanceCategory::Imbalanced,
            Baseline::MajorityClass { label } => *label,
            Baseline::RuCountRule { by_count } => {
                let col = features::schema().index_of("n_active").expect("schema feature");
                let k = (x[col].round().max(0.0) as usize).min(by_count.len() - 1);
                by_count[k]
            }
            Baseline::LoadBasedRule { low, high, labels } => {
                let col = features::schema().index_of("dl_prb_mean").expect("schema feature");
                let v = x[col];
                if v <= *low {
                    labels[0]
                } else if v <= *high {
                    labels[1]
                } else {
                    labels[2]
                }
            }
        }
    }

    pub fn predict_batch(&self, x: &FeatureMatrix, seed: u64) -> Result<Vec<BalanceCategory>> {
        if x.n_rows() > 0 && x.n_cols() != features::schema().len() {
            return Err(Error::LengthMismatch {
                what: "feature matrix vs schema",
                left: x.n_cols(),
                right: features::schema().len(),
            });
        }
        Ok((0..x.n_rows())
            .map(|i| self.predict_row(x.row(i), i as u64, seed))
            .collect())
    }
}
