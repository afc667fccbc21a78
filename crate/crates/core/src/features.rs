//! Engineered features computed from KPM counters.
//!
//! The schema deliberately leaves out CV, Jain's index and LIF: they define
//! the labels. Load statistics such as `dl_prb_std` stay in, so the models
//! have to learn the ratio structure themselves. No raw per-RU columns are
//! exposed, so features do not depend on RU numbering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{KpmRecord, NetworkState};

pub const SCHEMA_VERSION: &str = "kpm-features-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    LoadDistribution,
    ResourceUtilization,
    ConnectionPatterns,
    TrafficCharacteristics,
    PerformanceIndicators,
}

use FeatureCategory::*;

const FEATURES: &[(&str, FeatureCategory)] = &[
    ("dl_prb_mean", LoadDistribution),
    ("dl_prb_std", LoadDistribution),
    ("dl_prb_min", LoadDistribution),
    ("dl_prb_max", LoadDistribution),
    ("dl_prb_p25", LoadDistribution),
    ("dl_prb_p50", LoadDistribution),
    ("dl_prb_p75", LoadDistribution),
    ("ul_prb_mean", LoadDistribution),
    ("ul_prb_std", LoadDistribution),
    ("n_active", ResourceUtilization),
    ("active_ratio", ResourceUtilization),
    ("total_dl_prb", ResourceUtilization),
    ("prb_used_per_active_ru", ResourceUtilization),
    ("active_ru_efficiency_ratio", ResourceUtilization),
    ("offered_load_ratio", ResourceUtilization),
    ("num_ues", ConnectionPatterns),
    ("ue_per_ru_mean", ConnectionPatterns),
    ("ue_per_ru_std", ConnectionPatterns),
    ("ue_per_ru_max", ConnectionPatterns),
    ("detached_ues", ConnectionPatterns),
    ("dl_ul_asymmetry", TrafficCharacteristics),
    ("demand_mean", TrafficCharacteristics),
    ("demand_std", TrafficCharacteristics),
    ("demand_max_to_mean", TrafficCharacteristics),
    ("power_w", PerformanceIndicators),
    ("power_per_active_ru", PerformanceIndicators),
    ("dl_tput_total", PerformanceIndicators),
    ("tput_per_active_ru", PerformanceIndicators),
    ("tput_per_watt", PerformanceIndicators),
];

/// Ordered feature names with their categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSchema;

impl FeatureSchema {
    pub fn version(&self) -> &'static str {
        SCHEMA_VERSION
    }

    pub fn len(&self) -> usize {
        FEATURES.len()
    }

    pub fn is_empty(&self) -> bool {
        FEATURES.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> {
        FEATURES.iter().map(|(n, _)| *n)
    }

    pub fn entries(&self) -> &'static [(&'static str, FeatureCategory)] {
        FEATURES
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        FEATURES.iter().position(|(n, _)| *n == name)
    }

    pub fn check_names<S: AsRef<str>>(&self, names: &[S]) -> Result<()> {
        let ok = names.len() == FEATURES.len() && names.iter().zip(self.names()).all(|(a, b)| a.as_ref() == b);
        if ok {
            Ok(())
        } else {
            Err(Error::SchemaMismatch {
                expected: self.names().collect::<Vec<_>>().join(","),
                actual: names.iter().map(|n| n.as_ref()).collect::<Vec<_>>().join(","),
            })
        }
    }
}

pub fn schema() -> FeatureSchema {
    FeatureSchema
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_version: String,
}

impl FeatureVector {
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                actual: self.schema_version.clone(),
            });
        }
        if self.values.len() != FEATURES.len() {
            return Err(Error::LengthMismatch {
                what: "feature vector vs schema",
                left: self.values.len(),
                right: FEATURES.len(),
            });
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || !data.len().is_multiple_of(n_cols) {
            return Err(Error::LengthMismatch {
                what: "matrix data vs column count",
                left: data.len(),
                right: n_cols,
            });
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Empty("rows of unequal length"));
        }
        Self::new(n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_cols: self.n_cols,
            data,
        }
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn extract_record(r: &KpmRecord) -> Result<FeatureVector> {
    let mut dl = r.active_dl_loads();
    if dl.is_empty() {
        return Err(Error::NoActiveRus);
    }
    dl.sort_by(f64::total_cmp);
    let ul: Vec<f64> = r.config.active_rus().map(|i| r.ul_prb[i]).collect();
    let ues: Vec<f64> = r.config.active_rus().map(|i| f64::from(r.ue_count[i])).collect();

    let k = r.n_active() as f64;
    let cap = f64::from(r.prb_per_ru);
    let total_dl: f64 = dl.iter().sum();
    let dl_mean = total_dl / k;
    let served_prb = total_dl / 100.0 * cap;
    let attached = f64::from(r.n_attached());

    let values = vec![
        dl_mean,
        metrics::population_std(&dl)?,
        dl[0],
        dl[dl.len() - 1],
        percentile(&dl, 0.25),
        percentile(&dl, 0.5),
        percentile(&dl, 0.75),
        ul.iter().sum::<f64>() / k,
        metrics::population_std(&ul)?,
        k,
        k / r.n_rus() as f64,
        total_dl,
        served_prb / k,
        ratio(served_prb, k * cap),
        ratio(r.demand_total, k * cap),
        attached,
        ues.iter().sum::<f64>() / k,
        metrics::population_std(&ues)?,
        ues.iter().copied().fold(0.0, f64::max),
        f64::from(r.n_ues) - attached,
        ratio(r.dl_tput, r.ul_tput),
        r.demand_mean,
        r.demand_std,
        ratio(r.demand_max, r.demand_mean),
        r.power_w,
        r.power_w / k,
        r.dl_tput,
        r.dl_tput / k,
        ratio(r.dl_tput, r.power_w),
    ];
    debug_assert_eq!(values.len(), FEATURES.len());
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState(format!(
            "non-finite feature in snapshot {}",
            r.snapshot_id
        )));
    }
    Ok(FeatureVector {
        values,
        schema_version: SCHEMA_VERSION.to_string(),
    })
}

pub fn extract(state: &NetworkState, prb_per_ru: u32) -> Result<FeatureVector> {
    extract_record(&state.kpm(0, prb_per_ru))
}

/// Row-wise [`extract_record`]; row order follows `records`.
pub fn extract_batch(records: &[KpmRecord]) -> Result<FeatureMatrix> {
    #[cfg(feature = "parallel")]
    let rows: Vec<FeatureVector> = {
        use rayon::prelude::*;
        records.par_iter().map(extract_record).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<FeatureVector> = records.iter().map(extract_record).collect::<Result<_>>()?;
    to_matrix(rows)
}

pub fn extract_batch_serial(records: &[KpmRecord]) -> Result<FeatureMatrix> {
    let rows: Vec<FeatureVector> = records.iter().map(extract_record).collect::<Result<_>>()?;
    to_matrix(rows)
}

fn to_matrix(rows: Vec<FeatureVector>) -> Result<FeatureMatrix> {
    let mut data = Vec::with_capacity(rows.len() * FEATURES.len());
    for r in rows {
        data.extend(r.values);
    }
    FeatureMatrix::new(FEATURES.len(), data)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::model::{RuConfig, StateParts};
    use crate::twin::{generate_dataset, TwinParams};
    use crate::Scenario;

    fn record(mask: &str, dl: Vec<f64>) -> KpmRecord {
        let n = dl.len();
        let config: RuConfig = mask.parse().unwrap();
        let ue_count = (0..n).map(|i| u32::from(config.is_active(i)) * 3).collect();
        KpmRecord {
            snapshot_id: 0,
            n_ues: 12,
            prb_per_ru: 100,
            ul_prb: dl.iter().map(|p| p * 0.4).collect(),
            dl_prb: dl,
            config,
            ue_count,
            qos: 90.0,
            power_w: 15.0,
            dl_tput: 120.0,
            ul_tput: 50.0,
            demand_total: 120.0,
            demand_mean: 10.0,
            demand_std: 4.0,
            demand_max: 20.0,
            labels: [None; 3],
        }
    }

    #[test]
    fn schema_is_well_formed() {
        let s = schema();
        let names: HashSet<_> = s.names().collect();
        assert_eq!(names.len(), s.len());
        for required in ["dl_prb_std", "num_ues", "active_ru_efficiency_ratio"] {
            assert!(s.index_of(required).is_some(), "{required}");
        }
        for cat in [
            LoadDistribution,
            ResourceUtilization,
            ConnectionPatterns,
            TrafficCharacteristics,
            PerformanceIndicators,
        ] {
            assert!(s.entries().iter().any(|(_, c)| *c == cat));
        }
        for banned in ["cv", "jain", "lif"] {
            assert!(s.names().all(|n| !n.contains(banned)));
        }
    }

    #[test]
    fn std_is_active_only_population_std() {
        let f = extract_record(&record("1110", vec![20.0, 40.0, 60.0, 0.0])).unwrap();
        let i = schema().index_of("dl_prb_std").unwrap();
        assert_abs_diff_eq!(f.values[i], 16.3299, epsilon = 1e-4);
        let m = crate::metrics::from_config(&"1110".parse().unwrap(), &[20.0, 40.0, 60.0, 0.0]).unwrap();
        let mean = f.values[schema().index_of("dl_prb_mean").unwrap()];
        assert_abs_diff_eq!(f.values[i], m.cv * mean, epsilon = 1e-9);
        assert_eq!(f.values[schema().index_of("dl_prb_p50").unwrap()], 40.0);
        assert_eq!(f.values[schema().index_of("dl_prb_p25").unwrap()], 30.0);
    }

    #[test]
    fn idle_network_features() {
        let s = crate::Scenario::new(4, 3, 0).unwrap();
        let state = NetworkState::new(StateParts {
            config: RuConfig::all_active(4).unwrap(),
            dl_prb: vec![0.0; 4],
            ul_prb: vec![0.0; 4],
            ue_attach: vec![Some(0), Some(1), Some(2)],
            ue_dl_demand: vec![0.0; 3],
            ue_tput_dl: vec![0.0; 3],
            ue_tput_ul: vec![0.0; 3],
            qos: 100.0,
            power_w: 16.0,
        })
        .unwrap();
        let f = extract(&state, s.prb_per_ru).unwrap();
        assert_eq!(f.values[schema().index_of("dl_prb_std").unwrap()], 0.0);
        assert_eq!(f.values[schema().index_of("detached_ues").unwrap()], 0.0);
        f.check().unwrap();
    }

    #[test]
    fn batch_matches_rowwise_and_serial() {
        let s = Scenario::new(5, 30, 0).unwrap();
        let snaps = generate_dataset(&s, &TwinParams::default(), 200, 3).unwrap();
        let recs: Vec<_> = snaps.iter().map(|sn| sn.state.kpm(sn.id, 100)).collect();
        let m = extract_batch(&recs).unwrap();
        assert_eq!(m.n_rows(), 200);
        assert_eq!(m.n_cols(), schema().len());
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(m.row(i), extract_record(r).unwrap().values.as_slice());
        }
        assert_eq!(m, extract_batch_serial(&recs).unwrap());
    }

    #[test]
    fn relabelling_rus_leaves_features_unchanged() {
        let a = extract_record(&record("1101", vec![10.0, 80.0, 0.0, 30.0])).unwrap();
        let b = extract_record(&record("1011", vec![30.0, 0.0, 10.0, 80.0])).unwrap();
        assert_eq!(a.values, b.values);
    }
}
