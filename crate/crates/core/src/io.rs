//! File formats: the wide snapshot CSV with its JSON sidecar, the feature CSV,
//! model files and optimizer state files.
//!
//! Floats are written in the shortest form that parses back to the same
//! value, so rewriting a file that was read is byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix, SCHEMA_VERSION};
use crate::labeler::PolicyName;
use crate::model::{BalanceCategory, KpmRecord, RuConfig, Scenario, MAX_RUS};
use crate::twin::TwinParams;

pub const SNAPSHOT_CSV_VERSION: &str = "snapshot-csv-v1";
pub const NULL_MARKER: &str = "NA";

const LEAD: [&str; 5] = ["snapshot_id", "scenario_n_rus", "n_ues", "prb_per_ru", "mask"];
const TAIL: [&str; 9] = [
    "n_active",
    "qos",
    "power_w",
    "dl_tput",
    "ul_tput",
    "demand_total",
    "demand_mean",
    "demand_std",
    "demand_max",
];

fn label_column(p: PolicyName) -> String {
    format!("label_{p}")
}

/// Column names of the snapshot CSV, without the optional label columns.
pub fn snapshot_columns() -> Vec<String> {
    let mut cols: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    for kind in ["dl_prb", "ul_prb", "ue_count"] {
        cols.extend((0..MAX_RUS).map(|i| format!("ru{i}_{kind}")));
    }
    cols.extend(TAIL.iter().map(|s| s.to_string()));
    cols
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv(e),
        _ => Error::malformed(path, line, e.to_string()),
    }
}

/// Policies whose label column appears in the file: those with at least one
/// labelled record.
fn labelled_policies(records: &[KpmRecord]) -> Vec<PolicyName> {
    PolicyName::ALL
        .into_iter()
        .filter(|p| records.iter().any(|r| r.labels[p.index()].is_some()))
        .collect()
}

pub fn write_snapshot_csv(path: &Path, records: &[KpmRecord]) -> Result<()> {
    let policies = labelled_policies(records);
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = snapshot_columns();
    header.extend(policies.iter().map(|p| label_column(*p)));
    w.write_record(&header)?;
    for r in records {
        r.validate()?;
        let n = r.n_rus();
        let mut row: Vec<String> = vec![
            r.snapshot_id.to_string(),
            n.to_string(),
            r.n_ues.to_string(),
            r.prb_per_ru.to_string(),
            r.config.to_string(),
        ];
        let pad = |row: &mut Vec<String>, vals: Vec<String>| {
            row.extend(vals);
            row.extend((n..MAX_RUS).map(|_| NULL_MARKER.to_string()));
        };
        pad(&mut row, r.dl_prb.iter().map(|v| fmt_f64(*v)).collect());
        pad(&mut row, r.ul_prb.iter().map(|v| fmt_f64(*v)).collect());
        pad(&mut row, r.ue_count.iter().map(|v| v.to_string()).collect());
        row.push(r.n_active().to_string());
        for v in [
            r.qos,
            r.power_w,
            r.dl_tput,
            r.ul_tput,
            r.demand_total,
            r.demand_mean,
            r.demand_std,
            r.demand_max,
        ] {
            row.push(fmt_f64(v));
        }
        for p in &policies {
            row.push(r.labels[p.index()].map_or(String::new(), |c| c.code().to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::malformed(self.path, self.line, msg)
    }

    fn field(&self, i: usize, name: &str) -> Result<&str> {
        self.rec.get(i).ok_or_else(|| self.err(format!("missing column {name}")))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T> {
        let s = self.field(i, name)?;
        s.trim()
            .parse()
            .map_err(|_| self.err(format!("column {name}: cannot parse `{s}`")))
    }
}

pub fn read_snapshot_csv(path: &Path) -> Result<Vec<KpmRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let base = snapshot_columns();
    if header.len() < base.len() || header.iter().zip(&base).any(|(a, b)| a != b) {
        return Err(Error::malformed(path, 1, "header does not match the snapshot schema"));
    }
    let mut policies = Vec::new();
    for name in header.iter().skip(base.len()) {
        let p = PolicyName::ALL
            .into_iter()
            .find(|p| label_column(*p) == name)
            .ok_or_else(|| Error::malformed(path, 1, format!("unexpected column `{name}`")))?;
        if policies.contains(&p) {
            return Err(Error::malformed(path, 1, format!("duplicate column `{name}`")));
        }
        policies.push(p);
    }

    let dl0 = LEAD.len();
    let ul0 = dl0 + MAX_RUS;
    let ue0 = ul0 + MAX_RUS;
    let t0 = ue0 + MAX_RUS;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { path, line, rec: &rec };
        let n: usize = row.parse(1, "scenario_n_rus")?;
        if !(1..=MAX_RUS).contains(&n) {
            return Err(row.err(format!("scenario_n_rus {n} outside 1..={MAX_RUS}")));
        }
        let config: RuConfig = row
            .field(4, "mask")?
            .parse()
            .map_err(|e: Error| row.err(e.to_string()))?;
        if config.n_rus() != n {
            return Err(row.err("mask length differs from scenario_n_rus"));
        }
        let per_ru = |start: usize, kind: &str| -> Result<Vec<String>> {
            let mut vals = Vec::with_capacity(n);
            for i in 0..MAX_RUS {
                let name = format!("ru{i}_{kind}");
                let s = row.field(start + i, &name)?;
                match (i < n, s == NULL_MARKER) {
                    (true, false) => vals.push(s.to_string()),
                    (false, true) => {}
                    (true, true) => return Err(row.err(format!("{name} is null for a present RU"))),
                    (false, false) => return Err(row.err(format!("{name} must be {NULL_MARKER} for an absent RU"))),
                }
            }
            Ok(vals)
        };
        let floats = |vals: Vec<String>, kind: &str| -> Result<Vec<f64>> {
            vals.iter()
                .map(|s| s.parse::<f64>().map_err(|_| row.err(format!("{kind}: cannot parse `{s}`"))))
                .collect()
        };
        let dl_prb = floats(per_ru(dl0, "dl_prb")?, "dl_prb")?;
        let ul_prb = floats(per_ru(ul0, "ul_prb")?, "ul_prb")?;
        let ue_count = per_ru(ue0, "ue_count")?
            .iter()
            .map(|s| s.parse::<u32>().map_err(|_| row.err(format!("ue_count: cannot parse `{s}`"))))
            .collect::<Result<Vec<u32>>>()?;
        let n_active: usize = row.parse(t0, "n_active")?;
        if n_active != config.n_active() {
            return Err(row.err("n_active disagrees with mask"));
        }
        let f = |k: usize| row.parse::<f64>(t0 + k, TAIL[k]);
        let mut labels = [None; 3];
        for (j, p) in policies.iter().enumerate() {
            let s = row.field(base.len() + j, "label")?;
            if !s.is_empty() {
                let code: u8 = s.parse().map_err(|_| row.err(format!("label `{s}` is not a code")))?;
                labels[p.index()] =
                    Some(BalanceCategory::from_code(code).ok_or_else(|| row.err(format!("label code {code} unknown")))?);
            }
        }
        let record = KpmRecord {
            snapshot_id: row.parse(0, "snapshot_id")?,
            n_ues: row.parse(2, "n_ues")?,
            prb_per_ru: row.parse(3, "prb_per_ru")?,
            config,
            dl_prb,
            ul_prb,
            ue_count,
            qos: f(1)?,
            power_w: f(2)?,
            dl_tput: f(3)?,
            ul_tput: f(4)?,
            demand_total: f(5)?,
            demand_mean: f(6)?,
            demand_std: f(7)?,
            demand_max: f(8)?,
            labels,
        };
        record.validate().map_err(|e| row.err(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Sidecar describing how a snapshot file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub csv_version: String,
    pub feature_schema_version: String,
    pub seed: u64,
    pub n_snapshots: usize,
    pub scenario: Scenario,
    pub twin: TwinParams,
    #[serde(default)]
    pub labelled: Vec<PolicyName>,
}

impl DatasetMeta {
    pub fn new(scenario: &Scenario, twin: &TwinParams, seed: u64, n_snapshots: usize) -> Self {
        DatasetMeta {
            csv_version: SNAPSHOT_CSV_VERSION.to_string(),
            feature_schema_version: SCHEMA_VERSION.to_string(),
            seed,
            n_snapshots,
            scenario: scenario.clone(),
            twin: twin.clone(),
            labelled: Vec::new(),
        }
    }
}

/// `data.csv` → `data.csv.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line() as u64, e.to_string()))
}

pub fn write_dataset_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    write_json(path, meta)
}

pub fn read_dataset_meta(path: &Path) -> Result<DatasetMeta> {
    let meta: DatasetMeta = read_json(path)?;
    if meta.csv_version != SNAPSHOT_CSV_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SNAPSHOT_CSV_VERSION.to_string(),
            actual: meta.csv_version,
        });
    }
    Ok(meta)
}

/// Feature table: snapshot ids, the feature matrix and any known labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub snapshot_ids: Vec<u64>,
    pub x: FeatureMatrix,
    pub labels: Vec<[Option<BalanceCategory>; 3]>,
}

impl FeatureTable {
    pub fn from_records(records: &[KpmRecord]) -> Result<Self> {
        Ok(FeatureTable {
            snapshot_ids: records.iter().map(|r| r.snapshot_id).collect(),
            x: features::extract_batch(records)?,
            labels: records.iter().map(|r| r.labels).collect(),
        })
    }

    /// Labels for `policy`; every row must have one.
    pub fn labels_for(&self, policy: PolicyName) -> Result<Vec<BalanceCategory>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l[policy.index()].ok_or_else(|| {
                    Error::Config(format!(
                        "snapshot {} has no {policy} label; run `label --policy {policy}` first",
                        self.snapshot_ids[i]
                    ))
                })
            })
            .collect()
    }
}

pub fn write_feature_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let policies: Vec<PolicyName> = PolicyName::ALL
        .into_iter()
        .filter(|p| table.labels.iter().any(|l| l[p.index()].is_some()))
        .collect();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["snapshot_id".to_string()];
    header.extend(features::schema().names().map(String::from));
    header.extend(policies.iter().map(|p| label_column(*p)));
    w.write_record(&header)?;
    for (i, row) in table.x.rows().enumerate() {
        let mut out = vec![table.snapshot_ids[i].to_string()];
        out.extend(row.iter().map(|v| fmt_f64(*v)));
        for p in &policies {
            out.push(table.labels[i][p.index()].map_or(String::new(), |c| c.code().to_string()));
        }
        w.write_record(&out)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = features::schema().len();
    let names: Vec<&str> = header.iter().skip(1).take(d).collect();
    if header.get(0) != Some("snapshot_id") || names.len() != d || features::schema().check_names(&names).is_err() {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.to_string(),
            actual: format!("{}: unrecognised feature header", path.display()),
        });
    }
    let mut policies = Vec::new();
    for name in header.iter().skip(1 + d) {
        let p = PolicyName::ALL
            .into_iter()
            .find(|p| label_column(*p) == name)
            .ok_or_else(|| Error::malformed(path, 1, format!("unexpected column `{name}`")))?;
        policies.push(p);
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { path, line, rec: &rec };
        ids.push(row.parse::<u64>(0, "snapshot_id")?);
        for j in 0..d {
            let v: f64 = row.parse(1 + j, names[j])?;
            if !v.is_finite() {
                return Err(row.err(format!("{} is not finite", names[j])));
            }
            data.push(v);
        }
        let mut l = [None; 3];
        for (j, p) in policies.iter().enumerate() {
            let s = row.field(1 + d + j, "label")?;
            if !s.is_empty() {
                let code: u8 = s.parse().map_err(|_| row.err(format!("label `{s}` is not a code")))?;
                l[p.index()] = Some(BalanceCategory::from_code(code).ok_or_else(|| row.err("unknown label code"))?);
            }
        }
        labels.push(l);
    }
    Ok(FeatureTable {
        snapshot_ids: ids,
        x: FeatureMatrix::new(d, data)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::{attach_labels, ThresholdPolicy};
    use crate::twin::generate_dataset;

    fn records(n_rus: usize, n: usize) -> Vec<KpmRecord> {
        let s = Scenario::new(n_rus, 30, 0).unwrap();
        generate_dataset(&s, &TwinParams::default(), n, 11)
            .unwrap()
            .iter()
            .map(|snap| snap.state.kpm(snap.id, s.prb_per_ru))
            .collect()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut recs = records(6, 1000);
        attach_labels(&mut recs, &ThresholdPolicy::builtin(PolicyName::Moderate)).unwrap();
        write_snapshot_csv(&path, &recs).unwrap();
        let back = read_snapshot_csv(&path).unwrap();
        assert_eq!(back, recs);
        let again = dir.path().join("e.csv");
        write_snapshot_csv(&again, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn absent_rus_hold_null_marker() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_snapshot_csv(&path, &records(4, 3)).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let header = rdr.headers().unwrap().clone();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            for (name, v) in header.iter().zip(rec.iter()) {
                let absent = (4..8).any(|i| name.starts_with(&format!("ru{i}_")));
                assert_eq!(absent, v == NULL_MARKER, "{name}={v}");
            }
        }
    }

    #[test]
    fn labels_decode_to_labeler_output() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut recs = records(5, 300);
        for p in PolicyName::ALL {
            attach_labels(&mut recs, &ThresholdPolicy::builtin(p)).unwrap();
        }
        write_snapshot_csv(&path, &recs).unwrap();
        for r in read_snapshot_csv(&path).unwrap() {
            for p in PolicyName::ALL {
                assert_eq!(r.labels[p.index()], Some(ThresholdPolicy::builtin(p).classify_record(&r).unwrap()));
            }
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_snapshot_csv(&path, &records(4, 5)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen(",1", ",x", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_snapshot_csv(&path) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(read_snapshot_csv(&path), Err(Error::Malformed { line: 1, .. })));
        assert!(matches!(read_feature_csv(&path), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut recs = records(4, 200);
        attach_labels(&mut recs, &ThresholdPolicy::builtin(PolicyName::Aggressive)).unwrap();
        let table = FeatureTable::from_records(&recs).unwrap();
        write_feature_csv(&path, &table).unwrap();
        let back = read_feature_csv(&path).unwrap();
        assert_eq!(back, table);
        assert!(back.labels_for(PolicyName::Aggressive).is_ok());
        assert!(back.labels_for(PolicyName::Moderate).is_err());
    }

    #[test]
    fn meta_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = meta_path(&dir.path().join("d.csv"));
        assert!(path.to_string_lossy().ends_with("d.csv.meta.json"));
        let meta = DatasetMeta::new(&Scenario::default(), &TwinParams::default(), 42, 10);
        write_dataset_meta(&path, &meta).unwrap();
        assert_eq!(read_dataset_meta(&path).unwrap(), meta);
        let mut bad = meta.clone();
        bad.csv_version = "snapshot-csv-v0".into();
        write_dataset_meta(&path, &bad).unwrap();
        assert!(matches!(read_dataset_meta(&path), Err(Error::SchemaMismatch { .. })));
    }
}
