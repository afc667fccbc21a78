//! Shared domain types: scenarios, RU activation masks, network snapshots and
//! balance categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest deployment the file formats can describe.
pub const MAX_RUS: usize = 8;

/// Static description of a deployment to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub n_rus: usize,
    pub n_ues: usize,
    /// Downlink share of traffic, `0.7` for a 30/70 UL/DL split.
    pub dl_fraction: f64,
    /// Side of the square coverage area in meters.
    pub area_side: f64,
    pub prb_per_ru: u32,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_rus: 4,
            n_ues: 30,
            dl_fraction: 0.7,
            area_side: 1000.0,
            prb_per_ru: 100,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn new(n_rus: usize, n_ues: usize, seed: u64) -> Result<Self> {
        let s = Scenario {
            n_rus,
            n_ues,
            seed,
            ..Scenario::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_RUS).contains(&self.n_rus) {
            return Err(Error::InvalidScenario(format!(
                "n_rus must be in 2..={MAX_RUS}, got {}",
                self.n_rus
            )));
        }
        if self.n_ues == 0 {
            return Err(Error::InvalidScenario("n_ues must be at least 1".into()));
        }
        if !(self.dl_fraction > 0.0 && self.dl_fraction < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "dl_fraction must be in (0, 1), got {}",
                self.dl_fraction
            )));
        }
        if !(self.area_side.is_finite() && self.area_side > 0.0) {
            return Err(Error::InvalidScenario("area_side must be positive".into()));
        }
        if self.prb_per_ru == 0 {
            return Err(Error::InvalidScenario("prb_per_ru must be at least 1".into()));
        }
        Ok(())
    }
}

/// On/off state of every RU. At least one RU is always active.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RuConfig {
    mask: Vec<bool>,
}

impl RuConfig {
    pub fn new(mask: Vec<bool>) -> Result<Self> {
        if mask.is_empty() || mask.len() > MAX_RUS {
            return Err(Error::InvalidConfig(format!(
                "mask length must be in 1..={MAX_RUS}, got {}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&on| on) {
            return Err(Error::InvalidConfig("all RUs inactive".into()));
        }
        Ok(RuConfig { mask })
    }

    pub fn all_active(n_rus: usize) -> Result<Self> {
        Self::new(vec![true; n_rus])
    }

    /// Builds a mask where bit `i` of `bits` is the state of RU `i`.
    pub fn from_bits(bits: u32, n_rus: usize) -> Result<Self> {
        if n_rus < 32 && bits >> n_rus != 0 {
            return Err(Error::InvalidConfig(format!(
                "bits {bits:#b} exceed {n_rus} RUs"
            )));
        }
        Self::new((0..n_rus).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn bits(&self) -> u32 {
        self.mask
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &on)| acc | (u32::from(on) << i))
    }

    pub fn n_rus(&self) -> usize {
        self.mask.len()
    }

    pub fn n_active(&self) -> usize {
        self.mask.iter().filter(|&&on| on).count()
    }

    pub fn is_active(&self, ru: usize) -> bool {
        self.mask.get(ru).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn active_rus(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
    }

    /// Same RU count with `ru` switched off.
    pub fn without(&self, ru: usize) -> Result<Self> {
        let mut mask = self.mask.clone();
        if let Some(s) = mask.get_mut(ru) {
            *s = false;
        }
        Self::new(mask)
    }
}

/// Character `i` is RU `i`: `"1101"` has RU 2 asleep.
impl fmt::Display for RuConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &on in &self.mask {
            f.write_str(if on { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for RuConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mask = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidConfig(format!(
                    "unexpected character {other:?} in mask {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mask)
    }
}

impl TryFrom<String> for RuConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RuConfig> for String {
    fn from(c: RuConfig) -> String {
        c.to_string()
    }
}

/// Load-balance quality class. The integer codes are stable and used in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceCategory {
    Imbalanced = 0,
    ModeratelyBalanced = 1,
    WellBalanced = 2,
}

impl BalanceCategory {
    /// All categories ordered by code, least balanced first.
    pub const ALL: [BalanceCategory; 3] = [
        BalanceCategory::Imbalanced,
        BalanceCategory::ModeratelyBalanced,
        BalanceCategory::WellBalanced,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BalanceCategory::Imbalanced => "imbalanced",
            BalanceCategory::ModeratelyBalanced => "moderately_balanced",
            BalanceCategory::WellBalanced => "well_balanced",
        }
    }

    /// Accepted by the xApp search.
    pub fn is_acceptable(self) -> bool {
        self != BalanceCategory::Imbalanced
    }
}

impl fmt::Display for BalanceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// CV, Jain's index and load imbalance factor over active RU downlink loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceMetrics {
    pub cv: f64,
    pub jain: f64,
    pub lif: f64,
}

/// Raw parts of a [`NetworkState`]; validated by [`NetworkState::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateParts {
    pub config: RuConfig,
    pub dl_prb: Vec<f64>,
    pub ul_prb: Vec<f64>,
    pub ue_attach: Vec<Option<usize>>,
    pub ue_dl_demand: Vec<f64>,
    pub ue_tput_dl: Vec<f64>,
    pub ue_tput_ul: Vec<f64>,
    pub qos: f64,
    pub power_w: f64,
}

/// One observation window of the network: activation mask, per-RU PRB
/// utilisation (percent), per-UE attachment, demand and throughput, and the
/// aggregate QoS score and power draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    parts: StateParts,
}

impl NetworkState {
    pub fn new(parts: StateParts) -> Result<Self> {
        let n = parts.config.n_rus();
        let u = parts.ue_attach.len();
        let bad = |msg: String| Err(Error::InvalidState(msg));

        if parts.dl_prb.len() != n || parts.ul_prb.len() != n {
            return bad(format!("per-RU vectors must have {n} entries"));
        }
        if u == 0 {
            return bad("at least one UE required".into());
        }
        if [&parts.ue_dl_demand, &parts.ue_tput_dl, &parts.ue_tput_ul]
            .iter()
            .any(|v| v.len() != u)
        {
            return bad(format!("per-UE vectors must have {u} entries"));
        }
        for (i, (&dl, &ul)) in parts.dl_prb.iter().zip(&parts.ul_prb).enumerate() {
            if !(0.0..=100.0).contains(&dl) || !(0.0..=100.0).contains(&ul) {
                return bad(format!("RU {i}: PRB utilisation outside [0, 100]"));
            }
        }
        if parts
            .ue_dl_demand
            .iter()
            .chain(&parts.ue_tput_dl)
            .chain(&parts.ue_tput_ul)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("per-UE quantities must be finite and non-negative".into());
        }

        let mut attached_demand = vec![0.0; n];
        for (ue, att) in parts.ue_attach.iter().enumerate() {
            if let Some(ru) = *att {
                if !parts.config.is_active(ru) {
                    return bad(format!("UE {ue} attached to inactive or unknown RU {ru}"));
                }
                attached_demand[ru] += parts.ue_dl_demand[ue];
            }
        }
        for ru in 0..n {
            let loaded = parts.config.is_active(ru) && attached_demand[ru] > 0.0;
            if (parts.dl_prb[ru] > 0.0) != loaded {
                return bad(format!(
                    "RU {ru}: load {} inconsistent with activation/attached demand",
                    parts.dl_prb[ru]
                ));
            }
            if !parts.config.is_active(ru) && parts.ul_prb[ru] != 0.0 {
                return bad(format!("RU {ru}: inactive RU carries uplink load"));
            }
        }
        if !(0.0..=100.0).contains(&parts.qos) {
            return bad(format!("qos {} outside [0, 100]", parts.qos));
        }
        if !(parts.power_w.is_finite() && parts.power_w >= 0.0) {
            return bad(format!("power {} must be non-negative", parts.power_w));
        }
        Ok(NetworkState { parts })
    }

    pub fn config(&self) -> &RuConfig {
        &self.parts.config
    }

    pub fn n_rus(&self) -> usize {
        self.parts.config.n_rus()
    }

    pub fn n_ues(&self) -> usize {
        self.parts.ue_attach.len()
    }

    pub fn dl_prb(&self) -> &[f64] {
        &self.parts.dl_prb
    }

    pub fn ul_prb(&self) -> &[f64] {
        &self.parts.ul_prb
    }

    pub fn ue_attach(&self) -> &[Option<usize>] {
        &self.parts.ue_attach
    }

    pub fn ue_dl_demand(&self) -> &[f64] {
        &self.parts.ue_dl_demand
    }

    pub fn ue_tput_dl(&self) -> &[f64] {
        &self.parts.ue_tput_dl
    }

    pub fn ue_tput_ul(&self) -> &[f64] {
        &self.parts.ue_tput_ul
    }

    pub fn qos(&self) -> f64 {
        self.parts.qos
    }

    pub fn power_w(&self) -> f64 {
        self.parts.power_w
    }

    /// Downlink loads of the active RUs, in RU index order.
    pub fn active_dl_loads(&self) -> Vec<f64> {
        self.config().active_rus().map(|i| self.dl_prb()[i]).collect()
    }

    pub fn ue_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_rus()];
        for ru in self.ue_attach().iter().flatten() {
            counts[*ru] += 1;
        }
        counts
    }

    /// Aggregates the per-UE detail into the per-RU counters an E2 KPM report
    /// would carry.
    pub fn kpm(&self, snapshot_id: u64, prb_per_ru: u32) -> KpmRecord {
        let demand = self.ue_dl_demand();
        let total: f64 = demand.iter().sum();
        let mean = total / demand.len() as f64;
        let var = demand.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / demand.len() as f64;
        KpmRecord {
            snapshot_id,
            n_ues: self.n_ues() as u32,
            prb_per_ru,
            config: self.config().clone(),
            dl_prb: self.dl_prb().to_vec(),
            ul_prb: self.ul_prb().to_vec(),
            ue_count: self.ue_counts(),
            qos: self.qos(),
            power_w: self.power_w(),
            dl_tput: self.ue_tput_dl().iter().sum(),
            ul_tput: self.ue_tput_ul().iter().sum(),
            demand_total: total,
            demand_mean: mean,
            demand_std: var.sqrt(),
            demand_max: demand.iter().copied().fold(0.0, f64::max),
            labels: [None; 3],
        }
    }
}

/// Per-snapshot KPM counters: one row of the snapshot CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct KpmRecord {
    pub snapshot_id: u64,
    pub n_ues: u32,
    pub prb_per_ru: u32,
    pub config: RuConfig,
    pub dl_prb: Vec<f64>,
    pub ul_prb: Vec<f64>,
    pub ue_count: Vec<u32>,
    pub qos: f64,
    pub power_w: f64,
    pub dl_tput: f64,
    pub ul_tput: f64,
    pub demand_total: f64,
    pub demand_mean: f64,
    pub demand_std: f64,
    pub demand_max: f64,
    /// Labels under conservative, moderate and aggressive policies, when known.
    pub labels: [Option<BalanceCategory>; 3],
}

impl KpmRecord {
    pub fn n_rus(&self) -> usize {
        self.config.n_rus()
    }

    pub fn n_active(&self) -> usize {
        self.config.n_active()
    }

    pub fn active_dl_loads(&self) -> Vec<f64> {
        self.config.active_rus().map(|i| self.dl_prb[i]).collect()
    }

    pub fn n_attached(&self) -> u32 {
        self.ue_count.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.config.n_rus();
        if self.dl_prb.len() != n || self.ul_prb.len() != n || self.ue_count.len() != n {
            return Err(Error::InvalidState(format!(
                "per-RU columns must have {n} entries"
            )));
        }
        for ru in 0..n {
            if !self.config.is_active(ru)
                && (self.dl_prb[ru] != 0.0 || self.ul_prb[ru] != 0.0 || self.ue_count[ru] != 0)
            {
                return Err(Error::InvalidState(format!(
                    "inactive RU {ru} reports load or attached UEs"
                )));
            }
            if !(0.0..=100.0).contains(&self.dl_prb[ru]) || !(0.0..=100.0).contains(&self.ul_prb[ru]) {
                return Err(Error::InvalidState(format!(
                    "RU {ru}: PRB utilisation outside [0, 100]"
                )));
            }
        }
        if self.n_attached() > self.n_ues {
            return Err(Error::InvalidState("more attached UEs than UEs".into()));
        }
        if !(0.0..=100.0).contains(&self.qos) {
            return Err(Error::InvalidState(format!("qos {} outside [0, 100]", self.qos)));
        }
        let scalars = [
            self.power_w,
            self.dl_tput,
            self.ul_tput,
            self.demand_total,
            self.demand_mean,
            self.demand_std,
            self.demand_max,
        ];
        if scalars.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidState(
                "aggregate counters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}
