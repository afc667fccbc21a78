//! Policy selection from operational context and the energy-saving RU search.
//!
//! The search evaluates each candidate mask on the digital twin: the same UEs
//! with the same demand re-attach under the candidate, the resulting state is
//! scored by a balance model, and the largest power saving among candidates
//! judged acceptable wins.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features;
use crate::labeler::{PolicyName, ThresholdPolicy};
use crate::learner::{Classifier, Prediction};
use crate::metrics;
use crate::model::{BalanceCategory, NetworkState, RuConfig, Scenario};
use crate::twin::{Deployment, TwinParams};

macro_rules! name_enum {
    ($ty:ident, $kind:literal, $($var:ident => $s:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $ty { $($var),+ }

        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().replace('-', "_").as_str() {
                    $($s => Ok($ty::$var),)+
                    _ => Err(Error::UnknownName { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

name_enum!(LocationType, "location type",
    Critical => "critical",
    Standard => "standard",
    EnergyPriority => "energy_priority",
);

name_enum!(TrafficLevel, "traffic level",
    Low => "low",
    Medium => "medium",
    High => "high",
);

name_enum!(SearchMode, "search mode",
    Single => "single",
    Exhaustive => "exhaustive",
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationalContext {
    pub location_type: LocationType,
    pub hour_of_day: u8,
    pub traffic_level: TrafficLevel,
}

impl OperationalContext {
    pub fn new(location_type: LocationType, hour_of_day: u8, traffic_level: TrafficLevel) -> Result<Self> {
        if hour_of_day > 23 {
            return Err(Error::Config(format!("hour_of_day {hour_of_day} is outside 0..=23")));
        }
        Ok(OperationalContext {
            location_type,
            hour_of_day,
            traffic_level,
        })
    }
}

/// One override. Unset fields match anything. `hours = [start, end]` matches
/// `start <= h < end`, wrapping past midnight when `start > end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    #[serde(default)]
    pub location_type: Option<LocationType>,
    #[serde(default)]
    pub hours: Option<[u8; 2]>,
    #[serde(default)]
    pub traffic_level: Option<TrafficLevel>,
    pub policy: PolicyName,
}

impl PolicyRule {
    pub fn matches(&self, ctx: &OperationalContext) -> bool {
        let hour_ok = match self.hours {
            None => true,
            Some([s, e]) if s < e => (s..e).contains(&ctx.hour_of_day),
            Some([s, e]) => ctx.hour_of_day >= s || ctx.hour_of_day < e,
        };
        hour_ok
            && self.location_type.is_none_or(|l| l == ctx.location_type)
            && self.traffic_level.is_none_or(|t| t == ctx.traffic_level)
    }
}

/// Ordered override rules; the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyTable {
    #[serde(default, rename = "rule")]
    pub rules: Vec<PolicyRule>,
}

impl PolicyTable {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: PolicyTable = toml::from_str(text).map_err(|e| Error::InvalidRules(e.to_string()))?;
        for (i, r) in table.rules.iter().enumerate() {
            if let Some([s, e]) = r.hours {
                if s > 23 || e > 24 || s == e {
                    return Err(Error::InvalidRules(format!("rule {}: bad hour range [{s}, {e}]", i + 1)));
                }
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn lookup(&self, ctx: &OperationalContext) -> Option<PolicyName> {
        self.rules.iter().find(|r| r.matches(ctx)).map(|r| r.policy)
    }
}

pub fn default_policy_for(location: LocationType) -> PolicyName {
    match location {
        LocationType::Critical => PolicyName::Conservative,
        LocationType::Standard => PolicyName::Moderate,
        LocationType::EnergyPriority => PolicyName::Aggressive,
    }
}

pub fn select_policy(ctx: &OperationalContext, table: Option<&PolicyTable>) -> ThresholdPolicy {
    let name = table
        .and_then(|t| t.lookup(ctx))
        .unwrap_or_else(|| default_policy_for(ctx.location_type));
    ThresholdPolicy::builtin(name)
}

/// Candidate masks in ascending bit order. `Single` switches off one active
/// RU at a time; `Exhaustive` lists every non-empty mask with no more active
/// RUs than `current`.
pub fn enumerate_candidates(current: &RuConfig, mode: SearchMode) -> Vec<RuConfig> {
    let n = current.n_rus();
    match mode {
        SearchMode::Single => {
            if current.n_active() < 2 {
                return Vec::new();
            }
            let mut out: Vec<RuConfig> = current
                .active_rus()
                .map(|i| current.without(i).expect("two or more active"))
                .collect();
            out.sort_by_key(RuConfig::bits);
            out
        }
        SearchMode::Exhaustive => (1u32..(1 << n))
            .filter(|b| b.count_ones() as usize <= current.n_active())
            .map(|b| RuConfig::from_bits(b, n).expect("non-empty mask"))
            .collect(),
    }
}

/// Scores a hypothetical network state.
pub trait BalanceModel: Sync {
    fn assess(&self, state: &NetworkState, prb_per_ru: u32) -> Result<Prediction>;
}

impl<T: Classifier> BalanceModel for T {
    fn assess(&self, state: &NetworkState, prb_per_ru: u32) -> Result<Prediction> {
        self.predict(&features::extract(state, prb_per_ru)?)
    }
}

/// The threshold rule applied to the state's true metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLabeler(pub ThresholdPolicy);

impl BalanceModel for OracleLabeler {
    fn assess(&self, state: &NetworkState, _prb_per_ru: u32) -> Result<Prediction> {
        let category = self.0.classify(&metrics::metrics(state)?);
        let mut proba = [0.0; 3];
        proba[category.index()] = 1.0;
        Ok(Prediction { category, proba })
    }
}

/// Everything the twin needs to replay a deployment under another mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicState {
    pub scenario: Scenario,
    #[serde(default)]
    pub twin: TwinParams,
    pub deployment: Deployment,
    pub config: RuConfig,
}

impl RicState {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.twin.validate(&self.scenario)?;
        let d = &self.deployment;
        if d.ue_positions.len() != self.scenario.n_ues || d.ue_demand.len() != self.scenario.n_ues {
            return Err(Error::InvalidState("deployment UE count differs from scenario".into()));
        }
        if d.ru_positions.len() != self.scenario.n_rus || self.config.n_rus() != self.scenario.n_rus {
            return Err(Error::InvalidState("deployment RU count differs from scenario".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, config: &RuConfig) -> Result<NetworkState> {
        self.deployment.evaluate(&self.scenario, &self.twin, config)
    }

    pub fn current(&self) -> Result<NetworkState> {
        self.evaluate(&self.config)
    }

    pub fn with_config(&self, config: RuConfig) -> RicState {
        RicState {
            config,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOutcome {
    pub config: RuConfig,
    pub prediction: Prediction,
    /// Current power minus the candidate's power.
    pub energy_savings_w: f64,
    pub predicted_state: NetworkState,
}

impl CandidateOutcome {
    pub fn predicted_category(&self) -> BalanceCategory {
        self.prediction.category
    }
}

pub fn evaluate_candidate(
    state: &RicState,
    current: &NetworkState,
    candidate: &RuConfig,
    model: &dyn BalanceModel,
) -> Result<CandidateOutcome> {
    let predicted_state = state.evaluate(candidate)?;
    let prediction = model.assess(&predicted_state, state.scenario.prb_per_ru)?;
    Ok(CandidateOutcome {
        config: candidate.clone(),
        prediction,
        energy_savings_w: current.power_w() - predicted_state.power_w(),
        predicted_state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub mode: SearchMode,
    /// Accept only well balanced candidates instead of well or moderately
    /// balanced ones.
    pub well_balanced_only: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            mode: SearchMode::Exhaustive,
            well_balanced_only: false,
        }
    }
}

impl OptimizeOptions {
    pub fn accepts(&self, c: BalanceCategory) -> bool {
        if self.well_balanced_only {
            c == BalanceCategory::WellBalanced
        } else {
            c.is_acceptable()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub policy: PolicyName,
    pub options: OptimizeOptions,
    pub current: RuConfig,
    pub current_power_w: f64,
    pub candidates: Vec<CandidateOutcome>,
    /// Index into `candidates`; `None` keeps the current configuration.
    pub chosen: Option<usize>,
}

impl Decision {
    pub fn config(&self) -> &RuConfig {
        match self.chosen {
            Some(i) => &self.candidates[i].config,
            None => &self.current,
        }
    }

    pub fn energy_savings_w(&self) -> f64 {
        self.chosen.map_or(0.0, |i| self.candidates[i].energy_savings_w)
    }

    /// One `key=value` line for the decision, then one per candidate.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "decision policy={} mode={} acceptance={} current={} current_power_w={:.4} chosen={} savings_w={:.4} fallback={} candidates={}",
            self.policy,
            self.options.mode,
            if self.options.well_balanced_only { "well_balanced" } else { "well_or_moderate" },
            self.current,
            self.current_power_w,
            self.config(),
            self.energy_savings_w(),
            self.chosen.is_none(),
            self.candidates.len(),
        );
        for (i, c) in self.candidates.iter().enumerate() {
            let p = c.prediction.proba;
            let _ = writeln!(
                out,
                "candidate mask={} n_active={} category={} p_imbalanced={:.4} p_moderately_balanced={:.4} p_well_balanced={:.4} power_w={:.4} savings_w={:.4} qos={:.2} chosen={}",
                c.config,
                c.config.n_active(),
                c.prediction.category.name(),
                p[0],
                p[1],
                p[2],
                c.predicted_state.power_w(),
                c.energy_savings_w,
                c.predicted_state.qos(),
                self.chosen == Some(i),
            );
        }
        out
    }
}

/// Picks the acceptable candidate with the largest positive saving. Equal
/// savings prefer more active RUs, then the lower mask value.
pub fn select_best(candidates: &[CandidateOutcome], options: &OptimizeOptions) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !options.accepts(c.prediction.category) || c.energy_savings_w <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let o = &candidates[b];
                (c.energy_savings_w, c.config.n_active(), std::cmp::Reverse(c.config.bits()))
                    .partial_cmp(&(o.energy_savings_w, o.config.n_active(), std::cmp::Reverse(o.config.bits())))
                    == Some(std::cmp::Ordering::Greater)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

pub fn optimize(
    state: &RicState,
    policy: PolicyName,
    model: &dyn BalanceModel,
    options: &OptimizeOptions,
) -> Result<Decision> {
    state.validate()?;
    let current = state.current()?;
    let configs = enumerate_candidates(&state.config, options.mode);

    #[cfg(feature = "parallel")]
    let candidates: Vec<CandidateOutcome> = {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|c| evaluate_candidate(state, &current, c, model))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let candidates: Vec<CandidateOutcome> = configs
        .iter()
        .map(|c| evaluate_candidate(state, &current, c, model))
        .collect::<Result<_>>()?;

    let chosen = select_best(&candidates, options);
    Ok(Decision {
        policy,
        options: *options,
        current: state.config.clone(),
        current_power_w: current.power_w(),
        candidates,
        chosen,
    })
}
