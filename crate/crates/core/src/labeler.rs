//! Threshold policies and the rule that turns balance metrics into a
//! category. This is the ground truth the learners are trained against.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{BalanceCategory, BalanceMetrics, KpmRecord, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Conservative,
    Moderate,
    Aggressive,
}

impl PolicyName {
    pub const ALL: [PolicyName; 3] = [
        PolicyName::Conservative,
        PolicyName::Moderate,
        PolicyName::Aggressive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Conservative => "conservative",
            PolicyName::Moderate => "moderate",
            PolicyName::Aggressive => "aggressive",
        }
    }

    /// Position in [`PolicyName::ALL`], also the label-column slot.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conservative" => Ok(PolicyName::Conservative),
            "moderate" => Ok(PolicyName::Moderate),
            "aggressive" => Ok(PolicyName::Aggressive),
            _ => Err(Error::UnknownName {
                kind: "policy",
                value: s.to_string(),
            }),
        }
    }
}

/// Category boundaries.
///
/// * `alpha`: CV upper bound for well balanced
/// * `beta`: Jain lower bound for well balanced
/// * `gamma`: LIF upper bound for well balanced
/// * `delta`: CV upper bound for moderately balanced
/// * `epsilon`: Jain lower bound for moderately balanced
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub name: PolicyName,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl ThresholdPolicy {
    pub fn builtin(name: PolicyName) -> Self {
        let (alpha, beta, gamma, delta, epsilon) = match name {
            PolicyName::Conservative => (0.3, 0.8, 1.0, 0.5, 0.7),
            PolicyName::Moderate => (0.5, 0.7, 1.5, 0.7, 0.6),
            PolicyName::Aggressive => (0.7, 0.6, 2.0, 0.9, 0.5),
        };
        ThresholdPolicy {
            name,
            alpha,
            beta,
            gamma,
            delta,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta, self.epsilon];
        if all.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config("thresholds must be finite and non-negative".into()));
        }
        if self.alpha >= self.delta {
            return Err(Error::Config("alpha must be below delta".into()));
        }
        if self.epsilon >= self.beta {
            return Err(Error::Config("epsilon must be below beta".into()));
        }
        Ok(())
    }

    /// Well balanced when all three conjuncts hold; otherwise moderately
    /// balanced when either the CV band or the Jain band matches; otherwise
    /// imbalanced. LIF only enters the first test.
    pub fn classify(&self, m: &BalanceMetrics) -> BalanceCategory {
        if m.cv <= self.alpha && m.jain >= self.beta && m.lif <= self.gamma {
            BalanceCategory::WellBalanced
        } else if (self.alpha < m.cv && m.cv <= self.delta)
            || (self.epsilon <= m.jain && m.jain < self.beta)
        {
            BalanceCategory::ModeratelyBalanced
        } else {
            BalanceCategory::Imbalanced
        }
    }

    pub fn classify_state(&self, state: &NetworkState) -> Result<BalanceCategory> {
        Ok(self.classify(&metrics::metrics(state)?))
    }

    pub fn classify_record(&self, record: &KpmRecord) -> Result<BalanceCategory> {
        Ok(self.classify(&metrics::record_metrics(record)?))
    }
}

pub fn builtin_policy(name: PolicyName) -> ThresholdPolicy {
    ThresholdPolicy::builtin(name)
}

pub fn classify(m: &BalanceMetrics, policy: &ThresholdPolicy) -> BalanceCategory {
    policy.classify(m)
}

/// Labels every record, preserving order.
pub fn label_dataset(records: &[KpmRecord], policy: &ThresholdPolicy) -> Result<Vec<BalanceCategory>> {
    records.iter().map(|r| policy.classify_record(r)).collect()
}

/// Fills the label column for `policy` in place.
pub fn attach_labels(records: &mut [KpmRecord], policy: &ThresholdPolicy) -> Result<()> {
    for r in records.iter_mut() {
        r.labels[policy.name.index()] = Some(policy.classify_record(r)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use BalanceCategory::*;

    fn m(cv: f64, jain: f64, lif: f64) -> BalanceMetrics {
        BalanceMetrics { cv, jain, lif }
    }

    #[test]
    fn builtin_values() {
        let c = builtin_policy(PolicyName::Conservative);
        assert_eq!((c.alpha, c.beta, c.gamma, c.delta, c.epsilon), (0.3, 0.8, 1.0, 0.5, 0.7));
        let md = builtin_policy(PolicyName::Moderate);
        assert_eq!((md.alpha, md.beta, md.gamma, md.delta, md.epsilon), (0.5, 0.7, 1.5, 0.7, 0.6));
        let a = builtin_policy(PolicyName::Aggressive);
        assert_eq!((a.alpha, a.beta, a.gamma, a.delta, a.epsilon), (0.7, 0.6, 2.0, 0.9, 0.5));
        for p in PolicyName::ALL {
            builtin_policy(p).validate().unwrap();
        }
    }

    #[test]
    fn policy_names_case_insensitive() {
        assert_eq!("MODERATE".parse::<PolicyName>().unwrap(), PolicyName::Moderate);
        assert_eq!("Aggressive".parse::<PolicyName>().unwrap(), PolicyName::Aggressive);
        assert!("lax".parse::<PolicyName>().is_err());
    }

    #[test]
    fn hand_derived_examples() {
        let cons = builtin_policy(PolicyName::Conservative);
        let mode = builtin_policy(PolicyName::Moderate);
        let aggr = builtin_policy(PolicyName::Aggressive);
        for p in [cons, mode, aggr] {
            assert_eq!(classify(&m(0.0, 1.0, 0.0), &p), WellBalanced);
        }
        let x = m(0.408248, 0.857143, 0.5);
        assert_eq!(classify(&x, &mode), WellBalanced);
        assert_eq!(classify(&x, &cons), ModeratelyBalanced);
        assert_eq!(classify(&m(1.202082, 0.409, 1.7), &aggr), Imbalanced);
    }

    #[test]
    fn boundaries_are_inclusive() {
        let p = builtin_policy(PolicyName::Moderate);
        assert_eq!(classify(&m(0.5, 0.7, 1.5), &p), WellBalanced);
        assert_eq!(classify(&m(0.7, 0.2, 3.0), &p), ModeratelyBalanced);
        assert_eq!(classify(&m(0.71, 0.6, 3.0), &p), ModeratelyBalanced, "jain band");
        assert_eq!(classify(&m(0.71, 0.59, 3.0), &p), Imbalanced);
    }

    #[test]
    fn literal_disjunction() {
        let p = builtin_policy(PolicyName::Moderate);
        // cv above delta but jain inside [epsilon, beta)
        assert_eq!(classify(&m(2.0, 0.65, 0.1), &p), ModeratelyBalanced);
        // cv within alpha but jain below epsilon: neither disjunct holds
        assert_eq!(classify(&m(0.2, 0.5, 0.1), &p), Imbalanced);
        // LIF alone knocks a state out of well balanced
        assert_eq!(classify(&m(0.2, 0.9, 1.6), &p), Imbalanced);
    }

    #[test]
    fn empty_dataset_labels_empty() {
        let p = builtin_policy(PolicyName::Moderate);
        assert!(label_dataset(&[], &p).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn well_balanced_nests(cv in 0.0f64..3.0, jain in 0.1f64..=1.0, lif in 0.0f64..7.0) {
            let x = m(cv, jain, lif);
            let c = classify(&x, &builtin_policy(PolicyName::Conservative));
            let md = classify(&x, &builtin_policy(PolicyName::Moderate));
            let a = classify(&x, &builtin_policy(PolicyName::Aggressive));
            if c == WellBalanced { prop_assert_eq!(md, WellBalanced); }
            if md == WellBalanced { prop_assert_eq!(a, WellBalanced); }
        }
    }
}
