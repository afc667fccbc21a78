//! Browser bindings for the demo page in `www/`. Each exported function takes
//! plain numbers or strings and returns a JSON document.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use oran_balance::labeler::{PolicyName, ThresholdPolicy};
use oran_balance::metrics;
use oran_balance::ric::{optimize, OptimizeOptions, OracleLabeler, RicState, SearchMode};
use oran_balance::twin::{generate_snapshot, Point, TwinParams};
use oran_balance::{BalanceCategory, BalanceMetrics, NetworkState, Result, RuConfig, Scenario};

const POLICIES: [PolicyName; 3] = [PolicyName::Conservative, PolicyName::Moderate, PolicyName::Aggressive];

#[derive(Serialize)]
struct Assessment {
    metrics: BalanceMetrics,
    conservative: BalanceCategory,
    moderate: BalanceCategory,
    aggressive: BalanceCategory,
}

impl Assessment {
    fn new(m: BalanceMetrics) -> Self {
        let [conservative, moderate, aggressive] = POLICIES.map(|p| ThresholdPolicy::builtin(p).classify(&m));
        Assessment {
            metrics: m,
            conservative,
            moderate,
            aggressive,
        }
    }
}

#[derive(Serialize)]
struct StateView {
    mask: String,
    ru_positions: Vec<Point>,
    ue_positions: Vec<Point>,
    ue_attach: Vec<Option<usize>>,
    dl_prb: Vec<f64>,
    power_w: f64,
    qos: f64,
    assessment: Assessment,
}

#[derive(Serialize)]
struct CandidateView {
    mask: String,
    n_active: usize,
    category: BalanceCategory,
    power_w: f64,
    savings_w: f64,
    qos: f64,
    chosen: bool,
}

#[derive(Serialize)]
struct DecisionView {
    policy: PolicyName,
    current: StateView,
    chosen: Option<StateView>,
    savings_w: f64,
    candidates: Vec<CandidateView>,
}

fn view(ric: &RicState, state: &NetworkState) -> Result<StateView> {
    Ok(StateView {
        mask: state.config().to_string(),
        ru_positions: ric.deployment.ru_positions.clone(),
        ue_positions: ric.deployment.ue_positions.clone(),
        ue_attach: state.ue_attach().to_vec(),
        dl_prb: state.dl_prb().to_vec(),
        power_w: state.power_w(),
        qos: state.qos(),
        assessment: Assessment::new(metrics::metrics(state)?),
    })
}

/// Snapshot `index` of the generator for `seed`; `mask` overrides the sampled
/// RU configuration unless it is 0.
fn ric_state(n_rus: u32, n_ues: u32, seed: u32, index: u32, mask: u32) -> Result<RicState> {
    let scenario = Scenario::new(n_rus as usize, n_ues as usize, u64::from(seed))?;
    let twin = TwinParams::default();
    let snap = generate_snapshot(&scenario, &twin, u64::from(seed), u64::from(index))?;
    let config = if mask == 0 {
        snap.state.config().clone()
    } else {
        RuConfig::from_bits(mask, scenario.n_rus)?
    };
    Ok(RicState {
        scenario,
        twin,
        deployment: snap.deployment,
        config,
    })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

pub fn classify_loads_json(loads: &str) -> Result<String> {
    let values: Vec<f64> = loads
        .split([',', ' ', ';'])
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| oran_balance::Error::Config(format!("not a load: {s:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(json(&Assessment::new(metrics::from_loads(&values)?)))
}

pub fn simulate_json(n_rus: u32, n_ues: u32, seed: u32, index: u32, mask: u32) -> Result<String> {
    let ric = ric_state(n_rus, n_ues, seed, index, mask)?;
    Ok(json(&view(&ric, &ric.current()?)?))
}

#[allow(clippy::too_many_arguments)]
pub fn optimize_json(
    n_rus: u32,
    n_ues: u32,
    seed: u32,
    index: u32,
    mask: u32,
    policy: &str,
    exhaustive: bool,
    well_balanced_only: bool,
) -> Result<String> {
    let ric = ric_state(n_rus, n_ues, seed, index, mask)?;
    let policy: PolicyName = policy.parse()?;
    let options = OptimizeOptions {
        mode: if exhaustive { SearchMode::Exhaustive } else { SearchMode::Single },
        well_balanced_only,
    };
    let d = optimize(&ric, policy, &OracleLabeler(ThresholdPolicy::builtin(policy)), &options)?;
    let chosen = match d.chosen {
        Some(i) => Some(view(&ric, &d.candidates[i].predicted_state)?),
        None => None,
    };
    let candidates = d
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| CandidateView {
            mask: c.config.to_string(),
            n_active: c.config.n_active(),
            category: c.prediction.category,
            power_w: c.predicted_state.power_w(),
            savings_w: c.energy_savings_w,
            qos: c.predicted_state.qos(),
            chosen: d.chosen == Some(i),
        })
        .collect();
    Ok(json(&DecisionView {
        policy,
        current: view(&ric, &ric.current()?)?,
        chosen,
        savings_w: d.energy_savings_w(),
        candidates,
    }))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Metrics and the category under each built-in policy for comma separated
/// PRB loads of the active RUs.
#[wasm_bindgen(js_name = classifyLoads)]
pub fn classify_loads(loads: &str) -> std::result::Result<String, JsError> {
    js(classify_loads_json(loads))
}

#[wasm_bindgen]
pub fn simulate(n_rus: u32, n_ues: u32, seed: u32, index: u32, mask: u32) -> std::result::Result<String, JsError> {
    js(simulate_json(n_rus, n_ues, seed, index, mask))
}

/// Configuration search with the threshold labeler standing in for a model.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = optimizeOracle)]
pub fn optimize_oracle(
    n_rus: u32,
    n_ues: u32,
    seed: u32,
    index: u32,
    mask: u32,
    policy: &str,
    exhaustive: bool,
    well_balanced_only: bool,
) -> std::result::Result<String, JsError> {
    js(optimize_json(n_rus, n_ues, seed, index, mask, policy, exhaustive, well_balanced_only))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn classify_loads_matches_labeler() {
        let v: Value = serde_json::from_str(&classify_loads_json("20, 40, 60").unwrap()).unwrap();
        assert!((v["metrics"]["cv"].as_f64().unwrap() - 0.408248).abs() < 1e-6);
        assert_eq!(v["moderate"], "well_balanced");
        assert_eq!(v["conservative"], "moderately_balanced");
        assert!(classify_loads_json("20, x").is_err());
        assert!(classify_loads_json("").is_err());
        assert!(classify_loads_json("-1").is_err());
    }

    #[test]
    fn simulate_respects_mask() {
        let v: Value = serde_json::from_str(&simulate_json(4, 20, 3, 0, 0b0101).unwrap()).unwrap();
        assert_eq!(v["mask"], "1010");
        assert_eq!(v["ue_positions"].as_array().unwrap().len(), 20);
        for a in v["ue_attach"].as_array().unwrap() {
            if let Some(ru) = a.as_u64() {
                assert!(ru == 0 || ru == 2);
            }
        }
        assert!(simulate_json(4, 20, 3, 0, 0b10000).is_err());
        assert!(simulate_json(1, 20, 3, 0, 0).is_err());
    }

    #[test]
    fn optimize_reports_candidates() {
        let v: Value = serde_json::from_str(&optimize_json(5, 30, 1, 2, 0b11111, "aggressive", true, false).unwrap()).unwrap();
        assert_eq!(v["candidates"].as_array().unwrap().len(), 31);
        let chosen = v["candidates"].as_array().unwrap().iter().filter(|c| c["chosen"] == true).count();
        assert_eq!(chosen, usize::from(!v["chosen"].is_null()));
        let single: Value = serde_json::from_str(&optimize_json(5, 30, 1, 2, 0b11111, "moderate", false, true).unwrap()).unwrap();
        assert_eq!(single["candidates"].as_array().unwrap().len(), 5);
        assert!(optimize_json(5, 30, 1, 2, 0, "reckless", true, false).is_err());
    }
}
