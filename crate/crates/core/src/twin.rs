//! Snapshot-level digital twin of an O-RAN cluster.
//!
//! RUs sit on a fixed grid, UEs are dropped uniformly over the area and attach
//! to the active RU with the lowest distance-power-law pathloss. Each UE asks
//! for a lognormal number of downlink PRBs; an overloaded RU scales every
//! attached UE down by the same factor. QoS blends demand satisfaction, an
//! overload proxy for latency and Jain fairness over UE throughputs. Power is
//! a base draw per active RU plus a load-proportional term.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{NetworkState, RuConfig, Scenario, StateParts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosWeights {
    pub throughput: f64,
    pub latency: f64,
    pub fairness: f64,
}

impl Default for QosWeights {
    fn default() -> Self {
        QosWeights {
            throughput: 0.5,
            latency: 0.3,
            fairness: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinParams {
    pub pathloss_exponent: f64,
    /// UEs whose best pathloss exceeds this stay detached. `None` disables
    /// coverage holes.
    pub max_pathloss_db: Option<f64>,
    /// Overrides the default grid layout.
    pub ru_positions: Option<Vec<Point>>,
    /// Mean utilisation the active RUs would see if demand spread evenly.
    pub target_load: f64,
    /// Log-space standard deviation of per-UE PRB demand.
    pub demand_sigma: f64,
    pub mbps_per_prb: f64,
    pub p_base: f64,
    pub p_slope: f64,
    pub qos_weights: QosWeights,
}

impl Default for TwinParams {
    fn default() -> Self {
        TwinParams {
            pathloss_exponent: 3.5,
            max_pathloss_db: None,
            ru_positions: None,
            target_load: 0.5,
            demand_sigma: 2.0,
            mbps_per_prb: 1.0,
            p_base: 4.0,
            p_slope: 2.0,
            qos_weights: QosWeights::default(),
        }
    }
}

impl TwinParams {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidTwinParams(msg.to_string()));
        let w = &self.qos_weights;
        if [w.throughput, w.latency, w.fairness].iter().any(|v| !(*v >= 0.0)) {
            return bad("QoS weights must be non-negative");
        }
        if (w.throughput + w.latency + w.fairness - 1.0).abs() > 1e-9 {
            return bad("QoS weights must sum to 1");
        }
        if !(self.p_base >= 0.0 && self.p_slope >= 0.0) {
            return bad("power coefficients must be non-negative");
        }
        if !(self.pathloss_exponent > 0.0) {
            return bad("pathloss exponent must be positive");
        }
        if !(self.target_load > 0.0 && self.target_load.is_finite()) {
            return bad("target load must be positive");
        }
        if !(self.demand_sigma >= 0.0 && self.demand_sigma.is_finite()) {
            return bad("demand sigma must be non-negative");
        }
        if !(self.mbps_per_prb > 0.0) {
            return bad("mbps_per_prb must be positive");
        }
        if let Some(pos) = &self.ru_positions {
            if pos.len() != scenario.n_rus {
                return bad("ru_positions length must equal n_rus");
            }
        }
        Ok(())
    }

    /// Power draw of an active RU at `prb_pct` downlink utilisation.
    pub fn ru_power(&self, prb_pct: f64) -> f64 {
        self.p_base + self.p_slope * prb_pct / 100.0
    }
}

/// Row-major grid with each row's RUs centred in equal-width cells.
pub fn ru_grid(n_rus: usize, area_side: f64) -> Vec<Point> {
    let cols = (n_rus as f64).sqrt().ceil() as usize;
    let rows = n_rus.div_ceil(cols);
    let mut out = Vec::with_capacity(n_rus);
    for r in 0..rows {
        let in_row = cols.min(n_rus - r * cols);
        for c in 0..in_row {
            out.push(Point::new(
                (c as f64 + 0.5) * area_side / in_row as f64,
                (r as f64 + 0.5) * area_side / rows as f64,
            ));
        }
    }
    out
}

/// Geometry and traffic of one snapshot, independent of which RUs are on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub ru_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    /// Downlink PRB demand per UE.
    pub ue_demand: Vec<f64>,
}

impl Deployment {
    /// What the network would look like under `config`.
    pub fn evaluate(&self, scenario: &Scenario, params: &TwinParams, config: &RuConfig) -> Result<NetworkState> {
        let attachment = attach(&self.ue_positions, &self.ru_positions, config, params)?;
        load_and_qos(scenario, &attachment, &self.ue_demand, config, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub id: u64,
    pub deployment: Deployment,
    pub state: NetworkState,
}

/// Independent stream per snapshot index, so generation order does not matter.
pub fn snapshot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// RU layout (deterministic) and uniformly dropped UEs.
pub fn place<R: Rng + ?Sized>(scenario: &Scenario, params: &TwinParams, rng: &mut R) -> (Vec<Point>, Vec<Point>) {
    let rus = params
        .ru_positions
        .clone()
        .unwrap_or_else(|| ru_grid(scenario.n_rus, scenario.area_side));
    let side = scenario.area_side;
    let ues = (0..scenario.n_ues)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect();
    (rus, ues)
}

pub fn pathloss_db(distance_m: f64, exponent: f64) -> f64 {
    10.0 * exponent * distance_m.max(1.0).log10()
}

/// Nearest active RU per UE (equivalently the lowest pathloss); ties go to the
/// lower RU index. `None` marks a UE outside coverage.
pub fn attach(
    ue_positions: &[Point],
    ru_positions: &[Point],
    config: &RuConfig,
    params: &TwinParams,
) -> Result<Vec<Option<usize>>> {
    if config.n_active() == 0 {
        return Err(Error::NoActiveRus);
    }
    if ru_positions.len() != config.n_rus() {
        return Err(Error::LengthMismatch {
            what: "RU positions vs mask",
            left: ru_positions.len(),
            right: config.n_rus(),
        });
    }
    Ok(ue_positions
        .iter()
        .map(|ue| {
            let mut best: Option<(usize, f64)> = None;
            for ru in config.active_rus() {
                let d = ue.distance(&ru_positions[ru]);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((ru, d));
                }
            }
            let (ru, d) = best.expect("at least one active RU");
            match params.max_pathloss_db {
                Some(limit) if pathloss_db(d, params.pathloss_exponent) > limit => None,
                _ => Some(ru),
            }
        })
        .collect())
}

/// Resolves loads, per-UE service, QoS and power for a fixed attachment.
pub fn load_and_qos(
    scenario: &Scenario,
    attachment: &[Option<usize>],
    dl_demand: &[f64],
    config: &RuConfig,
    params: &TwinParams,
) -> Result<NetworkState> {
    let n = config.n_rus();
    if config.n_active() == 0 {
        return Err(Error::NoActiveRus);
    }
    if attachment.len() != dl_demand.len() {
        return Err(Error::LengthMismatch {
            what: "attachment vs demand",
            left: attachment.len(),
            right: dl_demand.len(),
        });
    }
    let cap = f64::from(scenario.prb_per_ru);
    let ul_ratio = (1.0 - scenario.dl_fraction) / scenario.dl_fraction;

    let mut dl_offered = vec![0.0; n];
    for (att, d) in attachment.iter().zip(dl_demand) {
        if let Some(ru) = *att {
            dl_offered[ru] += d;
        }
    }
    let utilisation = |offered: f64| (100.0 * offered / cap).min(100.0);
    // Share of its demand every UE on the RU receives.
    let share: Vec<f64> = dl_offered
        .iter()
        .map(|&o| if o > cap { cap / o } else { 1.0 })
        .collect();

    let dl_prb: Vec<f64> = dl_offered.iter().map(|&o| utilisation(o)).collect();
    // Uplink demand follows the downlink at the UL/DL ratio on the same grid.
    let ul_prb: Vec<f64> = dl_offered.iter().map(|&o| utilisation(o * ul_ratio)).collect();
    let ul_share: Vec<f64> = dl_offered
        .iter()
        .map(|&o| if o * ul_ratio > cap { cap / (o * ul_ratio) } else { 1.0 })
        .collect();

    let mut alloc = Vec::with_capacity(dl_demand.len());
    let mut tput_dl = Vec::with_capacity(dl_demand.len());
    let mut tput_ul = Vec::with_capacity(dl_demand.len());
    for (att, &d) in attachment.iter().zip(dl_demand) {
        let (a, ul) = match *att {
            Some(ru) => (d * share[ru], d * ul_ratio * ul_share[ru]),
            None => (0.0, 0.0),
        };
        alloc.push(a);
        tput_dl.push(a * params.mbps_per_prb);
        tput_ul.push(ul * params.mbps_per_prb);
    }

    let t_sat = alloc
        .iter()
        .zip(dl_demand)
        .map(|(&a, &d)| if d > 0.0 { (a / d).min(1.0) } else { 1.0 })
        .sum::<f64>()
        / dl_demand.len().max(1) as f64;
    let l_sat = config
        .active_rus()
        .map(|ru| {
            let overload = (dl_offered[ru] / cap - 1.0).max(0.0);
            (1.0 - overload).max(0.0)
        })
        .sum::<f64>()
        / config.n_active() as f64;
    let fairness = if tput_dl.is_empty() {
        1.0
    } else {
        metrics::jain_index(&tput_dl)?
    };
    let w = &params.qos_weights;
    let qos = (100.0 * (w.throughput * t_sat + w.latency * l_sat + w.fairness * fairness)).clamp(0.0, 100.0);
    let power_w = config.active_rus().map(|ru| params.ru_power(dl_prb[ru])).sum();

    NetworkState::new(StateParts {
        config: config.clone(),
        dl_prb,
        ul_prb,
        ue_attach: attachment.to_vec(),
        ue_dl_demand: dl_demand.to_vec(),
        ue_tput_dl: tput_dl,
        ue_tput_ul: tput_ul,
        qos,
        power_w,
    })
}

/// Uniform over active counts `1..=n`, then uniform over masks of that count.
pub fn sample_config<R: Rng + ?Sized>(n_rus: usize, rng: &mut R) -> RuConfig {
    let k = rng.random_range(1..=n_rus);
    let mut mask = vec![false; n_rus];
    for i in index::sample(rng, n_rus, k) {
        mask[i] = true;
    }
    RuConfig::new(mask).expect("k >= 1")
}

/// Lognormal per-UE demand whose mean puts the active RUs at `target_load`.
pub fn sample_demands<R: Rng + ?Sized>(
    scenario: &Scenario,
    params: &TwinParams,
    n_active: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mean = params.target_load * f64::from(scenario.prb_per_ru) * n_active as f64 / scenario.n_ues as f64;
    let sigma = params.demand_sigma;
    let dist = LogNormal::new(mean.ln() - sigma * sigma / 2.0, sigma)
        .map_err(|e| Error::InvalidTwinParams(e.to_string()))?;
    Ok((0..scenario.n_ues).map(|_| dist.sample(rng)).collect())
}

pub fn generate_snapshot(scenario: &Scenario, params: &TwinParams, seed: u64, index: u64) -> Result<Snapshot> {
    let mut rng = snapshot_rng(seed, index);
    let (ru_positions, ue_positions) = place(scenario, params, &mut rng);
    let config = sample_config(scenario.n_rus, &mut rng);
    let ue_demand = sample_demands(scenario, params, config.n_active(), &mut rng)?;
    let deployment = Deployment {
        ru_positions,
        ue_positions,
        ue_demand,
    };
    let state = deployment.evaluate(scenario, params, &config)?;
    Ok(Snapshot {
        id: index,
        deployment,
        state,
    })
}

/// Generates `n` snapshots. Output depends only on the inputs, not on thread
/// scheduling; [`generate_dataset_serial`] produces the same result.
pub fn generate_dataset(scenario: &Scenario, params: &TwinParams, n: usize, seed: u64) -> Result<Vec<Snapshot>> {
    check_generate(scenario, params, n)?;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n as u64)
            .into_par_iter()
            .map(|i| generate_snapshot(scenario, params, seed, i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        generate_dataset_serial(scenario, params, n, seed)
    }
}

pub fn generate_dataset_serial(scenario: &Scenario, params: &TwinParams, n: usize, seed: u64) -> Result<Vec<Snapshot>> {
    check_generate(scenario, params, n)?;
    (0..n as u64)
        .map(|i| generate_snapshot(scenario, params, seed, i))
        .collect()
}

fn check_generate(scenario: &Scenario, params: &TwinParams, n: usize) -> Result<()> {
    scenario.validate()?;
    params.validate(scenario)?;
    if n == 0 {
        return Err(Error::Empty("snapshot count must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn scenario(n: usize) -> Scenario {
        Scenario::new(n, 30, 42).unwrap()
    }

    #[test]
    fn placement_bounds_and_determinism() {
        let s = scenario(4);
        let p = TwinParams::default();
        let (rus, ues) = place(&s, &p, &mut snapshot_rng(42, 0));
        assert_eq!(rus.len(), 4);
        assert_eq!(ues.len(), 30);
        for pt in rus.iter().chain(&ues) {
            assert!((0.0..=1000.0).contains(&pt.x) && (0.0..=1000.0).contains(&pt.y));
        }
        let (_, again) = place(&s, &p, &mut snapshot_rng(42, 0));
        assert_eq!(ues, again);
        let (_, other) = place(&s, &p, &mut snapshot_rng(43, 0));
        assert_ne!(ues, other);
    }

    #[test]
    fn grid_layouts() {
        assert_eq!(
            ru_grid(4, 1000.0),
            vec![
                Point::new(250.0, 250.0),
                Point::new(750.0, 250.0),
                Point::new(250.0, 750.0),
                Point::new(750.0, 750.0)
            ]
        );
        assert_eq!(ru_grid(5, 1000.0).len(), 5);
        assert_eq!(ru_grid(6, 1000.0)[5], Point::new(2500.0 / 3.0, 750.0));
    }

    #[test]
    fn attach_to_coincident_ru_then_next_nearest() {
        let rus = ru_grid(4, 1000.0);
        let ue = vec![Point::new(750.0, 250.0), Point::new(700.0, 260.0)];
        let p = TwinParams::default();
        let all = RuConfig::all_active(4).unwrap();
        assert_eq!(attach(&ue, &rus, &all, &p).unwrap(), vec![Some(1), Some(1)]);
        let without = all.without(1).unwrap();
        assert_eq!(attach(&ue, &rus, &without, &p).unwrap(), vec![Some(0), Some(0)]);
    }

    #[test]
    fn attach_ties_go_to_lowest_index() {
        let rus = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let ue = vec![Point::new(5.0, 3.0)];
        let cfg = RuConfig::all_active(2).unwrap();
        assert_eq!(attach(&ue, &rus, &cfg, &TwinParams::default()).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn coverage_holes_detach() {
        let rus = vec![Point::new(0.0, 0.0), Point::new(1000.0, 1000.0)];
        let ue = vec![Point::new(10.0, 0.0), Point::new(990.0, 1000.0)];
        let params = TwinParams {
            max_pathloss_db: Some(pathloss_db(100.0, 3.5)),
            ..TwinParams::default()
        };
        let cfg = RuConfig::new(vec![true, false]).unwrap();
        assert_eq!(attach(&ue, &rus, &cfg, &params).unwrap(), vec![Some(0), None]);
    }

    #[test]
    fn idle_network_is_perfect() {
        let s = scenario(4);
        let cfg = RuConfig::all_active(4).unwrap();
        let att = vec![Some(0); 30];
        let st = load_and_qos(&s, &att, &[0.0; 30], &cfg, &TwinParams::default()).unwrap();
        assert!(st.dl_prb().iter().all(|&p| p == 0.0));
        assert_eq!(st.qos(), 100.0);
        assert_eq!(st.power_w(), 16.0);
    }

    #[test]
    fn overloaded_single_ru_halves_service() {
        let s = Scenario::new(2, 4, 0).unwrap();
        let cfg = RuConfig::new(vec![true, false]).unwrap();
        let att = vec![Some(0); 4];
        let demand = [50.0, 50.0, 50.0, 50.0];
        let p = TwinParams::default();
        let st = load_and_qos(&s, &att, &demand, &cfg, &p).unwrap();
        assert_eq!(st.dl_prb()[0], 100.0);
        for t in st.ue_tput_dl() {
            assert_abs_diff_eq!(*t, 25.0 * p.mbps_per_prb, epsilon = 1e-12);
        }
        // T_sat = 0.5, L_sat = 0 (overload ratio 1), F = 1
        assert_abs_diff_eq!(st.qos(), 100.0 * (0.5 * 0.5 + 0.0 + 0.2), epsilon = 1e-9);
    }

    #[test]
    fn power_model_calibration() {
        let p = TwinParams::default();
        let total: f64 = (0..6).map(|_| p.ru_power(40.0)).sum();
        assert_abs_diff_eq!(total, 28.8, epsilon = 1e-12);
    }

    #[test]
    fn allocation_conserves_capacity() {
        let s = scenario(4);
        let p = TwinParams::default();
        for i in 0..200 {
            let snap = generate_snapshot(&s, &p, 9, i).unwrap();
            let st = &snap.state;
            let mut used = [0.0; 4];
            for (att, t) in st.ue_attach().iter().zip(st.ue_tput_dl()) {
                if let Some(ru) = att {
                    used[*ru] += t / p.mbps_per_prb;
                }
            }
            for ru in 0..4 {
                assert!(used[ru] <= 100.0 + 1e-9);
                if st.dl_prb()[ru] == 100.0 {
                    assert_abs_diff_eq!(used[ru], 100.0, epsilon = 1e-9);
                } else {
                    assert!(used[ru] < 100.0);
                }
            }
            assert!((0.0..=100.0).contains(&st.qos()));
        }
    }

    #[test]
    fn every_active_count_appears() {
        let s = scenario(6);
        let data = generate_dataset(&s, &TwinParams::default(), 2000, 5).unwrap();
        let mut seen = [0usize; 7];
        for snap in &data {
            seen[snap.state.config().n_active()] += 1;
        }
        assert!(seen[1..].iter().all(|&c| c > 0), "{seen:?}");
    }

    #[test]
    fn parallel_matches_serial() {
        let s = scenario(5);
        let p = TwinParams::default();
        let a = generate_dataset(&s, &p, 300, 11).unwrap();
        let b = generate_dataset_serial(&s, &p, 300, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = scenario(4);
        assert!(generate_dataset(&s, &TwinParams::default(), 0, 1).is_err());
        let p = TwinParams {
            qos_weights: QosWeights {
                throughput: 0.5,
                latency: 0.5,
                fairness: 0.5,
            },
            ..TwinParams::default()
        };
        assert!(p.validate(&s).is_err());
    }
}
