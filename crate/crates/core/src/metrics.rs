//! Load-distribution metrics over the downlink PRB utilisation of active RUs.
//!
//! All three use the population standard deviation, so `jain == 1 / (1 + cv^2)`
//! holds exactly. An idle network (mean load 0) counts as perfectly balanced.
//! Sums run over the loads in ascending order, so every metric is bit-exact
//! under permutation of its input.

use crate::error::{Error, Result};
use crate::model::{BalanceMetrics, KpmRecord, NetworkState, RuConfig};

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::NoActiveRus);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn mean_sorted(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_sorted(v: &[f64], mu: f64) -> f64 {
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Result<f64> {
    let v = sorted(values)?;
    Ok(std_sorted(&v, mean_sorted(&v)))
}

pub fn coefficient_of_variation(active_loads: &[f64]) -> Result<f64> {
    let v = sorted(active_loads)?;
    let mu = mean_sorted(&v);
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(std_sorted(&v, mu) / mu)
}

pub fn jain_index(active_loads: &[f64]) -> Result<f64> {
    let v = sorted(active_loads)?;
    let sum: f64 = v.iter().sum();
    let sum_sq: f64 = v.iter().map(|p| p * p).sum();
    if sum_sq == 0.0 {
        return Ok(1.0);
    }
    let n = v.len() as f64;
    // Clamp rounding excursions outside the analytic range [1/n, 1].
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

pub fn load_imbalance_factor(active_loads: &[f64]) -> Result<f64> {
    let v = sorted(active_loads)?;
    let mu = mean_sorted(&v);
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok((v[v.len() - 1] / mu - 1.0).clamp(0.0, (v.len() - 1) as f64))
}

pub fn from_loads(active_loads: &[f64]) -> Result<BalanceMetrics> {
    Ok(BalanceMetrics {
        cv: coefficient_of_variation(active_loads)?,
        jain: jain_index(active_loads)?,
        lif: load_imbalance_factor(active_loads)?,
    })
}

/// Metrics for a full per-RU load vector, keeping only RUs active in `config`.
pub fn from_config(config: &RuConfig, dl_prb: &[f64]) -> Result<BalanceMetrics> {
    let active: Vec<f64> = config.active_rus().map(|i| dl_prb[i]).collect();
    from_loads(&active)
}

pub fn metrics(state: &NetworkState) -> Result<BalanceMetrics> {
    from_config(state.config(), state.dl_prb())
}

pub fn record_metrics(record: &KpmRecord) -> Result<BalanceMetrics> {
    from_config(&record.config, &record.dl_prb)
}
