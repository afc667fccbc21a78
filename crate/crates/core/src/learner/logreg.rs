//! Multinomial logistic regression with L2 penalty and balanced class
//! weights. Fitted by limited-memory quasi-Newton descent with Armijo
//! backtracking, so the objective never increases between iterations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{FeatureMatrix, SCHEMA_VERSION};
use crate::model::BalanceCategory;

use super::{argmax_safe, check_training_set, Classifier, Prediction};

const K: usize = 3;
const HISTORY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    /// Inverse regularisation strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls to this value.
    pub tol: f64,
    pub balanced: bool,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            c: 1.0,
            max_iter: 500,
            tol: 1e-5,
            balanced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub params: LogRegParams,
    pub schema_version: String,
    pub feature_names: Vec<String>,
    /// Row-major `3 x d`, acting on standardised features.
    pub weights: Vec<f64>,
    pub bias: [f64; K],
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Objective value after each accepted step, starting from zero weights.
    pub loss_history: Vec<f64>,
    pub grad_norm: f64,
}

impl LogRegModel {
    fn logits(&self, x: &[f64]) -> [f64; K] {
        let d = self.mean.len();
        let mut z = self.bias;
        for (j, &v) in x.iter().enumerate() {
            let s = (v - self.mean[j]) / self.scale[j];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += self.weights[k * d + j] * s;
            }
        }
        z
    }
}

impl Classifier for LogRegModel {
    fn n_features(&self) -> usize {
        self.mean.len()
    }

    fn schema_version(&self) -> &str {
        &self.schema_version
    }

    fn predict_row(&self, x: &[f64]) -> Prediction {
        let proba = softmax(self.logits(x));
        Prediction {
            category: argmax_safe(&proba),
            proba,
        }
    }
}

fn softmax(z: [f64; K]) -> [f64; K] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [u8],
    sample_w: Vec<f64>,
    n: usize,
    d: usize,
    c: f64,
}

impl Problem<'_> {
    /// Objective and gradient at `theta = [W (3 x d) | b (3)]`.
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (d, n) = (self.d, self.n);
        let (w, b) = theta.split_at(K * d);
        let mut loss = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..n {
            let row = &self.x[i * d..(i + 1) * d];
            let mut z = [b[0], b[1], b[2]];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += w[k * d..(k + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let yi = self.y[i] as usize;
            let s = self.sample_w[i];
            loss += s * (lse - z[yi]);
            if let Some(g) = g.as_deref_mut() {
                for k in 0..K {
                    let r = s * ((z[k] - lse).exp() - if k == yi { 1.0 } else { 0.0 });
                    for (gj, xj) in g[k * d..(k + 1) * d].iter_mut().zip(row) {
                        *gj += r * xj;
                    }
                    g[K * d + k] += r;
                }
            }
        }
        let nf = n as f64;
        let reg = 1.0 / (self.c * nf);
        loss = loss / nf + 0.5 * reg * w.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = g {
            g.iter_mut().for_each(|v| *v /= nf);
            for (gj, wj) in g[..K * d].iter_mut().zip(w) {
                *gj += reg * wj;
            }
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: `dir = -H g` for the inverse-Hessian estimate `H`.
fn lbfgs_direction(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, dir: &mut [f64]) {
    dir.copy_from_slice(grad);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, dir);
        dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        dir.iter_mut().for_each(|d| *d *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, dir);
        dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
    }
    dir.iter_mut().for_each(|d| *d = -*d);
}

/// Fits on `x` after z-scoring with statistics from `x` alone. The fit is
/// deterministic; `seed` is accepted for interface symmetry with the forest.
pub fn train_logreg(
    x: &FeatureMatrix,
    y: &[BalanceCategory],
    feature_names: &[String],
    params: &LogRegParams,
    _seed: u64,
) -> Result<LogRegModel> {
    check_training_set(x, y)?;
    let (n, d) = (x.n_rows(), x.n_cols());
    let nf = n as f64;

    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for j in 0..d {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / nf;
        let v = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / nf;
        mean[j] = m;
        scale[j] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
    }
    let mut z = Vec::with_capacity(n * d);
    for i in 0..n {
        z.extend((0..d).map(|j| (x.get(i, j) - mean[j]) / scale[j]));
    }

    let labels: Vec<u8> = y.iter().map(|c| c.code()).collect();
    let mut counts = [0usize; K];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let sample_w: Vec<f64> = labels
        .iter()
        .map(|&l| {
            if params.balanced {
                nf / (present * counts[l as usize] as f64)
            } else {
                1.0
            }
        })
        .collect();

    let problem = Problem {
        x: &z,
        y: &labels,
        sample_w,
        n,
        d,
        c: params.c,
    };
    let dim = K * d + K;
    let mut theta = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut loss = problem.eval(&theta, Some(&mut grad));
    let mut history = vec![loss];
    let mut trial = vec![0.0; dim];
    let mut trial_grad = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for _ in 0..params.max_iter {
        if norm(&grad) <= params.tol {
            break;
        }
        lbfgs_direction(&grad, &memory, &mut dir);
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            slope = -dot(&grad, &grad);
            memory.clear();
        }
        // Backtrack until the sufficient-decrease condition holds.
        let mut step = if memory.is_empty() { 1.0 / norm(&grad).max(1.0) } else { 1.0 };
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, th), d) in trial.iter_mut().zip(&theta).zip(&dir) {
                *t = th + step * d;
            }
            let trial_loss = problem.eval(&trial, Some(&mut trial_grad));
            if trial_loss <= loss + 1e-4 * step * slope {
                let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if memory.len() == HISTORY {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut theta, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(loss);
    }
    let grad_norm = norm(&grad);
    log::debug!("logreg: {} steps, loss {loss:.6}, |grad| {grad_norm:.2e}", history.len() - 1);

    let bias = [theta[K * d], theta[K * d + 1], theta[K * d + 2]];
    theta.truncate(K * d);
    Ok(LogRegModel {
        params: params.clone(),
        schema_version: SCHEMA_VERSION.to_string(),
        feature_names: feature_names.to_vec(),
        weights: theta,
        bias,
        mean,
        scale,
        loss_history: history,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::error::Error;
    use BalanceCategory::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    fn separated() -> (FeatureMatrix, Vec<BalanceCategory>) {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).chain((0..20).map(|i| 10.0 + i as f64 * 0.1)).collect();
        let y = (0..40).map(|i| if i < 20 { Imbalanced } else { WellBalanced }).collect();
        (FeatureMatrix::new(1, xs).unwrap(), y)
    }

    #[test]
    fn boundary_between_clusters() {
        let (x, y) = separated();
        let m = train_logreg(&x, &y, &names(1), &LogRegParams::default(), 0).unwrap();
        for r in x.rows().zip(&y) {
            assert_eq!(m.predict_row(r.0).category, *r.1);
        }
        assert_eq!(m.predict_row(&[4.0]).category, Imbalanced);
        assert_eq!(m.predict_row(&[7.0]).category, WellBalanced);
    }

    #[test]
    fn converges_to_tolerance() {
        let (x, y) = separated();
        let p = LogRegParams {
            max_iter: 2_000,
            tol: 1e-6,
            ..LogRegParams::default()
        };
        let m = train_logreg(&x, &y, &names(1), &p, 0).unwrap();
        assert!(m.grad_norm <= 1e-6, "grad norm {}", m.grad_norm);
    }

    #[test]
    fn loss_never_increases() {
        let rows: Vec<Vec<f64>> = (0..90)
            .map(|i| {
                let f = i as f64;
                vec![(f * 0.37).sin() * 3.0 + (i % 3) as f64, (f * 0.11).cos(), f]
            })
            .collect();
        let y: Vec<BalanceCategory> = (0..90).map(|i| BalanceCategory::ALL[i % 3]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = train_logreg(&x, &y, &names(3), &LogRegParams::default(), 0).unwrap();
        assert!(m.loss_history.len() > 2);
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = [0.5, -1.0, 1.5, 0.2, -0.3, 0.8, 1.1, -0.7];
        let y = [0u8, 1, 2, 1];
        let p = Problem {
            x: &x,
            y: &y,
            sample_w: vec![1.0, 0.5, 2.0, 0.5],
            n: 4,
            d: 2,
            c: 0.7,
        };
        let theta: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut g = vec![0.0; 9];
        p.eval(&theta, Some(&mut g));
        for i in 0..9 {
            let h = 1e-6;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (p.eval(&a, None) - p.eval(&b, None)) / (2.0 * h);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn scaler_uses_training_rows_only() {
        let (x, y) = separated();
        let m = train_logreg(&x, &y, &names(1), &LogRegParams::default(), 0).unwrap();
        let mean = x.rows().map(|r| r[0]).sum::<f64>() / 40.0;
        assert_abs_diff_eq!(m.mean[0], mean, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_rejected() {
        let (x, _) = separated();
        assert!(matches!(
            train_logreg(&x, &vec![Imbalanced; 40], &names(1), &LogRegParams::default(), 0),
            Err(Error::DegenerateLabels)
        ));
    }
}
