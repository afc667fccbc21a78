//! CART classification trees grown on pre-binned features.
//!
//! Candidate thresholds are midpoints between adjacent distinct training
//! values (at most `max_bins - 1` per feature, chosen at quantiles when a
//! feature has more distinct values). Trees store real thresholds, so
//! prediction runs on raw feature values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::model::BalanceCategory;

use super::argmax_safe;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Weighted class counts indexed by category code.
    Leaf { counts: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[f64; 3] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> BalanceCategory {
        argmax_safe(self.leaf_counts(x))
    }

    /// Depth of the deepest leaf (a lone root leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Column-major bin codes plus the real threshold behind each bin edge.
pub(crate) struct Binned {
    n_rows: usize,
    codes: Vec<u8>,
    thresholds: Vec<Vec<f64>>,
}

impl Binned {
    pub(crate) fn new(x: &FeatureMatrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let n_rows = x.n_rows();
        let mut codes = vec![0u8; n_rows * x.n_cols()];
        let mut thresholds = Vec::with_capacity(x.n_cols());
        for col in 0..x.n_cols() {
            let column: Vec<f64> = (0..n_rows).map(|r| x.get(r, col)).collect();
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            let cuts = candidate_thresholds(&sorted, max_bins);
            for (r, v) in column.iter().enumerate() {
                codes[col * n_rows + r] = cuts.partition_point(|t| t < v) as u8;
            }
            thresholds.push(cuts);
        }
        Binned {
            n_rows,
            codes,
            thresholds,
        }
    }

    fn column(&self, col: usize) -> &[u8] {
        &self.codes[col * self.n_rows..(col + 1) * self.n_rows]
    }

    fn n_cols(&self) -> usize {
        self.thresholds.len()
    }
}

fn candidate_thresholds(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut uniq: Vec<f64> = sorted.to_vec();
    uniq.dedup();
    if uniq.len() <= max_bins {
        return uniq.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for b in 1..max_bins {
        let cut = sorted[b * n / max_bins];
        let i = sorted.partition_point(|v| *v < cut);
        if i == 0 {
            continue;
        }
        let t = midpoint(sorted[i - 1], cut);
        if out.last().is_none_or(|last| t > *last) {
            out.push(t);
        }
    }
    out
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub max_features: usize,
    pub min_samples_split: f64,
}

/// Grows one tree on the rows with positive weight. Adds each split's
/// weighted impurity decrease into `importance`.
pub(crate) fn grow<R: Rng + ?Sized>(
    data: &Binned,
    labels: &[u8],
    weights: &[f64],
    params: &GrowParams,
    rng: &mut R,
    importance: &mut [f64],
) -> DecisionTree {
    let mut rows: Vec<u32> = (0..labels.len() as u32)
        .filter(|&r| weights[r as usize] > 0.0)
        .collect();
    let mut nodes: Vec<Node> = Vec::new();
    let mut hist = vec![[0.0f64; 3]; 256];
    let mut features: Vec<usize> = (0..data.n_cols()).collect();

    // (node slot, row range, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    nodes.push(Node::Leaf { counts: [0.0; 3] });

    while let Some((slot, lo, hi, depth)) = stack.pop() {
        let node_rows = &mut rows[lo..hi];
        let mut counts = [0.0; 3];
        for &r in node_rows.iter() {
            counts[labels[r as usize] as usize] += weights[r as usize];
        }
        let total: f64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if depth >= params.max_depth || pure || total < params.min_samples_split {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        let parent_score = counts.iter().map(|c| c * c).sum::<f64>() / total;

        // Visit features in random order until `max_features` non-constant
        // ones have been evaluated.
        let mut best: Option<(usize, usize, f64)> = None;
        let mut evaluated = 0;
        for i in 0..features.len() {
            if evaluated >= params.max_features {
                break;
            }
            let j = rng.random_range(i..features.len());
            features.swap(i, j);
            let f = features[i];
            let n_bins = data.thresholds[f].len() + 1;
            if n_bins < 2 {
                continue;
            }
            let col = data.column(f);
            for h in hist[..n_bins].iter_mut() {
                *h = [0.0; 3];
            }
            for &r in node_rows.iter() {
                let r = r as usize;
                hist[col[r] as usize][labels[r] as usize] += weights[r];
            }
            let occupied = hist[..n_bins]
                .iter()
                .filter(|h| h.iter().any(|&c| c > 0.0))
                .count();
            if occupied < 2 {
                continue;
            }
            evaluated += 1;
            let mut left = [0.0; 3];
            for (b, h) in hist[..n_bins - 1].iter().enumerate() {
                for c in 0..3 {
                    left[c] += h[c];
                }
                let wl: f64 = left.iter().sum();
                let wr = total - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
                let score = left.iter().map(|c| c * c).sum::<f64>() / wl
                    + right.iter().map(|c| c * c).sum::<f64>() / wr;
                let gain = score - parent_score;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, b, gain));
                }
            }
        }

        let Some((feature, bin, gain)) = best else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        importance[feature] += gain.max(0.0);

        let col = data.column(feature);
        let mut split = 0;
        for k in 0..node_rows.len() {
            if (col[node_rows[k] as usize] as usize) <= bin {
                node_rows.swap(split, k);
                split += 1;
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { counts: [0.0; 3] });
        nodes.push(Node::Leaf { counts: [0.0; 3] });
        nodes[slot] = Node::Split {
            feature: feature as u32,
            threshold: data.thresholds[feature][bin],
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, lo + split, hi, depth + 1));
        stack.push((left, lo, lo + split, depth + 1));
    }
    DecisionTree { nodes }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn thresholds_sit_between_distinct_values() {
        let t = candidate_thresholds(&[1.0, 1.0, 2.0, 4.0], 256);
        assert_eq!(t, vec![1.5, 3.0]);
        let many: Vec<f64> = (0..10_000).map(f64::from).collect();
        let t = candidate_thresholds(&many, 16);
        assert!(t.len() <= 15 && t.len() >= 14);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().all(|v| v.fract() == 0.5));
    }

    #[test]
    fn single_split_separates_two_groups() {
        let x = FeatureMatrix::new(1, vec![1.0, 2.0, 3.0, 10.0, 11.0, 12.0]).unwrap();
        let labels = [0u8, 0, 0, 2, 2, 2];
        let binned = Binned::new(&x, 256);
        let mut imp = vec![0.0];
        let params = GrowParams {
            max_depth: 10,
            max_features: 1,
            min_samples_split: 2.0,
        };
        let tree = grow(&binned, &labels, &[1.0; 6], &params, &mut ChaCha8Rng::seed_from_u64(0), &mut imp);
        assert_eq!(tree.depth(), 1);
        match &tree.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 6.5),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict_row(&[0.0]), BalanceCategory::Imbalanced);
        assert_eq!(tree.predict_row(&[7.0]), BalanceCategory::WellBalanced);
        assert!(imp[0] > 0.0);
    }

    #[test]
    fn depth_limit_respected() {
        let x = FeatureMatrix::new(1, (0..64).map(f64::from).collect()).unwrap();
        let labels: Vec<u8> = (0..64).map(|i| (i % 3) as u8).collect();
        let binned = Binned::new(&x, 256);
        let params = GrowParams {
            max_depth: 3,
            max_features: 1,
            min_samples_split: 2.0,
        };
        let tree = grow(
            &binned,
            &labels,
            &vec![1.0; 64],
            &params,
            &mut ChaCha8Rng::seed_from_u64(1),
            &mut [0.0],
        );
        assert!(tree.depth() <= 3);
        for n in tree.nodes() {
            if let Node::Leaf { counts } = n {
                assert!(counts.iter().sum::<f64>() > 0.0);
            }
        }
    }

    #[test]
    fn leaf_ties_prefer_less_balanced() {
        let tree = DecisionTree {
            nodes: vec![Node::Leaf { counts: [0.0, 2.0, 2.0] }],
        };
        assert_eq!(tree.predict_row(&[]), BalanceCategory::ModeratelyBalanced);
    }
}
