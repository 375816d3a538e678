//! Histogram gradient-boosted trees with second-order (Newton) leaf values.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child: usize,
    pub lambda: f64,
    pub max_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 8,
            learning_rate: 0.1,
            min_child: 20,
            lambda: 1.0,
            max_bins: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Multi-class log loss; targets are class indices stored as `f64`.
    Softmax { n_classes: usize },
    SquaredError,
}

impl Objective {
    fn outputs(self) -> usize {
        match self {
            Objective::Softmax { n_classes } => n_classes,
            Objective::SquaredError => 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        /// Rows with bin `<= threshold` go left.
        threshold: u16,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, bins: &[u16]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if bins[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// A fitted ensemble.
#[derive(Debug, Clone)]
pub struct Gbdt {
    objective: Objective,
    edges: Vec<Vec<f64>>,
    base: Vec<f64>,
    /// `rounds x outputs`.
    trees: Vec<Vec<Tree>>,
}

fn feature_edges(column: impl Iterator<Item = f64>, max_bins: usize) -> Vec<f64> {
    let mut values: Vec<f64> = column.collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() <= max_bins {
        return values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let mut edges: Vec<f64> = (1..max_bins)
        .map(|i| values[i * values.len() / max_bins])
        .collect();
    edges.dedup();
    edges
}

fn bin_of(edges: &[f64], v: f64) -> u16 {
    edges.partition_point(|&e| e <= v) as u16
}

struct Binned {
    rows: usize,
    features: usize,
    /// Row-major bin codes.
    codes: Vec<u16>,
}

impl Binned {
    fn row(&self, r: usize) -> &[u16] {
        &self.codes[r * self.features..(r + 1) * self.features]
    }
}

impl Gbdt {
    fn bin(&self, x: &Array2<f64>) -> Binned {
        let (rows, features) = x.dim();
        let mut codes = Vec::with_capacity(rows * features);
        for row in x.rows() {
            codes.extend(row.iter().zip(&self.edges).map(|(&v, e)| bin_of(e, v)));
        }
        Binned { rows, features, codes }
    }

    pub fn fit(x: &Array2<f64>, y: &[f64], objective: Objective, config: &GbdtConfig) -> Result<Self> {
        let (rows, features) = x.dim();
        if rows == 0 || rows != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "{rows} feature rows for {} targets",
                y.len()
            )));
        }
        let edges: Vec<Vec<f64>> = (0..features)
            .map(|f| feature_edges(x.column(f).iter().copied(), config.max_bins))
            .collect();
        let k = objective.outputs();
        let base = match objective {
            Objective::SquaredError => vec![y.iter().sum::<f64>() / rows as f64],
            Objective::Softmax { n_classes } => {
                let mut counts = vec![1.0; n_classes];
                for &c in y {
                    counts[c as usize] += 1.0;
                }
                let total: f64 = counts.iter().sum();
                counts.iter().map(|c| (c / total).ln()).collect()
            }
        };
        let mut model = Gbdt {
            objective,
            edges,
            base,
            trees: Vec::with_capacity(config.n_trees),
        };
        let binned = model.bin(x);
        let n_bins: Vec<usize> = model.edges.iter().map(|e| e.len() + 1).collect();
        let mut raw = Array2::from_shape_fn((rows, k), |(_, j)| model.base[j]);
        let mut grad = vec![0.0; rows];
        let mut hess = vec![0.0; rows];
        let all: Vec<usize> = (0..rows).collect();

        for _ in 0..config.n_trees {
            let probs = match objective {
                Objective::Softmax { .. } => Some(softmax_rows(&raw)),
                Objective::SquaredError => None,
            };
            let mut round = Vec::with_capacity(k);
            for j in 0..k {
                for r in 0..rows {
                    match &probs {
                        Some(p) => {
                            let pj = p[[r, j]];
                            let target = if y[r] as usize == j { 1.0 } else { 0.0 };
                            grad[r] = pj - target;
                            hess[r] = (pj * (1.0 - pj)).max(1e-6);
                        }
                        None => {
                            grad[r] = raw[[r, 0]] - y[r];
                            hess[r] = 1.0;
                        }
                    }
                }
                let mut tree = Tree { nodes: Vec::new() };
                let builder = Builder {
                    binned: &binned,
                    n_bins: &n_bins,
                    grad: &grad,
                    hess: &hess,
                    config,
                };
                builder.grow(&mut tree, all.clone(), 0);
                for r in 0..rows {
                    raw[[r, j]] += tree.predict(binned.row(r));
                }
                round.push(tree);
            }
            model.trees.push(round);
        }
        Ok(model)
    }

    /// Raw additive scores, `rows x outputs`.
    pub fn predict_raw(&self, x: &Array2<f64>) -> Array2<f64> {
        let binned = self.bin(x);
        let k = self.objective.outputs();
        let mut out = Array2::from_shape_fn((binned.rows, k), |(_, j)| self.base[j]);
        for r in 0..binned.rows {
            let codes = binned.row(r);
            for round in &self.trees {
                for (j, tree) in round.iter().enumerate() {
                    out[[r, j]] += tree.predict(codes);
                }
            }
        }
        out
    }

    /// Class probabilities (softmax objective) or predictions (squared error).
    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let raw = self.predict_raw(x);
        match self.objective {
            Objective::Softmax { .. } => softmax_rows(&raw),
            Objective::SquaredError => raw,
        }
    }

    /// Mean log loss (softmax) or mean squared error on `(x, y)`.
    pub fn loss(&self, x: &Array2<f64>, y: &[f64]) -> f64 {
        let pred = self.predict(x);
        match self.objective {
            Objective::Softmax { .. } => {
                y.iter()
                    .enumerate()
                    .map(|(r, &c)| -pred[[r, c as usize]].max(1e-15).ln())
                    .sum::<f64>()
                    / y.len() as f64
            }
            Objective::SquaredError => {
                y.iter()
                    .enumerate()
                    .map(|(r, &v)| (pred[[r, 0]] - v).powi(2))
                    .sum::<f64>()
                    / y.len() as f64
            }
        }
    }
}

fn softmax_rows(raw: &Array2<f64>) -> Array2<f64> {
    let mut out = raw.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

struct Builder<'a> {
    binned: &'a Binned,
    n_bins: &'a [usize],
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbdtConfig,
}

struct Split {
    feature: usize,
    threshold: u16,
    gain: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.config.learning_rate * g / (h + self.config.lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.config.lambda)
    }

    /// Appends the subtree for `rows` and returns its index.
    fn grow(&self, tree: &mut Tree, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let index = tree.nodes.len();
        tree.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.config.max_depth || rows.len() < 2 * self.config.min_child {
            return index;
        }
        let Some(split) = self.best_split(&rows, g, h) else {
            return index;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.binned.row(r)[split.feature] <= split.threshold);
        let left = self.grow(tree, left_rows, depth + 1);
        let right = self.grow(tree, right_rows, depth + 1);
        tree.nodes[index] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        index
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<Split> {
        let parent = self.score(g, h);
        let mut best: Option<Split> = None;
        for f in 0..self.binned.features {
            let nb = self.n_bins[f];
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &r in rows {
                let b = self.binned.row(r)[f] as usize;
                hg[b] += self.grad[r];
                hh[b] += self.hess[r];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                let cr = rows.len() - cl;
                if cl < self.config.min_child || cr < self.config.min_child {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(g - gl, h - hl) - parent;
                if gain > 1e-12 && best.as_ref().map_or(true, |s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: b as u16,
                        gain,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regression_learns_a_step() {
        let x = Array2::from_shape_fn((400, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..400).map(|i| if i < 200 { 1.0 } else { 5.0 }).collect();
        let config = GbdtConfig {
            n_trees: 50,
            ..Default::default()
        };
        let model = Gbdt::fit(&x, &y, Objective::SquaredError, &config).unwrap();
        assert!(model.loss(&x, &y) < 1e-3);
        let constant = y.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>() / 400.0;
        assert!(model.loss(&x, &y) < constant);
    }

    #[test]
    fn classifier_beats_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((600, 2), |_| rng.random::<f64>());
        let y: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|r| if r[0] + r[1] > 1.0 { 1.0 } else { 0.0 })
            .collect();
        let config = GbdtConfig {
            n_trees: 100,
            ..Default::default()
        };
        let model = Gbdt::fit(&x, &y, Objective::Softmax { n_classes: 2 }, &config).unwrap();
        let probs = model.predict(&x);
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(model.loss(&x, &y) < 0.3, "{}", model.loss(&x, &y));
    }

    #[test]
    fn min_child_limits_splits() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let config = GbdtConfig {
            n_trees: 3,
            min_child: 20,
            ..Default::default()
        };
        let model = Gbdt::fit(&x, &y, Objective::SquaredError, &config).unwrap();
        assert!(model.trees.iter().flatten().all(|t| t.nodes.len() == 1));
    }
}
