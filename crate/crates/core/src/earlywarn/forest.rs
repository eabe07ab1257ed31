//! Random forest of Gini classification trees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

pub const FOREST_VERSION: &str = "epiwarn-forest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Nodes with fewer samples than this become leaves.
    pub min_leaf: usize,
    /// `None` grows until pure.
    pub max_depth: Option<usize>,
    /// Candidate features per node; `None` means `ceil(sqrt(F))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            min_leaf: 2,
            max_depth: None,
            max_features: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("earlywarn.forest.n_trees", "must be at least 1"));
        }
        if self.max_features == Some(0) {
            return Err(Error::config("earlywarn.forest.max_features", "must be at least 1"));
        }
        Ok(())
    }

    pub fn features_per_node(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

/// `1 - p0^2 - p1^2`.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

/// A tree in flattened form. Node `i` is a leaf when `feature[i] < 0`;
/// otherwise samples with `x[feature] <= threshold` go to `left[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i64>,
    pub threshold: Vec<f64>,
    pub left: Vec<i64>,
    pub right: Vec<i64>,
    /// Bootstrap class counts reaching the node.
    pub count0: Vec<u64>,
    pub count1: Vec<u64>,
}

impl Tree {
    fn empty() -> Self {
        Self {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            count0: Vec::new(),
            count1: Vec::new(),
        }
    }

    fn push_node(&mut self, counts: [usize; 2]) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(-1);
        self.right.push(-1);
        self.count0.push(counts[0] as u64);
        self.count1.push(counts[1] as u64);
        self.feature.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    /// Positive-class frequency at the leaf reached by `x`. Only the feature
    /// indices used by the tree are read.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        while self.feature[i] >= 0 {
            let f = self.feature[i] as usize;
            i = if x[f] <= self.threshold[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
        let (c0, c1) = (self.count0[i] as f64, self.count1[i] as f64);
        c1 / (c0 + c1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: String,
    pub params: ForestParams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Mean impurity decrease per feature, normalized to sum to 1.
    pub importances: Vec<f64>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Mean over trees of the leaf positive-class frequency.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|x| self.predict_proba(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ForestModel = serde_json::from_str(text)?;
        if f.version != FOREST_VERSION {
            return Err(Error::parse("forest", format!("unsupported version {}", f.version)));
        }
        let nf = f.n_features() as i64;
        for t in &f.trees {
            let n = t.n_nodes() as i64;
            let ok = t.feature.iter().all(|&v| v < nf)
                && [&t.threshold.len(), &t.left.len(), &t.right.len(), &t.count0.len(), &t.count1.len()]
                    .iter()
                    .all(|&&l| l as i64 == n)
                && t.feature.iter().zip(t.left.iter().zip(&t.right)).all(|(&f, (&l, &r))| {
                    f < 0 || (l > 0 && l < n && r > 0 && r < n)
                });
            if !ok || n == 0 {
                return Err(Error::parse("forest", "malformed tree arrays"));
            }
        }
        Ok(f)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: &'a ForestParams,
    mtry: usize,
    n_root: f64,
    importance: Vec<f64>,
    tree: Tree,
    rng: SimRng,
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn class_counts(y: &[u8], idx: &[usize]) -> [usize; 2] {
    let pos = idx.iter().filter(|&&i| y[i] == 1).count();
    [idx.len() - pos, pos]
}

impl Builder<'_> {
    fn best_split_on(&self, f: usize, idx: &[usize], counts: [usize; 2], parent: f64) -> Option<Split> {
        let mut pairs: Vec<(f64, u8)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len() as f64;
        let mut left = [0usize; 2];
        let mut best: Option<Split> = None;
        for p in 0..pairs.len() - 1 {
            left[pairs[p].1 as usize] += 1;
            let (v, next) = (pairs[p].0, pairs[p + 1].0);
            if v == next {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let nl = (left[0] + left[1]) as f64;
            let nr = n - nl;
            let decrease = parent - nl / n * gini(left) - nr / n * gini(right);
            let mut threshold = 0.5 * (v + next);
            if threshold >= next {
                threshold = v;
            }
            if best.as_ref().map_or(true, |b| decrease > b.decrease) {
                best = Some(Split {
                    feature: f,
                    threshold,
                    decrease,
                });
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = class_counts(self.y, &idx);
        let node = self.tree.push_node(counts);
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || idx.len() < self.params.min_leaf.max(2) || depth_capped {
            return node;
        }
        let parent = gini(counts);
        let n_features = self.x[0].len();
        // Features are visited in random order until `mtry` of them admit a
        // split; constant features do not use up the budget.
        let mut order: Vec<usize> = (0..n_features).collect();
        let mut best: Option<Split> = None;
        let mut evaluated = 0;
        for pos in 0..n_features {
            if evaluated == self.mtry {
                break;
            }
            let pick = pos + self.rng.below((n_features - pos) as u32) as usize;
            order.swap(pos, pick);
            let f = order[pos];
            let Some(s) = self.best_split_on(f, &idx, counts, parent) else {
                continue;
            };
            evaluated += 1;
            let better = match &best {
                None => true,
                Some(b) => {
                    s.decrease > b.decrease
                        || (s.decrease == b.decrease
                            && (s.feature < b.feature || (s.feature == b.feature && s.threshold < b.threshold)))
                }
            };
            if better {
                best = Some(s);
            }
        }
        let Some(split) = best else {
            return node;
        };
        self.importance[split.feature] += idx.len() as f64 / self.n_root * split.decrease;
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        self.tree.feature[node] = split.feature as i64;
        self.tree.threshold[node] = split.threshold;
        let li = self.grow(l, depth + 1);
        self.tree.left[node] = li as i64;
        let ri = self.grow(r, depth + 1);
        self.tree.right[node] = ri as i64;
        node
    }
}

fn build_tree(x: &[Vec<f64>], y: &[u8], params: &ForestParams, mtry: usize, seed: u64) -> (Tree, Vec<f64>) {
    let n = x.len();
    let mut rng = SimRng::from_seed(seed);
    let idx: Vec<usize> = (0..n).map(|_| rng.below(n as u32) as usize).collect();
    let mut b = Builder {
        x,
        y,
        params,
        mtry,
        n_root: n as f64,
        importance: vec![0.0; x[0].len()],
        tree: Tree::empty(),
        rng,
    };
    b.grow(idx, 0);
    (b.tree, b.importance)
}

/// Trains `params.n_trees` trees on bootstrap resamples. Tree `t` draws all
/// of its randomness from `derive_seed(seed, [t])`, so trees can be grown in
/// parallel without affecting the result.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: Vec<String>,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Empty("forest needs at least two samples".into()));
    }
    let nf = feature_names.len();
    if let Some(bad) = x.iter().find(|r| r.len() != nf) {
        return Err(Error::Shape {
            expected: nf,
            got: bad.len(),
        });
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    let mtry = params.features_per_node(nf);
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| build_tree(x, y, params, mtry, derive_seed(seed, &[t as u64])))
        .collect();
    let mut importances = vec![0.0; nf];
    for (_, imp) in &grown {
        importances.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        version: FOREST_VERSION.to_string(),
        params: params.clone(),
        seed,
        feature_names,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        importances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y = (0..100).map(|i| u8::from(i >= 50)).collect();
        (x, y)
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn gini_values() {
        assert!((gini([3, 1]) - 0.375).abs() < 1e-15);
        assert_eq!(gini([4, 0]), 0.0);
        assert_eq!(gini([2, 2]), 0.5);
    }

    #[test]
    fn separable_toy_is_fit() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 50,
            ..ForestParams::default()
        };
        let f = train_forest(&x, &y, names(2), &params, 1).unwrap();
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(u8::from(f.predict_proba(row).unwrap() >= 0.5), label);
        }
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f.importances[0] > f.importances[1]);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(train_forest(&x, &[1, 1], names(1), &ForestParams::default(), 0), Err(Error::SingleClass)));
    }

    #[test]
    fn length_mismatch_rejected() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 3,
            ..ForestParams::default()
        };
        let f = train_forest(&x, &y, names(2), &params, 1).unwrap();
        assert!(f.predict_proba(&[1.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        };
        let f = train_forest(&x, &y, names(2), &params, 4).unwrap();
        let back = ForestModel::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
