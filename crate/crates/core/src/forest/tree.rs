use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Label, LabeledCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: Label,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Binary tree stored as a flat node array; node 0 is the root and children
/// always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

/// Best split found over a node's rows: `x <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    /// Structural check for trees read from disk.
    pub fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if *feature >= n_features {
                    return Err(format!("node {i}: feature {feature} out of range"));
                }
                if !threshold.is_finite() {
                    return Err(format!("node {i}: non-finite threshold"));
                }
                for c in [*left as usize, *right as usize] {
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index {c}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Grows a tree over `rows` (indices into `data`, duplicates allowed).
    pub(crate) fn grow<R: Rng>(
        data: &LabeledCorpus,
        rows: Vec<usize>,
        params: GrowParams,
        rng: &mut R,
    ) -> Tree {
        let mut nodes = Vec::new();
        grow_node(data, rows, params, 0, rng, &mut nodes);
        Tree { nodes }
    }
}

fn majority(counts: [usize; 2]) -> Label {
    Label::from_bool(counts[1] > counts[0])
}

fn grow_node<R: Rng>(
    data: &LabeledCorpus,
    rows: Vec<usize>,
    params: GrowParams,
    depth: usize,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> u32 {
    let at = nodes.len();
    let mut counts = [0usize; 2];
    for &r in &rows {
        counts[data.label(r).index()] += 1;
    }
    nodes.push(Node::Leaf {
        label: majority(counts),
    });

    let pure = counts[0] == 0 || counts[1] == 0;
    let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_capped || rows.len() < 2 * params.min_leaf {
        return at as u32;
    }

    let mut features = index::sample(rng, data.n_features(), params.mtry).into_vec();
    features.sort_unstable();
    let Some(choice) = best_split(data, &rows, &features, params.min_leaf) else {
        return at as u32;
    };

    let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| data.value(r, choice.feature) <= choice.threshold);
    let left = grow_node(data, l_rows, params, depth + 1, rng, nodes);
    let right = grow_node(data, r_rows, params, depth + 1, rng, nodes);
    nodes[at] = Node::Split {
        feature: choice.feature,
        threshold: choice.threshold,
        left,
        right,
    };
    at as u32
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Largest Gini decrease over the candidate features; ties keep the lowest
/// feature index, then the lowest threshold. Only splits with positive gain
/// and at least `min_leaf` rows per side qualify.
pub(crate) fn best_split(
    data: &LabeledCorpus,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    let mut total = [0usize; 2];
    for &r in rows {
        total[data.label(r).index()] += 1;
    }
    let parent = gini(total);
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);

    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (data.value(r, f), data.label(r).index())));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for i in 0..n - 1 {
            left[pairs[i].1] += 1;
            let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
            if lo == hi {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let child = (nl as f64 * gini(left) + nr as f64 * gini(right)) / n as f64;
            let gain = parent - child;
            if gain <= 1e-12 || best.is_some_and(|b| gain <= b.gain) {
                continue;
            }
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            best = Some(SplitChoice {
                feature: f,
                threshold,
                gain,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(rows: &[(f64, f64, bool)]) -> LabeledCorpus {
        let mut c = LabeledCorpus::new(vec!["a".into(), "b".into()]);
        for (i, &(a, b, w)) in rows.iter().enumerate() {
            c.push(i.to_string(), &[a, b], Label::from_bool(w)).unwrap();
        }
        c
    }

    /// Exhaustive oracle: every feature, every midpoint, Gini counted from
    /// scratch.
    fn oracle_best(data: &LabeledCorpus) -> (usize, f64, f64) {
        let n = data.len();
        let imp = |rows: &[usize]| {
            let k = rows.len() as f64;
            if k == 0.0 {
                return 0.0;
            }
            let w = rows.iter().filter(|&&r| data.label(r).is_wasabi()).count() as f64;
            1.0 - (w / k).powi(2) - ((k - w) / k).powi(2)
        };
        let all: Vec<usize> = (0..n).collect();
        let parent = imp(&all);
        let mut best = (usize::MAX, f64::NAN, 0.0);
        for f in 0..data.n_features() {
            let mut vals: Vec<f64> = all.iter().map(|&r| data.value(r, f)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) =
                    all.iter().partition(|&&i| data.value(i, f) <= t);
                let child = (l.len() as f64 * imp(&l) + r.len() as f64 * imp(&r)) / n as f64;
                let gain = parent - child;
                if gain > best.2 + 1e-12 {
                    best = (f, t, gain);
                }
            }
        }
        best
    }

    fn separable() -> LabeledCorpus {
        let mut rows = Vec::new();
        for i in 0..20 {
            let a = (i * 7 % 20) as f64;
            let b = (i * 3 % 11) as f64;
            rows.push((a, b, a + b > 14.0));
        }
        corpus(&rows)
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        let data = separable();
        let rows: Vec<usize> = (0..data.len()).collect();
        let got = best_split(&data, &rows, &[0, 1], 1).unwrap();
        let (f, t, g) = oracle_best(&data);
        assert_eq!(got.feature, f);
        assert!((got.threshold - t).abs() < 1e-12);
        assert!((got.gain - g).abs() < 1e-12);
    }

    #[test]
    fn full_tree_fits_separable_set() {
        let data = separable();
        let params = GrowParams {
            mtry: 2,
            max_depth: None,
            min_leaf: 1,
        };
        let tree = Tree::grow(&data, (0..data.len()).collect(), params, &mut ChaCha8Rng::seed_from_u64(1));
        for i in 0..data.len() {
            assert_eq!(tree.predict(data.row(i)), data.label(i));
        }
        assert!(tree.validate(2).is_ok());
    }

    #[test]
    fn tie_prefers_lowest_feature_index() {
        // Both features separate perfectly with the same gain.
        let data = corpus(&[(0.0, 0.0, false), (1.0, 1.0, true)]);
        let s = best_split(&data, &[0, 1], &[0, 1], 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn no_split_without_gain_or_room() {
        let data = corpus(&[(1.0, 1.0, false), (1.0, 1.0, true)]);
        assert!(best_split(&data, &[0, 1], &[0, 1], 1).is_none());
        let data = corpus(&[(0.0, 0.0, false), (1.0, 1.0, true)]);
        assert!(best_split(&data, &[0, 1], &[0, 1], 2).is_none());
    }

    #[test]
    fn max_depth_caps_growth() {
        let data = separable();
        let params = GrowParams {
            mtry: 2,
            max_depth: Some(1),
            min_leaf: 1,
        };
        let tree = Tree::grow(&data, (0..data.len()).collect(), params, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn validate_rejects_backward_children() {
        let t = Tree {
            nodes: vec![Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
            }],
        };
        assert!(t.validate(1).is_err());
    }
}
