use super::{ForestArrays, NodeKind, TreeArrays};
use crate::rng::SeededRng;

/// Shape of a seeded random forest used as an inference fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestSpec {
    pub n_trees: usize,
    pub depth: usize,
    pub n_features: usize,
    pub n_treatments: usize,
    pub seed: u64,
    /// Chance that a non-root node above the depth limit becomes a leaf early.
    pub early_leaf_prob: f64,
    pub categorical_prob: f64,
    pub feature_names: Option<Vec<String>>,
    pub treatment_labels: Option<Vec<String>>,
}

impl Default for RandomForestSpec {
    fn default() -> Self {
        Self {
            n_trees: 50,
            depth: 7,
            n_features: 32,
            n_treatments: 4,
            seed: 7,
            early_leaf_prob: 0.0,
            categorical_prob: 0.1,
            feature_names: None,
            treatment_labels: None,
        }
    }
}

/// Trees are grown breadth first, so node indices follow BFS order.
/// Continuous thresholds are uniform in `[0.05, 0.95)`; categorical codes
/// are drawn from `{0, 0.25, 0.5, 0.75, 1}`; payloads are uniform rates.
pub fn random_forest(spec: &RandomForestSpec) -> ForestArrays {
    let mut rng = SeededRng::with_stream(spec.seed, 500);
    let trees = (0..spec.n_trees).map(|_| random_tree(spec, &mut rng)).collect();
    ForestArrays {
        trees,
        n_treatments: spec.n_treatments,
        feature_names: spec
            .feature_names
            .clone()
            .unwrap_or_else(|| (0..spec.n_features).map(|j| format!("g{j:02}")).collect()),
        treatment_labels: spec
            .treatment_labels
            .clone()
            .unwrap_or_else(|| (0..spec.n_treatments).map(|i| format!("t{i}")).collect()),
    }
}

fn random_tree(spec: &RandomForestSpec, rng: &mut SeededRng) -> TreeArrays {
    let w = spec.n_treatments;
    let mut t = TreeArrays {
        node_type: Vec::new(),
        feature_index: Vec::new(),
        split_value: Vec::new(),
        left_child: Vec::new(),
        right_child: Vec::new(),
        nan_goes_left: Vec::new(),
        leaf_payload: Vec::new(),
        payload_width: w,
    };
    // Queue of (node index, depth); nodes are appended as discovered.
    let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
    push_blank(&mut t);
    while let Some((node, depth)) = queue.pop_front() {
        let leaf = depth >= spec.depth || (depth > 0 && rng.bernoulli(spec.early_leaf_prob));
        if leaf {
            t.node_type[node] = NodeKind::Leaf;
            for k in 0..w {
                t.leaf_payload[node * w + k] = rng.uniform();
            }
            continue;
        }
        let categorical = rng.bernoulli(spec.categorical_prob);
        t.node_type[node] = if categorical {
            NodeKind::InternalCategorical
        } else {
            NodeKind::InternalContinuous
        };
        t.feature_index[node] = rng.below(spec.n_features as u64) as usize;
        t.split_value[node] = if categorical {
            rng.below(5) as f64 * 0.25
        } else {
            rng.uniform_in(0.05, 0.95)
        };
        t.nan_goes_left[node] = rng.bernoulli(0.5);
        for side in 0..2 {
            let child = t.node_type.len();
            push_blank(&mut t);
            if side == 0 {
                t.left_child[node] = child;
            } else {
                t.right_child[node] = child;
            }
            queue.push_back((child, depth + 1));
        }
    }
    t
}

fn push_blank(t: &mut TreeArrays) {
    t.node_type.push(NodeKind::Leaf);
    t.feature_index.push(0);
    t.split_value.push(f64::NAN);
    t.left_child.push(0);
    t.right_child.push(0);
    t.nan_goes_left.push(false);
    t.leaf_payload.extend(std::iter::repeat_n(0.0, t.payload_width));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_depth_seven_tree_has_255_nodes() {
        let f = random_forest(&RandomForestSpec {
            n_trees: 2,
            ..RandomForestSpec::default()
        });
        assert!(f.trees.iter().all(|t| t.n_nodes() == 255));
        assert!(f.validate(None).passed());
    }

    #[test]
    fn early_leaves_still_validate() {
        let f = random_forest(&RandomForestSpec {
            n_trees: 20,
            depth: 6,
            early_leaf_prob: 0.3,
            ..RandomForestSpec::default()
        });
        assert!(f.validate(None).passed());
        assert!(f.trees.iter().any(|t| t.n_nodes() < 127));
    }

    #[test]
    fn seeded() {
        let s = RandomForestSpec {
            n_trees: 3,
            ..RandomForestSpec::default()
        };
        assert_eq!(random_forest(&s).to_text(), random_forest(&s).to_text());
    }
}
