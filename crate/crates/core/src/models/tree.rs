//! Level-wise exact tree growth over presorted columns.
//!
//! One grower serves three criteria: weighted Gini (classification trees
//! and forests), squared error on residuals (gradient boosting) and the
//! second-order gain with leaf L2 and split penalty (regularized boosting).
//! Rows go left iff `x < threshold`; thresholds are midpoints between
//! adjacent distinct values.

use std::ops::{Add, AddAssign, Sub};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        /// Position of the column in the model's input.
        feature: usize,
        column_id: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let TreeNode::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

/// Per-row sufficient statistics; `n` is the row multiplicity (0 excludes the
/// row). The meaning of `a`, `b`, `c` depends on the criterion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Acc {
    pub n: f64,
    pub w: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Add for Acc {
    type Output = Acc;
    fn add(self, o: Acc) -> Acc {
        Acc {
            n: self.n + o.n,
            w: self.w + o.w,
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
        }
    }
}

impl AddAssign for Acc {
    fn add_assign(&mut self, o: Acc) {
        *self = *self + o;
    }
}

impl Sub for Acc {
    type Output = Acc;
    fn sub(self, o: Acc) -> Acc {
        Acc {
            n: self.n - o.n,
            w: self.w - o.w,
            a: self.a - o.a,
            b: self.b - o.b,
            c: self.c - o.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Criterion {
    /// `w` = weight, `a` = weight × label.
    Gini,
    /// `w` = weight, `a` = Σ w r, `b` = Σ w r², `c` = Σ w h for the Newton leaf.
    SquaredError,
    /// `a` = Σ g, `c` = Σ h.
    SecondOrder { lambda: f64, gamma: f64 },
}

impl Criterion {
    /// Node loss; a split's gain is `loss(parent) − loss(left) − loss(right)`.
    pub(crate) fn loss(&self, s: &Acc) -> f64 {
        match *self {
            Criterion::Gini => {
                if s.w <= 0.0 {
                    0.0
                } else {
                    (2.0 * s.a * (s.w - s.a) / s.w).max(0.0)
                }
            }
            Criterion::SquaredError => {
                if s.w <= 0.0 {
                    0.0
                } else {
                    (s.b - s.a * s.a / s.w).max(0.0)
                }
            }
            Criterion::SecondOrder { lambda, .. } => -0.5 * s.a * s.a / (s.c + lambda),
        }
    }

    fn worth_splitting(&self, s: &Acc) -> bool {
        match self {
            Criterion::Gini | Criterion::SquaredError => self.loss(s) > 0.0,
            Criterion::SecondOrder { .. } => true,
        }
    }

    /// Gini accepts zero-gain splits of impure nodes (a pure XOR quadrant is
    /// only reachable through one); the other criteria need positive gain,
    /// beyond `gamma` for the second-order one.
    fn accepts(&self, parent_loss: f64, gain: f64) -> bool {
        match *self {
            Criterion::Gini => gain >= -1e-12 * parent_loss,
            Criterion::SquaredError => gain > 1e-12 * parent_loss,
            Criterion::SecondOrder { gamma, .. } => gain > gamma,
        }
    }

    pub(crate) fn leaf_value(&self, s: &Acc) -> f64 {
        match *self {
            Criterion::Gini => {
                if s.w > 0.0 {
                    (s.a / s.w).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            Criterion::SquaredError => {
                if s.c > 1e-12 {
                    s.a / s.c
                } else {
                    0.0
                }
            }
            Criterion::SecondOrder { lambda, .. } => -s.a / (s.c + lambda),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub criterion: Criterion,
    /// Columns drawn per node; `None` uses all.
    pub max_features: Option<usize>,
}

/// Column-major features with each column's row order, shared by every tree
/// grown on the same rows.
pub(crate) struct Presorted {
    pub columns: Vec<Vec<f64>>,
    pub orders: Vec<Vec<u32>>,
    pub column_ids: Vec<usize>,
}

impl Presorted {
    pub(crate) fn new(columns: Vec<Vec<f64>>, column_ids: Vec<usize>) -> Self {
        let orders = columns
            .par_iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..col.len() as u32).collect();
                o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Presorted {
            columns,
            orders,
            column_ids,
        }
    }

    pub(crate) fn n_features(&self) -> usize {
        self.columns.len()
    }
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Summed accepted gain per feature position.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

const NONE: u32 = u32::MAX;

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

/// Grows one tree level by level. Each level scans every feature's presorted
/// order once, routing rows to the accumulator of their frontier node.
/// Equal gains resolve to the lowest column id, then the lowest threshold.
pub(crate) fn grow(data: &Presorted, stats: &[Acc], params: &GrowParams, mut rng: Option<&mut Rng>) -> Grown {
    let crit = params.criterion;
    let p = data.n_features();
    let min_leaf = params.min_leaf.max(1) as f64;
    let mut slot: Vec<u32> = stats.iter().map(|s| if s.n > 0.0 { 0 } else { NONE }).collect();
    let root: Acc = stats.iter().filter(|s| s.n > 0.0).fold(Acc::default(), |acc, &s| acc + s);

    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut gains = vec![0.0; p];
    // (node index, totals) for each frontier slot
    let mut frontier: Vec<(usize, Acc)> = vec![(0, root)];
    let mut depth = 0;
    while !frontier.is_empty() {
        let k_count = frontier.len();
        let splittable: Vec<bool> = frontier
            .iter()
            .map(|(_, acc)| depth < params.max_depth && acc.n >= 2.0 * min_leaf && crit.worth_splitting(acc))
            .collect();
        // uses[f * k_count + k]: frontier slot k may split on feature f
        let mut uses = vec![false; p * k_count];
        for (k, &ok) in splittable.iter().enumerate() {
            if !ok {
                continue;
            }
            match (params.max_features, rng.as_deref_mut()) {
                (Some(m), Some(r)) if m < p => {
                    for f in sample(r, p, m) {
                        uses[f * k_count + k] = true;
                    }
                }
                _ => (0..p).for_each(|f| uses[f * k_count + k] = true),
            }
        }

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..p)
            .into_par_iter()
            .map(|f| {
                let used = &uses[f * k_count..(f + 1) * k_count];
                let mut best: Vec<Option<Candidate>> = vec![None; k_count];
                if !used.iter().any(|&u| u) {
                    return best;
                }
                let col = &data.columns[f];
                let mut left = vec![Acc::default(); k_count];
                let mut last = vec![f64::NAN; k_count];
                for &r in &data.orders[f] {
                    let r = r as usize;
                    let k = slot[r];
                    if k == NONE || !used[k as usize] {
                        continue;
                    }
                    let k = k as usize;
                    let v = col[r];
                    if left[k].n >= min_leaf && v > last[k] {
                        let total = frontier[k].1;
                        let right = total - left[k];
                        if right.n >= min_leaf {
                            let parent_loss = crit.loss(&total);
                            let gain = parent_loss - crit.loss(&left[k]) - crit.loss(&right);
                            if crit.accepts(parent_loss, gain) && best[k].map_or(true, |b| gain > b.gain) {
                                best[k] = Some(Candidate {
                                    feature: f,
                                    threshold: midpoint(last[k], v),
                                    gain,
                                });
                            }
                        }
                    }
                    left[k] += stats[r];
                    last[k] = v;
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<Candidate>> = vec![None; k_count];
        for cands in &per_feature {
            for (k, c) in cands.iter().enumerate() {
                let Some(c) = c else { continue };
                let better = match chosen[k] {
                    None => true,
                    Some(b) => {
                        c.gain > b.gain
                            || (c.gain == b.gain && data.column_ids[c.feature] < data.column_ids[b.feature])
                    }
                };
                if better {
                    chosen[k] = Some(*c);
                }
            }
        }

        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; k_count];
        let mut next: Vec<(usize, Acc)> = Vec::new();
        for (k, &(node, acc)) in frontier.iter().enumerate() {
            match chosen[k] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[node] = TreeNode::Split {
                        feature: c.feature,
                        column_id: data.column_ids[c.feature],
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    gains[c.feature] += c.gain.max(0.0);
                    child_slots[k] = Some((next.len() as u32, next.len() as u32 + 1));
                    next.push((left, Acc::default()));
                    next.push((left + 1, Acc::default()));
                }
                None => {
                    nodes[node] = TreeNode::Leaf {
                        value: crit.leaf_value(&acc),
                    };
                }
            }
        }
        for (r, s) in slot.iter_mut().enumerate() {
            if *s == NONE {
                continue;
            }
            let k = *s as usize;
            match (chosen[k], child_slots[k]) {
                (Some(c), Some((l, rr))) => {
                    let child = if data.columns[c.feature][r] < c.threshold { l } else { rr };
                    next[child as usize].1 += stats[r];
                    *s = child;
                }
                _ => *s = NONE,
            }
        }
        frontier = next;
        depth += 1;
    }
    Grown {
        tree: Tree { nodes },
        gains,
    }
}
