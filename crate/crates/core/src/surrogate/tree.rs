//! Greedy CART regression tree with sum-of-squared-error splits.
//!
//! Candidate thresholds for a feature at a node are the midpoints between
//! consecutive distinct values present at that node. Among candidates the
//! split with the lowest total child SSE wins; ties go to the lowest feature
//! index, then the lowest threshold. Rows route left iff `x[f] <= threshold`.

use serde::{Deserialize, Serialize};

use super::{check_training_input, FeatureMatrix, HyperParams, Predictor};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: T,
        samples: usize,
    },
}

/// Nodes are stored in a flat list; node 0 is the root and children are
/// referenced by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionTree<T> {
    n_features: usize,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    /// Fits one tree on every row. `max_features` (all features when unset)
    /// limits the columns tried per node, drawn from `rng`.
    pub fn fit(features: &FeatureMatrix<T>, targets: &[T], params: &HyperParams, rng: &mut SplitMix64) -> Result<Self> {
        check_training_input(features, targets)?;
        let d = features.n_cols();
        let binned = BinnedMatrix::new(features);
        let settings = GrowSettings::new(params, params.max_features.unwrap_or(d).clamp(1, d));
        Ok(grow(&binned, targets, (0..features.n_rows()).collect(), None, &settings, rng))
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf `x` lands in.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub(crate) fn structurally_valid(&self) -> bool {
        // Children always come after their parent, which rules out cycles.
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match *n {
                Node::Leaf { value, .. } => value.is_finite(),
                Node::Split { feature, threshold, left, right } => {
                    feature < self.n_features
                        && threshold.is_finite()
                        && left > i
                        && right > i
                        && left < self.nodes.len()
                        && right < self.nodes.len()
                }
            })
    }
}

impl<T: Scalar> Predictor<T> for RegressionTree<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: &[T]) -> T {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }
}

/// Each column recoded as the rank of its value among that column's
/// distinct values, so split search works on small integer bins.
pub(crate) struct BinnedMatrix<T> {
    n_rows: usize,
    /// Column-major bin codes.
    codes: Vec<u32>,
    /// Sorted distinct values of each column.
    edges: Vec<Vec<T>>,
}

impl<T: Scalar> BinnedMatrix<T> {
    pub(crate) fn new(m: &FeatureMatrix<T>) -> Self {
        let n = m.n_rows();
        let mut codes = vec![0u32; n * m.n_cols()];
        let mut edges = Vec::with_capacity(m.n_cols());
        let mut column: Vec<T> = Vec::with_capacity(n);
        for f in 0..m.n_cols() {
            column.clear();
            column.extend((0..n).map(|r| m.get(r, f)));
            let mut uniq = column.clone();
            uniq.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            uniq.dedup();
            for (r, v) in column.iter().enumerate() {
                let b = uniq
                    .binary_search_by(|e| e.partial_cmp(v).expect("finite features"))
                    .expect("value is present");
                codes[f * n + r] = b as u32;
            }
            edges.push(uniq);
        }
        BinnedMatrix { n_rows: n, codes, edges }
    }

    pub(crate) fn n_cols(&self) -> usize {
        self.edges.len()
    }

    fn column(&self, feature: usize) -> &[u32] {
        &self.codes[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    fn code(&self, feature: usize, row: usize) -> u32 {
        self.codes[feature * self.n_rows + row]
    }
}

pub(crate) struct GrowSettings {
    max_depth: Option<usize>,
    min_samples_leaf: usize,
    min_samples_split: usize,
    max_features: usize,
}

impl GrowSettings {
    pub(crate) fn new(params: &HyperParams, max_features: usize) -> Self {
        GrowSettings {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf.max(1),
            min_samples_split: params.min_samples_split.max(1),
            max_features,
        }
    }
}

#[derive(Clone, Copy)]
struct Group<T> {
    bin: u32,
    count: usize,
    sum: T,
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    feature: usize,
    left_bin: u32,
    right_bin: u32,
    score: T,
}

struct Scratch<T> {
    counts: Vec<usize>,
    sums: Vec<T>,
    groups: Vec<Group<T>>,
    pairs: Vec<(u32, T, usize)>,
    /// Weighted, centered targets of the rows at the current node, in row order.
    resid: Vec<T>,
    weight: Vec<usize>,
    features: Vec<usize>,
    partition: Vec<usize>,
}

/// Grows a tree over `rows`. `weights[r]`, when given, is how many times
/// row `r` occurs in the sample (a bootstrap draw); a row of weight `k`
/// behaves exactly like `k` copies of it.
pub(crate) fn grow<T: Scalar>(
    binned: &BinnedMatrix<T>,
    targets: &[T],
    mut rows: Vec<usize>,
    weights: Option<&[u32]>,
    settings: &GrowSettings,
    rng: &mut SplitMix64,
) -> RegressionTree<T> {
    let d = binned.n_cols();
    let max_bins = binned.edges.iter().map(Vec::len).max().unwrap_or(0);
    let mut scratch = Scratch {
        counts: vec![0; max_bins],
        sums: vec![T::zero(); max_bins],
        groups: Vec::with_capacity(max_bins),
        pairs: Vec::new(),
        resid: Vec::with_capacity(rows.len()),
        weight: Vec::with_capacity(rows.len()),
        features: (0..d).collect(),
        partition: Vec::with_capacity(rows.len()),
    };
    let mut nodes: Vec<Node<T>> = vec![Node::Leaf { value: T::zero(), samples: 0 }];
    let mut stack: Vec<(usize, usize, usize, usize)> = vec![(0, 0, rows.len(), 0)];

    while let Some((id, start, end, depth)) = stack.pop() {
        let slice = &rows[start..end];
        let mut n = 0usize;
        let mut sum = T::zero();
        let (mut lo, mut hi) = (targets[slice[0]], targets[slice[0]]);
        for &r in slice {
            let y = targets[r];
            match weights {
                Some(w) => {
                    n += w[r] as usize;
                    sum += T::from_usize_lossy(w[r] as usize) * y;
                }
                None => {
                    n += 1;
                    sum += y;
                }
            }
            lo = lo.min(y);
            hi = hi.max(y);
        }
        let mean = sum / T::from_usize_lossy(n);

        let may_split = settings.max_depth.is_none_or(|m| depth < m)
            && n >= settings.min_samples_split
            && n >= 2 * settings.min_samples_leaf
            && lo < hi;
        let best = if may_split {
            find_split(binned, targets, slice, weights, n, mean, settings, rng, &mut scratch)
        } else {
            None
        };

        match best {
            None => nodes[id] = Node::Leaf { value: mean, samples: n },
            Some(c) => {
                let threshold = split_threshold(binned, &c);

                // stable partition: left rows first
                scratch.partition.clear();
                scratch.partition.extend(rows[start..end].iter().copied().filter(|&r| binned.code(c.feature, r) <= c.left_bin));
                let n_left = scratch.partition.len();
                scratch.partition.extend(rows[start..end].iter().copied().filter(|&r| binned.code(c.feature, r) > c.left_bin));
                rows[start..end].copy_from_slice(&scratch.partition);

                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: T::zero(), samples: 0 });
                nodes.push(Node::Leaf { value: T::zero(), samples: 0 });
                nodes[id] = Node::Split { feature: c.feature, threshold, left, right };
                stack.push((right, start + n_left, end, depth + 1));
                stack.push((left, start, start + n_left, depth + 1));
            }
        }
    }

    RegressionTree { n_features: d, nodes }
}

#[allow(clippy::too_many_arguments)]
fn find_split<T: Scalar>(
    binned: &BinnedMatrix<T>,
    targets: &[T],
    rows: &[usize],
    weights: Option<&[u32]>,
    n: usize,
    mean: T,
    settings: &GrowSettings,
    rng: &mut SplitMix64,
    scratch: &mut Scratch<T>,
) -> Option<Candidate<T>> {
    let d = binned.n_cols();

    scratch.resid.clear();
    scratch.weight.clear();
    match weights {
        Some(w) => {
            scratch.weight.extend(rows.iter().map(|&r| w[r] as usize));
            scratch.resid.extend(rows.iter().map(|&r| T::from_usize_lossy(w[r] as usize) * (targets[r] - mean)));
        }
        None => {
            scratch.weight.resize(rows.len(), 1);
            scratch.resid.extend(rows.iter().map(|&r| targets[r] - mean));
        }
    }
    let total = scratch.resid.iter().copied().sum::<T>();
    let mut best: Option<Candidate<T>> = None;

    // Features are drawn in random order (partial Fisher-Yates) until
    // `max_features` of them vary at this node; constant ones do not count.
    let all = settings.max_features >= d;
    if !all {
        for (i, f) in scratch.features.iter_mut().enumerate() {
            *f = i;
        }
    }
    let mut varying = 0;
    for i in 0..d {
        if varying == settings.max_features {
            break;
        }
        let f = if all {
            i
        } else {
            let j = i + rng.below(d - i);
            scratch.features.swap(i, j);
            scratch.features[i]
        };
        let n_bins = binned.edges[f].len();
        if n_bins < 2 {
            continue;
        }
        scratch.groups.clear();
        if n_bins <= 4 * rows.len() {
            let (counts, sums) = (&mut scratch.counts[..n_bins], &mut scratch.sums[..n_bins]);
            counts.fill(0);
            sums.fill(T::zero());
            let column = binned.column(f);
            for ((&r, &y), &w) in rows.iter().zip(&scratch.resid).zip(&scratch.weight) {
                let b = column[r] as usize;
                counts[b] += w;
                sums[b] += y;
            }
            for b in 0..n_bins {
                if counts[b] > 0 {
                    scratch.groups.push(Group { bin: b as u32, count: counts[b], sum: sums[b] });
                }
            }
        } else {
            scratch.pairs.clear();
            let column = binned.column(f);
            scratch.pairs.extend(rows.iter().zip(&scratch.resid).zip(&scratch.weight).map(|((&r, &y), &w)| (column[r], y, w)));
            scratch.pairs.sort_by_key(|p| p.0);
            for &(b, y, w) in &scratch.pairs {
                match scratch.groups.last_mut() {
                    Some(g) if g.bin == b => {
                        g.count += w;
                        g.sum += y;
                    }
                    _ => scratch.groups.push(Group { bin: b, count: w, sum: y }),
                }
            }
        }
        if scratch.groups.len() < 2 {
            continue;
        }
        varying += 1;
        scan(&scratch.groups, f, n, total, settings.min_samples_leaf, &mut best);
    }

    // Zero-gain splits are kept: an impure node always splits if it can,
    // which is what lets an unlimited tree separate every distinct point.
    best
}

/// Tries every boundary between consecutive occupied bins of feature `f`.
/// Maximizing `s_l²/n_l + s_r²/n_r` over sums of targets shifted by any
/// constant is the same as minimizing the children's SSE.
fn scan<T: Scalar>(groups: &[Group<T>], f: usize, n: usize, total: T, min_leaf: usize, best: &mut Option<Candidate<T>>) {
    let mut n_left = 0usize;
    let mut s_left = T::zero();
    for w in groups.windows(2) {
        n_left += w[0].count;
        s_left += w[0].sum;
        let n_right = n - n_left;
        if n_left < min_leaf {
            continue;
        }
        if n_right < min_leaf {
            break;
        }
        let s_right = total - s_left;
        let score = s_left * s_left / T::from_usize_lossy(n_left) + s_right * s_right / T::from_usize_lossy(n_right);
        if best.is_none_or(|b| score > b.score || (score == b.score && f < b.feature)) {
            *best = Some(Candidate { feature: f, left_bin: w[0].bin, right_bin: w[1].bin, score });
        }
    }
}

/// Per-feature bin counts and target sums for one node, all features laid
/// end to end.
struct Histogram<T> {
    counts: Vec<usize>,
    sums: Vec<T>,
}

/// Like [`grow`] with every feature tried at every node and unit weights,
/// but each node's split search reads a histogram instead of its rows. Only
/// the smaller child's histogram is built from rows; the larger one is the
/// parent's minus the smaller's.
pub(crate) fn grow_all_features<T: Scalar>(
    binned: &BinnedMatrix<T>,
    targets: &[T],
    mut rows: Vec<usize>,
    settings: &GrowSettings,
) -> RegressionTree<T> {
    let d = binned.n_cols();
    let mut offsets = Vec::with_capacity(d + 1);
    offsets.push(0);
    for e in &binned.edges {
        offsets.push(offsets.last().unwrap() + e.len());
    }
    let n_bins = offsets[d];
    // sums are taken relative to the root mean to keep them small
    let center = rows.iter().map(|&r| targets[r]).sum::<T>() / T::from_usize_lossy(rows.len());
    let build = |rows: &[usize], h: &mut Histogram<T>| {
        h.counts.clear();
        h.counts.resize(n_bins, 0);
        h.sums.clear();
        h.sums.resize(n_bins, T::zero());
        for f in 0..d {
            let column = binned.column(f);
            let (counts, sums) = (&mut h.counts[offsets[f]..offsets[f + 1]], &mut h.sums[offsets[f]..offsets[f + 1]]);
            for &r in rows {
                let b = column[r] as usize;
                counts[b] += 1;
                sums[b] += targets[r] - center;
            }
        }
    };

    let mut pool: Vec<Histogram<T>> = Vec::new();
    let mut groups = Vec::new();
    let mut partition = Vec::with_capacity(rows.len());
    let mut root = Histogram { counts: Vec::new(), sums: Vec::new() };
    build(&rows, &mut root);
    let mut nodes: Vec<Node<T>> = vec![Node::Leaf { value: T::zero(), samples: 0 }];
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize, root)];

    while let Some((id, start, end, depth, mut hist)) = stack.pop() {
        let slice = &rows[start..end];
        let n = slice.len();
        let mut sum = T::zero();
        let (mut lo, mut hi) = (targets[slice[0]], targets[slice[0]]);
        for &r in slice {
            let y = targets[r];
            sum += y;
            lo = lo.min(y);
            hi = hi.max(y);
        }
        let mean = sum / T::from_usize_lossy(n);

        let may_split = settings.max_depth.is_none_or(|m| depth < m)
            && n >= settings.min_samples_split
            && n >= 2 * settings.min_samples_leaf
            && lo < hi;
        let mut best = None;
        if may_split {
            let total = hist.sums[offsets[0]..offsets[1]].iter().copied().sum::<T>();
            for f in 0..d {
                groups.clear();
                for b in offsets[f]..offsets[f + 1] {
                    if hist.counts[b] > 0 {
                        groups.push(Group { bin: (b - offsets[f]) as u32, count: hist.counts[b], sum: hist.sums[b] });
                    }
                }
                if groups.len() >= 2 {
                    scan(&groups, f, n, total, settings.min_samples_leaf, &mut best);
                }
            }
        }

        let Some(c) = best else {
            nodes[id] = Node::Leaf { value: mean, samples: n };
            pool.push(hist);
            continue;
        };
        let threshold = split_threshold(binned, &c);
        let column = binned.column(c.feature);
        partition.clear();
        partition.extend(rows[start..end].iter().copied().filter(|&r| column[r] <= c.left_bin));
        let n_left = partition.len();
        partition.extend(rows[start..end].iter().copied().filter(|&r| column[r] > c.left_bin));
        rows[start..end].copy_from_slice(&partition);

        let (left_range, right_range) = ((start, start + n_left), (start + n_left, end));
        let small_is_left = n_left <= end - start - n_left;
        let (sa, sb) = if small_is_left { left_range } else { right_range };
        let mut small = pool.pop().unwrap_or(Histogram { counts: Vec::new(), sums: Vec::new() });
        build(&rows[sa..sb], &mut small);
        for b in 0..n_bins {
            hist.counts[b] -= small.counts[b];
            hist.sums[b] -= small.sums[b];
        }
        let (left_hist, right_hist) = if small_is_left { (small, hist) } else { (hist, small) };

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: T::zero(), samples: 0 });
        nodes.push(Node::Leaf { value: T::zero(), samples: 0 });
        nodes[id] = Node::Split { feature: c.feature, threshold, left, right };
        stack.push((right, right_range.0, right_range.1, depth + 1, right_hist));
        stack.push((left, left_range.0, left_range.1, depth + 1, left_hist));
    }

    RegressionTree { n_features: d, nodes }
}

/// Midpoint between the two bin values, falling back to the lower value
/// when rounding would put the midpoint on the upper one.
fn split_threshold<T: Scalar>(binned: &BinnedMatrix<T>, c: &Candidate<T>) -> T {
    let edges = &binned.edges[c.feature];
    let (a, b) = (edges[c.left_bin as usize], edges[c.right_bin as usize]);
    let two = T::one() + T::one();
    let threshold = a + (b - a) / two;
    if threshold >= b {
        a
    } else {
        threshold
    }
}
