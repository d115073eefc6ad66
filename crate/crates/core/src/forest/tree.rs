//! CART regression trees with variance-reduction splits.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        /// Training rows (with bootstrap multiplicity) that reached the leaf.
        samples: usize,
    },
}

const LEAF: u32 = u32::MAX;

/// Packed node: a leaf stores its value in `value` and its sample count in
/// `child`; a split stores its threshold in `value` and its children at
/// `child` and `child + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Packed {
    value: f64,
    feature: u32,
    child: u32,
}

impl Packed {
    fn leaf(value: f64, samples: u32) -> Self {
        Packed { value, feature: LEAF, child: samples }
    }
}

/// A fitted tree; node 0 is the root and the two children of a split are
/// stored next to each other.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Packed>,
    hot: HotLeaf,
}

/// The box of feature space that reaches the leaf holding the most training
/// rows. Rows inside it skip the walk; most queries land there.
#[derive(Debug, Clone, PartialEq)]
struct HotLeaf {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Features the box actually constrains.
    bounds: Vec<(usize, f64, f64)>,
    value: f64,
}

impl HotLeaf {
    fn new(nodes: &[Packed], n_features: usize) -> HotLeaf {
        let mut parent = vec![usize::MAX; nodes.len()];
        let mut hot = 0;
        for (i, n) in nodes.iter().enumerate() {
            if n.feature == LEAF {
                if n.child > nodes[hot].child || nodes[hot].feature != LEAF {
                    hot = i;
                }
            } else {
                parent[n.child as usize] = i;
                parent[n.child as usize + 1] = i;
            }
        }
        let mut lower = vec![f64::NEG_INFINITY; n_features];
        let mut upper = vec![f64::INFINITY; n_features];
        let mut i = hot;
        while parent[i] != usize::MAX {
            let p = nodes[parent[i]];
            let f = p.feature as usize;
            if i == p.child as usize {
                upper[f] = upper[f].min(p.value);
            } else {
                lower[f] = lower[f].max(p.value);
            }
            i = parent[i];
        }
        let bounds = (0..n_features)
            .filter(|&f| lower[f] > f64::NEG_INFINITY || upper[f] < f64::INFINITY)
            .map(|f| (f, lower[f], upper[f]))
            .collect();
        HotLeaf {
            lower,
            upper,
            bounds,
            value: nodes[hot].value,
        }
    }
}

/// Reusable buffers for [`Tree::accumulate_rows`].
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    pending: Vec<usize>,
    mask: Vec<bool>,
}

#[inline]
pub(crate) fn in_box(row: &[f64], lower: &[f64], upper: &[f64]) -> bool {
    row.iter()
        .zip(lower.iter().zip(upper))
        .fold(true, |ok, (v, (lo, hi))| ok & (v > lo) & (v <= hi))
}

/// Rows inside every tree's hot box; they all get the same prediction.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Core {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Hot-leaf values summed in tree order.
    sum: f64,
}

impl Core {
    pub fn new(trees: &[Tree], n_features: usize) -> Option<Core> {
        let mut lower = vec![f64::NEG_INFINITY; n_features];
        let mut upper = vec![f64::INFINITY; n_features];
        let mut sum = 0.0;
        for t in trees {
            for f in 0..n_features {
                lower[f] = lower[f].max(t.hot.lower[f]);
                upper[f] = upper[f].min(t.hot.upper[f]);
            }
            sum += t.hot.value;
        }
        lower.iter().zip(&upper).all(|(lo, hi)| lo < hi).then_some(Core { lower, upper, sum })
    }

    #[inline]
    pub fn covers(&self, row: &[f64]) -> bool {
        in_box(row, &self.lower, &self.upper)
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }
}

impl Tree {
    fn from_packed(nodes: Vec<Packed>, n_features: usize) -> Tree {
        let hot = HotLeaf::new(&nodes, n_features);
        Tree { nodes, hot }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> Node {
        let p = self.nodes[i];
        if p.feature == LEAF {
            Node::Leaf {
                value: p.value,
                samples: p.child as usize,
            }
        } else {
            Node::Split {
                feature: p.feature as usize,
                threshold: p.value,
                left: p.child as usize,
                right: p.child as usize + 1,
            }
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = Node> + '_ {
        (0..self.nodes.len()).map(|i| self.node(i))
    }

    /// Rebuilds a tree from nodes whose split children are adjacent and
    /// stored after their parent.
    pub(crate) fn from_nodes(nodes: &[Node], n_features: usize) -> Option<Tree> {
        let n = nodes.len();
        let packed = nodes
            .iter()
            .enumerate()
            .map(|(i, node)| match *node {
                Node::Leaf { value, samples } => Some(Packed::leaf(value, u32::try_from(samples).ok()?)),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let ok = feature < n_features && left > i && right == left + 1 && right < n;
                    ok.then(|| Packed {
                        value: threshold,
                        feature: feature as u32,
                        child: left as u32,
                    })
                }
            })
            .collect::<Option<Vec<_>>>()?;
        (n > 0).then(|| Tree::from_packed(packed, n_features))
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = self.nodes[i];
            if node.feature == LEAF {
                return node.value;
            }
            let go_right = x[node.feature as usize] > node.value;
            i = node.child as usize + usize::from(go_right);
        }
    }

    /// Adds this tree's prediction for each row of `x` (row-major with
    /// `n_features` columns, `xt` the same rows feature-major) to `out`.
    /// Results equal `predict` row by row.
    pub(crate) fn accumulate_rows(
        &self,
        x: &[f64],
        xt: &[f64],
        n_features: usize,
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        const LANES: usize = 8;
        let n = out.len();
        let Scratch { pending, mask } = scratch;
        mask.clear();
        mask.resize(n, true);
        for &(f, lo, hi) in &self.hot.bounds {
            let col = &xt[f * n..(f + 1) * n];
            for (m, &v) in mask.iter_mut().zip(col) {
                *m &= (v > lo) & (v <= hi);
            }
        }
        pending.clear();
        for (r, (&hit, acc)) in mask.iter().zip(out.iter_mut()).enumerate() {
            if hit {
                *acc += self.hot.value;
            } else {
                pending.push(r);
            }
        }
        // Walk the remaining rows several at a time so their node loads overlap.
        let nodes = &self.nodes[..];
        let mut blocks = pending.chunks_exact(LANES);
        for block in &mut blocks {
            let mut idx = [0usize; LANES];
            loop {
                let mut active = false;
                for lane in 0..LANES {
                    let node = nodes[idx[lane]];
                    if node.feature != LEAF {
                        let v = x[block[lane] * n_features + node.feature as usize];
                        idx[lane] = node.child as usize + usize::from(v > node.value);
                        active = true;
                    }
                }
                if !active {
                    break;
                }
            }
            for lane in 0..LANES {
                out[block[lane]] += nodes[idx[lane]].value;
            }
        }
        for &r in blocks.remainder() {
            out[r] += self.predict(&x[r * n_features..(r + 1) * n_features]);
        }
    }


    pub fn depth(&self) -> usize {
        fn go(nodes: &[Packed], i: usize) -> usize {
            let n = nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + go(nodes, n.child as usize).max(go(nodes, n.child as usize + 1))
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Higher score wins; ties go to the lower feature, then the lower threshold.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score > o.score
                    || (self.score == o.score
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    x: f64,
    y: f64,
    row: u32,
    /// Bootstrap multiplicity.
    w: u32,
}

/// Row indices of a feature matrix sorted by each feature, shared by all
/// trees of a forest.
pub(crate) struct SortedColumns {
    order: Vec<u32>,
    n_rows: usize,
}

impl SortedColumns {
    pub fn new(x: &[f64], n_features: usize) -> Self {
        let n_rows = x.len() / n_features;
        let mut order = Vec::with_capacity(x.len());
        for f in 0..n_features {
            let start = order.len();
            order.extend(0..n_rows as u32);
            order[start..].sort_by(|&a, &b| x[a as usize * n_features + f].total_cmp(&x[b as usize * n_features + f]));
        }
        SortedColumns { order, n_rows }
    }

    fn feature(&self, f: usize) -> &[u32] {
        &self.order[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

/// Grows a tree from per-row sample counts (bootstrap multiplicities).
///
/// Each column holds the sampled rows in feature order; a split stably
/// partitions every column's node segment, so segments stay sorted.
pub(crate) struct Grower<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n_features: usize,
    params: GrowParams,
    features: Vec<usize>,
    /// `n_features` columns of `m` entries each.
    cols: Vec<Entry>,
    goes_left: Vec<bool>,
    spill: Vec<Entry>,
    m: usize,
}

impl<'a> Grower<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], n_features: usize, params: GrowParams) -> Self {
        Grower {
            x,
            y,
            n_features,
            params,
            features: (0..n_features).collect(),
            cols: Vec::new(),
            goes_left: Vec::new(),
            spill: Vec::new(),
            m: 0,
        }
    }

    fn column(&self, f: usize, start: usize, end: usize) -> &[Entry] {
        &self.cols[f * self.m + start..f * self.m + end]
    }

    pub fn grow(mut self, sorted: &SortedColumns, counts: &[u32], rng: &mut StreamRng) -> Tree {
        let nf = self.n_features;
        self.goes_left = vec![false; counts.len()];
        for f in 0..nf {
            for &r in sorted.feature(f) {
                let w = counts[r as usize];
                if w > 0 {
                    self.cols.push(Entry {
                        x: self.x[r as usize * nf + f],
                        y: self.y[r as usize],
                        row: r,
                        w,
                    });
                }
            }
        }
        self.m = self.cols.len() / nf;
        let mut nodes = vec![Packed::leaf(0.0, 0)];
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, self.m, 0usize)];
        while let Some((slot, start, end, depth)) = stack.pop() {
            let split = if self.params.max_depth.is_some_and(|d| depth >= d) {
                None
            } else {
                self.best_split(start, end, rng)
            };
            match split {
                None => {
                    let (sum, n) = sums(self.column(0, start, end));
                    nodes[slot] = Packed::leaf(sum / n as f64, n as u32);
                }
                Some(c) => {
                    let mid = start + self.partition(start, end, c);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Packed::leaf(0.0, 0));
                    nodes.push(Packed::leaf(0.0, 0));
                    nodes[slot] = Packed {
                        value: c.threshold,
                        feature: c.feature as u32,
                        child: left as u32,
                    };
                    stack.push((right, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
            }
        }
        Tree::from_packed(nodes, nf)
    }

    /// Stable partition of every column segment; returns the left count.
    fn partition(&mut self, start: usize, end: usize, c: Candidate) -> usize {
        let base = c.feature * self.m;
        for e in &self.cols[base + start..base + end] {
            self.goes_left[e.row as usize] = e.x <= c.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.n_features {
            let seg = &mut self.cols[f * self.m + start..f * self.m + end];
            self.spill.clear();
            let mut k = 0;
            for i in 0..seg.len() {
                let e = seg[i];
                if self.goes_left[e.row as usize] {
                    seg[k] = e;
                    k += 1;
                } else {
                    self.spill.push(e);
                }
            }
            seg[k..].copy_from_slice(&self.spill);
            n_left = k;
        }
        n_left
    }

    fn best_split(&mut self, start: usize, end: usize, rng: &mut StreamRng) -> Option<Candidate> {
        let m = end - start;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let seg0 = self.column(0, start, end);
        let (total, n) = sums(seg0);
        if n < 2 * min_leaf {
            return None;
        }
        let first = seg0[0].y;
        if seg0.iter().all(|e| e.y == first) {
            return None;
        }
        self.features.shuffle(rng);
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        // Draw features in random order; keep drawing past the quota while no
        // valid split has been found.
        for k in 0..self.n_features {
            if evaluated >= self.params.features_per_split && best.is_some() {
                break;
            }
            let f = self.features[k];
            evaluated += 1;
            let seg = self.column(f, start, end);
            if seg[0].x == seg[m - 1].x {
                continue;
            }
            let mut left_sum = 0.0;
            let mut n_left = 0;
            for i in 0..m - 1 {
                left_sum += seg[i].w as f64 * seg[i].y;
                n_left += seg[i].w as usize;
                let (xi, xn) = (seg[i].x, seg[i + 1].x);
                if xi == xn {
                    continue;
                }
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // Maximising this is equivalent to minimising the summed
                // squared error of the children.
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                let mut threshold = 0.5 * (xi + xn);
                if threshold >= xn {
                    threshold = xi;
                }
                let cand = Candidate {
                    score,
                    feature: f,
                    threshold,
                };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Weighted label sum and sample count of a segment.
fn sums(seg: &[Entry]) -> (f64, usize) {
    seg.iter()
        .fold((0.0, 0), |(s, n), e| (s + e.w as f64 * e.y, n + e.w as usize))
}

/// Multiplicity of each of `n` rows in a bootstrap resample of size `n`.
pub(crate) fn bootstrap_counts(n: usize, rng: &mut StreamRng) -> Vec<u32> {
    let mut counts = vec![0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}
