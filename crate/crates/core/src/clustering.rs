//! Deterministic agglomerative hierarchical clustering (Ward linkage,
//! Euclidean distance), dendrogram cutting, and the cluster-preservation
//! predicate used by the selective test's conditioning event.
//!
//! The Ward criterion is applied through the Lance-Williams update on
//! squared Euclidean distances with heights reported as square roots (the
//! "Ward.D2" convention, matching the defaults of scipy and R's hclust).
//! Merge ties are broken by the lexicographically smallest node-id pair, so
//! identical input yields bit-identical output; the selective test re-runs
//! clustering thousands of times and relies on this.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataMatrix;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("clustering needs at least 2 observations, got {n}")]
    TooFewObservations { n: usize },
    #[error("cut at {k} is outside 1..={n}")]
    InvalidCut { k: usize, n: usize },
    #[error("matrix has missing values")]
    MissingValues,
    #[error("invalid distance matrix: {reason}")]
    InvalidDistances { reason: String },
    #[error("sizes length {found} does not match {expected} observations")]
    SizesMismatch { expected: usize, found: usize },
    #[error("partition is over {expected} rows, got {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("cluster id {id} is outside 1..={k}")]
    InvalidClusterId { id: usize, k: usize },
}

/// Symmetric nonnegative pairwise distances with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    d: Vec<f64>,
    n: usize,
}

impl DistanceMatrix {
    /// Wraps a row-major n x n matrix, validating symmetry, nonnegativity
    /// and a zero diagonal.
    pub fn new(d: Vec<f64>, n: usize) -> Result<Self, ClusteringError> {
        if d.len() != n * n {
            return Err(ClusteringError::InvalidDistances {
                reason: format!("expected {} entries, got {}", n * n, d.len()),
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(ClusteringError::InvalidDistances {
                    reason: format!("nonzero diagonal at {i}"),
                });
            }
            for j in 0..i {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(ClusteringError::InvalidDistances {
                        reason: format!("invalid entry at ({i},{j}): {v}"),
                    });
                }
                if v != d[j * n + i] {
                    return Err(ClusteringError::InvalidDistances {
                        reason: format!("asymmetry at ({i},{j})"),
                    });
                }
            }
        }
        Ok(DistanceMatrix { d, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Pairwise Euclidean distances between the rows of a complete matrix.
pub fn euclidean_distance_matrix(m: &DataMatrix) -> Result<DistanceMatrix, ClusteringError> {
    let n = m.n();
    let mut d = vec![0.0; n * n];
    squared_row_distances(m, &mut d)?;
    for v in d.iter_mut() {
        *v = v.sqrt();
    }
    Ok(DistanceMatrix { d, n })
}

/// Fills `out` (row-major n x n) with squared Euclidean row distances.
///
/// Every clustering path squares the rooted distances rather than using the
/// raw sums of squares, so that clustering a matrix and clustering its
/// exported distance matrix are bit-identical.
fn squared_row_distances(m: &DataMatrix, out: &mut [f64]) -> Result<(), ClusteringError> {
    let n = m.n();
    debug_assert_eq!(out.len(), n * n);
    out.fill(0.0);
    for g in 0..m.p() {
        let col = m.column(g);
        if col.iter().any(|v| v.is_nan()) {
            return Err(ClusteringError::MissingValues);
        }
        for i in 0..n {
            let xi = col[i];
            let row = &mut out[i * n..(i + 1) * n];
            for (j, &xj) in col.iter().enumerate() {
                let diff = xi - xj;
                row[j] += diff * diff;
            }
        }
    }
    for v in out.iter_mut() {
        let d = v.sqrt();
        *v = d * d;
    }
    Ok(())
}

/// One agglomeration step: `left` and `right` are node ids (leaves are
/// `0..n`, the merge at step s creates node `n + s`), `height` is the
/// Ward.D2 merge height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// The full agglomeration history of n observations: n - 1 ordered merges.
///
/// Heights are recorded as computed; monotonicity is a property of the Ward
/// objective, not an enforced invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_count: usize,
}

impl Dendrogram {
    /// Serializes the merge list as JSON for external plotting.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serialization cannot fail")
    }
}

/// Assignment of n rows to K disjoint, nonempty clusters.
///
/// `labels[i]` is the cluster id of row i, in `1..=K`; ids are assigned in
/// order of each cluster's smallest member row index. `members[id - 1]`
/// lists the rows of cluster `id` in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub k: usize,
}

impl Partition {
    /// Builds a partition from raw labels in `1..=k`, validating that every
    /// cluster is nonempty.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self, ClusteringError> {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (row, &id) in labels.iter().enumerate() {
            if id == 0 || id > k {
                return Err(ClusteringError::InvalidClusterId { id, k });
            }
            members[id - 1].push(row);
        }
        if let Some(empty) = members.iter().position(|m| m.is_empty()) {
            return Err(ClusteringError::InvalidClusterId { id: empty + 1, k });
        }
        Ok(Partition { labels, members, k })
    }

    /// Rows of cluster `id` (1-based), ascending.
    pub fn members_of(&self, id: usize) -> &[usize] {
        &self.members[id - 1]
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

/// Cuts a dendrogram into K clusters by undoing the last K - 1 merges.
pub fn cut(dend: &Dendrogram, k: usize) -> Result<Partition, ClusteringError> {
    let n = dend.leaf_count;
    if k < 1 || k > n {
        return Err(ClusteringError::InvalidCut { k, n });
    }
    // Union-find over node ids; apply the first n - k merges.
    let applied = n - k;
    let mut parent: Vec<usize> = (0..n + applied).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in dend.merges.iter().take(applied).enumerate() {
        let target = n + s;
        let l = find(&mut parent, m.left);
        let r = find(&mut parent, m.right);
        parent[l] = target;
        parent[r] = target;
    }
    // Number clusters 1..K by smallest member row.
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut id_of_root: Vec<(usize, usize)> = Vec::new(); // (root, id)
    let mut labels = vec![0usize; n];
    for (row, &root) in roots.iter().enumerate() {
        let id = match id_of_root.iter().find(|(r, _)| *r == root) {
            Some(&(_, id)) => id,
            None => {
                let id = id_of_root.len() + 1;
                id_of_root.push((root, id));
                id
            }
        };
        labels[row] = id;
    }
    Partition::from_labels(labels, k)
}

/// True iff `candidate` contains clusters whose member sets equal
/// `reference`'s clusters `k` and `l` exactly.
///
/// Preservation is set equality of member sets, not label equality; cluster
/// numbering is free to differ between the two partitions.
pub fn clusters_preserved(
    reference: &Partition,
    k: usize,
    l: usize,
    candidate: &Partition,
) -> bool {
    let same_cluster = |id: usize| -> bool {
        let rows = reference.members_of(id);
        let cand_id = candidate.labels[rows[0]];
        candidate.members_of(cand_id) == rows
    };
    same_cluster(k) && same_cluster(l)
}

/// A clustering method: data in, partition into a fixed number of clusters
/// out. The selective test is generic over this interface.
pub trait Clusterer: Sync {
    fn partition(&self, m: &DataMatrix) -> Result<Partition, ClusteringError>;

    /// Whether re-clustering `m` yields a partition that preserves clusters
    /// `k` and `l` of `reference`. Equivalent to clustering and calling
    /// [`clusters_preserved`]; implementations may short-circuit.
    fn preserves(
        &self,
        m: &DataMatrix,
        reference: &Partition,
        k: usize,
        l: usize,
    ) -> Result<bool, ClusteringError> {
        let candidate = self.partition(m)?;
        Ok(clusters_preserved(reference, k, l, &candidate))
    }
}

/// Ward/Euclidean agglomerative clustering cut at `k` clusters.
#[derive(Debug, Clone, Copy)]
pub struct WardClusterer {
    pub k: usize,
}

impl Clusterer for WardClusterer {
    fn partition(&self, m: &DataMatrix) -> Result<Partition, ClusteringError> {
        let mut state = WardState::from_matrix(m)?;
        if self.k < 1 || self.k > m.n() {
            return Err(ClusteringError::InvalidCut { k: self.k, n: m.n() });
        }
        let mut merges = Vec::with_capacity(m.n() - 1);
        state.run(1, |step, merge| {
            debug_assert_eq!(step, merges.len());
            merges.push(merge);
            true
        });
        cut(
            &Dendrogram {
                merges,
                leaf_count: m.n(),
            },
            self.k,
        )
    }

    /// Short-circuiting preservation check.
    ///
    /// A merge that joins part of a reference cluster with outside rows can
    /// never be undone by further agglomeration, so the run aborts as soon
    /// as such a merge happens before the cut.
    fn preserves(
        &self,
        m: &DataMatrix,
        reference: &Partition,
        k: usize,
        l: usize,
    ) -> Result<bool, ClusteringError> {
        let n = m.n();
        if reference.n() != n {
            return Err(ClusteringError::RowCountMismatch {
                expected: reference.n(),
                found: n,
            });
        }
        if self.k < 1 || self.k > n {
            return Err(ClusteringError::InvalidCut { k: self.k, n });
        }
        let mut state = WardState::from_matrix(m)?;
        // Per-slot counts of members from each reference cluster.
        let mut in_k = vec![0u32; n];
        let mut in_l = vec![0u32; n];
        for &row in reference.members_of(k) {
            in_k[row] = 1;
        }
        for &row in reference.members_of(l) {
            in_l[row] = 1;
        }
        let mut cnt_k = reference.members_of(k).len();
        let mut cnt_l = reference.members_of(l).len();
        let mut sizes = vec![1u32; n];
        let mut broken = false;
        state.run_slots(self.k, |si, sj| {
            let (ck, cl) = (in_k[si] + in_k[sj], in_l[si] + in_l[sj]);
            let size = sizes[si] + sizes[sj];
            if (ck > 0 && ck < size) || (cl > 0 && cl < size) {
                broken = true;
                return false;
            }
            if in_k[si] > 0 && in_k[sj] > 0 {
                cnt_k -= 1;
            }
            if in_l[si] > 0 && in_l[sj] > 0 {
                cnt_l -= 1;
            }
            in_k[si] = ck;
            in_l[si] = cl;
            sizes[si] = size;
            true
        });
        Ok(!broken && cnt_k == 1 && cnt_l == 1)
    }
}

/// Clusterer returning a fixed partition regardless of the data.
///
/// Every perturbation trivially preserves its clusters, which makes the
/// selective p-value reduce to an unconditional Gaussian test; useful for
/// estimator validation against the closed form.
#[derive(Debug, Clone)]
pub struct FixedClusterer {
    pub partition: Partition,
}

impl Clusterer for FixedClusterer {
    fn partition(&self, m: &DataMatrix) -> Result<Partition, ClusteringError> {
        if m.n() != self.partition.n() {
            return Err(ClusteringError::RowCountMismatch {
                expected: self.partition.n(),
                found: m.n(),
            });
        }
        Ok(self.partition.clone())
    }

    fn preserves(
        &self,
        m: &DataMatrix,
        reference: &Partition,
        k: usize,
        l: usize,
    ) -> Result<bool, ClusteringError> {
        if m.n() != self.partition.n() {
            return Err(ClusteringError::RowCountMismatch {
                expected: self.partition.n(),
                found: m.n(),
            });
        }
        Ok(clusters_preserved(reference, k, l, &self.partition))
    }
}

/// Agglomerates `d` (with initial cluster sizes) all the way to one cluster.
pub fn ward_linkage(d: &DistanceMatrix, sizes: &[usize]) -> Result<Dendrogram, ClusteringError> {
    let n = d.n();
    if n < 2 {
        return Err(ClusteringError::TooFewObservations { n });
    }
    if sizes.len() != n {
        return Err(ClusteringError::SizesMismatch {
            expected: n,
            found: sizes.len(),
        });
    }
    if let Some(bad) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusteringError::InvalidDistances {
            reason: format!("initial size 0 at {bad}"),
        });
    }
    let sq: Vec<f64> = d.d.iter().map(|&v| v * v).collect();
    let mut state = WardState::new(sq, n, sizes);
    let mut merges = Vec::with_capacity(n - 1);
    state.run(1, |_, merge| {
        merges.push(merge);
        true
    });
    Ok(Dendrogram {
        merges,
        leaf_count: n,
    })
}

/// Scratch state for one agglomeration run.
///
/// Nearest-neighbor candidates are cached per active slot and repaired only
/// when a merge invalidates them (the cached neighbor died or its distance
/// changed), which keeps a full run near O(n^2).
struct WardState {
    n: usize,
    sq: Vec<f64>,
    size: Vec<f64>,
    node: Vec<usize>,
    active: Vec<usize>,
    pos: Vec<usize>,
    nn: Vec<usize>,
}

impl WardState {
    fn from_matrix(m: &DataMatrix) -> Result<Self, ClusteringError> {
        let n = m.n();
        if n < 2 {
            return Err(ClusteringError::TooFewObservations { n });
        }
        let mut sq = vec![0.0; n * n];
        squared_row_distances(m, &mut sq)?;
        Ok(Self::new(sq, n, &vec![1usize; n]))
    }

    fn new(sq: Vec<f64>, n: usize, sizes: &[usize]) -> Self {
        let mut state = WardState {
            n,
            sq,
            size: sizes.iter().map(|&s| s as f64).collect(),
            node: (0..n).collect(),
            active: (0..n).collect(),
            pos: (0..n).collect(),
            nn: vec![0; n],
        };
        for idx in 0..n {
            state.recompute_nn(idx);
        }
        state
    }

    fn pair_key(&self, a: usize, b: usize) -> (f64, usize, usize) {
        let (na, nb) = (self.node[a], self.node[b]);
        (
            self.sq[a * self.n + b],
            na.min(nb),
            na.max(nb),
        )
    }

    fn recompute_nn(&mut self, slot: usize) {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut best_slot = slot;
        for &other in &self.active {
            if other == slot {
                continue;
            }
            let key = self.pair_key(slot, other);
            if best.map_or(true, |b| key_less(key, b)) {
                best = Some(key);
                best_slot = other;
            }
        }
        self.nn[slot] = best_slot;
    }

    /// Runs merges until `stop_at` clusters remain or the callback returns
    /// false. The callback receives the step index and the merge record.
    fn run(&mut self, stop_at: usize, mut on_merge: impl FnMut(usize, Merge) -> bool) {
        let mut step = 0;
        while self.active.len() > stop_at {
            let (i, j, d2) = self.select_pair();
            let merge = Merge {
                left: self.node[i].min(self.node[j]),
                right: self.node[i].max(self.node[j]),
                height: d2.max(0.0).sqrt(),
            };
            if !on_merge(step, merge) {
                return;
            }
            self.apply_merge(i, j, step);
            step += 1;
        }
    }

    /// Variant of [`WardState::run`] exposing the merging slot indices so
    /// the caller can maintain per-slot bookkeeping; may abort.
    fn run_slots(&mut self, stop_at: usize, mut on_merge: impl FnMut(usize, usize) -> bool) {
        let mut step = 0;
        while self.active.len() > stop_at {
            let (i, j, _) = self.select_pair();
            if !on_merge(i, j) {
                return;
            }
            self.apply_merge(i, j, step);
            step += 1;
        }
    }

    fn select_pair(&self) -> (usize, usize, f64) {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut pair = (0, 0);
        for &slot in &self.active {
            let cand = self.nn[slot];
            let key = self.pair_key(slot, cand);
            if best.map_or(true, |b| key_less(key, b)) {
                best = Some(key);
                pair = (slot, cand);
            }
        }
        let (i, j) = pair;
        (i, j, best.expect("at least two active clusters").0)
    }

    fn apply_merge(&mut self, i: usize, j: usize, step: usize) {
        let n = self.n;
        let (a, b) = (self.size[i], self.size[j]);
        let dij = self.sq[i * n + j];
        // Lance-Williams Ward update on squared distances.
        for idx in 0..self.active.len() {
            let t = self.active[idx];
            if t == i || t == j {
                continue;
            }
            let ts = self.size[t];
            let v = ((a + ts) * self.sq[i * n + t] + (b + ts) * self.sq[j * n + t]
                - ts * dij)
                / (a + b + ts);
            self.sq[i * n + t] = v;
            self.sq[t * n + i] = v;
        }
        self.size[i] = a + b;
        self.node[i] = n + step;
        // Deactivate j.
        let pj = self.pos[j];
        let last = *self.active.last().unwrap();
        self.active.swap_remove(pj);
        if pj < self.active.len() {
            self.pos[last] = pj;
        }
        // Repair nearest-neighbor caches.
        self.recompute_nn(i);
        for idx in 0..self.active.len() {
            let t = self.active[idx];
            if t == i {
                continue;
            }
            if self.nn[t] == i || self.nn[t] == j {
                self.recompute_nn(t);
            } else if key_less(self.pair_key(t, i), self.pair_key(t, self.nn[t])) {
                self.nn[t] = i;
            }
        }
    }
}

fn key_less(p: (f64, usize, usize), q: (f64, usize, usize)) -> bool {
    if p.0 != q.0 {
        return p.0 < q.0;
    }
    if p.1 != q.1 {
        return p.1 < q.1;
    }
    p.2 < q.2
}
