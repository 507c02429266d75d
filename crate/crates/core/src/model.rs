//! Cluster statistics and the coding-cost objective.
//!
//! A cluster is summarised by its size `n_i`, the per-coordinate one-counts
//! `n_ij`, and the derived difference counts `N_ij`: the number of members
//! that disagree with the cluster representative at coordinate `j`. With
//! `S_i = sum_j N_ij`, the average code length of a member is
//!
//! ```text
//! cost_T(X_i) = (S_i log S_i - sum_j N_ij log N_ij) / n_i
//! ```
//!
//! and the clustering objective weights each cluster by `n_i / n` and adds
//! `beta * -log(n_i / n)` bits for naming the cluster. All logarithms are
//! base 2 and `0 log 0 = 0`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{SparseBinaryDataset, SparseRow};

/// Updates between full rebuilds of the floating-point entropy accumulator.
pub const REBUILD_INTERVAL: u64 = 1_000_000;

/// How the first partition is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform random assignment, empties repaired from the largest cluster.
    Random,
    /// Hamming-distance weighted seeding, rows assigned to the nearest seed.
    #[default]
    Seeded,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitStrategy::Random),
            "seeded" | "kmeans++" => Ok(InitStrategy::Seeded),
            other => Err(Error::InvalidConfig(format!("unknown init strategy {other:?}"))),
        }
    }
}

/// Parameters of the objective and the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Representative threshold `T`: bit 1 where the cluster frequency exceeds it.
    pub threshold: f64,
    /// Weight of the cluster identification cost.
    pub beta: f64,
    /// Clusters smaller than `epsilon * n` are dissolved.
    pub epsilon: f64,
    pub k_init: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitStrategy,
    /// Visit rows in a fresh random order on every pass.
    pub shuffle: bool,
    /// Score moves with the unweighted per-cluster cost difference instead of
    /// the change in the full objective.
    pub raw_pseudocode_gain: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            threshold: 0.5,
            beta: 1.0,
            epsilon: 0.01,
            k_init: 2,
            restarts: 10,
            max_iter: 100,
            seed: 0,
            init: InitStrategy::default(),
            shuffle: false,
            raw_pseudocode_gain: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be a finite non-negative number, got {}",
                self.beta
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.k_init == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be positive".into()));
        }
        Ok(())
    }
}

/// `v * log2(v)` with the `0 log 0 = 0` convention.
pub fn xlog2x(v: u64) -> f64 {
    if v == 0 {
        0.0
    } else {
        let v = v as f64;
        v * v.log2()
    }
}

/// Whether a coordinate with `count` ones out of `size` rows is set in the representative.
#[inline]
fn exceeds(count: u64, size: u64, threshold: f64) -> bool {
    size > 0 && (count as f64) / (size as f64) > threshold
}

/// `N_ij` for a coordinate with `count` ones in a cluster of `size` rows.
#[inline]
fn diff_count(count: u64, size: u64, threshold: f64) -> u64 {
    if exceeds(count, size, threshold) {
        size - count
    } else {
        count
    }
}

/// Smallest count that exceeds the threshold for a cluster of `size` rows,
/// or `size + 1` when none does.
fn first_exceeding(size: u64, threshold: f64) -> u64 {
    if size == 0 {
        return 1;
    }
    let mut c = ((size as f64) * threshold).floor().clamp(0.0, (size + 1) as f64) as u64;
    while c > 0 && exceeds(c - 1, size, threshold) {
        c -= 1;
    }
    while c <= size && !exceeds(c, size, threshold) {
        c += 1;
    }
    c
}

#[derive(Clone, Copy, Debug)]
enum Direction {
    Add,
    Remove,
}

/// Statistics a cluster would have after a hypothetical add or remove.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatsPreview {
    pub size: u64,
    pub diff_sum: u64,
    pub entropy_acc: f64,
    /// Coordinates whose difference count changes.
    pub touched: usize,
}

impl StatsPreview {
    /// Objective contribution; see [`ClusterStats::contribution`].
    pub fn contribution(&self, beta: f64) -> f64 {
        contribution(self.size, self.diff_sum, self.entropy_acc, beta)
    }

    pub fn cost(&self) -> f64 {
        average_cost(self.size, self.diff_sum, self.entropy_acc)
    }
}

fn average_cost(size: u64, diff_sum: u64, entropy_acc: f64) -> f64 {
    if size == 0 || diff_sum == 0 {
        return 0.0;
    }
    ((xlog2x(diff_sum) - entropy_acc) / size as f64).max(0.0)
}

fn contribution(size: u64, diff_sum: u64, entropy_acc: f64, beta: f64) -> f64 {
    let coding = if diff_sum == 0 {
        0.0
    } else {
        (xlog2x(diff_sum) - entropy_acc).max(0.0)
    };
    coding - beta * xlog2x(size)
}

/// Sufficient statistics of one cluster under a fixed threshold.
///
/// `one_counts` holds only strictly positive counts. `by_count` indexes the same
/// coordinates by count so the few coordinates near or above the threshold can
/// be found without scanning the cluster's whole support.
#[derive(Clone, Debug)]
pub struct ClusterStats {
    threshold: f64,
    size: u64,
    one_counts: BTreeMap<u32, u64>,
    by_count: BTreeMap<u64, BTreeSet<u32>>,
    diff_sum: u64,
    entropy_acc: f64,
    updates: u64,
}

impl ClusterStats {
    pub fn new(threshold: f64) -> Self {
        ClusterStats {
            threshold,
            size: 0,
            one_counts: BTreeMap::new(),
            by_count: BTreeMap::new(),
            diff_sum: 0,
            entropy_acc: 0.0,
            updates: 0,
        }
    }

    /// Batch construction from a set of rows.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a SparseRow>, threshold: f64) -> Self {
        let mut stats = ClusterStats::new(threshold);
        for row in rows {
            stats.size += 1;
            for &j in row.indices() {
                *stats.one_counts.entry(j).or_insert(0) += 1;
            }
        }
        for (&j, &c) in &stats.one_counts {
            stats.by_count.entry(c).or_default().insert(j);
        }
        stats.rebuild();
        stats
    }

    /// Recomputes `S_i` and the entropy accumulator from the one-counts.
    pub fn rebuild(&mut self) {
        let (mut diff_sum, mut acc) = (0u64, 0.0);
        for &c in self.one_counts.values() {
            let n = diff_count(c, self.size, self.threshold);
            diff_sum += n;
            acc += xlog2x(n);
        }
        self.diff_sum = diff_sum;
        self.entropy_acc = acc;
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// `n_ij`.
    pub fn one_count(&self, j: u32) -> u64 {
        self.one_counts.get(&j).copied().unwrap_or(0)
    }

    /// Non-zero one-counts in coordinate order.
    pub fn one_counts(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.one_counts.iter().map(|(&j, &c)| (j, c))
    }

    /// `N_ij`.
    pub fn diff_count(&self, j: u32) -> u64 {
        diff_count(self.one_count(j), self.size, self.threshold)
    }

    /// `S_i`.
    pub fn diff_sum(&self) -> u64 {
        self.diff_sum
    }

    /// `sum_j N_ij log2 N_ij`, kept with a positive sign.
    pub fn entropy_acc(&self) -> f64 {
        self.entropy_acc
    }

    /// Mean number of non-zero bits per difference vector, `Z(T) = S_i / n_i`.
    pub fn mean_diff_bits(&self) -> Result<f64> {
        if self.size == 0 {
            return Err(Error::EmptyCluster);
        }
        Ok(self.diff_sum as f64 / self.size as f64)
    }

    /// The cluster representative: bit 1 where `n_ij / n_i > T`.
    pub fn representative(&self) -> Result<SparseRow> {
        if self.size == 0 {
            return Err(Error::EmptyCluster);
        }
        let from = first_exceeding(self.size, self.threshold);
        let indices = self
            .by_count
            .range(from..)
            .flat_map(|(_, coords)| coords.iter().copied())
            .collect();
        Ok(SparseRow::from_unsorted(indices))
    }

    /// Average code length of a member, in bits.
    pub fn cluster_cost(&self) -> Result<f64> {
        if self.size == 0 {
            return Err(Error::EmptyCluster);
        }
        Ok(average_cost(self.size, self.diff_sum, self.entropy_acc))
    }

    /// Bits needed to name this cluster among `n_total` rows: `-log2(n_i / n)`.
    pub fn identification_cost(&self, n_total: usize) -> Result<f64> {
        identification_cost(self.size, n_total)
    }

    /// `S log S - sum N log N - beta * n_i log n_i`; the objective is
    /// `beta log n + (1/n) * sum_i contribution_i`.
    pub fn contribution(&self, beta: f64) -> f64 {
        contribution(self.size, self.diff_sum, self.entropy_acc, beta)
    }

    fn preview(&self, x: &SparseRow, dir: Direction) -> Result<StatsPreview> {
        let t = self.threshold;
        let s = self.size;
        let (s_new, scan_size) = match dir {
            Direction::Add => (s + 1, s),
            Direction::Remove => {
                if s == 0 {
                    return Err(Error::SizeUnderflow);
                }
                (s - 1, s - 1)
            }
        };
        let mut diff_sum = self.diff_sum as i64;
        let mut acc = self.entropy_acc;
        let mut touched = 0usize;
        let mut apply = |old: u64, new: u64| {
            if old != new {
                diff_sum += new as i64 - old as i64;
                acc += xlog2x(new) - xlog2x(old);
                touched += 1;
            }
        };

        for &j in x.indices() {
            let c = self.one_count(j);
            let c_new = match dir {
                Direction::Add => c + 1,
                Direction::Remove => c.checked_sub(1).ok_or_else(|| {
                    Error::Invalid(format!("coordinate {j} has no ones left to remove"))
                })?,
            };
            apply(diff_count(c, s, t), diff_count(c_new, s_new, t));
        }

        // Coordinates absent from x only change when their count sits above
        // the threshold for the smaller of the two sizes.
        let from = first_exceeding(scan_size, t);
        for (&c, coords) in self.by_count.range(from..) {
            for &j in coords {
                if !x.contains(j) {
                    apply(diff_count(c, s, t), diff_count(c, s_new, t));
                }
            }
        }

        Ok(StatsPreview {
            size: s_new,
            diff_sum: diff_sum as u64,
            entropy_acc: acc,
            touched,
        })
    }

    /// Statistics after adding `x`, without modifying `self`.
    pub fn preview_add(&self, x: &SparseRow) -> StatsPreview {
        self.preview(x, Direction::Add)
            .expect("adding a row cannot underflow")
    }

    /// Statistics after removing `x`, without modifying `self`.
    pub fn preview_remove(&self, x: &SparseRow) -> Result<StatsPreview> {
        self.preview(x, Direction::Remove)
    }

    /// Number of coordinates whose difference count changes when `x` is added.
    pub fn touched_coordinates(&self, x: &SparseRow) -> usize {
        self.preview_add(x).touched
    }

    /// Upper bound on [`touched_coordinates`](Self::touched_coordinates):
    /// `nnz(x) + |{j : p_ij > T - (1 - T) / n_i}|`.
    pub fn touch_bound(&self, x: &SparseRow) -> usize {
        if self.size == 0 {
            return x.nnz();
        }
        let n = self.size as f64;
        let cut = self.threshold - (1.0 - self.threshold) / n;
        x.nnz() + self.one_counts.values().filter(|&&c| c as f64 / n > cut).count()
    }

    fn shift_count(&mut self, j: u32, old: u64, new: u64) {
        if old > 0 {
            if let Some(bucket) = self.by_count.get_mut(&old) {
                bucket.remove(&j);
                if bucket.is_empty() {
                    self.by_count.remove(&old);
                }
            }
        }
        if new > 0 {
            self.one_counts.insert(j, new);
            self.by_count.entry(new).or_default().insert(j);
        } else {
            self.one_counts.remove(&j);
        }
    }

    fn commit(&mut self, x: &SparseRow, preview: StatsPreview, dir: Direction) {
        for &j in x.indices() {
            let c = self.one_count(j);
            let new = match dir {
                Direction::Add => c + 1,
                Direction::Remove => c - 1,
            };
            self.shift_count(j, c, new);
        }
        self.size = preview.size;
        self.diff_sum = preview.diff_sum;
        self.entropy_acc = preview.entropy_acc;
        if self.size == 0 {
            self.entropy_acc = 0.0;
        }
        self.updates += 1;
        if self.updates.is_multiple_of(REBUILD_INTERVAL) {
            self.rebuild();
        }
    }

    /// Adds `x`, returning the number of touched coordinates.
    pub fn add_point(&mut self, x: &SparseRow) -> usize {
        let preview = self.preview_add(x);
        self.commit(x, preview, Direction::Add);
        preview.touched
    }

    /// Removes `x`, which the caller guarantees is a member.
    pub fn remove_point(&mut self, x: &SparseRow) -> Result<usize> {
        let preview = self.preview_remove(x)?;
        self.commit(x, preview, Direction::Remove);
        Ok(preview.touched)
    }
}

pub fn identification_cost(size: u64, n_total: usize) -> Result<f64> {
    if size == 0 || size as usize > n_total {
        return Err(Error::Invalid(format!(
            "cluster of size {size} cannot be identified among {n_total} rows"
        )));
    }
    Ok(-(size as f64 / n_total as f64).log2())
}

/// Assignment of rows to clusters together with per-cluster statistics.
///
/// Cluster ids index into `clusters`; dissolved clusters leave a `None` slot.
#[derive(Clone, Debug)]
pub struct Partition {
    assignment: Vec<usize>,
    clusters: Vec<Option<ClusterStats>>,
    threshold: f64,
}

impl Partition {
    /// Builds batch statistics for an explicit assignment.
    pub fn from_assignment(
        data: &SparseBinaryDataset,
        assignment: Vec<usize>,
        threshold: f64,
    ) -> Result<Self> {
        if assignment.len() != data.len() {
            return Err(Error::LengthMismatch {
                left: assignment.len(),
                right: data.len(),
            });
        }
        let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
        let mut members: Vec<Vec<&SparseRow>> = vec![Vec::new(); k];
        for (row, &c) in data.rows().iter().zip(&assignment) {
            members[c].push(row);
        }
        let clusters = members
            .into_iter()
            .map(|rows| (!rows.is_empty()).then(|| ClusterStats::from_rows(rows, threshold)))
            .collect();
        Ok(Partition {
            assignment,
            clusters,
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, row: usize) -> usize {
        self.assignment[row]
    }

    pub fn cluster(&self, id: usize) -> Option<&ClusterStats> {
        self.clusters.get(id).and_then(Option::as_ref)
    }

    pub fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .filter_map(|(id, c)| c.as_ref().map(|_| id))
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.iter().filter(|c| c.is_some()).count()
    }

    /// Objective as a size-weighted sum of per-cluster costs.
    pub fn total_cost(&self, beta: f64) -> Result<f64> {
        let n = self.n();
        if n == 0 || self.num_clusters() == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for stats in self.clusters.iter().flatten() {
            let weight = stats.size() as f64 / n as f64;
            total += weight * (stats.cluster_cost()? + beta * stats.identification_cost(n)?);
        }
        Ok(total)
    }

    /// Objective in the expanded form `beta log n + (1/n) sum_i contribution_i`.
    pub fn total_cost_closed_form(&self, beta: f64) -> Result<f64> {
        let n = self.n();
        if n == 0 || self.num_clusters() == 0 {
            return Err(Error::EmptyDataset);
        }
        let sum: f64 = self.clusters.iter().flatten().map(|c| c.contribution(beta)).sum();
        Ok(beta * (n as f64).log2() + sum / n as f64)
    }

    /// Renumbers live clusters 0..k in id order.
    pub fn compacted(&self) -> Partition {
        let mut remap = vec![usize::MAX; self.clusters.len()];
        let mut clusters = Vec::new();
        for (id, c) in self.clusters.iter().enumerate() {
            if let Some(c) = c {
                remap[id] = clusters.len();
                clusters.push(Some(c.clone()));
            }
        }
        Partition {
            assignment: self.assignment.iter().map(|&c| remap[c]).collect(),
            clusters,
            threshold: self.threshold,
        }
    }

    pub(crate) fn cluster_mut(&mut self, id: usize) -> &mut ClusterStats {
        self.clusters[id].as_mut().expect("live cluster")
    }

    pub(crate) fn set_assignment(&mut self, row: usize, id: usize) {
        self.assignment[row] = id;
    }

    pub(crate) fn dissolve(&mut self, id: usize) -> Option<ClusterStats> {
        self.clusters[id].take()
    }
}

/// Objective value of `partition` under `config`.
pub fn total_cost(partition: &Partition, config: &ModelConfig) -> Result<f64> {
    partition.total_cost(config.beta)
}

/// Single-cluster cost and difference density at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCost {
    pub threshold: f64,
    pub cost: f64,
    /// Mean number of non-zero bits per difference vector.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub lower: f64,
    pub upper: f64,
    pub lower_cost: f64,
    pub upper_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub points: Vec<ThresholdCost>,
    pub violations: Vec<MonotonicityViolation>,
    /// Adjacent pairs that were checked (lower point has `z >= 1`).
    pub pairs_checked: usize,
}

/// Checks that the single-cluster cost does not decrease as the threshold
/// grows from 1/2 towards 1, for adjacent pairs whose lower point has `Z >= 1`.
pub fn verify_compression_monotonicity(
    data: &SparseBinaryDataset,
    thresholds: &[f64],
) -> Result<MonotonicityReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if thresholds.iter().any(|t| !(0.5..=1.0).contains(t)) {
        return Err(Error::Invalid("thresholds must lie in [0.5, 1]".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("thresholds must be sorted".into()));
    }
    let points = thresholds
        .iter()
        .map(|&t| {
            let stats = ClusterStats::from_rows(data.rows(), t);
            Ok(ThresholdCost {
                threshold: t,
                cost: stats.cluster_cost()?,
                z: stats.mean_diff_bits()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    let mut pairs_checked = 0;
    for w in points.windows(2) {
        if w[0].z < 1.0 {
            continue;
        }
        pairs_checked += 1;
        if w[0].cost > w[1].cost + 1e-9 {
            violations.push(MonotonicityViolation {
                lower: w[0].threshold,
                upper: w[1].threshold,
                lower_cost: w[0].cost,
                upper_cost: w[1].cost,
            });
        }
    }
    Ok(MonotonicityReport {
        points,
        violations,
        pairs_checked,
    })
}
