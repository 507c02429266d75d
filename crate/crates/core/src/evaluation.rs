//! External validation and resampling experiments.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optimizer::run_restarts;
use crate::sparse::SparseBinaryDataset;
use crate::synthetic::{generate, MixtureSpec};

/// Repetitions per fraction in the stability experiments.
pub const STABILITY_REPEATS: usize = 5;

fn choose2(v: u64) -> f64 {
    (v * v.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1 when both labelings have the same equality structure, including
/// the degenerate cases where the chance-corrected denominator vanishes.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    // Multiplied through by 2 * total so integer-valued inputs stay exact.
    let numerator = 2.0 * (index * total - sum_a * sum_b);
    let denominator = (sum_a + sum_b) * total - 2.0 * sum_a * sum_b;
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok(numerator / denominator)
}

/// Anything that can cluster a dataset into integer labels.
pub trait ClusterRunner: Sync {
    /// Smallest dataset the runner accepts.
    fn min_rows(&self) -> usize {
        1
    }

    fn cluster(&self, data: &SparseBinaryDataset, seed: u64) -> Result<Vec<usize>>;
}

/// Runs the restarted optimizer with a fixed configuration, overriding its seed.
#[derive(Clone, Debug)]
pub struct SparseMixRunner {
    pub config: ModelConfig,
}

impl ClusterRunner for SparseMixRunner {
    fn min_rows(&self) -> usize {
        self.config.k_init
    }

    fn cluster(&self, data: &SparseBinaryDataset, seed: u64) -> Result<Vec<usize>> {
        let config = ModelConfig {
            seed,
            ..self.config.clone()
        };
        Ok(run_restarts(data, &config)?.final_partition.assignment().to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub fraction: f64,
    pub ari_mean: f64,
    pub ari_std: f64,
    /// Repetitions whose subsample clustering ended with a single cluster.
    pub single_cluster_runs: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    match fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        Some(f) => Err(Error::Invalid(format!("fraction {f} is outside (0, 1]"))),
        None => Ok(()),
    }
}

fn repeat_seeds(seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..STABILITY_REPEATS).map(|_| rng.gen()).collect()
}

fn count_clusters(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn summarise(fraction: f64, runs: Vec<(f64, usize)>) -> StabilityPoint {
    let aris: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (ari_mean, ari_std) = mean_std(&aris);
    StabilityPoint {
        fraction,
        ari_mean,
        ari_std,
        single_cluster_runs: runs.iter().filter(|r| r.1 == 1).count(),
    }
}

/// Clusters random row subsets and compares them with `full` restricted to
/// the same rows.
pub fn stability_instances<R: ClusterRunner>(
    data: &SparseBinaryDataset,
    full: &[usize],
    fractions: &[f64],
    runner: &R,
    seed: u64,
) -> Result<Vec<StabilityPoint>> {
    check_fractions(fractions)?;
    if full.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: full.len(),
            right: data.len(),
        });
    }
    let n = data.len();
    for &f in fractions {
        let m = (f * n as f64).round() as usize;
        if m < runner.min_rows().max(2) {
            return Err(Error::TooFewRows {
                needed: runner.min_rows().max(2),
                got: m,
            });
        }
    }
    fractions
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let m = (f * n as f64).round() as usize;
            let runs = repeat_seeds(seed.wrapping_add(fi as u64))
                .into_par_iter()
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    let mut picks = sample(&mut rng, n, m).into_vec();
                    picks.sort_unstable();
                    let sub = data.select_rows(&picks);
                    let labels = runner.cluster(&sub, s)?;
                    let restricted: Vec<usize> = picks.iter().map(|&i| full[i]).collect();
                    Ok((adjusted_rand_index(&labels, &restricted)?, count_clusters(&labels)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarise(f, runs))
        })
        .collect()
}

/// Clusters all rows on random column subsets and compares with `full`.
///
/// A subset holding only empty columns is not an error; the clustering of
/// the resulting all-zero rows is compared like any other.
pub fn stability_attributes<R: ClusterRunner>(
    data: &SparseBinaryDataset,
    full: &[usize],
    fractions: &[f64],
    runner: &R,
    seed: u64,
) -> Result<Vec<StabilityPoint>> {
    check_fractions(fractions)?;
    if full.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: full.len(),
            right: data.len(),
        });
    }
    if data.len() < runner.min_rows().max(2) {
        return Err(Error::TooFewRows {
            needed: runner.min_rows().max(2),
            got: data.len(),
        });
    }
    let dim = data.dim();
    fractions
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let m = ((f * dim as f64).round() as usize).max(1);
            let runs = repeat_seeds(seed.wrapping_add(fi as u64))
                .into_par_iter()
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    let mut columns: Vec<u32> =
                        sample(&mut rng, dim, m).into_iter().map(|c| c as u32).collect();
                    columns.sort_unstable();
                    let sub = data.select_columns(&columns)?;
                    let labels = runner.cluster(&sub, s)?;
                    Ok((adjusted_rand_index(&labels, full)?, count_clusters(&labels)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarise(f, runs))
        })
        .collect()
}

pub fn write_stability_csv<W: Write>(mut out: W, points: &[StabilityPoint]) -> std::io::Result<()> {
    writeln!(out, "fraction,ari_mean,ari_std")?;
    for p in points {
        writeln!(out, "{},{},{}", p.fraction, p.ari_mean, p.ari_std)?;
    }
    Ok(())
}

/// Mixture parameter swept by [`imbalance_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceAxis {
    Omega,
    D,
}

impl std::str::FromStr for ImbalanceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(ImbalanceAxis::Omega),
            "d" => Ok(ImbalanceAxis::D),
            other => Err(Error::Invalid(format!("cannot vary {other:?}; use omega or d"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalancePoint {
    pub grid_value: f64,
    pub cluster1_fraction: f64,
}

/// Share of rows in the cluster overlapping source 1 (label 0) the most;
/// ties go to the lower cluster id.
pub fn first_cluster_fraction(assignment: &[usize], sources: &[usize]) -> f64 {
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut overlap = vec![0usize; k];
    let mut sizes = vec![0usize; k];
    for (&c, &s) in assignment.iter().zip(sources) {
        sizes[c] += 1;
        if s == 0 {
            overlap[c] += 1;
        }
    }
    let best = (0..k)
        .max_by_key(|&c| (overlap[c], std::cmp::Reverse(c)))
        .unwrap_or(0);
    sizes.get(best).copied().unwrap_or(0) as f64 / assignment.len().max(1) as f64
}

/// For each grid value, generates a mixture, clusters it, and reports the
/// size share of the cluster matched to source 1.
pub fn imbalance_scan(
    base: &MixtureSpec,
    axis: ImbalanceAxis,
    grid: &[f64],
    config: &ModelConfig,
    seed: u64,
) -> Result<Vec<ImbalancePoint>> {
    let specs = grid
        .iter()
        .map(|&v| {
            let mut spec = base.clone();
            match axis {
                ImbalanceAxis::Omega => spec.omega = v,
                ImbalanceAxis::D => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::Invalid(format!("block size {v} is not a whole number")));
                    }
                    spec.d = v as usize;
                }
            }
            spec.validate()?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    specs
        .par_iter()
        .zip(grid.par_iter())
        .enumerate()
        .map(|(i, (spec, &v))| {
            let data_seed = seed.wrapping_add(i as u64);
            let generated = generate(spec, data_seed)?;
            let cfg = ModelConfig {
                seed: data_seed,
                ..config.clone()
            };
            let report = run_restarts(&generated.dataset, &cfg)?;
            Ok(ImbalancePoint {
                grid_value: v,
                cluster1_fraction: first_cluster_fraction(
                    report.final_partition.assignment(),
                    &generated.labels,
                ),
            })
        })
        .collect()
}

pub fn write_imbalance_csv<W: Write>(mut out: W, points: &[ImbalancePoint]) -> std::io::Result<()> {
    writeln!(out, "grid_value,cluster1_fraction")?;
    for p in points {
        writeln!(out, "{},{}", p.grid_value, p.cluster1_fraction)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseRow;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Pair-counting oracle: fraction-free ARI from explicit pair enumeration.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total = both + only_a + only_b + neither;
        let same_a = both + only_a;
        let same_b = both + only_b;
        let expected = same_a * same_b / total;
        let max = 0.5 * (same_a + same_b);
        (both - expected) / (max - expected)
    }

    #[test]
    fn ari_identical_partitions() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1, 1, 1], &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn ari_crossed_partitions() {
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(v, -0.5);
        assert_abs_diff_eq!(ari_by_pairs(&[0, 0, 1, 1], &[0, 1, 0, 1]), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn ari_errors() {
        assert!(matches!(
            adjusted_rand_index(&[0, 1], &[0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            adjusted_rand_index(&[0], &[0]),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn ari_random_pairs_average_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let total: f64 = (0..1000)
            .map(|_| {
                let a: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
                let b: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
                adjusted_rand_index(&a, &b).unwrap()
            })
            .sum();
        assert!((total / 1000.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn ari_matches_pair_enumeration(
            a in proptest::collection::vec(0usize..4, 2..40),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.gen_range(0..3)).collect();
            let fast = adjusted_rand_index(&a, &b).unwrap();
            let slow = ari_by_pairs(&a, &b);
            if slow.is_finite() {
                prop_assert!((fast - slow).abs() < 1e-12);
            }
            prop_assert!(fast <= 1.0 + 1e-12);
            prop_assert!((fast - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn ari_ignores_label_names(a in proptest::collection::vec(0usize..5, 2..40), shift in 1usize..10) {
            let renamed: Vec<usize> = a.iter().map(|&l| (l + shift) * 7).collect();
            prop_assert_eq!(adjusted_rand_index(&a, &renamed).unwrap(), 1.0);
        }
    }

    struct Fixed;

    impl ClusterRunner for Fixed {
        fn min_rows(&self) -> usize {
            3
        }

        fn cluster(&self, data: &SparseBinaryDataset, _seed: u64) -> Result<Vec<usize>> {
            Ok(data.rows().iter().map(|r| usize::from(r.contains(0))).collect())
        }
    }

    fn two_blocks(n: usize) -> (SparseBinaryDataset, Vec<usize>) {
        let rows = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    SparseRow::new(vec![0, 1, 2]).unwrap()
                } else {
                    SparseRow::new(vec![3, 4, 5]).unwrap()
                }
            })
            .collect();
        let labels = (0..n).map(|i| usize::from(i % 2 == 0)).collect();
        (SparseBinaryDataset::new(6, rows).unwrap(), labels)
    }

    #[test]
    fn stability_with_a_deterministic_runner() {
        let (data, full) = two_blocks(40);
        let points = stability_instances(&data, &full, &[0.5, 1.0], &Fixed, 3).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.ari_mean == 1.0 && p.ari_std == 0.0));
    }

    #[test]
    fn stability_rejects_tiny_subsamples() {
        let (data, full) = two_blocks(10);
        assert!(matches!(
            stability_instances(&data, &full, &[0.2], &Fixed, 0),
            Err(Error::TooFewRows { needed: 3, got: 2 })
        ));
        assert!(stability_instances(&data, &full, &[0.0], &Fixed, 0).is_err());
        assert!(stability_instances(&data, &full, &[1.5], &Fixed, 0).is_err());
    }

    #[test]
    fn attribute_stability_survives_empty_columns() {
        // only column 0 carries any bits
        let rows = (0..12)
            .map(|i| SparseRow::new(if i % 3 == 0 { vec![0] } else { vec![] }).unwrap())
            .collect();
        let data = SparseBinaryDataset::new(8, rows).unwrap();
        let runner = SparseMixRunner {
            config: ModelConfig { restarts: 2, ..ModelConfig::default() },
        };
        let full = runner.cluster(&data, 1).unwrap();
        for seed in 0..4 {
            let points = stability_attributes(&data, &full, &[0.125], &runner, seed).unwrap();
            assert_eq!(points.len(), 1);
            assert!(points[0].ari_mean.is_finite());
        }
    }

    #[test]
    fn first_cluster_fraction_matches_by_overlap() {
        let assignment = [1, 1, 1, 0, 0, 1];
        let sources = [0, 0, 0, 1, 1, 1];
        assert_abs_diff_eq!(first_cluster_fraction(&assignment, &sources), 4.0 / 6.0);
        assert_eq!(first_cluster_fraction(&[0, 0, 0], &[0, 1, 0]), 1.0);
    }

    #[test]
    fn imbalance_rejects_fractional_block() {
        let base = MixtureSpec { p: 0.1, alpha: 0.05, d: 50, dim: 100, omega: 0.5, n: 50 };
        let cfg = ModelConfig::default();
        assert!(imbalance_scan(&base, ImbalanceAxis::D, &[10.5], &cfg, 0).is_err());
        assert!(imbalance_scan(&base, ImbalanceAxis::Omega, &[1.5], &cfg, 0).is_err());
    }
}
