//! Online Hartigan-style minimisation of the clustering objective.
//!
//! Rows are visited one at a time and moved to whichever cluster lowers the
//! objective the most, with cluster statistics updated immediately. A cluster
//! that shrinks below `epsilon * n` rows is dissolved and its members are
//! greedily placed into the remaining clusters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ClusterStats, InitStrategy, ModelConfig, Partition};
use crate::sparse::{SparseBinaryDataset, SparseRow};

/// Minimum gain for a move to be committed.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OptimizerReport {
    /// Final partition with clusters renumbered `0..k`.
    pub final_partition: Partition,
    /// Objective before the first pass followed by its value after each pass.
    pub cost_trace: Vec<f64>,
    /// Whether each pass dissolved at least one cluster.
    pub pass_reduced: Vec<bool>,
    pub iterations: usize,
    pub switches: usize,
    pub reductions: usize,
    pub seed_used: u64,
    pub total_cost: f64,
    /// True when the last pass committed no move.
    pub converged: bool,
}

/// Outcome of scoring one row against every cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Switch {
    pub target: usize,
    pub gain: f64,
}

/// A committed move, as seen by an observer of [`run_observed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub row: usize,
    pub from: usize,
    pub to: usize,
    pub gain: f64,
    pub cost_before: f64,
    pub cost_after: f64,
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Forms the initial partition using `config.seed`.
pub fn initialize(
    data: &SparseBinaryDataset,
    config: &ModelConfig,
    strategy: InitStrategy,
) -> Result<Partition> {
    initialize_with(data, config, strategy, &mut rng_for(config.seed))
}

fn initialize_with(
    data: &SparseBinaryDataset,
    config: &ModelConfig,
    strategy: InitStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<Partition> {
    let k = config.k_init;
    let n = data.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::TooFewRows { needed: k, got: n });
    }
    let assignment = match strategy {
        InitStrategy::Random => random_assignment(n, k, rng),
        InitStrategy::Seeded => seeded_assignment(data, k, rng),
    };
    Partition::from_assignment(data, assignment, config.threshold)
}

fn random_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        // largest cluster, lowest id on ties
        let donor = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        let row = (0..n).rev().find(|&i| assignment[i] == donor).unwrap();
        assignment[row] = empty;
        sizes[donor] -= 1;
        sizes[empty] += 1;
    }
    assignment
}

fn seeded_assignment(data: &SparseBinaryDataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    let rows = data.rows();
    let mut seeds = vec![rng.gen_range(0..n)];
    let mut chosen = vec![false; n];
    chosen[seeds[0]] = true;
    let mut dist: Vec<u64> = rows.iter().map(|r| r.hamming(&rows[seeds[0]]) as u64).collect();
    while seeds.len() < k {
        let total: u64 = (0..n).filter(|&i| !chosen[i]).map(|i| dist[i]).sum();
        let next = if total == 0 {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        } else {
            let mut r = rng.gen_range(0..total);
            let mut pick = None;
            for i in (0..n).filter(|&i| !chosen[i]) {
                if r < dist[i] {
                    pick = Some(i);
                    break;
                }
                r -= dist[i];
            }
            pick.expect("weighted pick within total")
        };
        chosen[next] = true;
        seeds.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = (*d).min(rows[i].hamming(&rows[next]) as u64);
        }
    }
    let mut assignment: Vec<usize> = rows
        .iter()
        .map(|r| {
            (0..k)
                .min_by_key(|&c| (r.hamming(&rows[seeds[c]]), c))
                .unwrap()
        })
        .collect();
    for (c, &s) in seeds.iter().enumerate() {
        assignment[s] = c;
    }
    assignment
}

/// Scores moving `x` (currently in `current`) to every other live cluster.
///
/// Returns the cluster with the largest gain above [`MIN_GAIN`], or `current`
/// with gain 0. By default the gain is the exact decrease of the objective;
/// with `raw_pseudocode_gain` it is the unweighted sum of per-cluster cost
/// changes.
pub fn best_switch(
    partition: &Partition,
    x: &SparseRow,
    current: usize,
    config: &ModelConfig,
) -> Result<Switch> {
    let donor = partition
        .cluster(current)
        .ok_or_else(|| Error::Invalid(format!("cluster {current} is not live")))?;
    let removed = donor.preview_remove(x)?;
    let beta = config.beta;
    let n = partition.n() as f64;
    let donor_gain = if config.raw_pseudocode_gain {
        donor.cluster_cost()? - removed.cost()
    } else {
        donor.contribution(beta) - removed.contribution(beta)
    };

    let mut best = Switch {
        target: current,
        gain: 0.0,
    };
    for id in partition.live_ids().filter(|&id| id != current) {
        let target = partition.cluster(id).expect("live");
        let added = target.preview_add(x);
        let gain = if config.raw_pseudocode_gain {
            donor_gain + target.cluster_cost()? - added.cost()
        } else {
            (donor_gain + target.contribution(beta) - added.contribution(beta)) / n
        };
        if gain > MIN_GAIN && gain > best.gain {
            best = Switch { target: id, gain };
        }
    }
    Ok(best)
}

/// Increase of the objective contribution when `x` joins `stats`.
fn placement_cost(stats: &ClusterStats, x: &SparseRow, beta: f64) -> f64 {
    stats.preview_add(x).contribution(beta) - stats.contribution(beta)
}

fn dissolve(
    partition: &mut Partition,
    data: &SparseBinaryDataset,
    id: usize,
    beta: f64,
) {
    partition.dissolve(id);
    let members: Vec<usize> = (0..data.len())
        .filter(|&i| partition.cluster_of(i) == id)
        .collect();
    for i in members {
        let x = data.row(i);
        let target = partition
            .live_ids()
            .map(|c| (c, placement_cost(partition.cluster(c).unwrap(), x, beta)))
            .fold(None, |best: Option<(usize, f64)>, (c, cost)| match best {
                Some((_, b)) if b <= cost => best,
                _ => Some((c, cost)),
            })
            .expect("at least one live cluster")
            .0;
        partition.cluster_mut(target).add_point(x);
        partition.set_assignment(i, target);
    }
}

/// One optimisation run from the initial partition seeded by `config.seed`.
pub fn run(data: &SparseBinaryDataset, config: &ModelConfig) -> Result<OptimizerReport> {
    run_observed(data, config, |_, _| {})
}

/// Like [`run`], calling `observer` after every committed move (before any
/// cluster reduction it triggers).
pub fn run_observed<F>(
    data: &SparseBinaryDataset,
    config: &ModelConfig,
    mut observer: F,
) -> Result<OptimizerReport>
where
    F: FnMut(&SwitchEvent, &Partition),
{
    config.validate()?;
    let mut rng = rng_for(config.seed);
    let mut partition = initialize_with(data, config, config.init, &mut rng)?;
    let n = data.len();
    let beta = config.beta;
    let min_size = config.epsilon * n as f64;

    let mut cost = partition.total_cost_closed_form(beta)?;
    let mut cost_trace = vec![partition.total_cost(beta)?];
    let mut pass_reduced = Vec::new();
    let (mut switches, mut reductions, mut iterations) = (0, 0, 0);
    let mut converged = false;
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..config.max_iter {
        iterations += 1;
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut moved = false;
        let mut reduced = false;
        for &i in &order {
            let x = data.row(i);
            let from = partition.cluster_of(i);
            let choice = best_switch(&partition, x, from, config)?;
            if choice.target == from {
                continue;
            }
            partition.cluster_mut(from).remove_point(x)?;
            partition.cluster_mut(choice.target).add_point(x);
            partition.set_assignment(i, choice.target);
            moved = true;
            switches += 1;

            let cost_after = partition.total_cost_closed_form(beta)?;
            observer(
                &SwitchEvent {
                    row: i,
                    from,
                    to: choice.target,
                    gain: choice.gain,
                    cost_before: cost,
                    cost_after,
                },
                &partition,
            );
            cost = cost_after;

            let donor_size = partition.cluster(from).map_or(0, |c| c.size());
            if donor_size == 0 || (donor_size as f64) < min_size {
                dissolve(&mut partition, data, from, beta);
                reductions += 1;
                reduced = true;
                cost = partition.total_cost_closed_form(beta)?;
            }
        }
        cost_trace.push(partition.total_cost(beta)?);
        pass_reduced.push(reduced);
        if !moved {
            converged = true;
            break;
        }
    }

    let final_partition = partition.compacted();
    let total_cost = final_partition.total_cost(beta)?;
    Ok(OptimizerReport {
        final_partition,
        cost_trace,
        pass_reduced,
        iterations,
        switches,
        reductions,
        seed_used: config.seed,
        total_cost,
        converged,
    })
}

/// Runs `config.restarts` independent optimisations with seeds `seed, seed + 1, ...`
/// in parallel and keeps the cheapest (earliest seed on ties).
pub fn run_restarts(data: &SparseBinaryDataset, config: &ModelConfig) -> Result<OptimizerReport> {
    config.validate()?;
    let reports = (0..config.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(r);
            run(data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports
        .into_iter()
        .reduce(|best, r| if r.total_cost < best.total_cost { r } else { best })
        .expect("at least one restart"))
}
