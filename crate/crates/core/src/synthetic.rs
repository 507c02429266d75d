//! Two-source block Bernoulli mixtures and their closed-form coding costs.
//!
//! Source 1 sets each of the first `d` coordinates with probability `alpha * p`
//! and each remaining coordinate with probability `(1 - alpha) * p`. Source 2
//! swaps `alpha` and `1 - alpha`. A row comes from source 1 with probability
//! `omega`.
//!
//! The analytic costs assume a zero representative (`T = 1`) and unit
//! identification weight, with clusters fitted exactly to the sources.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{SparseBinaryDataset, SparseRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub p: f64,
    pub alpha: f64,
    /// Number of leading coordinates in the first block.
    pub d: usize,
    pub dim: usize,
    pub omega: f64,
    pub n: usize,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidMixture(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("p", self.p)?;
        unit("alpha", self.alpha)?;
        unit("omega", self.omega)?;
        if self.dim == 0 {
            return Err(Error::InvalidMixture("dimension must be positive".into()));
        }
        if self.d > self.dim {
            return Err(Error::InvalidMixture(format!(
                "block size {} exceeds dimension {}",
                self.d, self.dim
            )));
        }
        Ok(())
    }

    /// `D(x, d) = x d + (1 - x)(D - d)`.
    pub fn block_weight(&self, x: f64) -> f64 {
        block_weight(x, self.d as f64, self.dim as f64)
    }

    /// Bit probabilities of one source over the two blocks.
    fn source_probs(&self, source_one: bool) -> (f64, f64) {
        let a = if source_one { self.alpha } else { 1.0 - self.alpha };
        (a * self.p, (1.0 - a) * self.p)
    }
}

fn block_weight(x: f64, d: f64, dim: f64) -> f64 {
    x * d + (1.0 - x) * (dim - d)
}

/// `v log2 v` with `0 log 0 = 0`.
fn xlog(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.log2()
    }
}

/// `h(a, b) = -a log2 a - b log2 b`.
pub fn h(a: f64, b: f64) -> f64 {
    -xlog(a) - xlog(b)
}

/// Rows and their source labels (0 for source 1, 1 for source 2).
#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: SparseBinaryDataset,
    pub labels: Vec<usize>,
}

pub fn generate(spec: &MixtureSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = spec.source_probs(true);
    let second = spec.source_probs(false);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let from_first = rng.gen_bool(spec.omega);
        let (lead, tail) = if from_first { first } else { second };
        let indices = (0..spec.dim as u32)
            .filter(|&j| rng.gen_bool(if (j as usize) < spec.d { lead } else { tail }))
            .collect();
        rows.push(SparseRow::new(indices)?);
        labels.push(usize::from(!from_first));
    }
    Ok(Generated {
        dataset: SparseBinaryDataset::new(spec.dim, rows)?,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    One,
    Two,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::One => "one",
            Decision::Two => "two",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCostPair {
    pub cost_one: f64,
    pub cost_two: f64,
    pub decision: Decision,
}

/// Expected cost per row of one cluster holding both sources versus two
/// clusters matching the sources (including `h(omega, 1 - omega)` bits of
/// identification).
pub fn analytic_costs(spec: &MixtureSpec) -> Result<AnalyticCostPair> {
    spec.validate()?;
    let MixtureSpec { p, alpha, omega, .. } = *spec;
    let d = spec.d as f64;
    let dim = spec.dim as f64;
    let bw = |x: f64| block_weight(x, d, dim);

    let cost_two = p
        * (omega * xlog(bw(alpha)) + (1.0 - omega) * xlog(bw(1.0 - alpha))
            - bw(omega) * xlog(alpha)
            - bw(1.0 - omega) * xlog(1.0 - alpha))
        + h(omega, 1.0 - omega);

    let mix_beta = omega * alpha + (1.0 - omega) * (1.0 - alpha);
    let cost_one =
        p * (xlog(bw(mix_beta)) - d * xlog(mix_beta) - (dim - d) * xlog(1.0 - mix_beta));

    Ok(AnalyticCostPair {
        cost_one,
        cost_two,
        decision: if cost_one <= cost_two {
            Decision::One
        } else {
            Decision::Two
        },
    })
}

/// Which pair of mixture parameters a phase grid sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// `d = D/2`; x is `omega`.
    HalfBlock,
    /// `omega = 1/2`; x is `d / D`.
    HalfMixing,
    /// `d = D/2` and `omega = 1/2`; x is `L = p d`.
    Balanced,
}

impl FromStr for PhaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half-block" | "d-half" | "a" => Ok(PhaseMode::HalfBlock),
            "half-mixing" | "omega-half" | "b" => Ok(PhaseMode::HalfMixing),
            "balanced" | "both" | "c" => Ok(PhaseMode::Balanced),
            other => Err(Error::Invalid(format!("unknown phase mode {other:?}"))),
        }
    }
}

/// One evaluated grid point; `y` is always `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub x: f64,
    pub y: f64,
    pub cost_one: f64,
    pub cost_two: f64,
    pub decision: Decision,
}

/// Grid settings. `max_load` bounds `L` in [`PhaseMode::Balanced`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    pub mode: PhaseMode,
    pub p: f64,
    pub dim: usize,
    pub resolution: usize,
    pub max_load: f64,
}

impl PhaseGrid {
    pub fn new(mode: PhaseMode, p: f64, dim: usize) -> Self {
        PhaseGrid {
            mode,
            p,
            dim,
            resolution: 101,
            max_load: 10.0,
        }
    }

    /// The x-axis values of the grid.
    pub fn x_values(&self) -> Vec<f64> {
        let r = self.resolution;
        match self.mode {
            PhaseMode::Balanced => (1..=r).map(|i| self.max_load * i as f64 / r as f64).collect(),
            _ => (0..r).map(|i| i as f64 / (r - 1) as f64).collect(),
        }
    }

    fn spec_at(&self, x: f64, alpha: f64) -> MixtureSpec {
        let half = self.dim / 2;
        match self.mode {
            PhaseMode::HalfBlock => MixtureSpec {
                p: self.p,
                alpha,
                d: half,
                dim: self.dim,
                omega: x,
                n: 0,
            },
            PhaseMode::HalfMixing => MixtureSpec {
                p: self.p,
                alpha,
                d: (x * self.dim as f64).round() as usize,
                dim: self.dim,
                omega: 0.5,
                n: 0,
            },
            PhaseMode::Balanced => MixtureSpec {
                p: (x / half as f64).min(1.0),
                alpha,
                d: half,
                dim: self.dim,
                omega: 0.5,
                n: 0,
            },
        }
    }
}

/// Evaluates [`analytic_costs`] on every (x, alpha) cell, alpha-major.
pub fn phase_grid(grid: &PhaseGrid) -> Result<Vec<PhaseCell>> {
    if grid.resolution < 2 {
        return Err(Error::Invalid("grid resolution must be at least 2".into()));
    }
    if grid.mode == PhaseMode::Balanced && grid.dim < 2 {
        return Err(Error::Invalid("balanced grid needs dimension of at least 2".into()));
    }
    let xs = grid.x_values();
    let alphas: Vec<f64> = (0..grid.resolution)
        .map(|i| i as f64 / (grid.resolution - 1) as f64)
        .collect();
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| xs.iter().map(move |&x| (x, a)))
        .collect();
    cells
        .into_par_iter()
        .map(|(x, alpha)| {
            let spec = grid.spec_at(x, alpha);
            let x = match grid.mode {
                PhaseMode::HalfMixing => spec.d as f64 / spec.dim as f64,
                _ => x,
            };
            let pair = analytic_costs(&spec)?;
            Ok(PhaseCell {
                x,
                y: alpha,
                cost_one: pair.cost_one,
                cost_two: pair.cost_two,
                decision: pair.decision,
            })
        })
        .collect()
}

/// Writes cells as CSV with header `x,y,cost_one,cost_two,decision`.
pub fn write_phase_csv<W: std::io::Write>(mut out: W, cells: &[PhaseCell]) -> std::io::Result<()> {
    writeln!(out, "x,y,cost_one,cost_two,decision")?;
    for c in cells {
        writeln!(out, "{},{},{},{},{}", c.x, c.y, c.cost_one, c.cost_two, c.decision)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(p: f64, alpha: f64, d: usize, dim: usize, omega: f64) -> MixtureSpec {
        MixtureSpec { p, alpha, d, dim, omega, n: 0 }
    }

    /// Per-coordinate evaluation of `sum_j q_j (-log2 Q_j)` for a cluster whose
    /// bit probabilities are `probs` (zero representative).
    fn direct_cluster_cost(probs: &[f64]) -> f64 {
        let z: f64 = probs.iter().sum();
        probs
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|&q| q * -(q / z).log2())
            .sum()
    }

    fn block_probs(s: &MixtureSpec, a: f64) -> Vec<f64> {
        (0..s.dim)
            .map(|j| if j < s.d { a * s.p } else { (1.0 - a) * s.p })
            .collect()
    }

    fn direct_costs(s: &MixtureSpec) -> (f64, f64) {
        let first = block_probs(s, s.alpha);
        let second = block_probs(s, 1.0 - s.alpha);
        let mixed: Vec<f64> = first
            .iter()
            .zip(&second)
            .map(|(a, b)| s.omega * a + (1.0 - s.omega) * b)
            .collect();
        let two = s.omega * direct_cluster_cost(&first)
            + (1.0 - s.omega) * direct_cluster_cost(&second)
            + h(s.omega, 1.0 - s.omega);
        (direct_cluster_cost(&mixed), two)
    }

    #[test]
    fn closed_forms_match_direct_sums() {
        let cases = [
            spec(0.1, 0.05, 50, 100, 0.5),
            spec(0.1, 0.3, 20, 100, 0.8),
            spec(0.2, 0.9, 70, 100, 0.1),
            spec(0.05, 0.5, 10, 40, 0.3),
            spec(0.3, 0.0, 5, 30, 0.6),
            spec(0.3, 1.0, 25, 30, 0.6),
        ];
        for s in &cases {
            let got = analytic_costs(s).unwrap();
            let (one, two) = direct_costs(s);
            assert_abs_diff_eq!(got.cost_one, one, epsilon = 1e-9);
            assert_abs_diff_eq!(got.cost_two, two, epsilon = 1e-9);
        }
    }

    #[test]
    fn balanced_case_closed_form() {
        let (p, alpha, dim) = (0.1, 0.2, 100);
        let d = dim / 2;
        let got = analytic_costs(&spec(p, alpha, d, dim, 0.5)).unwrap();
        let d = d as f64;
        assert_abs_diff_eq!(got.cost_two, d * p * (h(alpha, 1.0 - alpha) + d.log2()) + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.cost_one, p * d * (dim as f64).log2(), epsilon = 1e-12);
    }

    #[test]
    fn identical_sources_one_cluster_wins_by_one_bit() {
        let got = analytic_costs(&spec(0.1, 0.5, 50, 100, 0.5)).unwrap();
        assert_abs_diff_eq!(got.cost_two - got.cost_one, 1.0, epsilon = 1e-12);
        assert_eq!(got.decision, Decision::One);
    }

    #[test]
    fn equal_mixing_case() {
        // omega = 1/2 with a general block size; the D h(alpha) term enters
        // with a positive sign, which is what the direct sum gives
        let (p, alpha, d, dim) = (0.1, 0.15, 20, 100);
        let s = spec(p, alpha, d, dim, 0.5);
        let got = analytic_costs(&s).unwrap();
        let big_d = dim as f64;
        let expected_two =
            -0.5 * p * h(s.block_weight(alpha), s.block_weight(1.0 - alpha))
                + 0.5 * p * big_d * h(alpha, 1.0 - alpha)
                + 1.0;
        assert_abs_diff_eq!(got.cost_two, expected_two, epsilon = 1e-12);
        assert_abs_diff_eq!(got.cost_one, 0.5 * p * big_d * big_d.log2(), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_under_relabelling() {
        let check = |a: &MixtureSpec, b: &MixtureSpec| {
            let (x, y) = (analytic_costs(a).unwrap(), analytic_costs(b).unwrap());
            assert_abs_diff_eq!(x.cost_one, y.cost_one, epsilon = 1e-9);
            assert_abs_diff_eq!(x.cost_two, y.cost_two, epsilon = 1e-9);
        };
        for (alpha, omega, d) in [(0.1, 0.3, 20), (0.7, 0.9, 65), (0.45, 0.5, 0)] {
            let base = spec(0.12, alpha, d, 80, omega);
            // reversing the coordinates
            check(&base, &spec(0.12, 1.0 - alpha, 80 - d, 80, omega));
            // renaming the sources
            check(&base, &spec(0.12, 1.0 - alpha, d, 80, 1.0 - omega));
            // both
            check(&base, &spec(0.12, alpha, 80 - d, 80, 1.0 - omega));
        }
    }

    #[test]
    fn identical_sources_never_split() {
        for omega in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            for d in [0, 10, 50, 99] {
                let got = analytic_costs(&spec(0.1, 0.5, d, 100, omega)).unwrap();
                assert_eq!(got.decision, Decision::One);
                assert_abs_diff_eq!(got.cost_two - got.cost_one, h(omega, 1.0 - omega), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn generator_respects_omega() {
        let g = generate(&MixtureSpec { n: 200, ..spec(0.1, 0.05, 50, 100, 1.0) }, 1).unwrap();
        assert!(g.labels.iter().all(|&l| l == 0));
        let g = generate(&MixtureSpec { n: 200, ..spec(0.1, 0.05, 50, 100, 0.0) }, 1).unwrap();
        assert!(g.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn generator_is_seeded() {
        let s = MixtureSpec { n: 50, ..spec(0.2, 0.1, 10, 30, 0.4) };
        let a = generate(&s, 9).unwrap();
        let b = generate(&s, 9).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn source_one_density() {
        let s = MixtureSpec { n: 10_000, ..spec(0.1, 0.05, 50, 100, 1.0) };
        let g = generate(&s, 4).unwrap();
        let nnz: Vec<f64> = g.dataset.rows().iter().map(|r| r.nnz() as f64).collect();
        let n = nnz.len() as f64;
        let mean = nnz.iter().sum::<f64>() / n;
        let var = nnz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&spec(1.2, 0.1, 5, 10, 0.5), 0).is_err());
        assert!(generate(&spec(0.1, 0.1, 11, 10, 0.5), 0).is_err());
        assert!(analytic_costs(&spec(0.1, -0.1, 5, 10, 0.5)).is_err());
    }

    #[test]
    fn phase_grid_shapes() {
        let mut grid = PhaseGrid::new(PhaseMode::HalfBlock, 0.1, 100);
        grid.resolution = 11;
        let cells = phase_grid(&grid).unwrap();
        assert_eq!(cells.len(), 121);
        for c in cells.iter().filter(|c| (c.y - 0.5).abs() < 1e-12) {
            assert_eq!(c.decision, Decision::One);
        }
        grid.resolution = 1;
        assert!(phase_grid(&grid).is_err());
    }

    #[test]
    fn narrow_block_near_half_merges() {
        let got = analytic_costs(&spec(0.1, 0.45, 5, 100, 0.5)).unwrap();
        assert_eq!(got.decision, Decision::One);
    }

    #[test]
    fn balanced_grid_depends_on_load() {
        let mut grid = PhaseGrid::new(PhaseMode::Balanced, 0.1, 100);
        grid.resolution = 20;
        let cells = phase_grid(&grid).unwrap();
        // at alpha near 0.2 sparse data merges and dense data splits
        let alpha = 4.0 / 19.0;
        let at = |x: f64| {
            cells
                .iter()
                .find(|c| (c.y - alpha).abs() < 1e-9 && (c.x - x).abs() < 1e-9)
                .unwrap()
                .decision
        };
        assert_eq!(at(0.5), Decision::One);
        assert_eq!(at(10.0), Decision::Two);
    }
}
