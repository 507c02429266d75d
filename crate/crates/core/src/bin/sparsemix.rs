use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsemix::evaluation::{
    adjusted_rand_index, imbalance_scan, stability_attributes, stability_instances,
    write_imbalance_csv, write_stability_csv, ClusterRunner, ImbalanceAxis, SparseMixRunner,
};
use sparsemix::model::verify_compression_monotonicity;
use sparsemix::report::{check_cost, load_assignment, save_assignment, RunResult};
use sparsemix::sparse::{load_dataset, load_labels, save_labels, save_svmlight};
use sparsemix::synthetic::{generate, phase_grid, write_phase_csv, MixtureSpec, PhaseGrid, PhaseMode};
use sparsemix::{
    run_restarts, Error, Format, InitStrategy, ModelConfig, SparseBinaryDataset, SparseRow,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "sparsemix", version, about = "Minimum coding cost clustering of sparse binary data")]
struct Cli {
    /// Worker threads for restarts and grids (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset.
    Cluster(ClusterArgs),
    /// Sample a two-source block mixture.
    Synth(SynthArgs),
    /// Tabulate the analytic one-versus-two cluster decision.
    Phase(PhaseArgs),
    /// Check that single-cluster cost grows with the threshold.
    VerifyTheorem(VerifyArgs),
    /// Compare partitions and run resampling experiments.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "svmlight")]
    format: Format,
    /// Number of columns; defaults to the largest index seen plus one.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Initial number of clusters.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Weight of the cluster identification cost.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Representative threshold.
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    /// Clusters smaller than this share of the rows are dissolved.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "seeded")]
    init: InitStrategy,
    /// Visit rows in a fresh random order on every pass.
    #[arg(long)]
    shuffle: bool,
    /// Score moves by the unweighted per-cluster cost difference.
    #[arg(long)]
    raw_pseudocode_gain: bool,
}

impl ModelArgs {
    fn config(&self) -> sparsemix::Result<ModelConfig> {
        let config = ModelConfig {
            threshold: self.t,
            beta: self.beta,
            epsilon: self.epsilon,
            k_init: self.k,
            restarts: self.restarts,
            max_iter: self.max_iter,
            seed: self.seed,
            init: self.init,
            shuffle: self.shuffle,
            raw_pseudocode_gain: self.raw_pseudocode_gain,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Reference labels, one per line; adds an ARI to the result.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// JSON result path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Assignment path, one cluster id per line.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Recompute the cost of the written assignment and fail on disagreement.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Clone)]
struct MixtureArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "dim", default_value_t = 100)]
    dim: usize,
    /// Expected row density.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    /// Source 1 sets first-block bits with probability alpha * p, the rest with (1 - alpha) * p.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// First block size; defaults to half the dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Mixing weight of source 1.
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
}

impl MixtureArgs {
    fn spec(&self) -> sparsemix::Result<MixtureSpec> {
        let spec = MixtureSpec {
            p: self.p,
            alpha: self.alpha,
            d: self.d.unwrap_or(self.dim / 2),
            dim: self.dim,
            omega: self.omega,
            n: self.n,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset path (svmlight).
    #[arg(long)]
    output: PathBuf,
    /// Source labels path; 0 is source 1, 1 is source 2.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseArgs {
    /// half-block (x = omega), half-mixing (x = d/D) or balanced (x = p d).
    #[arg(long, default_value = "half-block")]
    mode: PhaseMode,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long = "dim", default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// Largest load on the balanced grid.
    #[arg(long, default_value_t = 10.0)]
    max_load: f64,
    /// CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Dataset to check; random datasets are drawn when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "svmlight")]
    format: Format,
    #[arg(long = "dim", default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Random datasets to draw when no input is given.
    #[arg(long, default_value_t = 100)]
    datasets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold grid, ascending within [0.5, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
    thresholds: Vec<f64>,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Adjusted Rand index between two label files.
    Ari {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// ARI of subsample clusterings against the full clustering.
    Stability(StabilityArgs),
    /// Share of rows in the cluster matched to source 1 across a parameter sweep.
    Imbalance(ImbalanceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Resample {
    Instances,
    Attributes,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "instances")]
    resample: Resample,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    fractions: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ImbalanceArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// omega or d.
    #[arg(long)]
    vary: ImbalanceAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn create(path: &Path) -> sparsemix::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs `body` against the file at `path`, or stdout when there is none.
fn with_output(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> sparsemix::Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn load(input: &InputArgs) -> sparsemix::Result<SparseBinaryDataset> {
    Ok(load_dataset(&input.input, input.format, input.dim)?.dataset)
}

fn cmd_cluster(args: &ClusterArgs) -> sparsemix::Result<()> {
    let config = args.model.config()?;
    let data = load(&args.input)?;
    let labels = args.labels.as_deref().map(load_labels).transpose()?;
    let start = Instant::now();
    let report = run_restarts(&data, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut result = RunResult::new(&data, &config, &report, elapsed)?;
    let assignment = report.final_partition.assignment();
    if let Some(labels) = &labels {
        result.ari = Some(adjusted_rand_index(assignment, labels)?);
    }
    if let Some(path) = &args.assignment {
        save_assignment(path, assignment)?;
    }
    if args.check {
        let written = match &args.assignment {
            Some(path) => load_assignment(path)?,
            None => assignment.to_vec(),
        };
        check_cost(&data, &written, &config, result.total_cost)?;
    }
    let json = result.to_json()?;
    with_output(args.output.as_deref(), |w| writeln!(w, "{json}"))
}

fn cmd_synth(args: &SynthArgs) -> sparsemix::Result<()> {
    let generated = generate(&args.mixture.spec()?, args.seed)?;
    save_svmlight(&args.output, &generated.dataset)?;
    if let Some(path) = &args.labels {
        save_labels(path, &generated.labels)?;
    }
    Ok(())
}

fn cmd_phase(args: &PhaseArgs) -> sparsemix::Result<()> {
    let grid = PhaseGrid {
        resolution: args.resolution,
        max_load: args.max_load,
        ..PhaseGrid::new(args.mode, args.p, args.dim)
    };
    let cells = phase_grid(&grid)?;
    with_output(args.output.as_deref(), |w| write_phase_csv(w, &cells))
}

fn random_dataset(rng: &mut ChaCha8Rng, rows: usize, dim: usize, density: f64) -> SparseBinaryDataset {
    let rows = (0..rows)
        .map(|_| {
            let bits = (0..dim as u32).filter(|_| rng.gen_bool(density)).collect();
            SparseRow::new(bits).expect("ascending")
        })
        .collect();
    SparseBinaryDataset::new(dim, rows).expect("indices below dim")
}

/// Returns whether every checked pair held.
fn cmd_verify(args: &VerifyArgs) -> sparsemix::Result<bool> {
    let reports = match &args.input {
        Some(path) => {
            let data = load_dataset(path, args.format, None)?.dataset;
            vec![verify_compression_monotonicity(&data, &args.thresholds)?]
        }
        None => {
            if !(0.0..=1.0).contains(&args.density) || args.dim == 0 {
                return Err(Error::InvalidConfig("density must lie in [0, 1] and dim be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (0..args.datasets)
                .map(|_| {
                    let data = random_dataset(&mut rng, args.rows, args.dim, args.density);
                    verify_compression_monotonicity(&data, &args.thresholds)
                })
                .collect::<sparsemix::Result<Vec<_>>>()?
        }
    };
    let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
    let pairs: usize = reports.iter().map(|r| r.pairs_checked).sum();
    let summary = serde_json::json!({
        "datasets": reports.len(),
        "pairs_checked": pairs,
        "violations": violations,
        "reports": reports,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))?;
    with_output(args.output.as_deref(), |w| writeln!(w, "{text}"))?;
    if violations > 0 {
        eprintln!("error: {violations} monotonicity violations");
    }
    Ok(violations == 0)
}

fn cmd_eval(command: &EvalCommand) -> sparsemix::Result<()> {
    match command {
        EvalCommand::Ari { a, b } => {
            let ari = adjusted_rand_index(&load_labels(a)?, &load_labels(b)?)?;
            println!("{ari}");
            Ok(())
        }
        EvalCommand::Stability(args) => {
            let config = args.model.config()?;
            let data = load(&args.input)?;
            let runner = SparseMixRunner { config: config.clone() };
            let full = runner.cluster(&data, config.seed)?;
            let points = match args.resample {
                Resample::Instances => {
                    stability_instances(&data, &full, &args.fractions, &runner, config.seed)?
                }
                Resample::Attributes => {
                    stability_attributes(&data, &full, &args.fractions, &runner, config.seed)?
                }
            };
            with_output(args.output.as_deref(), |w| write_stability_csv(w, &points))
        }
        EvalCommand::Imbalance(args) => {
            let config = args.model.config()?;
            let points =
                imbalance_scan(&args.mixture.spec()?, args.vary, &args.grid, &config, config.seed)?;
            with_output(args.output.as_deref(), |w| write_imbalance_csv(w, &points))
        }
    }
}

fn dispatch(cli: &Cli) -> sparsemix::Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match &cli.command {
        Command::Cluster(args) => cmd_cluster(args)?,
        Command::Synth(args) => cmd_synth(args)?,
        Command::Phase(args) => cmd_phase(args)?,
        Command::VerifyTheorem(args) => {
            if !cmd_verify(args)? {
                return Ok(ExitCode::from(EXIT_DATA));
            }
        }
        Command::Eval(command) => cmd_eval(command)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
