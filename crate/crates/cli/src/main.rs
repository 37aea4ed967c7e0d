mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hiernet_core::{Hierarchy, Norm};

/// Sparse regression with hierarchical pairwise interactions.
#[derive(Parser, Debug)]
#[command(name = "hiernet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/validation/test splits from a synthetic ground truth.
    Generate(GenerateArgs),
    /// Fit one model and write its coefficients and iteration trace.
    Fit(FitArgs),
    /// Cross-validate lambda over replicate datasets.
    Cv(CvArgs),
    /// Apply a projection or proximity operator to a vector read from a file.
    Project(ProjectArgs),
    /// Time solver iterations over a range of problem sizes.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    L1,
    Linf,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L1 => Norm::L1,
            NormArg::Linf => Norm::Linf,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HierarchyArg {
    Weak,
    Strong,
}

impl From<HierarchyArg> for Hierarchy {
    fn from(h: HierarchyArg) -> Self {
        match h {
            HierarchyArg::Weak => Hierarchy::Weak,
            HierarchyArg::Strong => Hierarchy::Strong,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Dataset30,
    Dataset100,
}

#[derive(Args, Debug)]
struct DataGenArgs {
    /// Named configuration; overrides below still apply.
    #[arg(long, value_enum, required_unless_present_all = ["features", "main", "rho"])]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of features.
    #[arg(long)]
    features: Option<usize>,
    /// Number of nonzero main effects.
    #[arg(long)]
    main: Option<usize>,
    /// Fraction of possible interactions that are nonzero.
    #[arg(long)]
    rho: Option<f64>,
    /// Samples in each split.
    #[arg(long)]
    samples: Option<usize>,
    /// Target signal-to-noise ratio in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Draw the main-effect support at random instead of taking the first features.
    #[arg(long)]
    random_support: bool,
    /// Keep responses on their raw scale.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataGenArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training CSV with header y,x1..xN.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum)]
    norm: NormArg,
    #[arg(long, value_enum)]
    hierarchy: HierarchyArg,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Relative tolerance on both objective and iterate change.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep one trace row every this many iterations.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CvArgs {
    /// Generate a fresh replicate per seed from this preset.
    #[arg(long, value_enum, conflicts_with_all = ["train", "validation", "test"])]
    preset: Option<Preset>,
    /// First replicate seed; replicate i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, requires_all = ["validation", "test"], required_unless_present = "preset")]
    train: Option<PathBuf>,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum)]
    norm: NormArg,
    #[arg(long, value_enum)]
    hierarchy: HierarchyArg,
    /// Comma-separated lambdas (default 2,4,...,20).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Number of replicate datasets.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_objective: Option<f64>,
    #[arg(long)]
    tol_iterate: Option<f64>,
    /// Worker threads (also capped by HIERNET_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProjectionKind {
    /// Epigraph of the l1 norm; input is w+, w-, u...
    EpiL1,
    /// Epigraph of the l-inf norm; input is w+, w-, u...
    EpiLinf,
    /// Epigraph of the l1 norm restricted to nonnegative u; input is w+, w-, u...
    EpiL1Pos,
    /// Nonnegative orthant.
    Orthant,
    /// Soft thresholding at `--param`.
    L1Prox,
    /// Box of radius `--param`.
    LinfBall,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long, value_enum)]
    kind: ProjectionKind,
    /// Numbers separated by commas, spaces or newlines.
    #[arg(long)]
    input: PathBuf,
    /// Threshold or radius for the kinds that take one.
    #[arg(long)]
    param: Option<f64>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated feature counts.
    #[arg(long, value_delimiter = ',', default_value = "10,30,100")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Iterations timed per solve.
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Numerical failures exit with 2; everything else that goes wrong is a usage error.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<hiernet_core::Error>(),
            Some(
                hiernet_core::Error::Diverged { .. }
                    | hiernet_core::Error::NonFinite { .. }
                    | hiernet_core::Error::StepSize { .. }
            )
        )
    });
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a, args),
        Command::Fit(a) => commands::fit(&a, args),
        Command::Cv(a) => commands::cv(&a, args),
        Command::Project(a) => commands::project(&a, args),
        Command::Bench(a) => commands::bench(&a, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
