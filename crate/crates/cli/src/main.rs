use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "sfr", version, about = "Rating recovery on item-item similarity graphs")]
struct Cli {
    /// Worker threads for per-user work (defaults to all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

macro_rules! overrides {
    ($($field:ident: $help:literal),* $(,)?) => {
        /// One flag per config key; a flag wins over the config file.
        #[derive(Args, Debug, Default)]
        struct Overrides {
            /// Flat key = value config file
            #[arg(long, short)]
            config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE", help = $help, help_heading = "Config overrides")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
                let mut c = match &self.config {
                    Some(path) => ExperimentConfig::load(path)?,
                    None => ExperimentConfig::default(),
                };
                $(
                    if let Some(v) = &self.$field {
                        c.set(stringify!($field), v)?;
                    }
                )*
                Ok(c)
            }
        }
    };
}

overrides!(
    dataset: "Ratings file",
    format: "csv or movielens_dat",
    rating_min: "Lowest legal rating",
    rating_max: "Highest legal rating",
    threshold: "Keep item pairs with Pearson similarity strictly above this",
    min_support: "Fewest co-rating users for a similarity",
    split_fraction: "Share of ratings kept for training",
    seed: "Split seed",
    methods: "Comma-separated methods: knn, hcp, sfr",
    output_dir: "Directory for report files",
    coverage: "Share of an item's neighbors the user must have rated (examine)",
    min_neighbor_ratings: "Fewest rated neighbors per sample (examine)",
    p: "Exponent of the sparsity penalty, in (0, 1)",
    smoothing_eps: "Smoothing scale of the penalty",
    max_iterations: "Iteration budget per descent run",
    objective_rel_tol: "Relative objective change that ends a descent",
    initial_step: "First trial step of the line search",
    backtrack_factor: "Step shrink factor of the line search",
    source_tolerance: "Second-derivative magnitude that marks a source",
    continuation: "Also descend from a coarse smoothing scale down to smoothing_eps",
    continuation_start_eps: "First smoothing scale of the continuation",
    continuation_factor: "Divisor between continuation stages",
    restarts: "Extra perturbed starts",
    restart_noise: "Amplitude of the restart perturbation",
    restart_seed: "Seed of the restart perturbation",
);

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Toy {
    Square,
    Ladder26,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the item-item graph of the whole dataset and write it as TSV
    BuildGraph {
        #[command(flatten)]
        cfg: Overrides,
        /// Graph file (default: <output_dir>/graph.tsv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split, build the training graph, predict, and write the report
    Evaluate {
        #[command(flatten)]
        cfg: Overrides,
        /// Score the methods on a toy fixture instead of a dataset
        #[arg(long)]
        toy: Option<Toy>,
    },
    /// Like evaluate, but dump every prediction
    Predict {
        #[command(flatten)]
        cfg: Overrides,
    },
    /// Histogram the observed second derivatives of the dataset
    Examine {
        #[command(flatten)]
        cfg: Overrides,
    },
    /// Print a per-node table for one method on a toy fixture
    Toy {
        #[arg(long, value_enum)]
        which: Toy,
        /// knn, hcp, sfr or l0_oracle
        #[arg(long, default_value = "sfr")]
        method: String,
        #[command(flatten)]
        cfg: Overrides,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be positive");
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::BuildGraph { cfg, out } => commands::build_graph(&cfg.resolve()?, out),
        Command::Evaluate { cfg, toy } => match toy {
            Some(t) => commands::evaluate_toy(&cfg.resolve()?, t == Toy::Ladder26),
            None => commands::evaluate(&cfg.resolve()?),
        },
        Command::Predict { cfg } => commands::predict(&cfg.resolve()?),
        Command::Examine { cfg } => commands::examine(&cfg.resolve()?),
        Command::Toy { which, method, cfg } => {
            let method = method.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
            commands::toy(&cfg.resolve()?, which == Toy::Ladder26, method)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
