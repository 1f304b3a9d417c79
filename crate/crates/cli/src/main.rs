use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use refract_cli::run::{self, Overrides};

const DEFAULTS_HELP: &str = "\
Configuration file: sectioned key = value text. Sections and defaults:

  [model]       name (required: gbm | verhulst_pearl), mu/gamma/sigma (per
                family), domain_cap = 1000, exploratory = false
  [reward]      name = power, kappa = 1, p = 0.5, c1 (required), c2 (required)
  [solver]      x_tol = 1e-10, newton_polish = true, force = false
  [grid]        hjb_points = 2001, hjb_lo/hjb_hi (default a*/2 and 2 b*),
                sweep_a_count = 64, sweep_b_count = 64, sweep_lo/sweep_hi
                (default a*/2 and 2 b*)
  [sim]         x0 = 1, dt = 0.001, horizon = 20000, burn_in_fraction = 0.1,
                n_batches = 20, seed = 42, thin_every = 0, replications = 4,
                barrier_a/barrier_b (default: solved optimum),
                one_sided = false, one_sided_barrier (default: solved a*)
  [discounted]  rs = 0.2, 0.1, 0.05, 0.02; x_eval = 1
  [output]      dir = out, precision = 12

Environment: REFRACT_LOG controls log verbosity (error|warn|info|debug).
Exit codes: 0 success, 1 solver/verification failure, 2 configuration error.";

/// Two-sided reflection barriers for ergodic singular control: solve,
/// certify, simulate, and take the vanishing-discount limit.
#[derive(Parser)]
#[command(name = "refract", version, after_long_help = DEFAULTS_HELP, after_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the simulation seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run the solver even when the shape assumptions fail
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the model assumptions and report flags with witnesses
    Check(RunArgs),
    /// Solve for the optimal barriers (a*, b*) and lambda*
    Solve(RunArgs),
    /// Build and verify the HJB certificate on a grid
    Hjb(RunArgs),
    /// Monte Carlo estimate of the long-run reward under reflection
    Simulate(RunArgs),
    /// Solve the discounted free boundary for each configured rate
    Discounted(RunArgs),
    /// Vanishing-discount sweep toward the ergodic value
    Abelian(RunArgs),
    /// Tabulate lambda(a, b) over barrier grids
    Sweep(RunArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("REFRACT_LOG")).init();
    let cli = Cli::parse();
    let (sub, args) = match &cli.command {
        Cmd::Check(a) => (run::Subcommand::Check, a),
        Cmd::Solve(a) => (run::Subcommand::Solve, a),
        Cmd::Hjb(a) => (run::Subcommand::Hjb, a),
        Cmd::Simulate(a) => (run::Subcommand::Simulate, a),
        Cmd::Discounted(a) => (run::Subcommand::Discounted, a),
        Cmd::Abelian(a) => (run::Subcommand::Abelian, a),
        Cmd::Sweep(a) => (run::Subcommand::Sweep, a),
    };
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        force: args.force,
    };
    std::process::exit(run::run(sub, &args.config, &overrides));
}
