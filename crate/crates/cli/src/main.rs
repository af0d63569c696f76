//! `mdpif`: solve, index, rank, bound, and simulate the information-filtering MDP.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdpif::dp::BoundaryMode;
use mdpif::policy::{PolicyKind, SlotAllocation};
use mdpif::scenarios::Scenario;
use mdpif::sim::RewardMode;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mdpif", version, about = "Bayes-optimal information filtering with Lagrangian indices")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV outputs, the resolved run.toml, and manifest.json.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for solver sweeps and simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one category's forwarding problem at unit cost `--cost`.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compute the index table, or the indices of one state.
    Index {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Query a single state (requires --beta).
        #[arg(long, requires = "beta")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
    },
    /// Rank (category, slot) pairs of several categories by index.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Category posterior `ALPHA,BETA`; repeat per category.
        #[arg(long = "state", value_parser = parse_state)]
        states: Vec<(f64, f64)>,
        /// Two categories at (2,1) and (2,2) with gamma 0.99, xi 0.2, M 10.
        #[arg(long, conflicts_with = "states")]
        example: bool,
        /// Slots granted from the list.
        #[arg(long)]
        budget: Option<u32>,
    },
    /// Lagrangian upper bound of the budget-constrained problem.
    UpperBound {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Golden-section interval width.
        #[arg(long)]
        ub_tol: Option<f64>,
    },
    /// Compare policies by Monte Carlo simulation.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        users: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of mdp-if, ucb, exploit.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<PolicyKind>>,
        /// net or relevant_only.
        #[arg(long)]
        reward_mode: Option<RewardMode>,
        /// Skip queue-aware slot allocation: baselines fill categories in score
        /// order, MDP-IF grants its plain index ranking.
        #[arg(long)]
        naive_alloc: bool,
        /// Queue lengths from a shared exponential gap between visits.
        #[arg(long)]
        correlated_queues: bool,
        /// Extra lookahead depth for the MDP-IF index tables.
        #[arg(long)]
        table_margin: Option<u32>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Preset scenario a, b, c, or d.
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Queue parameter shared by every category.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    /// Unit forwarding cost.
    #[arg(long)]
    cost: Option<f64>,
    #[arg(long)]
    max_forward: Option<u32>,
    /// Category counts, comma-separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Drop the per-visit budget of M slots.
    #[arg(long)]
    no_budget: bool,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Truncation depth in observations.
    #[arg(long)]
    horizon: Option<u32>,
    /// safe or paper.
    #[arg(long)]
    boundary_mode: Option<BoundaryMode>,
    #[arg(long)]
    nu_step: Option<f64>,
    /// Refine indices by bisection to this tolerance.
    #[arg(long)]
    refine_tol: Option<f64>,
    /// Refine every state up to this depth (default: the root only).
    #[arg(long)]
    refine_depth: Option<usize>,
}

fn parse_state(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected ALPHA,BETA, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl ModelArgs {
    fn apply(&self, c: &mut RunConfig) {
        let m = &mut c.model;
        m.scenario = self.scenario;
        m.gamma = self.gamma;
        m.xi = self.xi;
        m.alpha0 = self.alpha0;
        m.beta0 = self.beta0;
        m.cost = self.cost;
        m.max_forward = self.max_forward;
        m.k = self.k.clone();
        if self.no_budget {
            m.budget = Some(false);
        }
    }
}

impl SolverArgs {
    fn apply(&self, c: &mut RunConfig) {
        let s = &mut c.solver;
        s.horizon = self.horizon;
        s.boundary_mode = self.boundary_mode;
        s.nu_step = self.nu_step;
        s.refine_tol = self.refine_tol;
        s.refine_depth = self.refine_depth;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = RunConfig::default();
    flags.output.dir = cli.out_dir.clone();
    flags.simulation.threads = cli.threads;
    let (model, solver) = match &cli.command {
        Command::Solve { model, solver }
        | Command::Index { model, solver, .. }
        | Command::Rank { model, solver, .. }
        | Command::UpperBound { model, solver, .. }
        | Command::Simulate { model, solver, .. } => (model, solver),
    };
    model.apply(&mut flags);
    solver.apply(&mut flags);
    if let Command::Rank { example: true, .. } = cli.command {
        use mdpif::scenarios::ranking_example as ex;
        let m = &mut flags.model;
        m.gamma.get_or_insert(ex::GAMMA);
        m.xi.get_or_insert(ex::XI);
        m.max_forward.get_or_insert(ex::MAX_FORWARD);
    }
    match &cli.command {
        Command::UpperBound { ub_tol, .. } => flags.solver.ub_tol = *ub_tol,
        Command::Simulate {
            users,
            seed,
            policies,
            reward_mode,
            naive_alloc,
            correlated_queues,
            table_margin,
            ..
        } => {
            let s = &mut flags.simulation;
            s.users = *users;
            s.seed = *seed;
            s.policies = policies.clone();
            s.reward_mode = *reward_mode;
            s.allocation = naive_alloc.then_some(SlotAllocation::Naive);
            s.correlated_queues = correlated_queues.then_some(true);
            s.table_margin = *table_margin;
        }
        _ => {}
    }
    let file = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let config = RunConfig::merged(flags, file).with_defaults();
    config.validate_solver()?;

    if let Some(n) = config.simulation.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }

    match cli.command {
        Command::Solve { .. } => commands::solve(&config),
        Command::Index { alpha, beta, .. } => commands::index(&config, alpha.zip(beta)),
        Command::Rank { states, example, budget, .. } => commands::rank(&config, &states, example, budget),
        Command::UpperBound { .. } => commands::upper_bound(&config),
        Command::Simulate { .. } => commands::simulate(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
