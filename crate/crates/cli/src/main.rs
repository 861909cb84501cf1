//! Argument parsing for the `hyperplan` binary; all behavior lives in the
//! library so tests can drive commands in-process.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hyperplan::{run, Command, RunConfig};
use hyperplan_core::encoding::Variant;
use hyperplan_core::solver::SolverChoice;

#[derive(Parser)]
#[command(
    name = "hyperplan",
    version,
    about = "Verify temporal properties relating multiple executions of a \
             finite-state system by compilation to non-deterministic planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode, solve, and independently validate; prints VERIFIED or NO PLAN
    Verify(Common),
    /// Write the explicit and factored planning encodings as JSON
    Encode(Common),
    /// Write the planning problem as FOND PDDL (domain, problem, manifest)
    EmitPddl(Common),
    /// Validate a controller produced elsewhere against the formula
    Check(CheckArgs),
}

#[derive(Args)]
struct Common {
    /// Transition system file
    #[arg(long)]
    ts: PathBuf,
    /// Formula file, or the formula text itself
    #[arg(long)]
    formula: String,
    /// Dualize every quantifier and negate the body before anything else
    #[arg(long)]
    negate: bool,
    /// Depth bound for witness validation
    #[arg(long, default_value_t = 10)]
    bound: usize,
    /// Planner to use (default: chosen from the quantifier prefix)
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Require the encoding variant to come out as safe or reach
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Directory receiving artifacts plus report.txt / report.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the human-readable one
    #[arg(long)]
    json: bool,
    /// Cap on automaton states
    #[arg(long, default_value_t = 10_000)]
    max_automaton_states: usize,
    /// Cap on explicit planning states
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
    /// Cap on belief states for partially observable solving
    #[arg(long, default_value_t = 1_000_000)]
    max_beliefs: usize,
    /// Cap on configurations explored by witness validation
    #[arg(long, default_value_t = 1_000_000)]
    max_configs: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Controller JSON to validate
    #[arg(long)]
    policy: PathBuf,
    /// Manifest translating PDDL action names in the controller
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Classical,
    Strong,
    StrongCyclic,
    Pond,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Safe,
    Reach,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, policy, manifest) = match cli.command {
        Cmd::Verify(c) => (Command::Verify, c, None, None),
        Cmd::Encode(c) => (Command::Encode, c, None, None),
        Cmd::EmitPddl(c) => (Command::EmitPddl, c, None, None),
        Cmd::Check(c) => (Command::Check, c.common, Some(c.policy), c.manifest),
    };
    let mut cfg = RunConfig::new(command, common.ts, common.formula);
    cfg.negate = common.negate;
    cfg.bound = common.bound;
    cfg.solver = match common.solver {
        None => SolverChoice::Auto,
        Some(SolverArg::Classical) => SolverChoice::Classical,
        Some(SolverArg::Strong) => SolverChoice::Strong,
        Some(SolverArg::StrongCyclic) => SolverChoice::StrongCyclic,
        Some(SolverArg::Pond) => SolverChoice::Pond,
    };
    cfg.expect_variant = common.variant.map(|v| match v {
        VariantArg::Safe => Variant::Safe,
        VariantArg::Reach => Variant::Reach,
    });
    cfg.out_dir = common.out;
    cfg.policy_path = policy;
    cfg.manifest_path = manifest;
    cfg.max_automaton_states = common.max_automaton_states;
    cfg.max_explicit_states = common.max_states;
    cfg.max_beliefs = common.max_beliefs;
    cfg.max_configs = common.max_configs;

    let outcome = run(&cfg);
    if common.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&outcome.json).expect("report serializes")
        );
    } else {
        print!("{}", outcome.human);
    }
    ExitCode::from(outcome.code.clamp(0, 255) as u8)
}
