use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stagelearn_core::dynamics::{best_reply_set, br_sequence, is_eta_nash, BrRule};
use stagelearn_core::game::{estimate_lipschitz, Lipschitz};
use stagelearn_core::{ActionDistribution, AnonymousGame, Game};

use crate::config::{Experiment, RawConfig};
use crate::error::{CliError, Result};
use crate::output::{atomic_write, br_sequence_csv, gnuplot_columns, read_aggregate, RunSummary};
use crate::runner::run_experiment;

#[derive(Debug, Parser)]
#[command(
    name = "stagelearn",
    version,
    about = "Learning dynamics in large anonymous games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (learner, n, seed) point of a config.
    Run(RunArgs),
    /// Like `run`, with the sweep axes given on the command line.
    Sweep(SweepArgs),
    /// Best-reply sequences, eta-Nash checks and Lipschitz estimates.
    Analyze(AnalyzeArgs),
    /// Turn an aggregate.csv into whitespace columns for gnuplot.
    Columns(ColumnsArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; without it only the summary table is printed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Population sizes, e.g. 2,10,100.
    #[arg(long)]
    n: Option<String>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// Learner kinds, e.g. stage,regret.
    #[arg(long)]
    learners: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Analysis {
    Brs,
    Nash,
    Lipschitz,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Uniform,
    Pointmass,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    mode: Analysis,
    /// Take the game from a config file instead of --game.
    #[arg(long, conflicts_with_all = ["game", "matrix", "penalty_n"])]
    config: Option<PathBuf>,
    /// contribution, pd, climbing or matrix (with --matrix).
    #[arg(long, default_value = "contribution")]
    game: String,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    penalty_n: Option<u32>,
    /// Distribution as comma-separated weights; defaults to uniform.
    #[arg(long, conflicts_with = "pure")]
    rho: Option<String>,
    /// Degenerate distribution on this action.
    #[arg(long)]
    pure: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    rule: RuleArg,
    #[arg(long, default_value_t = 50)]
    max_steps: usize,
    /// Sample points for the Lipschitz estimate.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the best-reply sequence as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ColumnsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match dispatch(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stagelearn: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Run(args) => {
            let experiment = load(&args, &[])?;
            execute(&experiment, &args, out)
        }
        Command::Sweep(args) => {
            let mut extra = Vec::new();
            if let Some(n) = &args.n {
                extra.push(("sweep.n", n.clone()));
            }
            if let Some(s) = args.seeds {
                extra.push(("sweep.seeds", s.to_string()));
            }
            if let Some(l) = &args.learners {
                extra.push(("sweep.learners", l.clone()));
            }
            let experiment = load(&args.run, &extra)?;
            execute(&experiment, &args.run, out)
        }
        Command::Analyze(args) => analyze(&args, out),
        Command::Columns(args) => {
            let rows = read_aggregate(&args.input)?;
            let text = gnuplot_columns(&rows);
            match &args.out {
                Some(path) => atomic_write(path, text.as_bytes()),
                None => out
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::io("<stdout>", e)),
            }
        }
    }
}

fn load(args: &RunArgs, extra: &[(&str, String)]) -> Result<Experiment> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::read(path)?,
        None => RawConfig::default(),
    };
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::config(item.as_str(), "expected KEY=VALUE"))?;
        raw.set(k.trim(), v.trim())?;
    }
    for (k, v) in extra {
        // A seed list in the file would clash with a seed count given here.
        if *k == "sweep.seeds" && raw.get("sweep.seed_list").is_some() {
            return Err(CliError::config(
                "sweep.seed_list",
                "conflicts with --seeds",
            ));
        }
        raw.set(k, v)?;
    }
    if let Some(seed) = args.seed {
        raw.set("sim.seed", &seed.to_string())?;
    }
    raw.resolve()
}

fn execute(experiment: &Experiment, args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let results = run_experiment(experiment, args.threads, args.out.as_deref())?;
    print_table(experiment, &results, out).map_err(|e| CliError::io("<stdout>", e))?;
    if let Some(dir) = &args.out {
        writeln!(out, "wrote {} runs to {}", results.len(), dir.display())
            .map_err(|e| CliError::io("<stdout>", e))?;
    }
    Ok(())
}

fn print_table(
    experiment: &Experiment,
    results: &[RunSummary],
    out: &mut dyn Write,
) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<8} {:>6} {:>6} {:>14} {:>12} {:>12}",
        "learner", "n", "seeds", "final_dist", "br_fraction", "converged"
    )?;
    let per_group = experiment.seeds.len();
    for group in results.chunks(per_group) {
        let first = &group[0];
        let get = |k: &str| {
            first
                .echo
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| v.as_str())
                .unwrap_or("")
        };
        let m = group.len() as f64;
        let dist = group.iter().map(|r| r.final_stage().distance).sum::<f64>() / m;
        let br = group
            .iter()
            .map(|r| r.final_stage().br_fraction)
            .sum::<f64>()
            / m;
        let converged = group
            .iter()
            .filter(|r| r.convergence_round.is_some())
            .count();
        writeln!(
            out,
            "{:<8} {:>6} {:>6} {:>14.4} {:>12.4} {:>12}",
            get("learner.kind"),
            get("sim.n"),
            group.len(),
            dist,
            br,
            format!("{converged}/{}", group.len())
        )?;
    }
    Ok(())
}

fn analysis_game(args: &AnalyzeArgs) -> Result<Game> {
    let raw = match &args.config {
        Some(path) => RawConfig::read(path)?,
        None => {
            let mut raw = RawConfig::default();
            raw.set("game.kind", &args.game)?;
            if let Some(p) = args.penalty_n {
                raw.set("game.penalty_n", &p.to_string())?;
            }
            if let Some(m) = &args.matrix {
                raw.set("game.matrix_file", &m.display().to_string())?;
            }
            raw
        }
    };
    Ok(raw.resolve()?.base.build_game()?)
}

fn parse_rho(args: &AnalyzeArgs, k: usize) -> Result<ActionDistribution> {
    if let Some(a) = args.pure {
        return ActionDistribution::degenerate(k, a)
            .map_err(|e| CliError::config("--pure", e.to_string()));
    }
    match &args.rho {
        None => Ok(ActionDistribution::uniform(k)),
        Some(text) => {
            let weights = text
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::config("--rho", format!("cannot parse `{t}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if weights.len() != k {
                return Err(CliError::config(
                    "--rho",
                    format!("need {k} weights, got {}", weights.len()),
                ));
            }
            ActionDistribution::new(weights).map_err(|e| CliError::config("--rho", e.to_string()))
        }
    }
}

fn show(rho: &ActionDistribution) -> String {
    rho.weights()
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| format!("{a}:{w:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let game = analysis_game(args)?;
    let k = game.num_actions();
    let rho = parse_rho(args, k)?;
    let io = |e| CliError::io("<stdout>", e);
    match args.mode {
        Analysis::Brs => {
            let rule = match args.rule {
                RuleArg::Uniform => BrRule::Uniform,
                RuleArg::Pointmass => BrRule::PointMass,
            };
            let seq = br_sequence(&rho, args.eta, &game, args.max_steps, rule)?;
            for (t, step) in seq.steps.iter().enumerate() {
                writeln!(out, "step {t}: {}", show(step)).map_err(io)?;
            }
            match seq.fixed_point() {
                Some(fp) => writeln!(
                    out,
                    "fixed point at step {}: {}",
                    seq.fixed_point_index.unwrap(),
                    show(fp)
                ),
                None => writeln!(out, "no fixed point within {} steps", args.max_steps),
            }
            .map_err(io)?;
            if let Some(path) = &args.out {
                let echo = vec![
                    ("eta", args.eta.to_string()),
                    ("rule", format!("{:?}", args.rule).to_lowercase()),
                    ("max_steps", args.max_steps.to_string()),
                ];
                atomic_write(path, &br_sequence_csv(&seq, &echo))?;
            }
        }
        Analysis::Nash => {
            let nash = is_eta_nash(&rho, args.eta, &game)?;
            let replies = best_reply_set(&rho, args.eta, &game)?;
            let payoffs: Vec<f64> = (0..k).map(|a| game.expected_payoff(a, &rho)).collect();
            let best = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gap = rho
                .support()
                .iter()
                .map(|&a| best - payoffs[a])
                .fold(0.0, f64::max);
            writeln!(out, "distribution: {}", show(&rho)).map_err(io)?;
            writeln!(out, "best replies (eta = {}): {:?}", args.eta, replies).map_err(io)?;
            writeln!(out, "largest gap in support: {gap}").map_err(io)?;
            writeln!(out, "eta-nash: {nash}").map_err(io)?;
        }
        Analysis::Lipschitz => {
            let estimate = estimate_lipschitz(&game, args.samples, args.seed)?;
            match game.lipschitz() {
                Lipschitz::Known(b) => writeln!(out, "analytic bound: {b}"),
                Lipschitz::Estimated => writeln!(out, "analytic bound: none"),
            }
            .map_err(io)?;
            writeln!(out, "estimate ({} samples): {estimate}", args.samples).map_err(io)?;
        }
    }
    Ok(())
}

/// Runs the CLI in-process with output going to `out`; used by tests.
pub fn run_to<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli =
        Cli::try_parse_from(args).map_err(|e| CliError::config("arguments", e.to_string()))?;
    dispatch(cli.command, out)
}
