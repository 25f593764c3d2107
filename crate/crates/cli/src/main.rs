use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use genplan::abstraction::QnpModel;
use genplan::executor::{self, Verdict};
use genplan::pipeline::{self, PipelineConfig, Progress, Stage, ValidationVerdict};
use genplan::{features, fond, generators, strips};

/// Learn general policies from a few STRIPS instances.
#[derive(Parser)]
#[command(name = "genplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample transitions from the training instances.
    Sample(ConfigArgs),
    /// Generate the feature pool.
    Pool(ConfigArgs),
    /// Write the weighted Max-SAT theory.
    Encode(ConfigArgs),
    /// Solve the theory and print the selected features.
    Solve(ConfigArgs),
    /// Extract and verify the abstract actions.
    Extract(ConfigArgs),
    /// Solve the abstraction as a FOND problem.
    Plan(ConfigArgs),
    /// Run every stage and validate the policy.
    Pipeline(ConfigArgs),
    /// Run a learned policy on concrete instances.
    Execute(ExecuteArgs),
    /// Print the experiment table for one or more report.json files.
    Report {
        reports: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write random problem files of one of the bundled domains.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ExecuteArgs {
    #[arg(long)]
    domain: PathBuf,
    /// qnp.json written by the extract stage.
    #[arg(long)]
    qnp: PathBuf,
    /// policy.json written by the plan stage.
    #[arg(long)]
    policy: PathBuf,
    /// Problems whose goal predicates were used in training, needed only
    /// when the features mention `_g` predicates.
    #[arg(long)]
    goal_predicates: bool,
    /// Follow one trajectory with this seed instead of exploring all of them.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2_000_000)]
    limit: usize,
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    /// Directory for JSON traces and step logs.
    #[arg(long)]
    traces: Option<PathBuf>,
    problems: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Clear,
    On,
    Gripper,
    Reward,
}

#[derive(Args)]
struct GenerateArgs {
    family: Family,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smallest size: blocks, balls or grid side.
    #[arg(long)]
    min: Option<usize>,
    /// Largest size: blocks, balls or grid side.
    #[arg(long)]
    max: Option<usize>,
    /// Largest number of grippers.
    #[arg(long, default_value_t = 3)]
    grippers: usize,
    #[arg(long, default_value = "val")]
    prefix: String,
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run_stage(args: &ConfigArgs, stage: Stage) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let p = pipeline::run_until(&cfg, stage)?;
    print_progress(&cfg, &p, stage);
    Ok(ExitCode::SUCCESS)
}

fn print_progress(cfg: &PipelineConfig, p: &Progress, stage: Stage) {
    let s = &p.sample;
    println!(
        "sample: m={} |S|={} states={} expanded={} marked={} goal states={}",
        p.prefix_length,
        s.transitions.len(),
        s.states.len(),
        s.num_expanded(),
        s.marked().count(),
        s.num_goal_states()
    );
    if let Some(pool) = &p.pool {
        println!(
            "pool: {} features (k={})",
            pool.features.len(),
            cfg.max_complexity
        );
    }
    if let Some((v, c)) = p.theory_size {
        println!("theory: {v} variables, {c} clauses ({})", cfg.variant);
    }
    if let (Some(sol), Some(pool)) = (&p.solution, &p.pool) {
        println!("solution: cost {}", sol.cost);
        for &f in &sol.selected {
            println!("  {}  [cost {}]", pool.features[f], pool.features[f].cost);
        }
    }
    if let (Some(q), Some(v)) = (&p.qnp, &p.verify) {
        print!("{q}");
        println!("sound: {}  complete: {}", v.sound, v.complete);
    }
    if let (Some(sol), Some(q)) = (&p.policy, &p.qnp) {
        println!(
            "policy ({} rules, {} strong-cyclic policies examined):",
            sol.policy.len(),
            sol.enumerated
        );
        print!("{}", fond::policy_table(&sol.policy, q));
    }
    println!(
        "artifacts: {}  (stopped after {stage})",
        cfg.out_dir.display()
    );
}

fn run_pipeline(args: &ConfigArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let run = pipeline::run_pipeline(&cfg)?;
    print!("{}", run.qnp);
    print!("{}", fond::policy_table(&run.policy, &run.qnp));
    for v in &run.report.validation {
        let detail = v
            .outcome
            .clone()
            .or(v.sampled_outcome.clone())
            .unwrap_or_default();
        let warn = if v.initial_condition_holds {
            ""
        } else {
            "  (initial condition violated)"
        };
        println!(
            "{:<28} {:?} {} {}{}",
            v.instance, v.verdict, v.states, detail, warn
        );
    }
    print!(
        "{}",
        pipeline::report_table(std::slice::from_ref(&run.report))
    );
    Ok(verdict_code(
        run.report.validation.iter().map(|v| &v.verdict),
    ))
}

/// 0 when every run solves, 1 on any failure, 2 when only limits were hit.
fn verdict_code<'a>(verdicts: impl Iterator<Item = &'a ValidationVerdict>) -> ExitCode {
    let mut limit = false;
    for v in verdicts {
        match v {
            ValidationVerdict::Fails => return ExitCode::from(1),
            ValidationVerdict::LimitExceeded => limit = true,
            ValidationVerdict::Solves => {}
        }
    }
    if limit {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn execute(args: &ExecuteArgs) -> Result<ExitCode> {
    if args.problems.is_empty() {
        bail!("no problem files given");
    }
    let q = QnpModel::from_json(&read_json(&args.qnp)?)?;
    let policy = fond::policy_from_json(&read_json(&args.policy)?, &q)?;
    let domain_text = std::fs::read_to_string(&args.domain)
        .with_context(|| format!("reading {}", args.domain.display()))?;
    let base = strips::parse_domain(&domain_text)?;
    let problems = args
        .problems
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(strips::parse_problem(&text, &base)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let domain = if args.goal_predicates {
        features::add_goal_predicates(&base, &problems)
    } else {
        base
    };
    let mut verdicts = Vec::new();
    for (path, problem) in args.problems.iter().zip(&problems) {
        let inst = strips::ground(&domain, problem)?;
        if !executor::initial_condition_holds(&q, &inst) {
            eprintln!("warning: {} violates the abstract initial condition; the policy carries no guarantee there", inst.name);
        }
        let (verdict, trace) = match args.seed {
            Some(seed) => {
                let trace = executor::run_one(&inst, &policy, &q, seed, args.max_steps);
                let v = if trace.outcome == executor::Outcome::GoalReached {
                    ValidationVerdict::Solves
                } else {
                    ValidationVerdict::Fails
                };
                println!(
                    "{}: {:?} after {} steps",
                    path.display(),
                    trace.outcome,
                    trace.steps.len()
                );
                (v, Some(trace))
            }
            None => match executor::run_exhaustive(&inst, &policy, &q, args.limit) {
                Verdict::Solves { states } => {
                    println!("{}: solves ({states} states)", path.display());
                    (ValidationVerdict::Solves, None)
                }
                Verdict::Fails(trace) => {
                    println!(
                        "{}: fails with {:?} after {} steps",
                        path.display(),
                        trace.outcome,
                        trace.steps.len()
                    );
                    print!("{}", trace.log(&q, &inst));
                    (ValidationVerdict::Fails, Some(trace))
                }
                Verdict::LimitExceeded { limit } => {
                    println!("{}: limit of {limit} states exceeded", path.display());
                    (ValidationVerdict::LimitExceeded, None)
                }
            },
        };
        if let (Some(dir), Some(trace)) = (&args.traces, &trace) {
            std::fs::create_dir_all(dir)?;
            let json = serde_json::to_string_pretty(&trace.to_json(&q, &inst))?;
            std::fs::write(dir.join(format!("{}.json", inst.name)), json + "\n")?;
            std::fs::write(dir.join(format!("{}.log", inst.name)), trace.log(&q, &inst))?;
        }
        verdicts.push(verdict);
    }
    Ok(verdict_code(verdicts.iter()))
}

fn report(paths: &[PathBuf], json: bool) -> Result<ExitCode> {
    let runs = paths
        .iter()
        .map(|p| pipeline::load_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    if json {
        let all: Vec<serde_json::Value> = runs.iter().map(|r| r.to_json()).collect();
        println!("{}", serde_json::to_string_pretty(&all)?);
    } else {
        print!("{}", pipeline::report_table(&runs));
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(args: &GenerateArgs) -> Result<ExitCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (lo, hi) = match args.family {
        Family::Clear => (args.min.unwrap_or(3), args.max.unwrap_or(10)),
        Family::On => (args.min.unwrap_or(4), args.max.unwrap_or(8)),
        Family::Gripper => (args.min.unwrap_or(2), args.max.unwrap_or(12)),
        Family::Reward => (args.min.unwrap_or(3), args.max.unwrap_or(8)),
    };
    if lo > hi {
        bail!("--min exceeds --max");
    }
    std::fs::create_dir_all(&args.out)?;
    for i in 0..args.count {
        // Sizes sweep the range evenly.
        let size = if args.count > 1 {
            lo + (hi - lo) * i / (args.count - 1)
        } else {
            hi
        };
        let name = format!("{}-{:02}", args.prefix, i + 1);
        let problem = match args.family {
            Family::Clear => generators::clear_instance(&name, size, &mut rng),
            Family::On => generators::on_instance(&name, size, &mut rng),
            Family::Gripper => {
                generators::gripper_instance(&name, size, 1 + i % args.grippers.max(1))
            }
            Family::Reward => {
                let cells = size * size;
                let rewards = 1 + i % 4;
                let blocked = (cells / 5).min(cells.saturating_sub(rewards + 1)) * (i % 3) / 2;
                generators::reward_instance(&name, size, size, rewards, blocked, &mut rng)
            }
        };
        let path = args.out.join(format!("{name}.pddl"));
        std::fs::write(&path, generators::to_pddl(&problem))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(a) => run_stage(a, Stage::Sample),
        Command::Pool(a) => run_stage(a, Stage::Pool),
        Command::Encode(a) => run_stage(a, Stage::Encode),
        Command::Solve(a) => run_stage(a, Stage::Solve),
        Command::Extract(a) => run_stage(a, Stage::Extract),
        Command::Plan(a) => run_stage(a, Stage::Plan),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Execute(a) => execute(a),
        Command::Report { reports, json } => report(reports, *json),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
