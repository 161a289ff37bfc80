//! `bargw`: simulate lineage forests, estimate, test, and run studies.
//!
//! Exit codes: 0 on success, 2 for malformed input or usage, 3 when the
//! statistics are undefined on the given data.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use bargw_core::io::{
    read_lineage, read_params, read_study_config, run_tests, write_json, write_lineage, write_study, TestOutcome,
};
use bargw_core::montecarlo::StudyConfig;
use bargw_core::{analyze, run_power_study, run_rate_study, simulate_forest, Error, StdErrorRule, TestKind};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bargw", version, about = "Bifurcating autoregressive processes on lineage forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Marginal,
    MatrixSqrtDiagonal,
}

impl From<Rule> for StdErrorRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Marginal => StdErrorRule::Marginal,
            Rule::MatrixSqrtDiagonal => StdErrorRule::MatrixSqrtDiagonal,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a forest and write it as a lineage CSV.
    Simulate {
        /// JSON parameter file.
        #[arg(long)]
        params: PathBuf,
        /// Number of trees.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate everything at generation `gens` and write a JSON report.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gens: u32,
        /// Test level; intervals have level 1 - level.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Rule::Marginal)]
        rule: Rule,
        /// Seed the data was simulated with, recorded in the report.
        #[arg(long)]
        seed: Option<u64>,
        /// Leave the timestamp out so identical inputs give identical bytes.
        #[arg(long)]
        deterministic: bool,
    },
    /// Run one test, or all of them, and print the results.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gens: u32,
        /// Test name (gw-mean, gw-vector, bar-coeffs, fixed-point, variance) or `all`.
        #[arg(long)]
        which: String,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rejection-rate study from a JSON config.
    Power(StudyArgs),
    /// Error-decay study from a JSON config.
    Rate(StudyArgs),
}

#[derive(clap::Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV with one row per set and generation.
    #[arg(long)]
    out: PathBuf,
    /// Per-set summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_degenerate() {
        ExitCode::from(3)
    } else {
        ExitCode::from(2)
    }
}

fn load_study(args: &StudyArgs) -> Result<StudyConfig, Error> {
    let mut cfg = read_study_config(&args.config)?;
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_outcome(o: &TestOutcome) {
    match (&o.result, &o.error) {
        (Some(r), _) => println!(
            "{:<12} statistic={} df={} p_value={} reject={}",
            o.which.name(),
            r.statistic,
            r.df,
            r.p_value,
            o.reject.unwrap_or(false)
        ),
        (None, Some(e)) => println!("{:<12} undefined: {e}", o.which.name()),
        (None, None) => println!("{:<12} undefined", o.which.name()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate {
            params,
            m,
            depth,
            seed,
            out,
        } => {
            let p = read_params(&params)?.resolve()?;
            let forest = simulate_forest(&p.law, &p.bar, &p.noise, &p.root, m, depth, seed)?;
            write_lineage(&forest, &out)?;
        }
        Command::Estimate {
            data,
            gens,
            level,
            out,
            rule,
            seed,
            deterministic,
        } => {
            let forest = read_lineage(&data)?;
            let mut report = analyze(&forest, gens, level, rule.into())?;
            report.metadata.seed = seed;
            if !deterministic {
                report.metadata.generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
            }
            write_json(&report, &out)?;
        }
        Command::Test {
            data,
            gens,
            which,
            level,
            out,
        } => {
            let kinds: Vec<TestKind> = if which == "all" {
                TestKind::ALL.to_vec()
            } else {
                vec![which.parse()?]
            };
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidArgument(format!("level {level} is not in (0, 1)")));
            }
            let forest = read_lineage(&data)?;
            let outcomes = run_tests(&forest, gens, level, &kinds)?;
            for o in &outcomes {
                print_outcome(o);
            }
            if let Some(path) = out {
                write_json(&outcomes, path)?;
            }
            if outcomes.iter().any(|o| o.error.is_some()) {
                let degenerate = outcomes.iter().all(|o| o.error.is_none() || o.degenerate);
                return Ok(ExitCode::from(if degenerate { 3 } else { 2 }));
            }
        }
        Command::Power(args) => {
            let cfg = load_study(&args)?;
            let res = run_power_study(&cfg)?;
            write_study(&res, &args.out, args.summary.as_deref())?;
        }
        Command::Rate(args) => {
            let cfg = load_study(&args)?;
            let res = run_rate_study(&cfg)?;
            write_study(&res, &args.out, args.summary.as_deref())?;
            for s in &res.sets {
                match s.slope {
                    Some(v) => println!("set {:>2}: slope {v:.4}, -ln(pi)/2 = {:.4}", s.set, s.reference_slope),
                    None => println!(
                        "set {:>2}: no slope ({})",
                        s.set,
                        s.slope_note.as_deref().unwrap_or("unknown")
                    ),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
