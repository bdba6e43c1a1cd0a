//! Command-line driver: `run`, `estimate` and `scan` over a spec file.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when an
//! estimate does not converge or `--expect-match` finds nothing.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sscc::analysis::{
    estimate, scan, AgentPattern, AnalysisError, EstimateParams, Model, Observable, StatePredicate,
};
use sscc::constraints::SmtConfig;
use sscc::report;
use sscc::stochastic::Time;
use sscc::system::{parse_agent_id, parse_formula, parse_spec};

#[derive(Parser)]
#[command(
    name = "sscc",
    version,
    about = "Simulate and analyze stochastic spatial constraint programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write its trace and final state.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trace file (line-delimited JSON); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the expected value of an observable.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// `time`, `agents`, `holds:FORMULA` or `holds@AGENT:FORMULA`.
        #[arg(long, default_value = "time")]
        observable: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 30)]
        batch: usize,
        #[arg(long, default_value_t = 10_000)]
        max_samples: usize,
        /// Append a summary row to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a state predicate after every rule firing over several seeds.
    Scan {
        #[command(flatten)]
        common: Common,
        /// `inconsistent`, `entails:FORMULA` or `equivalent`.
        #[arg(long)]
        predicate: String,
        /// Number of consecutive seeds, starting at the spec's seed.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Exit with 2 when nothing matches.
        #[arg(long)]
        expect_match: bool,
    },
}

#[derive(Args)]
struct Common {
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the spec's maxtime.
    #[arg(long)]
    max_time: Option<String>,
    /// External SMT-LIB2 solver for formulas outside the built-in fragment.
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Give every watch move the same probability.
    #[arg(long)]
    uniform_watch: bool,
}

enum Failure {
    Usage(String),
    Unfinished(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::Usage(e.to_string())
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn load(common: &Common) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(&common.spec)
        .map_err(|e| usage(format!("{}: {e}", common.spec.display())))?;
    let mut spec =
        parse_spec(&text).map_err(|e| usage(format!("{}:{e}", common.spec.display())))?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(t) = &common.max_time {
        spec.max_time = Some(
            t.parse::<Time>()
                .map_err(|e| usage(format!("--max-time: {e}")))?,
        );
    }
    if spec.max_time.is_none() {
        return Err(usage("no maxtime in the spec; pass --max-time"));
    }
    let mut model = Model::new(spec);
    model.uniform_watch = common.uniform_watch;
    model.solver = common.solver.as_ref().map(SmtConfig::for_program);
    Ok(model)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_observable(text: &str) -> Result<Observable, Failure> {
    match text {
        "time" => Ok(Observable::ExecutionTime),
        "agents" => Ok(Observable::AgentCount),
        _ => {
            let rest = text
                .strip_prefix("holds")
                .ok_or_else(|| usage(format!("unknown observable `{text}`")))?;
            let (pattern, formula) = if let Some(f) = rest.strip_prefix(':') {
                (AgentPattern::Any, f)
            } else if let Some(at) = rest.strip_prefix('@') {
                let (aid, f) = at
                    .split_once(':')
                    .ok_or_else(|| usage("expected holds@AGENT:FORMULA"))?;
                (AgentPattern::Exact(parse_agent_id(aid).map_err(usage)?), f)
            } else {
                return Err(usage(format!("unknown observable `{text}`")));
            };
            Ok(Observable::StorePredicateHolds(
                pattern,
                parse_formula(formula).map_err(usage)?,
            ))
        }
    }
}

fn parse_predicate(text: &str) -> Result<StatePredicate, Failure> {
    match text {
        "inconsistent" => Ok(StatePredicate::InconsistentStore),
        "equivalent" => Ok(StatePredicate::EquivalentStores),
        _ => match text.strip_prefix("entails:") {
            Some(f) => Ok(StatePredicate::StoreEntails(
                parse_formula(f).map_err(usage)?,
            )),
            None => Err(usage(format!("unknown predicate `{text}`"))),
        },
    }
}

fn execute(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { common, out } => {
            let model = load(&common)?;
            let run = model.simulate(model.spec.seed).map_err(usage)?;
            let mut w = output(out.as_deref())?;
            report::write_run(&mut w, &run.trace, &run.final_state, run.termination)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Estimate {
            common,
            observable,
            alpha,
            delta,
            batch,
            max_samples,
            csv,
        } => {
            let model = load(&common)?;
            let obs = parse_observable(&observable)?;
            let params = EstimateParams {
                alpha,
                delta,
                batch,
                max_samples,
            };
            let started = Instant::now();
            let (result, converged) = match estimate(&model, &obs, params) {
                Ok(r) => (r, true),
                Err(AnalysisError::NotConverged(r)) => (*r, false),
                Err(e) => return Err(usage(e)),
            };
            let wall = started.elapsed().as_secs_f64();
            println!(
                "{}",
                report::estimation_record(&result, &observable, converged)
            );
            if let Some(path) = csv {
                let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
                if f.metadata()?.len() == 0 {
                    writeln!(f, "{}", report::CSV_HEADER)?;
                }
                writeln!(f, "{}", report::csv_row(&result, wall))?;
            }
            if converged {
                Ok(())
            } else {
                Err(Failure::Unfinished(format!(
                    "no convergence within {} samples (half width {})",
                    result.samples, result.half_width
                )))
            }
        }
        Cmd::Scan {
            common,
            predicate,
            runs,
            expect_match,
        } => {
            let model = load(&common)?;
            let pred = parse_predicate(&predicate)?;
            let seeds: Vec<u64> = (0..runs).map(|i| model.spec.seed.wrapping_add(i)).collect();
            let matches = scan(&model, &seeds, &pred).map_err(usage)?;
            let mut w = output(None)?;
            for m in &matches {
                writeln!(w, "{}", report::match_record(m))?;
            }
            w.flush()?;
            if expect_match && matches.is_empty() {
                return Err(Failure::Unfinished(format!(
                    "no state matched over {runs} seeds"
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Unfinished(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
