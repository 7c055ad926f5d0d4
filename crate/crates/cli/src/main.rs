use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use entitle::infinite::{self, PlayerStream, TailRule, ValuationRule};
use entitle::io::format::{read_file, write_file};
use entitle::io::{self, Algorithm, EntitlementMode, InstanceFile, ReportFile, Verdict};
use entitle::strong::Inner;
use entitle::{Allocation, Error, Instance, Piece, QueryLedger, Tolerances};

const EXIT_VIOLATION: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "entitle",
    version,
    about = "Fair cake division with unequal entitlements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Algo1,
    Algo2,
    Cloning,
    Strong,
    Infinite,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Algo1,
    Algo2,
    Cloning,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rational,
    Irrational,
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Divide the cake and write a report.
    Solve {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// Instance file. For `infinite` its valuations are cycled through.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the solver trace here instead of embedding it in the report.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Fair-division routine used by `strong`.
        #[arg(long, value_enum, default_value = "algo2")]
        inner: InnerArg,
        /// Truncation depth for `infinite`.
        #[arg(long, default_value_t = 10)]
        depth: usize,
        /// Strictly fair shares for `infinite`.
        #[arg(long)]
        strict: bool,
        /// Entitlement stream for `infinite`: geometric:r=R, zeta2 or prefix:T0,T1,..:r=R.
        #[arg(long, default_value = "geometric:r=0.5")]
        stream: String,
        /// Valuations for `infinite` without `--in`: uniform or seeded:SEED[:BREAKPOINTS].
        #[arg(long, default_value = "uniform")]
        valuations: String,
    },
    /// Check an allocation against an instance.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Report file written by `solve`.
        #[arg(long)]
        alloc: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Write a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mixed")]
        mode: ModeArg,
        #[arg(long, default_value_t = 12)]
        breakpoints: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every applicable solver on every instance in a directory.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Violation(String),
    Failed(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Failed(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(summary)) => {
            eprintln!("violation: {summary}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_INTERNAL
            })
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve {
            algo,
            input,
            out,
            trace,
            max_rounds,
            inner,
            depth,
            strict,
            stream,
            valuations,
        } => {
            let report = match algo {
                AlgoArg::Infinite => {
                    solve_infinite(input.as_deref(), depth, strict, &stream, &valuations)?
                }
                _ => {
                    let input = input
                        .ok_or_else(|| Error::input("--in", "an instance file is required"))?;
                    let instance = io::parse_instance(&input)?;
                    let algorithm = match algo {
                        AlgoArg::Algo1 => Algorithm::Algo1,
                        AlgoArg::Algo2 => Algorithm::Algo2 { max_rounds },
                        AlgoArg::Cloning => Algorithm::Cloning,
                        AlgoArg::Strong => Algorithm::Strong {
                            inner: match inner {
                                InnerArg::Algo1 => Inner::AlgorithmOne,
                                InnerArg::Algo2 => Inner::AlgorithmTwo { max_rounds },
                                InnerArg::Cloning => Inner::Cloning,
                            },
                        },
                        AlgoArg::Infinite => unreachable!(),
                    };
                    solve_finite(&instance, algorithm)?
                }
            };
            emit_report(report, out.as_deref(), trace.as_deref())
        }
        Command::Verify {
            input,
            alloc,
            strict,
        } => {
            let instance = io::parse_instance(&input)?;
            let report = ReportFile::from_json_str(&read_file(&alloc)?).map_err(|e| match e {
                Error::Input { message, .. } => Error::input(alloc.display().to_string(), message),
                other => other,
            })?;
            let verdict = io::verify(&instance, &report.pieces(), strict);
            println!(
                "{}",
                serde_json::to_string_pretty(&verdict).expect("verdicts serialize")
            );
            check(&verdict)
        }
        Command::Gen {
            n,
            seed,
            mode,
            breakpoints,
            out,
        } => {
            if n == 0 {
                return Err(Error::input("--n", "at least one player is required").into());
            }
            let mode = match mode {
                ModeArg::Rational => EntitlementMode::Rational,
                ModeArg::Irrational => EntitlementMode::Irrational,
                ModeArg::Mixed => EntitlementMode::Mixed,
            };
            let text = io::generate_instance(n, seed, mode, breakpoints).to_json_string();
            match out {
                Some(path) => write_file(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Bench { suite, out } => bench(&suite, &out),
    }
}

fn check(verdict: &Verdict) -> Result<(), Failure> {
    match verdict {
        Verdict::Violation { problems } => Err(Failure::Violation(problems.join("; "))),
        _ => Ok(()),
    }
}

fn solve_finite(instance: &Instance, algorithm: Algorithm) -> Result<ReportFile, Failure> {
    let solution = io::solve(instance, algorithm)?;
    let verdict = io::verify(
        instance,
        solution.allocation.pieces(),
        algorithm.is_strict(),
    );
    let params = serde_json::to_value(algorithm).expect("algorithms serialize");
    let trace = (!solution.trace.is_null()).then_some(solution.trace);
    Ok(ReportFile::new(
        algorithm.name(),
        params,
        &solution.allocation,
        solution.ledger,
        trace,
        verdict,
    ))
}

fn parse_valuation_rule(text: &str) -> Result<ValuationRule, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let number = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| Error::input("--valuations", format!("`{s}` is not a number")))
    };
    match parts.as_slice() {
        ["uniform"] => Ok(ValuationRule::Uniform),
        ["seeded", seed] => Ok(ValuationRule::Seeded {
            seed: number(seed)?,
            breakpoint_budget: 12,
        }),
        ["seeded", seed, budget] => Ok(ValuationRule::Seeded {
            seed: number(seed)?,
            breakpoint_budget: number(budget)? as usize,
        }),
        _ => Err(Error::input(
            "--valuations",
            format!("unknown valuation rule `{text}`"),
        )),
    }
}

fn solve_infinite(
    input: Option<&Path>,
    depth: usize,
    strict: bool,
    stream: &str,
    valuations: &str,
) -> Result<ReportFile, Failure> {
    let tail: TailRule = stream
        .parse()
        .map_err(|e: Error| Error::input("--stream", e.to_string()))?;
    let (rule, tol) = match input {
        Some(path) => {
            let instance = io::parse_instance(path)?;
            let rule = ValuationRule::Cycle {
                valuations: instance.valuations().to_vec(),
            };
            (rule, *instance.tolerances())
        }
        None => (parse_valuation_rule(valuations)?, Tolerances::default()),
    };
    let stream = PlayerStream::new(tail, rule)?;
    let mut ledger = QueryLedger::new(depth + 1);
    let run =
        infinite::truncated_infinite_division_traced(&stream, depth, strict, &mut ledger, &tol)?;

    let vals: Vec<_> = (0..=depth)
        .map(|i| stream.valuation(i))
        .collect::<Result<_, _>>()?;
    let targets: Vec<f64> = run
        .certificate
        .entries
        .iter()
        .map(|e| if strict { e.entitlement } else { e.scaled })
        .collect();
    let allocation = Allocation::evaluate(&vals, &targets, &Piece::full(), run.pieces.clone());
    let verdict = io::verify_allocation(&vals, &targets, &run.pieces, &Piece::full(), strict, &tol);
    let params = json!({ "depth": depth, "strict": strict, "stream": stream.tail.to_string() });
    let trace =
        json!({ "certificate": run.certificate, "branches": run.branches, "plan": run.plan });
    Ok(ReportFile::new(
        "infinite",
        params,
        &allocation,
        ledger,
        Some(trace),
        verdict,
    ))
}

fn emit_report(
    mut report: ReportFile,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    if let Some(path) = trace {
        let body = report.trace.take().unwrap_or(serde_json::Value::Null);
        write_file(
            path,
            &(serde_json::to_string_pretty(&body).expect("traces serialize") + "\n"),
        )?;
    }
    let text = report.to_json_string();
    match out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    check(&report.verdict)
}

struct BenchRow {
    seed: String,
    n: usize,
    algo: &'static str,
    rounds: String,
    evals: String,
    cuts: String,
    min_slack: String,
    wall_ms: f64,
}

fn bench(suite: &Path, out: &Path) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(suite)
        .map_err(|source| Error::Io {
            path: suite.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();

    let mut jobs = Vec::new();
    for path in &files {
        let text = read_file(path)?;
        let file = InstanceFile::from_json_str(&text)?;
        let instance = file.to_instance()?;
        let mut algorithms = vec![Algorithm::Algo1, Algorithm::Algo2 { max_rounds: None }];
        if instance.all_exact().is_some() {
            algorithms.push(Algorithm::Cloning);
        }
        if instance.len() > 1 {
            algorithms.push(Algorithm::Strong {
                inner: Inner::AlgorithmTwo { max_rounds: None },
            });
        }
        for algorithm in algorithms {
            jobs.push((file.seed, instance.clone(), algorithm));
        }
    }

    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|(seed, instance, algorithm)| {
            let start = Instant::now();
            let result = io::solve(instance, *algorithm);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let seed = seed.map_or_else(String::new, |s| s.to_string());
            match result {
                Ok(solution) => BenchRow {
                    seed,
                    n: instance.len(),
                    algo: algorithm.name(),
                    rounds: solution.rounds.to_string(),
                    evals: solution.ledger.total_evals().to_string(),
                    cuts: solution.ledger.total_cuts().to_string(),
                    min_slack: format!("{:e}", solution.allocation.min_slack()),
                    wall_ms,
                },
                Err(e) => BenchRow {
                    seed,
                    n: instance.len(),
                    algo: algorithm.name(),
                    rounds: String::new(),
                    evals: String::new(),
                    cuts: String::new(),
                    min_slack: format!("error: {e}"),
                    wall_ms,
                },
            }
        })
        .collect();

    let mut writer = csv::Writer::from_path(out)
        .map_err(|e| Error::input(out.display().to_string(), e.to_string()))?;
    let csv_error = |e: csv::Error| Error::input(out.display().to_string(), e.to_string());
    writer
        .write_record([
            "seed",
            "n",
            "algo",
            "rounds",
            "evals",
            "cuts",
            "min_slack",
            "wall_ms",
        ])
        .map_err(csv_error)?;
    for row in &rows {
        writer
            .write_record([
                row.seed.as_str(),
                &row.n.to_string(),
                row.algo,
                &row.rounds,
                &row.evals,
                &row.cuts,
                &row.min_slack,
                &format!("{:.3}", row.wall_ms),
            ])
            .map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    eprintln!(
        "{} runs over {} instances written to {}",
        rows.len(),
        files.len(),
        out.display()
    );
    Ok(())
}
