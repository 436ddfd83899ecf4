//! Command-line front end: scenario runs, fuzzing, lemma enumeration,
//! trace replay and dag export.
//!
//! Exit codes: 0 all checks pass, 1 usage or parse error, 2 oracle
//! violation (or determinism mismatch on replay), 3 liveness failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use permitbft::harness::{self, FuzzConfig, ReplayOutcome};
use permitbft::liveness::check_three_consecutive;
use permitbft::scenario::Scenario;

#[derive(Parser)]
#[command(name = "permitbft", version, about = "Permit-driven BFT consensus simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario with the runtime oracle armed.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed (PERMITBFT_SEED also works).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the machine-readable report here (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write latency-vs-seed plot data here.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Write the final global dag export here.
        #[arg(long)]
        export_dag: Option<PathBuf>,
    },
    /// Run many generated adversarial scenarios and count oracle violations.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// Master seed for scenario generation.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker threads (defaults to the rayon global pool).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Enumerate byzantine placements on the creator circle and verify that
    /// three consecutive honest creators exist within n+2 rounds.
    CheckLemmaB5 {
        /// Check n in {4, 7, 10, 13} up to this bound.
        #[arg(long, default_value_t = 13)]
        max_n: u32,
    },
    /// Re-run the (scenario, seed) recorded in a trace and compare digests.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario and export the final global dag (and ledger dump).
    ExportDag {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Dag export path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the ledger dump here.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit(2); the contract reserves 2 for violations
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("PERMITBFT_SEED").ok().and_then(|s| s.parse().ok())
}

fn load(path: &PathBuf) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn write_report(reports: &[harness::RunReport], format: Format, path: &Option<PathBuf>) -> Result<()> {
    let text = match format {
        Format::Json => harness::report_json(reports),
        Format::Csv => harness::report_csv(reports),
    };
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            trace,
            report,
            format,
            plot,
            export_dag,
        } => {
            let sc = load(&scenario)?;
            let seed = seed.or_else(env_seed);
            let keep_trace = trace.is_some();
            let out = harness::run_scenario(&sc, seed, keep_trace);
            if let (Some(path), Some(text)) = (&trace, &out.trace_text) {
                std::fs::write(path, text)?;
            }
            if let Some(path) = &export_dag {
                std::fs::write(path, &out.dag_export)?;
            }
            let reports = vec![harness::build_report(&sc, &out)];
            write_report(&reports, format, &report)?;
            if let Some(path) = &plot {
                std::fs::write(path, harness::plot_data(&reports))?;
            }
            let r = &reports[0];
            eprintln!(
                "run {}: seed={} events={} blocks={} committed={} trace={}",
                r.name, r.seed, r.events, r.blocks, r.committed_txs, r.trace_digest
            );
            if let Some(v) = &r.violation {
                eprintln!("ORACLE VIOLATION: {v}");
                for line in &r.violation_context {
                    eprintln!("  | {line}");
                }
                return Ok(ExitCode::from(2));
            }
            if let Some(l) = &r.liveness {
                if !l.ok {
                    eprintln!("LIVENESS FAILURE: {l:?}");
                    return Ok(ExitCode::from(3));
                }
                eprintln!(
                    "liveness: first commit in round {:?} (deadline {} rounds), {} unified rounds checked",
                    l.first_commit_round, l.deadline_rounds, l.unified_rounds_checked
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Fuzz {
            runs,
            seed,
            jobs,
            report,
            format,
            plot,
        } => {
            let seed = env_seed().unwrap_or(seed);
            let (summary, reports) = harness::fuzz(&FuzzConfig {
                runs,
                master_seed: seed,
                jobs,
            });
            if report.is_some() {
                write_report(&reports, format, &report)?;
            }
            if let Some(path) = &plot {
                std::fs::write(path, harness::plot_data(&reports))?;
            }
            eprintln!(
                "fuzz: {} runs, {} violations, {} blocks, {} committed txs, {} frozen refs",
                summary.runs,
                summary.violations.len(),
                summary.total_blocks,
                summary.total_committed_txs,
                summary.total_frozen_refs
            );
            for v in &summary.violations {
                eprintln!(
                    "violation in run {} ({} seed {}): {}",
                    v.index, v.scenario_name, v.seed, v.detail
                );
            }
            if summary.violations.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Cmd::CheckLemmaB5 { max_n } => {
            let mut all = true;
            for (n, f) in [(4u32, 1u32), (7, 2), (10, 3), (13, 4)] {
                if n > max_n {
                    continue;
                }
                let r = check_three_consecutive(n, f);
                println!(
                    "n={} f={}: {}/{} placements have 3 consecutive honest creators within n+2 rounds (worst window {})",
                    r.n, r.f, r.passing, r.placements, r.worst_window
                );
                all &= r.all_pass;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Cmd::Replay { trace, scenario } => {
            let sc = load(&scenario)?;
            let text = std::fs::read_to_string(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            match harness::replay(&sc, &text) {
                ReplayOutcome::Match => {
                    eprintln!("replay: trace digests match");
                    Ok(ExitCode::SUCCESS)
                }
                ReplayOutcome::Mismatch { recorded, replayed } => {
                    eprintln!("replay: MISMATCH recorded={recorded} replayed={replayed}");
                    Ok(ExitCode::from(2))
                }
                ReplayOutcome::WrongScenario { header, loaded } => {
                    bail!("trace was recorded for scenario {header}, not {loaded}")
                }
            }
        }
        Cmd::ExportDag {
            scenario,
            seed,
            out,
            ledger,
        } => {
            let sc = load(&scenario)?;
            let seed = seed.or_else(env_seed);
            let run = harness::run_scenario(&sc, seed, false);
            match &out {
                Some(p) => std::fs::write(p, &run.dag_export)?,
                None => print!("{}", run.dag_export),
            }
            if let Some(p) = &ledger {
                std::fs::write(p, &run.ledger_dump)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
