//! Command-line entry point: run workloads, compare backends, run the
//! verification suites, re-render saved reports.
//!
//! Exit codes: 0 success, 1 workload abort or property violation,
//! 2 usage/config error.

mod output;

use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use elclave_core::verifier::{self, suites, Check, ExplorationConfig};
use elclave_core::workloads::{self, BackendKind, Pattern, RunReport, WorkloadSpec};

#[derive(Parser)]
#[command(name = "elclave", version, about = "Enclave memory-model harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Workload spec file (flat key = value lines); flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Data-sharing or synchronization pattern.
    #[arg(long)]
    pattern: Option<Pattern>,
    /// Shared-data size L in memory words.
    #[arg(long = "L", value_name = "WORDS")]
    l_words: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    /// Hold steps per lock acquisition (sync workloads).
    #[arg(long)]
    contention: Option<u64>,
    /// PRNG seed; falls back to $ELCLAVE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Total PMP entries (one stays reserved).
    #[arg(long)]
    pmp_total: Option<usize>,
    /// Require transfer targets to have the region mapped.
    #[arg(long, default_value_t = false)]
    strict_transfer_map: bool,
    /// Output format; defaults to table on a terminal, json when piped.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload on one backend and print its report.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "elasticlave")]
        backend: BackendKind,
    },
    /// Run one spec on all three backends and print a comparison.
    Compare {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Run verification suites or an exploration program file.
    Verify {
        /// Suites to run: properties, emulation, invariants.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        suite: Option<Vec<String>>,
        /// Exploration program file (line-oriented step list).
        #[arg(long)]
        program: Option<PathBuf>,
        /// Worker fan-out for the explorer.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Depth bound override for explorations.
        #[arg(long)]
        max_depth: Option<usize>,
        /// Fault injection for mutation smoke-testing
        /// (supported: no-change-lock-check).
        #[arg(long)]
        mutate: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-render a saved JSON report.
    Report {
        /// Path to a report produced by `run` with --format json.
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
    },
}

fn env_seed() -> u64 {
    std::env::var("ELCLAVE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn pick_format(requested: Option<Format>) -> Format {
    requested.unwrap_or(if std::io::stdout().is_terminal() {
        Format::Table
    } else {
        Format::Json
    })
}

/// Builds the workload spec from file and flags; flags win.
fn build_spec(args: &SpecArgs, backend: BackendKind) -> Result<WorkloadSpec, String> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            WorkloadSpec::from_kv_text(&text)?
        }
        None => {
            let pattern = args
                .pattern
                .ok_or("either --spec or --pattern is required")?;
            WorkloadSpec::new(pattern, backend)
        }
    };
    spec.backend = backend;
    if let Some(p) = args.pattern {
        spec.pattern = p;
    }
    if let Some(l) = args.l_words {
        spec.l_words = l;
    }
    if let Some(r) = args.rounds {
        spec.rounds = r;
    }
    if let Some(c) = args.contention {
        spec.contention = c;
    }
    spec.seed = args.seed.unwrap_or_else(env_seed);
    if let Some(p) = args.pmp_total {
        spec.pmp_total = p;
    }
    if args.strict_transfer_map {
        spec.strict_transfer_map = true;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { spec, backend } => {
            let format = pick_format(spec.format);
            let ws = build_spec(&spec, backend)?;
            match workloads::run(&ws) {
                Ok(report) => {
                    output::print_report(&report, format);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("workload aborted: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Compare { spec } => {
            let format = pick_format(spec.format);
            let mut reports: Vec<RunReport> = Vec::new();
            for backend in BackendKind::all() {
                let ws = build_spec(&spec, backend)?;
                match workloads::run(&ws) {
                    Ok(r) => reports.push(r),
                    Err(e) => {
                        eprintln!("workload aborted on {backend}: {e}");
                        return Ok(ExitCode::from(1));
                    }
                }
            }
            let checksums: BTreeSet<&str> = reports.iter().map(|r| r.checksum.as_str()).collect();
            output::print_compare(&reports, format);
            if checksums.len() != 1 {
                eprintln!("error: consumer-observed data diverges across backends");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            suite,
            program,
            jobs,
            max_depth,
            mutate,
            seed,
        } => {
            let mutate_lock_check = match mutate.as_deref() {
                None => false,
                Some("no-change-lock-check") => true,
                Some(other) => return Err(format!("unknown mutation {other:?}")),
            };
            let seed = seed.unwrap_or_else(env_seed);
            if let Some(path) = program {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                let mut cfg = ExplorationConfig::parse(&text)?;
                if let Some(d) = max_depth {
                    cfg.max_depth = d;
                }
                cfg.machine.skip_change_lock_check = mutate_lock_check;
                let verdict = verifier::explore_jobs(&cfg, jobs)?;
                output::print_verdict("program", &cfg, &verdict);
                return Ok(if verdict.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                });
            }
            let names = match &suite {
                Some(names) => names.clone(),
                None => vec![
                    "properties".to_string(),
                    "emulation".to_string(),
                    "invariants".to_string(),
                ],
            };
            if names.is_empty() {
                return Err("no suites given".into());
            }
            let mut all_passed = true;
            for name in &names {
                let passed = run_suite(name, jobs, max_depth, mutate_lock_check, seed)?;
                all_passed &= passed;
            }
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report { input, format } => {
            let format = pick_format(format);
            let text = std::fs::read_to_string(&input)
                .map_err(|e| format!("cannot read {}: {e}", input.display()))?;
            let report: RunReport =
                serde_json::from_str(&text).map_err(|e| format!("bad report: {e}"))?;
            output::print_report(&report, format);
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Runs one named suite, printing one line per check. Returns pass/fail.
fn run_suite(
    name: &str,
    jobs: usize,
    max_depth: Option<usize>,
    mutate_lock_check: bool,
    seed: u64,
) -> Result<bool, String> {
    let with_overrides = |mut cfg: ExplorationConfig| {
        if let Some(d) = max_depth {
            cfg.max_depth = d;
        }
        cfg.machine.skip_change_lock_check = mutate_lock_check;
        cfg
    };
    match name {
        "properties" => {
            let mut ok = true;
            let cfg = with_overrides(suites::escalation_config());
            let verdict = verifier::explore_jobs(&cfg, jobs)?;
            output::print_verdict("properties/bounded-escalation", &cfg, &verdict);
            ok &= verdict.passed();
            let cfg = with_overrides(suites::proxy_serialization_config());
            let verdict = verifier::explore_jobs(&cfg, jobs)?;
            output::print_verdict("properties/serialization", &cfg, &verdict);
            ok &= verdict.passed();
            Ok(ok)
        }
        "invariants" => {
            let mut cfg = with_overrides(suites::proxy_serialization_config());
            cfg.checks = BTreeSet::from([
                Check::StateWellformed,
                Check::LockExclusivity,
                Check::MaxImmutable,
                Check::Atomicity,
            ]);
            cfg.serialization = None;
            let verdict = verifier::explore_jobs(&cfg, jobs)?;
            output::print_verdict("invariants/lock-exclusivity", &cfg, &verdict);
            Ok(verdict.passed())
        }
        "emulation" => {
            let report = verifier::check_spatial_emulation(100, 200, seed);
            let status = if report.passed() { "PASS" } else { "FAIL" };
            println!(
                "suite emulation: {status} ({} programs x {} steps)",
                report.programs, report.steps_per_program
            );
            for m in report.mismatches.iter().take(5) {
                println!("  mismatch: {m}");
            }
            Ok(report.passed())
        }
        other => Err(format!(
            "unknown suite {other:?} (expected properties, emulation or invariants)"
        )),
    }
}
