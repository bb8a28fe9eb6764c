//! Report rendering: json, csv and human-readable tables. All output is a
//! pure function of the report contents, so identical invocations produce
//! byte-identical bytes.

use elclave_core::counters::CostCounters;
use elclave_core::verifier::{render_trace, ExplorationConfig, Verdict};
use elclave_core::workloads::RunReport;

use crate::Format;

const CSV_HEADER: &str = "pattern,backend,L,rounds,contention,seed,enc_ops,dec_ops,copies,\
instructions,rpc_round_trips,pmp_writes,context_switches,checksum";

fn csv_row(r: &RunReport) -> String {
    let c = &r.counters;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.spec.pattern,
        r.spec.backend,
        r.spec.l_words,
        r.spec.rounds,
        r.spec.contention,
        r.spec.seed,
        c.enc_ops,
        c.dec_ops,
        c.copies,
        c.instructions,
        c.rpc_round_trips,
        c.pmp_writes,
        c.context_switches,
        r.checksum
    )
}

type CounterGetter = fn(&CostCounters) -> u64;

const COUNTER_ROWS: [(&str, CounterGetter); 7] = [
    ("enc_ops", |c| c.enc_ops),
    ("dec_ops", |c| c.dec_ops),
    ("copies", |c| c.copies),
    ("instructions", |c| c.instructions),
    ("rpc_round_trips", |c| c.rpc_round_trips),
    ("pmp_writes", |c| c.pmp_writes),
    ("context_switches", |c| c.context_switches),
];

pub fn print_report(report: &RunReport, format: Format) {
    match format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(report).unwrap());
        }
        Format::Csv => {
            println!("{CSV_HEADER}");
            println!("{}", csv_row(report));
        }
        Format::Table => {
            println!(
                "workload {} on {} (L={} words, rounds={}, seed={})",
                report.spec.pattern,
                report.spec.backend,
                report.spec.l_words,
                report.spec.rounds,
                report.spec.seed
            );
            println!("{:<18} {:>12}", "counter", "total");
            for (name, get) in COUNTER_ROWS {
                println!("{:<18} {:>12}", name, get(&report.counters));
            }
            if let Some(sync) = &report.sync {
                println!("{:<18} {:>12}", "acquires", sync.acquires);
                println!("{:<18} {:>12}", "releases", sync.releases);
                println!("{:<18} {:>12}", "busy_polls", sync.busy_polls);
                println!("{:<18} {:>12}", "wall_steps", sync.wall_steps);
            }
            println!("checksum {}", report.checksum);
        }
    }
}

pub fn print_compare(reports: &[RunReport], format: Format) {
    match format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(reports).unwrap());
        }
        Format::Csv => {
            println!("{CSV_HEADER}");
            for r in reports {
                println!("{}", csv_row(r));
            }
        }
        Format::Table => {
            let spec = &reports[0].spec;
            println!(
                "pattern {} (L={} words, rounds={}, seed={})",
                spec.pattern, spec.l_words, spec.rounds, spec.seed
            );
            print!("{:<18}", "counter");
            for r in reports {
                print!(" {:>20}", r.spec.backend.to_string());
            }
            println!();
            for (name, get) in COUNTER_ROWS {
                print!("{:<18}", name);
                for r in reports {
                    print!(" {:>20}", get(&r.counters));
                }
                println!();
            }
            // Cost ratio: total spatial data operations per relaxed-model
            // security instruction; grows linearly in L since the
            // instruction count is constant.
            let spatial = reports
                .iter()
                .find(|r| r.spec.backend == elclave_core::workloads::BackendKind::Spatial);
            if let Some(sp) = spatial {
                let spatial_ops = sp.counters.enc_ops + sp.counters.dec_ops + sp.counters.copies;
                print!("{:<18}", "spatial_ops/instr");
                for r in reports {
                    let instr = r.counters.instructions.max(1);
                    print!(" {:>20.1}", spatial_ops as f64 / instr as f64);
                }
                println!();
            }
            for r in reports {
                println!("checksum {:<20} {}", r.spec.backend.to_string(), r.checksum);
            }
        }
    }
}

pub fn print_verdict(name: &str, cfg: &ExplorationConfig, verdict: &Verdict) {
    let status = if verdict.passed() { "PASS" } else { "FAIL" };
    println!(
        "suite {name}: {status} (states={}, transitions={}, depth_exceeded={})",
        verdict.states_explored, verdict.transitions, verdict.depth_exceeded
    );
    for v in &verdict.violations {
        println!("violation [{}] {}", v.check, v.detail);
        print!("{}", render_trace(cfg, &v.trace));
    }
}
