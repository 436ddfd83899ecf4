//! Run orchestration: single runs with violation minimization, the seeded
//! fuzz driver, replay verification, and report emission.

use rayon::prelude::*;
use serde::Serialize;

use crate::liveness::{liveness_check, LivenessReport};
use crate::metrics::{LatencyRecord, RoundMessageStats};
use crate::scenario::Scenario;
use crate::sim::{self, RunOutput, SimOptions};

/// One run, with the violation (if any) minimized to the shortest event
/// prefix that still reproduces it.
pub fn run_scenario(scenario: &Scenario, seed_override: Option<u64>, keep_trace: bool) -> RunOutput {
    let mut out = sim::run(
        scenario,
        &SimOptions {
            keep_trace,
            seed_override,
            max_events: None,
        },
    );
    if let Some(report) = &out.violation {
        let full_at = report.at_event;
        let mut lo = 1u64;
        let mut hi = full_at;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let probe = sim::run(
                scenario,
                &SimOptions {
                    keep_trace: false,
                    seed_override,
                    max_events: Some(mid),
                },
            );
            if probe.violation.is_some() {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let minimal = sim::run(
            scenario,
            &SimOptions {
                keep_trace: true,
                seed_override,
                max_events: Some(lo),
            },
        );
        if let (Some(have), Some(min_rep)) = (&mut out.violation, minimal.violation) {
            have.context = min_rep.context;
            have.at_event = min_rep.at_event;
        }
    }
    out
}

/// Serializable per-run record: one of these per run in every report.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub trace_digest: String,
    pub events: u64,
    pub blocks: usize,
    pub committed_txs: usize,
    pub frozen_refs: usize,
    pub latencies: Vec<LatencyRecord>,
    pub rounds: Vec<RoundMessageStats>,
    pub violation: Option<String>,
    pub violation_context: Vec<String>,
    pub liveness: Option<LivenessReport>,
}

pub fn build_report(scenario: &Scenario, out: &RunOutput) -> RunReport {
    let liveness = if scenario.checks.liveness {
        Some(liveness_check(scenario, out))
    } else {
        None
    };
    RunReport {
        name: scenario.name.clone(),
        scenario_digest: out.scenario_digest.full_hex(),
        seed: out.seed,
        trace_digest: out.trace_digest.full_hex(),
        events: out.metrics.events_processed,
        blocks: out.blocks.iter().filter(|b| !b.genesis).count(),
        committed_txs: out.final_view.committed_txs.len(),
        frozen_refs: out.final_view.frozen_refs.len(),
        latencies: out.metrics.latencies(),
        rounds: out.metrics.round_stats(),
        violation: out.violation.as_ref().map(|v| v.violation.to_string()),
        violation_context: out
            .violation
            .as_ref()
            .map(|v| v.context.clone())
            .unwrap_or_default(),
        liveness,
    }
}

pub fn report_json(reports: &[RunReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Flat CSV: one row per run.
pub fn report_csv(reports: &[RunReport]) -> String {
    let mut s = String::from(
        "name,scenario_digest,seed,trace_digest,events,blocks,committed_txs,frozen_refs,\
         latency_min_delta,latency_max_delta,violation,liveness_ok\n",
    );
    for r in reports {
        let lat_min = r
            .latencies
            .iter()
            .map(|l| l.delta_units)
            .fold(f64::NAN, f64::min);
        let lat_max = r
            .latencies
            .iter()
            .map(|l| l.delta_units)
            .fold(f64::NAN, f64::max);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.scenario_digest,
            r.seed,
            r.trace_digest,
            r.events,
            r.blocks,
            r.committed_txs,
            r.frozen_refs,
            if lat_min.is_nan() { String::new() } else { format!("{lat_min}") },
            if lat_max.is_nan() { String::new() } else { format!("{lat_max}") },
            r.violation.clone().unwrap_or_default(),
            r.liveness.as_ref().map(|l| l.ok.to_string()).unwrap_or_default(),
        ));
    }
    s
}

/// Plot data: `seed latency_delta_units` per measured transaction.
pub fn plot_data(reports: &[RunReport]) -> String {
    let mut s = String::from("# seed latency_delta_units\n");
    for r in reports {
        for l in &r.latencies {
            s.push_str(&format!("{} {}\n", r.seed, l.delta_units));
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub runs: u64,
    pub master_seed: u64,
    pub jobs: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct FuzzSummary {
    pub runs: u64,
    pub master_seed: u64,
    pub violations: Vec<FuzzViolation>,
    pub total_blocks: u64,
    pub total_committed_txs: u64,
    pub total_frozen_refs: u64,
}

#[derive(Debug, Serialize)]
pub struct FuzzViolation {
    pub index: u64,
    pub scenario_name: String,
    pub seed: u64,
    pub detail: String,
    pub context: Vec<String>,
}

/// Runs `cfg.runs` generated adversarial scenarios on a worker pool.
/// Results are merged in index order, so the summary is deterministic for a
/// given (master_seed, runs) regardless of parallelism.
pub fn fuzz(cfg: &FuzzConfig) -> (FuzzSummary, Vec<RunReport>) {
    let body = |i: u64| {
        let scenario = crate::fuzz::generate(cfg.master_seed, i);
        let out = run_scenario(&scenario, None, false);
        let report = build_report(&scenario, &out);
        (i, scenario, out, report)
    };
    let mut results: Vec<_> = match cfg.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("worker pool");
            pool.install(|| (0..cfg.runs).into_par_iter().map(body).collect())
        }
        None => (0..cfg.runs).into_par_iter().map(body).collect(),
    };
    results.sort_by_key(|(i, _, _, _)| *i);
    let mut summary = FuzzSummary {
        runs: cfg.runs,
        master_seed: cfg.master_seed,
        violations: Vec::new(),
        total_blocks: 0,
        total_committed_txs: 0,
        total_frozen_refs: 0,
    };
    let mut reports = Vec::with_capacity(results.len());
    for (i, scenario, out, report) in results {
        summary.total_blocks += report.blocks as u64;
        summary.total_committed_txs += report.committed_txs as u64;
        summary.total_frozen_refs += report.frozen_refs as u64;
        if let Some(v) = &out.violation {
            summary.violations.push(FuzzViolation {
                index: i,
                scenario_name: scenario.name.clone(),
                seed: out.seed,
                detail: v.violation.to_string(),
                context: v.context.clone(),
            });
        }
        reports.push(report);
    }
    (summary, reports)
}

#[derive(Debug, PartialEq, Eq)]
pub enum ReplayOutcome {
    Match,
    Mismatch { recorded: String, replayed: String },
    WrongScenario { header: String, loaded: String },
}

/// Re-runs the (scenario, seed) recorded in a trace file and compares trace
/// digests byte for byte.
pub fn replay(scenario: &Scenario, trace_text: &str) -> ReplayOutcome {
    let Some((header_digest, seed)) = crate::trace::parse_header(trace_text) else {
        return ReplayOutcome::WrongScenario {
            header: "<missing run-header>".into(),
            loaded: scenario.digest().full_hex(),
        };
    };
    let loaded = scenario.digest().full_hex();
    if header_digest != loaded {
        return ReplayOutcome::WrongScenario {
            header: header_digest,
            loaded,
        };
    }
    let recorded = crate::codec::Digest::of(trace_text.as_bytes()).full_hex();
    let out = sim::run(
        scenario,
        &SimOptions {
            keep_trace: false,
            seed_override: Some(seed),
            max_events: None,
        },
    );
    let replayed = out.trace_digest.full_hex();
    if recorded == replayed {
        ReplayOutcome::Match
    } else {
        ReplayOutcome::Mismatch { recorded, replayed }
    }
}
