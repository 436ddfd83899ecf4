//! Run measurements: message counts, round classification, commit latency.
//!
//! Latency follows the optimistic-latency clock: it starts when the target
//! creator receives the transaction (injection delivery) and stops when the
//! transaction satisfies the commit rule in the omniscient global dag. Local
//! computation is free; the unit is Δ.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::types::{NodeId, Round, TxId};

/// One node's round transition (old -> new at a virtual time).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundTransition {
    pub time: u64,
    pub node: u32,
    pub honest: bool,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Default)]
pub struct Metrics {
    pub delta: u64,
    /// round -> message kind -> count (network messages only).
    pub msgs_by_round: BTreeMap<u64, BTreeMap<&'static str, u64>>,
    /// Rounds in which some block was created.
    pub block_rounds: BTreeSet<u64>,
    /// Rounds in which some honest node broadcast a timeout.
    pub timeout_rounds: BTreeSet<u64>,
    pub transitions: Vec<RoundTransition>,
    pub blocks_created: Vec<(u64, Round, NodeId)>,
    pub proposals_created: Vec<(u64, Round, NodeId)>,
    pub bundles_created: Vec<(u64, Round, NodeId)>,
    /// Injection delivery time per transaction (the latency clock start),
    /// and whether the target was honest (the measurement precondition).
    pub tx_receipt: BTreeMap<TxId, (u64, bool)>,
    /// Global-dag commit time per transaction (the latency clock stop).
    pub tx_commit: BTreeMap<TxId, u64>,
    /// (time, node, tx) local commit notices, honest nodes only.
    pub local_commits: Vec<(u64, NodeId, TxId)>,
    /// Byzantine nodes that actually sent something (fault-budget check).
    pub byzantine_senders: BTreeSet<u32>,
    pub events_processed: u64,
}

/// Latency of one measured transaction.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyRecord {
    pub tx: String,
    pub receipt: u64,
    pub commit: u64,
    pub ticks: u64,
    pub delta_units: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundMessageStats {
    pub round: u64,
    pub class: &'static str,
    pub total: u64,
    pub by_kind: BTreeMap<&'static str, u64>,
}

impl Metrics {
    pub fn new(delta: u64) -> Self {
        Metrics {
            delta,
            ..Default::default()
        }
    }

    pub fn count_message(&mut self, round: u64, kind: &'static str) {
        *self
            .msgs_by_round
            .entry(round)
            .or_default()
            .entry(kind)
            .or_default() += 1;
    }

    /// Measured latencies: transactions with an honest target that committed.
    pub fn latencies(&self) -> Vec<LatencyRecord> {
        self.tx_receipt
            .iter()
            .filter(|(_, (_, honest))| *honest)
            .filter_map(|(tx, (receipt, _))| {
                self.tx_commit.get(tx).map(|commit| LatencyRecord {
                    tx: tx.0.short(),
                    receipt: *receipt,
                    commit: *commit,
                    ticks: commit - receipt,
                    delta_units: (commit - receipt) as f64 / self.delta as f64,
                })
            })
            .collect()
    }

    /// Per-round message totals, classified as block-producing, failure
    /// (some honest timeout fired), both, or other.
    pub fn round_stats(&self) -> Vec<RoundMessageStats> {
        self.msgs_by_round
            .iter()
            .map(|(round, by_kind)| {
                let class = match (self.block_rounds.contains(round), self.timeout_rounds.contains(round)) {
                    (true, false) => "block",
                    (false, true) => "failure",
                    (true, true) => "mixed",
                    (false, false) => "other",
                };
                RoundMessageStats {
                    round: *round,
                    class,
                    total: by_kind.values().sum(),
                    by_kind: by_kind.clone(),
                }
            })
            .collect()
    }

    /// First time `node` had reached a round >= `round`, if ever.
    pub fn reach_time(&self, node: NodeId, round: u64) -> Option<u64> {
        if round == 0 {
            return Some(0);
        }
        self.transitions
            .iter()
            .filter(|t| t.node == node.0 && t.to >= round && t.from < round)
            .map(|t| t.time)
            .next()
    }
}
