//! Deterministic discrete-event simulator.
//!
//! One virtual clock, one event queue, one runtime per node. Events are
//! processed in (timestamp, class, sequence) order where deliveries sort
//! before timer expiries at equal timestamps; sequence numbers are assigned
//! at enqueue time from a global counter. All randomness (delay jitter)
//! comes from per-edge streams seeded from the run seed, so a (scenario,
//! seed) pair fully determines the run — including its trace digest.
//!
//! Byzantine nodes run an honest core whose outgoing actions pass through a
//! strategy filter (dropping, rewriting, or multiplying them). The filter
//! can only sign as the byzantine node itself; the emission guard panics on
//! any attempted honest-signature forgery, which would be a harness bug, not
//! an admissible adversary.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{Digest, Encode};
use crate::crypto::SimScheme;
use crate::metrics::{Metrics, RoundTransition};
use crate::node::{Action, NodeEvent, NodeState, TimerKind};
use crate::oracle::{Oracle, Violation};
use crate::scenario::{
    effective_strategy, AdversaryStrategy, Jitter, Scenario, SynchronyMode,
};
use crate::trace::{TraceRecord, TraceSink};
use crate::types::{
    Block, Message, NodeId, Owner, OutputRef, Permit, Position, Round, TimeoutMsg, Transaction,
};

const S: SimScheme = SimScheme;

#[derive(Debug, Clone)]
enum EventPayload {
    Deliver { from: NodeId, to: NodeId, msg: Message },
    Timer { node: NodeId, kind: TimerKind, round: Round },
    Inject { to: NodeId, tx: Transaction },
}

/// Queue entry; deliveries (class 0) order before timers (class 1) at equal
/// timestamps, sequence numbers break the remaining ties.
#[derive(Debug, Clone)]
struct Ev {
    time: u64,
    class: u8,
    seq: u64,
    payload: EventPayload,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.class, self.seq) == (other.time, other.class, other.seq)
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.class, self.seq).cmp(&(other.time, other.class, other.seq))
    }
}

/// Per-edge seeded delay sampling plus partition holds.
struct DelayModel<'a> {
    scenario: &'a Scenario,
    seed: u64,
    edges: BTreeMap<(u32, u32), ChaCha8Rng>,
}

impl<'a> DelayModel<'a> {
    fn new(scenario: &'a Scenario, seed: u64) -> Self {
        DelayModel {
            scenario,
            seed,
            edges: BTreeMap::new(),
        }
    }

    fn edge_rng(&mut self, from: NodeId, to: NodeId) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.edges.entry((from.0, to.0)).or_insert_with(|| {
            let mut bytes = Vec::with_capacity(24);
            bytes.extend_from_slice(b"edge");
            bytes.extend_from_slice(&seed.to_le_bytes());
            bytes.extend_from_slice(&from.0.to_le_bytes());
            bytes.extend_from_slice(&to.0.to_le_bytes());
            let d = Digest::of(&bytes);
            ChaCha8Rng::seed_from_u64(u64::from_le_bytes(d.0[..8].try_into().unwrap()))
        })
    }

    /// Delivery timestamp for a message sent at `send`. Self-deliveries are
    /// immediate. Synchronous phases sample from (0, Δ]; asynchronous phases
    /// sample an arbitrary finite delay bounded by the next synchronous
    /// phase start plus Δ (or the horizon). Deliveries crossing an active
    /// partition are pushed past the window.
    fn delivery_time(&mut self, from: NodeId, to: NodeId, send: u64) -> u64 {
        if from == to {
            return send;
        }
        let delta = self.scenario.timers.delta;
        let phase = self.scenario.phase_at(send);
        let delay = match phase.mode {
            SynchronyMode::Synchronous(Jitter::Fixed) => delta,
            SynchronyMode::Synchronous(Jitter::Uniform) => {
                self.edge_rng(from, to).gen_range(1..=delta)
            }
            SynchronyMode::Asynchronous => {
                let deadline = self
                    .scenario
                    .next_sync_start(send)
                    .map(|s| s + delta)
                    .unwrap_or(self.scenario.horizon + delta);
                let span = deadline.saturating_sub(send).max(1);
                self.edge_rng(from, to).gen_range(1..=span)
            }
        };
        let mut t = send + delay;
        loop {
            let healed = self
                .scenario
                .partitions
                .iter()
                .filter(|w| w.separates(from, to) && w.start <= t && t < w.end)
                .map(|w| w.end)
                .max();
            match healed {
                Some(end) => t = end,
                None => return t,
            }
        }
    }
}

/// Scripted byzantine node: an honest core plus an action filter.
struct ByzRuntime {
    core: NodeState,
    strategy: AdversaryStrategy,
    /// Position held at entry of each round, for stale permits.
    history: BTreeMap<u64, Position>,
    genesis_pos: Position,
    /// Coins this node owns in the genesis coinbase, fuel for double-spends.
    coins: Vec<(OutputRef, u64)>,
    last_spam_round: Option<u64>,
    equivocations: u32,
}

impl ByzRuntime {
    fn transform(&mut self, acts: Vec<Action>) -> Vec<Action> {
        let round = self.core.round;
        let strat = effective_strategy(&self.strategy, round).clone();
        let id = self.core.id;
        let mut out = Vec::new();
        let silent = |a: &Action| {
            matches!(
                a,
                Action::ArmTimer { .. } | Action::Note { .. } | Action::Committed { .. }
            )
        };
        match strat {
            AdversaryStrategy::Honest => out.extend(acts),
            AdversaryStrategy::Silent => out.extend(acts.into_iter().filter(|a| silent(a))),
            AdversaryStrategy::CrashAt(r) => {
                if round.0 >= r {
                    out.extend(acts.into_iter().filter(|a| silent(a)));
                } else {
                    out.extend(acts);
                }
            }
            AdversaryStrategy::WithholdFrom(targets) => {
                for a in acts {
                    match a {
                        Action::Send { to, .. } if to != id && targets.contains(&to) => {}
                        Action::Broadcast { msg } => out.push(Action::BroadcastExcept {
                            msg,
                            except: targets.clone(),
                        }),
                        other => out.push(other),
                    }
                }
            }
            AdversaryStrategy::StalePermit(lag) => {
                for a in acts {
                    match a {
                        Action::Send {
                            to,
                            msg: Message::Permit(p),
                        } => {
                            let stale_round = p.round.0.saturating_sub(lag);
                            let pos = self
                                .history
                                .get(&stale_round)
                                .cloned()
                                .unwrap_or_else(|| self.genesis_pos.clone());
                            let rewritten = Permit::new(&S, id, p.round, pos);
                            out.push(Action::Send {
                                to,
                                msg: Message::Permit(rewritten),
                            });
                        }
                        other => out.push(other),
                    }
                }
            }
            AdversaryStrategy::EquivocateBlocks(k) => {
                for a in acts {
                    match a {
                        Action::Broadcast {
                            msg: Message::Block(b),
                        } => {
                            let variants = self.equivocate(&b, k.max(1));
                            out.push(Action::Equivocate { variants });
                        }
                        Action::Send {
                            to,
                            msg: Message::Block(b),
                        } if to == id => {
                            // the core keeps variant 0 as its own view
                            let variants = self.equivocate(&b, k.max(1));
                            out.push(Action::Send {
                                to,
                                msg: Message::Block(variants[0].clone()),
                            });
                        }
                        other => out.push(other),
                    }
                }
            }
            AdversaryStrategy::SpamTimeouts => {
                out.extend(acts);
                if self.last_spam_round != Some(round.0) {
                    self.last_spam_round = Some(round.0);
                    for r in [round.0, round.0 + 1] {
                        out.push(Action::Broadcast {
                            msg: Message::Timeout(TimeoutMsg::new(&S, id, Round(r))),
                        });
                    }
                }
            }
            AdversaryStrategy::Custom(_) => unreachable!("custom resolved by effective_strategy"),
        }
        out
    }

    /// Distinct block variants from one proof. Each variant carries a
    /// conflicting spend of an owned coin when one is available, otherwise
    /// the transaction list is permuted; identical variants collapse.
    fn equivocate(&mut self, b: &Block, k: u32) -> Vec<Block> {
        let mut out: Vec<Block> = Vec::new();
        let mut seen = BTreeSet::new();
        for i in 0..k {
            let mut txs = b.transactions.clone();
            if !self.coins.is_empty() {
                let (coin, amount) = self.coins[self.equivocations as usize % self.coins.len()];
                txs.retain(|t| !t.inputs.contains(&coin));
                txs.push(Transaction::new(
                    [coin],
                    vec![(Owner::Client(7_000_000 + i), amount)],
                ));
            } else if i > 0 {
                txs.reverse();
            }
            let v = Block::new(&S, self.core.id, b.proof.clone(), txs);
            if seen.insert(v.id()) {
                out.push(v);
            }
        }
        self.equivocations += 1;
        out
    }
}

enum Runtime {
    Honest(NodeState),
    Byzantine(ByzRuntime),
}

impl Runtime {
    fn round(&self) -> Round {
        match self {
            Runtime::Honest(n) => n.round,
            Runtime::Byzantine(b) => b.core.round,
        }
    }

    fn is_honest(&self) -> bool {
        matches!(self, Runtime::Honest(_))
    }

    fn start(&mut self) -> Vec<Action> {
        match self {
            Runtime::Honest(n) => n.start(),
            Runtime::Byzantine(b) => {
                b.history.insert(0, b.core.current.clone());
                let acts = b.core.start();
                b.transform(acts)
            }
        }
    }

    fn handle(&mut self, event: NodeEvent) -> Vec<Action> {
        match self {
            Runtime::Honest(n) => n.handle(event),
            Runtime::Byzantine(b) => {
                let before = b.core.round;
                let acts = b.core.handle(event);
                if b.core.round != before {
                    b.history.insert(b.core.round.0, b.core.current.clone());
                }
                b.transform(acts)
            }
        }
    }
}

/// Violation wrapped with its position in the run and trailing context.
#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub violation: Violation,
    pub at_event: u64,
    pub at_time: u64,
    pub context: Vec<String>,
}

/// Structural facts about one block of the final global dag.
#[derive(Debug, Clone)]
pub struct BlockSummary {
    pub id: crate::types::BlockId,
    pub round: u64,
    pub creator: u32,
    pub depth: u64,
    pub parents: Vec<crate::types::BlockId>,
    pub txs: Vec<crate::types::TxId>,
    pub genesis: bool,
}

/// Everything a run produces.
pub struct RunOutput {
    pub scenario_digest: Digest,
    pub seed: u64,
    pub trace_digest: Digest,
    pub trace_text: Option<String>,
    pub metrics: Metrics,
    pub violation: Option<ViolationReport>,
    pub dag_export: String,
    pub ledger_dump: String,
    pub blocks: Vec<BlockSummary>,
    pub final_view: crate::ledger::LedgerView,
    /// UTXO state after executing the final view; an error here means a
    /// committed transaction failed to apply, which the commit rule is
    /// supposed to make impossible.
    pub final_state: Result<crate::ledger::UtxoSet, String>,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub keep_trace: bool,
    pub seed_override: Option<u64>,
    /// Process at most this many events (used by violation minimization).
    pub max_events: Option<u64>,
}

pub fn run(scenario: &Scenario, opts: &SimOptions) -> RunOutput {
    Simulation::new(scenario, opts).run()
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    seed: u64,
    queue: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    now: u64,
    runtimes: Vec<Runtime>,
    delays: DelayModel<'a>,
    oracle: Oracle,
    metrics: Metrics,
    trace: TraceSink,
    violation: Option<ViolationReport>,
    events_processed: u64,
    max_events: u64,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario, opts: &SimOptions) -> Self {
        scenario.validate().expect("simulating an invalid scenario");
        let seed = opts.seed_override.unwrap_or(scenario.seed);
        let genesis = Block::genesis(scenario.mints.clone());
        let coinbase_id = genesis.transactions[0].id();
        let honest: BTreeSet<NodeId> = scenario.honest_nodes().into_iter().collect();
        let mut runtimes = Vec::new();
        for i in 0..scenario.n {
            let id = NodeId(i);
            let core = NodeState::new(id, scenario.n, scenario.f, scenario.timers, genesis.clone());
            match scenario.byzantine.get(&id) {
                None => runtimes.push(Runtime::Honest(core)),
                Some(strategy) => {
                    let coins: Vec<(OutputRef, u64)> = scenario
                        .mints
                        .iter()
                        .enumerate()
                        .filter(|(_, (owner, _))| *owner == Owner::Node(id))
                        .map(|(idx, (_, amount))| {
                            (
                                OutputRef {
                                    tx_id: coinbase_id,
                                    index: idx as u32,
                                },
                                *amount,
                            )
                        })
                        .collect();
                    runtimes.push(Runtime::Byzantine(ByzRuntime {
                        core,
                        strategy: strategy.clone(),
                        history: BTreeMap::new(),
                        genesis_pos: Position::singleton(genesis.id()),
                        coins,
                        last_spam_round: None,
                        equivocations: 0,
                    }));
                }
            }
        }
        let oracle = Oracle::new(scenario.n, scenario.f, genesis, honest);
        let trace = TraceSink::new(opts.keep_trace, scenario.digest(), seed);
        Simulation {
            scenario,
            seed,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            runtimes,
            delays: DelayModel::new(scenario, seed),
            oracle,
            metrics: Metrics::new(scenario.timers.delta),
            trace,
            violation: None,
            events_processed: 0,
            max_events: opts.max_events.unwrap_or(u64::MAX),
        }
    }

    fn enqueue(&mut self, time: u64, class: u8, payload: EventPayload) {
        self.seq += 1;
        self.queue.push(Reverse(Ev {
            time,
            class,
            seq: self.seq,
            payload,
        }));
    }

    fn record(&mut self, actor: String, kind: &'static str, payload: String, detail: String) {
        self.trace.push(TraceRecord {
            time: self.now,
            seq: self.events_processed,
            actor,
            kind,
            payload,
            detail,
        });
    }

    fn run(mut self) -> RunOutput {
        for inj in &self.scenario.injections {
            self.enqueue(
                inj.time,
                0,
                EventPayload::Inject {
                    to: inj.target,
                    tx: inj.tx.clone(),
                },
            );
        }
        for i in 0..self.runtimes.len() {
            let acts = self.runtimes[i].start();
            self.record(format!("n{i}"), "round-enter", "-".into(), "round=0".into());
            self.metrics.transitions.push(RoundTransition {
                time: 0,
                node: i as u32,
                honest: self.runtimes[i].is_honest(),
                from: 0,
                to: 0,
            });
            self.process_actions(NodeId(i as u32), acts);
        }
        while self.violation.is_none() && self.events_processed < self.max_events {
            let Some(Reverse(ev)) = self.queue.pop() else {
                break;
            };
            if ev.time > self.scenario.horizon {
                break;
            }
            self.now = ev.time;
            self.events_processed += 1;
            self.dispatch(ev);
        }
        self.metrics.events_processed = self.events_processed;
        let (trace_digest, trace_text) = self.trace.finish();
        let dag = &self.oracle.dag;
        let blocks: Vec<BlockSummary> = dag
            .iter_in_order()
            .map(|b| BlockSummary {
                id: b.id(),
                round: b.round().0,
                creator: b.creator().0,
                depth: dag.block_depth(&b.id()).unwrap(),
                parents: b.position().iter().copied().collect(),
                txs: b.transactions.iter().map(|t| t.id()).collect(),
                genesis: b.is_genesis(),
            })
            .collect();
        let final_view = crate::ledger::ledger_view(dag);
        let final_state = crate::ledger::execute(
            dag,
            &final_view,
            &crate::ledger::genesis_state(dag),
        )
        .map_err(|e| e.to_string());
        RunOutput {
            scenario_digest: self.scenario.digest(),
            seed: self.seed,
            trace_digest,
            trace_text,
            metrics: self.metrics,
            violation: self.violation,
            dag_export: dag.export(),
            ledger_dump: crate::ledger::dump(dag),
            blocks,
            final_view,
            final_state,
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev.payload {
            EventPayload::Deliver { from, to, msg } => {
                self.record(
                    format!("n{}", to.0),
                    "deliver",
                    msg.digest().short(),
                    format!(
                        "from=n{} kind={} round={}",
                        from.0,
                        msg.kind(),
                        msg.round().map(|r| r.0 as i64).unwrap_or(-1)
                    ),
                );
                self.step_node(to, NodeEvent::Deliver { from, msg });
            }
            EventPayload::Timer { node, kind, round } => {
                self.record(
                    format!("n{}", node.0),
                    "timer",
                    "-".into(),
                    format!("kind={kind:?} round={}", round.0),
                );
                self.step_node(node, NodeEvent::Timer { kind, round });
            }
            EventPayload::Inject { to, tx } => {
                let honest = self.runtimes[to.0 as usize].is_honest();
                self.metrics.tx_receipt.insert(tx.id(), (self.now, honest));
                self.record(
                    format!("n{}", to.0),
                    "inject",
                    tx.id().0.short(),
                    format!("honest-target={honest}"),
                );
                self.step_node(to, NodeEvent::Inject(tx));
            }
        }
    }

    fn step_node(&mut self, id: NodeId, event: NodeEvent) {
        let before = self.runtimes[id.0 as usize].round();
        let acts = self.runtimes[id.0 as usize].handle(event);
        let after = self.runtimes[id.0 as usize].round();
        if after != before {
            self.record(
                format!("n{}", id.0),
                "round-enter",
                "-".into(),
                format!("round={}", after.0),
            );
            self.metrics.transitions.push(RoundTransition {
                time: self.now,
                node: id.0,
                honest: self.runtimes[id.0 as usize].is_honest(),
                from: before.0,
                to: after.0,
            });
        }
        self.process_actions(id, acts);
    }

    fn process_actions(&mut self, actor: NodeId, acts: Vec<Action>) {
        let honest = self.runtimes[actor.0 as usize].is_honest();
        for act in acts {
            if self.violation.is_some() {
                return;
            }
            match act {
                Action::Send { to, msg } => self.emit(actor, honest, to, msg),
                Action::Broadcast { msg } => {
                    for peer in 0..self.scenario.n {
                        if peer != actor.0 {
                            self.emit(actor, honest, NodeId(peer), msg.clone());
                        }
                    }
                }
                Action::BroadcastExcept { msg, except } => {
                    for peer in 0..self.scenario.n {
                        if peer != actor.0 && !except.contains(&NodeId(peer)) {
                            self.emit(actor, honest, NodeId(peer), msg.clone());
                        }
                    }
                }
                Action::Equivocate { variants } => {
                    // contiguous recipient groups, one variant each
                    let peers: Vec<u32> =
                        (0..self.scenario.n).filter(|p| *p != actor.0).collect();
                    let k = variants.len().max(1);
                    let group = peers.len().div_ceil(k);
                    for (i, peer) in peers.iter().enumerate() {
                        let variant = &variants[(i / group.max(1)).min(k - 1)];
                        self.emit(actor, honest, NodeId(*peer), Message::Block(variant.clone()));
                    }
                }
                Action::ArmTimer { kind, round, after } => {
                    self.enqueue(
                        self.now + after,
                        1,
                        EventPayload::Timer {
                            node: actor,
                            kind,
                            round,
                        },
                    );
                }
                Action::Committed { txs } => {
                    if honest {
                        for tx in &txs {
                            self.metrics.local_commits.push((self.now, actor, *tx));
                        }
                        self.record(
                            format!("n{}", actor.0),
                            "commit-local",
                            "-".into(),
                            format!("count={}", txs.len()),
                        );
                    }
                }
                Action::Note { kind, detail } => {
                    self.record(format!("n{}", actor.0), kind, "-".into(), detail);
                }
            }
        }
    }

    /// One (sender, receiver) network emission: oracle hooks, the forgery
    /// guard for byzantine senders, metrics, then delivery scheduling.
    fn emit(&mut self, from: NodeId, honest: bool, to: NodeId, msg: Message) {
        if !honest {
            assert_no_forgery(from, &msg, &|id| {
                self.runtimes[id.0 as usize].is_honest()
            });
            self.metrics.byzantine_senders.insert(from.0);
        }
        if let Message::Permit(p) = &msg {
            if honest {
                // one permit per round per honest node; recorded at emission
                if let Err(v) = self.oracle.on_honest_permit(from, p) {
                    self.fail(v);
                    return;
                }
            }
        }
        let blocks: Vec<&Block> = match &msg {
            Message::Block(b) => vec![b],
            Message::FetchResponse(bs) => bs.iter().collect(),
            _ => Vec::new(),
        };
        for b in blocks {
            let first = !self.oracle.known_block(&b.id());
            match self.oracle.on_block_created(b, honest) {
                Err(v) => {
                    self.fail(v);
                    return;
                }
                Ok(newly) => {
                    if first && self.oracle.dag.contains(&b.id()) {
                        self.metrics.block_rounds.insert(b.round().0);
                        self.metrics
                            .blocks_created
                            .push((self.now, b.round(), b.creator()));
                        self.record(
                            format!("n{}", from.0),
                            "block-created",
                            b.id().0.short(),
                            format!("round={} txs={}", b.round().0, b.transactions.len()),
                        );
                    }
                    for tx in newly {
                        self.metrics.tx_commit.entry(tx).or_insert(self.now);
                        self.record(
                            "oracle".into(),
                            "tx-committed",
                            tx.0.short(),
                            format!("at={}", self.now),
                        );
                    }
                }
            }
        }
        match &msg {
            Message::Proposal(p) => {
                if let Some(r) = p.round() {
                    if !self
                        .metrics
                        .proposals_created
                        .iter()
                        .any(|(_, pr, by)| *pr == r && *by == from)
                    {
                        self.metrics.proposals_created.push((self.now, r, from));
                    }
                }
            }
            Message::Timeout(t) => {
                if honest {
                    self.metrics.timeout_rounds.insert(t.round.0);
                }
            }
            Message::TimeoutBundle(b) => {
                if !self
                    .metrics
                    .bundles_created
                    .iter()
                    .any(|(_, br, by)| *br == b.round && *by == from)
                {
                    self.metrics.bundles_created.push((self.now, b.round, from));
                }
            }
            _ => {}
        }
        if to != from {
            let round_attr = msg
                .round()
                .unwrap_or(self.runtimes[from.0 as usize].round())
                .0;
            self.metrics.count_message(round_attr, msg.kind());
            self.record(
                format!("n{}", from.0),
                "send",
                msg.digest().short(),
                format!(
                    "to=n{} kind={} round={}",
                    to.0,
                    msg.kind(),
                    msg.round().map(|r| r.0 as i64).unwrap_or(-1)
                ),
            );
        }
        let at = self.delays.delivery_time(from, to, self.now);
        self.enqueue(at, 0, EventPayload::Deliver { from, to, msg });
    }

    fn fail(&mut self, violation: Violation) {
        self.record(
            "oracle".into(),
            "violation",
            "-".into(),
            violation.to_string(),
        );
        self.violation = Some(ViolationReport {
            violation,
            at_event: self.events_processed,
            at_time: self.now,
            context: self.trace.tail(40),
        });
    }
}

/// Panics if a byzantine emission carries a signature that names an honest
/// node but does not verify — i.e. a forgery, which the model forbids.
/// Relaying intact honest-signed artifacts (permits inside proofs, timeout
/// messages inside bundles) is legitimate and passes.
fn assert_no_forgery(from: NodeId, msg: &Message, is_honest: &dyn Fn(NodeId) -> bool) {
    let check = |ok: bool, signer: NodeId, what: &str| {
        if is_honest(signer) && !ok {
            panic!("byzantine n{} forged a {what} signature of honest {signer}", from.0);
        }
    };
    match msg {
        Message::Permit(p) => check(p.verify(&S), p.issuer(), "permit"),
        Message::Timeout(t) => check(t.verify(&S), t.issuer(), "timeout"),
        Message::TimeoutBundle(b) => {
            for t in &b.msgs {
                check(t.verify(&S), t.issuer(), "timeout");
            }
        }
        Message::Block(b) => {
            check(b.verify_creator_signature(&S), b.creator(), "block");
            for p in &b.proof.permits {
                check(p.verify(&S), p.issuer(), "permit");
            }
        }
        Message::Proposal(p) => {
            check(p.verify_creator_signature(&S), p.creator(), "proposal");
            for q in &p.permits {
                check(q.verify(&S), q.issuer(), "permit");
            }
        }
        Message::FetchRequest(_) => {}
        Message::FetchResponse(blocks) => {
            for b in blocks {
                check(b.verify_creator_signature(&S), b.creator(), "block");
                for p in &b.proof.permits {
                    check(p.verify(&S), p.issuer(), "permit");
                }
            }
        }
    }
}
