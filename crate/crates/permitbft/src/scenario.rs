//! Declarative experiment inputs.
//!
//! A scenario fixes everything a run depends on: node counts, timer
//! durations, the synchrony schedule, partitions, byzantine strategies, the
//! genesis mints and the transaction injection schedule. Together with a seed
//! it determines a run completely; the scenario digest and seed go into the
//! trace header so any trace can be reproduced.
//!
//! The on-disk format is line-oriented text (`#` comments, whitespace
//! separated); `scenarios/SCHEMA.md` documents every directive. The same
//! format is re-emitted by [`Scenario::canonical_text`], which is what gets
//! digested.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::Digest;
use crate::node::TimerConfig;
use crate::types::{NodeId, Owner, OutputRef, Round, Transaction, TxId};

/// Delay sampling inside a synchronous phase: `Fixed` always takes the full
/// Δ (worst-case, fully deterministic timing), `Uniform` samples from (0, Δ].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jitter {
    Fixed,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynchronyMode {
    Synchronous(Jitter),
    /// Delays are arbitrary (seeded) but finite: every message lands by the
    /// start of the next synchronous phase plus Δ, or by the horizon.
    Asynchronous,
}

/// One span of the synchrony schedule. Phases are contiguous and cover the
/// whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynchronyPhase {
    pub start: u64,
    pub end: u64,
    pub mode: SynchronyMode,
}

/// Network split: messages between different groups during [start, end) are
/// held until the window closes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub start: u64,
    pub end: u64,
    pub groups: Vec<BTreeSet<NodeId>>,
}

impl Partition {
    pub fn separates(&self, a: NodeId, b: NodeId) -> bool {
        let ga = self.groups.iter().position(|g| g.contains(&a));
        let gb = self.groups.iter().position(|g| g.contains(&b));
        ga != gb
    }
}

/// Scripted byzantine behaviors. All of them run an honest core internally
/// and distort its outputs, which keeps the adversary inside the model: it
/// signs only as itself and never forges honest signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryStrategy {
    /// Behave exactly honestly (byzantine nodes may do that too).
    Honest,
    /// Never send anything.
    Silent,
    /// Honest until the given round, silent afterwards.
    CrashAt(u64),
    /// On block creation, emit k distinct variants (carrying conflicting
    /// spends of own coins when available) to disjoint recipient groups.
    EquivocateBlocks(u32),
    /// Honest, but outgoing messages to these nodes are dropped.
    WithholdFrom(BTreeSet<NodeId>),
    /// Permits reference the position the node held `lag` rounds ago.
    StalePermit(u64),
    /// Honest plus a stream of timeout broadcasts for current and next round.
    SpamTimeouts,
    /// Per-round strategy switch table: the entry with the highest round
    /// bound <= current round applies. Entries must not nest Custom.
    Custom(Vec<(u64, AdversaryStrategy)>),
}

impl AdversaryStrategy {
    fn keyword(&self) -> String {
        match self {
            AdversaryStrategy::Honest => "honest".into(),
            AdversaryStrategy::Silent => "silent".into(),
            AdversaryStrategy::CrashAt(r) => format!("crash-at {r}"),
            AdversaryStrategy::EquivocateBlocks(k) => format!("equivocate {k}"),
            AdversaryStrategy::WithholdFrom(set) => format!(
                "withhold {}",
                set.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(",")
            ),
            AdversaryStrategy::StalePermit(lag) => format!("stale-permit {lag}"),
            AdversaryStrategy::SpamTimeouts => "spam-timeouts".into(),
            AdversaryStrategy::Custom(entries) => {
                let parts: Vec<String> = entries
                    .iter()
                    .map(|(r, s)| format!("{r}={}", s.keyword().replace(' ', ":")))
                    .collect();
                format!("custom {}", parts.join(" "))
            }
        }
    }
}

/// Which runtime checkers are armed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Checks {
    pub safety: bool,
    pub liveness: bool,
    pub latency: bool,
    pub msg_complexity: bool,
}

/// A transaction injection: delivered to `target`'s mempool at `time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInjection {
    pub label: String,
    pub time: u64,
    pub target: NodeId,
    pub tx: Transaction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub n: u32,
    pub f: u32,
    pub timers: TimerConfig,
    pub horizon: u64,
    pub seed: u64,
    pub checks: Checks,
    pub phases: Vec<SynchronyPhase>,
    pub partitions: Vec<Partition>,
    pub byzantine: BTreeMap<NodeId, AdversaryStrategy>,
    pub mints: Vec<(Owner, u64)>,
    pub injections: Vec<TxInjection>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
}

fn perr(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        msg: msg.into(),
    }
}

impl Scenario {
    /// Digest of the canonical text form; identifies the scenario in trace
    /// headers and reports.
    pub fn digest(&self) -> Digest {
        Digest::of(self.canonical_text().as_bytes())
    }

    pub fn quorum(&self) -> u32 {
        2 * self.f + 1
    }

    pub fn is_byzantine(&self, id: NodeId) -> bool {
        self.byzantine.contains_key(&id)
    }

    pub fn honest_nodes(&self) -> Vec<NodeId> {
        (0..self.n)
            .map(NodeId)
            .filter(|id| !self.is_byzantine(*id))
            .collect()
    }

    /// The genesis coinbase transaction implied by the mints.
    pub fn coinbase(&self) -> Transaction {
        Transaction::mint(self.mints.clone())
    }

    /// Output reference for the i-th mint.
    pub fn mint_ref(&self, index: u32) -> OutputRef {
        OutputRef {
            tx_id: self.coinbase().id(),
            index,
        }
    }

    /// Validates all structural constraints. Called by the parser and again
    /// by the simulator for programmatically built scenarios.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let c = |msg: String| Err(ScenarioError::Constraint(msg));
        if self.n < 3 * self.f + 1 {
            return c(format!("n={} < 3f+1={}", self.n, 3 * self.f + 1));
        }
        if self.n == 0 {
            return c("n must be positive".into());
        }
        if self.byzantine.len() as u32 > self.f {
            return c(format!(
                "{} byzantine nodes exceed f={}",
                self.byzantine.len(),
                self.f
            ));
        }
        for id in self.byzantine.keys() {
            if id.0 >= self.n {
                return c(format!("byzantine id {} out of range", id.0));
            }
        }
        for (id, strat) in &self.byzantine {
            if let AdversaryStrategy::Custom(entries) = strat {
                if entries.is_empty() {
                    return c(format!("node {}: empty custom table", id.0));
                }
                if entries
                    .iter()
                    .any(|(_, s)| matches!(s, AdversaryStrategy::Custom(_)))
                {
                    return c(format!("node {}: nested custom strategy", id.0));
                }
            }
            if let AdversaryStrategy::WithholdFrom(set) = strat {
                if set.iter().any(|t| t.0 >= self.n) {
                    return c(format!("node {}: withhold target out of range", id.0));
                }
            }
        }
        if self.checks.liveness && !self.timers.satisfies_liveness_bounds() {
            return c(format!(
                "timers ({}, {}) violate 2Δ < creator < 3Δ and 5Δ < round for Δ={}",
                self.timers.creator_timeout, self.timers.round_timeout, self.timers.delta
            ));
        }
        if self.phases.is_empty() {
            return c("at least one synchrony phase required".into());
        }
        if self.phases[0].start != 0 {
            return c("first phase must start at 0".into());
        }
        for w in self.phases.windows(2) {
            if w[0].end != w[1].start {
                return c(format!(
                    "phases must be contiguous: {} != {}",
                    w[0].end, w[1].start
                ));
            }
        }
        if self.phases.last().unwrap().end < self.horizon {
            return c("phases must cover the horizon".into());
        }
        for p in &self.phases {
            if p.start >= p.end {
                return c(format!("empty phase [{}, {})", p.start, p.end));
            }
        }
        for part in &self.partitions {
            if part.start >= part.end {
                return c(format!("empty partition window [{}, {})", part.start, part.end));
            }
            let mut seen = BTreeSet::new();
            for g in &part.groups {
                for id in g {
                    if id.0 >= self.n {
                        return c(format!("partition member {} out of range", id.0));
                    }
                    if !seen.insert(*id) {
                        return c(format!("node {} in two partition groups", id.0));
                    }
                }
            }
            if seen.len() as u32 != self.n {
                return c("partition groups must cover all nodes".into());
            }
        }
        // injections must spend known outputs and conserve value
        let mut known: BTreeMap<TxId, &Transaction> = BTreeMap::new();
        let coinbase = self.coinbase();
        known.insert(coinbase.id(), &coinbase);
        let injected: Vec<&Transaction> = self.injections.iter().map(|i| &i.tx).collect();
        for (i, inj) in self.injections.iter().enumerate() {
            if inj.target.0 >= self.n {
                return c(format!("injection {} target out of range", inj.label));
            }
            if inj.time >= self.horizon {
                return c(format!("injection {} after horizon", inj.label));
            }
            if inj.tx.inputs.is_empty() {
                return c(format!("injection {} has no inputs", inj.label));
            }
            let mut in_sum = 0u64;
            for input in &inj.tx.inputs {
                let Some(src) = known.get(&input.tx_id) else {
                    return c(format!(
                        "injection {} spends unknown transaction {}",
                        inj.label, input.tx_id
                    ));
                };
                let Some((_, amount)) = src.outputs.get(input.index as usize) else {
                    return c(format!(
                        "injection {} spends out-of-range output {}",
                        inj.label, input
                    ));
                };
                in_sum += amount;
            }
            let out_sum: u64 = inj.tx.outputs.iter().map(|(_, a)| a).sum();
            if in_sum != out_sum {
                return c(format!(
                    "injection {} does not conserve value: {} in, {} out",
                    inj.label, in_sum, out_sum
                ));
            }
            known.insert(injected[i].id(), injected[i]);
        }
        Ok(())
    }

    /// Canonical re-emission of the scenario in the text format.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("name {}\n", self.name));
        s.push_str(&format!("n {}\nf {}\n", self.n, self.f));
        s.push_str(&format!("seed {}\n", self.seed));
        s.push_str(&format!("horizon {}\n", self.horizon));
        s.push_str(&format!("delta {}\n", self.timers.delta));
        s.push_str(&format!("creator-timeout {}\n", self.timers.creator_timeout));
        s.push_str(&format!("round-timeout {}\n", self.timers.round_timeout));
        let mut checks = Vec::new();
        if self.checks.safety {
            checks.push("safety");
        }
        if self.checks.liveness {
            checks.push("liveness");
        }
        if self.checks.latency {
            checks.push("latency");
        }
        if self.checks.msg_complexity {
            checks.push("msg-complexity");
        }
        if !checks.is_empty() {
            s.push_str(&format!("checks {}\n", checks.join(" ")));
        }
        for p in &self.phases {
            let mode = match p.mode {
                SynchronyMode::Synchronous(Jitter::Fixed) => "sync fixed".into(),
                SynchronyMode::Synchronous(Jitter::Uniform) => "sync uniform".into(),
                SynchronyMode::Asynchronous => "async".to_string(),
            };
            s.push_str(&format!("phase {} {} {}\n", p.start, p.end, mode));
        }
        for part in &self.partitions {
            let groups: Vec<String> = part
                .groups
                .iter()
                .map(|g| g.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(","))
                .collect();
            s.push_str(&format!(
                "partition {} {} {}\n",
                part.start,
                part.end,
                groups.join(" ")
            ));
        }
        for (id, strat) in &self.byzantine {
            s.push_str(&format!("byzantine {} {}\n", id.0, strat.keyword()));
        }
        for (owner, amount) in &self.mints {
            s.push_str(&format!("mint {owner} {amount}\n"));
        }
        let mut labels: BTreeMap<TxId, String> = BTreeMap::new();
        labels.insert(self.coinbase().id(), "genesis".into());
        for inj in &self.injections {
            let inputs: Vec<String> = inj
                .tx
                .inputs
                .iter()
                .map(|r| {
                    let name = labels
                        .get(&r.tx_id)
                        .cloned()
                        .unwrap_or_else(|| r.tx_id.0.short());
                    format!("{}:{}", name, r.index)
                })
                .collect();
            let outputs: Vec<String> = inj
                .tx
                .outputs
                .iter()
                .map(|(o, a)| format!("{o}:{a}"))
                .collect();
            s.push_str(&format!(
                "tx {} {} {} {} -> {}\n",
                inj.label,
                inj.time,
                inj.target.0,
                inputs.join(" "),
                outputs.join(" ")
            ));
            labels.insert(inj.tx.id(), inj.label.clone());
        }
        s
    }

    /// Parses the text format. See `scenarios/SCHEMA.md`.
    ///
    /// ```
    /// use permitbft::scenario::Scenario;
    ///
    /// let s = Scenario::parse("
    ///     name demo
    ///     n 4
    ///     f 1
    ///     horizon 20000
    ///     checks safety latency
    ///     phase 0 20000 sync fixed
    ///     byzantine 3 silent
    ///     mint c0 100
    ///     tx pay 1000 0 genesis:0 -> c1:60 c2:40
    /// ").unwrap();
    /// assert_eq!(s.quorum(), 3);
    /// assert_eq!(s.injections[0].tx.outputs.len(), 2);
    /// // n=3 cannot host a 2f+1 quorum that outnumbers f byzantine nodes
    /// assert!(Scenario::parse("n 3\nf 1\nhorizon 1000").is_err());
    /// ```
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut name = String::from("unnamed");
        let mut n: Option<u32> = None;
        let mut f: Option<u32> = None;
        let mut seed = 0u64;
        let mut horizon: Option<u64> = None;
        let mut timers = TimerConfig::default_ticks();
        let mut checks = Checks::default();
        let mut phases = Vec::new();
        let mut partitions = Vec::new();
        let mut byzantine = BTreeMap::new();
        let mut mints: Vec<(Owner, u64)> = Vec::new();
        let mut injections: Vec<TxInjection> = Vec::new();
        let mut labels: BTreeMap<String, Transaction> = BTreeMap::new();

        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let rest: Vec<&str> = it.collect();
            let one = |rest: &[&str]| -> Result<String, ScenarioError> {
                if rest.len() != 1 {
                    return Err(perr(ln, format!("{key} expects one value")));
                }
                Ok(rest[0].to_string())
            };
            match key {
                "name" => name = one(&rest)?,
                "n" => n = Some(parse_num(ln, &one(&rest)?)?),
                "f" => f = Some(parse_num(ln, &one(&rest)?)?),
                "seed" => seed = parse_num(ln, &one(&rest)?)?,
                "horizon" => horizon = Some(parse_num(ln, &one(&rest)?)?),
                "delta" => timers.delta = parse_num(ln, &one(&rest)?)?,
                "creator-timeout" => timers.creator_timeout = parse_num(ln, &one(&rest)?)?,
                "round-timeout" => timers.round_timeout = parse_num(ln, &one(&rest)?)?,
                "checks" => {
                    for c in &rest {
                        match *c {
                            "safety" => checks.safety = true,
                            "liveness" => checks.liveness = true,
                            "latency" => checks.latency = true,
                            "msg-complexity" => checks.msg_complexity = true,
                            other => return Err(perr(ln, format!("unknown check '{other}'"))),
                        }
                    }
                }
                "phase" => {
                    if rest.len() < 3 {
                        return Err(perr(ln, "phase expects: start end sync|async [jitter]"));
                    }
                    let start = parse_num(ln, rest[0])?;
                    let end = parse_num(ln, rest[1])?;
                    let mode = match rest[2] {
                        "sync" => {
                            let jitter = match rest.get(3).copied().unwrap_or("uniform") {
                                "fixed" => Jitter::Fixed,
                                "uniform" => Jitter::Uniform,
                                other => return Err(perr(ln, format!("unknown jitter '{other}'"))),
                            };
                            SynchronyMode::Synchronous(jitter)
                        }
                        "async" => SynchronyMode::Asynchronous,
                        other => return Err(perr(ln, format!("unknown phase mode '{other}'"))),
                    };
                    phases.push(SynchronyPhase { start, end, mode });
                }
                "partition" => {
                    if rest.len() < 4 {
                        return Err(perr(ln, "partition expects: start end group group..."));
                    }
                    let start = parse_num(ln, rest[0])?;
                    let end = parse_num(ln, rest[1])?;
                    let groups: Result<Vec<BTreeSet<NodeId>>, _> = rest[2..]
                        .iter()
                        .map(|g| parse_group(ln, g))
                        .collect();
                    partitions.push(Partition {
                        start,
                        end,
                        groups: groups?,
                    });
                }
                "byzantine" => {
                    if rest.len() < 2 {
                        return Err(perr(ln, "byzantine expects: node strategy [args]"));
                    }
                    let id = NodeId(parse_num::<u32>(ln, rest[0])?);
                    let strat = parse_strategy(ln, &rest[1..])?;
                    byzantine.insert(id, strat);
                }
                "mint" => {
                    if rest.len() != 2 {
                        return Err(perr(ln, "mint expects: owner amount"));
                    }
                    let owner = parse_owner(ln, rest[0])?;
                    let amount = parse_num(ln, rest[1])?;
                    mints.push((owner, amount));
                }
                "tx" => {
                    // tx label time target in... -> owner:amount...
                    if rest.len() < 5 {
                        return Err(perr(ln, "tx expects: label time target inputs -> outputs"));
                    }
                    let label = rest[0].to_string();
                    let time = parse_num(ln, rest[1])?;
                    let target = NodeId(parse_num::<u32>(ln, rest[2])?);
                    let arrow = rest
                        .iter()
                        .position(|t| *t == "->")
                        .ok_or_else(|| perr(ln, "tx is missing '->'"))?;
                    if arrow < 4 || arrow + 1 >= rest.len() {
                        return Err(perr(ln, "tx needs inputs before '->' and outputs after"));
                    }
                    let coinbase = Transaction::mint(mints.clone());
                    let mut inputs = Vec::new();
                    for r in &rest[3..arrow] {
                        let (src, idx) = r
                            .rsplit_once(':')
                            .ok_or_else(|| perr(ln, format!("bad input ref '{r}'")))?;
                        let index: u32 = parse_num(ln, idx)?;
                        let tx_id = if src == "genesis" {
                            coinbase.id()
                        } else {
                            labels
                                .get(src)
                                .map(|t| t.id())
                                .ok_or_else(|| perr(ln, format!("unknown tx label '{src}'")))?
                        };
                        inputs.push(OutputRef { tx_id, index });
                    }
                    let mut outputs = Vec::new();
                    for o in &rest[arrow + 1..] {
                        let (owner, amount) = o
                            .rsplit_once(':')
                            .ok_or_else(|| perr(ln, format!("bad output '{o}'")))?;
                        outputs.push((parse_owner(ln, owner)?, parse_num(ln, amount)?));
                    }
                    let tx = Transaction::new(inputs, outputs);
                    if labels.insert(label.clone(), tx.clone()).is_some() {
                        return Err(perr(ln, format!("duplicate tx label '{label}'")));
                    }
                    injections.push(TxInjection {
                        label,
                        time,
                        target,
                        tx,
                    });
                }
                other => return Err(perr(ln, format!("unknown directive '{other}'"))),
            }
        }
        let n = n.ok_or_else(|| perr(0, "missing 'n'"))?;
        let f = f.ok_or_else(|| perr(0, "missing 'f'"))?;
        let horizon = horizon.ok_or_else(|| perr(0, "missing 'horizon'"))?;
        if phases.is_empty() {
            // default: one synchronous phase covering the run
            phases.push(SynchronyPhase {
                start: 0,
                end: horizon,
                mode: SynchronyMode::Synchronous(Jitter::Uniform),
            });
        }
        injections.sort_by_key(|i| i.time); // stable: schedule order for ties
        let scenario = Scenario {
            name,
            n,
            f,
            timers,
            horizon,
            seed,
            checks,
            phases,
            partitions,
            byzantine,
            mints,
            injections,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioError::Constraint(format!("cannot read {}: {e}", path.display()))
        })?;
        Scenario::parse(&text)
    }

    /// Synchrony phase active at `t` (the last one if `t` is past the end).
    pub fn phase_at(&self, t: u64) -> &SynchronyPhase {
        self.phases
            .iter()
            .find(|p| p.start <= t && t < p.end)
            .unwrap_or_else(|| self.phases.last().unwrap())
    }

    /// Start of the next synchronous phase at or after `t`, if any.
    pub fn next_sync_start(&self, t: u64) -> Option<u64> {
        self.phases
            .iter()
            .filter(|p| matches!(p.mode, SynchronyMode::Synchronous(_)) && p.start >= t)
            .map(|p| p.start)
            .min()
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, ScenarioError> {
    s.parse()
        .map_err(|_| perr(line, format!("bad number '{s}'")))
}

fn parse_group(line: usize, s: &str) -> Result<BTreeSet<NodeId>, ScenarioError> {
    s.split(',')
        .map(|x| Ok(NodeId(parse_num::<u32>(line, x)?)))
        .collect()
}

fn parse_owner(line: usize, s: &str) -> Result<Owner, ScenarioError> {
    if let Some(rest) = s.strip_prefix('c') {
        Ok(Owner::Client(parse_num(line, rest)?))
    } else if let Some(rest) = s.strip_prefix('n') {
        Ok(Owner::Node(NodeId(parse_num(line, rest)?)))
    } else {
        Err(perr(line, format!("bad owner '{s}' (use nK or cK)")))
    }
}

fn parse_strategy(line: usize, parts: &[&str]) -> Result<AdversaryStrategy, ScenarioError> {
    let simple = |name: &str, args: &[&str]| -> Result<AdversaryStrategy, ScenarioError> {
        match name {
            "honest" => Ok(AdversaryStrategy::Honest),
            "silent" => Ok(AdversaryStrategy::Silent),
            "crash-at" => Ok(AdversaryStrategy::CrashAt(parse_num(
                line,
                args.first().ok_or_else(|| perr(line, "crash-at needs a round"))?,
            )?)),
            "equivocate" => Ok(AdversaryStrategy::EquivocateBlocks(parse_num(
                line,
                args.first().ok_or_else(|| perr(line, "equivocate needs a count"))?,
            )?)),
            "withhold" => Ok(AdversaryStrategy::WithholdFrom(parse_group(
                line,
                args.first().ok_or_else(|| perr(line, "withhold needs targets"))?,
            )?)),
            "stale-permit" => Ok(AdversaryStrategy::StalePermit(parse_num(
                line,
                args.first().ok_or_else(|| perr(line, "stale-permit needs a lag"))?,
            )?)),
            "spam-timeouts" => Ok(AdversaryStrategy::SpamTimeouts),
            other => Err(perr(line, format!("unknown strategy '{other}'"))),
        }
    };
    match parts[0] {
        "custom" => {
            let mut entries = Vec::new();
            for spec in &parts[1..] {
                let (round, rest) = spec
                    .split_once('=')
                    .ok_or_else(|| perr(line, format!("bad custom entry '{spec}'")))?;
                let args: Vec<&str> = rest.split(':').collect();
                entries.push((parse_num(line, round)?, simple(args[0], &args[1..])?));
            }
            entries.sort_by_key(|(r, _)| *r);
            Ok(AdversaryStrategy::Custom(entries))
        }
        name => simple(name, &parts[1..]),
    }
}

/// Picks the effective simple strategy for a round (resolves Custom tables).
pub fn effective_strategy(strategy: &AdversaryStrategy, round: Round) -> &AdversaryStrategy {
    match strategy {
        AdversaryStrategy::Custom(entries) => entries
            .iter()
            .rev()
            .find(|(from, _)| *from <= round.0)
            .map(|(_, s)| s)
            .unwrap_or(&AdversaryStrategy::Silent),
        s => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
name demo
n 4
f 1
seed 7
horizon 20000
delta 1000
creator-timeout 2500
round-timeout 5500
checks safety liveness
phase 0 20000 sync fixed
byzantine 3 silent
mint c0 100
tx pay 5000 0 genesis:0 -> c7:60 c8:40
";

    #[test]
    fn parses_basic_scenario() {
        let s = Scenario::parse(BASIC).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.f, 1);
        assert_eq!(s.byzantine[&NodeId(3)], AdversaryStrategy::Silent);
        assert_eq!(s.injections.len(), 1);
        assert_eq!(s.injections[0].target, NodeId(0));
        assert_eq!(s.injections[0].tx.outputs.len(), 2);
        assert!(s.checks.safety && s.checks.liveness);
    }

    #[test]
    fn canonical_text_roundtrips() {
        let s = Scenario::parse(BASIC).unwrap();
        let re = Scenario::parse(&s.canonical_text()).unwrap();
        assert_eq!(s, re);
        assert_eq!(s.digest(), re.digest());
    }

    #[test]
    fn rejects_quorum_impossible() {
        let text = BASIC.replace("n 4", "n 3");
        match Scenario::parse(&text) {
            Err(ScenarioError::Constraint(msg)) => assert!(msg.contains("3f+1")),
            other => panic!("expected constraint error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_timers_with_liveness_on() {
        let text = BASIC.replace("creator-timeout 2500", "creator-timeout 3500");
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Constraint(_))
        ));
        // same timers pass if the liveness check is off
        let text2 = text.replace("checks safety liveness", "checks safety");
        assert!(Scenario::parse(&text2).is_ok());
    }

    #[test]
    fn rejects_unknown_tx_ref() {
        let text = BASIC.replace("genesis:0", "ghost:0");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn rejects_value_mismatch() {
        let text = BASIC.replace("c7:60 c8:40", "c7:60 c8:41");
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Constraint(_))
        ));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = format!("{BASIC}gibberish 1 2\n");
        match Scenario::parse(&text) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn custom_strategy_resolution() {
        let strat = AdversaryStrategy::Custom(vec![
            (0, AdversaryStrategy::Silent),
            (4, AdversaryStrategy::Honest),
        ]);
        assert_eq!(effective_strategy(&strat, Round(0)), &AdversaryStrategy::Silent);
        assert_eq!(effective_strategy(&strat, Round(3)), &AdversaryStrategy::Silent);
        assert_eq!(effective_strategy(&strat, Round(7)), &AdversaryStrategy::Honest);
    }

    #[test]
    fn chained_tx_refs_resolve() {
        let text = format!("{BASIC}tx pay2 6000 1 pay:0 -> c9:60\n");
        let s = Scenario::parse(&text).unwrap();
        assert_eq!(s.injections.len(), 2);
        let first_id = s.injections[0].tx.id();
        assert!(s.injections[1].tx.inputs.iter().all(|r| r.tx_id == first_id));
    }
}
