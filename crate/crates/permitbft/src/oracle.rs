//! Omniscient runtime safety oracle.
//!
//! The oracle watches every emitted honest permit and every created block
//! (including blocks the adversary reveals to nobody) and maintains the
//! global picture the safety argument is stated over:
//!
//! * a block is *promised* once f+1 honest nodes issued permits for one
//!   (round, position) containing it,
//! * after each event it asserts: every committed block is promised; no two
//!   conflicting blocks are promised through independent f+1-honest
//!   positions; no two conflicting blocks are independently committed; every
//!   honest permit respects all currently promised blocks; and the committed
//!   transaction set has no conflicting pair, never shrinks, and never
//!   reorders its finalized prefix.
//!
//! Any violation carries a witness and aborts the run; the harness then
//! shrinks the event schedule to a minimal reproducing prefix.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::Encode;
use crate::crypto::SimScheme;
use crate::dag::{BlockDag, InsertOutcome};
use crate::ledger::{committed_transactions, conflicts, linearize};
use crate::types::{Block, BlockId, NodeId, Permit, Position, Round, Transaction, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A committed block was never promised (Lemma "committed implies
    /// promised" broken).
    CommittedNotPromised,
    /// Two conflicting blocks promised via independent f+1-honest positions.
    IndependentPromise,
    /// Two conflicting blocks independently committed by children.
    IndependentCommit,
    /// An honest permit failed to respect a promised block.
    UnsafePermit,
    /// Two conflicting transactions committed simultaneously.
    ConflictingCommit,
    /// The committed transaction set shrank.
    CommitRevoked,
    /// The finalized order changed an already-emitted prefix.
    FinalizedReordered,
}

#[derive(Debug, Clone, Error)]
#[error("{kind:?}: {detail}")]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

fn violation(kind: ViolationKind, detail: String) -> Violation {
    Violation { kind, detail }
}

/// Global oracle state, updated incrementally per event.
pub struct Oracle {
    f: u32,
    /// Union of all created blocks, whether or not any honest node saw them.
    pub dag: BlockDag,
    honest: BTreeSet<NodeId>,
    /// round -> issuer -> endorsed position (honest permits only).
    honest_permits: BTreeMap<Round, BTreeMap<NodeId, Position>>,
    /// Blocks contained in a position with >= f+1 honest permits in some
    /// round. Monotone.
    promised: BTreeSet<BlockId>,
    /// The (round, position) pairs that reached f+1 honest permits.
    anchored: BTreeSet<(Round, Position)>,
    /// Honest issuers whose permit for a round failed to respect some
    /// already-promised block. The safety invariant guarantees a majority of
    /// honest nodes issue safe permits, so more than f unsafe issuers in one
    /// round is a violation; up to f is expected under equivocation (the
    /// deceived minority).
    unsafe_issuers: BTreeMap<Round, BTreeSet<NodeId>>,
    /// Respected-block sets, cached per position of interest; recomputed on
    /// every insertion because commitment changes the respects relation.
    respected: BTreeMap<Position, BTreeSet<BlockId>>,
    conflicting_pairs: Vec<(BlockId, BlockId)>,
    committed_txs: BTreeSet<TxId>,
    finalized: Vec<TxId>,
    /// Canonical-encoding registry: two distinct encodings hashing to one id
    /// would break block identity, so the simulator panics on collision.
    registry: BTreeMap<BlockId, Vec<u8>>,
}

impl Oracle {
    pub fn new(n: u32, f: u32, genesis: Block, honest: BTreeSet<NodeId>) -> Self {
        Oracle {
            f,
            dag: BlockDag::new(n, f, genesis),
            honest,
            honest_permits: BTreeMap::new(),
            promised: BTreeSet::new(),
            anchored: BTreeSet::new(),
            unsafe_issuers: BTreeMap::new(),
            respected: BTreeMap::new(),
            conflicting_pairs: Vec::new(),
            committed_txs: BTreeSet::new(),
            finalized: Vec::new(),
            registry: BTreeMap::new(),
        }
    }

    pub fn promised(&self) -> &BTreeSet<BlockId> {
        &self.promised
    }

    pub fn committed_txs(&self) -> &BTreeSet<TxId> {
        &self.committed_txs
    }

    pub fn is_honest(&self, id: NodeId) -> bool {
        self.honest.contains(&id)
    }

    /// Has this block id ever been registered (created)?
    pub fn known_block(&self, id: &BlockId) -> bool {
        self.registry.contains_key(id)
    }

    /// Records an honest permit emission, checking the observable form of
    /// the safety invariant first: in every round, a majority of honest
    /// nodes issue safe permits (positions respecting all blocks promised so
    /// far), so at most f honest issuers per round may be unsafe. An
    /// equivocation victim holding the minority block is expected to be
    /// unsafe once; an f+1-th unsafe issuer is a violation.
    pub fn on_honest_permit(&mut self, issuer: NodeId, permit: &Permit) -> Result<(), Violation> {
        debug_assert!(self.honest.contains(&issuer));
        let mut offending = None;
        for b in &self.promised {
            let ok = self
                .dag
                .respects(&permit.position, b)
                .expect("honest permits reference created blocks");
            if !ok {
                offending = Some(*b);
                break;
            }
        }
        if let Some(b) = offending {
            let set = self.unsafe_issuers.entry(permit.round).or_default();
            set.insert(issuer);
            if set.len() as u32 > self.f {
                return Err(violation(
                    ViolationKind::UnsafePermit,
                    format!(
                        "{} honest nodes {:?} issued unsafe permits in {} (last: {issuer} at {:?} missing promised {b})",
                        set.len(),
                        set,
                        permit.round,
                        permit.position
                    ),
                ));
            }
        }
        let entry = self.honest_permits.entry(permit.round).or_default();
        let prev = entry.insert(issuer, permit.position.clone());
        debug_assert!(prev.is_none(), "honest node re-permitted a round");
        // promised update: does this (round, position) now have f+1 honest?
        let count = entry
            .values()
            .filter(|p| **p == permit.position)
            .count() as u32;
        if count >= self.f + 1 {
            let key = (permit.round, permit.position.clone());
            if self.anchored.insert(key) {
                for b in permit.position.iter() {
                    self.promised.insert(*b);
                }
                self.refresh_respected();
                return self.check_promise_independence();
            }
        }
        Ok(())
    }

    /// Records a block creation (at emission time, not delivery). Returns
    /// the transactions that became committed in the global view.
    pub fn on_block_created(
        &mut self,
        block: &Block,
        honest_creator: bool,
    ) -> Result<Vec<TxId>, Violation> {
        let id = block.id();
        let encoding = block.encode();
        if let Some(prev) = self.registry.get(&id) {
            assert_eq!(
                *prev, encoding,
                "digest collision: two block encodings share {id}"
            );
            return Ok(Vec::new()); // re-broadcast of a known block
        }
        self.registry.insert(id, encoding);
        match self.dag.insert_block(block.clone(), &SimScheme) {
            InsertOutcome::Inserted => {}
            InsertOutcome::Pending(missing) => {
                panic!("oracle saw a block before its parents were created: {missing:?}")
            }
            InsertOutcome::Rejected(reason) => {
                assert!(
                    !honest_creator,
                    "honest node created an invalid block: {reason}"
                );
                return Ok(Vec::new()); // byzantine junk no honest node accepts
            }
        }
        self.refresh_respected();
        // committed => promised, checked on the parents this block commits:
        // any valid proof carries f+1 honest permits for its position, and
        // those were recorded when emitted, so the parents must be promised
        // by now (genesis included, via the round-0 permits)
        for parent in block.position().iter() {
            if !self.promised.contains(parent) {
                return Err(violation(
                    ViolationKind::CommittedNotPromised,
                    format!("{id} commits unpromised parent {parent}"),
                ));
            }
        }
        self.check_promise_independence()?;
        self.check_commit_independence()?;
        self.check_transactions()
    }

    /// Recomputes the respected sets of every position of interest (anchored
    /// positions and block positions) and the conflicting-block pairs.
    fn refresh_respected(&mut self) {
        let blocks: Vec<BlockId> = self.dag.iter_in_order().map(|b| b.id()).collect();
        let mut positions: BTreeSet<Position> = self
            .anchored
            .iter()
            .map(|(_, p)| p.clone())
            .collect();
        for b in self.dag.iter_in_order() {
            if !b.is_genesis() {
                positions.insert(b.position());
            }
        }
        self.respected.clear();
        for pos in positions {
            let set: BTreeSet<BlockId> = blocks
                .iter()
                .filter(|b| self.dag.respects(&pos, b).unwrap())
                .copied()
                .collect();
            self.respected.insert(pos, set);
        }
        // conflicting pairs: neither block's position respects the other
        self.conflicting_pairs.clear();
        let non_genesis: Vec<(BlockId, Position)> = self
            .dag
            .iter_in_order()
            .filter(|b| !b.is_genesis())
            .map(|b| (b.id(), b.position()))
            .collect();
        for (i, (b1, p1)) in non_genesis.iter().enumerate() {
            for (b2, p2) in non_genesis.iter().skip(i + 1) {
                let r1 = &self.respected[p1];
                let r2 = &self.respected[p2];
                if !r1.contains(b2) && !r2.contains(b1) {
                    self.conflicting_pairs.push((*b1, *b2));
                }
            }
        }
    }

    /// No two conflicting blocks may be promised through independent
    /// anchored positions (one respecting each side but not the other).
    fn check_promise_independence(&self) -> Result<(), Violation> {
        for (b1, b2) in &self.conflicting_pairs {
            let side1 = self
                .anchored
                .iter()
                .find(|(_, p)| self.respected[p].contains(b1) && !self.respected[p].contains(b2));
            if side1.is_none() {
                continue;
            }
            let side2 = self
                .anchored
                .iter()
                .find(|(_, p)| self.respected[p].contains(b2) && !self.respected[p].contains(b1));
            if let (Some(p1), Some(p2)) = (side1, side2) {
                return Err(violation(
                    ViolationKind::IndependentPromise,
                    format!(
                        "{b1} and {b2} promised independently via {:?}@{} and {:?}@{}",
                        p1.1, p1.0, p2.1, p2.0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Out of a set of conflicting blocks, at most one may be committed by a
    /// child that does not respect the other side.
    fn check_commit_independence(&self) -> Result<(), Violation> {
        for (b1, b2) in &self.conflicting_pairs {
            let discriminating_child = |b: &BlockId, other: &BlockId| -> Option<BlockId> {
                self.dag
                    .children_of(b)
                    .unwrap()
                    .iter()
                    .find(|c| {
                        let pos = self.dag.block(c).unwrap().position();
                        !self.respected[&pos].contains(other)
                    })
                    .copied()
            };
            if let (Some(c1), Some(c2)) = (discriminating_child(b1, b2), discriminating_child(b2, b1))
            {
                return Err(violation(
                    ViolationKind::IndependentCommit,
                    format!("{b1} committed by {c1} and {b2} committed by {c2} independently"),
                ));
            }
        }
        Ok(())
    }

    /// Transaction-level safety: committed set is conflict-free and
    /// monotone, finalized order is append-only.
    fn check_transactions(&mut self) -> Result<Vec<TxId>, Violation> {
        let committed = committed_transactions(&self.dag);
        if !self.committed_txs.is_subset(&committed) {
            let lost: Vec<TxId> = self.committed_txs.difference(&committed).copied().collect();
            return Err(violation(
                ViolationKind::CommitRevoked,
                format!("committed transactions disappeared: {lost:?}"),
            ));
        }
        let mut txs: BTreeMap<TxId, Transaction> = BTreeMap::new();
        for b in self.dag.iter_in_order() {
            if b.is_genesis() {
                continue;
            }
            for t in &b.transactions {
                txs.insert(t.id(), t.clone());
            }
        }
        let list: Vec<&TxId> = committed.iter().collect();
        for (i, a) in list.iter().enumerate() {
            for b in list.iter().skip(i + 1) {
                if conflicts(&txs[a], &txs[b]) {
                    return Err(violation(
                        ViolationKind::ConflictingCommit,
                        format!("conflicting transactions {a} and {b} both committed"),
                    ));
                }
            }
        }
        let (finalized, _head) = linearize(&self.dag);
        if finalized.len() < self.finalized.len()
            || finalized[..self.finalized.len()] != self.finalized[..]
        {
            return Err(violation(
                ViolationKind::FinalizedReordered,
                format!(
                    "finalized prefix changed: had {:?}, now {:?}",
                    self.finalized, finalized
                ),
            ));
        }
        self.finalized = finalized;
        let newly: Vec<TxId> = committed.difference(&self.committed_txs).copied().collect();
        self.committed_txs = committed;
        Ok(newly)
    }

    /// Test-only: plants an anchored position without going through permit
    /// emission, to exercise the downstream checks in isolation.
    #[cfg(test)]
    pub(crate) fn force_anchor(&mut self, round: Round, position: Position) {
        self.anchored.insert((round, position.clone()));
        for b in position.iter() {
            self.promised.insert(*b);
        }
        self.refresh_respected();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::make_block;
    use crate::types::{Owner, OutputRef};

    const S: SimScheme = SimScheme;

    fn oracle() -> (Oracle, BlockId) {
        let genesis = Block::genesis(vec![(Owner::Client(0), 100)]);
        let gid = genesis.id();
        let honest: BTreeSet<NodeId> = [0, 1, 2].into_iter().map(NodeId).collect();
        (Oracle::new(4, 1, genesis, honest), gid)
    }

    fn permit(issuer: u32, round: u64, pos: &Position) -> Permit {
        Permit::new(&S, NodeId(issuer), Round(round), pos.clone())
    }

    #[test]
    fn optimistic_chain_is_clean() {
        let (mut o, g) = oracle();
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        assert!(o.promised().contains(&g));
        let b0 = make_block(4, 1, Round(0), &pos0, vec![]);
        assert!(o.on_block_created(&b0, true).unwrap().is_empty());
        let pos1 = Position::singleton(b0.id());
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 1, &pos1)).unwrap();
        }
        let b1 = make_block(4, 1, Round(1), &pos1, vec![]);
        o.on_block_created(&b1, true).unwrap();
    }

    #[test]
    fn equivocation_victim_tolerated_but_majority_unsafe_flagged() {
        let (mut o, g) = oracle();
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        // equivocation: two sibling blocks from one proof position
        let b1 = make_block(4, 1, Round(0), &pos0, vec![]);
        let b2 = make_block(
            4,
            1,
            Round(0),
            &pos0,
            vec![Transaction::mint(vec![(Owner::Client(9), 1)])],
        );
        o.on_block_created(&b1, false).unwrap();
        o.on_block_created(&b2, false).unwrap();
        // the majority side promises b1
        o.on_honest_permit(NodeId(0), &permit(0, 1, &Position::singleton(b1.id())))
            .unwrap();
        o.on_honest_permit(NodeId(1), &permit(1, 1, &Position::singleton(b1.id())))
            .unwrap();
        assert!(o.promised().contains(&b1.id()));
        assert!(!o.promised().contains(&b2.id()));
        // the deceived node still holds b2: one unsafe permit, within the
        // f-budget the invariant allows
        o.on_honest_permit(NodeId(2), &permit(2, 1, &Position::singleton(b2.id())))
            .unwrap();
        // but a second honest node going unsafe in one round breaks the
        // f+1-majority claim
        let err = o
            .on_honest_permit(NodeId(1), &permit(1, 2, &Position::singleton(b2.id())))
            .and_then(|_| {
                o.on_honest_permit(NodeId(2), &permit(2, 2, &Position::singleton(b2.id())))
            })
            .unwrap_err();
        assert_eq!(err.kind, ViolationKind::UnsafePermit);
    }

    #[test]
    fn fabricated_independent_promise_flagged() {
        let (mut o, g) = oracle();
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        let b1 = make_block(4, 1, Round(0), &pos0, vec![]);
        let b2 = make_block(
            4,
            1,
            Round(1),
            &pos0,
            vec![Transaction::mint(vec![(Owner::Client(9), 1)])],
        );
        o.on_block_created(&b1, false).unwrap();
        o.on_block_created(&b2, false).unwrap();
        // plant f+1-honest anchors on both siblings (bypassing the permit
        // path, which would flag the issuers first)
        o.force_anchor(Round(1), Position::singleton(b1.id()));
        o.force_anchor(Round(2), Position::singleton(b2.id()));
        // any subsequent event re-runs the pairwise check
        let c = make_block(4, 1, Round(2), &Position::singleton(b1.id()), vec![]);
        let err = o.on_block_created(&c, false).unwrap_err();
        assert_eq!(err.kind, ViolationKind::IndependentPromise);
    }

    #[test]
    fn merged_double_spend_commits_nothing_and_stays_clean() {
        let (mut o, g) = oracle();
        let coin = OutputRef {
            tx_id: o.dag.block(&g).unwrap().transactions[0].id(),
            index: 0,
        };
        let t1 = Transaction::new([coin], vec![(Owner::Client(1), 100)]);
        let t2 = Transaction::new([coin], vec![(Owner::Client(2), 100)]);
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        let b1 = make_block(4, 1, Round(0), &pos0, vec![t1]);
        let b2 = make_block(4, 1, Round(1), &pos0, vec![t2]);
        o.on_block_created(&b1, false).unwrap();
        // round 1 permits still endorse {g}? no: b1 exists but is not
        // promised-blocking; honest nodes that saw nothing keep {g}
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 1, &pos0)).unwrap();
        }
        o.on_block_created(&b2, false).unwrap();
        // merge child commits both sides jointly
        let merged = Position::new([b1.id(), b2.id()]);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 2, &merged)).unwrap();
        }
        let c = make_block(4, 1, Round(2), &merged, vec![]);
        let newly = o.on_block_created(&c, true).unwrap();
        assert!(newly.is_empty()); // both txs conflicted: neither commits
        assert!(o.committed_txs().is_empty());
    }

    #[test]
    fn fabricated_independent_commit_flagged() {
        // promises are planted jointly (one anchor covering both siblings) so
        // the promise-independence check stays quiet, then each sibling gets
        // a discriminating child: exactly the situation the commit rule must
        // never reach
        let (mut o, g) = oracle();
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        let b1 = make_block(4, 1, Round(0), &pos0, vec![]);
        let b2 = make_block(
            4,
            1,
            Round(1),
            &pos0,
            vec![Transaction::mint(vec![(Owner::Client(9), 1)])],
        );
        o.on_block_created(&b1, false).unwrap();
        o.on_block_created(&b2, false).unwrap();
        o.force_anchor(Round(2), Position::new([b1.id(), b2.id()]));
        let c1 = make_block(4, 1, Round(2), &Position::singleton(b1.id()), vec![]);
        o.on_block_created(&c1, false).unwrap();
        let c2 = make_block(4, 1, Round(3), &Position::singleton(b2.id()), vec![]);
        let err = o.on_block_created(&c2, false).unwrap_err();
        assert_eq!(err.kind, ViolationKind::IndependentCommit);
    }

    #[test]
    fn digest_registry_accepts_rebroadcast() {
        let (mut o, g) = oracle();
        let pos0 = Position::singleton(g);
        for i in 0..3 {
            o.on_honest_permit(NodeId(i), &permit(i, 0, &pos0)).unwrap();
        }
        let b0 = make_block(4, 1, Round(0), &pos0, vec![]);
        o.on_block_created(&b0, true).unwrap();
        // same block re-emitted: no-op
        assert!(o.on_block_created(&b0, true).unwrap().is_empty());
        assert_eq!(o.dag.len(), 2);
    }
}
