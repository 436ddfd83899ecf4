//! Append-only block graph.
//!
//! A block's parents are the members of its proof's position, so the graph is
//! established purely through position pointers. The module answers the
//! structural queries the protocol is built on:
//!
//! * `depth` — length of a shortest genesis path to a block or position,
//! * `is_committed` — a block is committed once it has at least one child,
//! * `respects` — a position respects every block on a genesis path to it,
//!   plus every uncommitted block at depth at most `position.depth - 2`,
//! * `minimal_position` — the smallest position that respects a set of
//!   endorsed positions, computed by dropping dominated members,
//! * `validate_proposal` — recomputes minimality on the validator side.
//!
//! Blocks whose parents are unknown wait in a [`PendingPool`] until the
//! missing blocks arrive (the node layer fetches them explicitly).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::SignatureScheme;
use crate::types::{
    creator_of, validate_proof, Block, BlockId, NodeId, Position, ProofError, Proposal, Round,
};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("unknown block {0}")]
pub struct UnknownBlock(pub BlockId);

/// Reasons a block is rejected outright (as opposed to parked as pending).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RejectReason {
    #[error("bad proof: {0}")]
    BadProof(ProofError),
    #[error("bad creator signature")]
    BadSignature,
    #[error("signer {signer} is not the creator {expected} of {round}")]
    WrongCreator {
        signer: NodeId,
        expected: NodeId,
        round: Round,
    },
    #[error("empty position on a non-genesis block")]
    EmptyPosition,
    #[error("duplicate of an already stored block")]
    Duplicate,
}

/// Outcome of [`BlockDag::insert_block`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// Proof and signature are valid but these parents are missing; the dag
    /// is unchanged and the block waits in the pending pool.
    Pending(BTreeSet<BlockId>),
    Rejected(RejectReason),
}

/// Blocks that reference unknown parents, keyed by what they are missing.
#[derive(Debug, Default)]
pub struct PendingPool {
    blocks: BTreeMap<BlockId, (Block, BTreeSet<BlockId>)>,
    by_missing: BTreeMap<BlockId, BTreeSet<BlockId>>,
}

impl PendingPool {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    fn park(&mut self, block: Block, missing: BTreeSet<BlockId>) {
        let id = block.id();
        for m in &missing {
            self.by_missing.entry(*m).or_default().insert(id);
        }
        self.blocks.insert(id, (block, missing));
    }

    /// Marks `arrived` as present; returns the blocks that now have all
    /// parents available, in id order.
    fn unlock(&mut self, arrived: &BlockId) -> Vec<Block> {
        let Some(waiters) = self.by_missing.remove(arrived) else {
            return Vec::new();
        };
        let mut ready = Vec::new();
        for w in waiters {
            if let Some((_, missing)) = self.blocks.get_mut(&w) {
                missing.remove(arrived);
                if missing.is_empty() {
                    ready.push(self.blocks.remove(&w).unwrap().0);
                }
            }
        }
        ready
    }
}

/// The append-only block graph of one node (or of the omniscient oracle).
#[derive(Debug)]
pub struct BlockDag {
    n: u32,
    f: u32,
    genesis_id: BlockId,
    blocks: BTreeMap<BlockId, Block>,
    children: BTreeMap<BlockId, BTreeSet<BlockId>>,
    depth: BTreeMap<BlockId, u64>,
    /// Ancestor closure per block (all blocks on any genesis path), kept
    /// incrementally; fine at simulation scale.
    ancestors: BTreeMap<BlockId, BTreeSet<BlockId>>,
    pending: PendingPool,
    /// Insertion order, for deterministic exports.
    order: Vec<BlockId>,
}

impl BlockDag {
    pub fn new(n: u32, f: u32, genesis: Block) -> Self {
        assert!(genesis.is_genesis(), "genesis block must carry an empty proof");
        let gid = genesis.id();
        let mut dag = BlockDag {
            n,
            f,
            genesis_id: gid,
            blocks: BTreeMap::new(),
            children: BTreeMap::new(),
            depth: BTreeMap::new(),
            ancestors: BTreeMap::new(),
            pending: PendingPool::default(),
            order: Vec::new(),
        };
        dag.blocks.insert(gid, genesis);
        dag.children.insert(gid, BTreeSet::new());
        dag.depth.insert(gid, 0);
        dag.ancestors.insert(gid, BTreeSet::new());
        dag.order.push(gid);
        dag
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis_id
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    pub fn block(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false // genesis is always present
    }

    pub fn pending(&self) -> &PendingPool {
        &self.pending
    }

    /// Stored blocks in insertion order.
    pub fn iter_in_order(&self) -> impl Iterator<Item = &Block> + '_ {
        self.order.iter().map(|id| &self.blocks[id])
    }

    pub fn children_of(&self, id: &BlockId) -> Option<&BTreeSet<BlockId>> {
        self.children.get(id)
    }

    /// Depth of a stored block.
    pub fn block_depth(&self, id: &BlockId) -> Result<u64, UnknownBlock> {
        self.depth.get(id).copied().ok_or(UnknownBlock(*id))
    }

    /// Depth of a position: the minimum over its members (a shortest genesis
    /// path reaches the set at its shallowest member).
    pub fn depth(&self, position: &Position) -> Result<u64, UnknownBlock> {
        let mut min = None;
        for b in position.iter() {
            let d = self.block_depth(b)?;
            min = Some(min.map_or(d, |m: u64| m.min(d)));
        }
        min.ok_or(UnknownBlock(self.genesis_id)) // empty position: only genesis has one
            .or(Ok(0))
    }

    /// A block is committed once any stored block lists it as a parent.
    pub fn is_committed(&self, id: &BlockId) -> Result<bool, UnknownBlock> {
        self.children
            .get(id)
            .map(|c| !c.is_empty())
            .ok_or(UnknownBlock(*id))
    }

    fn is_ancestor_of(&self, anc: &BlockId, of: &BlockId) -> bool {
        self.ancestors
            .get(of)
            .map_or(false, |set| set.contains(anc))
    }

    /// Does `position` respect `block`? True iff the block lies on some
    /// genesis path to the position (member or ancestor of a member), or the
    /// block is uncommitted with depth at most `depth(position) - 2`.
    pub fn respects(&self, position: &Position, block: &BlockId) -> Result<bool, UnknownBlock> {
        if !self.contains(block) {
            return Err(UnknownBlock(*block));
        }
        if position.contains(block) {
            return Ok(true);
        }
        for m in position.iter() {
            if !self.contains(m) {
                return Err(UnknownBlock(*m));
            }
        }
        if position.iter().any(|m| self.is_ancestor_of(block, m)) {
            return Ok(true);
        }
        let pd = self.depth(position)?;
        if !self.is_committed(block)? && pd >= 2 && self.block_depth(block)? <= pd - 2 {
            return Ok(true);
        }
        Ok(false)
    }

    /// Does `position` respect every member of `other`?
    pub fn respects_position(
        &self,
        position: &Position,
        other: &Position,
    ) -> Result<bool, UnknownBlock> {
        for b in other.iter() {
            if !self.respects(position, b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The smallest position that respects every endorsed position.
    ///
    /// Starts from the union of all members and repeatedly drops (in
    /// ascending id order, to a fixpoint) any member the remaining set can
    /// cover: a member is removed only while the remainder still respects
    /// every input position, which keeps the contract that validators
    /// re-check.
    ///
    /// Ancestors collapse into their descendants, genuine siblings merge:
    ///
    /// ```
    /// use permitbft::testutil::DagBuilder;
    /// use permitbft::types::{Position, Round};
    ///
    /// let mut b = DagBuilder::new(4, 1);
    /// let g = b.genesis();
    /// let left = b.add_block(Round(0), &Position::singleton(g), vec![]);
    /// let right = b.add_block(Round(1), &Position::singleton(g), vec![]);
    ///
    /// // permits split over two siblings: the minimal position keeps both
    /// let merged = b.dag
    ///     .minimal_position(&[Position::singleton(left), Position::singleton(right)])
    ///     .unwrap();
    /// assert_eq!(merged, Position::new([left, right]));
    ///
    /// // a permit for the parent is covered by one for the child
    /// let child = b.add_block(Round(2), &merged, vec![]);
    /// let folded = b.dag
    ///     .minimal_position(&[Position::singleton(left), Position::singleton(child)])
    ///     .unwrap();
    /// assert_eq!(folded, Position::singleton(child));
    /// ```
    pub fn minimal_position(
        &self,
        endorsed: &[Position],
    ) -> Result<Position, UnknownBlock> {
        assert!(!endorsed.is_empty(), "minimal_position needs at least one input");
        let mut union: BTreeSet<BlockId> = BTreeSet::new();
        for p in endorsed {
            for b in p.iter() {
                if !self.contains(b) {
                    return Err(UnknownBlock(*b));
                }
                union.insert(*b);
            }
        }
        let mut current = union;
        loop {
            let mut changed = false;
            for b in current.clone() {
                if current.len() == 1 {
                    break;
                }
                let mut candidate = current.clone();
                candidate.remove(&b);
                let cand_pos = Position::new(candidate.iter().copied());
                let covers_all = endorsed
                    .iter()
                    .try_fold(true, |acc, p| {
                        Ok::<bool, UnknownBlock>(acc && self.respects_position(&cand_pos, p)?)
                    })?;
                if covers_all {
                    current = candidate;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(Position::new(current))
    }

    /// Validates and stores a block. `Pending` lists missing parents and
    /// leaves the dag unchanged (the block parks in the pending pool).
    pub fn insert_block(
        &mut self,
        block: Block,
        scheme: &impl SignatureScheme,
    ) -> InsertOutcome {
        let id = block.id();
        if self.contains(&id) {
            return InsertOutcome::Rejected(RejectReason::Duplicate);
        }
        if block.is_genesis() {
            // A second genesis-shaped block can only be an adversarial copy;
            // the real one was stored at construction.
            return InsertOutcome::Rejected(RejectReason::EmptyPosition);
        }
        let (round, position) = match validate_proof(&block.proof, self.n, self.f, scheme) {
            Ok(rp) => rp,
            Err(e) => return InsertOutcome::Rejected(RejectReason::BadProof(e)),
        };
        if position.is_empty() {
            return InsertOutcome::Rejected(RejectReason::EmptyPosition);
        }
        let expected = creator_of(round, self.n);
        if block.creator() != expected {
            return InsertOutcome::Rejected(RejectReason::WrongCreator {
                signer: block.creator(),
                expected,
                round,
            });
        }
        if !block.verify_creator_signature(scheme) {
            return InsertOutcome::Rejected(RejectReason::BadSignature);
        }
        let missing: BTreeSet<BlockId> = position
            .iter()
            .filter(|p| !self.contains(p))
            .copied()
            .collect();
        if !missing.is_empty() {
            self.pending.park(block, missing.clone());
            return InsertOutcome::Pending(missing);
        }
        self.store(id, block, &position);
        InsertOutcome::Inserted
    }

    fn store(&mut self, id: BlockId, block: Block, position: &Position) {
        let depth = 1 + position
            .iter()
            .map(|p| self.depth[p])
            .min()
            .expect("non-genesis position is non-empty");
        let mut anc = BTreeSet::new();
        for p in position.iter() {
            anc.insert(*p);
            anc.extend(self.ancestors[p].iter().copied());
            self.children.get_mut(p).unwrap().insert(id);
        }
        self.blocks.insert(id, block);
        self.children.insert(id, BTreeSet::new());
        self.depth.insert(id, depth);
        self.ancestors.insert(id, anc);
        self.order.push(id);
    }

    /// Pending blocks unlocked by the arrival of `id`, ready for re-insertion
    /// by the caller (which may cascade further).
    pub fn take_unlocked(&mut self, id: &BlockId) -> Vec<Block> {
        self.pending.unlock(id)
    }

    /// Validates a proposal against the current graph: proof-style permit
    /// checks for one round whose creator signed it, and the position must
    /// equal the minimal position of the permits (recomputed here).
    pub fn validate_proposal(
        &self,
        proposal: &Proposal,
        scheme: &impl SignatureScheme,
    ) -> Result<(Round, Position), ProposalError> {
        let required = (2 * self.f + 1) as usize;
        if proposal.permits.len() < required {
            return Err(ProposalError::InsufficientPermits {
                found: proposal.permits.len(),
                required,
            });
        }
        let mut issuers = BTreeSet::new();
        let round = proposal.permits[0].round;
        for p in &proposal.permits {
            if !issuers.insert(p.issuer()) {
                return Err(ProposalError::DuplicateIssuer(p.issuer()));
            }
            if p.issuer().0 >= self.n || !p.verify(scheme) {
                return Err(ProposalError::BadSignature);
            }
            if p.round != round {
                return Err(ProposalError::MixedRound);
            }
        }
        let creator = creator_of(round, self.n);
        if proposal.creator() != creator {
            return Err(ProposalError::WrongCreator {
                signer: proposal.creator(),
                expected: creator,
            });
        }
        if !proposal.verify_creator_signature(scheme) {
            return Err(ProposalError::BadSignature);
        }
        let endorsed: Vec<Position> =
            proposal.permits.iter().map(|p| p.position.clone()).collect();
        let minimal = self
            .minimal_position(&endorsed)
            .map_err(ProposalError::UnknownBlock)?;
        if minimal != proposal.position {
            return Err(ProposalError::NotMinimal {
                expected: minimal,
                found: proposal.position.clone(),
            });
        }
        Ok((round, minimal))
    }

    /// Newline-delimited export: `block_id parent_ids,... round creator depth
    /// committed_flag`, in insertion order. Genesis has `-` parents.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for id in &self.order {
            let b = &self.blocks[id];
            let parents = if b.is_genesis() {
                "-".to_string()
            } else {
                b.position()
                    .iter()
                    .map(|p| p.0.short())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let committed = if self.children[id].is_empty() { 0 } else { 1 };
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                id.0.short(),
                parents,
                b.round().0,
                b.creator().0,
                self.depth[id],
                committed
            ));
        }
        out
    }
}

/// Reasons a proposal is rejected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProposalError {
    #[error("insufficient permits: {found} < {required}")]
    InsufficientPermits { found: usize, required: usize },
    #[error("duplicate issuer {0}")]
    DuplicateIssuer(NodeId),
    #[error("permits span multiple rounds")]
    MixedRound,
    #[error("signer {signer} is not the creator {expected}")]
    WrongCreator { signer: NodeId, expected: NodeId },
    #[error("bad signature")]
    BadSignature,
    #[error("position is not the minimal one: expected {expected:?}, found {found:?}")]
    NotMinimal { expected: Position, found: Position },
    #[error("references unknown block: {0}")]
    UnknownBlock(UnknownBlock),
}
