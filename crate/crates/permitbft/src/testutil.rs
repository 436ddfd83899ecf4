//! Builders and generators for hand-made and randomized block graphs.
//!
//! Used by unit tests, the property suites and the oracle-equivalence
//! acceptance tests; kept in the library so integration tests can share it.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::crypto::SimScheme;
use crate::dag::{BlockDag, InsertOutcome};
use crate::types::{
    creator_of, Block, BlockId, NodeId, Owner, Permit, Position, Proof, Round, Transaction,
};

const S: SimScheme = SimScheme;

/// Signed permits for one (round, position) from the given issuers.
pub fn permits_for(round: Round, position: &Position, issuers: &[u32]) -> Vec<Permit> {
    issuers
        .iter()
        .map(|i| Permit::new(&S, NodeId(*i), round, position.clone()))
        .collect()
}

/// A valid block for `round` at `position`, signed by the round's creator,
/// with a proof from the 2f+1 lowest node ids.
pub fn make_block(n: u32, f: u32, round: Round, position: &Position, txs: Vec<Transaction>) -> Block {
    let issuers: Vec<u32> = (0..2 * f + 1).collect();
    let proof = Proof::new(permits_for(round, position, &issuers));
    Block::new(&S, creator_of(round, n), proof, txs)
}

/// Incremental builder around a [`BlockDag`] with a default genesis.
pub struct DagBuilder {
    pub n: u32,
    pub f: u32,
    pub dag: BlockDag,
}

impl DagBuilder {
    pub fn new(n: u32, f: u32) -> Self {
        Self::with_mints(n, f, vec![(Owner::Client(0), 100)])
    }

    pub fn with_mints(n: u32, f: u32, mints: Vec<(Owner, u64)>) -> Self {
        let genesis = Block::genesis(mints);
        DagBuilder {
            n,
            f,
            dag: BlockDag::new(n, f, genesis),
        }
    }

    pub fn genesis(&self) -> BlockId {
        self.dag.genesis_id()
    }

    /// Inserts a valid block and returns its id. Panics if insertion fails,
    /// which would be a bug in the test itself.
    pub fn add_block(&mut self, round: Round, position: &Position, txs: Vec<Transaction>) -> BlockId {
        let b = make_block(self.n, self.f, round, position, txs);
        let id = b.id();
        match self.dag.insert_block(b, &S) {
            InsertOutcome::Inserted => id,
            other => panic!("test block rejected: {other:?}"),
        }
    }
}

/// Chain of `len` blocks (genesis included): g <- b1 <- b2 <- ...
/// Returns the dag and ids in chain order.
pub fn chain_dag(len: usize) -> (BlockDag, Vec<BlockId>) {
    let mut b = DagBuilder::new(4, 1);
    let mut ids = vec![b.genesis()];
    for i in 1..len {
        let id = b.add_block(Round(i as u64 - 1), &Position::singleton(ids[i - 1]), vec![]);
        ids.push(id);
    }
    (b.dag, ids)
}

/// Randomized dag for oracle-equivalence testing: grows by attaching blocks
/// to random tip subsets (occasionally a stale block), with transactions
/// spending a small shared coin pool so that conflicts occur.
pub struct RandomDag {
    pub dag: BlockDag,
    pub blocks: Vec<BlockId>,
}

pub fn random_dag(seed: u64, max_blocks: usize) -> RandomDag {
    let mut rng = StdRng::seed_from_u64(seed);
    let mints: Vec<(Owner, u64)> = (0..4).map(|c| (Owner::Client(c), 10)).collect();
    let mut b = DagBuilder::with_mints(4, 1, mints);
    let coinbase_id = b
        .dag
        .block(&b.genesis())
        .unwrap()
        .transactions[0]
        .id();
    let mut ids = vec![b.genesis()];
    let mut tips = vec![b.genesis()];
    let n_blocks = rng.gen_range(1..=max_blocks.max(1));
    for i in 0..n_blocks {
        // position: mostly tips, sometimes any stored block
        let mut members = std::collections::BTreeSet::new();
        let k = rng.gen_range(1..=2.min(tips.len()));
        for _ in 0..k {
            members.insert(tips[rng.gen_range(0..tips.len())]);
        }
        if rng.gen_bool(0.2) {
            members.insert(ids[rng.gen_range(0..ids.len())]);
        }
        let pos = Position::new(members.iter().copied());
        // transactions: each block may spend one of the 4 genesis coins;
        // coins are reused across blocks with probability, creating
        // double-spends in fork branches.
        let mut txs = Vec::new();
        if rng.gen_bool(0.6) {
            let coin = rng.gen_range(0..4u32);
            txs.push(Transaction::new(
                [crate::types::OutputRef {
                    tx_id: coinbase_id,
                    index: coin,
                }],
                vec![(Owner::Client(100 + i as u32), 10)],
            ));
        }
        let id = b.add_block(Round(i as u64), &pos, txs);
        tips.retain(|t| !pos.contains(t));
        tips.push(id);
        ids.push(id);
    }
    RandomDag {
        dag: b.dag,
        blocks: ids,
    }
}

/// Endorsement sets shaped like the positions honest nodes actually send in
/// one round: singletons and block-positions drawn from blocks within one
/// depth of the deepest, plus sibling merges of those. Mirrors the protocol
/// invariant that permits never endorse positions more than one level below
/// the deepest stored block.
pub fn random_endorsements(seed: u64, dag: &BlockDag) -> Vec<Position> {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let max_depth = dag
        .iter_in_order()
        .map(|b| dag.block_depth(&b.id()).unwrap())
        .max()
        .unwrap_or(0);
    let recent: Vec<BlockId> = dag
        .iter_in_order()
        .map(|b| b.id())
        .filter(|id| dag.block_depth(id).unwrap() + 1 >= max_depth)
        .collect();
    let k = rng.gen_range(1..=3usize);
    let mut out = Vec::new();
    for _ in 0..k {
        if recent.len() >= 2 && rng.gen_bool(0.3) {
            let a = recent[rng.gen_range(0..recent.len())];
            let b = recent[rng.gen_range(0..recent.len())];
            out.push(Position::new([a, b]));
        } else {
            out.push(Position::singleton(recent[rng.gen_range(0..recent.len())]));
        }
    }
    out
}
