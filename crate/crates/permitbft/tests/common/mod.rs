//! Brute-force reference oracles, independent of the library's query paths.
//!
//! Everything here recomputes graph facts from raw block data (parent lists
//! scanned from proof positions) rather than through the dag's cached
//! indices, so agreement with the library is evidence, not tautology.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use permitbft::dag::BlockDag;
use permitbft::types::{Block, BlockId, Position, Transaction, TxId};

/// Raw edge structure scraped from the blocks themselves.
pub struct RawGraph {
    pub blocks: Vec<Block>,
    pub parents: BTreeMap<BlockId, Vec<BlockId>>,
    pub genesis: BlockId,
}

impl RawGraph {
    pub fn from_dag(dag: &BlockDag) -> Self {
        let blocks: Vec<Block> = dag.iter_in_order().cloned().collect();
        let mut parents = BTreeMap::new();
        let mut genesis = None;
        for b in &blocks {
            if b.is_genesis() {
                genesis = Some(b.id());
            }
            parents.insert(b.id(), b.position().iter().copied().collect());
        }
        RawGraph {
            blocks,
            parents,
            genesis: genesis.expect("dag has a genesis"),
        }
    }

    /// BFS shortest-path depth from genesis along parent->child edges.
    pub fn depth(&self, target: &BlockId) -> u64 {
        let mut children: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
        for (child, ps) in &self.parents {
            for p in ps {
                children.entry(*p).or_default().push(*child);
            }
        }
        let mut dist = BTreeMap::new();
        dist.insert(self.genesis, 0u64);
        let mut queue = VecDeque::from([self.genesis]);
        while let Some(b) = queue.pop_front() {
            let d = dist[&b];
            for c in children.get(&b).cloned().unwrap_or_default() {
                if !dist.contains_key(&c) {
                    dist.insert(c, d + 1);
                    queue.push_back(c);
                }
            }
        }
        dist[target]
    }

    pub fn position_depth(&self, position: &Position) -> u64 {
        position.iter().map(|b| self.depth(b)).min().unwrap_or(0)
    }

    /// All ancestors of a block (blocks on any genesis path to it), by DFS
    /// over parent links.
    pub fn ancestors(&self, of: &BlockId) -> BTreeSet<BlockId> {
        let mut out = BTreeSet::new();
        let mut stack = self.parents[of].clone();
        while let Some(p) = stack.pop() {
            if out.insert(p) {
                stack.extend(self.parents[&p].iter().copied());
            }
        }
        out
    }

    pub fn is_committed(&self, b: &BlockId) -> bool {
        self.parents.values().any(|ps| ps.contains(b))
    }

    /// The respects relation recomputed from first principles.
    pub fn respects(&self, position: &Position, block: &BlockId) -> bool {
        if position.contains(block) {
            return true;
        }
        if position.iter().any(|m| self.ancestors(m).contains(block)) {
            return true;
        }
        let pd = self.position_depth(position);
        !self.is_committed(block) && pd >= 2 && self.depth(block) <= pd - 2
    }

    fn conflicts(a: &Transaction, b: &Transaction) -> bool {
        a != b && a.inputs.intersection(&b.inputs).next().is_some()
    }

    /// Transaction commit rule by enumerating every (holder, child,
    /// respected committed set) triple directly.
    pub fn committed_transactions(&self) -> BTreeSet<TxId> {
        let mut out = BTreeSet::new();
        for holder in &self.blocks {
            if holder.is_genesis() {
                continue;
            }
            for tx in &holder.transactions {
                if !self.is_committed(&holder.id()) {
                    continue;
                }
                let children: Vec<&Block> = self
                    .blocks
                    .iter()
                    .filter(|b| b.position().contains(&holder.id()))
                    .collect();
                let committed_ok = children.iter().any(|child| {
                    let child_pos = child.position();
                    !self.blocks.iter().any(|other| {
                        !other.is_genesis()
                            && self.is_committed(&other.id())
                            && self.respects(&child_pos, &other.id())
                            && other.transactions.iter().any(|t| Self::conflicts(tx, t))
                    })
                });
                if committed_ok {
                    out.insert(tx.id());
                }
            }
        }
        out
    }

    /// Exhaustive search over all subsets of the endorsed members for the
    /// smallest position respecting every endorsed position. Panics if the
    /// minimum is not unique, which would make the protocol's recomputation
    /// ill-defined.
    pub fn smallest_respecting_subset(&self, endorsed: &[Position]) -> Position {
        let union: Vec<BlockId> = endorsed
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let targets: Vec<BlockId> = union.clone();
        assert!(union.len() <= 16, "exhaustive search space too large");
        let mut respecting: Vec<BTreeSet<BlockId>> = Vec::new();
        for mask in 1u32..(1 << union.len()) {
            let subset: BTreeSet<BlockId> = union
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, b)| *b)
                .collect();
            let pos = Position::new(subset.iter().copied());
            if targets.iter().all(|t| self.respects(&pos, t)) {
                respecting.push(subset);
            }
        }
        let min = respecting
            .iter()
            .map(|s| s.len())
            .min()
            .expect("the full union respects itself");
        let smallest: Vec<&BTreeSet<BlockId>> =
            respecting.iter().filter(|s| s.len() == min).collect();
        assert_eq!(
            smallest.len(),
            1,
            "smallest respecting subset not unique: {smallest:?}"
        );
        Position::new(smallest[0].iter().copied())
    }
}
