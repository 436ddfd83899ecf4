//! UTXO ledger inference over a block graph.
//!
//! Conflicts (two transactions spending a shared output) can only come from
//! misbehaving owners, so the ledger never rolls back: a transaction is
//! committed once it sits in a committed block with a child whose respected
//! committed set carries no conflicting transaction. Outputs contested by
//! conflicting transactions none of which commits are frozen — permanently
//! unspendable unless a later child discriminates a winner.
//!
//! Ordering happens in two steps: committed transactions are immediately
//! safe to execute (the unordered `executable_head`), and enter the
//! `finalized_order` once the graph has grown two depths past their block,
//! at which point the respected set at that depth can no longer change.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::dag::BlockDag;
use crate::types::{BlockId, OutputRef, Transaction, TxId};

/// Do two transactions contend for an output? (A transaction never conflicts
/// with itself.)
pub fn conflicts(t1: &Transaction, t2: &Transaction) -> bool {
    if t1 == t2 {
        return false;
    }
    t1.inputs.intersection(&t2.inputs).next().is_some()
}

/// Committed view of the ledger inferred from a dag snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LedgerView {
    pub committed_txs: BTreeSet<TxId>,
    pub frozen_refs: BTreeSet<OutputRef>,
    pub finalized_order: Vec<TxId>,
    pub executable_head: BTreeSet<TxId>,
}

/// All transactions of non-genesis blocks stored in `dag`, keyed by id, with
/// the blocks containing each. The genesis coinbase is the initial UTXO
/// state, not an inferred transaction.
fn transactions_by_id(dag: &BlockDag) -> BTreeMap<TxId, (Transaction, Vec<BlockId>)> {
    let mut map: BTreeMap<TxId, (Transaction, Vec<BlockId>)> = BTreeMap::new();
    for block in dag.iter_in_order() {
        if block.is_genesis() {
            continue;
        }
        for tx in &block.transactions {
            map.entry(tx.id())
                .or_insert_with(|| (tx.clone(), Vec::new()))
                .1
                .push(block.id());
        }
    }
    map
}

/// Transaction commit rule: a transaction is committed iff it lies in a
/// committed block `b` and some child `b'` of `b` sees no conflicting
/// transaction in the committed blocks it respects.
pub fn committed_transactions(dag: &BlockDag) -> BTreeSet<TxId> {
    let txs = transactions_by_id(dag);
    let committed_blocks: Vec<BlockId> = dag
        .iter_in_order()
        .map(|b| b.id())
        .filter(|id| dag.is_committed(id).unwrap())
        .collect();
    let mut out = BTreeSet::new();
    'tx: for (tx_id, (tx, holders)) in &txs {
        for holder in holders {
            if !dag.is_committed(holder).unwrap() {
                continue;
            }
            for child in dag.children_of(holder).unwrap() {
                let child_pos = dag.block(child).unwrap().position();
                let mut conflicted = false;
                'scan: for cb in &committed_blocks {
                    if !dag.respects(&child_pos, cb).unwrap() {
                        continue;
                    }
                    for other in &dag.block(cb).unwrap().transactions {
                        if conflicts(tx, other) {
                            conflicted = true;
                            break 'scan;
                        }
                    }
                }
                if !conflicted {
                    out.insert(*tx_id);
                    continue 'tx;
                }
            }
        }
    }
    out
}

/// Frozen output references: inputs contested by two or more distinct
/// transactions appearing in committed blocks, none of which is committed.
/// Frozen outputs stay unspendable ("deadlocked funds") until a
/// discriminating child commits one contender.
///
/// ```
/// use permitbft::ledger::{committed_transactions, frozen_refs};
/// use permitbft::testutil::DagBuilder;
/// use permitbft::types::{Owner, OutputRef, Position, Round, Transaction};
///
/// let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 100)]);
/// let g = b.genesis();
/// let coin = OutputRef {
///     tx_id: b.dag.block(&g).unwrap().transactions[0].id(),
///     index: 0,
/// };
/// // two spends of the same coin land in sibling blocks
/// let to_alice = Transaction::new([coin], vec![(Owner::Client(1), 100)]);
/// let to_bob = Transaction::new([coin], vec![(Owner::Client(2), 100)]);
/// let left = b.add_block(Round(0), &Position::singleton(g), vec![to_alice]);
/// let right = b.add_block(Round(1), &Position::singleton(g), vec![to_bob]);
///
/// // a merged child commits both blocks jointly: every future block
/// // respects both spends, so neither can ever commit — the coin freezes
/// b.add_block(Round(2), &Position::new([left, right]), vec![]);
/// assert!(committed_transactions(&b.dag).is_empty());
/// assert_eq!(frozen_refs(&b.dag), [coin].into_iter().collect());
/// ```
pub fn frozen_refs(dag: &BlockDag) -> BTreeSet<OutputRef> {
    let committed = committed_transactions(dag);
    let mut spenders: BTreeMap<OutputRef, BTreeSet<TxId>> = BTreeMap::new();
    for block in dag.iter_in_order() {
        if !dag.is_committed(&block.id()).unwrap() {
            continue;
        }
        for tx in &block.transactions {
            for input in &tx.inputs {
                spenders.entry(*input).or_default().insert(tx.id());
            }
        }
    }
    spenders
        .into_iter()
        .filter(|(_, txs)| txs.len() >= 2 && txs.iter().all(|t| !committed.contains(t)))
        .map(|(r, _)| r)
        .collect()
}

/// Two-step total ordering. A committed block finalizes its committed
/// transactions once some block exists at depth >= its depth + 2: a block at
/// depth d needed an honest permit majority at depth d-1, so nothing can be
/// appended below d-1 anymore and the respected set two levels down is
/// pinned. Blocks finalize in ascending (depth, round, creator, id),
/// transactions in block list order. Committed-but-unfinalized transactions
/// form the executable head.
pub fn linearize(dag: &BlockDag) -> (Vec<TxId>, BTreeSet<TxId>) {
    let committed = committed_transactions(dag);
    let max_depth = dag
        .iter_in_order()
        .map(|b| dag.block_depth(&b.id()).unwrap())
        .max();
    let mut blocks: Vec<_> = dag
        .iter_in_order()
        .filter(|b| dag.is_committed(&b.id()).unwrap())
        .collect();
    blocks.sort_by_key(|b| {
        (
            dag.block_depth(&b.id()).unwrap(),
            b.round().0,
            b.creator().0,
            b.id(),
        )
    });
    let mut finalized = Vec::new();
    let mut seen = BTreeSet::new();
    let mut head = BTreeSet::new();
    for block in blocks {
        let depth = dag.block_depth(&block.id()).unwrap();
        let triggered = max_depth.map_or(false, |m| m >= depth + 2);
        for tx in &block.transactions {
            let id = tx.id();
            if !committed.contains(&id) || !seen.insert(id) {
                continue;
            }
            if triggered {
                finalized.push(id);
            } else {
                head.insert(id);
            }
        }
    }
    (finalized, head)
}

/// Full ledger view of a dag snapshot.
pub fn ledger_view(dag: &BlockDag) -> LedgerView {
    let committed_txs = committed_transactions(dag);
    let frozen = frozen_refs(dag);
    let (finalized_order, executable_head) = linearize(dag);
    LedgerView {
        committed_txs,
        frozen_refs: frozen,
        finalized_order,
        executable_head,
    }
}

/// Spendable outputs: ref -> (owner, amount).
pub type UtxoSet = BTreeMap<OutputRef, (crate::types::Owner, u64)>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecuteError {
    /// A committed transaction failed to apply. Committed transactions must
    /// always apply cleanly; hitting this means the commit rule or the view
    /// construction is broken.
    #[error("invalid spend of {0} by {1}")]
    InvalidSpend(OutputRef, TxId),
}

/// Applies a ledger view to a UTXO state: finalized transactions first, then
/// the executable head (in ascending id order — head transactions are
/// pairwise non-conflicting so the order cannot matter). Spent refs are
/// removed, new outputs added, frozen refs excluded from the spendable set.
pub fn execute(dag: &BlockDag, view: &LedgerView, genesis_state: &UtxoSet) -> Result<UtxoSet, ExecuteError> {
    let txs = transactions_by_id(dag);
    let mut state = genesis_state.clone();
    let ordered: Vec<TxId> = view
        .finalized_order
        .iter()
        .chain(view.executable_head.iter())
        .copied()
        .collect();
    for tx_id in ordered {
        let (tx, _) = txs.get(&tx_id).expect("view references a stored transaction");
        for input in &tx.inputs {
            if state.remove(input).is_none() {
                return Err(ExecuteError::InvalidSpend(*input, tx_id));
            }
        }
        for (index, (owner, amount)) in tx.outputs.iter().enumerate() {
            state.insert(
                OutputRef {
                    tx_id,
                    index: index as u32,
                },
                (*owner, *amount),
            );
        }
    }
    for frozen in &view.frozen_refs {
        state.remove(frozen);
    }
    Ok(state)
}

/// Initial UTXO state from the genesis coinbase.
pub fn genesis_state(dag: &BlockDag) -> UtxoSet {
    let genesis = dag.block(&dag.genesis_id()).unwrap();
    let mut state = UtxoSet::new();
    for tx in &genesis.transactions {
        let id = tx.id();
        for (index, (owner, amount)) in tx.outputs.iter().enumerate() {
            state.insert(
                OutputRef {
                    tx_id: id,
                    index: index as u32,
                },
                (*owner, *amount),
            );
        }
    }
    state
}

/// Ledger dump for golden tests: one `tx_id status` line per transaction in
/// committed blocks, status in {final, head, frozen-input}, final entries in
/// order first.
pub fn dump(dag: &BlockDag) -> String {
    let view = ledger_view(dag);
    let txs = transactions_by_id(dag);
    let frozen_txs: BTreeSet<TxId> = txs
        .iter()
        .filter(|(_, (tx, holders))| {
            holders.iter().any(|h| dag.is_committed(h).unwrap())
                && tx.inputs.iter().any(|i| view.frozen_refs.contains(i))
        })
        .map(|(id, _)| *id)
        .collect();
    let mut out = String::new();
    for tx in &view.finalized_order {
        out.push_str(&format!("{} final\n", tx.0.short()));
    }
    for tx in &view.executable_head {
        out.push_str(&format!("{} head\n", tx.0.short()));
    }
    for tx in &frozen_txs {
        if !view.committed_txs.contains(tx) {
            out.push_str(&format!("{} frozen-input\n", tx.0.short()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{chain_dag, DagBuilder};
    use crate::types::{Owner, Position, Round};

    fn coin(dag: &BlockDag, index: u32) -> OutputRef {
        OutputRef {
            tx_id: dag.block(&dag.genesis_id()).unwrap().transactions[0].id(),
            index,
        }
    }

    fn spend(input: OutputRef, to: u32, amount: u64) -> Transaction {
        Transaction::new([input], vec![(Owner::Client(to), amount)])
    }

    #[test]
    fn conflicts_basic() {
        let a = spend(
            OutputRef {
                tx_id: TxId(crate::codec::Digest::of(b"x")),
                index: 0,
            },
            1,
            5,
        );
        let b = spend(
            OutputRef {
                tx_id: TxId(crate::codec::Digest::of(b"x")),
                index: 0,
            },
            2,
            5,
        );
        let c = spend(
            OutputRef {
                tx_id: TxId(crate::codec::Digest::of(b"y")),
                index: 0,
            },
            1,
            5,
        );
        assert!(conflicts(&a, &b)); // both spend x:0
        assert!(!conflicts(&a, &c)); // disjoint inputs
        assert!(!conflicts(&a, &a)); // identity
    }

    #[test]
    fn tx_commits_with_child_and_no_conflicts() {
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 100)]);
        let g = b.genesis();
        let tx = spend(coin(&b.dag, 0), 1, 100);
        let tx_id = tx.id();
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![tx]);
        assert!(committed_transactions(&b.dag).is_empty()); // uncommitted tip
        b.add_block(Round(1), &Position::singleton(b1), vec![]);
        assert_eq!(
            committed_transactions(&b.dag),
            [tx_id].into_iter().collect()
        );
        assert!(frozen_refs(&b.dag).is_empty());
    }

    #[test]
    fn double_spend_in_merged_siblings_freezes() {
        // conflicting txs in sibling blocks, committed only via a joint child
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 100)]);
        let g = b.genesis();
        let contested = coin(&b.dag, 0);
        let t1 = spend(contested, 1, 100);
        let t2 = spend(contested, 2, 100);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![t1.clone()]);
        let b2 = b.add_block(Round(1), &Position::singleton(g), vec![t2.clone()]);
        let c = b.add_block(Round(2), &Position::new([b1, b2]), vec![]);
        // every child of b1/b2 respects both sides: neither commits
        assert!(committed_transactions(&b.dag).is_empty());
        assert_eq!(frozen_refs(&b.dag), [contested].into_iter().collect());
        // growing the chain does not unfreeze
        let d = b.add_block(Round(3), &Position::singleton(c), vec![]);
        b.add_block(Round(4), &Position::singleton(d), vec![]);
        assert!(committed_transactions(&b.dag).is_empty());
        assert_eq!(frozen_refs(&b.dag), [contested].into_iter().collect());
    }

    #[test]
    fn discriminating_child_commits_winner_and_unfreezes() {
        // conflict where one side is committed by a child that respects only
        // it: the winner spends normally, nothing is frozen
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 100)]);
        let g = b.genesis();
        let contested = coin(&b.dag, 0);
        let t1 = spend(contested, 1, 100);
        let t2 = spend(contested, 2, 100);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![t1.clone()]);
        let _b2 = b.add_block(Round(1), &Position::singleton(g), vec![t2.clone()]);
        // child of b1 only: respects b1 (ancestor) but not the sibling b2
        b.add_block(Round(2), &Position::singleton(b1), vec![]);
        assert_eq!(
            committed_transactions(&b.dag),
            [t1.id()].into_iter().collect()
        );
        assert!(frozen_refs(&b.dag).is_empty());
    }

    #[test]
    fn linearize_empty_dag() {
        let b = DagBuilder::new(4, 1);
        let (finalized, head) = linearize(&b.dag);
        assert!(finalized.is_empty());
        assert!(head.is_empty());
    }

    #[test]
    fn linearize_chain_staging() {
        // g <- b1 <- b2 <- b3: b1's txs finalized, b2's in the head
        // (committed by b3), b3's absent
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 10), (Owner::Client(1), 10), (Owner::Client(2), 10)]);
        let g = b.genesis();
        let t1 = spend(coin(&b.dag, 0), 11, 10);
        let t2 = spend(coin(&b.dag, 1), 12, 10);
        let t3 = spend(coin(&b.dag, 2), 13, 10);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![t1.clone()]);
        let b2 = b.add_block(Round(1), &Position::singleton(b1), vec![t2.clone()]);
        b.add_block(Round(2), &Position::singleton(b2), vec![t3.clone()]);
        let (finalized, head) = linearize(&b.dag);
        assert_eq!(finalized, vec![t1.id()]);
        assert_eq!(head, [t2.id()].into_iter().collect());
    }

    #[test]
    fn linearize_merged_siblings_order() {
        // siblings merged by a child then extended: both blocks' txs
        // finalize, ordered by (depth, round, creator, id)
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 10), (Owner::Client(1), 10)]);
        let g = b.genesis();
        let t1 = spend(coin(&b.dag, 0), 11, 10);
        let t2 = spend(coin(&b.dag, 1), 12, 10);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![t1.clone()]);
        let b2 = b.add_block(Round(1), &Position::singleton(g), vec![t2.clone()]);
        let c = b.add_block(Round(2), &Position::new([b1, b2]), vec![]);
        let d = b.add_block(Round(3), &Position::singleton(c), vec![]);
        b.add_block(Round(4), &Position::singleton(d), vec![]);
        let (finalized, _head) = linearize(&b.dag);
        // both at depth 1; round 0 before round 1
        assert_eq!(finalized, vec![t1.id(), t2.id()]);
    }

    #[test]
    fn execute_applies_and_is_idempotent() {
        let (dag, _) = chain_dag(2);
        let view = ledger_view(&dag);
        let st0 = genesis_state(&dag);
        let st1 = execute(&dag, &view, &st0).unwrap();
        let st2 = execute(&dag, &view, &st0).unwrap();
        assert_eq!(st1, st2); // replay determinism
        assert_eq!(st1, st0); // chain of empty blocks changes nothing
    }

    #[test]
    fn execute_single_committed_spend() {
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 100)]);
        let g = b.genesis();
        let tx = spend(coin(&b.dag, 0), 7, 100);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![tx.clone()]);
        b.add_block(Round(1), &Position::singleton(b1), vec![]);
        let view = ledger_view(&b.dag);
        let state = execute(&b.dag, &view, &genesis_state(&b.dag)).unwrap();
        assert_eq!(state.len(), 1);
        let (owner, amount) = state.values().next().unwrap();
        assert_eq!(*owner, Owner::Client(7));
        assert_eq!(*amount, 100);
    }

    #[test]
    fn conservation_with_frozen_funds() {
        let mut b = DagBuilder::with_mints(4, 1, vec![(Owner::Client(0), 60), (Owner::Client(1), 40)]);
        let g = b.genesis();
        let contested = coin(&b.dag, 0);
        let t1 = spend(contested, 1, 60);
        let t2 = spend(contested, 2, 60);
        let ok = spend(coin(&b.dag, 1), 3, 40);
        let b1 = b.add_block(Round(0), &Position::singleton(g), vec![t1, ok.clone()]);
        let b2 = b.add_block(Round(1), &Position::singleton(g), vec![t2]);
        b.add_block(Round(2), &Position::new([b1, b2]), vec![]);
        let view = ledger_view(&b.dag);
        assert_eq!(view.committed_txs, [ok.id()].into_iter().collect());
        let state = execute(&b.dag, &view, &genesis_state(&b.dag)).unwrap();
        let spendable: u64 = state.values().map(|(_, a)| a).sum();
        let frozen: u64 = 60; // the contested genesis output
        assert_eq!(spendable + frozen, 100);
    }
}
