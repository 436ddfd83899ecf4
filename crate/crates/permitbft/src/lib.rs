//! Permit-driven byzantine consensus on a blockDAG, embedded in a
//! deterministic discrete-event network simulator.
//!
//! The protocol tolerates f < n/3 byzantine nodes among n = 3f+1 and inverts
//! the usual leader pattern: nodes send signed *permits* to the next
//! round-robin block creator proactively, endorsing the position where the
//! next block may be appended. 2f+1 matching permits form a *proof* that
//! authorizes a block; disagreement is resolved by creator *proposals* that
//! merge positions, growing a DAG rather than a chain. A UTXO ledger is
//! inferred from the graph: conflicting spends freeze the contested outputs
//! instead of rolling anything back.
//!
//! The crate is organized in protocol layers plus an experiment harness:
//!
//! * [`types`], [`crypto`], [`codec`] — signed artifacts and their canonical
//!   byte encoding,
//! * [`dag`] — the block graph: depth, the respects relation, commitment,
//!   minimal positions,
//! * [`ledger`] — transaction commitment, freezing, the two-step ordering,
//! * [`node`] — the per-node state machine (event in, actions out),
//! * [`sim`] — virtual clock, delivery scheduling, partitions, adversaries,
//! * [`scenario`] — declarative experiment inputs,
//! * [`oracle`], [`liveness`], [`metrics`] — omniscient runtime checkers,
//! * [`harness`] — run orchestration, fuzzing, reports, replay.
//!
//! A guided tour lives in the `book/` directory; `permitbft-cli` exposes the
//! harness as the `permitbft` command.
//!
//! # Example
//!
//! Building a small graph by hand and asking it protocol questions:
//!
//! ```
//! use permitbft::crypto::SimScheme;
//! use permitbft::dag::{BlockDag, InsertOutcome};
//! use permitbft::types::{creator_of, Block, NodeId, Owner, Position, Proof, Permit, Round};
//!
//! let genesis = Block::genesis(vec![(Owner::Client(0), 100)]);
//! let g = genesis.id();
//! let mut dag = BlockDag::new(4, 1, genesis);
//!
//! // Three nodes endorse appending at {genesis} in round 0.
//! let position = Position::singleton(g);
//! let permits: Vec<Permit> = (0..3)
//!     .map(|i| Permit::new(&SimScheme, NodeId(i), Round(0), position.clone()))
//!     .collect();
//! let block = Block::new(
//!     &SimScheme,
//!     creator_of(Round(0), 4),
//!     Proof { permits },
//!     vec![],
//! );
//! let id = block.id();
//!
//! assert_eq!(dag.insert_block(block, &SimScheme), InsertOutcome::Inserted);
//! assert!(dag.is_committed(&g).unwrap());      // genesis now has a child
//! assert!(!dag.is_committed(&id).unwrap());    // the tip does not
//! assert_eq!(dag.block_depth(&id).unwrap(), 1);
//! ```

pub mod codec;
pub mod crypto;
pub mod dag;
pub mod fuzz;
pub mod harness;
pub mod ledger;
pub mod liveness;
pub mod metrics;
pub mod node;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod testutil;
pub mod trace;
pub mod types;

pub use codec::Digest;
pub use types::{Block, BlockId, Message, NodeId, Position, Round, Transaction, TxId};
