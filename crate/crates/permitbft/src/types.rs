//! Protocol messages, identities and structural types shared by every other
//! module.
//!
//! Five signed artifacts drive the protocol: [`Permit`], [`Proof`], [`Block`],
//! [`Proposal`] and [`TimeoutMsg`] (bundled into [`TimeoutBundle`]). A
//! [`Position`] is a set of block identifiers — the unit of endorsement and
//! parent linkage. All of these are pure values: immutable after construction
//! and free of interior mutation, so they can be copied between threads.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::codec::{
    put_digest, put_list, put_sorted_set, put_u32, put_u64, tag, CodecError, Decode, Digest,
    Encode, Reader,
};
use crate::crypto::{Signature, SignatureScheme, SimScheme};

/// Index of a participating node, in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Monotone protocol round counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Round(pub u64);

impl Round {
    pub fn next(self) -> Round {
        Round(self.0 + 1)
    }
}

impl std::fmt::Display for Round {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// The designated block creator of a round: `round mod n`.
pub fn creator_of(round: Round, n: u32) -> NodeId {
    assert!(n >= 1, "node count must be positive");
    NodeId((round.0 % n as u64) as u32)
}

/// Identity of a block: digest of its canonical encoding (proof +
/// transactions + creator signature).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub Digest);

impl std::fmt::Debug for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "b:{}", self.0.short())
    }
}

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.short())
    }
}

impl Encode for BlockId {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_digest(out, &self.0);
    }
}

impl Decode for BlockId {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(BlockId(r.digest()?))
    }
}

/// Identity of a transaction: digest of its canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub Digest);

impl std::fmt::Debug for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t:{}", self.0.short())
    }
}

impl std::fmt::Display for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.short())
    }
}

/// A set of blocks in the block graph; the attachment point endorsed by
/// permits and referenced by a block's proof as its parent set. Canonical
/// encoding sorts members ascending, so equal sets encode identically.
///
/// The genesis block is the only artifact whose position is empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Position {
    blocks: BTreeSet<BlockId>,
}

impl Position {
    pub fn new(blocks: impl IntoIterator<Item = BlockId>) -> Self {
        Position {
            blocks: blocks.into_iter().collect(),
        }
    }

    pub fn singleton(b: BlockId) -> Self {
        Position {
            blocks: std::iter::once(b).collect(),
        }
    }

    pub fn empty() -> Self {
        Position::default()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn contains(&self, b: &BlockId) -> bool {
        self.blocks.contains(b)
    }

    /// Members in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &BlockId> + '_ {
        self.blocks.iter()
    }
}

impl FromIterator<BlockId> for Position {
    fn from_iter<T: IntoIterator<Item = BlockId>>(iter: T) -> Self {
        Position::new(iter)
    }
}

impl Encode for Position {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::POSITION);
        put_u32(out, self.blocks.len() as u32);
        for b in &self.blocks {
            b.encode_into(out);
        }
    }
}

impl Decode for Position {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::POSITION)?;
        let n = r.u32()?;
        let mut blocks = BTreeSet::new();
        for _ in 0..n {
            blocks.insert(BlockId::decode(r)?);
        }
        Ok(Position { blocks })
    }
}

/// Signed endorsement sent proactively to a round's creator: "you may append
/// a block at `position` in `round`".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Permit {
    pub round: Round,
    pub position: Position,
    pub signature: Signature,
}

impl Permit {
    pub fn signed_payload(round: Round, position: &Position) -> Vec<u8> {
        let mut out = vec![tag::PERMIT_PAYLOAD];
        put_u64(&mut out, round.0);
        position.encode_into(&mut out);
        out
    }

    pub fn new(scheme: &impl SignatureScheme, issuer: NodeId, round: Round, position: Position) -> Self {
        let sig = scheme.sign(issuer, &Self::signed_payload(round, &position));
        Permit {
            round,
            position,
            signature: sig,
        }
    }

    pub fn issuer(&self) -> NodeId {
        self.signature.signer
    }

    pub fn verify(&self, scheme: &impl SignatureScheme) -> bool {
        scheme.verify(
            self.issuer(),
            &Self::signed_payload(self.round, &self.position),
            &self.signature,
        )
    }
}

impl Encode for Permit {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::PERMIT);
        put_u64(out, self.round.0);
        self.position.encode_into(out);
        self.signature.encode_into(out);
    }
}

impl Decode for Permit {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::PERMIT)?;
        let round = Round(r.u64()?);
        let position = Position::decode(r)?;
        let signature = Signature::decode(r)?;
        Ok(Permit {
            round,
            position,
            signature,
        })
    }
}

/// A quorum of 2f+1 permits from distinct nodes for the same round and
/// position; authorizes that round's creator to produce a block. Validators
/// accept supersets (more than 2f+1 permits) — the checks are "at least".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub permits: Vec<Permit>,
}

impl Proof {
    /// Normalizes the permit list to canonical (encoded-byte) order, so that
    /// protocol-built proofs survive an encode/decode round trip unchanged.
    pub fn new(mut permits: Vec<Permit>) -> Self {
        permits.sort_by_key(|p| p.encode());
        Proof { permits }
    }

    /// Empty proof: used by the genesis block only; fails validation anywhere
    /// else.
    pub fn genesis() -> Self {
        Proof {
            permits: Vec::new(),
        }
    }

    pub fn round(&self) -> Option<Round> {
        self.permits.first().map(|p| p.round)
    }

    pub fn position(&self) -> Option<&Position> {
        self.permits.first().map(|p| &p.position)
    }
}

impl Encode for Proof {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::PROOF);
        put_sorted_set(out, self.permits.iter());
    }
}

impl Decode for Proof {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::PROOF)?;
        let n = r.u32()?;
        let mut permits = Vec::with_capacity(n as usize);
        for _ in 0..n {
            permits.push(Permit::decode(r)?);
        }
        Ok(Proof { permits })
    }
}

/// Reasons a proof (and the artifact enclosing it) is rejected.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ProofError {
    #[error("insufficient permits: {found} < {required}")]
    InsufficientPermits { found: usize, required: usize },
    #[error("duplicate issuer {0}")]
    DuplicateIssuer(NodeId),
    #[error("permits span multiple rounds")]
    MixedRound,
    #[error("permits span multiple positions")]
    MixedPosition,
    #[error("bad permit signature from {0}")]
    BadSignature(NodeId),
}

/// Checks all [`Proof`] invariants and returns the common (round, position).
///
/// Accepts iff there are at least 2f+1 permits from distinct issuers, all
/// signatures verify, and every permit endorses the same round and position.
pub fn validate_proof(
    proof: &Proof,
    n: u32,
    f: u32,
    scheme: &impl SignatureScheme,
) -> Result<(Round, Position), ProofError> {
    let required = (2 * f + 1) as usize;
    if proof.permits.len() < required {
        return Err(ProofError::InsufficientPermits {
            found: proof.permits.len(),
            required,
        });
    }
    let mut issuers = BTreeSet::new();
    let first = &proof.permits[0];
    for p in &proof.permits {
        if !issuers.insert(p.issuer()) {
            return Err(ProofError::DuplicateIssuer(p.issuer()));
        }
        if p.issuer().0 >= n {
            return Err(ProofError::BadSignature(p.issuer()));
        }
        if !p.verify(scheme) {
            return Err(ProofError::BadSignature(p.issuer()));
        }
        if p.round != first.round {
            return Err(ProofError::MixedRound);
        }
        if p.position != first.position {
            return Err(ProofError::MixedPosition);
        }
    }
    Ok((first.round, first.position.clone()))
}

/// Owner tag on a transaction output: a protocol node or an external client.
/// Clients are opaque tags; they hold funds but take no protocol actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    Node(NodeId),
    Client(u32),
}

impl std::fmt::Display for Owner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Owner::Node(n) => write!(f, "{n}"),
            Owner::Client(c) => write!(f, "c{c}"),
        }
    }
}

impl Encode for Owner {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Owner::Node(n) => {
                out.push(0);
                put_u32(out, n.0);
            }
            Owner::Client(c) => {
                out.push(1);
                put_u32(out, *c);
            }
        }
    }
}

impl Decode for Owner {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            0 => Ok(Owner::Node(NodeId(r.u32()?))),
            1 => Ok(Owner::Client(r.u32()?)),
            d => Err(CodecError::BadDiscriminant(d)),
        }
    }
}

/// Reference to an unspent output: `index`-th output of transaction `tx_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutputRef {
    pub tx_id: TxId,
    pub index: u32,
}

impl std::fmt::Display for OutputRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.tx_id.0.short(), self.index)
    }
}

impl Encode for OutputRef {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::OUTPUT_REF);
        put_digest(out, &self.tx_id.0);
        put_u32(out, self.index);
    }
}

impl Decode for OutputRef {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::OUTPUT_REF)?;
        let tx_id = TxId(r.digest()?);
        let index = r.u32()?;
        Ok(OutputRef { tx_id, index })
    }
}

/// UTXO transaction: consumes a set of output references and creates new
/// owned outputs. Inputs are empty only for the genesis coinbase (a mint).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub inputs: BTreeSet<OutputRef>,
    pub outputs: Vec<(Owner, u64)>,
}

impl Transaction {
    pub fn new(inputs: impl IntoIterator<Item = OutputRef>, outputs: Vec<(Owner, u64)>) -> Self {
        Transaction {
            inputs: inputs.into_iter().collect(),
            outputs,
        }
    }

    /// Genesis coinbase minting the scenario's initial outputs.
    pub fn mint(outputs: Vec<(Owner, u64)>) -> Self {
        Transaction {
            inputs: BTreeSet::new(),
            outputs,
        }
    }

    pub fn id(&self) -> TxId {
        TxId(self.digest())
    }

    pub fn is_mint(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_refs(&self) -> impl Iterator<Item = OutputRef> + '_ {
        let id = self.id();
        (0..self.outputs.len() as u32).map(move |index| OutputRef { tx_id: id, index })
    }
}

impl Encode for Transaction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::TRANSACTION);
        put_u32(out, self.inputs.len() as u32);
        for i in &self.inputs {
            i.encode_into(out);
        }
        put_u32(out, self.outputs.len() as u32);
        for (owner, amount) in &self.outputs {
            owner.encode_into(out);
            put_u64(out, *amount);
        }
    }
}

impl Decode for Transaction {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::TRANSACTION)?;
        let ni = r.u32()?;
        let mut inputs = BTreeSet::new();
        for _ in 0..ni {
            inputs.insert(OutputRef::decode(r)?);
        }
        let no = r.u32()?;
        let mut outputs = Vec::with_capacity(no as usize);
        for _ in 0..no {
            let owner = Owner::decode(r)?;
            let amount = r.u64()?;
            outputs.push((owner, amount));
        }
        Ok(Transaction { inputs, outputs })
    }
}

/// A block: proof + ordered transactions, signed by the creator the proof
/// designates. Its round and position are those of its proof; its parents
/// are the position's members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub proof: Proof,
    pub transactions: Vec<Transaction>,
    pub signature: Signature,
}

impl Block {
    pub fn signed_payload(proof: &Proof, transactions: &[Transaction]) -> Vec<u8> {
        let mut out = vec![tag::BLOCK_PAYLOAD];
        proof.encode_into(&mut out);
        put_list(&mut out, transactions);
        out
    }

    pub fn new(
        scheme: &impl SignatureScheme,
        creator: NodeId,
        proof: Proof,
        transactions: Vec<Transaction>,
    ) -> Self {
        let sig = scheme.sign(creator, &Self::signed_payload(&proof, &transactions));
        Block {
            proof,
            transactions,
            signature: sig,
        }
    }

    /// The genesis block: empty proof, coinbase mints, sentinel signature.
    /// Never validated; every node constructs it identically from the
    /// scenario configuration.
    pub fn genesis(mints: Vec<(Owner, u64)>) -> Self {
        let txs = vec![Transaction::mint(mints)];
        Block::new(&SimScheme, NodeId(0), Proof::genesis(), txs)
    }

    pub fn is_genesis(&self) -> bool {
        self.proof.permits.is_empty()
    }

    pub fn id(&self) -> BlockId {
        BlockId(self.digest())
    }

    pub fn creator(&self) -> NodeId {
        self.signature.signer
    }

    /// Round of the block, derived from its proof's permits. Genesis has
    /// round 0 by convention.
    pub fn round(&self) -> Round {
        self.proof.round().unwrap_or(Round(0))
    }

    /// Parent set of the block (the proof's position). Empty for genesis.
    pub fn position(&self) -> Position {
        self.proof.position().cloned().unwrap_or_default()
    }

    pub fn verify_creator_signature(&self, scheme: &impl SignatureScheme) -> bool {
        scheme.verify(
            self.creator(),
            &Self::signed_payload(&self.proof, &self.transactions),
            &self.signature,
        )
    }
}

impl Encode for Block {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::BLOCK);
        self.proof.encode_into(out);
        put_list(out, &self.transactions);
        self.signature.encode_into(out);
    }
}

impl Decode for Block {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::BLOCK)?;
        let proof = Proof::decode(r)?;
        let n = r.u32()?;
        let mut transactions = Vec::with_capacity(n as usize);
        for _ in 0..n {
            transactions.push(Transaction::decode(r)?);
        }
        let signature = Signature::decode(r)?;
        Ok(Block {
            proof,
            transactions,
            signature,
        })
    }
}

/// Creator-issued certificate of disagreement: the minimal position that
/// respects every collected permit, plus the permits themselves. Signed by
/// the creator so relays cannot be fabricated (the round's creator is the
/// only node entitled to issue one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub position: Position,
    pub permits: Vec<Permit>,
    pub signature: Signature,
}

impl Proposal {
    pub fn signed_payload(position: &Position, permits: &[Permit]) -> Vec<u8> {
        let mut out = vec![tag::PROPOSAL_PAYLOAD];
        position.encode_into(&mut out);
        put_sorted_set(&mut out, permits.iter());
        out
    }

    pub fn new(
        scheme: &impl SignatureScheme,
        creator: NodeId,
        position: Position,
        mut permits: Vec<Permit>,
    ) -> Self {
        permits.sort_by_key(|p| p.encode());
        let sig = scheme.sign(creator, &Self::signed_payload(&position, &permits));
        Proposal {
            position,
            permits,
            signature: sig,
        }
    }

    pub fn creator(&self) -> NodeId {
        self.signature.signer
    }

    pub fn round(&self) -> Option<Round> {
        self.permits.first().map(|p| p.round)
    }

    pub fn verify_creator_signature(&self, scheme: &impl SignatureScheme) -> bool {
        scheme.verify(
            self.creator(),
            &Self::signed_payload(&self.position, &self.permits),
            &self.signature,
        )
    }
}

impl Encode for Proposal {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::PROPOSAL);
        self.position.encode_into(out);
        put_sorted_set(out, self.permits.iter());
        self.signature.encode_into(out);
    }
}

impl Decode for Proposal {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::PROPOSAL)?;
        let position = Position::decode(r)?;
        let n = r.u32()?;
        let mut permits = Vec::with_capacity(n as usize);
        for _ in 0..n {
            permits.push(Permit::decode(r)?);
        }
        let signature = Signature::decode(r)?;
        Ok(Proposal {
            position,
            permits,
            signature,
        })
    }
}

/// Broadcast when a node's round timer expires without a result.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeoutMsg {
    pub round: Round,
    pub signature: Signature,
}

impl TimeoutMsg {
    pub fn signed_payload(round: Round) -> Vec<u8> {
        let mut out = vec![tag::TIMEOUT_PAYLOAD];
        put_u64(&mut out, round.0);
        out
    }

    pub fn new(scheme: &impl SignatureScheme, issuer: NodeId, round: Round) -> Self {
        let sig = scheme.sign(issuer, &Self::signed_payload(round));
        TimeoutMsg {
            round,
            signature: sig,
        }
    }

    pub fn issuer(&self) -> NodeId {
        self.signature.signer
    }

    pub fn verify(&self, scheme: &impl SignatureScheme) -> bool {
        scheme.verify(self.issuer(), &Self::signed_payload(self.round), &self.signature)
    }
}

impl Encode for TimeoutMsg {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::TIMEOUT);
        put_u64(out, self.round.0);
        self.signature.encode_into(out);
    }
}

impl Decode for TimeoutMsg {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::TIMEOUT)?;
        let round = Round(r.u64()?);
        let signature = Signature::decode(r)?;
        Ok(TimeoutMsg {
            round,
            signature,
        })
    }
}

/// 2f+1 distinct-issuer timeout messages for one round; lets the receiver
/// skip to the next round in a single message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeoutBundle {
    pub round: Round,
    pub msgs: Vec<TimeoutMsg>,
}

impl TimeoutBundle {
    /// Normalizes messages to canonical order (matching the encoding).
    pub fn new(round: Round, mut msgs: Vec<TimeoutMsg>) -> Self {
        msgs.sort_by_key(|m| m.encode());
        TimeoutBundle { round, msgs }
    }
}

impl Encode for TimeoutBundle {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::TIMEOUT_BUNDLE);
        put_u64(out, self.round.0);
        put_sorted_set(out, self.msgs.iter());
    }
}

impl Decode for TimeoutBundle {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::TIMEOUT_BUNDLE)?;
        let round = Round(r.u64()?);
        let n = r.u32()?;
        let mut msgs = Vec::with_capacity(n as usize);
        for _ in 0..n {
            msgs.push(TimeoutMsg::decode(r)?);
        }
        Ok(TimeoutBundle { round, msgs })
    }
}

/// Everything that travels between nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Permit(Permit),
    Block(Block),
    Proposal(Proposal),
    Timeout(TimeoutMsg),
    TimeoutBundle(TimeoutBundle),
    FetchRequest(BTreeSet<BlockId>),
    FetchResponse(Vec<Block>),
}

impl Message {
    /// Short kind label used in traces and metrics.
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Permit(_) => "permit",
            Message::Block(_) => "block",
            Message::Proposal(_) => "proposal",
            Message::Timeout(_) => "timeout",
            Message::TimeoutBundle(_) => "timeout-bundle",
            Message::FetchRequest(_) => "fetch-request",
            Message::FetchResponse(_) => "fetch-response",
        }
    }

    /// Protocol round the message belongs to, if it carries one.
    pub fn round(&self) -> Option<Round> {
        match self {
            Message::Permit(p) => Some(p.round),
            Message::Block(b) => Some(b.round()),
            Message::Proposal(p) => p.round(),
            Message::Timeout(t) => Some(t.round),
            Message::TimeoutBundle(b) => Some(b.round),
            Message::FetchRequest(_) | Message::FetchResponse(_) => None,
        }
    }
}

impl Encode for Message {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Message::Permit(p) => p.encode_into(out),
            Message::Block(b) => b.encode_into(out),
            Message::Proposal(p) => p.encode_into(out),
            Message::Timeout(t) => t.encode_into(out),
            Message::TimeoutBundle(b) => b.encode_into(out),
            Message::FetchRequest(ids) => {
                out.push(tag::FETCH_REQUEST);
                put_u32(out, ids.len() as u32);
                for id in ids {
                    id.encode_into(out);
                }
            }
            Message::FetchResponse(blocks) => {
                out.push(tag::FETCH_RESPONSE);
                put_list(out, blocks);
            }
        }
    }
}
