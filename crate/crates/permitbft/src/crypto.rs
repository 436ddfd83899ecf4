//! Signatures.
//!
//! The protocol's only cryptographic assumption is that nodes sign messages
//! and nobody can produce a signature verifying under another node's identity.
//! The scheme is pluggable behind [`SignatureScheme`]; the default
//! [`SimScheme`] is a deterministic simulation scheme (signer id + payload
//! digest + a validity flag) whose non-forgeability is enforced by the
//! simulator: the adversary can only obtain signatures for byzantine
//! identities, and a fabricated signature naming an honest signer carries
//! `valid = false` and never verifies. A real scheme (e.g. Ed25519 keys) can
//! be slotted in by implementing the trait; everything downstream only calls
//! `sign` / `verify`.

use crate::codec::{tag, CodecError, Decode, Digest, Encode, Reader};
use crate::types::NodeId;

/// Signature artifact carried inside protocol messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Signature {
    pub signer: NodeId,
    pub payload_digest: Digest,
    /// Simulation-mode flag: false marks a forgery attempt, which never
    /// verifies. A real scheme would carry curve points instead.
    pub valid: bool,
}

impl Signature {
    /// Test-only constructor for a signature that names `signer` but was not
    /// produced by it. Used to exercise verification failure paths.
    pub fn forged(signer: NodeId, payload: &[u8]) -> Self {
        Signature {
            signer,
            payload_digest: Digest::of(payload),
            valid: false,
        }
    }
}

impl Encode for Signature {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::SIGNATURE);
        crate::codec::put_u32(out, self.signer.0);
        crate::codec::put_digest(out, &self.payload_digest);
        out.push(self.valid as u8);
    }
}

impl Decode for Signature {
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.expect_tag(tag::SIGNATURE)?;
        let signer = NodeId(r.u32()?);
        let payload_digest = r.digest()?;
        let valid = match r.u8()? {
            0 => false,
            1 => true,
            d => return Err(CodecError::BadDiscriminant(d)),
        };
        Ok(Signature {
            signer,
            payload_digest,
            valid,
        })
    }
}

/// Pluggable signing backend.
pub trait SignatureScheme {
    fn sign(&self, signer: NodeId, payload: &[u8]) -> Signature;
    fn verify(&self, signer: NodeId, payload: &[u8], sig: &Signature) -> bool;
}

/// Deterministic simulation scheme. Cheap, replayable, and exact: verification
/// succeeds iff the signature was produced by `sign` for the same signer and
/// payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimScheme;

impl SignatureScheme for SimScheme {
    fn sign(&self, signer: NodeId, payload: &[u8]) -> Signature {
        Signature {
            signer,
            payload_digest: Digest::of(payload),
            valid: true,
        }
    }

    fn verify(&self, signer: NodeId, payload: &[u8], sig: &Signature) -> bool {
        sig.valid && sig.signer == signer && sig.payload_digest == Digest::of(payload)
    }
}
