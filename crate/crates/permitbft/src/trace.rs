//! Deterministic event log of a run.
//!
//! Newline-delimited records `timestamp seq actor kind payload_digest
//! detail`, preceded by a header record carrying the scenario digest and
//! seed. Every record is fed into a running SHA-256, so two runs are
//! byte-identical iff their trace digests match — that digest is the
//! reproducibility witness.

use sha2::{Digest as _, Sha256};

use crate::codec::Digest;

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub time: u64,
    pub seq: u64,
    pub actor: String,
    pub kind: &'static str,
    /// Digest of the payload (message, block, ...) or "-".
    pub payload: String,
    pub detail: String,
}

impl TraceRecord {
    fn line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.time, self.seq, self.actor, self.kind, self.payload, self.detail
        )
    }
}

/// Collects trace records, hashing always, retaining text only when asked.
pub struct TraceSink {
    hasher: Sha256,
    lines: Option<Vec<String>>,
    records: u64,
}

impl TraceSink {
    /// `keep_lines` retains the full text (for --trace output and violation
    /// context); the digest is computed either way.
    pub fn new(keep_lines: bool, scenario_digest: Digest, seed: u64) -> Self {
        let mut sink = TraceSink {
            hasher: Sha256::new(),
            lines: if keep_lines { Some(Vec::new()) } else { None },
            records: 0,
        };
        sink.push(TraceRecord {
            time: 0,
            seq: 0,
            actor: "sim".into(),
            kind: "run-header",
            payload: scenario_digest.full_hex(),
            detail: format!("seed={seed}"),
        });
        sink
    }

    pub fn push(&mut self, record: TraceRecord) {
        let line = record.line();
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        if let Some(lines) = &mut self.lines {
            lines.push(line);
        }
        self.records += 1;
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn tail(&self, n: usize) -> Vec<String> {
        match &self.lines {
            Some(lines) => lines.iter().rev().take(n).rev().cloned().collect(),
            None => Vec::new(),
        }
    }

    pub fn finish(self) -> (Digest, Option<String>) {
        let digest = Digest(self.hasher.finalize().into());
        let text = self.lines.map(|l| {
            let mut s = l.join("\n");
            s.push('\n');
            s
        });
        (digest, text)
    }
}

/// Parses the header line of a trace file: (scenario digest hex, seed).
pub fn parse_header(text: &str) -> Option<(String, u64)> {
    let first = text.lines().next()?;
    let mut it = first.split_whitespace();
    let (_t, _s, actor, kind) = (it.next()?, it.next()?, it.next()?, it.next()?);
    if actor != "sim" || kind != "run-header" {
        return None;
    }
    let payload = it.next()?;
    let detail = it.next()?;
    let seed = detail.strip_prefix("seed=")?.parse().ok()?;
    Some((payload.to_string(), seed))
}
