//! Append-only, hash-chained institutional event log.
//!
//! On disk the log is JSON Lines. The first line is a header naming the
//! digest algorithm; every following line is one event with fields in the
//! fixed order `seq, tick, agent, kind, statement, transition, amount,
//! evidence, prev, digest`. Each `digest` is SHA-256 over the raw bytes of
//! `prev` followed by the compact JSON of the event without `prev` and
//! `digest`. The first event chains from the all-zero digest.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Tick;

pub const DIGEST_ALGORITHM: &str = "sha256";
pub const LOG_FORMAT: &str = "institution-event-log";
pub const LOG_VERSION: u32 = 1;

/// Hex digest of 32 zero bytes.
pub const ZERO_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log write failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ViolationDetected,
    Transition,
    SanctionApplied,
    CapabilityClamp,
    Restoration,
    AdvisoryMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstitutionalEvent {
    pub seq: u64,
    pub tick: Tick,
    pub agent: String,
    pub kind: EventKind,
    pub statement: Option<String>,
    pub transition: Option<String>,
    pub amount: f64,
    pub evidence: String,
    pub prev: String,
    pub digest: String,
}

/// The hashed portion of an event.
#[derive(Serialize)]
struct HashedFields<'a> {
    seq: u64,
    tick: Tick,
    agent: &'a str,
    kind: EventKind,
    statement: Option<&'a str>,
    transition: Option<&'a str>,
    amount: f64,
    evidence: &'a str,
}

/// An event before it is sequenced and chained.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub tick: Tick,
    pub agent: String,
    pub kind: EventKind,
    pub statement: Option<String>,
    pub transition: Option<String>,
    pub amount: f64,
    pub evidence: Option<String>,
}

impl EventDraft {
    pub fn new(tick: Tick, agent: impl Into<String>, kind: EventKind) -> Self {
        Self {
            tick,
            agent: agent.into(),
            kind,
            statement: None,
            transition: None,
            amount: 0.0,
            evidence: None,
        }
    }

    pub fn statement(mut self, id: impl Into<String>) -> Self {
        self.statement = Some(id.into());
        self
    }

    pub fn transition(mut self, id: impl Into<String>) -> Self {
        self.transition = Some(id.into());
        self
    }

    pub fn amount(mut self, amount: f64) -> Self {
        self.amount = amount;
        self
    }

    pub fn evidence(mut self, digest: impl Into<String>) -> Self {
        self.evidence = Some(digest.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    log: String,
    version: u32,
    digest_algorithm: String,
}

fn header_line() -> String {
    serde_json::to_string(&Header {
        log: LOG_FORMAT.into(),
        version: LOG_VERSION,
        digest_algorithm: DIGEST_ALGORITHM.into(),
    })
    .expect("header serializes")
}

/// SHA-256 of arbitrary bytes, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn chain_digest(prev: &str, event: &InstitutionalEvent) -> Option<String> {
    let prev_bytes = hex::decode(prev).ok().filter(|b| b.len() == 32)?;
    let body = serde_json::to_vec(&HashedFields {
        seq: event.seq,
        tick: event.tick,
        agent: &event.agent,
        kind: event.kind,
        statement: event.statement.as_deref(),
        transition: event.transition.as_deref(),
        amount: event.amount,
        evidence: &event.evidence,
    })
    .ok()?;
    let mut h = Sha256::new();
    h.update(&prev_bytes);
    h.update(&body);
    Some(hex::encode(h.finalize()))
}

/// Append-only event log. Entries can be mirrored to a writer as they are
/// appended.
pub struct EventLog {
    entries: Vec<InstitutionalEvent>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("entries", &self.entries)
            .field("streaming", &self.sink.is_some())
            .finish()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            sink: None,
        }
    }

    /// A log that also streams JSONL to `sink`, starting with the header.
    pub fn streaming(mut sink: Box<dyn Write + Send>) -> Result<Self, LogError> {
        writeln!(sink, "{}", header_line())?;
        Ok(Self {
            entries: Vec::new(),
            sink: Some(sink),
        })
    }

    pub fn digest_algorithm(&self) -> &'static str {
        DIGEST_ALGORITHM
    }

    pub fn entries(&self) -> &[InstitutionalEvent] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_digest(&self) -> &str {
        self.entries.last().map_or(ZERO_DIGEST, |e| &e.digest)
    }

    pub fn append(&mut self, draft: EventDraft) -> Result<&InstitutionalEvent, LogError> {
        let mut event = InstitutionalEvent {
            seq: self.entries.len() as u64,
            tick: draft.tick,
            agent: draft.agent,
            kind: draft.kind,
            statement: draft.statement,
            transition: draft.transition,
            amount: draft.amount,
            evidence: draft.evidence.unwrap_or_else(|| ZERO_DIGEST.to_string()),
            prev: self.head_digest().to_string(),
            digest: String::new(),
        };
        event.digest = chain_digest(&event.prev, &event).expect("chain head is a valid digest");
        if let Some(sink) = self.sink.as_mut() {
            serde_json::to_writer(&mut *sink, &event).map_err(io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        self.entries.push(event);
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = header_line();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub valid: bool,
    /// Zero-based index of the first event that fails verification. A
    /// malformed header reports index 0.
    pub first_broken: Option<usize>,
    pub events: usize,
}

impl AuditReport {
    fn ok(events: usize) -> Self {
        Self {
            valid: true,
            first_broken: None,
            events,
        }
    }

    fn broken(index: usize, events: usize) -> Self {
        Self {
            valid: false,
            first_broken: Some(index),
            events,
        }
    }
}

/// True when `e` sits at position `index` directly after digest `prev`.
fn chained(index: usize, prev: &str, e: &InstitutionalEvent) -> bool {
    e.seq == index as u64 && e.prev == prev && chain_digest(&e.prev, e).is_some_and(|d| d == e.digest)
}

/// Recomputes the digest chain over in-memory events.
pub fn audit_verify(entries: &[InstitutionalEvent]) -> AuditReport {
    let mut prev = ZERO_DIGEST;
    for (i, e) in entries.iter().enumerate() {
        if !chained(i, prev, e) {
            return AuditReport::broken(i, entries.len());
        }
        prev = &e.digest;
    }
    AuditReport::ok(entries.len())
}

/// Verifies a serialized log bit-exactly: every event line must be the
/// canonical serialization of a chained event.
pub fn audit_verify_jsonl(bytes: &[u8]) -> AuditReport {
    if bytes.is_empty() {
        return AuditReport::ok(0);
    }
    let Some(body) = bytes.strip_suffix(b"\n") else {
        return AuditReport::broken(count_lines(bytes).saturating_sub(2), 0);
    };
    let mut lines = body.split(|b| *b == b'\n');
    let header = lines.next().unwrap_or_default();
    if header != header_line().as_bytes() {
        return AuditReport::broken(0, 0);
    }
    let mut prev = ZERO_DIGEST.to_string();
    let mut events = 0;
    for (i, line) in lines.enumerate() {
        match parse_canonical(line) {
            Some(event) if chained(i, &prev, &event) => prev = event.digest,
            _ => return AuditReport::broken(i, i),
        }
        events += 1;
    }
    AuditReport::ok(events)
}

fn count_lines(bytes: &[u8]) -> usize {
    bytes.split(|b| *b == b'\n').count()
}

fn parse_canonical(line: &[u8]) -> Option<InstitutionalEvent> {
    let text = std::str::from_utf8(line).ok()?;
    let event: InstitutionalEvent = serde_json::from_str(text).ok()?;
    let canonical = serde_json::to_string(&event).ok()?;
    (canonical == text).then_some(event)
}

/// Parses a JSONL log written by [`EventLog::to_jsonl`] without verifying it.
pub fn parse_jsonl(text: &str) -> Result<Vec<InstitutionalEvent>, serde_json::Error> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> EventLog {
        let mut log = EventLog::new();
        for i in 0..n {
            log.append(
                EventDraft::new(i as u64 + 1, format!("a{}", i % 2), EventKind::SanctionApplied)
                    .statement("collusion_rule")
                    .transition("fine")
                    .amount(100.0 + i as f64 * 0.25)
                    .evidence(sha256_hex(&[i as u8])),
            )
            .unwrap();
        }
        log
    }

    #[test]
    fn fresh_log_verifies() {
        let log = sample(8);
        assert_eq!(audit_verify(log.entries()), AuditReport::ok(8));
        assert!(audit_verify_jsonl(log.to_jsonl().as_bytes()).valid);
        assert_eq!(log.entries()[0].prev, ZERO_DIGEST);
    }

    #[test]
    fn empty_log_verifies() {
        assert!(audit_verify(&[]).valid);
        assert!(audit_verify_jsonl(b"").valid);
        assert!(audit_verify_jsonl(EventLog::new().to_jsonl().as_bytes()).valid);
    }

    #[test]
    fn altered_amount_breaks_at_that_entry() {
        let log = sample(8);
        let mut entries = log.entries().to_vec();
        entries[5].amount = 1.0;
        assert_eq!(audit_verify(&entries).first_broken, Some(5));
    }

    #[test]
    fn serialized_field_order_is_fixed() {
        let log = sample(1);
        let line = log.to_jsonl().lines().nth(1).unwrap().to_string();
        let keys = [
            "\"seq\"", "\"tick\"", "\"agent\"", "\"kind\"", "\"statement\"", "\"transition\"",
            "\"amount\"", "\"evidence\"", "\"prev\"", "\"digest\"",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let text = sample(3).to_jsonl();
        let start = text.find('\n').unwrap() + 1;
        for i in start..text.len() {
            for mask in [0x01u8, 0x20, 0x80] {
                let mut bytes = text.as_bytes().to_vec();
                bytes[i] ^= mask;
                assert!(!audit_verify_jsonl(&bytes).valid, "flip at {i} mask {mask:#x}");
            }
        }
    }

    #[test]
    fn streaming_matches_in_memory() {
        struct Shared(std::sync::Arc<std::sync::Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> io::Result<()> {
                Ok(())
            }
        }
        let buf = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let mut log = EventLog::streaming(Box::new(Shared(buf.clone()))).unwrap();
        log.append(EventDraft::new(1, "a", EventKind::Transition).transition("warn"))
            .unwrap();
        log.flush().unwrap();
        assert_eq!(buf.lock().unwrap().as_slice(), log.to_jsonl().as_bytes());
    }
}
