//! Append-only run event log, exported as JSON Lines.
//!
//! One record per line: `timeMs`, `seq` and `kind` plus the record's own
//! flat key/value payload, all in one object with keys sorted, so two
//! identical runs serialize to byte-identical logs.

use std::io::Write;

use serde_json::{Map, Value};

use crate::digest::{digest_bytes, Digest};

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub time_ms: u64,
    pub seq: u64,
    pub kind: String,
    pub payload: Map<String, Value>,
}

impl EventRecord {
    pub fn field(&self, key: &str) -> Option<&Value> {
        self.payload.get(key)
    }

    pub fn field_u64(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Value::as_u64)
    }

    pub fn field_str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    /// The full record as one flat JSON object.
    pub fn to_json(&self) -> Value {
        let mut map = self.payload.clone();
        map.insert("timeMs".into(), Value::from(self.time_ms));
        map.insert("seq".into(), Value::from(self.seq));
        map.insert("kind".into(), Value::from(self.kind.clone()));
        Value::Object(map)
    }
}

#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
    next_seq: u64,
}

impl EventLog {
    pub fn new() -> EventLog {
        EventLog::default()
    }

    /// Append a record. Time must be nondecreasing so (timeMs, seq) is
    /// strictly increasing over the log.
    pub fn emit<I>(&mut self, time_ms: u64, kind: &str, fields: I) -> &EventRecord
    where
        I: IntoIterator<Item = (&'static str, Value)>,
    {
        if let Some(last) = self.records.last() {
            assert!(
                time_ms >= last.time_ms,
                "event time went backwards: {} after {}",
                time_ms,
                last.time_ms
            );
        }
        let mut payload = Map::new();
        for (k, v) in fields {
            payload.insert(k.to_string(), v);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.records.push(EventRecord {
            time_ms,
            seq,
            kind: kind.to_string(),
            payload,
        });
        self.records.last().unwrap()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a EventRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &r.to_json())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to Vec cannot fail");
        buf
    }

    /// Digest of the serialized log; equal digests mean byte-identical
    /// replays.
    pub fn digest(&self) -> Digest {
        digest_bytes(&self.to_jsonl_bytes())
    }
}
