//! Run reports: per-endpoint results, message log, branch log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::choreo::ChoreoError;
use crate::location::{Census, Location};
use crate::portable::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub sender: Location,
    pub receiver: Location,
    /// Position in the sender→receiver stream, from 0.
    pub seq: u64,
    pub bytes: usize,
    pub sent_at: u64,
    /// `None` if the receiver never consumed the message.
    pub received_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchRecord {
    /// Operator path identifying the branch point.
    pub path: Vec<u32>,
    pub census: Census,
    pub site: String,
    pub outcome: String,
}

/// A value held by several owners, as encoded at one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedRecord {
    pub path: Vec<u32>,
    pub owners: Census,
    pub bytes: Vec<u8>,
}

/// Interval of the global message log spent inside an enclave. Only the
/// centralized runtime, which sees all endpoints at once, records these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclaveSpan {
    pub path: Vec<u32>,
    pub members: Census,
    /// Index of the first message sent inside the enclave.
    pub start: usize,
    /// One past the last message sent inside the enclave.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndpointOutcome {
    Completed(Value),
    Failed(ChoreoError),
    /// The run halted while this endpoint was still waiting.
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointReport {
    pub location: Location,
    pub outcome: EndpointOutcome,
    pub branches: Vec<BranchRecord>,
    pub owned: Vec<OwnedRecord>,
}

impl EndpointReport {
    pub fn result(&self) -> Option<&Value> {
        match &self.outcome {
            EndpointOutcome::Completed(v) => Some(v),
            _ => None,
        }
    }

    pub fn error(&self) -> Option<&ChoreoError> {
        match &self.outcome {
            EndpointOutcome::Failed(e) => Some(e),
            _ => None,
        }
    }
}

/// Selects messages by log position and participants.
#[derive(Debug, Clone, Default)]
pub struct MessageFilter {
    pub range: Option<std::ops::Range<usize>>,
    pub sender: Option<Location>,
    pub receiver: Option<Location>,
    /// Keep only messages sent or received by one of these.
    pub involving: Option<Vec<Location>>,
}

impl MessageFilter {
    fn accepts(&self, i: usize, m: &MessageRecord) -> bool {
        self.range.as_ref().is_none_or(|r| r.contains(&i))
            && self.sender.as_ref().is_none_or(|s| s == &m.sender)
            && self.receiver.as_ref().is_none_or(|r| r == &m.receiver)
            && self
                .involving
                .as_ref()
                .is_none_or(|ls| ls.iter().any(|l| l == &m.sender || l == &m.receiver))
    }
}

/// Counts the messages of `log` that pass `filter`.
pub fn sim_message_count(log: &[MessageRecord], filter: &MessageFilter) -> usize {
    log.iter()
        .enumerate()
        .filter(|(i, m)| filter.accepts(*i, m))
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub census: Census,
    /// In census order.
    pub endpoints: Vec<EndpointReport>,
    /// In send order.
    pub messages: Vec<MessageRecord>,
    pub enclaves: Vec<EnclaveSpan>,
}

impl RunReport {
    pub fn endpoint(&self, name: &str) -> Option<&EndpointReport> {
        self.endpoints.iter().find(|e| e.location == *name)
    }

    pub fn result(&self, name: &str) -> Option<&Value> {
        self.endpoint(name).and_then(EndpointReport::result)
    }

    /// True iff every endpoint completed.
    pub fn succeeded(&self) -> bool {
        self.endpoints
            .iter()
            .all(|e| matches!(e.outcome, EndpointOutcome::Completed(_)))
    }

    pub fn first_error(&self) -> Option<(&Location, &ChoreoError)> {
        self.endpoints
            .iter()
            .find_map(|e| e.error().map(|err| (&e.location, err)))
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn count(&self, filter: &MessageFilter) -> usize {
        sim_message_count(&self.messages, filter)
    }

    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    /// Per-endpoint outcomes and branch logs: what oracle equivalence compares.
    pub fn observations(&self) -> Vec<(&Location, &EndpointOutcome, Vec<(&str, &str)>)> {
        self.endpoints
            .iter()
            .map(|e| {
                let branches = e
                    .branches
                    .iter()
                    .map(|b| (b.site.as_str(), b.outcome.as_str()))
                    .collect();
                (&e.location, &e.outcome, branches)
            })
            .collect()
    }

    /// Every multiply-owned value must encode identically at all owners that
    /// materialized it.
    pub fn check_agreement(&self) -> Result<usize, String> {
        let mut seen: BTreeMap<(&[u32], String), (&Location, &[u8])> = BTreeMap::new();
        for e in &self.endpoints {
            for o in &e.owned {
                let key = (o.path.as_slice(), o.owners.to_string());
                match seen.get(&key) {
                    Some((first, bytes)) if *bytes != o.bytes.as_slice() => {
                        return Err(format!(
                            "value at {:?} owned by {} differs between `{first}` and `{}`",
                            o.path, o.owners, e.location
                        ));
                    }
                    Some(_) => {}
                    None => {
                        seen.insert(key, (&e.location, &o.bytes));
                    }
                }
            }
        }
        Ok(seen.len())
    }

    /// Every branch point must be logged with one outcome by every census member
    /// that reached it, and by all of them if they all completed.
    pub fn check_branch_consistency(&self) -> Result<(), String> {
        let mut points: BTreeMap<&[u32], (&BranchRecord, Vec<&Location>)> = BTreeMap::new();
        for e in &self.endpoints {
            for b in &e.branches {
                let entry = points.entry(b.path.as_slice()).or_insert((b, Vec::new()));
                if entry.0.outcome != b.outcome || entry.0.site != b.site {
                    return Err(format!(
                        "branch {:?} went `{}` at {:?} but `{}` at `{}`",
                        b.path, entry.0.outcome, entry.1, b.outcome, e.location
                    ));
                }
                entry.1.push(&e.location);
            }
        }
        for (path, (b, who)) in &points {
            for m in b.census.iter() {
                let completed = self
                    .endpoint(m.name())
                    .is_some_and(|e| matches!(e.outcome, EndpointOutcome::Completed(_)));
                if completed && !who.contains(&m) {
                    return Err(format!("`{m}` never logged branch {path:?} ({})", b.site));
                }
            }
        }
        Ok(())
    }

    /// Non-members exchange no messages while an enclave runs.
    pub fn check_enclave_silence(&self) -> Result<(), String> {
        for span in &self.enclaves {
            for m in &self.messages[span.start..span.end] {
                if !span.members.contains(&m.sender) || !span.members.contains(&m.receiver) {
                    return Err(format!(
                        "message {} -> {} inside enclave {} at {:?}",
                        m.sender, m.receiver, span.members, span.path
                    ));
                }
            }
        }
        Ok(())
    }

    /// Per ordered pair, sequence numbers are 0, 1, 2, ... in log order.
    pub fn check_fifo(&self) -> Result<(), String> {
        let mut next: BTreeMap<(&Location, &Location), u64> = BTreeMap::new();
        let mut last_recv: BTreeMap<(&Location, &Location), u64> = BTreeMap::new();
        for m in &self.messages {
            let k = (&m.sender, &m.receiver);
            let n = next.entry(k).or_insert(0);
            if m.seq != *n {
                return Err(format!("{} -> {}: seq {} where {} expected", m.sender, m.receiver, m.seq, n));
            }
            *n += 1;
            if let Some(t) = m.received_at {
                let prev = last_recv.entry(k).or_insert(0);
                if t < *prev {
                    return Err(format!("{} -> {}: seq {} received out of order", m.sender, m.receiver, m.seq));
                }
                *prev = t;
            }
        }
        Ok(())
    }

    /// Line-oriented text: `MSG sender receiver bytes t` per message in send
    /// order, then `BRANCH endpoint site outcome` per branch event.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let _ = writeln!(out, "MSG {} {} {} {}", m.sender, m.receiver, m.bytes, m.sent_at);
        }
        for e in &self.endpoints {
            for b in &e.branches {
                let _ = writeln!(out, "BRANCH {} {} {}", e.location, b.site, b.outcome);
            }
        }
        out
    }
}

/// A record parsed back from [`RunReport::to_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextRecord {
    Msg { sender: String, receiver: String, bytes: usize, t: u64 },
    Branch { endpoint: String, site: String, outcome: String },
}

pub fn parse_report_text(text: &str) -> Result<Vec<TextRecord>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || format!("bad report line: {line}");
            match f.as_slice() {
                ["MSG", s, r, b, t] => Ok(TextRecord::Msg {
                    sender: s.to_string(),
                    receiver: r.to_string(),
                    bytes: b.parse().map_err(|_| bad())?,
                    t: t.parse().map_err(|_| bad())?,
                }),
                ["BRANCH", e, s, o] => Ok(TextRecord::Branch {
                    endpoint: e.to_string(),
                    site: s.to_string(),
                    outcome: o.to_string(),
                }),
                _ => Err(bad()),
            }
        })
        .collect()
}
