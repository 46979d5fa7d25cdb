//! The runnable examples and how their results are printed.

use std::fmt;
use std::str::FromStr;

use choreo_core::protocols::broken::UnmatchedReceive;
use choreo_core::protocols::field::FieldElement;
use choreo_core::protocols::gmw::{Circuit, Gmw};
use choreo_core::protocols::kvs::{Kvs, KvsVariant};
use choreo_core::protocols::lottery::Lottery;
use choreo_core::runtime::{EndpointOutcome, EndpointReport};
use choreo_core::transport::Transport;
use choreo_core::{
    project_and_run, run_centralized, run_simulated, Census, Choreography, Location, Portable,
    RunReport, SimError, Value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    Kvs(KvsVariant),
    Gmw,
    Lottery,
    Broken,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 7] = [
        ExampleKind::Kvs(KvsVariant::Broadcast),
        ExampleKind::Kvs(KvsVariant::Enclave),
        ExampleKind::Kvs(KvsVariant::ErrorHandling),
        ExampleKind::Kvs(KvsVariant::Poly),
        ExampleKind::Gmw,
        ExampleKind::Lottery,
        ExampleKind::Broken,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExampleKind::Kvs(v) => v.name(),
            ExampleKind::Gmw => "gmw",
            ExampleKind::Lottery => "lottery",
            ExampleKind::Broken => "broken",
        }
    }
}

impl fmt::Display for ExampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExampleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ExampleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ExampleKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown example `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A fully configured example.
#[derive(Debug, Clone)]
pub enum Example {
    Kvs(Kvs),
    Gmw(Gmw),
    Lottery(Lottery),
    Broken,
}

macro_rules! with_choreography {
    ($ex:expr, $c:ident => $body:expr) => {
        match $ex {
            Example::Kvs($c) => $body,
            Example::Gmw($c) => $body,
            Example::Lottery($c) => $body,
            Example::Broken => {
                let $c = &UnmatchedReceive;
                $body
            }
        }
    };
}

impl Example {
    pub fn kind(&self) -> ExampleKind {
        match self {
            Example::Kvs(k) => ExampleKind::Kvs(k.variant),
            Example::Gmw(_) => ExampleKind::Gmw,
            Example::Lottery(_) => ExampleKind::Lottery,
            Example::Broken => ExampleKind::Broken,
        }
    }

    pub fn census(&self) -> Census {
        with_choreography!(self, c => c.census())
    }

    pub fn centralized(&self, seed: u64) -> RunReport {
        with_choreography!(self, c => run_centralized(c, seed))
    }

    pub fn simulated(&self, seed: u64, budget: u64) -> Result<RunReport, SimError> {
        with_choreography!(self, c => run_simulated(c, seed, budget))
    }

    /// Runs one endpoint and returns a report covering it alone.
    pub fn endpoint(&self, me: &Location, transport: &dyn Transport, seed: u64) -> RunReport {
        let census = self.census();
        with_choreography!(self, c => project_and_run(c, me, transport, seed).fragment(&census))
    }

    /// Human-readable lines describing what `e` ended up with.
    pub fn describe(&self, e: &EndpointReport) -> Vec<String> {
        let who = e.location.name();
        let v = match &e.outcome {
            EndpointOutcome::Completed(v) => v,
            EndpointOutcome::Failed(err) => return vec![format!("ERROR {who} {err}")],
            EndpointOutcome::Unfinished => return vec![format!("UNFINISHED {who}")],
        };
        let mut out = Vec::new();
        match self {
            Example::Kvs(k) => {
                if let Ok((responses, store)) = v.as_pair() {
                    if let Some(Value::Seq(rs)) = present(responses) {
                        for (req, r) in k.script.iter().zip(rs) {
                            out.push(format!("RESPONSE {who} {req} => {r}"));
                        }
                    }
                    if let Some(s) = present(store) {
                        out.push(format!("STORE {who} {s}"));
                    }
                }
            }
            Example::Gmw(_) => {
                if let Value::Bool(b) = v {
                    out.push(format!("REVEALED {who} {}", *b as u8));
                }
            }
            Example::Lottery(_) => {
                if let Ok((revealed, rest)) = v.as_pair() {
                    if let Some(x) = present(revealed).and_then(|x| FieldElement::from_value(x).ok()) {
                        out.push(format!("ANALYST {who} {x}"));
                    }
                    if let Some(w) = rest.as_pair().ok().and_then(|(w, _)| present(w)) {
                        out.push(format!("OMEGA {who} {w}"));
                    }
                }
            }
            Example::Broken => {}
        }
        out.push(format!("RESULT {who} {v}"));
        out
    }
}

fn present(v: &Value) -> Option<&Value> {
    match v.as_union() {
        Ok((1, inner)) => Some(inner),
        _ => None,
    }
}

/// Default lottery secrets: client `i` holds `100 * i`.
pub fn default_secrets(clients: usize) -> Vec<i64> {
    (1..=clients as i64).map(|i| 100 * i).collect()
}

/// A circuit over parties `p1..pn`.
pub fn parse_circuit(text: &str, parties: usize) -> Result<Circuit, String> {
    let census = Gmw::parties(parties);
    let line = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join(" ");
    Circuit::parse(&line, &census).map_err(|e| e.to_string())
}
