//! Run configuration: flags, input files and the address book.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use choreo_core::protocols::gmw::{parse_inputs, Gmw};
use choreo_core::protocols::kvs::{parse_script, Kvs, KvsVariant, Request};
use choreo_core::protocols::lottery::{Lottery, RhoSource, Tamper, TamperTarget};
use choreo_core::transport::AddressBook;
use choreo_core::DEFAULT_STEP_BUDGET;

use crate::examples::{default_secrets, parse_circuit, Example, ExampleKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("address book {path}: {reason}")]
    AddressBook { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Centralized,
    Simulate,
    Endpoint,
}

/// Everything `run` needs.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// kvs-broadcast, kvs-enclave, kvs-error, kvs-poly, gmw, lottery or broken.
    #[arg(long)]
    pub example: ExampleKind,
    #[arg(long, value_enum, default_value = "simulate")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Endpoint to play in endpoint mode.
    #[arg(long)]
    pub role: Option<String>,
    /// JSON address book for endpoint mode.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// KVS request script, one `GET key` or `PUT key value` per line.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// GMW circuit file.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// GMW inputs, e.g. `p1=1,p2=0`. Repeated names or several bits feed
    /// later input wires of the same party.
    #[arg(long, default_value = "")]
    pub inputs: String,
    /// Number of GMW parties.
    #[arg(long, default_value_t = 2)]
    pub parties: usize,
    /// Number of backups for kvs-poly.
    #[arg(long, default_value_t = 1)]
    pub backups: usize,
    /// Backups that reject every put, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fail_backups: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub servers: usize,
    #[arg(long, default_value_t = 4)]
    pub clients: usize,
    /// Lottery client secrets, comma separated. Defaults to 100, 200, ...
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub secrets: Vec<i64>,
    /// Fixed lottery random values, one per server.
    #[arg(long, value_delimiter = ',')]
    pub rho: Vec<i64>,
    /// Upper bound (exclusive) for random lottery values.
    #[arg(long)]
    pub tau: Option<i64>,
    /// Make a server open a value it did not commit to, e.g. `server2:rho`.
    #[arg(long)]
    pub tamper: Option<String>,
    /// Scheduler steps per endpoint in simulate mode.
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    pub step_budget: u64,
    /// Write a line-oriented run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

impl RunArgs {
    pub fn build(&self) -> Result<Example, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        Ok(match self.example {
            ExampleKind::Kvs(variant) => {
                let script: Vec<Request> = match &self.script {
                    Some(p) => parse_script(&read(p)?).map_err(|e| invalid(e.to_string()))?,
                    None => Vec::new(),
                };
                let kvs = match variant {
                    KvsVariant::Poly => Kvs::poly(self.backups, script),
                    v if self.backups != 1 => {
                        return Err(invalid(format!("{} has exactly one backup", v.name())))
                    }
                    v => Kvs::new(v, script),
                };
                let names = kvs.backup_names();
                if let Some(bad) = self.fail_backups.iter().find(|b| !names.contains(b)) {
                    return Err(invalid(format!("no backup named `{bad}`")));
                }
                Example::Kvs(kvs.with_failing(self.fail_backups.iter().cloned()))
            }
            ExampleKind::Gmw => {
                if self.parties == 0 {
                    return Err(invalid("need at least one party".into()));
                }
                let path = self
                    .circuit
                    .as_ref()
                    .ok_or_else(|| invalid("gmw needs --circuit".into()))?;
                let circuit = parse_circuit(&read(path)?, self.parties).map_err(invalid)?;
                let inputs = parse_inputs(&self.inputs).map_err(|e| invalid(e.to_string()))?;
                let census = Gmw::parties(self.parties);
                if let Some(p) = inputs.keys().find(|p| census.position_of(p).is_none()) {
                    return Err(invalid(format!("input for unknown party `{p}`")));
                }
                Example::Gmw(Gmw { census, circuit, inputs })
            }
            ExampleKind::Lottery => {
                if self.servers == 0 || self.clients == 0 {
                    return Err(invalid("need at least one server and one client".into()));
                }
                let secrets = if self.secrets.is_empty() {
                    default_secrets(self.clients)
                } else if self.secrets.len() == self.clients {
                    self.secrets.clone()
                } else {
                    return Err(invalid(format!(
                        "{} secrets for {} clients",
                        self.secrets.len(),
                        self.clients
                    )));
                };
                let mut l = Lottery::new(self.servers, self.clients, secrets);
                l.rho = match (self.rho.is_empty(), self.tau) {
                    (true, tau) => RhoSource::Uniform { tau },
                    (false, None) if self.rho.len() == self.servers => RhoSource::Fixed(self.rho.clone()),
                    (false, None) => {
                        return Err(invalid(format!("{} rho values for {} servers", self.rho.len(), self.servers)))
                    }
                    (false, Some(_)) => return Err(invalid("--rho and --tau are exclusive".into())),
                };
                if let Some(t) = &self.tamper {
                    l.tamper = Some(parse_tamper(t, self.servers).map_err(invalid)?);
                }
                Example::Lottery(l)
            }
            ExampleKind::Broken => Example::Broken,
        })
    }
}

fn parse_tamper(text: &str, servers: usize) -> Result<Tamper, String> {
    let bad = || format!("bad --tamper `{text}` (expected serverN:rho or serverN:psi)");
    let (who, what) = text.split_once(':').ok_or_else(bad)?;
    let n: usize = who.strip_prefix("server").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    if n == 0 || n > servers {
        return Err(format!("no server `{who}`"));
    }
    let target = match what {
        "rho" => TamperTarget::Rho,
        "psi" => TamperTarget::Psi,
        _ => return Err(bad()),
    };
    Ok(Tamper { server: n - 1, target })
}

#[derive(Debug, Deserialize)]
struct BookFile {
    locations: BTreeMap<String, String>,
}

/// Reads `{ "locations": { "<name>": "<host>:<port>", ... } }`.
pub fn load_address_book(path: &Path) -> Result<AddressBook, ConfigError> {
    let text = read(path)?;
    let book: BookFile = serde_json::from_str(&text).map_err(|e| ConfigError::AddressBook {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    Ok(book.locations)
}

pub fn address_book_json(book: &AddressBook) -> String {
    serde_json::json!({ "locations": book }).to_string()
}
