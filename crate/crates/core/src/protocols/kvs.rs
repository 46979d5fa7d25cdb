//! Replicated key-value stores.
//!
//! A client sends a script of requests to a primary server that keeps its store
//! in sync with one or more backups. Four variants:
//!
//! - [`KvsVariant::Broadcast`]: the primary broadcasts each request to the whole
//!   census, client included, so the backup knows whether to act.
//! - [`KvsVariant::Enclave`]: the same broadcast, but inside an enclave of the
//!   two servers. One message fewer per request.
//! - [`KvsVariant::ErrorHandling`]: the first enclave returns the backup's error
//!   (if any) at both servers; a second enclave acts on it without talking.
//! - [`KvsVariant::Poly`]: any number of backups, which apply puts in parallel
//!   and report back with `gather`. Responds `-1` unless every backup is ok.
//!
//! Backups listed in [`Kvs::failing`] reject puts with a nonzero status and
//! leave their store untouched.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use crate::choreo::{ChoreoOp, Choreography, Result};
use crate::located::{Faceted, MultiplyLocated, Quire};
use crate::location::{census_of, Census, MembershipWitness, SubsetWitness};
use crate::portable::{DecodeError, Portable, Value};

use super::ProtocolError;

pub type Store = BTreeMap<String, i64>;
pub type Response = i64;

/// Response of a successful put.
pub const OK: Response = 0;
/// Response when the replicas could not agree.
pub const DESYNC: Response = -1;
/// Status a failing backup reports for a put.
pub const BACKUP_FAULT: Response = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Get(String),
    Put(String, i64),
}

impl Request {
    pub fn is_put(&self) -> bool {
        matches!(self, Request::Put(..))
    }

    fn kind(&self) -> &'static str {
        match self {
            Request::Get(_) => "get",
            Request::Put(..) => "put",
        }
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Request::Get(k) => write!(f, "GET {k}"),
            Request::Put(k, v) => write!(f, "PUT {k} {v}"),
        }
    }
}

impl Portable for Request {
    fn to_value(&self) -> Value {
        match self {
            Request::Get(k) => Value::union(0, Value::text(k.clone())),
            Request::Put(k, v) => Value::union(1, Value::pair(Value::text(k.clone()), Value::Int(*v))),
        }
    }

    fn from_value(v: &Value) -> std::result::Result<Self, DecodeError> {
        match v.as_union()? {
            (0, k) => Ok(Request::Get(k.as_text()?.to_owned())),
            (1, kv) => {
                let (k, v) = kv.as_pair()?;
                Ok(Request::Put(k.as_text()?.to_owned(), v.as_int()?))
            }
            (t, _) => Err(DecodeError::Shape {
                expected: "request",
                found: format!("variant {t}"),
            }),
        }
    }
}

impl FromStr for Request {
    type Err = ProtocolError;

    fn from_str(line: &str) -> std::result::Result<Self, ProtocolError> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let bad = || ProtocolError::Invalid(format!("bad request line `{line}`"));
        match words.as_slice() {
            [op, k] if op.eq_ignore_ascii_case("get") => Ok(Request::Get(k.to_string())),
            [op, k, v] if op.eq_ignore_ascii_case("put") => {
                Ok(Request::Put(k.to_string(), v.parse().map_err(|_| bad())?))
            }
            _ => Err(bad()),
        }
    }
}

/// Parses a request script: one `GET key` or `PUT key value` per line. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_script(text: &str) -> std::result::Result<Vec<Request>, ProtocolError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

/// Applies a request to a store, as any server would.
pub fn handle_request(store: &mut Store, req: &Request) -> Response {
    match req {
        Request::Get(k) => store.get(k).copied().unwrap_or(0),
        Request::Put(k, v) => {
            store.insert(k.clone(), *v);
            OK
        }
    }
}

/// The single-map reference model: the responses a correct store gives.
pub fn reference_responses(script: &[Request]) -> (Vec<Response>, Store) {
    let mut store = Store::new();
    let responses = script.iter().map(|r| handle_request(&mut store, r)).collect();
    (responses, store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KvsVariant {
    Broadcast,
    Enclave,
    ErrorHandling,
    Poly,
}

impl KvsVariant {
    pub fn name(self) -> &'static str {
        match self {
            KvsVariant::Broadcast => "kvs-broadcast",
            KvsVariant::Enclave => "kvs-enclave",
            KvsVariant::ErrorHandling => "kvs-error",
            KvsVariant::Poly => "kvs-poly",
        }
    }
}

/// Client responses, then each server's final store.
pub type KvsOutput = (MultiplyLocated<Vec<Response>>, Faceted<Store>);

#[derive(Debug, Clone)]
pub struct Kvs {
    pub variant: KvsVariant,
    /// Number of backups. Only [`KvsVariant::Poly`] accepts anything but 1.
    pub backups: usize,
    pub script: Vec<Request>,
    /// Backups that reject every put.
    pub failing: BTreeSet<String>,
}

type StoreRef = Rc<RefCell<Store>>;

impl Kvs {
    pub fn new(variant: KvsVariant, script: Vec<Request>) -> Self {
        Kvs {
            variant,
            backups: 1,
            script,
            failing: BTreeSet::new(),
        }
    }

    pub fn poly(backups: usize, script: Vec<Request>) -> Self {
        Kvs {
            variant: KvsVariant::Poly,
            backups,
            script,
            failing: BTreeSet::new(),
        }
    }

    pub fn with_failing(mut self, names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.failing = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn backup_names(&self) -> Vec<String> {
        match self.variant {
            KvsVariant::Poly => (1..=self.backups).map(|i| format!("backup{i}")).collect(),
            _ => vec!["backup".to_owned()],
        }
    }

    fn backup_put(&self, backup: &str, store: &StoreRef, req: &Request) -> Response {
        if self.failing.contains(backup) {
            BACKUP_FAULT
        } else {
            handle_request(&mut store.borrow_mut(), req)
        }
    }
}

struct Roles {
    client: MembershipWitness,
    primary: MembershipWitness,
    servers: SubsetWitness,
}

impl Choreography for Kvs {
    type Output = KvsOutput;

    fn census(&self) -> Census {
        let mut names = vec!["client".to_owned(), "primary".to_owned()];
        names.extend(self.backup_names());
        census_of(&names).expect("generated names are distinct")
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<KvsOutput> {
        if self.variant != KvsVariant::Poly && self.backups != 1 {
            return Err(ProtocolError::Invalid(format!(
                "{} has exactly one backup",
                self.variant.name()
            ))
            .into());
        }
        let census = op.census().clone();
        let backup_names = self.backup_names();
        let mut server_names = vec!["primary".to_owned()];
        server_names.extend(backup_names.iter().cloned());
        let roles = Roles {
            client: op.member("client")?,
            primary: op.member("primary")?,
            servers: census.select(&server_names)?,
        };
        let stores: Faceted<StoreRef> =
            op.parallel(&roles.servers, |_, _| Ok(Rc::new(RefCell::new(Store::new()))))?;

        let mut responses = Vec::with_capacity(self.script.len());
        for i in 0..self.script.len() {
            let request = op.locally(&roles.client, |_| Ok(self.script[i].clone()))?;
            let at_primary = op.comm(&roles.client, &roles.primary, &request)?;
            let response = match self.variant {
                KvsVariant::Broadcast => self.step_broadcast(op, &roles, &stores, &at_primary)?,
                KvsVariant::Enclave => self.step_enclave(op, &roles, &stores, &at_primary)?,
                KvsVariant::ErrorHandling => self.step_error(op, &roles, &stores, &at_primary)?,
                KvsVariant::Poly => self.step_poly(op, &roles, &stores, &at_primary)?,
            };
            responses.push(op.comm(&roles.primary, &roles.client, &response)?);
        }
        let collected = op.locally(&roles.client, |un| {
            responses.iter().map(|r| un.unwrap(r).copied()).collect()
        })?;
        let snapshots = op.parallel(&roles.servers, |_, un| Ok(un.facet(&stores)?.borrow().clone()))?;
        Ok((collected, snapshots))
    }
}

impl Kvs {
    fn step_broadcast(
        &self,
        op: &ChoreoOp<'_>,
        roles: &Roles,
        stores: &Faceted<StoreRef>,
        request: &MultiplyLocated<Request>,
    ) -> Result<MultiplyLocated<Response>> {
        let req = op.broadcast(&roles.primary, request)?;
        handle_backup(self, op, stores, &req)?;
        let primary = &roles.primary;
        op.locally(primary, |un| {
            Ok(handle_request(&mut un.facet(stores)?.borrow_mut(), &req))
        })
    }

    fn step_enclave(
        &self,
        op: &ChoreoOp<'_>,
        roles: &Roles,
        stores: &Faceted<StoreRef>,
        request: &MultiplyLocated<Request>,
    ) -> Result<MultiplyLocated<Response>> {
        op.enclave(&roles.servers, |op| {
            let primary = op.member("primary")?;
            let req = op.broadcast(&primary, request)?;
            handle_backup(self, op, stores, &req)
        })?;
        op.locally(&roles.primary, |un| {
            let req = un.unwrap(request)?;
            Ok(handle_request(&mut un.facet(stores)?.borrow_mut(), req))
        })
    }

    fn step_error(
        &self,
        op: &ChoreoOp<'_>,
        roles: &Roles,
        stores: &Faceted<StoreRef>,
        request: &MultiplyLocated<Request>,
    ) -> Result<MultiplyLocated<Response>> {
        let servers = &roles.servers;
        let nested = op.enclave(servers, |op| {
            let primary = op.member("primary")?;
            let backup = op.member("backup")?;
            let req = op.broadcast(&primary, request)?;
            op.branch("request", req.kind());
            match &req {
                Request::Get(_) => op.replicated(|_| Ok(None::<String>)),
                Request::Put(..) => {
                    let err = op.locally(&backup, |un| {
                        let status = self.backup_put("backup", un.facet(stores)?, &req);
                        Ok((status != OK).then(|| format!("backup status {status}")))
                    })?;
                    op.multicast(&backup, &op.everyone(), &err)
                }
            }
        })?;
        let err = op.flatten(&servers.sub().everyone(), &servers.sub().everyone(), nested)?;
        // Both servers already know whether the backup failed.
        let failed = op.enclave(servers, |op| {
            let err = op.naked(&err)?;
            op.branch("backup-error", err.is_some());
            Ok(err.is_some())
        })?;
        op.locally(&roles.primary, |un| {
            if *un.unwrap(&failed)? {
                return Ok(DESYNC);
            }
            let req = un.unwrap(request)?;
            Ok(handle_request(&mut un.facet(stores)?.borrow_mut(), req))
        })
    }

    fn step_poly(
        &self,
        op: &ChoreoOp<'_>,
        roles: &Roles,
        stores: &Faceted<StoreRef>,
        request: &MultiplyLocated<Request>,
    ) -> Result<MultiplyLocated<Response>> {
        let backup_names = self.backup_names();
        let nested = op.enclave(&roles.servers, |op| {
            let primary = op.member("primary")?;
            let backups = op.subset(&backup_names.iter().map(String::as_str).collect::<Vec<_>>())?;
            let req = op.broadcast(&primary, request)?;
            op.branch("request", req.kind());
            match &req {
                Request::Put(..) => {
                    let oks = op.parallel(&backups, |b, un| {
                        Ok(self.backup_put(b.location().name(), un.facet(stores)?, &req))
                    })?;
                    let gathered: MultiplyLocated<Quire<Response>> =
                        op.gather(&backups, &primary.alone(), &oks)?;
                    op.locally(&primary, |un| {
                        if un.unwrap(&gathered)?.values().iter().all(|&ok| ok == OK) {
                            Ok(handle_request(&mut un.facet(stores)?.borrow_mut(), &req))
                        } else {
                            Ok(DESYNC)
                        }
                    })
                }
                Request::Get(_) => op.locally(&primary, |un| {
                    Ok(handle_request(&mut un.facet(stores)?.borrow_mut(), &req))
                }),
            }
        })?;
        let servers = roles.servers.sub();
        let primary = servers.select(&["primary"])?;
        op.flatten(&primary, &primary.sub().everyone(), nested)
    }
}

/// The backup's half of a request: for puts it updates its store and acks.
fn handle_backup(
    kvs: &Kvs,
    op: &ChoreoOp<'_>,
    stores: &Faceted<StoreRef>,
    req: &Request,
) -> Result<()> {
    op.branch("request", req.kind());
    if let Request::Put(..) = req {
        let primary = op.member("primary")?;
        let backup = op.member("backup")?;
        let ack = op.locally(&backup, |un| Ok(kvs.backup_put("backup", un.facet(stores)?, req)))?;
        op.comm(&backup, &primary, &ack)?;
    }
    Ok(())
}
