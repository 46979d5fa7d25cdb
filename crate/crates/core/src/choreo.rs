//! The choreographic operator bundle.
//!
//! A choreography is ordinary Rust code that receives a [`ChoreoOp`] and talks to
//! the world only through it. What each operator *does* depends on the
//! [`Projection`] injected by the runtime: an endpoint projection sends and
//! receives over a transport and skips work owned by other parties, while the
//! centralized projection plays every party at once. The choreography code is the
//! same in both cases.

use std::cell::{Cell, RefMut};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::located::{Faceted, MultiplyLocated, Observe, Quire};
use crate::location::{Census, Location, LocationError, MembershipWitness, SubsetWitness};
use crate::portable::{DecodeError, Portable};
use crate::protocols::ProtocolError;
use crate::transport::TransportError;

pub type Result<T, E = ChoreoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChoreoError {
    #[error(transparent)]
    Location(#[from] LocationError),
    #[error("`{location}` cannot unwrap a value owned by {owners}")]
    UnwrapAbsent { location: String, owners: String },
    #[error("`{sender}` does not own the value it sends (owners {owners})")]
    NotAnOwner { sender: String, owners: String },
    #[error("census {census} is not among the owners {owners}")]
    CensusNotOwned { census: String, owners: String },
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// A protocol written once for all parties.
pub trait Choreography {
    type Output: Observe;

    fn census(&self) -> Census;

    fn run(&self, op: &ChoreoOp<'_>) -> Result<Self::Output>;
}

impl<C: Choreography + ?Sized> Choreography for &C {
    type Output = C::Output;

    fn census(&self) -> Census {
        (**self).census()
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<Self::Output> {
        (**self).run(op)
    }
}

/// A choreography built from a closure.
pub struct FnChoreography<F> {
    census: Census,
    body: F,
}

impl<F, R> FnChoreography<F>
where
    F: Fn(&ChoreoOp<'_>) -> Result<R>,
    R: Observe,
{
    pub fn new(census: Census, body: F) -> Self {
        FnChoreography { census, body }
    }
}

impl<F, R> Choreography for FnChoreography<F>
where
    F: Fn(&ChoreoOp<'_>) -> Result<R>,
    R: Observe,
{
    type Output = R;

    fn census(&self) -> Census {
        self.census.clone()
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<R> {
        (self.body)(op)
    }
}

/// The endpoint-specific behavior injected into a [`ChoreoOp`].
pub(crate) trait Projection {
    /// Whether this projection acts on behalf of `loc`.
    fn is_here(&self, loc: &Location) -> bool;

    /// Moves an encoded value from `sender` to each of `recipients` (never
    /// containing the sender). `payload` is present iff the sender is here.
    /// Returns the delivered bytes if some recipient is here.
    fn transfer(
        &self,
        sender: &Location,
        recipients: &[Location],
        payload: Option<&[u8]>,
    ) -> Result<Option<Vec<u8>>>;

    fn rng(&self, loc: &Location) -> RefMut<'_, ChaCha8Rng>;

    fn record_branch(&self, path: &[u32], census: &Census, site: &str, outcome: &str);

    /// Logs the encoding of a value held by several owners, keyed by the
    /// operator path that produced it.
    fn record_owned(&self, path: &[u32], owners: &Census, bytes: &[u8]);

    fn enter_enclave(&self, _path: &[u32], _members: &Census) {}

    fn exit_enclave(&self, _path: &[u32]) {}
}

/// Reads located values owned by one location inside `locally`/`parallel`.
pub struct Unwrapper<'u> {
    location: &'u Location,
    rng: &'u mut ChaCha8Rng,
}

impl<'u> Unwrapper<'u> {
    pub fn location(&self) -> &Location {
        self.location
    }

    pub fn unwrap<'v, V>(&self, v: &'v MultiplyLocated<V>) -> Result<&'v V> {
        match v.payload() {
            Some(p) if v.owners().contains(self.location) => Ok(p),
            _ => Err(ChoreoError::UnwrapAbsent {
                location: self.location.to_string(),
                owners: v.owners().to_string(),
            }),
        }
    }

    /// This location's own facet.
    pub fn facet<'v, V>(&self, f: &'v Faceted<V>) -> Result<&'v V> {
        f.facet(self.location)
            .ok_or_else(|| ChoreoError::UnwrapAbsent {
                location: self.location.to_string(),
                owners: f.owners().to_string(),
            })
    }

    /// Randomness private to this location.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }
}

/// Reads values owned by the whole census, for endpoint-blind replicated
/// computation. Has no access to randomness or to the executing location.
pub struct CensusUnwrapper<'u> {
    census: &'u Census,
}

impl CensusUnwrapper<'_> {
    pub fn unwrap<'v, V>(&self, v: &'v MultiplyLocated<V>) -> Result<&'v V> {
        match v.payload() {
            Some(p) if v.owners().contains_all(self.census) => Ok(p),
            _ => Err(ChoreoError::UnwrapAbsent {
                location: self.census.to_string(),
                owners: v.owners().to_string(),
            }),
        }
    }
}

/// The operator bundle handed to a choreography.
pub struct ChoreoOp<'p> {
    census: Census,
    proj: &'p dyn Projection,
    path: Vec<u32>,
    counter: Cell<u32>,
}

impl<'p> ChoreoOp<'p> {
    pub(crate) fn new(census: Census, proj: &'p dyn Projection) -> Self {
        ChoreoOp {
            census,
            proj,
            path: Vec::new(),
            counter: Cell::new(0),
        }
    }

    fn child(&self, census: Census, path: Vec<u32>) -> ChoreoOp<'p> {
        ChoreoOp {
            census,
            proj: self.proj,
            path,
            counter: Cell::new(0),
        }
    }

    fn next_path(&self) -> Vec<u32> {
        let id = self.counter.get();
        self.counter.set(id + 1);
        let mut p = self.path.clone();
        p.push(id);
        p
    }

    pub fn census(&self) -> &Census {
        &self.census
    }

    pub fn member(&self, name: &str) -> Result<MembershipWitness> {
        Ok(self.census.member(name)?)
    }

    pub fn subset(&self, names: &[&str]) -> Result<SubsetWitness> {
        Ok(self.census.select(names)?)
    }

    pub fn everyone(&self) -> SubsetWitness {
        self.census.everyone()
    }

    fn check_member(&self, w: &MembershipWitness) -> Result<()> {
        if w.census() != &self.census {
            return Err(LocationError::WitnessMismatch {
                expected: self.census.to_string(),
                found: w.census().to_string(),
            }
            .into());
        }
        Ok(())
    }

    fn check_subset(&self, s: &SubsetWitness) -> Result<()> {
        if s.sup() != &self.census {
            return Err(LocationError::WitnessMismatch {
                expected: self.census.to_string(),
                found: s.sup().to_string(),
            }
            .into());
        }
        Ok(())
    }

    fn any_here(&self, locs: &Census) -> bool {
        locs.iter().any(|l| self.proj.is_here(l))
    }

    fn record_owned<V: Portable>(&self, path: &[u32], owners: &Census, v: &V) {
        if owners.len() >= 2 && self.any_here(owners) {
            self.proj.record_owned(path, owners, &v.to_bytes());
        }
    }

    /// Runs `body` at `w`'s location only. Elsewhere the result is absent.
    pub fn locally<V>(
        &self,
        w: &MembershipWitness,
        body: impl FnOnce(&mut Unwrapper<'_>) -> Result<V>,
    ) -> Result<MultiplyLocated<V>> {
        self.check_member(w)?;
        self.next_path();
        let loc = w.location();
        let payload = if self.proj.is_here(loc) {
            let mut rng = self.proj.rng(loc);
            let mut un = Unwrapper {
                location: loc,
                rng: &mut rng,
            };
            Some(body(&mut un)?)
        } else {
            None
        };
        Ok(MultiplyLocated::new(w.alone().sub().clone(), payload))
    }

    /// Sends `v` from `sender` to every recipient other than the sender itself.
    pub fn multicast<V: Portable>(
        &self,
        sender: &MembershipWitness,
        recipients: &SubsetWitness,
        v: &MultiplyLocated<V>,
    ) -> Result<MultiplyLocated<V>> {
        self.check_member(sender)?;
        self.check_subset(recipients)?;
        let path = self.next_path();
        let s = sender.location();
        if !v.owners().contains(s) {
            return Err(ChoreoError::NotAnOwner {
                sender: s.to_string(),
                owners: v.owners().to_string(),
            });
        }
        let outgoing = if self.proj.is_here(s) {
            let p = v.payload().ok_or_else(|| ChoreoError::UnwrapAbsent {
                location: s.to_string(),
                owners: v.owners().to_string(),
            })?;
            Some(p.to_bytes())
        } else {
            None
        };
        let others: Vec<Location> = recipients
            .sub()
            .iter()
            .filter(|r| *r != s)
            .cloned()
            .collect();
        let delivered = self
            .proj
            .transfer(s, &others, outgoing.as_deref())?;
        let rs = recipients.sub().clone();
        let payload = if self.any_here(&rs) {
            let bytes = delivered.or(outgoing).ok_or_else(|| ChoreoError::UnwrapAbsent {
                location: rs.to_string(),
                owners: v.owners().to_string(),
            })?;
            Some(V::from_bytes(&bytes)?)
        } else {
            None
        };
        if let Some(p) = &payload {
            self.record_owned(&path, &rs, p);
        }
        Ok(MultiplyLocated::new(rs, payload))
    }

    /// Point-to-point send to a single receiver.
    pub fn comm<V: Portable>(
        &self,
        sender: &MembershipWitness,
        receiver: &MembershipWitness,
        v: &MultiplyLocated<V>,
    ) -> Result<MultiplyLocated<V>> {
        self.check_member(receiver)?;
        self.multicast(sender, &receiver.alone(), v)
    }

    /// Shares `v` with the whole census and returns it unwrapped everywhere.
    pub fn broadcast<V: Portable + Clone>(
        &self,
        sender: &MembershipWitness,
        v: &MultiplyLocated<V>,
    ) -> Result<V> {
        let everywhere = self.multicast(sender, &self.everyone(), v)?;
        self.naked(&everywhere)
    }

    /// Unwraps a value owned by every census member.
    pub fn naked<V: Clone>(&self, v: &MultiplyLocated<V>) -> Result<V> {
        if !v.owners().contains_all(&self.census) {
            return Err(ChoreoError::CensusNotOwned {
                census: self.census.to_string(),
                owners: v.owners().to_string(),
            });
        }
        v.payload().cloned().ok_or_else(|| ChoreoError::UnwrapAbsent {
            location: self.census.to_string(),
            owners: v.owners().to_string(),
        })
    }

    /// Runs `body` among the members of `sub` only. Everyone else skips it.
    pub fn enclave<R>(
        &self,
        sub: &SubsetWitness,
        body: impl FnOnce(&ChoreoOp<'p>) -> Result<R>,
    ) -> Result<MultiplyLocated<R>> {
        self.check_subset(sub)?;
        let path = self.next_path();
        let members = sub.sub().clone();
        if members.is_empty() {
            return Err(LocationError::EmptyCensus.into());
        }
        let payload = if self.any_here(&members) {
            self.proj.enter_enclave(&path, &members);
            let child = self.child(members.clone(), path.clone());
            let r = body(&child);
            self.proj.exit_enclave(&path);
            Some(r?)
        } else {
            None
        };
        Ok(MultiplyLocated::new(members, payload))
    }

    /// Pure computation replicated by every census member.
    pub fn replicated<V: Portable>(
        &self,
        body: impl FnOnce(&CensusUnwrapper<'_>) -> Result<V>,
    ) -> Result<MultiplyLocated<V>> {
        let path = self.next_path();
        let un = CensusUnwrapper {
            census: &self.census,
        };
        let v = body(&un)?;
        self.record_owned(&path, &self.census, &v);
        Ok(MultiplyLocated::new(self.census.clone(), Some(v)))
    }

    /// Loops over `qs` in order. Iteration `q` must produce a value located at `q`;
    /// the results are collected as `q`'s facet. The witness handed to `per` is
    /// relative to this census.
    pub fn fanout<V>(
        &self,
        qs: &SubsetWitness,
        mut per: impl FnMut(&ChoreoOp<'p>, &MembershipWitness) -> Result<MultiplyLocated<V>>,
    ) -> Result<Faceted<V>> {
        self.check_subset(qs)?;
        let path = self.next_path();
        let mut facets = Vec::with_capacity(qs.sub().len());
        for (i, q) in qs.members().enumerate() {
            let mut p = path.clone();
            p.push(i as u32);
            let child = self.child(self.census.clone(), p);
            let q = q.compose(qs)?;
            let m = per(&child, &q)?;
            if !m.owners().contains(q.location()) {
                return Err(ChoreoError::NotAnOwner {
                    sender: q.location().to_string(),
                    owners: m.owners().to_string(),
                });
            }
            facets.push(if self.proj.is_here(q.location()) {
                m.into_payload()
            } else {
                None
            });
        }
        Ok(Faceted::new(qs.sub().clone(), facets))
    }

    /// Loops over `qs` in order. Every iteration produces a value located at all
    /// of `rs`; the recipients collect them as a quire keyed by `qs`. The witness
    /// handed to `per` is relative to this census.
    pub fn fanin<V>(
        &self,
        qs: &SubsetWitness,
        rs: &SubsetWitness,
        mut per: impl FnMut(&ChoreoOp<'p>, &MembershipWitness) -> Result<MultiplyLocated<V>>,
    ) -> Result<MultiplyLocated<Quire<V>>> {
        self.check_subset(qs)?;
        self.check_subset(rs)?;
        let path = self.next_path();
        let receivers = rs.sub().clone();
        if receivers.is_empty() {
            return Err(LocationError::EmptyCensus.into());
        }
        let here = self.any_here(&receivers);
        let mut values = Vec::with_capacity(qs.sub().len());
        for (i, q) in qs.members().enumerate() {
            let mut p = path.clone();
            p.push(i as u32);
            let child = self.child(self.census.clone(), p);
            let q = q.compose(qs)?;
            let m = per(&child, &q)?;
            if !m.owners().contains_all(&receivers) {
                return Err(ChoreoError::CensusNotOwned {
                    census: receivers.to_string(),
                    owners: m.owners().to_string(),
                });
            }
            if here {
                let owners = m.owners().to_string();
                values.push(m.into_payload().ok_or_else(|| ChoreoError::UnwrapAbsent {
                    location: receivers.to_string(),
                    owners,
                })?);
            }
        }
        let payload = if here {
            Some(Quire::new(qs.sub().clone(), values).expect("one value per key"))
        } else {
            None
        };
        Ok(MultiplyLocated::new(receivers, payload))
    }

    /// Each member of `qs` runs `body` on its own. No communication. The witness
    /// handed to `body` is relative to `qs`, so its index is the position in `qs`.
    pub fn parallel<V>(
        &self,
        qs: &SubsetWitness,
        mut body: impl FnMut(&MembershipWitness, &mut Unwrapper<'_>) -> Result<V>,
    ) -> Result<Faceted<V>> {
        self.check_subset(qs)?;
        self.next_path();
        let mut facets = Vec::with_capacity(qs.sub().len());
        for q in qs.members() {
            let loc = q.location();
            facets.push(if self.proj.is_here(loc) {
                let mut rng = self.proj.rng(loc);
                let mut un = Unwrapper {
                    location: loc,
                    rng: &mut rng,
                };
                Some(body(&q, &mut un)?)
            } else {
                None
            });
        }
        Ok(Faceted::new(qs.sub().clone(), facets))
    }

    /// Sends each recipient its own leaf of the sender's quire.
    pub fn scatter<V: Portable + Clone>(
        &self,
        sender: &MembershipWitness,
        recipients: &SubsetWitness,
        v: &MultiplyLocated<Quire<V>>,
    ) -> Result<Faceted<V>> {
        self.check_member(sender)?;
        self.check_subset(recipients)?;
        self.next_path();
        let s = sender.location();
        if !v.owners().contains(s) {
            return Err(ChoreoError::NotAnOwner {
                sender: s.to_string(),
                owners: v.owners().to_string(),
            });
        }
        let quire = if self.proj.is_here(s) {
            Some(v.payload().ok_or_else(|| ChoreoError::UnwrapAbsent {
                location: s.to_string(),
                owners: v.owners().to_string(),
            })?)
        } else {
            None
        };
        let mut facets = Vec::with_capacity(recipients.sub().len());
        for q in recipients.sub() {
            let leaf = match quire {
                Some(quire) => Some(quire.get(q).ok_or_else(|| LocationError::NotAMember {
                    location: q.to_string(),
                    census: quire.keys().to_string(),
                })?),
                None => None,
            };
            if q == s {
                facets.push(leaf.cloned());
                continue;
            }
            let delivered = self.proj.transfer(
                s,
                std::slice::from_ref(q),
                leaf.map(Portable::to_bytes).as_deref(),
            )?;
            facets.push(if self.proj.is_here(q) {
                let bytes = delivered.ok_or_else(|| ChoreoError::UnwrapAbsent {
                    location: q.to_string(),
                    owners: v.owners().to_string(),
                })?;
                Some(V::from_bytes(&bytes)?)
            } else {
                None
            });
        }
        Ok(Faceted::new(recipients.sub().clone(), facets))
    }

    /// Every sender multicasts its facet to `recipients`, who assemble a quire.
    pub fn gather<V: Portable + Clone>(
        &self,
        senders: &SubsetWitness,
        recipients: &SubsetWitness,
        f: &Faceted<V>,
    ) -> Result<MultiplyLocated<Quire<V>>> {
        self.check_subset(senders)?;
        self.check_subset(recipients)?;
        let path = self.next_path();
        let rs = recipients.sub().clone();
        if rs.is_empty() {
            return Err(LocationError::EmptyCensus.into());
        }
        if !f.owners().contains_all(senders.sub()) {
            return Err(ChoreoError::CensusNotOwned {
                census: senders.sub().to_string(),
                owners: f.owners().to_string(),
            });
        }
        let here = self.any_here(&rs);
        let mut values = Vec::with_capacity(senders.sub().len());
        for q in senders.sub() {
            let own = if self.proj.is_here(q) {
                Some(f.facet(q).ok_or_else(|| ChoreoError::UnwrapAbsent {
                    location: q.to_string(),
                    owners: f.owners().to_string(),
                })?)
            } else {
                None
            };
            let others: Vec<Location> = rs.iter().filter(|r| *r != q).cloned().collect();
            let delivered =
                self.proj
                    .transfer(q, &others, own.map(Portable::to_bytes).as_deref())?;
            if here {
                let v = match (own, delivered) {
                    (Some(v), _) if rs.contains(q) => v.clone(),
                    (_, Some(bytes)) => V::from_bytes(&bytes)?,
                    (Some(v), None) => v.clone(),
                    (None, None) => {
                        return Err(ChoreoError::UnwrapAbsent {
                            location: rs.to_string(),
                            owners: q.to_string(),
                        })
                    }
                };
                values.push(v);
            }
        }
        let payload = if here {
            let q = Quire::new(senders.sub().clone(), values).expect("one value per key");
            self.record_owned(&path, &rs, &q);
            Some(q)
        } else {
            None
        };
        Ok(MultiplyLocated::new(rs, payload))
    }

    /// Un-nests a located located value onto `t`, which must be a subset of both
    /// the outer and inner owners.
    pub fn flatten<V>(
        &self,
        outer: &SubsetWitness,
        inner: &SubsetWitness,
        v: MultiplyLocated<MultiplyLocated<V>>,
    ) -> Result<MultiplyLocated<V>> {
        self.next_path();
        if outer.sup() != v.owners() {
            return Err(LocationError::WitnessMismatch {
                expected: v.owners().to_string(),
                found: outer.sup().to_string(),
            }
            .into());
        }
        if outer.sub() != inner.sub() {
            return Err(LocationError::WitnessMismatch {
                expected: outer.sub().to_string(),
                found: inner.sub().to_string(),
            }
            .into());
        }
        let t = outer.sub().clone();
        let here = self.any_here(&t);
        let payload = match v.into_payload() {
            Some(in_v) => {
                if inner.sup() != in_v.owners() {
                    return Err(LocationError::WitnessMismatch {
                        expected: in_v.owners().to_string(),
                        found: inner.sup().to_string(),
                    }
                    .into());
                }
                if here {
                    in_v.into_payload()
                } else {
                    None
                }
            }
            None => None,
        };
        Ok(MultiplyLocated::new(t, payload))
    }

    /// Shrinks the owner set to `t`; dropped owners hold nothing afterwards.
    pub fn others_forget<V>(
        &self,
        t: &SubsetWitness,
        v: MultiplyLocated<V>,
    ) -> Result<MultiplyLocated<V>> {
        self.next_path();
        if t.sup() != v.owners() {
            return Err(LocationError::WitnessMismatch {
                expected: v.owners().to_string(),
                found: t.sup().to_string(),
            }
            .into());
        }
        let owners = t.sub().clone();
        if owners.is_empty() {
            return Err(LocationError::EmptyCensus.into());
        }
        let payload = if self.any_here(&owners) {
            v.into_payload()
        } else {
            None
        };
        Ok(MultiplyLocated::new(owners, payload))
    }

    /// Records which way a census-wide branch went. Every census member should
    /// log the same outcome at the same site. Whitespace in either is replaced
    /// by `_` so the report stays line-oriented.
    pub fn branch(&self, site: &str, outcome: impl std::fmt::Display) {
        let path = self.next_path();
        let clean = |s: &str| s.replace(char::is_whitespace, "_");
        self.proj
            .record_branch(&path, &self.census, &clean(site), &clean(&outcome.to_string()));
    }
}
