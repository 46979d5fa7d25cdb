//! Located data: multiply-located values, faceted values and quires.
//!
//! Located containers are only ever built by the runtime. User code reads them
//! through an [`Unwrapper`](crate::choreo::Unwrapper) inside `locally`/`parallel`
//! bodies, or with `naked` once the whole census owns the value.

use std::collections::BTreeMap;
use std::fmt;

use crate::location::{Census, Location};
use crate::portable::{DecodeError, Portable, Value};

/// A value known identically by every owner. At an endpoint outside `owners`
/// the payload is absent.
#[derive(Clone)]
pub struct MultiplyLocated<V> {
    owners: Census,
    payload: Option<V>,
}

pub type Located<V> = MultiplyLocated<V>;

impl<V> MultiplyLocated<V> {
    pub(crate) fn new(owners: Census, payload: Option<V>) -> Self {
        debug_assert!(!owners.is_empty(), "multiply-located values need an owner");
        MultiplyLocated { owners, payload }
    }

    pub fn owners(&self) -> &Census {
        &self.owners
    }

    pub fn is_present(&self) -> bool {
        self.payload.is_some()
    }

    pub(crate) fn payload(&self) -> Option<&V> {
        self.payload.as_ref()
    }

    pub(crate) fn into_payload(self) -> Option<V> {
        self.payload
    }
}

impl<V: fmt::Debug> fmt::Debug for MultiplyLocated<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.payload {
            Some(v) => write!(f, "{v:?}@{}", self.owners),
            None => write!(f, "⊥@{}", self.owners),
        }
    }
}

/// Per-owner private values. Each owner can read only its own facet.
#[derive(Clone)]
pub struct Faceted<V> {
    owners: Census,
    facets: Vec<Option<V>>,
}

impl<V> Faceted<V> {
    pub(crate) fn new(owners: Census, facets: Vec<Option<V>>) -> Self {
        assert_eq!(owners.len(), facets.len());
        Faceted { owners, facets }
    }

    pub fn owners(&self) -> &Census {
        &self.owners
    }

    pub(crate) fn facet(&self, loc: &Location) -> Option<&V> {
        self.owners
            .position(loc)
            .and_then(|i| self.facets[i].as_ref())
    }
}

impl<V: fmt::Debug> fmt::Debug for Faceted<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (l, v) in self.owners.iter().zip(&self.facets) {
            match v {
                Some(v) => m.entry(l, v),
                None => m.entry(l, &"⊥"),
            };
        }
        m.finish()
    }
}

/// A complete map from a set of locations to values, held wholly by whoever
/// holds the quire. Iteration follows key order.
#[derive(Clone, PartialEq, Eq)]
pub struct Quire<V> {
    keys: Census,
    values: Vec<V>,
}

impl<V> Quire<V> {
    pub fn new(keys: Census, values: Vec<V>) -> Result<Self, QuireError> {
        if keys.len() != values.len() {
            return Err(QuireError {
                keys: keys.len(),
                values: values.len(),
            });
        }
        Ok(Quire { keys, values })
    }

    pub fn from_fn(keys: &Census, mut f: impl FnMut(&Location) -> V) -> Self {
        let values = keys.iter().map(&mut f).collect();
        Quire {
            keys: keys.clone(),
            values,
        }
    }

    pub fn keys(&self) -> &Census {
        &self.keys
    }

    pub fn get(&self, loc: &Location) -> Option<&V> {
        self.keys.position(loc).map(|i| &self.values[i])
    }

    pub fn get_by_name(&self, name: &str) -> Option<&V> {
        self.keys.position_of(name).map(|i| &self.values[i])
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Location, &V)> {
        self.keys.iter().zip(&self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Replaces the entry at `loc`, leaving the others untouched.
    pub fn modify(mut self, loc: &Location, f: impl FnOnce(V) -> V) -> Self
    where
        V: Clone,
    {
        if let Some(i) = self.keys.position(loc) {
            self.values[i] = f(self.values[i].clone());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("quire has {keys} keys but {values} values")]
pub struct QuireError {
    keys: usize,
    values: usize,
}

impl<V: fmt::Debug> fmt::Debug for Quire<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

/// Encoded as a sequence of `(name, value)` pairs in key order.
impl<V: Portable> Portable for Quire<V> {
    fn to_value(&self) -> Value {
        Value::Seq(
            self.iter()
                .map(|(k, v)| Value::pair(Value::text(k.name()), v.to_value()))
                .collect(),
        )
    }

    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for entry in v.as_seq()? {
            let (k, v) = entry.as_pair()?;
            names.push(k.as_text()?.to_owned());
            values.push(V::from_value(v)?);
        }
        let keys = Census::possibly_empty(&names).map_err(|e| DecodeError::Shape {
            expected: "distinct quire keys",
            found: e.to_string(),
        })?;
        Ok(Quire { keys, values })
    }
}

/// How a choreography result looks from one location, as a portable value.
///
/// Located data shows up as `#1:value` where the location can read it and
/// `#0:()` where it cannot, so per-endpoint results of different runs can be
/// compared byte for byte.
pub trait Observe {
    fn observe(&self, at: &Location) -> Value;
}

fn present(v: Value) -> Value {
    Value::union(1, v)
}

fn absent() -> Value {
    Value::union(0, Value::Unit)
}

impl<V: Portable> Observe for MultiplyLocated<V> {
    fn observe(&self, at: &Location) -> Value {
        match &self.payload {
            Some(v) if self.owners.contains(at) => present(v.to_value()),
            _ => absent(),
        }
    }
}

/// An enclave result that is itself located.
impl<V: Portable> Observe for MultiplyLocated<MultiplyLocated<V>> {
    fn observe(&self, at: &Location) -> Value {
        match &self.payload {
            Some(v) if self.owners.contains(at) => present(v.observe(at)),
            _ => absent(),
        }
    }
}

impl<V: Portable> Observe for Faceted<V> {
    fn observe(&self, at: &Location) -> Value {
        match self.facet(at) {
            Some(v) => present(v.to_value()),
            None => absent(),
        }
    }
}

macro_rules! observe_naked {
    ($($t:ty),*) => {$(
        impl Observe for $t {
            fn observe(&self, _at: &Location) -> Value {
                self.to_value()
            }
        }
    )*};
}

observe_naked!((), bool, i64, u64, String, Value);

impl<V: Portable> Observe for Quire<V> {
    fn observe(&self, _at: &Location) -> Value {
        self.to_value()
    }
}

impl<A: Observe, B: Observe> Observe for (A, B) {
    fn observe(&self, at: &Location) -> Value {
        Value::pair(self.0.observe(at), self.1.observe(at))
    }
}

impl<A: Observe, B: Observe, C: Observe> Observe for (A, B, C) {
    fn observe(&self, at: &Location) -> Value {
        Value::pair(
            self.0.observe(at),
            Value::pair(self.1.observe(at), self.2.observe(at)),
        )
    }
}

impl<T: Observe> Observe for Vec<T> {
    fn observe(&self, at: &Location) -> Value {
        Value::Seq(self.iter().map(|t| t.observe(at)).collect())
    }
}

impl<K: Portable + Ord, V: Observe> Observe for BTreeMap<K, V> {
    fn observe(&self, at: &Location) -> Value {
        Value::Map(
            self.iter()
                .map(|(k, v)| (k.to_value(), v.observe(at)))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::location::census_of;

    #[test]
    fn quire_round_trip_keeps_key_order() {
        let keys = census_of(&["z", "a", "m"]).unwrap();
        let q = Quire::new(keys.clone(), vec![1i64, 2, 3]).unwrap();
        let back = Quire::<i64>::from_bytes(&q.to_bytes()).unwrap();
        assert_eq!(back, q);
        let names: Vec<_> = back.keys().iter().map(|l| l.name().to_owned()).collect();
        assert_eq!(names, ["z", "a", "m"]);
        assert!(Quire::new(keys, vec![1i64]).is_err());
    }

    #[test]
    fn quire_modify_and_lookup() {
        let keys = census_of(&["p1", "p2"]).unwrap();
        let q = Quire::from_fn(&keys, |_| true).modify(keys.get(1).unwrap(), |_| false);
        assert_eq!(q.get_by_name("p1"), Some(&true));
        assert_eq!(q.get_by_name("p2"), Some(&false));
        assert_eq!(q.get_by_name("p3"), None);
    }

    #[test]
    fn observation_masks_non_owners() {
        let c = census_of(&["a", "b"]).unwrap();
        let a = c.get(0).unwrap().clone();
        let b = c.get(1).unwrap().clone();
        let only_a = census_of(&["a"]).unwrap();
        let v = MultiplyLocated::new(only_a, Some(7i64));
        assert_eq!(v.observe(&a), present(Value::Int(7)));
        assert_eq!(v.observe(&b), absent());
        let f = Faceted::new(c.clone(), vec![Some(true), None]);
        assert_eq!(f.observe(&a), present(Value::Bool(true)));
        assert_eq!(f.observe(&b), absent());
    }
}
