//! Locations, censuses and the witnesses that prove membership and inclusion.
//!
//! Witnesses can only be built through [`member`] and [`subset`] (or the
//! convenience methods on [`Census`]), so any witness that exists satisfies its
//! index invariants.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocationError {
    #[error("location names must be non-empty")]
    EmptyName,
    #[error("a census needs at least one location")]
    EmptyCensus,
    #[error("location `{0}` appears more than once")]
    DuplicateLocation(String),
    #[error("`{location}` is not a member of {census}")]
    NotAMember { location: String, census: String },
    #[error("`{location}` is in {sub} but not in {sup}")]
    NotASubset {
        location: String,
        sub: String,
        sup: String,
    },
    #[error("witness mismatch: expected census {expected}, found {found}")]
    WitnessMismatch { expected: String, found: String },
}

/// A named party. Equality is by name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location(Arc<str>);

impl Location {
    pub fn new(name: &str) -> Result<Self, LocationError> {
        if name.is_empty() {
            return Err(LocationError::EmptyName);
        }
        Ok(Location(Arc::from(name)))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for Location {
    fn eq(&self, other: &str) -> bool {
        &*self.0 == other
    }
}

impl PartialEq<&str> for Location {
    fn eq(&self, other: &&str) -> bool {
        &*self.0 == *other
    }
}

/// An ordered, duplicate-free list of locations.
///
/// Order matters: it fixes the iteration order of fan-out/fan-in loops and the
/// key order of quires. The empty census is representable only as the looped-over
/// set of those loops (see [`Census::empty`]); [`census_of`] always rejects it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Census(Arc<[Location]>);

impl Census {
    /// The empty set of locations. Only meaningful as the looped-over set of
    /// `fanout`, `fanin`, `parallel` or `gather`.
    pub fn empty() -> Self {
        Census(Arc::from(Vec::new()))
    }

    /// Like [`census_of`] but allows the empty list.
    pub fn possibly_empty<S: AsRef<str>>(names: &[S]) -> Result<Self, LocationError> {
        let mut members: Vec<Location> = Vec::with_capacity(names.len());
        for name in names {
            let loc = Location::new(name.as_ref())?;
            if members.contains(&loc) {
                return Err(LocationError::DuplicateLocation(loc.name().to_owned()));
            }
            members.push(loc);
        }
        Ok(Census(Arc::from(members)))
    }

    pub fn from_locations(locations: Vec<Location>) -> Result<Self, LocationError> {
        for (i, loc) in locations.iter().enumerate() {
            if locations[..i].contains(loc) {
                return Err(LocationError::DuplicateLocation(loc.name().to_owned()));
            }
        }
        Ok(Census(Arc::from(locations)))
    }

    pub fn members(&self) -> &[Location] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Location> {
        self.0.iter()
    }

    pub fn position(&self, loc: &Location) -> Option<usize> {
        self.0.iter().position(|l| l == loc)
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|l| l.name() == name)
    }

    pub fn contains(&self, loc: &Location) -> bool {
        self.position(loc).is_some()
    }

    pub fn contains_all(&self, other: &Census) -> bool {
        other.iter().all(|l| self.contains(l))
    }

    pub fn get(&self, index: usize) -> Option<&Location> {
        self.0.get(index)
    }

    pub fn member(&self, name: &str) -> Result<MembershipWitness, LocationError> {
        member(name, self)
    }

    /// The identity subset witness `self ⊆ self`.
    pub fn everyone(&self) -> SubsetWitness {
        SubsetWitness {
            sub: self.clone(),
            sup: self.clone(),
            index_map: (0..self.len()).collect::<Vec<_>>().into(),
        }
    }

    /// Builds the sub-census of the named members and proves it is a subset.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<SubsetWitness, LocationError> {
        let sub = Census::possibly_empty(names)?;
        subset(&sub, self)
    }

    /// Members of `self` at positions `range`, e.g. every location after the first.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SubsetWitness {
        let sub = Census(Arc::from(self.0[range.clone()].to_vec()));
        SubsetWitness {
            sub,
            sup: self.clone(),
            index_map: range.collect::<Vec<_>>().into(),
        }
    }
}

impl fmt::Debug for Census {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Census {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(l.name())?;
        }
        f.write_str("}")
    }
}

impl<'a> IntoIterator for &'a Census {
    type Item = &'a Location;
    type IntoIter = std::slice::Iter<'a, Location>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Builds a census from names, keeping their order.
pub fn census_of<S: AsRef<str>>(names: &[S]) -> Result<Census, LocationError> {
    if names.is_empty() {
        return Err(LocationError::EmptyCensus);
    }
    Census::possibly_empty(names)
}

/// Proof that `location` sits at `index` within `census`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MembershipWitness {
    location: Location,
    census: Census,
    index: usize,
}

impl MembershipWitness {
    pub fn location(&self) -> &Location {
        &self.location
    }

    pub fn census(&self) -> &Census {
        &self.census
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// `p ∈ sub` and `sub ⊆ sup` gives `p ∈ sup`.
    pub fn compose(&self, s: &SubsetWitness) -> Result<MembershipWitness, LocationError> {
        compose(self, s)
    }

    /// The singleton subset `{p} ⊆ census`.
    pub fn alone(&self) -> SubsetWitness {
        SubsetWitness {
            sub: Census(Arc::from(vec![self.location.clone()])),
            sup: self.census.clone(),
            index_map: vec![self.index].into(),
        }
    }
}

impl fmt::Debug for MembershipWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}∈{}@{}", self.location, self.census, self.index)
    }
}

/// Proof that every member of `sub` appears in `sup`, with their positions.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SubsetWitness {
    sub: Census,
    sup: Census,
    index_map: Arc<[usize]>,
}

impl SubsetWitness {
    pub fn sub(&self) -> &Census {
        &self.sub
    }

    pub fn sup(&self) -> &Census {
        &self.sup
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// Membership witnesses for each member of `sub`, relative to `sub`.
    pub fn members(&self) -> impl Iterator<Item = MembershipWitness> + '_ {
        self.sub
            .iter()
            .enumerate()
            .map(|(index, location)| MembershipWitness {
                location: location.clone(),
                census: self.sub.clone(),
                index,
            })
    }

    /// `a ⊆ b` and `b ⊆ c` gives `a ⊆ c`.
    pub fn then(&self, outer: &SubsetWitness) -> Result<SubsetWitness, LocationError> {
        if self.sup != outer.sub {
            return Err(LocationError::WitnessMismatch {
                expected: outer.sub.to_string(),
                found: self.sup.to_string(),
            });
        }
        Ok(SubsetWitness {
            sub: self.sub.clone(),
            sup: outer.sup.clone(),
            index_map: self.index_map.iter().map(|&i| outer.index_map[i]).collect(),
        })
    }
}

impl fmt::Debug for SubsetWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}⊆{}", self.sub, self.sup)
    }
}

pub fn member(name: &str, census: &Census) -> Result<MembershipWitness, LocationError> {
    match census.position_of(name) {
        Some(index) => Ok(MembershipWitness {
            location: census.0[index].clone(),
            census: census.clone(),
            index,
        }),
        None => Err(LocationError::NotAMember {
            location: name.to_owned(),
            census: census.to_string(),
        }),
    }
}

pub fn subset(sub: &Census, sup: &Census) -> Result<SubsetWitness, LocationError> {
    let mut index_map = Vec::with_capacity(sub.len());
    for loc in sub {
        match sup.position(loc) {
            Some(i) => index_map.push(i),
            None => {
                return Err(LocationError::NotASubset {
                    location: loc.name().to_owned(),
                    sub: sub.to_string(),
                    sup: sup.to_string(),
                })
            }
        }
    }
    Ok(SubsetWitness {
        sub: sub.clone(),
        sup: sup.clone(),
        index_map: index_map.into(),
    })
}

pub fn compose(
    m: &MembershipWitness,
    s: &SubsetWitness,
) -> Result<MembershipWitness, LocationError> {
    if m.census != s.sub {
        return Err(LocationError::WitnessMismatch {
            expected: s.sub.to_string(),
            found: m.census.to_string(),
        });
    }
    Ok(MembershipWitness {
        location: m.location.clone(),
        census: s.sup.clone(),
        index: s.index_map[m.index],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn participants() -> Census {
        census_of(&["client", "primary", "backup"]).unwrap()
    }

    #[test]
    fn census_keeps_order() {
        let c = participants();
        let names: Vec<_> = c.iter().map(|l| l.name()).collect();
        assert_eq!(names, ["client", "primary", "backup"]);
    }

    #[test]
    fn census_rejects_empty_and_duplicates() {
        let none: [&str; 0] = [];
        assert_eq!(census_of(&none), Err(LocationError::EmptyCensus));
        assert_eq!(
            census_of(&["a", "a"]),
            Err(LocationError::DuplicateLocation("a".into()))
        );
        assert_eq!(census_of(&[""]), Err(LocationError::EmptyName));
    }

    #[test]
    fn member_lookup() {
        let c = participants();
        assert_eq!(member("primary", &c).unwrap().index(), 1);
        assert!(matches!(
            member("mallory", &c),
            Err(LocationError::NotAMember { .. })
        ));
        let servers = census_of(&["primary", "backup"]).unwrap();
        assert_eq!(member("backup", &servers).unwrap().index(), 1);
    }

    #[test]
    fn subset_lookup() {
        let c = participants();
        let servers = census_of(&["primary", "backup"]).unwrap();
        let w = subset(&servers, &c).unwrap();
        assert_eq!(w.index_map(), &[1, 2]);
        let id = subset(&c, &c).unwrap();
        assert_eq!(id, c.everyone());
        let client = census_of(&["client"]).unwrap();
        match subset(&client, &servers) {
            Err(LocationError::NotASubset { location, .. }) => assert_eq!(location, "client"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compose_chases_indices() {
        let c = participants();
        let servers = census_of(&["primary", "backup"]).unwrap();
        let backup = member("backup", &servers).unwrap();
        let s = subset(&servers, &c).unwrap();
        let composed = compose(&backup, &s).unwrap();
        assert_eq!(composed.index(), 2);
        assert_eq!(composed, member("backup", &c).unwrap());

        // identity law
        assert_eq!(compose(&backup, &servers.everyone()).unwrap(), backup);

        // mismatch
        let p = member("primary", &c).unwrap();
        assert!(matches!(
            compose(&p, &s),
            Err(LocationError::WitnessMismatch { .. })
        ));
    }

    #[test]
    fn singleton_and_slices() {
        let c = participants();
        let p = member("primary", &c).unwrap();
        let alone = p.alone();
        assert_eq!(alone, subset(&census_of(&["primary"]).unwrap(), &c).unwrap());
        let tail = c.slice(1..3);
        assert_eq!(tail, c.select(&["primary", "backup"]).unwrap());
        let empty = c.slice(3..3);
        assert!(empty.sub().is_empty());
    }

    fn census_and_subset() -> impl Strategy<Value = (Vec<String>, Vec<bool>)> {
        proptest::collection::btree_set("[a-z]{1,4}", 1..8).prop_flat_map(|names| {
            let names: Vec<String> = names.into_iter().collect();
            let n = names.len();
            (Just(names), proptest::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #[test]
        fn witnesses_are_sound((names, keep) in census_and_subset(), shuffle in any::<u64>()) {
            let mut names = names;
            // deterministic rotation so order is not always sorted
            let k = (shuffle as usize) % names.len();
            names.rotate_left(k);
            let sup = census_of(&names).unwrap();
            let sub_names: Vec<&String> = names.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| n).collect();
            let sub = Census::possibly_empty(&sub_names).unwrap();
            let s = subset(&sub, &sup).unwrap();
            for (i, loc) in sub.iter().enumerate() {
                prop_assert_eq!(&sup.members()[s.index_map()[i]], loc);
                let m = member(loc.name(), &sub).unwrap();
                prop_assert_eq!(&sub.members()[m.index()], loc);
                // composition law
                prop_assert_eq!(compose(&m, &s).unwrap(), member(loc.name(), &sup).unwrap());
            }
        }
    }
}
