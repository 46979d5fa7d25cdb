//! GMW secure multiparty computation over xor-shared bits.
//!
//! Every wire of a boolean circuit is held as one share per party; the shares
//! xor to the wire's value. Xor gates are local. And gates use pairwise 1-of-2
//! oblivious transfer. At the end the parties [`reveal`] the output wire.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::choreo::{ChoreoOp, Choreography, Result};
use crate::located::{Faceted, MultiplyLocated, Quire};
use crate::location::{Census, LocationError, MembershipWitness};

use super::ProtocolError;

#[derive(Clone, PartialEq, Eq)]
pub enum Circuit {
    Input(MembershipWitness),
    Lit(bool),
    And(Box<Circuit>, Box<Circuit>),
    Xor(Box<Circuit>, Box<Circuit>),
}

impl Circuit {
    pub fn and(l: Circuit, r: Circuit) -> Circuit {
        Circuit::And(Box::new(l), Box::new(r))
    }

    pub fn xor(l: Circuit, r: Circuit) -> Circuit {
        Circuit::Xor(Box::new(l), Box::new(r))
    }

    /// A leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Circuit::Input(_) | Circuit::Lit(_) => 1,
            Circuit::And(l, r) | Circuit::Xor(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Number of input wires owned by each party, by name.
    pub fn input_counts(&self) -> BTreeMap<String, usize> {
        fn walk(c: &Circuit, out: &mut BTreeMap<String, usize>) {
            match c {
                Circuit::Input(w) => *out.entry(w.location().name().to_owned()).or_default() += 1,
                Circuit::Lit(_) => {}
                Circuit::And(l, r) | Circuit::Xor(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(self, &mut out);
        out
    }

    /// Parses the s-expression form, e.g. `(xor (and (in p1) (lit 1)) (in p2))`.
    pub fn parse(text: &str, census: &Census) -> std::result::Result<Circuit, ParseError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let c = parse_expr(&tokens, &mut pos, census)?;
        if pos != tokens.len() {
            return Err(ParseError(format!("trailing input after `{c}`")));
        }
        Ok(c)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Circuit::Input(w) => write!(f, "(in {})", w.location()),
            Circuit::Lit(b) => write!(f, "(lit {})", u8::from(*b)),
            Circuit::And(l, r) => write!(f, "(and {l} {r})"),
            Circuit::Xor(l, r) => write!(f, "(xor {l} {r})"),
        }
    }
}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("circuit: {0}")]
pub struct ParseError(String);

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_expr(t: &[String], pos: &mut usize, census: &Census) -> std::result::Result<Circuit, ParseError> {
    let next = |pos: &mut usize| -> std::result::Result<&str, ParseError> {
        let tok = t.get(*pos).ok_or_else(|| ParseError("unexpected end".into()))?;
        *pos += 1;
        Ok(tok.as_str())
    };
    if next(pos)? != "(" {
        return Err(ParseError(format!("expected `(` at token {}", *pos - 1)));
    }
    let head = next(pos)?.to_ascii_lowercase();
    let c = match head.as_str() {
        "in" | "input" => {
            let name = next(pos)?;
            Circuit::Input(census.member(name).map_err(|e| ParseError(e.to_string()))?)
        }
        "lit" => match next(pos)? {
            "1" | "true" => Circuit::Lit(true),
            "0" | "false" => Circuit::Lit(false),
            other => return Err(ParseError(format!("bad literal `{other}`"))),
        },
        "and" | "xor" => {
            let l = parse_expr(t, pos, census)?;
            let r = parse_expr(t, pos, census)?;
            if head == "and" {
                Circuit::and(l, r)
            } else {
                Circuit::xor(l, r)
            }
        }
        other => return Err(ParseError(format!("unknown gate `{other}`"))),
    };
    if next(pos)? != ")" {
        return Err(ParseError(format!("expected `)` after `{c}`")));
    }
    Ok(c)
}

/// Every circuit over `census` of depth at most `depth`, leaves first.
pub fn circuits_up_to_depth(census: &Census, depth: usize) -> Vec<Circuit> {
    let mut leaves: Vec<Circuit> = census.iter().map(|l| {
        Circuit::Input(census.member(l.name()).expect("member of its own census"))
    }).collect();
    leaves.push(Circuit::Lit(false));
    leaves.push(Circuit::Lit(true));
    let mut all = leaves.clone();
    for _ in 1..depth {
        let prev = all.clone();
        all = leaves.clone();
        for l in &prev {
            for r in &prev {
                all.push(Circuit::and(l.clone(), r.clone()));
                all.push(Circuit::xor(l.clone(), r.clone()));
            }
        }
    }
    if depth == 0 {
        all.clear();
    }
    all
}

/// Every assignment of bits to the circuit's input wires, as per-party streams.
pub fn input_assignments(c: &Circuit) -> Vec<BTreeMap<String, Vec<bool>>> {
    let counts: Vec<(String, usize)> = c.input_counts().into_iter().collect();
    let total: usize = counts.iter().map(|(_, k)| k).sum();
    (0u32..1 << total)
        .map(|bits| {
            let mut i = 0;
            counts
                .iter()
                .map(|(p, k)| {
                    let stream = (0..*k)
                        .map(|_| {
                            let b = bits >> i & 1 == 1;
                            i += 1;
                            b
                        })
                        .collect();
                    (p.clone(), stream)
                })
                .collect()
        })
        .collect()
}

/// Plain evaluation. Input wires consume their owner's stream left to right.
pub fn eval_circuit(
    c: &Circuit,
    inputs: &BTreeMap<String, Vec<bool>>,
) -> std::result::Result<bool, ProtocolError> {
    fn go(
        c: &Circuit,
        inputs: &BTreeMap<String, Vec<bool>>,
        used: &mut BTreeMap<String, usize>,
    ) -> std::result::Result<bool, ProtocolError> {
        Ok(match c {
            Circuit::Input(w) => {
                let name = w.location().name();
                let k = used.entry(name.to_owned()).or_default();
                let b = inputs
                    .get(name)
                    .and_then(|s| s.get(*k))
                    .copied()
                    .ok_or_else(|| ProtocolError::InputExhausted { party: name.to_owned() })?;
                *k += 1;
                b
            }
            Circuit::Lit(b) => *b,
            Circuit::And(l, r) => go(l, inputs, used)? & go(r, inputs, used)?,
            Circuit::Xor(l, r) => go(l, inputs, used)? ^ go(r, inputs, used)?,
        })
    }
    go(c, inputs, &mut BTreeMap::new())
}

/// Parity of a non-empty sequence.
pub fn xor_fold(bits: &[bool]) -> std::result::Result<bool, ProtocolError> {
    if bits.is_empty() {
        return Err(ProtocolError::EmptyFold);
    }
    Ok(bits.iter().fold(false, |a, b| a ^ b))
}

/// `n` shares of `secret`: the first makes the parity right, the rest are free.
pub fn gen_shares(n: usize, secret: bool, rng: &mut impl Rng) -> Vec<bool> {
    assert!(n >= 1, "at least one share");
    let free: Vec<bool> = (1..n).map(|_| rng.random()).collect();
    shares_from(secret, &free)
}

/// The share vector for `secret` given the free shares.
pub fn shares_from(secret: bool, free: &[bool]) -> Vec<bool> {
    let first = free.iter().fold(secret, |a, b| a ^ b);
    std::iter::once(first).chain(free.iter().copied()).collect()
}

/// Splits a secret held by `p` into one share per census member.
pub fn secret_share(
    op: &ChoreoOp<'_>,
    p: &MembershipWitness,
    value: &MultiplyLocated<bool>,
) -> Result<Faceted<bool>> {
    let census = op.census().clone();
    let shares = op.locally(p, |un| {
        let secret = *un.unwrap(value)?;
        let v = gen_shares(census.len(), secret, un.rng());
        Ok(Quire::new(census.clone(), v).expect("one share per party"))
    })?;
    op.scatter(p, &op.everyone(), &shares)
}

/// Everyone learns the xor of all shares.
pub fn reveal(op: &ChoreoOp<'_>, shares: &Faceted<bool>) -> Result<bool> {
    let all = op.everyone();
    let gathered = op.gather(&all, &all, shares)?;
    let q = op.naked(&gathered)?;
    Ok(xor_fold(q.values())?)
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn pad_bit(public_key: &[u8]) -> bool {
    digest(&[public_key, b"ot"])[31] & 1 == 1
}

/// Receiver-side key material: two published keys, one of which is the digest
/// of a retained random pad.
struct OtKeys {
    public: (String, String),
    pad: [u8; 32],
}

fn ot_keys(select: bool, rng: &mut impl Rng) -> OtKeys {
    let x0: [u8; 32] = rng.random();
    let x1: [u8; 32] = rng.random();
    let pk0 = hex::encode(digest(&[&x0]));
    let pk1 = hex::encode(digest(&[&x1]));
    OtKeys {
        public: (pk0, pk1),
        pad: if select { x1 } else { x0 },
    }
}

/// 1-of-2 oblivious transfer between exactly two parties: the receiver learns
/// `pair.0` if `select` is false and `pair.1` otherwise. Two messages: keys to
/// the sender, masked bits back.
///
/// The masking is a toy. It keeps the message pattern and the selection
/// behavior, not the secrecy.
pub fn ot2(
    op: &ChoreoOp<'_>,
    sender: &MembershipWitness,
    receiver: &MembershipWitness,
    pair: &MultiplyLocated<(bool, bool)>,
    select: &MultiplyLocated<bool>,
) -> Result<MultiplyLocated<bool>> {
    if op.census().len() != 2 || sender.location() == receiver.location() {
        return Err(LocationError::WitnessMismatch {
            expected: "a census of exactly the sender and the receiver".into(),
            found: op.census().to_string(),
        }
        .into());
    }
    let keys = op.locally(receiver, |un| {
        let s = *un.unwrap(select)?;
        Ok(ot_keys(s, un.rng()))
    })?;
    let public = op.locally(receiver, |un| Ok(un.unwrap(&keys)?.public.clone()))?;
    let public = op.comm(receiver, sender, &public)?;
    let masked = op.locally(sender, |un| {
        let (b0, b1) = *un.unwrap(pair)?;
        let (pk0, pk1) = un.unwrap(&public)?;
        Ok((b0 ^ pad_bit(pk0.as_bytes()), b1 ^ pad_bit(pk1.as_bytes())))
    })?;
    let masked = op.comm(sender, receiver, &masked)?;
    op.locally(receiver, |un| {
        let s = *un.unwrap(select)?;
        let (c0, c1) = *un.unwrap(&masked)?;
        let key = hex::encode(digest(&[&un.unwrap(&keys)?.pad]));
        Ok(if s { c1 } else { c0 } ^ pad_bit(key.as_bytes()))
    })
}

/// Which pair sender `i` offers receiver `j` in an and gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Masking {
    /// `(a_ij, a_ij ^ u_i)`: receiver `j` obtains `a_ij ^ (u_i & v_j)`.
    Corrected,
    /// `(u_i ^ a_ij, a_ij)`: only right for an odd number of parties.
    #[cfg_attr(not(test), allow(dead_code))]
    Literal,
}

/// And of two shared bits.
pub fn f_and(op: &ChoreoOp<'_>, u: &Faceted<bool>, v: &Faceted<bool>) -> Result<Faceted<bool>> {
    f_and_with(op, u, v, Masking::Corrected)
}

pub(crate) fn f_and_with(
    op: &ChoreoOp<'_>,
    u: &Faceted<bool>,
    v: &Faceted<bool>,
    masking: Masking,
) -> Result<Faceted<bool>> {
    let all = op.everyone();
    let census = op.census().clone();
    // a[i][j]: party i's mask for party j.
    let masks = op.parallel(&all, |_, un| {
        let rng = un.rng();
        Ok(Quire::from_fn(&census, |_| rng.random::<bool>()))
    })?;
    let bs = op.fanout(&all, |op, p_j| {
        let b_i_s = op.fanin(&op.everyone(), &p_j.alone(), |op, p_i| {
            if p_i.location() == p_j.location() {
                return op.locally(p_j, |_| Ok(false));
            }
            let pair = op.locally(p_i, |un| {
                let a_ij = *un.facet(&masks)?.get(p_j.location()).expect("mask per party");
                let u_i = *un.facet(u)?;
                Ok(match masking {
                    Masking::Corrected => (a_ij, a_ij ^ u_i),
                    Masking::Literal => (u_i ^ a_ij, a_ij),
                })
            })?;
            let duo = op
                .census()
                .select(&[p_i.location().name(), p_j.location().name()])?;
            let got = op.enclave(&duo, |op| {
                let sender = op.member(p_i.location().name())?;
                let receiver = op.member(p_j.location().name())?;
                let select = op.locally(&receiver, |un| Ok(*un.facet(v)?))?;
                ot2(op, &sender, &receiver, &pair, &select)
            })?;
            let only_j = duo.sub().select(&[p_j.location().name()])?;
            op.flatten(&only_j, &only_j.sub().everyone(), got)
        })?;
        op.locally(p_j, |un| Ok(xor_fold(un.unwrap(&b_i_s)?.values())?))
    })?;
    op.parallel(&all, |p_i, un| {
        let me = p_i.location();
        let own = *un.facet(u)? & *un.facet(v)?;
        let b = *un.facet(&bs)?;
        let a = un.facet(&masks)?.clone().modify(me, |_| false);
        Ok(a.values().iter().fold(own ^ b, |acc, x| acc ^ x))
    })
}

fn share_circuit(
    op: &ChoreoOp<'_>,
    c: &Circuit,
    inputs: &BTreeMap<String, Vec<bool>>,
    used: &mut BTreeMap<String, usize>,
) -> Result<Faceted<bool>> {
    match c {
        Circuit::Input(w) => {
            let w = op.member(w.location().name())?;
            let name = w.location().name().to_owned();
            let k = {
                let k = used.entry(name.clone()).or_default();
                *k += 1;
                *k - 1
            };
            let value = op.locally(&w, |_| {
                inputs
                    .get(&name)
                    .and_then(|s| s.get(k))
                    .copied()
                    .ok_or_else(|| ProtocolError::InputExhausted { party: name.clone() }.into())
            })?;
            secret_share(op, &w, &value)
        }
        Circuit::Lit(b) => op.fanout(&op.everyone(), |op, p| {
            let first = p.index() == 0;
            let alone = p.alone();
            let chosen = op.enclave(&alone, |op| op.replicated(|_| Ok(first && *b)))?;
            op.flatten(&alone.sub().everyone(), &alone.sub().everyone(), chosen)
        }),
        Circuit::Xor(l, r) => {
            let l = share_circuit(op, l, inputs, used)?;
            let r = share_circuit(op, r, inputs, used)?;
            op.parallel(&op.everyone(), |_, un| Ok(*un.facet(&l)? ^ *un.facet(&r)?))
        }
        Circuit::And(l, r) => {
            let l = share_circuit(op, l, inputs, used)?;
            let r = share_circuit(op, r, inputs, used)?;
            f_and(op, &l, &r)
        }
    }
}

/// Evaluates `c` on shares. Each party's inputs are read only by that party.
pub fn gmw(
    op: &ChoreoOp<'_>,
    c: &Circuit,
    inputs: &BTreeMap<String, Vec<bool>>,
) -> Result<Faceted<bool>> {
    share_circuit(op, c, inputs, &mut BTreeMap::new())
}

/// Shares, evaluates and reveals a circuit.
#[derive(Debug, Clone)]
pub struct Gmw {
    pub census: Census,
    pub circuit: Circuit,
    /// Per-party input streams, consumed left to right by input wires.
    pub inputs: BTreeMap<String, Vec<bool>>,
}

impl Gmw {
    /// Parties `p1..pn`.
    pub fn parties(n: usize) -> Census {
        let names: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
        crate::location::census_of(&names).expect("at least one party")
    }
}

impl Choreography for Gmw {
    type Output = bool;

    fn census(&self) -> Census {
        self.census.clone()
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<bool> {
        let out = gmw(op, &self.circuit, &self.inputs)?;
        reveal(op, &out)
    }
}

/// Parses input streams written `p1=1,p2=0,p1=1` or `p1=101,p2=0`.
pub fn parse_inputs(text: &str) -> std::result::Result<BTreeMap<String, Vec<bool>>, ProtocolError> {
    let mut out: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, bits) = item
            .split_once('=')
            .ok_or_else(|| ProtocolError::Invalid(format!("bad input `{item}`")))?;
        let stream = out.entry(name.trim().to_owned()).or_default();
        for ch in bits.trim().chars() {
            stream.push(match ch {
                '0' => false,
                '1' => true,
                _ => return Err(ProtocolError::Invalid(format!("bad bit in `{item}`"))),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choreo::FnChoreography;
    use crate::location::census_of;
    use crate::runtime::run_centralized;
    use rand::SeedableRng;

    #[test]
    fn xor_fold_examples() {
        assert_eq!(xor_fold(&[true]), Ok(true));
        assert_eq!(xor_fold(&[true, false, true]), Ok(false));
        assert_eq!(xor_fold(&[]), Err(ProtocolError::EmptyFold));
    }

    #[test]
    fn shares_layout() {
        assert_eq!(shares_from(true, &[]), vec![true]);
        for (f1, f2) in [(false, false), (false, true), (true, false), (true, true)] {
            assert_eq!(shares_from(true, &[f1, f2]), vec![true ^ f1 ^ f2, f1, f2]);
        }
    }

    #[test]
    fn shares_always_reconstruct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for n in 1..=8 {
            for secret in [false, true] {
                for _ in 0..32 {
                    assert_eq!(xor_fold(&gen_shares(n, secret, &mut rng)), Ok(secret));
                }
            }
        }
    }

    #[test]
    fn circuit_text_round_trip() {
        let c2 = census_of(&["p1", "p2"]).unwrap();
        let text = "(xor (and (in p1) (lit 1)) (in p2))";
        let c = Circuit::parse(text, &c2).unwrap();
        assert_eq!(c.to_string(), text);
        assert_eq!(c.depth(), 3);
        assert!(Circuit::parse("(in p9)", &c2).is_err());
        assert!(Circuit::parse("(nand (lit 1) (lit 0))", &c2).is_err());
        assert!(Circuit::parse("(lit 1) (lit 0)", &c2).is_err());
        assert!(Circuit::parse("(and (lit 1)", &c2).is_err());
    }

    // Leaves, then two gate kinds over every ordered pair of smaller circuits.
    #[test]
    fn enumeration_sizes() {
        for (n, sizes) in [(2usize, [4usize, 36, 2596]), (3, [5, 55, 6055])] {
            let c = Gmw::parties(n);
            for (d, expect) in (1..=3).zip(sizes) {
                let all = circuits_up_to_depth(&c, d);
                assert_eq!(all.len(), expect);
                assert!(all.iter().all(|x| x.depth() <= d));
            }
        }
    }

    #[test]
    fn eval_examples() {
        let c = Gmw::parties(2);
        let none = BTreeMap::new();
        assert_eq!(eval_circuit(&Circuit::Lit(true), &none), Ok(true));
        assert_eq!(
            eval_circuit(&Circuit::and(Circuit::Lit(true), Circuit::Lit(false)), &none),
            Ok(false)
        );
        let input = Circuit::Input(c.member("p2").unwrap());
        assert_eq!(
            eval_circuit(&input, &none),
            Err(ProtocolError::InputExhausted { party: "p2".into() })
        );
        let twice = Circuit::xor(input.clone(), input);
        let inputs = parse_inputs("p2=10").unwrap();
        assert_eq!(eval_circuit(&twice, &inputs), Ok(true));
    }

    #[test]
    fn input_parsing() {
        let m = parse_inputs("p1=1,p2=0,p1=0").unwrap();
        assert_eq!(m["p1"], vec![true, false]);
        assert_eq!(m["p2"], vec![false]);
        assert!(parse_inputs("p1").is_err());
        assert!(parse_inputs("p1=2").is_err());
    }

    fn and_gate_outputs(n: usize, masking: Masking, u: &[bool], v: &[bool], seed: u64) -> bool {
        let census = Gmw::parties(n);
        let (u, v) = (u.to_vec(), v.to_vec());
        let c = FnChoreography::new(census, move |op| {
            let all = op.everyone();
            let uf = op.parallel(&all, |q, _| Ok(u[q.index()]))?;
            let vf = op.parallel(&all, |q, _| Ok(v[q.index()]))?;
            let out = f_and_with(op, &uf, &vf, masking)?;
            reveal(op, &out)
        });
        let report = run_centralized(&c, seed);
        report.result("p1").unwrap().as_bool().unwrap()
    }

    fn bits(x: u32, n: usize) -> Vec<bool> {
        (0..n).map(|i| x >> i & 1 == 1).collect()
    }

    #[test]
    fn and_gate_is_exhaustively_correct() {
        for n in 1..=3 {
            for x in 0..1u32 << (2 * n) {
                let (u, v) = (bits(x, n), bits(x >> n, n));
                let want = xor_fold(&u).unwrap() & xor_fold(&v).unwrap();
                assert_eq!(and_gate_outputs(n, Masking::Corrected, &u, &v, x as u64), want);
            }
        }
    }

    // The pair as transcribed from the original listing adds one extra xor of
    // every u_i per receiver, which cancels only for odd party counts.
    #[test]
    fn literal_masking_fails_for_even_party_counts() {
        let mut wrong = 0;
        for x in 0..16u32 {
            let (u, v) = (bits(x, 2), bits(x >> 2, 2));
            let want = xor_fold(&u).unwrap() & xor_fold(&v).unwrap();
            if and_gate_outputs(2, Masking::Literal, &u, &v, 0) != want {
                wrong += 1;
            }
        }
        assert!(wrong > 0);
        for x in 0..64u32 {
            let (u, v) = (bits(x, 3), bits(x >> 3, 3));
            let want = xor_fold(&u).unwrap() & xor_fold(&v).unwrap();
            assert_eq!(and_gate_outputs(3, Masking::Literal, &u, &v, 0), want);
        }
    }
}
