//! Canonical, self-describing byte encoding for communicable values.
//!
//! Layout, one tag byte per node:
//!
//! | tag | kind     | body                                            |
//! |-----|----------|-------------------------------------------------|
//! | 0   | unit     | nothing                                         |
//! | 1   | bool     | 1 byte, 0 or 1                                  |
//! | 2   | int      | 8 bytes big-endian two's complement             |
//! | 3   | text     | 4-byte BE length, UTF-8 bytes                   |
//! | 4   | pair     | two encodings                                   |
//! | 5   | union    | 1-byte variant index, one encoding              |
//! | 6   | sequence | 4-byte BE count, encodings                      |
//! | 7   | map      | 4-byte BE count, key/value encodings sorted by key bytes |
//!
//! Encoding is deterministic: equal values give equal bytes. Decoding is strict
//! and rejects anything [`encode`] would not produce.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

const TAG_UNIT: u8 = 0;
const TAG_BOOL: u8 = 1;
const TAG_INT: u8 = 2;
const TAG_TEXT: u8 = 3;
const TAG_PAIR: u8 = 4;
const TAG_UNION: u8 = 5;
const TAG_SEQ: u8 = 6;
const TAG_MAP: u8 = 7;

const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unknown tag {tag} at byte {at}")]
    UnknownTag { tag: u8, at: usize },
    #[error("invalid bool byte {0}")]
    InvalidBool(u8),
    #[error("text is not valid UTF-8")]
    InvalidUtf8,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("map keys are not in canonical order")]
    UnsortedMap,
    #[error("nesting deeper than {MAX_DEPTH}")]
    TooDeep,
    #[error("length {0} exceeds the remaining input")]
    BadLength(usize),
    #[error("expected {expected}, found {found}")]
    Shape {
        expected: &'static str,
        found: String,
    },
    #[error("frame length {0} exceeds the 64 MiB limit")]
    FrameTooLarge(u64),
}

/// A value in the portable grammar.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Text(String),
    Pair(Box<Value>, Box<Value>),
    Union(u8, Box<Value>),
    Seq(Vec<Value>),
    Map(BTreeMap<Value, Value>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn union(variant: u8, v: Value) -> Value {
        Value::Union(variant, Box::new(v))
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Text(_) => "text",
            Value::Pair(..) => "pair",
            Value::Union(..) => "union",
            Value::Seq(_) => "sequence",
            Value::Map(_) => "map",
        }
    }

    fn shape_err(&self, expected: &'static str) -> DecodeError {
        DecodeError::Shape {
            expected,
            found: self.kind().to_owned(),
        }
    }

    pub fn as_bool(&self) -> Result<bool, DecodeError> {
        match self {
            Value::Bool(b) => Ok(*b),
            v => Err(v.shape_err("bool")),
        }
    }

    pub fn as_int(&self) -> Result<i64, DecodeError> {
        match self {
            Value::Int(i) => Ok(*i),
            v => Err(v.shape_err("int")),
        }
    }

    pub fn as_text(&self) -> Result<&str, DecodeError> {
        match self {
            Value::Text(s) => Ok(s),
            v => Err(v.shape_err("text")),
        }
    }

    pub fn as_pair(&self) -> Result<(&Value, &Value), DecodeError> {
        match self {
            Value::Pair(a, b) => Ok((a, b)),
            v => Err(v.shape_err("pair")),
        }
    }

    pub fn as_union(&self) -> Result<(u8, &Value), DecodeError> {
        match self {
            Value::Union(i, v) => Ok((*i, v)),
            v => Err(v.shape_err("union")),
        }
    }

    pub fn as_seq(&self) -> Result<&[Value], DecodeError> {
        match self {
            Value::Seq(s) => Ok(s),
            v => Err(v.shape_err("sequence")),
        }
    }

    pub fn as_map(&self) -> Result<&BTreeMap<Value, Value>, DecodeError> {
        match self {
            Value::Map(m) => Ok(m),
            v => Err(v.shape_err("map")),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Union(i, v) => write!(f, "#{i}:{v}"),
            Value::Seq(s) => {
                f.write_str("[")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Map(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

pub fn encode(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(v, &mut out);
    out
}

pub fn encode_into(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Unit => out.push(TAG_UNIT),
        Value::Bool(b) => {
            out.push(TAG_BOOL);
            out.push(*b as u8);
        }
        Value::Int(i) => {
            out.push(TAG_INT);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Value::Text(s) => {
            out.push(TAG_TEXT);
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        Value::Pair(a, b) => {
            out.push(TAG_PAIR);
            encode_into(a, out);
            encode_into(b, out);
        }
        Value::Union(i, v) => {
            out.push(TAG_UNION);
            out.push(*i);
            encode_into(v, out);
        }
        Value::Seq(items) => {
            out.push(TAG_SEQ);
            out.extend_from_slice(&(items.len() as u32).to_be_bytes());
            for item in items {
                encode_into(item, out);
            }
        }
        Value::Map(m) => {
            out.push(TAG_MAP);
            out.extend_from_slice(&(m.len() as u32).to_be_bytes());
            let mut entries: Vec<(Vec<u8>, &Value)> =
                m.iter().map(|(k, v)| (encode(k), v)).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (k, v) in entries {
                out.extend_from_slice(&k);
                encode_into(v, out);
            }
        }
    }
}

/// Decodes exactly one value; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<Value, DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    let v = r.value(0)?;
    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(v)
}

/// Decodes one value from the front of `bytes`, returning it and the number of
/// bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Value, usize), DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    let v = r.value(0)?;
    Ok((v, r.pos))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        if self.bytes.len() - self.pos < n {
            return Err(DecodeError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    /// Every element takes at least one byte, so a count larger than what is
    /// left cannot be honest; reject it before allocating.
    fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()?;
        if n > self.bytes.len() - self.pos {
            return Err(DecodeError::BadLength(n));
        }
        Ok(n)
    }

    fn value(&mut self, depth: usize) -> Result<Value, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let at = self.pos;
        let tag = self.byte()?;
        Ok(match tag {
            TAG_UNIT => Value::Unit,
            TAG_BOOL => match self.byte()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                b => return Err(DecodeError::InvalidBool(b)),
            },
            TAG_INT => {
                let b = self.take(8)?;
                Value::Int(i64::from_be_bytes(b.try_into().expect("8 bytes")))
            }
            TAG_TEXT => {
                let n = self.count()?;
                let b = self.take(n)?;
                Value::Text(
                    std::str::from_utf8(b)
                        .map_err(|_| DecodeError::InvalidUtf8)?
                        .to_owned(),
                )
            }
            TAG_PAIR => {
                let a = self.value(depth + 1)?;
                let b = self.value(depth + 1)?;
                Value::pair(a, b)
            }
            TAG_UNION => {
                let i = self.byte()?;
                Value::union(i, self.value(depth + 1)?)
            }
            TAG_SEQ => {
                let n = self.count()?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.value(depth + 1)?);
                }
                Value::Seq(items)
            }
            TAG_MAP => {
                let n = self.count()?;
                let mut m = BTreeMap::new();
                let mut prev: Option<&[u8]> = None;
                for _ in 0..n {
                    let start = self.pos;
                    let k = self.value(depth + 1)?;
                    let key_bytes = &self.bytes[start..self.pos];
                    if let Some(p) = prev {
                        if p >= key_bytes {
                            return Err(DecodeError::UnsortedMap);
                        }
                    }
                    prev = Some(key_bytes);
                    let v = self.value(depth + 1)?;
                    m.insert(k, v);
                }
                Value::Map(m)
            }
            tag => return Err(DecodeError::UnknownTag { tag, at }),
        })
    }
}

/// Types that can cross the network.
pub trait Portable: Sized {
    fn to_value(&self) -> Value;
    fn from_value(v: &Value) -> Result<Self, DecodeError>;

    fn to_bytes(&self) -> Vec<u8> {
        encode(&self.to_value())
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        Self::from_value(&decode(bytes)?)
    }
}

impl Portable for Value {
    fn to_value(&self) -> Value {
        self.clone()
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        Ok(v.clone())
    }
}

impl Portable for () {
    fn to_value(&self) -> Value {
        Value::Unit
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        match v {
            Value::Unit => Ok(()),
            v => Err(v.shape_err("unit")),
        }
    }
}

impl Portable for bool {
    fn to_value(&self) -> Value {
        Value::Bool(*self)
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        v.as_bool()
    }
}

impl Portable for i64 {
    fn to_value(&self) -> Value {
        Value::Int(*self)
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        v.as_int()
    }
}

impl Portable for u64 {
    fn to_value(&self) -> Value {
        Value::Int(*self as i64)
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let i = v.as_int()?;
        u64::try_from(i).map_err(|_| DecodeError::Shape {
            expected: "non-negative int",
            found: i.to_string(),
        })
    }
}

impl Portable for usize {
    fn to_value(&self) -> Value {
        Value::Int(*self as i64)
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let i = v.as_int()?;
        usize::try_from(i).map_err(|_| DecodeError::Shape {
            expected: "non-negative int",
            found: i.to_string(),
        })
    }
}

impl Portable for String {
    fn to_value(&self) -> Value {
        Value::Text(self.clone())
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        v.as_text().map(str::to_owned)
    }
}

impl<A: Portable, B: Portable> Portable for (A, B) {
    fn to_value(&self) -> Value {
        Value::pair(self.0.to_value(), self.1.to_value())
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let (a, b) = v.as_pair()?;
        Ok((A::from_value(a)?, B::from_value(b)?))
    }
}

impl<T: Portable> Portable for Option<T> {
    fn to_value(&self) -> Value {
        match self {
            None => Value::union(0, Value::Unit),
            Some(v) => Value::union(1, v.to_value()),
        }
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        match v.as_union()? {
            (0, Value::Unit) => Ok(None),
            (1, v) => Ok(Some(T::from_value(v)?)),
            (i, _) => Err(DecodeError::Shape {
                expected: "option variant 0 or 1",
                found: i.to_string(),
            }),
        }
    }
}

impl<T: Portable> Portable for Vec<T> {
    fn to_value(&self) -> Value {
        Value::Seq(self.iter().map(Portable::to_value).collect())
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        v.as_seq()?.iter().map(T::from_value).collect()
    }
}

impl<K: Portable + Ord, V: Portable> Portable for BTreeMap<K, V> {
    fn to_value(&self) -> Value {
        Value::Map(
            self.iter()
                .map(|(k, v)| (k.to_value(), v.to_value()))
                .collect(),
        )
    }
    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        v.as_map()?
            .iter()
            .map(|(k, v)| Ok((K::from_value(k)?, V::from_value(v)?)))
            .collect()
    }
}
