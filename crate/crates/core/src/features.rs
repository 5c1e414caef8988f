//! Feature structures with atomic-value disjunction and unification.
//!
//! A value is either a non-empty set of atoms (read as a disjunction) or a
//! nested structure. Unification intersects atom sets and recurses into
//! nested structures; an empty intersection is a failure, never a value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Atoms(BTreeSet<String>),
    Nested(FeatureStructure),
}

impl Value {
    pub fn atoms<I, S>(items: I) -> Value
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Value::Atoms(items.into_iter().map(Into::into).collect())
    }

    fn unify(&self, other: &Value) -> Option<Value> {
        match (self, other) {
            (Value::Atoms(a), Value::Atoms(b)) => {
                let meet: BTreeSet<String> = a.intersection(b).cloned().collect();
                if meet.is_empty() {
                    None
                } else {
                    Some(Value::Atoms(meet))
                }
            }
            (Value::Nested(a), Value::Nested(b)) => a.unify(b).map(Value::Nested),
            _ => None,
        }
    }

    fn override_with(&self, child: &Value) -> Value {
        match (self, child) {
            (Value::Nested(p), Value::Nested(c)) => Value::Nested(p.override_with(c)),
            _ => child.clone(),
        }
    }
}

/// Finite attribute-value mapping. Attribute order is lexicographic, which
/// makes rendering canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureStructure {
    attrs: BTreeMap<String, Value>,
}

impl FeatureStructure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn get(&self, attr: &str) -> Option<&Value> {
        self.attrs.get(attr)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.attrs.iter()
    }

    /// Inserts a value. Empty atom sets are rejected since they would encode
    /// failure as data.
    pub fn insert(&mut self, attr: impl Into<String>, value: Value) -> Result<(), FsError> {
        let attr = attr.into();
        if let Value::Atoms(set) = &value {
            if set.is_empty() {
                return Err(FsError::EmptyAtomSet(attr));
            }
        }
        self.attrs.insert(attr, value);
        Ok(())
    }

    /// Sets the value at a dotted path, creating intermediate structures.
    pub fn set_path(&mut self, path: &[&str], value: Value) -> Result<(), FsError> {
        match path {
            [] => Err(FsError::EmptyPath),
            [last] => self.insert(*last, value),
            [first, rest @ ..] => {
                let slot = self
                    .attrs
                    .entry((*first).to_string())
                    .or_insert_with(|| Value::Nested(FeatureStructure::new()));
                match slot {
                    Value::Nested(inner) => inner.set_path(rest, value),
                    Value::Atoms(_) => Err(FsError::PathThroughAtom((*first).to_string())),
                }
            }
        }
    }

    pub fn unify(&self, other: &FeatureStructure) -> Option<FeatureStructure> {
        let mut out = self.attrs.clone();
        for (k, v) in &other.attrs {
            match out.get(k) {
                Some(mine) => {
                    let merged = mine.unify(v)?;
                    out.insert(k.clone(), merged);
                }
                None => {
                    out.insert(k.clone(), v.clone());
                }
            }
        }
        Some(FeatureStructure { attrs: out })
    }

    pub fn subsumes(&self, specific: &FeatureStructure) -> bool {
        matches!(self.unify(specific), Some(u) if &u == specific)
    }

    /// Default-inheritance merge: attributes of `child` win on conflict,
    /// nested structures are merged recursively.
    pub fn override_with(&self, child: &FeatureStructure) -> FeatureStructure {
        let mut out = self.attrs.clone();
        for (k, v) in &child.attrs {
            let merged = match out.get(k) {
                Some(p) => p.override_with(v),
                None => v.clone(),
            };
            out.insert(k.clone(), merged);
        }
        FeatureStructure { attrs: out }
    }

    /// Restriction to the named top-level attributes.
    pub fn project(&self, attrs: &[String]) -> FeatureStructure {
        FeatureStructure {
            attrs: self
                .attrs
                .iter()
                .filter(|(k, _)| attrs.iter().any(|a| a == *k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

pub fn unify(a: &FeatureStructure, b: &FeatureStructure) -> Option<FeatureStructure> {
    a.unify(b)
}

pub fn subsumes(general: &FeatureStructure, specific: &FeatureStructure) -> bool {
    general.subsumes(specific)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("empty atom set for attribute {0}")]
    EmptyAtomSet(String),
    #[error("empty attribute path")]
    EmptyPath,
    #[error("path passes through atomic attribute {0}")]
    PathThroughAtom(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Atoms(set) => {
                let parts: Vec<&str> = set.iter().map(String::as_str).collect();
                f.write_str(&parts.join("|"))
            }
            Value::Nested(fs) => write!(f, "{fs}"),
        }
    }
}

impl fmt::Display for FeatureStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}

pub fn render_fs(fs: &FeatureStructure) -> String {
    fs.to_string()
}

pub fn parse_fs(text: &str) -> Result<FeatureStructure, FsError> {
    let mut p = FsParser::new(text);
    p.skip_ws();
    let fs = p.structure()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(fs)
}

pub(crate) fn is_atom_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '+' | '.' | '\'')
}

struct FsParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> FsParser<'a> {
    fn new(src: &'a str) -> Self {
        FsParser { src, pos: 0 }
    }

    fn err(&self, msg: &str) -> FsError {
        FsError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), FsError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            Ok(())
        } else {
            Err(self.err(&format!("expected '{want}'")))
        }
    }

    fn ident(&mut self) -> Result<String, FsError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_atom_char(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(self.err("expected identifier"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn structure(&mut self) -> Result<FeatureStructure, FsError> {
        self.expect('{')?;
        let mut fs = FeatureStructure::new();
        self.skip_ws();
        if self.peek() == Some('}') {
            self.pos += 1;
            return Ok(fs);
        }
        loop {
            let attr_pos = self.pos;
            let attr = self.ident()?;
            self.expect(':')?;
            let value = self.value()?;
            if fs.attrs.contains_key(&attr) {
                return Err(FsError::Syntax {
                    pos: attr_pos,
                    msg: format!("duplicate attribute {attr}"),
                });
            }
            fs.attrs.insert(attr, value);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some('}') => {
                    self.pos += 1;
                    return Ok(fs);
                }
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
    }

    fn value(&mut self) -> Result<Value, FsError> {
        self.skip_ws();
        if self.peek() == Some('{') {
            return Ok(Value::Nested(self.structure()?));
        }
        let mut set = BTreeSet::new();
        set.insert(self.ident()?);
        loop {
            self.skip_ws();
            if self.peek() == Some('|') {
                self.pos += 1;
                set.insert(self.ident()?);
            } else {
                return Ok(Value::Atoms(set));
            }
        }
    }
}
