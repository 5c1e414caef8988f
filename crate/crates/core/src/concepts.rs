//! Concept taxonomy with role domain/range checks.
//!
//! File format, one form per line, `#` starts a comment:
//!
//! ```text
//! concept Harddisk : StorageDevice
//! role has-part domain Computer range HardwareComponent
//! ```
//!
//! `Top` is always defined; a concept declared without a parent hangs
//! directly below it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;

pub const TOP: &str = "Top";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDef {
    pub name: String,
    pub domain: String,
    pub range: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptTaxonomy {
    /// concept -> (parent, defining line); Top has no parent.
    parents: BTreeMap<String, (Option<String>, usize)>,
    roles: BTreeMap<String, RoleDef>,
}

impl Default for ConceptTaxonomy {
    fn default() -> Self {
        let mut parents = BTreeMap::new();
        parents.insert(TOP.to_string(), (None, 0));
        ConceptTaxonomy {
            parents,
            roles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate concept {name}")]
    DuplicateConcept { line: usize, name: String },
    #[error("line {line}: duplicate role {name}")]
    DuplicateRole { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConceptError {
    #[error("undefined concept {0}")]
    UndefinedConcept(String),
    #[error("undefined role {0}")]
    UndefinedRole(String),
}

pub fn load_kb(source: &str) -> Result<ConceptTaxonomy, KbError> {
    let mut kb = ConceptTaxonomy::default();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["concept", name] => kb.add_concept(line, name, None)?,
            ["concept", name, ":", parent] => kb.add_concept(line, name, Some(parent))?,
            ["role", name, "domain", domain, "range", range] => {
                if kb.roles.contains_key(*name) {
                    return Err(KbError::DuplicateRole {
                        line,
                        name: name.to_string(),
                    });
                }
                kb.roles.insert(
                    name.to_string(),
                    RoleDef {
                        name: name.to_string(),
                        domain: domain.to_string(),
                        range: range.to_string(),
                        line,
                    },
                );
            }
            _ => {
                return Err(KbError::Syntax {
                    line,
                    msg: format!("cannot parse `{text}`"),
                })
            }
        }
    }
    Ok(kb)
}

impl ConceptTaxonomy {
    fn add_concept(&mut self, line: usize, name: &str, parent: Option<&str>) -> Result<(), KbError> {
        if self.parents.contains_key(name) {
            return Err(KbError::DuplicateConcept {
                line,
                name: name.to_string(),
            });
        }
        let parent = parent.unwrap_or(TOP).to_string();
        self.parents.insert(name.to_string(), (Some(parent), line));
        Ok(())
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.parents.contains_key(concept)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &String> {
        self.parents.keys()
    }

    pub fn role(&self, name: &str) -> Option<&RoleDef> {
        self.roles.get(name)
    }

    pub fn roles(&self) -> impl Iterator<Item = &RoleDef> {
        self.roles.values()
    }

    pub fn parent(&self, concept: &str) -> Option<&str> {
        self.parents.get(concept).and_then(|(p, _)| p.as_deref())
    }

    /// Reflexive-transitive parent reachability.
    pub fn is_a(&self, sub: &str, sup: &str) -> Result<bool, ConceptError> {
        for c in [sub, sup] {
            if !self.contains(c) {
                return Err(ConceptError::UndefinedConcept(c.to_string()));
            }
        }
        let mut cur = Some(sub);
        let mut steps = 0;
        while let Some(c) = cur {
            if c == sup {
                return Ok(true);
            }
            steps += 1;
            if steps > self.parents.len() {
                // cyclic taxonomy; validate_kb reports it
                return Ok(false);
            }
            cur = self.parent(c);
        }
        Ok(false)
    }

    pub fn role_permits(&self, head: &str, role: &str, filler: &str) -> Result<bool, ConceptError> {
        let def = self
            .roles
            .get(role)
            .ok_or_else(|| ConceptError::UndefinedRole(role.to_string()))?;
        Ok(self.is_a(head, &def.domain)? && self.is_a(filler, &def.range)?)
    }
}

pub fn is_a(kb: &ConceptTaxonomy, sub: &str, sup: &str) -> Result<bool, ConceptError> {
    kb.is_a(sub, sup)
}

pub fn role_permits(kb: &ConceptTaxonomy, head: &str, role: &str, filler: &str) -> Result<bool, ConceptError> {
    kb.role_permits(head, role, filler)
}

/// Unresolved parents, cycles and roles whose domain or range is undefined.
pub fn validate_kb(kb: &ConceptTaxonomy) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (name, (parent, line)) in &kb.parents {
        if let Some(p) = parent {
            if !kb.contains(p) {
                out.push(Diagnostic::new(*line, format!("concept {name}: unresolved parent {p}")));
                continue;
            }
        }
        let mut seen = vec![name.as_str()];
        let mut cur = kb.parent(name);
        while let Some(c) = cur {
            if c == name {
                out.push(Diagnostic::new(*line, format!("concept {name}: taxonomy cycle")));
                break;
            }
            if seen.contains(&c) {
                break;
            }
            seen.push(c);
            cur = kb.parent(c);
        }
    }
    for role in kb.roles.values() {
        for (what, c) in [("domain", &role.domain), ("range", &role.range)] {
            if !kb.contains(c) {
                out.push(Diagnostic::new(
                    role.line,
                    format!("role {}: unresolved {what} {c}", role.name),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const KB: &str = "
# small taxonomy
concept Hardware
concept StorageDevice : Hardware
concept Harddisk : StorageDevice
concept Computer : Hardware
concept Action
concept DevelopAction : Action
role has-part domain Computer range Hardware
role anything domain Action range Top
";

    #[test]
    fn is_a_basics() {
        let kb = load_kb(KB).unwrap();
        assert!(kb.is_a("Harddisk", "Harddisk").unwrap());
        assert!(kb.is_a("Harddisk", "StorageDevice").unwrap());
        assert!(kb.is_a("Harddisk", TOP).unwrap());
        assert!(!kb.is_a("StorageDevice", "Harddisk").unwrap());
        assert_eq!(kb.is_a("Nope", TOP), Err(ConceptError::UndefinedConcept("Nope".into())));
    }

    #[test]
    fn role_checks() {
        let kb = load_kb(KB).unwrap();
        assert!(kb.role_permits("Computer", "has-part", "Harddisk").unwrap());
        assert!(!kb.role_permits("DevelopAction", "has-part", "Harddisk").unwrap());
        assert!(kb.role_permits("DevelopAction", "anything", "Computer").unwrap());
        assert!(kb.role_permits("X", "nope", "Y").is_err());
    }

    #[test]
    fn validation_diagnostics() {
        let kb = load_kb("concept A : B\nrole r domain A range Missing\n").unwrap();
        let d = validate_kb(&kb);
        assert_eq!(d.len(), 2);
        assert!(d[0].message.contains("unresolved parent B"));
        assert!(d[1].message.contains("unresolved range Missing"));

        let cyc = load_kb("concept A : B\nconcept B : A\n").unwrap();
        assert!(validate_kb(&cyc).iter().any(|d| d.message.contains("cycle")));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_kb("concept"), Err(KbError::Syntax { line: 1, .. })));
        assert!(matches!(
            load_kb("concept A\nconcept A"),
            Err(KbError::DuplicateConcept { line: 2, .. })
        ));
        assert!(load_kb("").unwrap().contains(TOP));
    }
}
