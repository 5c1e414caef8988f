//! Inheritance-organized lexicon: word classes, valencies and lexemes.
//!
//! The file grammar is documented in `docs/lexicon-format.md`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::ConceptTaxonomy;
use crate::diag::Diagnostic;
use crate::features::{is_atom_char, FeatureStructure, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Necessity {
    Mandatory,
    Optional,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValencyDef {
    pub name: String,
    pub modifier_class: String,
    pub morph: FeatureStructure,
    pub direction: Direction,
    pub necessity: Necessity,
    pub role: Option<String>,
    /// Attributes whose values head and modifier share (left valencies only).
    pub agree: Vec<String>,
    pub line: usize,
}

impl ValencyDef {
    pub fn is_mandatory(&self) -> bool {
        self.necessity == Necessity::Mandatory
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordClassDef {
    pub name: String,
    pub parent: Option<String>,
    pub default_features: FeatureStructure,
    pub valencies: Vec<ValencyDef>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexemeEntry {
    pub surface: String,
    pub word_class: String,
    pub feature_overrides: FeatureStructure,
    pub concept: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub word_classes: BTreeMap<String, WordClassDef>,
    pub lexemes: BTreeMap<String, Vec<LexemeEntry>>,
}

/// A lexeme with inheritance flattened.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedEntry {
    pub surface: String,
    pub word_class: String,
    pub features: FeatureStructure,
    pub valencies: Vec<ValencyDef>,
    pub concept: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate word class {name}")]
    DuplicateClass { line: usize, name: String },
    #[error("line {line}: duplicate valency {name} in {class}")]
    DuplicateValency { line: usize, class: String, name: String },
    #[error("line {line}: unresolved parent {parent}")]
    UnresolvedParent { line: usize, parent: String },
    #[error("undefined word class {0}")]
    UndefinedClass(String),
}

impl Lexicon {
    pub fn lexeme_count(&self) -> usize {
        self.lexemes.values().map(Vec::len).sum()
    }

    /// Ancestor chain starting at `class` (child first). Stops at cycles.
    fn chain(&self, class: &str) -> Vec<&WordClassDef> {
        let mut out: Vec<&WordClassDef> = Vec::new();
        let mut cur = self.word_classes.get(class);
        while let Some(def) = cur {
            if out.iter().any(|d| d.name == def.name) {
                break;
            }
            out.push(def);
            cur = def.parent.as_ref().and_then(|p| self.word_classes.get(p));
        }
        out
    }

    pub fn subclass_of(&self, sub: &str, sup: &str) -> Result<bool, LexiconError> {
        for c in [sub, sup] {
            if !self.word_classes.contains_key(c) {
                return Err(LexiconError::UndefinedClass(c.to_string()));
            }
        }
        Ok(self.chain(sub).iter().any(|d| d.name == sup))
    }

    /// Inherited features and valencies of a word class (root first,
    /// redefinitions replace the inherited valency in place).
    pub fn resolve_class(&self, class: &str) -> Option<(FeatureStructure, Vec<ValencyDef>)> {
        if !self.word_classes.contains_key(class) {
            return None;
        }
        let mut features = FeatureStructure::new();
        let mut valencies: Vec<ValencyDef> = Vec::new();
        for def in self.chain(class).into_iter().rev() {
            features = features.override_with(&def.default_features);
            for v in &def.valencies {
                match valencies.iter_mut().find(|x| x.name == v.name) {
                    Some(slot) => *slot = v.clone(),
                    None => valencies.push(v.clone()),
                }
            }
        }
        Some((features, valencies))
    }

    pub fn resolve_entry(&self, surface: &str) -> Vec<ResolvedEntry> {
        let Some(entries) = self.lexemes.get(surface) else {
            return Vec::new();
        };
        entries
            .iter()
            .filter_map(|e| {
                let (features, valencies) = self.resolve_class(&e.word_class)?;
                Some(ResolvedEntry {
                    surface: e.surface.clone(),
                    word_class: e.word_class.clone(),
                    features: features.override_with(&e.feature_overrides),
                    valencies,
                    concept: e.concept.clone(),
                })
            })
            .collect()
    }
}

pub fn resolve_entry(lex: &Lexicon, surface: &str) -> Vec<ResolvedEntry> {
    lex.resolve_entry(surface)
}

pub fn subclass_of(lex: &Lexicon, sub: &str, sup: &str) -> Result<bool, LexiconError> {
    lex.subclass_of(sub, sup)
}

pub fn validate_lexicon(lex: &Lexicon, kb: &ConceptTaxonomy) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut cycles_seen: BTreeSet<BTreeSet<String>> = BTreeSet::new();

    for def in lex.word_classes.values() {
        if let Some(p) = &def.parent {
            if !lex.word_classes.contains_key(p) {
                out.push(Diagnostic::new(
                    def.line,
                    format!("word class {}: unresolved parent {p}", def.name),
                ));
            }
        }
        // walk parents looking for a return to a visited class
        let mut path: Vec<&str> = vec![def.name.as_str()];
        let mut cur = def.parent.as_deref();
        while let Some(c) = cur {
            if let Some(pos) = path.iter().position(|x| *x == c) {
                let members: BTreeSet<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                if cycles_seen.insert(members.clone()) {
                    let names: Vec<String> = members.into_iter().collect();
                    out.push(Diagnostic::new(
                        def.line,
                        format!("inheritance cycle among {}", names.join(", ")),
                    ));
                }
                break;
            }
            path.push(c);
            cur = lex.word_classes.get(c).and_then(|d| d.parent.as_deref());
        }
        for v in &def.valencies {
            if !lex.word_classes.contains_key(&v.modifier_class) {
                out.push(Diagnostic::new(
                    v.line,
                    format!("valency {}: unresolved word class {}", v.name, v.modifier_class),
                ));
            }
            if let Some(r) = &v.role {
                if kb.role(r).is_none() {
                    out.push(Diagnostic::new(
                        v.line,
                        format!("valency {}: unresolved role {r}", v.name),
                    ));
                }
            }
            if !v.agree.is_empty() && v.direction != Direction::Left {
                out.push(Diagnostic::new(
                    v.line,
                    format!("valency {}: agree is only allowed on left valencies", v.name),
                ));
            }
        }
    }

    for entries in lex.lexemes.values() {
        for e in entries {
            match lex.resolve_class(&e.word_class) {
                None => out.push(Diagnostic::new(
                    e.line,
                    format!("lexeme \"{}\": unresolved word class {}", e.surface, e.word_class),
                )),
                Some((inherited, _)) => {
                    if inherited.unify(&e.feature_overrides).is_none() {
                        out.push(Diagnostic::new(
                            e.line,
                            format!(
                                "lexeme \"{}\": features {} do not unify with inherited {}",
                                e.surface, e.feature_overrides, inherited
                            ),
                        ));
                    }
                }
            }
            if let Some(c) = &e.concept {
                if !kb.contains(c) {
                    out.push(Diagnostic::new(
                        e.line,
                        format!("lexeme \"{}\": unresolved concept {c}", e.surface),
                    ));
                }
            }
        }
    }
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, LexiconError> {
    let mut out = Vec::new();
    for (li, raw) in src.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if matches!(c, '{' | '}' | ':' | '|' | ',') {
                out.push(Spanned {
                    tok: Tok::Punct(c),
                    line,
                    col,
                });
                i += 1;
            } else if c == '"' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(LexiconError::Syntax {
                        line,
                        col,
                        msg: "unterminated string".into(),
                    });
                }
                out.push(Spanned {
                    tok: Tok::Str(chars[start..j].iter().collect()),
                    line,
                    col,
                });
                i = j + 1;
            } else if is_atom_char(c) {
                let start = i;
                while i < chars.len() && is_atom_char(chars[i]) {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line,
                    col,
                });
            } else {
                return Err(LexiconError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character '{c}'"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    last_line: usize,
}

impl Parser {
    fn err_at(&self, msg: impl Into<String>) -> LexiconError {
        let (line, col) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => (self.last_line, 1),
        };
        LexiconError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.line).unwrap_or(self.last_line)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn punct(&mut self, c: char) -> Result<(), LexiconError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_at(format!("expected '{c}'")))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, LexiconError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err_at("expected identifier")),
        }
    }

    fn string(&mut self) -> Result<String, LexiconError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err_at("expected quoted surface")),
        }
    }

    /// `{ path: value ... }` where a path is dotted and a value is an atom
    /// disjunction or a nested block. Commas between entries are optional.
    fn feature_block(&mut self) -> Result<FeatureStructure, LexiconError> {
        self.punct('{')?;
        let mut fs = FeatureStructure::new();
        let mut seen = BTreeSet::new();
        loop {
            if self.eat_punct('}') {
                return Ok(fs);
            }
            let path_pos = self.pos;
            let path = self.ident()?;
            if !seen.insert(path.clone()) {
                self.pos = path_pos;
                return Err(self.err_at(format!("duplicate feature path {path}")));
            }
            self.punct(':')?;
            let value = if self.peek() == Some(&Tok::Punct('{')) {
                Value::Nested(self.feature_block()?)
            } else {
                let mut atoms = vec![self.ident()?];
                while self.eat_punct('|') {
                    atoms.push(self.ident()?);
                }
                Value::atoms(atoms)
            };
            let parts: Vec<&str> = path.split('.').collect();
            if parts.iter().any(|p| p.is_empty()) {
                self.pos = path_pos;
                return Err(self.err_at(format!("malformed path {path}")));
            }
            if let Err(e) = fs.set_path(&parts, value) {
                self.pos = path_pos;
                return Err(self.err_at(e.to_string()));
            }
            self.eat_punct(',');
        }
    }

    fn valency(&mut self, class: &str) -> Result<ValencyDef, LexiconError> {
        let line = self.line();
        let name = self.ident()?;
        self.punct('{')?;
        let mut modifier_class = None;
        let mut direction = None;
        let mut necessity = None;
        let mut morph = None;
        let mut role: Option<Option<String>> = None;
        let mut agree = None;
        loop {
            if self.eat_punct('}') {
                break;
            }
            let key_pos = self.pos;
            let key = self.ident()?;
            let dup = |p: &mut Parser| {
                p.pos = key_pos;
                Err(p.err_at(format!("duplicate key {key} in valency {name}")))
            };
            match key.as_str() {
                "class" => {
                    if modifier_class.is_some() {
                        return dup(self);
                    }
                    self.punct(':')?;
                    modifier_class = Some(self.ident()?);
                }
                "dir" => {
                    if direction.is_some() {
                        return dup(self);
                    }
                    self.punct(':')?;
                    direction = Some(match self.ident()?.as_str() {
                        "left" => Direction::Left,
                        "right" => Direction::Right,
                        _ => {
                            self.pos -= 1;
                            return Err(self.err_at("dir must be left or right"));
                        }
                    });
                }
                "necessity" => {
                    if necessity.is_some() {
                        return dup(self);
                    }
                    self.punct(':')?;
                    necessity = Some(match self.ident()?.as_str() {
                        "mandatory" => Necessity::Mandatory,
                        "optional" => Necessity::Optional,
                        _ => {
                            self.pos -= 1;
                            return Err(self.err_at("necessity must be mandatory or optional"));
                        }
                    });
                }
                "features" => {
                    if morph.is_some() {
                        return dup(self);
                    }
                    morph = Some(self.feature_block()?);
                }
                "role" => {
                    if role.is_some() {
                        return dup(self);
                    }
                    self.punct(':')?;
                    let r = self.ident()?;
                    role = Some(if r == "none" { None } else { Some(r) });
                }
                "agree" => {
                    if agree.is_some() {
                        return dup(self);
                    }
                    self.punct(':')?;
                    let mut attrs = vec![self.ident()?];
                    while self.eat_punct('|') {
                        attrs.push(self.ident()?);
                    }
                    agree = Some(attrs);
                }
                _ => {
                    self.pos = key_pos;
                    return Err(self.err_at(format!("unknown valency key {key}")));
                }
            }
        }
        let missing = |what: &str| LexiconError::Syntax {
            line,
            col: 1,
            msg: format!("valency {name} of {class}: missing {what}"),
        };
        Ok(ValencyDef {
            modifier_class: modifier_class.ok_or_else(|| missing("class"))?,
            direction: direction.ok_or_else(|| missing("dir"))?,
            necessity: necessity.ok_or_else(|| missing("necessity"))?,
            morph: morph.unwrap_or_default(),
            role: role.flatten(),
            agree: agree.unwrap_or_default(),
            name,
            line,
        })
    }

    fn word_class(&mut self) -> Result<WordClassDef, LexiconError> {
        let line = self.line();
        let name = self.ident()?;
        let parent = if self.eat_punct(':') { Some(self.ident()?) } else { None };
        self.punct('{')?;
        let mut features: Option<FeatureStructure> = None;
        let mut valencies: Vec<ValencyDef> = Vec::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            let key_pos = self.pos;
            match self.ident()?.as_str() {
                "features" => {
                    if features.is_some() {
                        self.pos = key_pos;
                        return Err(self.err_at("duplicate features block"));
                    }
                    features = Some(self.feature_block()?);
                }
                "valency" => {
                    let v = self.valency(&name)?;
                    if valencies.iter().any(|x| x.name == v.name) {
                        return Err(LexiconError::DuplicateValency {
                            line: v.line,
                            class: name,
                            name: v.name,
                        });
                    }
                    valencies.push(v);
                }
                other => {
                    let other = other.to_string();
                    self.pos = key_pos;
                    return Err(self.err_at(format!("unknown word class key {other}")));
                }
            }
        }
        Ok(WordClassDef {
            name,
            parent,
            default_features: features.unwrap_or_default(),
            valencies,
            line,
        })
    }

    fn lexeme(&mut self) -> Result<LexemeEntry, LexiconError> {
        let line = self.line();
        let surface = self.string()?;
        self.punct(':')?;
        let word_class = self.ident()?;
        self.punct('{')?;
        let mut features: Option<FeatureStructure> = None;
        let mut concept: Option<Option<String>> = None;
        loop {
            if self.eat_punct('}') {
                break;
            }
            let key_pos = self.pos;
            match self.ident()?.as_str() {
                "features" if features.is_none() => features = Some(self.feature_block()?),
                "concept" if concept.is_none() => {
                    self.punct(':')?;
                    let c = self.ident()?;
                    concept = Some(if c == "none" { None } else { Some(c) });
                }
                other => {
                    let other = other.to_string();
                    self.pos = key_pos;
                    return Err(self.err_at(format!("unknown or repeated lexeme key {other}")));
                }
            }
        }
        Ok(LexemeEntry {
            surface,
            word_class,
            feature_overrides: features.unwrap_or_default(),
            concept: concept.flatten(),
            line,
        })
    }
}

/// Parses a lexicon source. Parent references must name a class defined
/// somewhere in the same source; all other references are checked by
/// [`validate_lexicon`].
pub fn load_lexicon(source: &str) -> Result<Lexicon, LexiconError> {
    let toks = tokenize(source)?;
    let last_line = source.lines().count().max(1);
    let mut p = Parser {
        toks,
        pos: 0,
        last_line,
    };
    let mut lex = Lexicon::default();
    while let Some(tok) = p.next() {
        match tok {
            Tok::Ident(kw) if kw == "wordclass" => {
                let def = p.word_class()?;
                if lex.word_classes.contains_key(&def.name) {
                    return Err(LexiconError::DuplicateClass {
                        line: def.line,
                        name: def.name,
                    });
                }
                lex.word_classes.insert(def.name.clone(), def);
            }
            Tok::Ident(kw) if kw == "lexeme" => {
                let e = p.lexeme()?;
                lex.lexemes.entry(e.surface.clone()).or_default().push(e);
            }
            _ => {
                p.pos -= 1;
                return Err(p.err_at("expected `wordclass` or `lexeme`"));
            }
        }
    }
    for def in lex.word_classes.values() {
        if let Some(parent) = &def.parent {
            if !lex.word_classes.contains_key(parent) {
                return Err(LexiconError::UnresolvedParent {
                    line: def.line,
                    parent: parent.clone(),
                });
            }
        }
    }
    Ok(lex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::load_kb;
    use crate::features::parse_fs;

    const SRC: &str = r#"
# toy fragment
wordclass Word { }
wordclass Noun : Word {
  features { cat: noun  agr.pers: 3  agr.num: sg|pl }
  valency spec { class: Det  dir: left  necessity: optional  agree: agr }
  valency pp { class: Word dir: right necessity: optional role: part }
}
wordclass CountNoun : Noun {
  features { agr: { num: sg } }
  valency pp { class: Prep dir: right necessity: optional }
}
wordclass Det : Word { features { cat: det } }
wordclass Prep : Word { valency obj { class: Noun dir: right necessity: mandatory features { agr.case: dat } } }
lexeme "Buch" : CountNoun { features { agr.gen: neut } concept: Book }
lexeme "der" : Det { }
lexeme "der" : Noun { concept: none }
"#;

    fn kb() -> ConceptTaxonomy {
        load_kb("concept Book\nrole part domain Top range Top\n").unwrap()
    }

    #[test]
    fn empty_source() {
        let lex = load_lexicon("").unwrap();
        assert!(lex.word_classes.is_empty());
        assert_eq!(lex.lexeme_count(), 0);
    }

    #[test]
    fn resolution_flattens_and_overrides() {
        let lex = load_lexicon(SRC).unwrap();
        assert!(validate_lexicon(&lex, &kb()).is_empty());
        let e = &lex.resolve_entry("Buch")[0];
        assert_eq!(
            e.features,
            parse_fs("{agr: {gen: neut, num: sg, pers: 3}, cat: noun}").unwrap()
        );
        let names: Vec<&str> = e.valencies.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["spec", "pp"]);
        assert_eq!(e.valencies[1].modifier_class, "Prep");
        assert_eq!(e.valencies[1].role, None);
        assert_eq!(e.valencies[0].agree, vec!["agr".to_string()]);
        assert_eq!(lex.resolve_entry("der").len(), 2);
        assert!(lex.resolve_entry("zzz-unknown").is_empty());
        assert_eq!(lex.resolve_entry("Buch"), lex.resolve_entry("Buch"));
    }

    #[test]
    fn subclass_relation() {
        let lex = load_lexicon(SRC).unwrap();
        assert!(lex.subclass_of("Noun", "Noun").unwrap());
        assert!(lex.subclass_of("CountNoun", "Noun").unwrap());
        assert!(lex.subclass_of("CountNoun", "Word").unwrap());
        assert!(!lex.subclass_of("Noun", "CountNoun").unwrap());
        assert!(lex.subclass_of("Noun", "Nope").is_err());
    }

    #[test]
    fn load_errors() {
        let e = load_lexicon("wordclass A : X { }").unwrap_err();
        assert_eq!(e.to_string(), "line 1: unresolved parent X");
        assert!(matches!(
            load_lexicon("wordclass A { }\nwordclass A { }"),
            Err(LexiconError::DuplicateClass { line: 2, .. })
        ));
        assert!(matches!(
            load_lexicon("wordclass A { valency v { class: A dir: left necessity: optional }\n valency v { class: A dir: left necessity: optional } }"),
            Err(LexiconError::DuplicateValency { line: 2, .. })
        ));
        match load_lexicon("wordclass A {\n  valency v { class: A dir: up necessity: optional } }") {
            Err(LexiconError::Syntax { line: 2, col, .. }) => assert_eq!(col, 29),
            other => panic!("{other:?}"),
        }
        assert!(load_lexicon("wordclass A { valency v { klass: A } }")
            .unwrap_err()
            .to_string()
            .contains("unknown valency key klass"));
        assert!(load_lexicon("wordclass A { colour: red }").is_err());
        assert!(load_lexicon("lexeme \"x\" : A { gloss: y }").is_err());
        assert!(load_lexicon("wordclass A { valency v { class: A dir: left } }").is_err());
    }

    #[test]
    fn validation_diagnostics() {
        let mut lex = load_lexicon("wordclass A { }\nwordclass B : A { }").unwrap();
        lex.word_classes.get_mut("A").unwrap().parent = Some("B".into());
        let d = validate_lexicon(&lex, &kb());
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("inheritance cycle"));

        let lex = load_lexicon(
            "wordclass A { features { x: a }\n valency v { class: A dir: right necessity: optional role: nonexistent agree: x } }\nlexeme \"q\" : A { features { x: {y: z} } concept: Nope }",
        )
        .unwrap();
        let d = validate_lexicon(&lex, &kb());
        let text: Vec<String> = d.iter().map(|d| d.message.clone()).collect();
        assert!(text.iter().any(|m| m.contains("unresolved role nonexistent")));
        assert!(text.iter().any(|m| m.contains("agree is only allowed")));
        assert!(text.iter().any(|m| m.contains("do not unify")));
        assert!(text.iter().any(|m| m.contains("unresolved concept Nope")));
    }
}
