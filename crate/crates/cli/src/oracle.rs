//! Exhaustive reference parser. Enumerates every head assignment over the
//! tokens and keeps the projective, single-rooted trees whose edges satisfy
//! the valency constraints. Uses only the lexicon, unification and the
//! concept taxonomy, none of the actor code.

use std::collections::BTreeSet;

use actorparse::concepts::ConceptTaxonomy;
use actorparse::features::FeatureStructure;
use actorparse::lexicon::{Direction, Lexicon, ResolvedEntry, ValencyDef};
use actorparse::protocol::{DependencyTree, Edge};
use thiserror::Error;

pub const MAX_TOKENS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("sentence has {0} tokens, the oracle handles at most {MAX_TOKENS}")]
    TooLong(usize),
    #[error("unknown token {0}")]
    UnknownToken(String),
}

/// All complete readings of `tokens`, sorted by canonical form.
pub fn oracle_parse(
    lex: &Lexicon,
    kb: &ConceptTaxonomy,
    tokens: &[String],
) -> Result<Vec<DependencyTree>, OracleError> {
    if tokens.len() > MAX_TOKENS {
        return Err(OracleError::TooLong(tokens.len()));
    }
    let mut choices = Vec::new();
    for t in tokens {
        let entries = lex.resolve_entry(t);
        if entries.is_empty() {
            return Err(OracleError::UnknownToken(t.clone()));
        }
        choices.push(entries);
    }
    let mut found = BTreeSet::new();
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let mut pick = vec![0usize; tokens.len()];
    loop {
        let entries: Vec<&ResolvedEntry> = pick.iter().zip(&choices).map(|(&i, c)| &c[i]).collect();
        Sentence {
            lex,
            kb,
            entries: &entries,
        }
        .enumerate(&mut found);
        // odometer over homonym choices
        let mut i = 0;
        while i < pick.len() {
            pick[i] += 1;
            if pick[i] < choices[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
    }
    let mut out: Vec<DependencyTree> = found.into_iter().collect();
    out.sort_by_key(|t| t.canonical());
    Ok(out)
}

struct Sentence<'a> {
    lex: &'a Lexicon,
    kb: &'a ConceptTaxonomy,
    entries: &'a [&'a ResolvedEntry],
}

impl Sentence<'_> {
    fn n(&self) -> usize {
        self.entries.len()
    }

    /// Valencies of `h` that could take `c`, ignoring features contributed
    /// by other dependents and the role check.
    fn static_slots(&self, h: usize, c: usize) -> Vec<usize> {
        let dir = if c > h { Direction::Right } else { Direction::Left };
        let (he, ce) = (self.entries[h], self.entries[c]);
        he.valencies
            .iter()
            .enumerate()
            .filter(|(_, v)| {
                v.direction == dir
                    && self.lex.subclass_of(&ce.word_class, &v.modifier_class).unwrap_or(false)
                    && v.morph.unify(&ce.features).is_some()
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn enumerate(&self, found: &mut BTreeSet<DependencyTree>) {
        let n = self.n();
        let cands: Vec<Vec<Option<usize>>> = (0..n)
            .map(|c| {
                let mut v = vec![None];
                v.extend(
                    (0..n)
                        .filter(|&h| h != c && !self.static_slots(h, c).is_empty())
                        .map(Some),
                );
                v
            })
            .collect();
        let mut heads = vec![None; n];
        self.assign(0, &cands, &mut heads, found);
    }

    fn assign(
        &self,
        i: usize,
        cands: &[Vec<Option<usize>>],
        heads: &mut Vec<Option<usize>>,
        found: &mut BTreeSet<DependencyTree>,
    ) {
        if i == self.n() {
            if heads.iter().filter(|h| h.is_none()).count() == 1 && acyclic(heads) && projective(heads) {
                self.label(heads, found);
            }
            return;
        }
        for &h in &cands[i] {
            if h.is_none() && heads[..i].iter().any(Option::is_none) {
                continue;
            }
            heads[i] = h;
            self.assign(i + 1, cands, heads, found);
        }
        heads[i] = None;
    }

    /// Tries every assignment of valencies to the edges of a fixed tree.
    fn label(&self, heads: &[Option<usize>], found: &mut BTreeSet<DependencyTree>) {
        let edges: Vec<(usize, usize)> = heads
            .iter()
            .enumerate()
            .filter_map(|(c, h)| h.map(|h| (h, c)))
            .collect();
        let options: Vec<Vec<usize>> = edges.iter().map(|&(h, c)| self.static_slots(h, c)).collect();
        let mut slots = vec![0; edges.len()];
        self.label_rec(0, &edges, &options, &mut slots, found);
    }

    fn label_rec(
        &self,
        k: usize,
        edges: &[(usize, usize)],
        options: &[Vec<usize>],
        slots: &mut Vec<usize>,
        found: &mut BTreeSet<DependencyTree>,
    ) {
        if k == edges.len() {
            if let Some(tree) = self.check(edges, slots) {
                found.insert(tree);
            }
            return;
        }
        for &s in &options[k] {
            let taken = (0..k).any(|j| edges[j].0 == edges[k].0 && slots[j] == s);
            if taken {
                continue;
            }
            slots[k] = s;
            self.label_rec(k + 1, edges, options, slots, found);
        }
    }

    fn valency(&self, h: usize, s: usize) -> &ValencyDef {
        &self.entries[h].valencies[s]
    }

    /// Full check of a labeled tree: mandatory valencies, features
    /// (agreement propagated to a fixpoint) and conceptual roles.
    fn check(&self, edges: &[(usize, usize)], slots: &[usize]) -> Option<DependencyTree> {
        let n = self.n();
        for h in 0..n {
            for (s, v) in self.entries[h].valencies.iter().enumerate() {
                let filled = edges.iter().zip(slots).any(|(&(eh, _), &es)| eh == h && es == s);
                if v.is_mandatory() && !filled {
                    return None;
                }
            }
        }
        let mut fs: Vec<FeatureStructure> = self.entries.iter().map(|e| e.features.clone()).collect();
        loop {
            let before = fs.clone();
            for (&(h, c), &s) in edges.iter().zip(slots) {
                let v = self.valency(h, s);
                fs[c] = fs[c].unify(&v.morph)?;
                if !v.agree.is_empty() {
                    let shared = fs[h].project(&v.agree).unify(&fs[c].project(&v.agree))?;
                    fs[h] = fs[h].unify(&shared)?;
                    fs[c] = fs[c].unify(&shared)?;
                }
            }
            if fs == before {
                break;
            }
        }
        for (&(h, c), &s) in edges.iter().zip(slots) {
            if let Some(role) = &self.valency(h, s).role {
                let hc = self.concept(h, edges, slots, 0)?;
                let cc = self.concept(c, edges, slots, 0)?;
                if !self.kb.role_permits(&hc, role, &cc).unwrap_or(false) {
                    return None;
                }
            }
        }
        let tokens = self
            .entries
            .iter()
            .map(|e| (e.surface.clone(), e.word_class.clone()))
            .collect();
        let labeled = edges
            .iter()
            .zip(slots)
            .map(|(&(h, c), &s)| Edge {
                head: h + 1,
                label: self.valency(h, s).name.clone(),
                modifier: c + 1,
            })
            .collect();
        Some(DependencyTree::new(tokens, labeled))
    }

    /// Lexical concept, or that of the dependent in the first mandatory
    /// valency.
    fn concept(&self, w: usize, edges: &[(usize, usize)], slots: &[usize], depth: usize) -> Option<String> {
        if let Some(c) = &self.entries[w].concept {
            return Some(c.clone());
        }
        if depth > self.n() {
            return None;
        }
        for (s, v) in self.entries[w].valencies.iter().enumerate() {
            if !v.is_mandatory() {
                continue;
            }
            let dep = edges.iter().zip(slots).find(|(&(h, _), &es)| h == w && es == s);
            if let Some((&(_, c), _)) = dep {
                return self.concept(c, edges, slots, depth + 1);
            }
        }
        None
    }
}

fn acyclic(heads: &[Option<usize>]) -> bool {
    (0..heads.len()).all(|start| {
        let mut cur = heads[start];
        let mut steps = 0;
        while let Some(h) = cur {
            steps += 1;
            if steps > heads.len() {
                return false;
            }
            cur = heads[h];
        }
        true
    })
}

/// Every word's yield is a contiguous interval.
fn projective(heads: &[Option<usize>]) -> bool {
    let n = heads.len();
    (0..n).all(|w| {
        let yield_: Vec<usize> = (0..n)
            .filter(|&d| {
                let mut cur = Some(d);
                while let Some(x) = cur {
                    if x == w {
                        return true;
                    }
                    cur = heads[x];
                }
                false
            })
            .collect();
        yield_.last().unwrap() - yield_[0] + 1 == yield_.len()
    })
}
