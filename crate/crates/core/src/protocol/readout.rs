use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{Frontier, Msg};
use super::program::{program, BEHAVIOR_SCANNER, BEHAVIOR_WORD};
use super::scanner::Scanner;
use super::word::{Phase, WordActor};
use super::{Knowledge, Node};
use crate::actor::{Mode, RunError, System, SystemConfig, World};
use crate::events::{derive_etn, validate_trace, EventNetwork};

#[derive(Debug, Clone)]
pub struct ParseConfig {
    pub seed: u64,
    pub step_ceiling: usize,
    pub mode: Mode,
    pub lenient: bool,
    pub log_requests: bool,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            seed: 0,
            step_ceiling: 100_000,
            mode: Mode::Sequential,
            lenient: false,
            log_requests: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown token {0}")]
    UnknownToken(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub label: String,
    pub modifier: usize,
}

/// A dependency tree over text positions 1..=n.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyTree {
    /// Surface and word class per position.
    pub tokens: Vec<(String, String)>,
    pub edges: Vec<Edge>,
}

impl DependencyTree {
    pub fn new(tokens: Vec<(String, String)>, mut edges: Vec<Edge>) -> Self {
        edges.sort_by(|a, b| (a.head, &a.label, a.modifier).cmp(&(b.head, &b.label, b.modifier)));
        DependencyTree { tokens, edges }
    }

    fn surface(&self, pos: usize) -> &str {
        &self.tokens[pos - 1].0
    }

    pub fn root(&self) -> Option<usize> {
        let governed: BTreeSet<usize> = self.edges.iter().map(|e| e.modifier).collect();
        let roots: Vec<usize> = (1..=self.tokens.len()).filter(|p| !governed.contains(p)).collect();
        match roots.as_slice() {
            [r] => Some(*r),
            _ => None,
        }
    }

    /// Every subtree covers a contiguous interval of positions.
    pub fn is_projective(&self) -> bool {
        let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.edges {
            children.entry(e.head).or_default().push(e.modifier);
        }
        fn span(n: usize, children: &BTreeMap<usize, Vec<usize>>, depth: usize, out: &mut Vec<usize>) {
            out.push(n);
            if depth > 64 {
                return;
            }
            for &c in children.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                span(c, children, depth + 1, out);
            }
        }
        (1..=self.tokens.len()).all(|p| {
            let mut covered = Vec::new();
            span(p, &children, 0, &mut covered);
            covered.sort_unstable();
            covered.dedup();
            covered.last().unwrap() - covered[0] + 1 == covered.len()
        })
    }

    /// One line per edge: `head —label→ modifier`.
    pub fn render(&self) -> String {
        self.edges
            .iter()
            .map(|e| format!("{} —{}→ {}", self.surface(e.head), e.label, self.surface(e.modifier)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Identity used to compare readings: word classes and labeled edges.
    pub fn canonical(&self) -> String {
        let toks: Vec<String> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, (s, c))| format!("{}:{s}/{c}", i + 1))
            .collect();
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|e| format!("{}-{}->{}", e.head, e.label, e.modifier))
            .collect();
        format!("{} | {}", toks.join(" "), edges.join(" "))
    }
}

impl fmt::Display for DependencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reading {
    pub world: World,
    pub tree: DependencyTree,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub readings: Vec<Reading>,
    pub network: EventNetwork,
    /// Broken protocol invariants; empty on a sound run.
    pub violations: Vec<String>,
    pub skipped: Vec<String>,
    pub worlds: usize,
}

impl ParseOutcome {
    /// Sorted canonical renderings of the readings.
    pub fn canonical_trees(&self) -> Vec<String> {
        let mut v: Vec<String> = self.readings.iter().map(|r| r.tree.canonical()).collect();
        v.sort();
        v
    }
}

fn words(sys: &System<Node>) -> impl Iterator<Item = (crate::events::ActorId, &WordActor)> {
    sys.actors().filter_map(|(id, a)| a.as_word().map(|w| (id, w)))
}

fn scanner(sys: &System<Node>) -> Option<&Scanner> {
    sys.actors().find_map(|(_, a)| a.as_scanner())
}

/// Complete readings at quiescence: one word per position, every mandatory
/// valency filled, a single root, no search or copy left open.
pub fn read_out_trees(sys: &System<Node>, n_tokens: usize) -> Vec<Reading> {
    let mut by_world: BTreeMap<World, Vec<&WordActor>> = BTreeMap::new();
    for (_, w) in words(sys) {
        by_world.entry(w.world).or_default().push(w);
    }
    let mut out = Vec::new();
    'worlds: for (world, mut ws) in by_world {
        ws.sort_by_key(|w| w.position);
        if n_tokens == 0 || ws.len() != n_tokens || ws.iter().enumerate().any(|(i, w)| w.position != i + 1) {
            continue;
        }
        let mut edges = Vec::new();
        let mut roots = 0;
        for w in &ws {
            if w.copy.is_some() || w.ledger.is_some() || w.phase == Phase::Deferring || !w.mandatory_filled() {
                continue 'worlds;
            }
            match &w.head {
                None => roots += 1,
                Some(h) => {
                    let Some(head) = sys.actor(h.actor).and_then(Node::as_word) else {
                        continue 'worlds;
                    };
                    if head.world != world {
                        continue 'worlds;
                    }
                    edges.push(Edge {
                        head: head.position,
                        label: h.slot.clone(),
                        modifier: w.position,
                    });
                }
            }
        }
        if roots != 1 {
            continue;
        }
        let tokens = ws
            .iter()
            .map(|w| (w.surface.clone(), w.word_class().to_string()))
            .collect();
        out.push(Reading {
            world,
            tree: DependencyTree::new(tokens, edges),
        });
    }
    out
}

/// Protocol invariants over the final state and the recorded network.
pub fn check_invariants(sys: &System<Node>, readings: &[Reading]) -> Vec<String> {
    let mut out = Vec::new();
    let net = sys.network();
    for r in readings {
        if !r.tree.is_projective() {
            out.push(format!("reading {} is not projective", r.world));
        }
    }
    for (id, w) in words(sys) {
        if let Some(l) = &w.ledger {
            out.push(format!(
                "{} {id} in {}: ledger open, received {} of {} expected",
                w.surface,
                w.world,
                l.received.len(),
                l.expected.len()
            ));
        }
        if !w.held.is_empty() {
            out.push(format!(
                "{} {id} in {}: {} offers unresolved",
                w.surface,
                w.world,
                w.held.len()
            ));
        }
        if w.copy.is_some() {
            out.push(format!("{} {id} in {}: copy never completed", w.surface, w.world));
        }
    }
    match scanner(sys) {
        Some(s) => {
            if s.awaiting != 0 {
                out.push(format!("scanner still awaits {} scanNext", s.awaiting));
            }
            let scans: Vec<_> = net.events.iter().filter(|e| e.key == "scanNext").collect();
            let posted = scans.iter().filter(|e| !e.causes.is_empty()).count();
            let extra: usize = scans
                .iter()
                .filter_map(|e| e.params.get("expectMore").and_then(|v| v.parse::<usize>().ok()))
                .sum();
            if posted != s.spawned + extra {
                out.push(format!(
                    "{posted} scanNext posted by words, expected {} ({} words + {extra} delegated)",
                    s.spawned + extra,
                    s.spawned
                ));
            }
        }
        None => out.push("no scanner".into()),
    }
    let resolving = ["headAccepted", "headRetracted", "duplicateStructure"];
    let mut answers: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &net.events {
        if resolving.contains(&e.key.as_str()) {
            for c in &e.causes {
                *answers.entry(*c).or_default() += 1;
            }
        }
    }
    for e in net.events.iter().filter(|e| e.key == "headFound") {
        let n = answers.get(&e.id).copied().unwrap_or(0);
        if n != 1 {
            out.push(format!("headFound event {} answered {n} times", e.id));
        }
    }
    for e in net.events.iter().filter(|e| e.key == "searchHead") {
        let start = e
            .params
            .get("span")
            .and_then(|s| s.split('-').next())
            .and_then(|s| s.parse::<usize>().ok());
        let pos = sys.actor(e.target).and_then(Node::as_word).map(|w| w.position);
        if let (Some(start), Some(pos)) = (start, pos) {
            if pos >= start {
                out.push(format!(
                    "searchHead event {} reached position {pos} inside the candidate span",
                    e.id
                ));
            }
        }
    }
    let etn = derive_etn(&program()).expect("protocol program is well formed");
    out.extend(validate_trace(net, &etn).into_iter().map(|d| d.message));
    out
}

/// Runs the scanner over `tokens` to quiescence and returns the final
/// system, for inspection of actor states.
pub fn run_system(kn: Arc<Knowledge>, tokens: &[String], cfg: &ParseConfig) -> Result<System<Node>, ParseError> {
    if !cfg.lenient {
        if let Some(t) = tokens.iter().find(|t| kn.lexicon.resolve_entry(t).is_empty()) {
            return Err(ParseError::UnknownToken(t.clone()));
        }
    }
    let mut sys = System::<Node>::new(
        &[BEHAVIOR_SCANNER, BEHAVIOR_WORD],
        kn,
        SystemConfig {
            seed: cfg.seed,
            step_ceiling: cfg.step_ceiling,
            mode: cfg.mode,
            log_requests: cfg.log_requests,
        },
    );
    let w0 = sys.new_world(None);
    let scanner_id = sys.spawn(Node::Scanner(Scanner::new(tokens.to_vec(), cfg.lenient)))?;
    sys.post(
        scanner_id,
        None,
        Msg::ScanNext {
            frontiers: vec![Frontier { actor: None, world: w0 }],
            expect_more: 0,
        },
        None,
    )?;
    sys.run_to_quiescence()?;
    Ok(sys)
}

/// Parses `tokens` to quiescence and reads out the readings.
pub fn parse_tokens(kn: Arc<Knowledge>, tokens: &[String], cfg: &ParseConfig) -> Result<ParseOutcome, ParseError> {
    let sys = run_system(kn, tokens, cfg)?;
    let skipped = scanner(&sys).map(|s| s.skipped.clone()).unwrap_or_default();
    let readings = read_out_trees(&sys, tokens.len() - skipped.len());
    let violations = check_invariants(&sys, &readings);
    let worlds = sys.world_count();
    Ok(ParseOutcome {
        readings,
        violations,
        skipped,
        worlds,
        network: sys.into_network(),
    })
}
