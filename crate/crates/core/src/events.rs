//! Event networks of actual runs and event type networks derived from
//! behavior definitions.
//!
//! An event is the arrival of one message at one actor. Its causes are the
//! events that posted the message. The event type network relates message
//! keys: `k -> k'` when some handler for `k` contains a send of `k'`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;

pub type EventId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActorId(pub u32);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub target: ActorId,
    pub key: String,
    pub params: BTreeMap<String, String>,
    pub causes: BTreeSet<EventId>,
    pub state_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorInfo {
    pub label: String,
    pub behavior: String,
    /// The event during which the actor was created (none for actors
    /// created before the run).
    pub created_by: Option<EventId>,
}

/// A synchronous service call made inside a computation event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub event: EventId,
    pub service: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventNetwork {
    pub events: Vec<Event>,
    pub actors: BTreeMap<ActorId, ActorInfo>,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventsError {
    #[error("event {event} cites unrecorded cause {cause}")]
    ForwardCause { event: EventId, cause: EventId },
    #[error("behavior {behavior}: {msg}")]
    MalformedBehavior { behavior: String, msg: String },
}

impl EventNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn register_actor(&mut self, id: ActorId, info: ActorInfo) {
        self.actors.insert(id, info);
    }

    pub fn label(&self, id: ActorId) -> String {
        self.actors
            .get(&id)
            .map(|a| a.label.clone())
            .unwrap_or_else(|| id.to_string())
    }

    pub fn record(
        &mut self,
        target: ActorId,
        key: impl Into<String>,
        params: BTreeMap<String, String>,
        causes: BTreeSet<EventId>,
        state_version: u64,
    ) -> Result<EventId, EventsError> {
        let id = self.events.len();
        if let Some(&bad) = causes.iter().find(|&&c| c >= id) {
            return Err(EventsError::ForwardCause { event: id, cause: bad });
        }
        self.events.push(Event {
            id,
            target,
            key: key.into(),
            params,
            causes,
            state_version,
        });
        Ok(id)
    }

    pub fn event(&self, id: EventId) -> Option<&Event> {
        self.events.get(id)
    }

    /// Bracket notation used in exports, e.g. `[Notebook] <= searchHead`.
    pub fn event_label(&self, e: &Event) -> String {
        format!("[{}] <= {}", self.label(e.target), e.key)
    }

    /// `a` happened before or is `b`. Walks cause links backwards from `b`.
    pub fn precedes_or_eq(&self, a: EventId, b: EventId) -> bool {
        if a == b {
            return true;
        }
        if a > b {
            return false;
        }
        let mut stack = vec![b];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            if x == a {
                return true;
            }
            if x < a || !seen.insert(x) {
                continue;
            }
            if let Some(e) = self.events.get(x) {
                stack.extend(e.causes.iter().copied());
            }
        }
        false
    }

    /// `root` and every event transitively caused by it.
    pub fn descendants(&self, root: EventId) -> BTreeSet<EventId> {
        let mut out = BTreeSet::new();
        out.insert(root);
        for e in &self.events[root.min(self.events.len())..] {
            if e.causes.iter().any(|c| out.contains(c)) {
                out.insert(e.id);
            }
        }
        out
    }

    /// Sub-network on the given events; causes outside the set are dropped.
    pub fn project(&self, keep: &BTreeSet<EventId>) -> EventNetwork {
        let events = self
            .events
            .iter()
            .filter(|e| keep.contains(&e.id))
            .map(|e| {
                let mut e = e.clone();
                e.causes.retain(|c| keep.contains(c));
                e
            })
            .collect::<Vec<_>>();
        let targets: BTreeSet<ActorId> = events.iter().map(|e| e.target).collect();
        EventNetwork {
            actors: self
                .actors
                .iter()
                .filter(|(id, _)| targets.contains(id))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            events,
            requests: Vec::new(),
        }
    }
}

/// Reflexive-transitive closure of causes with the concurrency predicate.
#[derive(Debug, Clone)]
pub struct CausalOrder {
    ids: Vec<EventId>,
    /// ancestors[i] includes i itself.
    ancestors: Vec<BTreeSet<EventId>>,
}

impl CausalOrder {
    fn index(&self, id: EventId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn leq(&self, a: EventId, b: EventId) -> bool {
        self.index(b).map(|i| self.ancestors[i].contains(&a)).unwrap_or(false)
    }

    pub fn lt(&self, a: EventId, b: EventId) -> bool {
        a != b && self.leq(a, b)
    }

    pub fn concurrent(&self, a: EventId, b: EventId) -> bool {
        !self.leq(a, b) && !self.leq(b, a)
    }
}

pub fn causes_closure(net: &EventNetwork) -> CausalOrder {
    let mut ids: Vec<EventId> = net.events.iter().map(|e| e.id).collect();
    ids.sort_unstable();
    let mut ancestors: Vec<BTreeSet<EventId>> = Vec::with_capacity(ids.len());
    for &id in &ids {
        let e = net.events.iter().find(|e| e.id == id).expect("listed id");
        let mut set = BTreeSet::new();
        set.insert(id);
        for c in &e.causes {
            if let Ok(ci) = ids.binary_search(c) {
                if ci < ancestors.len() {
                    set.extend(ancestors[ci].iter().copied());
                }
            }
        }
        ancestors.push(set);
    }
    CausalOrder { ids, ancestors }
}

// ---------------------------------------------------------------------------
// behavior programs

/// Declarative mirror of a handler, used for script derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Seq(Vec<Action>),
    If {
        cond: String,
        then: Box<Action>,
        els: Option<Box<Action>>,
        /// Label for the else branch; defaults to `¬cond`.
        else_label: Option<String>,
    },
    Send {
        target: String,
        key: String,
        /// Plumbing sends carry the dagger mark in exports.
        plumbing: bool,
    },
    Create(String),
    Become(String),
}

impl Action {
    pub fn seq(items: Vec<Action>) -> Action {
        Action::Seq(items)
    }

    pub fn when(cond: &str, then: Action) -> Action {
        Action::If {
            cond: cond.to_string(),
            then: Box::new(then),
            els: None,
            else_label: None,
        }
    }

    pub fn branch(cond: &str, then: Action, els: Action) -> Action {
        Action::If {
            cond: cond.to_string(),
            then: Box::new(then),
            els: Some(Box::new(els)),
            else_label: None,
        }
    }

    pub fn branch_labeled(cond: &str, then: Action, else_label: &str, els: Action) -> Action {
        Action::If {
            cond: cond.to_string(),
            then: Box::new(then),
            els: Some(Box::new(els)),
            else_label: Some(else_label.to_string()),
        }
    }

    pub fn send(target: &str, key: &str) -> Action {
        Action::Send {
            target: target.to_string(),
            key: key.to_string(),
            plumbing: false,
        }
    }

    pub fn send_plumbing(target: &str, key: &str) -> Action {
        Action::Send {
            target: target.to_string(),
            key: key.to_string(),
            plumbing: true,
        }
    }

    /// Number of Send nodes in the tree.
    pub fn send_count(&self) -> usize {
        match self {
            Action::Seq(items) => items.iter().map(Action::send_count).sum(),
            Action::If { then, els, .. } => then.send_count() + els.as_ref().map(|e| e.send_count()).unwrap_or(0),
            Action::Send { .. } => 1,
            Action::Create(_) | Action::Become(_) => 0,
        }
    }

    /// Copy of the tree with the `n`-th Send node (preorder) removed.
    pub fn without_send(&self, n: usize) -> Action {
        let mut counter = 0;
        self.strip(n, &mut counter)
    }

    fn strip(&self, n: usize, counter: &mut usize) -> Action {
        match self {
            Action::Seq(items) => Action::Seq(items.iter().map(|a| a.strip(n, counter)).collect()),
            Action::If {
                cond,
                then,
                els,
                else_label,
            } => {
                let then = Box::new(then.strip(n, counter));
                let els = els.as_ref().map(|e| Box::new(e.strip(n, counter)));
                Action::If {
                    cond: cond.clone(),
                    then,
                    els,
                    else_label: else_label.clone(),
                }
            }
            Action::Send { .. } => {
                let here = *counter;
                *counter += 1;
                if here == n {
                    Action::Seq(Vec::new())
                } else {
                    self.clone()
                }
            }
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Computation,
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub key: String,
    pub pre: Option<Action>,
    pub body: Action,
    pub post: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorDef {
    pub name: String,
    pub methods: Vec<MethodDef>,
}

impl BehaviorDef {
    pub fn handles(&self, key: &str) -> bool {
        self.methods.iter().any(|m| m.key == key)
    }

    pub fn send_count(&self) -> usize {
        self.methods
            .iter()
            .map(|m| {
                m.body.send_count()
                    + m.pre.as_ref().map(Action::send_count).unwrap_or(0)
                    + m.post.as_ref().map(Action::send_count).unwrap_or(0)
            })
            .sum()
    }

    /// Copy with the `n`-th Send node (method order; pre, body, post) removed.
    pub fn without_send(&self, mut n: usize) -> BehaviorDef {
        let mut out = self.clone();
        for m in &mut out.methods {
            let pre_count = m.pre.as_ref().map(Action::send_count).unwrap_or(0);
            if n < pre_count {
                m.pre = m.pre.as_ref().map(|a| a.without_send(n));
                return out;
            }
            n -= pre_count;
            let body_count = m.body.send_count();
            if n < body_count {
                m.body = m.body.without_send(n);
                return out;
            }
            n -= body_count;
            let post_count = m.post.as_ref().map(Action::send_count).unwrap_or(0);
            if n < post_count {
                m.post = m.post.as_ref().map(|a| a.without_send(n));
                return out;
            }
            n -= post_count;
        }
        out
    }

    pub fn without_method(&self, key: &str) -> BehaviorDef {
        BehaviorDef {
            name: self.name.clone(),
            methods: self.methods.iter().filter(|m| m.key != key).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub key: String,
    pub guard: String,
    pub origin: Origin,
    pub plumbing: bool,
}

/// Per handled key, the keys its handler can send.
pub type Script = BTreeMap<String, BTreeSet<ScriptEntry>>;

fn collect_sends(action: &Action, guard: &str, origin: Origin, out: &mut BTreeSet<ScriptEntry>) -> Result<(), String> {
    match action {
        Action::Seq(items) => {
            for a in items {
                collect_sends(a, guard, origin, out)?;
            }
        }
        Action::If {
            cond,
            then,
            els,
            else_label,
        } => {
            let then_guard = if cond.is_empty() { guard } else { cond.as_str() };
            collect_sends(then, then_guard, origin, out)?;
            if let Some(els) = els {
                let label = match else_label {
                    Some(l) => l.clone(),
                    None if cond.is_empty() => String::new(),
                    None => format!("¬{cond}"),
                };
                let else_guard = if label.is_empty() { guard.to_string() } else { label };
                collect_sends(els, &else_guard, origin, out)?;
            }
        }
        Action::Send { key, plumbing, .. } => {
            if key.is_empty() {
                return Err("send without message key".into());
            }
            out.insert(ScriptEntry {
                key: key.clone(),
                guard: guard.to_string(),
                origin,
                plumbing: *plumbing,
            });
        }
        Action::Create(_) | Action::Become(_) => {}
    }
    Ok(())
}

pub fn derive_script(behavior: &BehaviorDef) -> Result<Script, EventsError> {
    let malformed = |msg: String| EventsError::MalformedBehavior {
        behavior: behavior.name.clone(),
        msg,
    };
    let mut script = Script::new();
    for m in &behavior.methods {
        if m.key.is_empty() {
            return Err(malformed("method without key".into()));
        }
        if script.contains_key(&m.key) {
            return Err(malformed(format!("two methods for {}", m.key)));
        }
        let mut sends = BTreeSet::new();
        for (part, origin) in [
            (m.pre.as_ref(), Origin::Distribution),
            (Some(&m.body), Origin::Computation),
            (m.post.as_ref(), Origin::Distribution),
        ] {
            if let Some(a) = part {
                collect_sends(a, "", origin, &mut sends).map_err(|e| malformed(format!("{}: {e}", m.key)))?;
            }
        }
        script.insert(m.key.clone(), sends);
    }
    Ok(script)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EtnEdge {
    pub from: String,
    pub to: String,
    pub guard: String,
    pub origin: Origin,
    pub plumbing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeNetwork {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<EtnEdge>,
}

impl EventTypeNetwork {
    pub fn has_pair(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// (from, to, guard) triples of the edges that are not plumbing.
    pub fn core_triples(&self) -> BTreeSet<(String, String, String)> {
        self.edges
            .iter()
            .filter(|e| !e.plumbing)
            .map(|e| (e.from.clone(), e.to.clone(), e.guard.clone()))
            .collect()
    }

    pub fn all_triples(&self) -> BTreeSet<(String, String, String)> {
        self.edges
            .iter()
            .map(|e| (e.from.clone(), e.to.clone(), e.guard.clone()))
            .collect()
    }
}

pub fn derive_etn(program: &[BehaviorDef]) -> Result<EventTypeNetwork, EventsError> {
    let mut etn = EventTypeNetwork::default();
    for b in program {
        for (key, sends) in derive_script(b)? {
            etn.nodes.insert(key.clone());
            for s in sends {
                etn.nodes.insert(s.key.clone());
                etn.edges.insert(EtnEdge {
                    from: key.clone(),
                    to: s.key,
                    guard: s.guard,
                    origin: s.origin,
                    plumbing: s.plumbing,
                });
            }
        }
    }
    Ok(etn)
}

/// Checks that every causes edge of `net` is licensed by `etn` and that
/// the stored order is a linearization of causes.
pub fn validate_trace(net: &EventNetwork, etn: &EventTypeNetwork) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let pos: BTreeMap<EventId, usize> = net.events.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    let mut prev: Option<EventId> = None;
    for (i, e) in net.events.iter().enumerate() {
        if let Some(p) = prev {
            if e.id <= p {
                out.push(Diagnostic::new(0, format!("event {} listed after event {p}", e.id)));
            }
        }
        prev = Some(e.id);
        for c in &e.causes {
            match pos.get(c) {
                None => out.push(Diagnostic::new(0, format!("event {} cites unknown cause {c}", e.id))),
                Some(&ci) => {
                    if ci >= i {
                        out.push(Diagnostic::new(
                            0,
                            format!("linearization violated: cause {c} listed after event {}", e.id),
                        ));
                    }
                    let from = &net.events[ci].key;
                    if !etn.has_pair(from, &e.key) {
                        out.push(Diagnostic::new(
                            0,
                            format!("edge not in ETN: {from} -> {} (event {c} -> {})", e.key, e.id),
                        ));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// export

#[derive(Serialize)]
struct JsonEvent<'a> {
    causes: &'a BTreeSet<EventId>,
    id: EventId,
    key: &'a str,
    params: &'a BTreeMap<String, String>,
    #[serde(rename = "stateVersion")]
    state_version: u64,
    target: u32,
}

pub fn export_jsonl(net: &EventNetwork) -> String {
    let mut out = String::new();
    for e in &net.events {
        let rec = JsonEvent {
            causes: &e.causes,
            id: e.id,
            key: &e.key,
            params: &e.params,
            state_version: e.state_version,
            target: e.target.0,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot(net: &EventNetwork) -> String {
    let mut out = String::from("digraph events {\n");
    for e in &net.events {
        out.push_str(&format!(
            "  e{} [label=\"{}\"];\n",
            e.id,
            dot_escape(&net.event_label(e))
        ));
    }
    for e in &net.events {
        for c in &e.causes {
            out.push_str(&format!("  e{c} -> e{};\n", e.id));
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize)]
struct JsonEdge<'a> {
    from: &'a str,
    guard: &'a str,
    origin: &'a str,
    plumbing: bool,
    to: &'a str,
}

fn origin_name(o: Origin) -> &'static str {
    match o {
        Origin::Computation => "computation",
        Origin::Distribution => "distribution",
    }
}

pub fn export_etn_jsonl(etn: &EventTypeNetwork) -> String {
    let mut out = String::new();
    for e in &etn.edges {
        let rec = JsonEdge {
            from: &e.from,
            guard: &e.guard,
            origin: origin_name(e.origin),
            plumbing: e.plumbing,
            to: &e.to,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn export_etn_dot(etn: &EventTypeNetwork) -> String {
    let mut out = String::from("digraph etn {\n");
    for n in &etn.nodes {
        out.push_str(&format!(
            "  \"{}\" [label=\"[* <= {}]\"];\n",
            dot_escape(n),
            dot_escape(n)
        ));
    }
    for e in &etn.edges {
        let mut attrs = format!("label=\"{}\"", dot_escape(&e.guard));
        if e.origin == Origin::Distribution {
            attrs.push_str(", origin=distribution");
        }
        if e.plumbing {
            attrs.push_str(", style=dashed, plumbing=true");
        }
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [{attrs}];\n",
            dot_escape(&e.from),
            dot_escape(&e.to)
        ));
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct DotError {
    pub line: usize,
    pub msg: String,
}

fn unquote(s: &str) -> Option<String> {
    let s = s.trim();
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    Some(inner.replace("\\\"", "\"").replace("\\\\", "\\"))
}

/// Reads the edge statements of an ETN DOT file in the format written by
/// [`export_etn_dot`]. Node statements are ignored.
pub fn parse_etn_dot(text: &str) -> Result<EventTypeNetwork, DotError> {
    let mut etn = EventTypeNetwork::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: &str| DotError {
            line: i + 1,
            msg: msg.to_string(),
        };
        if line.is_empty() || line.starts_with("digraph") || line == "}" || line.starts_with("//") {
            continue;
        }
        let Some((lhs, rest)) = line.split_once("->") else {
            // node statement
            if let Some((name, _)) = line.split_once('[') {
                if let Some(n) = unquote(name) {
                    etn.nodes.insert(n);
                    continue;
                }
            }
            return Err(err("unrecognized statement"));
        };
        let from = unquote(lhs).ok_or_else(|| err("source must be quoted"))?;
        let (to_part, attr_part) = match rest.split_once('[') {
            Some((t, a)) => (t, a.trim_end_matches(';').trim_end().trim_end_matches(']')),
            None => (rest.trim_end_matches(';'), ""),
        };
        let to = unquote(to_part).ok_or_else(|| err("target must be quoted"))?;
        let mut guard = String::new();
        let mut origin = Origin::Computation;
        let mut plumbing = false;
        let mut rest = attr_part.trim();
        while !rest.is_empty() {
            let (name, after) = rest.split_once('=').ok_or_else(|| err("malformed attribute"))?;
            let after = after.trim_start();
            let (value, remaining) = if let Some(stripped) = after.strip_prefix('"') {
                let mut end = None;
                let bytes: Vec<char> = stripped.chars().collect();
                let mut k = 0;
                let mut byte_off = 0;
                while k < bytes.len() {
                    if bytes[k] == '\\' {
                        byte_off += bytes[k].len_utf8() + bytes.get(k + 1).map(|c| c.len_utf8()).unwrap_or(0);
                        k += 2;
                        continue;
                    }
                    if bytes[k] == '"' {
                        end = Some(byte_off);
                        break;
                    }
                    byte_off += bytes[k].len_utf8();
                    k += 1;
                }
                let end = end.ok_or_else(|| err("unterminated string"))?;
                let v = unquote(&format!("\"{}\"", &stripped[..end])).unwrap_or_default();
                (v, &stripped[end + 1..])
            } else {
                match after.split_once(',') {
                    Some((v, r)) => (v.trim().to_string(), r),
                    None => (after.trim().to_string(), ""),
                }
            };
            match name.trim() {
                "label" => guard = value,
                "origin" => {
                    origin = if value == "distribution" {
                        Origin::Distribution
                    } else {
                        Origin::Computation
                    }
                }
                "plumbing" => plumbing = value == "true",
                _ => {}
            }
            rest = remaining.trim_start().trim_start_matches(',').trim();
        }
        etn.nodes.insert(from.clone());
        etn.nodes.insert(to.clone());
        etn.edges.insert(EtnEdge {
            from,
            to,
            guard,
            origin,
            plumbing,
        });
    }
    Ok(etn)
}

/// Golden comparison on (from, to, guard) of non-plumbing edges.
pub fn compare_etn_core(derived: &EventTypeNetwork, golden: &EventTypeNetwork) -> Vec<String> {
    let d = derived.core_triples();
    let g = golden.core_triples();
    let mut out = Vec::new();
    for (f, t, l) in g.difference(&d) {
        out.push(format!("missing edge {f} -> {t} [{l}]"));
    }
    for (f, t, l) in d.difference(&g) {
        out.push(format!("unexpected edge {f} -> {t} [{l}]"));
    }
    out
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    Exact,
    UpToRenaming,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub equal: bool,
    pub difference: Option<String>,
}

impl Verdict {
    fn same() -> Self {
        Verdict {
            equal: true,
            difference: None,
        }
    }

    fn differ(msg: String) -> Self {
        Verdict {
            equal: false,
            difference: Some(msg),
        }
    }
}

pub fn compare_networks(a: &EventNetwork, b: &EventNetwork, mode: CompareMode) -> Verdict {
    match mode {
        CompareMode::Exact => compare_exact(a, b),
        CompareMode::UpToRenaming => compare_renaming(a, b),
    }
}

fn edges_of(net: &EventNetwork) -> BTreeSet<(EventId, EventId)> {
    net.events
        .iter()
        .flat_map(|e| e.causes.iter().map(move |c| (*c, e.id)))
        .collect()
}

fn compare_exact(a: &EventNetwork, b: &EventNetwork) -> Verdict {
    let ea = edges_of(a);
    let eb = edges_of(b);
    let describe = |net: &EventNetwork, (c, e): (EventId, EventId)| {
        let label = |id: EventId| {
            net.events
                .iter()
                .find(|x| x.id == id)
                .map(|x| net.event_label(x))
                .unwrap_or_else(|| "?".into())
        };
        format!("{c} -> {e} ({} -> {})", label(c), label(e))
    };
    if let Some(&x) = ea.difference(&eb).next() {
        return Verdict::differ(format!("edge {} only in first network", describe(a, x)));
    }
    if let Some(&x) = eb.difference(&ea).next() {
        return Verdict::differ(format!("edge {} only in second network", describe(b, x)));
    }
    let ja = export_jsonl(a);
    let jb = export_jsonl(b);
    for (i, (x, y)) in ja.lines().zip(jb.lines()).enumerate() {
        if x != y {
            return Verdict::differ(format!("event record {i} differs: {x} vs {y}"));
        }
    }
    if a.events.len() != b.events.len() {
        return Verdict::differ(format!("{} events vs {} events", a.events.len(), b.events.len()));
    }
    for e in &a.events {
        if a.label(e.target) != b.label(e.target) {
            return Verdict::differ(format!(
                "actor {} labeled {} vs {}",
                e.target,
                a.label(e.target),
                b.label(e.target)
            ));
        }
    }
    Verdict::same()
}

struct Iso<'a> {
    a: &'a EventNetwork,
    b: &'a EventNetwork,
    ev: BTreeMap<EventId, EventId>,
    used: BTreeSet<EventId>,
    act: BTreeMap<ActorId, ActorId>,
    act_used: BTreeSet<ActorId>,
}

impl Iso<'_> {
    fn search(&mut self, i: usize) -> bool {
        if i == self.a.events.len() {
            return true;
        }
        let ea = &self.a.events[i];
        let la = self.a.label(ea.target);
        let mapped_causes: Option<BTreeSet<EventId>> = ea.causes.iter().map(|c| self.ev.get(c).copied()).collect();
        let Some(mapped_causes) = mapped_causes else {
            return false;
        };
        let candidates: Vec<&Event> = self
            .b
            .events
            .iter()
            .filter(|eb| {
                !self.used.contains(&eb.id)
                    && eb.key == ea.key
                    && eb.causes == mapped_causes
                    && self.b.label(eb.target) == la
            })
            .collect();
        for eb in candidates {
            let fresh_actor = match self.act.get(&ea.target) {
                Some(t) if *t != eb.target => continue,
                Some(_) => false,
                None => {
                    if self.act_used.contains(&eb.target) {
                        continue;
                    }
                    true
                }
            };
            if fresh_actor {
                self.act.insert(ea.target, eb.target);
                self.act_used.insert(eb.target);
            }
            self.ev.insert(ea.id, eb.id);
            self.used.insert(eb.id);
            if self.search(i + 1) {
                return true;
            }
            self.ev.remove(&ea.id);
            self.used.remove(&eb.id);
            if fresh_actor {
                self.act.remove(&ea.target);
                self.act_used.remove(&eb.target);
            }
        }
        false
    }
}

fn signature(net: &EventNetwork) -> BTreeMap<(String, String), usize> {
    let mut m = BTreeMap::new();
    for e in &net.events {
        *m.entry((net.label(e.target), e.key.clone())).or_insert(0) += 1;
    }
    m
}

fn compare_renaming(a: &EventNetwork, b: &EventNetwork) -> Verdict {
    let sa = signature(a);
    let sb = signature(b);
    if sa != sb {
        let keys: BTreeSet<&(String, String)> = sa.keys().chain(sb.keys()).collect();
        for k in keys {
            let x = sa.get(k).copied().unwrap_or(0);
            let y = sb.get(k).copied().unwrap_or(0);
            if x != y {
                return Verdict::differ(format!("[{}] <= {}: {x} events vs {y}", k.0, k.1));
            }
        }
    }
    if edges_of(a).len() != edges_of(b).len() {
        return Verdict::differ(format!("{} causes edges vs {}", edges_of(a).len(), edges_of(b).len()));
    }
    let mut iso = Iso {
        a,
        b,
        ev: BTreeMap::new(),
        used: BTreeSet::new(),
        act: BTreeMap::new(),
        act_used: BTreeSet::new(),
    };
    if iso.search(0) {
        Verdict::same()
    } else {
        Verdict::differ("no actor renaming maps the causes structure of one network onto the other".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_net() -> EventNetwork {
        let mut net = EventNetwork::new();
        net.register_actor(
            ActorId(0),
            ActorInfo {
                label: "a".into(),
                behavior: "t".into(),
                created_by: None,
            },
        );
        let e0 = net
            .record(ActorId(0), "k", BTreeMap::new(), BTreeSet::new(), 0)
            .unwrap();
        let e1 = net
            .record(ActorId(0), "k", BTreeMap::new(), [e0].into_iter().collect(), 1)
            .unwrap();
        net.record(ActorId(0), "k", BTreeMap::new(), [e1].into_iter().collect(), 2)
            .unwrap();
        net
    }

    #[test]
    fn record_ids_and_forward_causes() {
        let mut net = EventNetwork::new();
        assert_eq!(net.record(ActorId(1), "k", BTreeMap::new(), BTreeSet::new(), 0), Ok(0));
        assert_eq!(net.events[0].causes, BTreeSet::new());
        assert_eq!(net.record(ActorId(1), "k", BTreeMap::new(), [0].into(), 0), Ok(1));
        assert!(matches!(
            net.record(ActorId(1), "k", BTreeMap::new(), [99].into(), 0),
            Err(EventsError::ForwardCause { cause: 99, .. })
        ));
    }

    #[test]
    fn closure_is_transitive() {
        let net = chain_net();
        let ord = causes_closure(&net);
        assert!(ord.leq(0, 2));
        assert!(ord.lt(0, 2));
        assert!(!ord.lt(2, 2));
        assert!(!ord.leq(2, 0));
        assert!(net.precedes_or_eq(0, 2));
        assert!(!net.precedes_or_eq(2, 0));
    }

    #[test]
    fn concurrent_siblings() {
        let mut net = EventNetwork::new();
        net.record(ActorId(0), "k", BTreeMap::new(), BTreeSet::new(), 0)
            .unwrap();
        net.record(ActorId(1), "k", BTreeMap::new(), [0].into(), 0).unwrap();
        net.record(ActorId(1), "k", BTreeMap::new(), [0].into(), 1).unwrap();
        let ord = causes_closure(&net);
        assert!(ord.concurrent(1, 2));
        assert!(!ord.concurrent(0, 2));
    }

    #[test]
    fn script_of_if_else() {
        let b = BehaviorDef {
            name: "t".into(),
            methods: vec![MethodDef {
                key: "m".into(),
                pre: None,
                body: Action::branch("c", Action::send("x", "k1"), Action::send("y", "k2")),
                post: None,
            }],
        };
        let s = derive_script(&b).unwrap();
        let pairs: Vec<(String, String)> = s["m"].iter().map(|e| (e.key.clone(), e.guard.clone())).collect();
        assert_eq!(pairs, [("k1".into(), "c".into()), ("k2".into(), "¬c".into())]);
    }

    #[test]
    fn no_send_gives_empty_script() {
        let b = BehaviorDef {
            name: "t".into(),
            methods: vec![MethodDef {
                key: "m".into(),
                pre: None,
                body: Action::seq(vec![Action::Create("x".into()), Action::Become("y".into())]),
                post: None,
            }],
        };
        assert!(derive_script(&b).unwrap()["m"].is_empty());
        let dup = BehaviorDef {
            name: "t".into(),
            methods: vec![b.methods[0].clone(), b.methods[0].clone()],
        };
        assert!(derive_script(&dup).is_err());
    }

    #[test]
    fn innermost_label_wins() {
        let body = Action::branch_labeled(
            "outer",
            Action::seq(vec![
                Action::when("inner", Action::send("x", "a")),
                Action::send("x", "b"),
            ]),
            "",
            Action::when("", Action::send("x", "c")),
        );
        let mut out = BTreeSet::new();
        collect_sends(&body, "", Origin::Computation, &mut out).unwrap();
        let got: Vec<(String, String)> = out.into_iter().map(|e| (e.key, e.guard)).collect();
        assert_eq!(
            got,
            [
                ("a".into(), "inner".into()),
                ("b".into(), "outer".into()),
                ("c".into(), String::new())
            ]
        );
    }

    #[test]
    fn self_loop_etn() {
        let b = BehaviorDef {
            name: "t".into(),
            methods: vec![MethodDef {
                key: "k".into(),
                pre: None,
                body: Action::send("self", "k"),
                post: None,
            }],
        };
        let etn = derive_etn(&[b]).unwrap();
        assert_eq!(etn.edges.len(), 1);
        assert!(etn.has_pair("k", "k"));
        assert!(derive_etn(&[]).unwrap().edges.is_empty());
    }

    #[test]
    fn send_removal() {
        let a = Action::seq(vec![Action::send("x", "a"), Action::when("c", Action::send("y", "b"))]);
        assert_eq!(a.send_count(), 2);
        assert_eq!(a.without_send(1).send_count(), 1);
        let b = BehaviorDef {
            name: "t".into(),
            methods: vec![
                MethodDef {
                    key: "m".into(),
                    pre: None,
                    body: a.clone(),
                    post: Some(Action::send("z", "c")),
                },
                MethodDef {
                    key: "n".into(),
                    pre: None,
                    body: a,
                    post: None,
                },
            ],
        };
        assert_eq!(b.send_count(), 5);
        for i in 0..5 {
            assert_eq!(b.without_send(i).send_count(), 4);
        }
    }

    #[test]
    fn validate_flags_unlicensed_edge_and_order() {
        let mut net = EventNetwork::new();
        net.record(ActorId(0), "receipt", BTreeMap::new(), BTreeSet::new(), 0)
            .unwrap();
        net.record(ActorId(0), "headFound", BTreeMap::new(), [0].into(), 0)
            .unwrap();
        let etn = EventTypeNetwork::default();
        let d = validate_trace(&net, &etn);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("edge not in ETN"));

        let mut etn = EventTypeNetwork::default();
        etn.edges.insert(EtnEdge {
            from: "receipt".into(),
            to: "headFound".into(),
            guard: String::new(),
            origin: Origin::Computation,
            plumbing: false,
        });
        assert!(validate_trace(&net, &etn).is_empty());
        net.events.swap(0, 1);
        assert!(!validate_trace(&net, &etn).is_empty());
    }

    #[test]
    fn exports_of_empty_network() {
        let net = EventNetwork::new();
        assert_eq!(export_jsonl(&net), "");
        assert_eq!(export_dot(&net), "digraph events {\n}\n");
    }

    #[test]
    fn jsonl_field_order() {
        let net = chain_net();
        let first = export_jsonl(&net).lines().nth(1).unwrap().to_string();
        assert_eq!(
            first,
            r#"{"causes":[0],"id":1,"key":"k","params":{},"stateVersion":1,"target":0}"#
        );
        assert!(export_dot(&net).contains("e1 [label=\"[a] <= k\"]"));
    }

    #[test]
    fn etn_dot_round_trip() {
        let mut etn = EventTypeNetwork::default();
        for (f, t, g, p, o) in [
            ("a", "b", "x & y", false, Origin::Computation),
            ("a", "a", "self is \"governed\"", false, Origin::Distribution),
            ("b", "c", "", true, Origin::Computation),
        ] {
            etn.nodes.insert(f.into());
            etn.nodes.insert(t.into());
            etn.edges.insert(EtnEdge {
                from: f.into(),
                to: t.into(),
                guard: g.into(),
                origin: o,
                plumbing: p,
            });
        }
        let back = parse_etn_dot(&export_etn_dot(&etn)).unwrap();
        assert_eq!(back, etn);
        assert!(compare_etn_core(&back, &etn).is_empty());
    }

    #[test]
    fn comparison_names_the_edge() {
        let a = chain_net();
        assert!(compare_networks(&a, &a, CompareMode::Exact).equal);
        assert!(compare_networks(&a, &a, CompareMode::UpToRenaming).equal);
        let mut b = a.clone();
        b.events[2].causes = [0].into();
        let v = compare_networks(&a, &b, CompareMode::Exact);
        assert!(!v.equal);
        assert!(v.difference.unwrap().contains("1 -> 2"));
        assert!(!compare_networks(&a, &b, CompareMode::UpToRenaming).equal);
    }

    #[test]
    fn renaming_ignores_actor_ids() {
        let mut a = EventNetwork::new();
        let mut b = EventNetwork::new();
        for (net, ids) in [(&mut a, [3, 4]), (&mut b, [9, 7])] {
            for (i, label) in ids.iter().zip(["x", "y"]) {
                net.register_actor(
                    ActorId(*i),
                    ActorInfo {
                        label: label.into(),
                        behavior: "t".into(),
                        created_by: None,
                    },
                );
            }
            net.record(ActorId(ids[0]), "k", BTreeMap::new(), BTreeSet::new(), 0)
                .unwrap();
            net.record(ActorId(ids[1]), "m", BTreeMap::new(), [0].into(), 0)
                .unwrap();
        }
        assert!(!compare_networks(&a, &b, CompareMode::Exact).equal);
        assert!(compare_networks(&a, &b, CompareMode::UpToRenaming).equal);
    }
}
