//! Serialized actors exchanging asynchronous messages under a seeded
//! scheduler.
//!
//! Every delivery is one event: pre-distribution, computation and
//! post-distribution run back to back on the target actor, and every message
//! posted during the event names that event as its cause. Sends are buffered
//! and become visible only when the event commits.
//!
//! Actors belong to a world (one reading of the input). The runtime can clone
//! a set of actors of one world into a fresh world together with the
//! messages in flight to them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::events::{ActorId, ActorInfo, EventId, EventNetwork, RequestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct World(pub u32);

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

pub type EnvelopeId = u64;

#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub id: EnvelopeId,
    pub sender: Option<ActorId>,
    pub msg: M,
}

pub trait Message: Clone + Send + Sync + fmt::Debug {
    fn key(&self) -> &'static str;
    fn params(&self) -> BTreeMap<String, String>;
    /// World the message belongs to; messages without a world are never
    /// duplicated by a fork.
    fn world(&self) -> Option<World>;
    fn actor_refs(&self) -> Vec<ActorId>;
    fn remap(&mut self, actors: &BTreeMap<ActorId, ActorId>, from: World, to: World);
}

pub trait Actor: Clone + PartialEq + Send + Sync + fmt::Debug + Sized {
    type Msg: Message;
    type Services: Send + Sync;
    type Outcome;

    fn behavior(&self) -> &'static str;
    fn label(&self) -> String;
    fn world(&self) -> Option<World>;

    /// Selective receive: envelopes the actor does not accept stay pending.
    fn accepts(&self, _msg: &Self::Msg) -> bool {
        true
    }

    /// Events that must run alone (they create worlds or clone actors).
    fn exclusive(&self, _msg: &Self::Msg) -> bool {
        false
    }

    fn pre_distribute(&self, _env: &Envelope<Self::Msg>, _ctx: &mut Ctx<'_, Self>) -> Result<(), ActorError> {
        Ok(())
    }

    fn compute(&mut self, env: &Envelope<Self::Msg>, ctx: &mut Ctx<'_, Self>) -> Result<Self::Outcome, ActorError>;

    fn post_distribute(
        &self,
        _env: &Envelope<Self::Msg>,
        _outcome: &Self::Outcome,
        _ctx: &mut Ctx<'_, Self>,
    ) -> Result<(), ActorError> {
        Ok(())
    }

    fn remap(&mut self, actors: &BTreeMap<ActorId, ActorId>, from: World, to: World);
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActorError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown behavior {0}")]
    UnknownBehavior(String),
    #[error("unknown actor {0}")]
    UnknownActor(ActorId),
    #[error("{0}")]
    Fork(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("event {event} ([{label}] <= {key}) failed: {error}")]
    Handler {
        event: EventId,
        label: String,
        key: String,
        error: ActorError,
    },
    #[error("step ceiling {0} exceeded")]
    StepCeiling(usize),
    #[error("deadlock: {0} envelopes pending, none deliverable")]
    Deadlock(usize),
    #[error("unknown target {0}")]
    UnknownTarget(ActorId),
    #[error("unknown behavior {0}")]
    UnknownBehavior(String),
    #[error("service request outside a computation event")]
    RequestOutsideEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub seed: u64,
    pub step_ceiling: usize,
    pub mode: Mode,
    pub log_requests: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            seed: 0,
            step_ceiling: 100_000,
            mode: Mode::Sequential,
            log_requests: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Pending<M> {
    target: ActorId,
    env: Envelope<M>,
    cause: Option<EventId>,
}

struct Outgoing<M> {
    sender: ActorId,
    target: ActorId,
    msg: M,
}

struct Core<A: Actor> {
    /// `None` while the actor is executing an event.
    actors: BTreeMap<ActorId, Option<A>>,
    worlds_of: BTreeMap<ActorId, Option<World>>,
    versions: BTreeMap<ActorId, u64>,
    pending: Vec<Pending<A::Msg>>,
    net: EventNetwork,
    next_actor: u32,
    next_envelope: EnvelopeId,
    world_parents: Vec<Option<World>>,
    behaviors: BTreeSet<String>,
}

impl<A: Actor> Core<A> {
    fn insert_actor(&mut self, actor: A, created_by: Option<EventId>) -> Result<ActorId, ActorError> {
        self.insert_actor_with(|_| actor, created_by)
    }

    fn insert_actor_with(
        &mut self,
        build: impl FnOnce(ActorId) -> A,
        created_by: Option<EventId>,
    ) -> Result<ActorId, ActorError> {
        let id = ActorId(self.next_actor);
        let actor = build(id);
        if !self.behaviors.contains(actor.behavior()) {
            return Err(ActorError::UnknownBehavior(actor.behavior().to_string()));
        }
        self.next_actor += 1;
        self.net.register_actor(
            id,
            ActorInfo {
                label: actor.label(),
                behavior: actor.behavior().to_string(),
                created_by,
            },
        );
        self.worlds_of.insert(id, actor.world());
        self.versions.insert(id, 0);
        self.actors.insert(id, Some(actor));
        Ok(id)
    }

    fn new_world(&mut self, parent: Option<World>) -> World {
        let w = World(self.world_parents.len() as u32);
        self.world_parents.push(parent);
        w
    }

    fn enqueue(&mut self, target: ActorId, sender: Option<ActorId>, msg: A::Msg, cause: Option<EventId>) -> EnvelopeId {
        let id = self.next_envelope;
        self.next_envelope += 1;
        self.pending.push(Pending {
            target,
            env: Envelope { id, sender, msg },
            cause,
        });
        id
    }

    fn fork_world(
        &mut self,
        from: World,
        to: World,
        select: &dyn Fn(&A) -> bool,
        branch: Option<EventId>,
        created_by: EventId,
    ) -> Result<BTreeMap<ActorId, ActorId>, ActorError> {
        let mut chosen = Vec::new();
        for (id, slot) in &self.actors {
            if self.worlds_of.get(id).copied().flatten() != Some(from) {
                continue;
            }
            match slot {
                Some(a) if select(a) => chosen.push(*id),
                Some(_) => {}
                None => {
                    // the executing actor is never part of its own fork
                }
            }
        }
        if let Some(b) = branch {
            for e in &self.net.events {
                if chosen.contains(&e.target) && self.net.precedes_or_eq(b, e.id) {
                    return Err(ActorError::Fork(format!(
                        "unsupported fork configuration: {} already processed event {} after branch {b}",
                        self.net.label(e.target),
                        e.id
                    )));
                }
            }
        }
        let mut map = BTreeMap::new();
        for id in &chosen {
            let fresh = ActorId(self.next_actor + map.len() as u32);
            map.insert(*id, fresh);
        }
        self.next_actor += map.len() as u32;
        for (old, new) in &map {
            let mut a = self.actors[old].clone().expect("chosen actors are idle");
            a.remap(&map, from, to);
            self.net.register_actor(
                *new,
                ActorInfo {
                    label: a.label(),
                    behavior: a.behavior().to_string(),
                    created_by: Some(created_by),
                },
            );
            self.worlds_of.insert(*new, a.world());
            self.versions.insert(*new, 0);
            self.actors.insert(*new, Some(a));
        }
        let snapshot: Vec<Pending<A::Msg>> = self.pending.clone();
        for p in snapshot {
            if p.env.msg.world() != Some(from) || !map.contains_key(&p.target) {
                continue;
            }
            if let (Some(b), Some(c)) = (branch, p.cause) {
                if self.net.precedes_or_eq(b, c) {
                    continue;
                }
            }
            for r in p.env.msg.actor_refs() {
                let same_world = self.worlds_of.get(&r).copied().flatten() == Some(from);
                if same_world && !map.contains_key(&r) {
                    return Err(ActorError::Fork(format!(
                        "unsupported fork configuration: in-flight {} refers to {} outside the cloned set",
                        p.env.msg.key(),
                        self.net.label(r)
                    )));
                }
            }
            let mut msg = p.env.msg.clone();
            msg.remap(&map, from, to);
            let sender = p.env.sender.map(|s| map.get(&s).copied().unwrap_or(s));
            let target = map[&p.target];
            self.enqueue(target, sender, msg, p.cause);
        }
        Ok(map)
    }
}

enum CoreRef<'a, A: Actor> {
    Exclusive(&'a mut Core<A>),
    Shared(&'a Mutex<Core<A>>),
}

/// What a handler may do during its event.
pub struct Ctx<'a, A: Actor> {
    me: ActorId,
    event: EventId,
    core: CoreRef<'a, A>,
    services: &'a A::Services,
    out: Vec<Outgoing<A::Msg>>,
    requests: Vec<RequestRecord>,
    log_requests: bool,
}

impl<'a, A: Actor> Ctx<'a, A> {
    fn with_core<R>(&mut self, f: impl FnOnce(&mut Core<A>) -> R) -> R {
        match &mut self.core {
            CoreRef::Exclusive(c) => f(c),
            CoreRef::Shared(m) => f(&mut m.lock().expect("core lock")),
        }
    }

    pub fn me(&self) -> ActorId {
        self.me
    }

    pub fn event(&self) -> EventId {
        self.event
    }

    pub fn post(&mut self, target: ActorId, msg: A::Msg) {
        let sender = self.me;
        self.out.push(Outgoing { sender, target, msg });
    }

    /// Post on behalf of an actor created in this event.
    pub fn post_as(&mut self, sender: ActorId, target: ActorId, msg: A::Msg) {
        self.out.push(Outgoing { sender, target, msg });
    }

    pub fn spawn(&mut self, actor: A) -> Result<ActorId, ActorError> {
        let event = self.event;
        self.with_core(|c| c.insert_actor(actor, Some(event)))
    }

    /// Spawn an actor whose initial state depends on its own id.
    pub fn spawn_with(&mut self, build: impl FnOnce(ActorId) -> A) -> Result<ActorId, ActorError> {
        let event = self.event;
        self.with_core(|c| c.insert_actor_with(build, Some(event)))
    }

    pub fn new_world(&mut self, parent: Option<World>) -> World {
        self.with_core(|c| c.new_world(parent))
    }

    /// Synchronous call of a pure service. Only reachable through the
    /// context of a running event.
    pub fn request<R>(
        &mut self,
        service: &str,
        detail: impl FnOnce() -> String,
        f: impl FnOnce(&A::Services) -> R,
    ) -> R {
        if self.log_requests {
            self.requests.push(RequestRecord {
                event: self.event,
                service: service.to_string(),
                detail: detail(),
            });
        }
        f(self.services)
    }

    pub fn services(&self) -> &A::Services {
        self.services
    }

    /// `a` happened before or is `b` in the network recorded so far.
    pub fn precedes_or_eq(&mut self, a: EventId, b: EventId) -> bool {
        self.with_core(|c| c.net.precedes_or_eq(a, b))
    }

    /// Clones the idle actors of world `from` accepted by `select` into
    /// world `to`, with the envelopes in flight to them. With a branch
    /// event, envelopes caused after the branch are left behind and actors
    /// that already processed such envelopes make the fork fail.
    pub fn fork_world(
        &mut self,
        from: World,
        to: World,
        select: &dyn Fn(&A) -> bool,
        branch: Option<EventId>,
    ) -> Result<BTreeMap<ActorId, ActorId>, ActorError> {
        let event = self.event;
        match &mut self.core {
            CoreRef::Exclusive(c) => c.fork_world(from, to, select, branch, event),
            CoreRef::Shared(_) => Err(ActorError::Fork("fork requested in a non-exclusive event".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub events: usize,
}

struct Executed<A: Actor> {
    event: EventId,
    pending: Pending<A::Msg>,
    before: A,
    result: Result<A, ActorError>,
    out: Vec<Outgoing<A::Msg>>,
    requests: Vec<RequestRecord>,
}

pub struct System<A: Actor> {
    core: Core<A>,
    services: A::Services,
    rng: ChaCha8Rng,
    config: SystemConfig,
    steps: usize,
}

/// Handler result, the messages it posted and the service requests it made.
type HandlerOutput<A> = (
    Result<A, ActorError>,
    Vec<Outgoing<<A as Actor>::Msg>>,
    Vec<RequestRecord>,
);

fn execute<A: Actor>(
    mut actor: A,
    target: ActorId,
    event: EventId,
    pending: &Pending<A::Msg>,
    core: CoreRef<'_, A>,
    services: &A::Services,
    log_requests: bool,
) -> HandlerOutput<A> {
    let mut ctx = Ctx {
        me: target,
        event,
        core,
        services,
        out: Vec::new(),
        requests: Vec::new(),
        log_requests,
    };
    let res = (|| {
        actor.pre_distribute(&pending.env, &mut ctx)?;
        let outcome = actor.compute(&pending.env, &mut ctx)?;
        actor.post_distribute(&pending.env, &outcome, &mut ctx)?;
        Ok(())
    })();
    let out = std::mem::take(&mut ctx.out);
    let requests = std::mem::take(&mut ctx.requests);
    (res.map(|_| actor), out, requests)
}

impl<A: Actor> System<A> {
    pub fn new(behaviors: &[&str], services: A::Services, config: SystemConfig) -> Self {
        System {
            core: Core {
                actors: BTreeMap::new(),
                worlds_of: BTreeMap::new(),
                versions: BTreeMap::new(),
                pending: Vec::new(),
                net: EventNetwork::new(),
                next_actor: 0,
                next_envelope: 0,
                world_parents: Vec::new(),
                behaviors: behaviors.iter().map(|s| s.to_string()).collect(),
            },
            services,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            steps: 0,
        }
    }

    pub fn spawn(&mut self, actor: A) -> Result<ActorId, RunError> {
        self.core.insert_actor(actor, None).map_err(|e| match e {
            ActorError::UnknownBehavior(b) => RunError::UnknownBehavior(b),
            other => RunError::Handler {
                event: 0,
                label: String::new(),
                key: String::new(),
                error: other,
            },
        })
    }

    pub fn new_world(&mut self, parent: Option<World>) -> World {
        self.core.new_world(parent)
    }

    pub fn world_parent(&self, w: World) -> Option<World> {
        self.core.world_parents.get(w.0 as usize).copied().flatten()
    }

    pub fn world_count(&self) -> usize {
        self.core.world_parents.len()
    }

    /// Enqueue a message from outside any actor.
    pub fn post(
        &mut self,
        target: ActorId,
        sender: Option<ActorId>,
        msg: A::Msg,
        cause: Option<EventId>,
    ) -> Result<EnvelopeId, RunError> {
        if !self.core.actors.contains_key(&target) {
            return Err(RunError::UnknownTarget(target));
        }
        if let Some(c) = cause {
            if c >= self.core.net.len() {
                return Err(RunError::UnknownTarget(target));
            }
        }
        Ok(self.core.enqueue(target, sender, msg, cause))
    }

    /// Services can only be called from inside an event.
    pub fn request<R>(&self, _service: &str, _f: impl FnOnce(&A::Services) -> R) -> Result<R, RunError> {
        Err(RunError::RequestOutsideEvent)
    }

    pub fn network(&self) -> &EventNetwork {
        &self.core.net
    }

    pub fn into_network(self) -> EventNetwork {
        self.core.net
    }

    pub fn actor(&self, id: ActorId) -> Option<&A> {
        self.core.actors.get(&id).and_then(|a| a.as_ref())
    }

    pub fn actors(&self) -> impl Iterator<Item = (ActorId, &A)> {
        self.core
            .actors
            .iter()
            .filter_map(|(id, a)| a.as_ref().map(|a| (*id, a)))
    }

    pub fn pending_count(&self) -> usize {
        self.core.pending.len()
    }

    pub fn services(&self) -> &A::Services {
        &self.services
    }

    fn deliverable(&self) -> Vec<usize> {
        self.core
            .pending
            .iter()
            .enumerate()
            .filter(|(_, p)| match self.core.actors.get(&p.target) {
                Some(Some(a)) => a.accepts(&p.env.msg),
                _ => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn commit(&mut self, ex: Executed<A>) -> Result<(), RunError> {
        let target = ex.pending.target;
        let key = ex.pending.env.msg.key();
        let actor = match ex.result {
            Ok(a) => a,
            Err(error) => {
                let label = self.core.net.label(target);
                self.core.actors.insert(target, Some(ex.before));
                return Err(RunError::Handler {
                    event: ex.event,
                    label,
                    key: key.to_string(),
                    error,
                });
            }
        };
        let version = self.core.versions.get(&target).copied().unwrap_or(0);
        if actor != ex.before {
            self.core.versions.insert(target, version + 1);
        }
        let causes: BTreeSet<EventId> = ex.pending.cause.into_iter().collect();
        let id = self
            .core
            .net
            .record(target, key, ex.pending.env.msg.params(), causes, version)
            .expect("causes precede the event");
        debug_assert_eq!(id, ex.event);
        self.core.actors.insert(target, Some(actor));
        self.core.net.requests.extend(ex.requests);
        for o in ex.out {
            if !self.core.actors.contains_key(&o.target) {
                return Err(RunError::Handler {
                    event: id,
                    label: self.core.net.label(target),
                    key: key.to_string(),
                    error: ActorError::UnknownActor(o.target),
                });
            }
            self.core.enqueue(o.target, Some(o.sender), o.msg, Some(id));
        }
        Ok(())
    }

    fn run_one(&mut self, idx: usize) -> Result<EventId, RunError> {
        let pending = self.core.pending.remove(idx);
        let target = pending.target;
        let actor = self
            .core
            .actors
            .get_mut(&target)
            .and_then(Option::take)
            .ok_or(RunError::UnknownTarget(target))?;
        let event = self.core.net.len();
        let before = actor.clone();
        let (result, out, requests) = execute(
            actor,
            target,
            event,
            &pending,
            CoreRef::Exclusive(&mut self.core),
            &self.services,
            self.config.log_requests,
        );
        self.commit(Executed {
            event,
            pending,
            before,
            result,
            out,
            requests,
        })?;
        Ok(event)
    }

    /// Delivers one uniformly chosen deliverable envelope. `Ok(None)` at
    /// quiescence.
    pub fn deliver_next(&mut self) -> Result<Option<EventId>, RunError> {
        let candidates = self.deliverable();
        if candidates.is_empty() {
            if self.core.pending.is_empty() {
                return Ok(None);
            }
            return Err(RunError::Deadlock(self.core.pending.len()));
        }
        if self.steps >= self.config.step_ceiling {
            return Err(RunError::StepCeiling(self.config.step_ceiling));
        }
        self.steps += 1;
        let pick = candidates[self.rng.gen_range(0..candidates.len())];
        self.run_one(pick).map(Some)
    }

    fn deliver_batch(&mut self) -> Result<usize, RunError>
    where
        A::Services: Sync,
    {
        let mut candidates = self.deliverable();
        if candidates.is_empty() {
            if self.core.pending.is_empty() {
                return Ok(0);
            }
            return Err(RunError::Deadlock(self.core.pending.len()));
        }
        // random order, then greedily one envelope per target
        for i in (1..candidates.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            candidates.swap(i, j);
        }
        let first = candidates[0];
        let is_exclusive = |s: &Self, i: usize| {
            let p = &s.core.pending[i];
            s.core.actors[&p.target]
                .as_ref()
                .map(|a| a.exclusive(&p.env.msg))
                .unwrap_or(true)
        };
        if is_exclusive(self, first) {
            if self.steps >= self.config.step_ceiling {
                return Err(RunError::StepCeiling(self.config.step_ceiling));
            }
            self.steps += 1;
            self.run_one(first)?;
            return Ok(1);
        }
        let mut batch = Vec::new();
        let mut targets = BTreeSet::new();
        for &i in &candidates {
            if is_exclusive(self, i) {
                continue;
            }
            if targets.insert(self.core.pending[i].target) {
                batch.push(i);
            }
        }
        if self.steps + batch.len() > self.config.step_ceiling {
            return Err(RunError::StepCeiling(self.config.step_ceiling));
        }
        self.steps += batch.len();
        // take envelopes out, highest index first so indices stay valid
        let mut order: Vec<usize> = batch.clone();
        order.sort_unstable_by(|a, b| b.cmp(a));
        let mut taken: BTreeMap<usize, Pending<A::Msg>> = BTreeMap::new();
        for i in order {
            taken.insert(i, self.core.pending.remove(i));
        }
        let base = self.core.net.len();
        let mut jobs = Vec::new();
        for (n, i) in batch.iter().enumerate() {
            let p = taken.remove(i).expect("taken");
            let actor = self
                .core
                .actors
                .get_mut(&p.target)
                .and_then(Option::take)
                .expect("deliverable target is idle");
            jobs.push((base + n, p, actor));
        }
        let log = self.config.log_requests;
        let services = &self.services;
        let shared = Mutex::new(std::mem::replace(
            &mut self.core,
            Core {
                actors: BTreeMap::new(),
                worlds_of: BTreeMap::new(),
                versions: BTreeMap::new(),
                pending: Vec::new(),
                net: EventNetwork::new(),
                next_actor: 0,
                next_envelope: 0,
                world_parents: Vec::new(),
                behaviors: BTreeSet::new(),
            },
        ));
        let results: Vec<Executed<A>> = jobs
            .into_par_iter()
            .map(|(event, pending, actor)| {
                let before = actor.clone();
                let (result, out, requests) = execute(
                    actor,
                    pending.target,
                    event,
                    &pending,
                    CoreRef::Shared(&shared),
                    services,
                    log,
                );
                Executed {
                    event,
                    pending,
                    before,
                    result,
                    out,
                    requests,
                }
            })
            .collect();
        self.core = shared.into_inner().expect("core lock");
        let n = results.len();
        for ex in results {
            self.commit(ex)?;
        }
        Ok(n)
    }

    pub fn run_to_quiescence(&mut self) -> Result<RunSummary, RunError> {
        match self.config.mode {
            Mode::Sequential => while self.deliver_next()?.is_some() {},
            Mode::Parallel => while self.deliver_batch()? > 0 {},
        }
        Ok(RunSummary {
            events: self.core.net.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Ping {
        Hop(u32),
        Boom,
        Spawn,
        Hold,
        Release,
    }

    impl Message for Ping {
        fn key(&self) -> &'static str {
            match self {
                Ping::Hop(_) => "hop",
                Ping::Boom => "boom",
                Ping::Spawn => "spawn",
                Ping::Hold => "hold",
                Ping::Release => "release",
            }
        }
        fn params(&self) -> BTreeMap<String, String> {
            let mut m = BTreeMap::new();
            if let Ping::Hop(n) = self {
                m.insert("n".into(), n.to_string());
            }
            m
        }
        fn world(&self) -> Option<World> {
            Some(World(0))
        }
        fn actor_refs(&self) -> Vec<ActorId> {
            Vec::new()
        }
        fn remap(&mut self, _: &BTreeMap<ActorId, ActorId>, _: World, _: World) {}
    }

    #[derive(Debug, Clone, PartialEq)]
    struct Node {
        peer: Option<ActorId>,
        count: u32,
        released: bool,
        world: World,
    }

    impl Actor for Node {
        type Msg = Ping;
        type Services = u32;
        type Outcome = ();

        fn behavior(&self) -> &'static str {
            "node"
        }
        fn label(&self) -> String {
            "node".into()
        }
        fn world(&self) -> Option<World> {
            Some(self.world)
        }
        fn accepts(&self, msg: &Ping) -> bool {
            !matches!(msg, Ping::Hold) || self.released
        }
        fn compute(&mut self, env: &Envelope<Ping>, ctx: &mut Ctx<'_, Self>) -> Result<(), ActorError> {
            match env.msg {
                Ping::Hop(n) => {
                    self.count += ctx.request("bump", String::new, |s| *s);
                    if n > 0 {
                        if let Some(p) = self.peer {
                            ctx.post(p, Ping::Hop(n - 1));
                        }
                    }
                }
                Ping::Boom => {
                    self.count = 999;
                    return Err(ActorError::Protocol("boom".into()));
                }
                Ping::Spawn => {
                    let child = ctx.spawn(Node {
                        peer: None,
                        count: 0,
                        released: false,
                        world: self.world,
                    })?;
                    ctx.post(child, Ping::Hop(0));
                }
                Ping::Hold => {}
                Ping::Release => self.released = true,
            }
            Ok(())
        }
        fn remap(&mut self, map: &BTreeMap<ActorId, ActorId>, _: World, to: World) {
            self.peer = self.peer.map(|p| map.get(&p).copied().unwrap_or(p));
            self.world = to;
        }
    }

    fn node() -> Node {
        Node {
            peer: None,
            count: 0,
            released: false,
            world: World(0),
        }
    }

    fn pair(seed: u64, mode: Mode) -> (System<Node>, ActorId, ActorId) {
        let mut sys = System::new(
            &["node"],
            1,
            SystemConfig {
                seed,
                mode,
                ..SystemConfig::default()
            },
        );
        let a = sys.spawn(node()).unwrap();
        let b = sys
            .spawn(Node {
                peer: Some(a),
                ..node()
            })
            .unwrap();
        sys.core.actors.get_mut(&a).unwrap().as_mut().unwrap().peer = Some(b);
        (sys, a, b)
    }

    #[test]
    fn ping_pong_chain() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Hop(3), None).unwrap();
        sys.run_to_quiescence().unwrap();
        let net = sys.network();
        assert_eq!(net.len(), 4);
        for (i, e) in net.events.iter().enumerate().skip(1) {
            assert_eq!(e.causes, [i - 1].into());
        }
        assert_eq!(net.events[2].state_version, 1);
    }

    #[test]
    fn unknown_target_and_behavior() {
        let (mut sys, _, _) = pair(0, Mode::Sequential);
        assert_eq!(
            sys.post(ActorId(42), None, Ping::Hop(0), None),
            Err(RunError::UnknownTarget(ActorId(42)))
        );
        let mut other: System<Node> = System::new(&["scanner"], 1, SystemConfig::default());
        assert!(matches!(other.spawn(node()), Err(RunError::UnknownBehavior(_))));
    }

    #[test]
    fn handler_failure_restores_state() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Boom, None).unwrap();
        let err = sys.run_to_quiescence().unwrap_err();
        assert!(matches!(err, RunError::Handler { event: 0, .. }));
        assert_eq!(sys.actor(a).unwrap().count, 0);
    }

    #[test]
    fn spawn_is_caused_by_the_event() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Spawn, None).unwrap();
        sys.run_to_quiescence().unwrap();
        let net = sys.network();
        let child = ActorId(2);
        assert_eq!(net.actors[&child].created_by, Some(0));
        assert!(net
            .events
            .iter()
            .filter(|e| e.target == child)
            .all(|e| net.precedes_or_eq(0, e.id)));
    }

    #[test]
    fn selective_receive_and_deadlock() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Hold, None).unwrap();
        assert_eq!(sys.run_to_quiescence(), Err(RunError::Deadlock(1)));
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Hold, None).unwrap();
        sys.post(a, None, Ping::Release, None).unwrap();
        sys.run_to_quiescence().unwrap();
        let keys: Vec<&str> = sys.network().events.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, ["release", "hold"]);
    }

    #[test]
    fn step_ceiling() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.config.step_ceiling = 5;
        sys.post(a, None, Ping::Hop(100), None).unwrap();
        assert_eq!(sys.run_to_quiescence(), Err(RunError::StepCeiling(5)));
    }

    #[test]
    fn request_outside_event_is_rejected() {
        let (sys, _, _) = pair(0, Mode::Sequential);
        assert_eq!(sys.request("bump", |s| *s), Err(RunError::RequestOutsideEvent));
    }

    #[test]
    fn deterministic_per_seed() {
        let run = |seed| {
            let (mut sys, a, b) = pair(seed, Mode::Sequential);
            for _ in 0..5 {
                sys.post(a, None, Ping::Hop(2), None).unwrap();
                sys.post(b, None, Ping::Hop(1), None).unwrap();
            }
            sys.run_to_quiescence().unwrap();
            sys.into_network()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(
            crate::events::export_jsonl(&run(1)),
            crate::events::export_jsonl(&run(2))
        );
    }

    #[test]
    fn parallel_mode_emits_a_linearization() {
        let (mut sys, a, b) = pair(3, Mode::Parallel);
        for _ in 0..10 {
            sys.post(a, None, Ping::Hop(4), None).unwrap();
            sys.post(b, None, Ping::Hop(4), None).unwrap();
        }
        sys.run_to_quiescence().unwrap();
        let net = sys.network();
        assert_eq!(net.len(), 100);
        for e in &net.events {
            assert!(e.causes.iter().all(|c| *c < e.id));
        }
        assert_eq!(sys.actor(a).unwrap().count + sys.actor(b).unwrap().count, 100);
    }

    #[test]
    fn fork_clones_actors_and_in_flight_messages() {
        let (mut sys, a, _) = pair(0, Mode::Sequential);
        sys.post(a, None, Ping::Hop(0), None).unwrap();
        let to = sys.new_world(Some(World(0)));
        let map = sys.core.fork_world(World(0), to, &|_| true, None, 0).unwrap();
        assert_eq!(map.len(), 2);
        let a2 = map[&a];
        assert_eq!(sys.actor(a2).unwrap().world, to);
        assert_eq!(sys.actor(a2).unwrap().peer, Some(map[&ActorId(1)]));
        assert_eq!(sys.pending_count(), 2);
    }
}
