use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::message::{AcceptKind, EpisodeRef, Frontier, LedgerKey, Msg, Phrase, Profile, ReceiptNote};
use super::{check_valency, HeadView, Node, Outcome};
use crate::actor::{ActorError, Ctx, World};
use crate::events::{ActorId, EventId};
use crate::features::FeatureStructure;
use crate::lexicon::{Direction, ResolvedEntry, ValencyDef};

type NodeCtx<'a, 'b> = &'a mut Ctx<'b, Node>;

fn violation(msg: impl Into<String>) -> ActorError {
    ActorError::Protocol(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Deferring,
    Seeking,
    Governed,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fill {
    pub modifier: ActorId,
    /// Event in which the dependency was established.
    pub event: EventId,
    pub constraints: FeatureStructure,
    pub contribution: FeatureStructure,
    pub concept: Option<String>,
    pub span_start: usize,
    pub left_of_span: Option<ActorId>,
    pub rightmost: (usize, ActorId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotState {
    Empty,
    /// A copy waiting for the copy of the original modifier.
    Awaiting(Fill),
    Filled(Fill),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLink {
    pub actor: ActorId,
    pub slot: String,
}

/// Receipt bookkeeping of one search episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    pub episode: EpisodeRef,
    pub expected: BTreeSet<LedgerKey>,
    pub received: BTreeSet<LedgerKey>,
    pub forks: Vec<Frontier>,
    pub delegated: bool,
    pub delegated_forks: usize,
}

/// An offer whose receipt is withheld until the candidate answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldOffer {
    pub candidate: ActorId,
    pub slot: usize,
    pub episode: EpisodeRef,
    pub ledger_key: LedgerKey,
    pub forwarded_to: Vec<ActorId>,
    pub constraints: FeatureStructure,
    pub contribution: FeatureStructure,
    pub via_copy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyState {
    /// The head of the copy will announce itself with headFound.
    pub awaiting_head: bool,
    /// Set on the topmost copy, which reports the new reading.
    pub report: Option<EpisodeRef>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordActor {
    pub me: ActorId,
    pub surface: String,
    pub position: usize,
    pub world: World,
    pub entry: Arc<ResolvedEntry>,
    pub features: FeatureStructure,
    /// Every narrowing of the lexical features with the event that caused it.
    pub imposed: Vec<(EventId, FeatureStructure)>,
    pub slots: Vec<SlotState>,
    pub head: Option<HeadLink>,
    pub left_neighbor: Option<ActorId>,
    pub left_of_span: Option<ActorId>,
    pub span_start: usize,
    pub rightmost: (usize, ActorId),
    pub scanner: ActorId,
    pub phase: Phase,
    pub ledger: Option<Ledger>,
    pub episodes: u32,
    pub held: Vec<HeldOffer>,
    pub accepted_at: Option<EventId>,
    pub copy: Option<CopyState>,
    /// The frontier of this reading is reported by someone else.
    pub silent: bool,
}

impl WordActor {
    pub fn new(
        me: ActorId,
        entry: Arc<ResolvedEntry>,
        position: usize,
        world: World,
        left_neighbor: Option<ActorId>,
        scanner: ActorId,
    ) -> Self {
        WordActor {
            me,
            surface: entry.surface.clone(),
            position,
            world,
            features: entry.features.clone(),
            imposed: Vec::new(),
            slots: vec![SlotState::Empty; entry.valencies.len()],
            entry,
            head: None,
            left_neighbor,
            left_of_span: left_neighbor,
            span_start: position,
            rightmost: (position, me),
            scanner,
            phase: Phase::Root,
            ledger: None,
            episodes: 0,
            held: Vec::new(),
            accepted_at: None,
            copy: None,
            silent: false,
        }
    }

    pub fn word_class(&self) -> &str {
        &self.entry.word_class
    }

    pub fn valency(&self, i: usize) -> &ValencyDef {
        &self.entry.valencies[i]
    }

    fn slot_index(&self, name: &str) -> Option<usize> {
        self.entry.valencies.iter().position(|v| v.name == name)
    }

    /// Modifiers with the label of the slot they fill.
    pub fn modifiers(&self) -> Vec<(String, ActorId)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                SlotState::Filled(f) => Some((self.valency(i).name.clone(), f.modifier)),
                _ => None,
            })
            .collect()
    }

    /// Lexical concept, or for words without one (prepositions) the concept
    /// of the first mandatory dependent.
    pub fn concept(&self) -> Option<String> {
        if let Some(c) = &self.entry.concept {
            return Some(c.clone());
        }
        self.slots.iter().enumerate().find_map(|(i, s)| match s {
            SlotState::Filled(f) | SlotState::Awaiting(f) if self.valency(i).is_mandatory() => f.concept.clone(),
            _ => None,
        })
    }

    pub fn needs_right(&self) -> bool {
        self.slots.iter().enumerate().any(|(i, s)| {
            let v = self.valency(i);
            matches!(s, SlotState::Empty) && v.is_mandatory() && v.direction == Direction::Right
        })
    }

    pub fn mandatory_filled(&self) -> bool {
        self.slots
            .iter()
            .enumerate()
            .all(|(i, s)| !self.valency(i).is_mandatory() || matches!(s, SlotState::Filled(_)))
    }

    fn open_slots(&self) -> Vec<&ValencyDef> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, SlotState::Empty))
            .map(|(i, _)| self.valency(i))
            .collect()
    }

    pub fn profile(&self) -> Profile {
        Profile {
            actor: self.me,
            surface: self.surface.clone(),
            position: self.position,
            span_start: self.span_start,
            word_class: self.entry.word_class.clone(),
            features: self.features.clone(),
            concept: self.concept(),
            open_slots: self.open_slots().into_iter().cloned().collect(),
        }
    }

    fn phrase(&self, contribution: FeatureStructure) -> Phrase {
        Phrase {
            contribution,
            concept: self.concept(),
            span_start: self.span_start,
            left_of_span: self.left_of_span,
            rightmost: self.rightmost,
        }
    }

    fn narrow(&mut self, fs: &FeatureStructure, event: EventId) -> Result<(), ActorError> {
        self.features = self.features.unify(fs).ok_or_else(|| {
            violation(format!(
                "features of {} do not unify with {}",
                self.surface,
                crate::features::render_fs(fs)
            ))
        })?;
        self.imposed.push((event, fs.clone()));
        Ok(())
    }

    fn fill(&mut self, idx: usize, fill: Fill) -> Result<(), ActorError> {
        self.narrow(&fill.contribution.clone(), fill.event)?;
        if fill.rightmost.0 > self.rightmost.0 {
            self.rightmost = fill.rightmost;
        }
        self.slots[idx] = SlotState::Filled(fill);
        Ok(())
    }

    fn open_ledger(&mut self) -> (EpisodeRef, Msg) {
        let episode = EpisodeRef {
            initiator: self.me,
            serial: self.episodes,
            world: self.world,
        };
        self.episodes += 1;
        let target = self.left_of_span.expect("search needs a left neighbour");
        self.ledger = Some(Ledger {
            episode,
            expected: [LedgerKey::Actor(target)].into_iter().collect(),
            received: BTreeSet::new(),
            forks: Vec::new(),
            delegated: false,
            delegated_forks: 0,
        });
        self.phase = Phase::Seeking;
        let msg = Msg::SearchHead {
            world: self.world,
            candidate: self.profile(),
            episode,
            offered_below: false,
        };
        (episode, msg)
    }

    fn own_frontier(&self) -> Frontier {
        Frontier {
            actor: Some(self.rightmost.1),
            world: self.world,
        }
    }

    /// Runs when the scanner creates the word; returns the messages the word
    /// posts.
    pub fn start(&mut self) -> Vec<(ActorId, Msg)> {
        let report = |w: &WordActor| {
            vec![(
                w.scanner,
                Msg::ScanNext {
                    frontiers: vec![w.own_frontier()],
                    expect_more: 0,
                },
            )]
        };
        if self.needs_right() {
            self.phase = Phase::Deferring;
            return report(self);
        }
        match self.left_of_span {
            None => {
                self.phase = Phase::Root;
                report(self)
            }
            Some(l) => {
                let (_, msg) = self.open_ledger();
                vec![(l, msg)]
            }
        }
    }

    /// Selective receive: a copy under construction only takes the messages
    /// that complete it.
    pub fn accepts(&self, msg: &Msg) -> bool {
        match &self.copy {
            None => true,
            Some(cs) => match msg {
                Msg::HeadAccepted { .. } | Msg::Receipt { .. } | Msg::HeadRetracted { .. } => true,
                Msg::HeadFound { .. } => cs.complete,
                _ => false,
            },
        }
    }

    pub fn on_message(&mut self, msg: &Msg, ctx: NodeCtx) -> Result<Outcome, ActorError> {
        match msg {
            Msg::SearchHead {
                candidate,
                episode,
                offered_below,
                ..
            } => self.search_head(candidate, *episode, *offered_below, ctx),
            Msg::HeadFound {
                offerer,
                slot,
                constraints,
                episode,
                ..
            } => self
                .head_found(*offerer, slot, constraints, *episode, ctx)
                .map(|_| Outcome::Done),
            Msg::HeadAccepted {
                modifier,
                slot,
                kind,
                phrase,
                ..
            } => self
                .head_accepted(*modifier, slot, *kind, phrase, ctx)
                .map(|_| Outcome::Done),
            Msg::HeadRetracted { modifier, episode, .. } => {
                self.head_retracted(*modifier, *episode, ctx).map(|_| Outcome::Done)
            }
            Msg::Receipt {
                episode,
                from,
                distributed_to,
                note,
            } => self
                .receipt(*episode, *from, distributed_to, *note, ctx)
                .map(|_| Outcome::Done),
            Msg::UpdateFeatures { delta, .. } => {
                let ev = ctx.event();
                self.narrow(delta, ev)?;
                self.send_updates(ctx);
                Ok(Outcome::Done)
            }
            Msg::CopyStructure {
                world,
                new_head,
                slot,
                branch,
            } => self
                .copy_structure(*world, *new_head, slot, *branch, ctx)
                .map(|_| Outcome::Done),
            Msg::DuplicateStructure {
                world,
                branch,
                dependent,
                episode,
                replaced_child,
                report,
            } => self
                .duplicate_structure(*world, *branch, *dependent, *episode, *replaced_child, *report, ctx)
                .map(|_| Outcome::Done),
            Msg::ScanNext { .. } => Err(violation("scanNext sent to a word")),
        }
    }

    fn search_head(
        &mut self,
        cand: &Profile,
        episode: EpisodeRef,
        offered_below: bool,
        ctx: NodeCtx,
    ) -> Result<Outcome, ActorError> {
        let forward = self.head.as_ref().map(|h| h.actor);
        let concept = self.concept();
        let view = HeadView {
            position: self.position,
            concept: concept.as_deref(),
            features: &self.features,
            open: self.open_slots(),
        };
        let found = ctx.request(
            "check_valency",
            || format!("{} as head of {}", self.surface, cand.surface),
            |kn| check_valency(kn, &view, cand),
        );
        if let Some(m) = found {
            let idx = self.slot_index(&m.slot).expect("matched slot exists");
            self.held.push(HeldOffer {
                candidate: cand.actor,
                slot: idx,
                episode,
                ledger_key: LedgerKey::Actor(self.me),
                forwarded_to: forward.into_iter().collect(),
                constraints: m.constraints.clone(),
                contribution: m.contribution,
                via_copy: false,
            });
            ctx.post(
                cand.actor,
                Msg::HeadFound {
                    world: self.world,
                    offerer: self.me,
                    slot: m.slot,
                    constraints: m.constraints,
                    episode: Some(episode),
                },
            );
            return Ok(Outcome::Search { forward, offered: true });
        }
        if self.head.is_none() && !offered_below && self.phase == Phase::Root {
            let me = self.profile();
            let cand_view = HeadView {
                position: cand.position,
                concept: cand.concept.as_deref(),
                features: &cand.features,
                open: cand.open_slots.iter().collect(),
            };
            let found = ctx.request(
                "check_valency",
                || format!("{} as head of {}", cand.surface, self.surface),
                |kn| check_valency(kn, &cand_view, &me),
            );
            if let Some(m) = found {
                let ev = ctx.event();
                self.narrow(&m.constraints, ev)?;
                self.head = Some(HeadLink {
                    actor: cand.actor,
                    slot: m.slot.clone(),
                });
                self.phase = Phase::Governed;
                self.accepted_at = Some(ev);
                ctx.post(
                    cand.actor,
                    Msg::HeadAccepted {
                        world: self.world,
                        modifier: self.me,
                        slot: m.slot,
                        kind: AcceptKind::Left(episode),
                        phrase: self.phrase(m.contribution),
                    },
                );
                return Ok(Outcome::Search {
                    forward: None,
                    offered: false,
                });
            }
        }
        ctx.post(
            episode.initiator,
            Msg::Receipt {
                episode,
                from: LedgerKey::Actor(self.me),
                distributed_to: forward.into_iter().collect(),
                note: ReceiptNote::None,
            },
        );
        Ok(Outcome::Search {
            forward,
            offered: false,
        })
    }

    /// Post-distribution of searchHead: pass it on to the head.
    pub fn forward_search(&self, msg: &Msg, forward: Option<ActorId>, offered: bool, ctx: NodeCtx) {
        if let (
            Some(target),
            Msg::SearchHead {
                world,
                candidate,
                episode,
                offered_below,
            },
        ) = (forward, msg)
        {
            ctx.post(
                target,
                Msg::SearchHead {
                    world: *world,
                    candidate: candidate.clone(),
                    episode: *episode,
                    offered_below: *offered_below || offered,
                },
            );
        }
    }

    fn send_updates(&self, ctx: NodeCtx) {
        for (i, s) in self.slots.iter().enumerate() {
            if let SlotState::Filled(f) = s {
                let delta = self.features.project(&self.valency(i).agree);
                ctx.post(
                    f.modifier,
                    Msg::UpdateFeatures {
                        world: self.world,
                        delta,
                    },
                );
            }
        }
    }

    fn head_found(
        &mut self,
        offerer: ActorId,
        slot: &str,
        constraints: &FeatureStructure,
        episode: Option<EpisodeRef>,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        if self.head.is_some() {
            return self.fork(offerer, episode, ctx);
        }
        let Some(unified) = self.features.unify(constraints) else {
            ctx.post(
                offerer,
                Msg::HeadRetracted {
                    world: self.world,
                    modifier: self.me,
                    episode,
                },
            );
            return Ok(());
        };
        let ev = ctx.event();
        self.features = unified;
        self.imposed.push((ev, constraints.clone()));
        self.head = Some(HeadLink {
            actor: offerer,
            slot: slot.to_string(),
        });
        self.phase = Phase::Governed;
        self.accepted_at = Some(ev);
        self.copy = None;
        self.send_updates(ctx);
        let kind = match episode {
            Some(e) => AcceptKind::Offer(e),
            None => AcceptKind::Rebuild,
        };
        ctx.post(
            offerer,
            Msg::HeadAccepted {
                world: self.world,
                modifier: self.me,
                slot: slot.to_string(),
                kind,
                phrase: self.phrase(FeatureStructure::new()),
            },
        );
        Ok(())
    }

    /// A second offer for a governed word: copy the own phrase into a new
    /// reading and ask the offerer to duplicate itself there.
    fn fork(&mut self, offerer: ActorId, episode: Option<EpisodeRef>, ctx: NodeCtx) -> Result<(), ActorError> {
        let ep = episode.ok_or_else(|| violation(format!("rebuilding offer to governed {}", self.surface)))?;
        let branch = self
            .accepted_at
            .ok_or_else(|| violation("governed word without acceptance event"))?;
        match &self.ledger {
            Some(l) if l.episode == ep => {}
            _ => return Err(violation(format!("offer to {} outside its open episode", self.surface))),
        }
        let world = ctx.new_world(Some(self.world));
        let (mut copy, children) = self.copy_for(world, branch, None, ctx)?;
        let complete = !copy.has_awaiting();
        copy.copy = Some(CopyState {
            awaiting_head: true,
            report: None,
            complete,
        });
        let id = ctx.spawn_with(|id| {
            copy.set_id(id);
            Node::Word(Box::new(copy))
        })?;
        for (slot, child) in children {
            ctx.post(
                child,
                Msg::CopyStructure {
                    world,
                    new_head: id,
                    slot,
                    branch,
                },
            );
        }
        if let Some(l) = &mut self.ledger {
            l.expected.insert(LedgerKey::Fork(world));
        }
        ctx.post(
            offerer,
            Msg::DuplicateStructure {
                world,
                branch,
                dependent: id,
                episode: Some(ep),
                replaced_child: None,
                report: ep,
            },
        );
        Ok(())
    }

    fn has_awaiting(&self) -> bool {
        self.slots.iter().any(|s| matches!(s, SlotState::Awaiting(_)))
    }

    fn set_id(&mut self, id: ActorId) {
        self.me = id;
        self.rightmost = (self.position, id);
    }

    /// State of this word as of before `branch`, placed in `world`. Returns
    /// the copy (without identity) and the modifiers to be copied along.
    fn copy_for(
        &self,
        world: World,
        branch: EventId,
        keep: Option<ActorId>,
        ctx: NodeCtx,
    ) -> Result<(WordActor, Vec<(String, ActorId)>), ActorError> {
        let mut copy = WordActor::new(
            self.me,
            self.entry.clone(),
            self.position,
            world,
            self.left_neighbor,
            self.scanner,
        );
        for (e, fs) in &self.imposed {
            if ctx.precedes_or_eq(branch, *e) {
                continue;
            }
            copy.features = copy
                .features
                .unify(fs)
                .ok_or_else(|| violation(format!("copy of {} has inconsistent features", self.surface)))?;
            copy.imposed.push((*e, fs.clone()));
        }
        let mut children = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            let SlotState::Filled(f) = s else { continue };
            let replaced = keep == Some(f.modifier);
            if !replaced && ctx.precedes_or_eq(branch, f.event) {
                continue;
            }
            copy.slots[i] = SlotState::Awaiting(f.clone());
            if !replaced {
                children.push((self.valency(i).name.clone(), f.modifier));
            }
            if self.valency(i).direction == Direction::Left && f.span_start < copy.span_start {
                copy.span_start = f.span_start;
                copy.left_of_span = f.left_of_span;
            }
        }
        copy.phase = if copy.needs_right() {
            Phase::Deferring
        } else {
            Phase::Root
        };
        Ok((copy, children))
    }

    fn copy_structure(
        &mut self,
        world: World,
        new_head: ActorId,
        slot: &str,
        branch: EventId,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        let (mut copy, children) = self.copy_for(world, branch, None, ctx)?;
        copy.head = Some(HeadLink {
            actor: new_head,
            slot: slot.to_string(),
        });
        copy.phase = Phase::Governed;
        let complete = children.is_empty();
        if !complete {
            copy.copy = Some(CopyState {
                awaiting_head: false,
                report: None,
                complete: false,
            });
        }
        let mut phrase = None;
        let id = ctx.spawn_with(|id| {
            copy.set_id(id);
            phrase = Some(copy.phrase(FeatureStructure::new()));
            Node::Word(Box::new(copy))
        })?;
        for (s, child) in children {
            ctx.post(
                child,
                Msg::CopyStructure {
                    world,
                    new_head: id,
                    slot: s,
                    branch,
                },
            );
        }
        if complete {
            ctx.post_as(
                id,
                new_head,
                Msg::HeadAccepted {
                    world,
                    modifier: id,
                    slot: slot.to_string(),
                    kind: AcceptKind::Rebuild,
                    phrase: phrase.expect("set at spawn"),
                },
            );
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn duplicate_structure(
        &mut self,
        world: World,
        branch: EventId,
        dependent: ActorId,
        episode: Option<EpisodeRef>,
        replaced_child: Option<ActorId>,
        report: EpisodeRef,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        let (mut copy, children) = self.copy_for(world, branch, replaced_child, ctx)?;
        let (slot, constraints, offer_episode) = match replaced_child {
            None => {
                let ep = episode.ok_or_else(|| violation("duplicateStructure without offer"))?;
                let idx =
                    self.held.iter().position(|h| h.episode == ep).ok_or_else(|| {
                        violation(format!("duplicateStructure at {}, which never offered", self.surface))
                    })?;
                let h = self.held.remove(idx);
                let out = (self.valency(h.slot).name.clone(), h.constraints.clone(), Some(ep));
                copy.held.push(HeldOffer {
                    candidate: dependent,
                    via_copy: true,
                    ..h
                });
                out
            }
            Some(child) => {
                let found = copy.slots.iter().enumerate().find_map(|(i, s)| match s {
                    SlotState::Awaiting(f) if f.modifier == child => Some((i, f.constraints.clone())),
                    _ => None,
                });
                let (i, c) = found
                    .ok_or_else(|| violation(format!("{} does not govern the duplicated modifier", self.surface)))?;
                (self.valency(i).name.clone(), c, None)
            }
        };
        copy.copy = Some(CopyState {
            awaiting_head: self.head.is_some(),
            report: if self.head.is_none() { Some(report) } else { None },
            complete: false,
        });
        if self.head.is_none() && copy.span_start > 1 {
            // the pieces left of the copied tree join the new reading as they
            // were before the branch
            let limit = copy.span_start;
            let select = move |a: &Node| a.as_word().map(|w| w.position < limit).unwrap_or(false);
            let map = ctx.fork_world(self.world, world, &select, Some(branch))?;
            for r in [&mut copy.left_of_span, &mut copy.left_neighbor].into_iter().flatten() {
                if let Some(n) = map.get(r) {
                    *r = *n;
                }
            }
        }
        let id = ctx.spawn_with(|id| {
            copy.set_id(id);
            Node::Word(Box::new(copy))
        })?;
        if let Some(h) = &self.head {
            ctx.post(
                h.actor,
                Msg::DuplicateStructure {
                    world,
                    branch,
                    dependent: id,
                    episode: None,
                    replaced_child: Some(self.me),
                    report,
                },
            );
        }
        for (s, child) in children {
            ctx.post(
                child,
                Msg::CopyStructure {
                    world,
                    new_head: id,
                    slot: s,
                    branch,
                },
            );
        }
        ctx.post_as(
            id,
            dependent,
            Msg::HeadFound {
                world,
                offerer: id,
                slot,
                constraints,
                episode: offer_episode,
            },
        );
        Ok(())
    }

    fn head_accepted(
        &mut self,
        modifier: ActorId,
        slot: &str,
        kind: AcceptKind,
        phrase: &Phrase,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        let ev = ctx.event();
        let fill = |contribution: FeatureStructure, constraints: FeatureStructure| Fill {
            modifier,
            event: ev,
            constraints,
            contribution,
            concept: phrase.concept.clone(),
            span_start: phrase.span_start,
            left_of_span: phrase.left_of_span,
            rightmost: phrase.rightmost,
        };
        match kind {
            AcceptKind::Offer(ep) => {
                let idx = self
                    .held
                    .iter()
                    .position(|h| h.candidate == modifier && h.episode == ep)
                    .ok_or_else(|| violation(format!("acceptance for a non-outstanding offer at {}", self.surface)))?;
                let h = self.held.remove(idx);
                self.fill(h.slot, fill(h.contribution.clone(), h.constraints.clone()))?;
                let mut note = ReceiptNote::None;
                if self.phase == Phase::Deferring && !self.needs_right() {
                    let quiet = h.via_copy || self.silent;
                    self.silent = quiet;
                    note = if quiet {
                        ReceiptNote::DelegatedFork
                    } else {
                        ReceiptNote::Delegated
                    };
                    match self.left_of_span {
                        Some(l) => {
                            let (_, msg) = self.open_ledger();
                            ctx.post(l, msg);
                        }
                        None => {
                            self.phase = Phase::Root;
                            let frontiers = if quiet { Vec::new() } else { vec![self.own_frontier()] };
                            ctx.post(
                                self.scanner,
                                Msg::ScanNext {
                                    frontiers,
                                    expect_more: 0,
                                },
                            );
                        }
                    }
                }
                ctx.post(
                    h.episode.initiator,
                    Msg::Receipt {
                        episode: h.episode,
                        from: h.ledger_key,
                        distributed_to: h.forwarded_to,
                        note,
                    },
                );
                self.maybe_complete(ctx);
            }
            AcceptKind::Left(ep) => {
                match &self.ledger {
                    Some(l) if l.episode == ep => {}
                    _ => {
                        return Err(violation(format!(
                            "left attachment to {} outside its open episode",
                            self.surface
                        )))
                    }
                }
                let idx = self
                    .slot_index(slot)
                    .filter(|&i| matches!(self.slots[i], SlotState::Empty))
                    .ok_or_else(|| {
                        violation(format!(
                            "left attachment to a filled valency {slot} of {}",
                            self.surface
                        ))
                    })?;
                self.fill(idx, fill(phrase.contribution.clone(), FeatureStructure::new()))?;
                self.span_start = phrase.span_start;
                self.left_of_span = phrase.left_of_span;
                let next = self.left_of_span;
                let profile = self.profile();
                let world = self.world;
                let l = self.ledger.as_mut().expect("checked above");
                l.received.insert(LedgerKey::Actor(modifier));
                if let Some(target) = next {
                    l.expected.insert(LedgerKey::Actor(target));
                    ctx.post(
                        target,
                        Msg::SearchHead {
                            world,
                            candidate: profile,
                            episode: ep,
                            offered_below: false,
                        },
                    );
                }
                self.try_close(ctx);
            }
            AcceptKind::Rebuild => {
                let idx = self
                    .slot_index(slot)
                    .filter(|&i| matches!(self.slots[i], SlotState::Awaiting(_)))
                    .ok_or_else(|| {
                        violation(format!(
                            "rebuild of {slot} at {}, which does not await it",
                            self.surface
                        ))
                    })?;
                let SlotState::Awaiting(t) = &self.slots[idx] else {
                    unreachable!()
                };
                let f = Fill {
                    modifier,
                    event: ev,
                    rightmost: phrase.rightmost,
                    concept: phrase.concept.clone(),
                    ..t.clone()
                };
                if f.rightmost.0 > self.rightmost.0 {
                    self.rightmost = f.rightmost;
                }
                self.slots[idx] = SlotState::Filled(f);
                self.maybe_complete(ctx);
            }
        }
        Ok(())
    }

    /// A copy whose slots are all rebuilt attaches to its head, or reports
    /// the new reading if it is the topmost copy.
    fn maybe_complete(&mut self, ctx: NodeCtx) {
        let Some(cs) = &self.copy else { return };
        if cs.complete || self.has_awaiting() || !self.held.is_empty() {
            return;
        }
        if let Some(h) = &self.head {
            ctx.post(
                h.actor,
                Msg::HeadAccepted {
                    world: self.world,
                    modifier: self.me,
                    slot: h.slot.clone(),
                    kind: AcceptKind::Rebuild,
                    phrase: self.phrase(FeatureStructure::new()),
                },
            );
            self.copy = None;
        } else if cs.awaiting_head {
            self.copy = Some(CopyState {
                complete: true,
                ..cs.clone()
            });
        } else {
            if let Some(ep) = cs.report {
                ctx.post(
                    ep.initiator,
                    Msg::Receipt {
                        episode: ep,
                        from: LedgerKey::Fork(self.world),
                        distributed_to: Vec::new(),
                        note: ReceiptNote::Frontier(self.own_frontier()),
                    },
                );
            }
            self.copy = None;
        }
    }

    fn head_retracted(
        &mut self,
        modifier: ActorId,
        episode: Option<EpisodeRef>,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        let idx = self
            .held
            .iter()
            .position(|h| h.candidate == modifier && Some(h.episode) == episode)
            .ok_or_else(|| violation(format!("retraction of a non-outstanding offer at {}", self.surface)))?;
        let h = self.held.remove(idx);
        ctx.post(
            h.episode.initiator,
            Msg::Receipt {
                episode: h.episode,
                from: h.ledger_key,
                distributed_to: h.forwarded_to,
                note: ReceiptNote::None,
            },
        );
        self.maybe_complete(ctx);
        Ok(())
    }

    fn receipt(
        &mut self,
        episode: EpisodeRef,
        from: LedgerKey,
        distributed_to: &[ActorId],
        note: ReceiptNote,
        ctx: NodeCtx,
    ) -> Result<(), ActorError> {
        let l = match &mut self.ledger {
            Some(l) if l.episode == episode => l,
            _ => return Err(violation(format!("receipt at {} with no open ledger", self.surface))),
        };
        l.received.insert(from);
        l.expected.extend(distributed_to.iter().map(|a| LedgerKey::Actor(*a)));
        match note {
            ReceiptNote::None => {}
            ReceiptNote::Delegated => l.delegated = true,
            ReceiptNote::DelegatedFork => l.delegated_forks += 1,
            ReceiptNote::Frontier(f) => l.forks.push(f),
        }
        self.try_close(ctx);
        Ok(())
    }

    /// Closes the ledger once every receiver answered and reports to the
    /// scanner.
    fn try_close(&mut self, ctx: NodeCtx) {
        let done = matches!(&self.ledger, Some(l) if l.received == l.expected);
        if !done {
            return;
        }
        let l = self.ledger.take().expect("checked");
        if self.head.is_none() {
            self.phase = Phase::Root;
        }
        let mut frontiers = Vec::new();
        if !l.delegated && !self.silent {
            frontiers.push(self.own_frontier());
        }
        frontiers.extend(l.forks.iter().copied());
        let expect_more = usize::from(l.delegated) + l.delegated_forks;
        if l.delegated && frontiers.is_empty() && expect_more == 1 {
            // the released word reports in our place
            return;
        }
        ctx.post(self.scanner, Msg::ScanNext { frontiers, expect_more });
    }

    pub fn remap(&mut self, actors: &BTreeMap<ActorId, ActorId>, from: World, to: World) {
        if self.world != from {
            return;
        }
        self.world = to;
        let m = |id: &mut ActorId| {
            if let Some(n) = actors.get(id) {
                *id = *n;
            }
        };
        let ep = |e: &mut EpisodeRef| {
            if e.world == from {
                if let Some(n) = actors.get(&e.initiator) {
                    e.initiator = *n;
                }
                e.world = to;
            }
        };
        let key = |k: &mut LedgerKey| {
            if let LedgerKey::Actor(a) = k {
                if let Some(n) = actors.get(a) {
                    *a = *n;
                }
            }
        };
        m(&mut self.me);
        for r in [&mut self.left_neighbor, &mut self.left_of_span].into_iter().flatten() {
            m(r);
        }
        if let Some(h) = &mut self.head {
            m(&mut h.actor);
        }
        m(&mut self.rightmost.1);
        for s in &mut self.slots {
            if let SlotState::Filled(f) | SlotState::Awaiting(f) = s {
                m(&mut f.modifier);
                m(&mut f.rightmost.1);
                if let Some(l) = &mut f.left_of_span {
                    m(l);
                }
            }
        }
        for h in &mut self.held {
            m(&mut h.candidate);
            ep(&mut h.episode);
            key(&mut h.ledger_key);
            h.forwarded_to.iter_mut().for_each(m);
        }
        if let Some(l) = &mut self.ledger {
            ep(&mut l.episode);
            l.expected = l
                .expected
                .iter()
                .map(|k| {
                    let mut k = *k;
                    key(&mut k);
                    k
                })
                .collect();
            l.received = l
                .received
                .iter()
                .map(|k| {
                    let mut k = *k;
                    key(&mut k);
                    k
                })
                .collect();
        }
        if let Some(cs) = &mut self.copy {
            if let Some(r) = &mut cs.report {
                ep(r);
            }
        }
    }
}
