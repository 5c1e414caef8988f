use std::collections::BTreeMap;

use crate::actor::{Message, World};
use crate::events::{ActorId, EventId};
use crate::features::{render_fs, FeatureStructure};
use crate::lexicon::ValencyDef;

/// What a searching word tells the receivers about its phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub actor: ActorId,
    pub surface: String,
    pub position: usize,
    pub span_start: usize,
    pub word_class: String,
    pub features: FeatureStructure,
    pub concept: Option<String>,
    /// Empty valencies, for receivers that may attach to the left.
    pub open_slots: Vec<ValencyDef>,
}

/// One search episode of one initiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpisodeRef {
    pub initiator: ActorId,
    pub serial: u32,
    pub world: World,
}

/// Ledger entries: receivers of the search, or readings forked from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LedgerKey {
    Actor(ActorId),
    Fork(World),
}

/// Rightmost word of a reading, where the scanner attaches the next token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frontier {
    pub actor: Option<ActorId>,
    pub world: World,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiptNote {
    None,
    /// The sender was released from deferral and reports to the scanner
    /// itself.
    Delegated,
    /// As `Delegated`, for a copy in a forked reading.
    DelegatedFork,
    /// A forked reading is complete.
    Frontier(Frontier),
}

/// What the head learns about the phrase it takes as modifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub contribution: FeatureStructure,
    pub concept: Option<String>,
    pub span_start: usize,
    pub left_of_span: Option<ActorId>,
    pub rightmost: (usize, ActorId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptKind {
    /// The modifier accepted an offer made during the episode.
    Offer(EpisodeRef),
    /// A root attached itself as left dependent of the searching word.
    Left(EpisodeRef),
    /// A copy re-attaches to the copy of its head.
    Rebuild,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    ScanNext {
        frontiers: Vec<Frontier>,
        expect_more: usize,
    },
    SearchHead {
        world: World,
        candidate: Profile,
        episode: EpisodeRef,
        offered_below: bool,
    },
    HeadFound {
        world: World,
        offerer: ActorId,
        slot: String,
        constraints: FeatureStructure,
        episode: Option<EpisodeRef>,
    },
    HeadAccepted {
        world: World,
        modifier: ActorId,
        slot: String,
        kind: AcceptKind,
        phrase: Phrase,
    },
    HeadRetracted {
        world: World,
        modifier: ActorId,
        episode: Option<EpisodeRef>,
    },
    Receipt {
        episode: EpisodeRef,
        from: LedgerKey,
        distributed_to: Vec<ActorId>,
        note: ReceiptNote,
    },
    UpdateFeatures {
        world: World,
        delta: FeatureStructure,
    },
    CopyStructure {
        world: World,
        new_head: ActorId,
        slot: String,
        branch: EventId,
    },
    DuplicateStructure {
        world: World,
        branch: EventId,
        dependent: ActorId,
        /// Offerer case: the episode of the offer being moved to the copy.
        episode: Option<EpisodeRef>,
        /// Upward case: the modifier whose copy is `dependent`.
        replaced_child: Option<ActorId>,
        report: EpisodeRef,
    },
}

fn ids(v: &[ActorId]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
}

fn map_id(id: &mut ActorId, actors: &BTreeMap<ActorId, ActorId>) {
    if let Some(n) = actors.get(id) {
        *id = *n;
    }
}

fn map_world(w: &mut World, from: World, to: World) {
    if *w == from {
        *w = to;
    }
}

fn map_episode(e: &mut EpisodeRef, actors: &BTreeMap<ActorId, ActorId>, from: World, to: World) {
    if e.world == from {
        map_id(&mut e.initiator, actors);
        e.world = to;
    }
}

impl Message for Msg {
    fn key(&self) -> &'static str {
        match self {
            Msg::ScanNext { .. } => "scanNext",
            Msg::SearchHead { .. } => "searchHead",
            Msg::HeadFound { .. } => "headFound",
            Msg::HeadAccepted { .. } => "headAccepted",
            Msg::HeadRetracted { .. } => "headRetracted",
            Msg::Receipt { .. } => "receipt",
            Msg::UpdateFeatures { .. } => "updateFeatures",
            Msg::CopyStructure { .. } => "copyStructure",
            Msg::DuplicateStructure { .. } => "duplicateStructure",
        }
    }

    fn params(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            p.insert(k.to_string(), v);
        };
        match self {
            Msg::ScanNext { frontiers, expect_more } => {
                let f: Vec<String> = frontiers
                    .iter()
                    .map(|f| match f.actor {
                        Some(a) => format!("{}@{}", a, f.world),
                        None => format!("-@{}", f.world),
                    })
                    .collect();
                put("frontiers", f.join(","));
                put("expectMore", expect_more.to_string());
            }
            Msg::SearchHead {
                world,
                candidate,
                episode,
                offered_below,
            } => {
                put("reading", world.to_string());
                put("candidate", candidate.actor.to_string());
                put("initiator", episode.initiator.to_string());
                put("span", format!("{}-{}", candidate.span_start, candidate.position));
                put("offeredBelow", offered_below.to_string());
            }
            Msg::HeadFound {
                world,
                offerer,
                slot,
                constraints,
                ..
            } => {
                put("reading", world.to_string());
                put("offerer", offerer.to_string());
                put("valency", slot.clone());
                put("constraints", render_fs(constraints));
            }
            Msg::HeadAccepted {
                world,
                modifier,
                slot,
                kind,
                ..
            } => {
                put("reading", world.to_string());
                put("modifier", modifier.to_string());
                put("valency", slot.clone());
                let k = match kind {
                    AcceptKind::Offer(_) => "offer",
                    AcceptKind::Left(_) => "left",
                    AcceptKind::Rebuild => "rebuild",
                };
                put("kind", k.to_string());
            }
            Msg::HeadRetracted { world, modifier, .. } => {
                put("reading", world.to_string());
                put("modifier", modifier.to_string());
            }
            Msg::Receipt {
                episode,
                from,
                distributed_to,
                ..
            } => {
                put("reading", episode.world.to_string());
                let f = match from {
                    LedgerKey::Actor(a) => a.to_string(),
                    LedgerKey::Fork(w) => format!("fork {w}"),
                };
                put("from", f);
                put("distributedTo", ids(distributed_to));
            }
            Msg::UpdateFeatures { world, delta } => {
                put("reading", world.to_string());
                put("delta", render_fs(delta));
            }
            Msg::CopyStructure {
                world, new_head, slot, ..
            } => {
                put("reading", world.to_string());
                put("newHead", new_head.to_string());
                put("valency", slot.clone());
            }
            Msg::DuplicateStructure { world, dependent, .. } => {
                put("reading", world.to_string());
                put("dependent", dependent.to_string());
            }
        }
        p
    }

    fn world(&self) -> Option<World> {
        match self {
            Msg::ScanNext { .. } => None,
            Msg::Receipt { episode, .. } => Some(episode.world),
            Msg::SearchHead { world, .. }
            | Msg::HeadFound { world, .. }
            | Msg::HeadAccepted { world, .. }
            | Msg::HeadRetracted { world, .. }
            | Msg::UpdateFeatures { world, .. }
            | Msg::CopyStructure { world, .. }
            | Msg::DuplicateStructure { world, .. } => Some(*world),
        }
    }

    fn actor_refs(&self) -> Vec<ActorId> {
        match self {
            Msg::ScanNext { frontiers, .. } => frontiers.iter().filter_map(|f| f.actor).collect(),
            Msg::SearchHead { candidate, episode, .. } => vec![candidate.actor, episode.initiator],
            Msg::HeadFound { offerer, episode, .. } => {
                let mut v = vec![*offerer];
                v.extend(episode.map(|e| e.initiator));
                v
            }
            Msg::HeadAccepted { modifier, phrase, .. } => {
                let mut v = vec![*modifier, phrase.rightmost.1];
                v.extend(phrase.left_of_span);
                v
            }
            Msg::HeadRetracted { modifier, .. } => vec![*modifier],
            Msg::Receipt {
                episode,
                from,
                distributed_to,
                ..
            } => {
                let mut v = vec![episode.initiator];
                if let LedgerKey::Actor(a) = from {
                    v.push(*a);
                }
                v.extend(distributed_to.iter().copied());
                v
            }
            Msg::UpdateFeatures { .. } => Vec::new(),
            Msg::CopyStructure { new_head, .. } => vec![*new_head],
            Msg::DuplicateStructure {
                dependent,
                replaced_child,
                ..
            } => {
                let mut v = vec![*dependent];
                v.extend(*replaced_child);
                v
            }
        }
    }

    fn remap(&mut self, actors: &BTreeMap<ActorId, ActorId>, from: World, to: World) {
        match self {
            Msg::ScanNext { frontiers, .. } => {
                for f in frontiers {
                    if f.world == from {
                        if let Some(a) = &mut f.actor {
                            map_id(a, actors);
                        }
                        f.world = to;
                    }
                }
            }
            Msg::SearchHead {
                world,
                candidate,
                episode,
                ..
            } => {
                map_world(world, from, to);
                map_id(&mut candidate.actor, actors);
                map_episode(episode, actors, from, to);
            }
            Msg::HeadFound {
                world,
                offerer,
                episode,
                ..
            } => {
                map_world(world, from, to);
                map_id(offerer, actors);
                if let Some(e) = episode {
                    map_episode(e, actors, from, to);
                }
            }
            Msg::HeadAccepted {
                world,
                modifier,
                kind,
                phrase,
                ..
            } => {
                map_world(world, from, to);
                map_id(modifier, actors);
                map_id(&mut phrase.rightmost.1, actors);
                if let Some(l) = &mut phrase.left_of_span {
                    map_id(l, actors);
                }
                match kind {
                    AcceptKind::Offer(e) | AcceptKind::Left(e) => map_episode(e, actors, from, to),
                    AcceptKind::Rebuild => {}
                }
            }
            Msg::HeadRetracted {
                world,
                modifier,
                episode,
                ..
            } => {
                map_world(world, from, to);
                map_id(modifier, actors);
                if let Some(e) = episode {
                    map_episode(e, actors, from, to);
                }
            }
            Msg::Receipt {
                episode,
                from: key,
                distributed_to,
                note,
            } => {
                map_episode(episode, actors, from, to);
                if let LedgerKey::Actor(a) = key {
                    map_id(a, actors);
                }
                for a in distributed_to {
                    map_id(a, actors);
                }
                if let ReceiptNote::Frontier(f) = note {
                    if f.world == from {
                        if let Some(a) = &mut f.actor {
                            map_id(a, actors);
                        }
                        f.world = to;
                    }
                }
            }
            Msg::UpdateFeatures { world, .. } => map_world(world, from, to),
            Msg::CopyStructure { world, new_head, .. } => {
                map_world(world, from, to);
                map_id(new_head, actors);
            }
            Msg::DuplicateStructure {
                world,
                dependent,
                episode,
                replaced_child,
                report,
                ..
            } => {
                map_world(world, from, to);
                map_id(dependent, actors);
                if let Some(e) = episode {
                    map_episode(e, actors, from, to);
                }
                if let Some(c) = replaced_child {
                    map_id(c, actors);
                }
                map_episode(report, actors, from, to);
            }
        }
    }
}
