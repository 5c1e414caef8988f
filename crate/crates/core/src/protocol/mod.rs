//! Word actors and the text scanner.
//!
//! Each word searches for its head by sending `searchHead` to its left
//! neighbour; the message travels up the right fringe of the partial trees
//! to the left. Receivers answer with an offer (`headFound`) or a
//! `receipt`, and the searching word counts receipts to know when its
//! search is over and the scanner may read the next word. Competing
//! offers split the analysis into readings by copying structure.

mod message;
mod program;
mod readout;
mod scanner;
mod word;

use std::sync::Arc;

use crate::actor::{Actor, ActorError, Ctx, Envelope, World};
use crate::concepts::ConceptTaxonomy;
use crate::events::ActorId;
use crate::features::FeatureStructure;
use crate::lexicon::{Direction, Lexicon, ResolvedEntry, ValencyDef};

pub use message::{AcceptKind, EpisodeRef, Frontier, LedgerKey, Msg, Phrase, Profile, ReceiptNote};
pub use program::{program, scanner_behavior, word_behavior, BEHAVIOR_SCANNER, BEHAVIOR_WORD, KEYS, PLUMBING_KEYS};
pub use readout::{
    check_invariants, parse_tokens, read_out_trees, run_system, DependencyTree, Edge, ParseConfig, ParseError,
    ParseOutcome, Reading,
};
pub use scanner::Scanner;
pub use word::{CopyState, Fill, HeadLink, HeldOffer, Ledger, Phase, SlotState, WordActor};

/// Immutable knowledge shared by all actors: lexicon and concept taxonomy.
#[derive(Debug)]
pub struct Knowledge {
    pub lexicon: Lexicon,
    pub kb: ConceptTaxonomy,
}

impl Knowledge {
    pub fn new(lexicon: Lexicon, kb: ConceptTaxonomy) -> Arc<Self> {
        Arc::new(Knowledge { lexicon, kb })
    }
}

/// The head side of a constraint check: position, concept, features and
/// the still empty valencies in lexicon order.
#[derive(Debug, Clone)]
pub struct HeadView<'a> {
    pub position: usize,
    pub concept: Option<&'a str>,
    pub features: &'a FeatureStructure,
    pub open: Vec<&'a ValencyDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValencyMatch {
    pub slot: String,
    /// Modifier features after applying the valency's constraints.
    pub constraints: FeatureStructure,
    /// Agreement values the head takes over from the modifier.
    pub contribution: FeatureStructure,
}

/// First open valency of `head` that the candidate phrase satisfies:
/// word class, morphosyntax (with agreement), linear order and
/// conceptual role.
pub fn check_valency(kn: &Knowledge, head: &HeadView, cand: &Profile) -> Option<ValencyMatch> {
    let dir = if cand.position > head.position {
        Direction::Right
    } else {
        Direction::Left
    };
    for v in &head.open {
        if v.direction != dir {
            continue;
        }
        if !kn
            .lexicon
            .subclass_of(&cand.word_class, &v.modifier_class)
            .unwrap_or(false)
        {
            continue;
        }
        let Some(mut unified) = v.morph.unify(&cand.features) else {
            continue;
        };
        if !v.agree.is_empty() {
            let head_part = head.features.project(&v.agree);
            match unified.unify(&head_part) {
                Some(u) => unified = u,
                None => continue,
            }
        }
        if let Some(role) = &v.role {
            let permitted = match (head.concept, cand.concept.as_deref()) {
                (Some(h), Some(f)) => kn.kb.role_permits(h, role, f).unwrap_or(false),
                _ => false,
            };
            if !permitted {
                continue;
            }
        }
        let contribution = unified.project(&v.agree);
        return Some(ValencyMatch {
            slot: v.name.clone(),
            constraints: unified,
            contribution,
        });
    }
    None
}

/// Runtime node: the scanner or one word actor.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Scanner(Scanner),
    Word(Box<WordActor>),
}

impl Node {
    pub fn as_word(&self) -> Option<&WordActor> {
        match self {
            Node::Word(w) => Some(w),
            Node::Scanner(_) => None,
        }
    }

    pub fn as_scanner(&self) -> Option<&Scanner> {
        match self {
            Node::Scanner(s) => Some(s),
            Node::Word(_) => None,
        }
    }
}

/// Outcome of a computation, consumed by post-distribution.
pub enum Outcome {
    Done,
    Search { forward: Option<ActorId>, offered: bool },
}

impl Actor for Node {
    type Msg = Msg;
    type Services = Arc<Knowledge>;
    type Outcome = Outcome;

    fn behavior(&self) -> &'static str {
        match self {
            Node::Scanner(_) => BEHAVIOR_SCANNER,
            Node::Word(_) => BEHAVIOR_WORD,
        }
    }

    fn label(&self) -> String {
        match self {
            Node::Scanner(_) => "scanner".to_string(),
            Node::Word(w) => w.surface.clone(),
        }
    }

    fn world(&self) -> Option<World> {
        match self {
            Node::Scanner(_) => None,
            Node::Word(w) => Some(w.world),
        }
    }

    fn accepts(&self, msg: &Msg) -> bool {
        match self {
            Node::Scanner(_) => true,
            Node::Word(w) => w.accepts(msg),
        }
    }

    fn exclusive(&self, msg: &Msg) -> bool {
        matches!(msg, Msg::ScanNext { .. } | Msg::DuplicateStructure { .. })
    }

    fn compute(&mut self, env: &Envelope<Msg>, ctx: &mut Ctx<'_, Self>) -> Result<Outcome, ActorError> {
        match self {
            Node::Scanner(s) => s.on_message(&env.msg, ctx).map(|_| Outcome::Done),
            Node::Word(w) => w.on_message(&env.msg, ctx),
        }
    }

    fn post_distribute(
        &self,
        env: &Envelope<Msg>,
        outcome: &Outcome,
        ctx: &mut Ctx<'_, Self>,
    ) -> Result<(), ActorError> {
        match (self, outcome) {
            (Node::Word(w), Outcome::Search { forward, offered }) => {
                w.forward_search(&env.msg, *forward, *offered, ctx);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn remap(&mut self, actors: &std::collections::BTreeMap<ActorId, ActorId>, from: World, to: World) {
        if let Node::Word(w) = self {
            w.remap(actors, from, to);
        }
    }
}

pub(crate) fn resolve(kn: &Knowledge, surface: &str) -> Vec<Arc<ResolvedEntry>> {
    kn.lexicon.resolve_entry(surface).into_iter().map(Arc::new).collect()
}
