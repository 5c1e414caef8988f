use super::message::{Frontier, Msg};
use super::word::WordActor;
use super::{resolve, Node};
use crate::actor::{ActorError, Ctx};

/// Reads the text left to right. The next token is created only after every
/// reading has reported its frontier for the current one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scanner {
    pub tokens: Vec<String>,
    pub cursor: usize,
    /// scanNext messages still owed for the current token.
    pub awaiting: usize,
    pub collected: Vec<Frontier>,
    pub lenient: bool,
    pub skipped: Vec<String>,
    pub spawned: usize,
}

impl Scanner {
    pub fn new(tokens: Vec<String>, lenient: bool) -> Self {
        Scanner {
            tokens,
            cursor: 0,
            awaiting: 1,
            collected: Vec::new(),
            lenient,
            skipped: Vec::new(),
            spawned: 0,
        }
    }

    pub fn on_message(&mut self, msg: &Msg, ctx: &mut Ctx<'_, Node>) -> Result<(), ActorError> {
        let Msg::ScanNext { frontiers, expect_more } = msg else {
            return Err(ActorError::Protocol(format!("scanner cannot handle {msg:?}")));
        };
        if self.awaiting == 0 {
            return Err(ActorError::Protocol("unexpected scanNext".into()));
        }
        self.awaiting = self.awaiting - 1 + expect_more;
        self.collected.extend(frontiers.iter().copied());
        if self.awaiting > 0 {
            return Ok(());
        }
        while self.cursor < self.tokens.len() {
            let token = self.tokens[self.cursor].clone();
            self.cursor += 1;
            let entries = ctx.request("resolve_entry", || token.clone(), |kn| resolve(kn, &token));
            if entries.is_empty() {
                if self.lenient {
                    self.skipped.push(token);
                    continue;
                }
                return Err(ActorError::Protocol(format!("unknown token {token}")));
            }
            let position = self.cursor - self.skipped.len();
            let scanner = ctx.me();
            for fr in std::mem::take(&mut self.collected) {
                // homonyms: one sibling reading per further entry, cloned
                // before the first entry joins the original reading
                let mut targets = Vec::new();
                for _ in 1..entries.len() {
                    let w = ctx.new_world(Some(fr.world));
                    let map = ctx.fork_world(fr.world, w, &|a: &Node| a.as_word().is_some(), None)?;
                    targets.push((w, fr.actor.map(|a| map.get(&a).copied().unwrap_or(a))));
                }
                targets.insert(0, (fr.world, fr.actor));
                for (entry, (world, left)) in entries.iter().zip(targets) {
                    let mut out = Vec::new();
                    let id = ctx.spawn_with(|id| {
                        let mut w = WordActor::new(id, entry.clone(), position, world, left, scanner);
                        out = w.start();
                        Node::Word(Box::new(w))
                    })?;
                    for (target, m) in out {
                        ctx.post_as(id, target, m);
                    }
                    self.awaiting += 1;
                    self.spawned += 1;
                }
            }
            break;
        }
        Ok(())
    }
}
