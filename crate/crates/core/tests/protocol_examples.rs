use std::collections::BTreeSet;
use std::sync::Arc;

use actorparse::concepts::load_kb;
use actorparse::events::{ActorId, Event, EventNetwork};
use actorparse::features::parse_fs;
use actorparse::lexicon::load_lexicon;
use actorparse::protocol::{check_valency, parse_tokens, HeadView, Knowledge, ParseConfig, ParseOutcome, Profile};

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn knowledge(lex: &str, kb: &str) -> Arc<Knowledge> {
    Knowledge::new(load_lexicon(&fixture(lex)).unwrap(), load_kb(&fixture(kb)).unwrap())
}

fn parse(kn: &Arc<Knowledge>, text: &str, seed: u64) -> ParseOutcome {
    let toks: Vec<String> = text.split_whitespace().map(String::from).collect();
    let cfg = ParseConfig {
        seed,
        ..ParseConfig::default()
    };
    parse_tokens(kn.clone(), &toks, &cfg).unwrap()
}

const FIG4: &str = "Compaq entwickelt einen Notebook mit einer 120-MByte-Harddisk";

#[test]
fn sample_sentence_has_one_reading() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    let out = parse(&kn, FIG4, 0);
    assert_eq!(out.violations, Vec::<String>::new());
    assert_eq!(out.readings.len(), 1, "{:#?}", out.canonical_trees());
    let r = out.readings[0].tree.render();
    for line in [
        "entwickelt —subj→ Compaq",
        "entwickelt —dirobj→ Notebook",
        "Notebook —spec→ einen",
        "Notebook —ppatt→ mit",
        "mit —obj→ 120-MByte-Harddisk",
        "120-MByte-Harddisk —spec→ einer",
    ] {
        assert!(r.contains(line), "missing {line} in\n{r}");
    }
    assert_eq!(out.readings[0].tree.edges.len(), 6);
}

#[test]
fn permissive_kb_gives_two_readings() {
    let kn = knowledge("fig4.lex", "fig4-permissive.kb");
    let out = parse(&kn, FIG4, 0);
    assert_eq!(out.violations, Vec::<String>::new());
    assert_eq!(out.readings.len(), 2, "{:#?}", out.canonical_trees());
}

fn by_label<'a>(net: &'a EventNetwork, label: &str, key: &str) -> Vec<&'a Event> {
    net.events
        .iter()
        .filter(|e| e.key == key && net.label(e.target) == label)
        .collect()
}

fn caused_by(net: &EventNetwork, cause: &Event) -> Vec<String> {
    let mut v: Vec<String> = net
        .events
        .iter()
        .filter(|e| e.causes.contains(&cause.id))
        .map(|e| net.event_label(e))
        .collect();
    v.sort();
    v
}

fn actor_of(net: &EventNetwork, label: &str) -> ActorId {
    *net.actors.iter().find(|(_, a)| a.label == label).unwrap().0
}

#[test]
fn first_and_deferring_words_emit_scan_next() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    let net = parse(&kn, FIG4, 0).network;
    for word in ["Compaq", "mit"] {
        let id = actor_of(&net, word);
        let created = net.actors[&id].created_by.unwrap();
        assert_eq!(
            caused_by(&net, &net.events[created]),
            ["[scanner] <= scanNext"],
            "{word}"
        );
        let frontier = format!("{id}@");
        assert!(net
            .events
            .iter()
            .any(|e| e.key == "scanNext" && e.params["frontiers"].starts_with(&frontier)));
    }
}

#[test]
fn harddisk_searches_from_einer() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    let net = parse(&kn, FIG4, 0).network;
    let hd = actor_of(&net, "120-MByte-Harddisk").to_string();
    let first = net
        .events
        .iter()
        .find(|e| e.key == "searchHead" && e.params["candidate"] == hd)
        .unwrap();
    assert_eq!(net.label(first.target), "einer");
}

#[test]
fn preposition_episode_follows_the_event_network() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    for seed in 0..10 {
        let net = parse(&kn, FIG4, seed).network;
        let mit = actor_of(&net, "mit").to_string();
        let noun_search = by_label(&net, "Notebook", "searchHead")
            .into_iter()
            .find(|e| e.params["candidate"] == mit)
            .unwrap();
        assert_eq!(
            caused_by(&net, noun_search),
            ["[entwickelt] <= searchHead", "[mit] <= headFound"]
        );
        let verb_search = by_label(&net, "entwickelt", "searchHead")
            .into_iter()
            .find(|e| e.params["candidate"] == mit)
            .unwrap();
        let receipts: Vec<&Event> = net
            .events
            .iter()
            .filter(|e| e.causes.contains(&verb_search.id))
            .collect();
        assert_eq!(receipts.len(), 1);
        assert_eq!(net.event_label(receipts[0]), "[mit] <= receipt");
        assert_eq!(receipts[0].params["distributedTo"], "");
        let found = by_label(&net, "mit", "headFound")[0];
        assert_eq!(
            caused_by(&net, found),
            ["[120-MByte-Harddisk] <= updateFeatures", "[Notebook] <= headAccepted"]
        );
        let accepted = by_label(&net, "Notebook", "headAccepted")
            .into_iter()
            .find(|e| e.causes.contains(&found.id))
            .unwrap();
        assert_eq!(caused_by(&net, accepted), ["[mit] <= receipt"]);
    }
}

#[test]
fn empty_input_has_no_reading() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    let out = parse(&kn, "", 0);
    assert!(out.readings.is_empty());
    assert!(out.violations.is_empty(), "{:?}", out.violations);
}

#[test]
fn ambiguous_readings_differ_only_in_pp_attachment() {
    let kn = knowledge("fig4.lex", "fig4-permissive.kb");
    let out = parse(&kn, FIG4, 0);
    assert_eq!(out.readings.len(), 2);
    let a: BTreeSet<_> = out.readings[0].tree.edges.iter().cloned().collect();
    let b: BTreeSet<_> = out.readings[1].tree.edges.iter().cloned().collect();
    let only: Vec<_> = a.symmetric_difference(&b).collect();
    assert_eq!(only.len(), 2);
    assert!(only.iter().all(|e| e.modifier == 5), "{only:?}");
}

#[test]
fn homonyms_give_sibling_readings() {
    let kn = knowledge("corpus.lex", "fig4.kb");
    let out = parse(&kn, "Compaq testet Kunden", 0);
    assert!(out.violations.is_empty(), "{:?}", out.violations);
    let kunden = out.network.actors.values().filter(|a| a.label == "Kunden").count();
    assert_eq!(kunden, 2);
    let classes: BTreeSet<&str> = out.readings.iter().map(|r| r.tree.tokens[2].1.as_str()).collect();
    assert_eq!(classes.into_iter().collect::<Vec<_>>(), ["CountNoun", "PluralNoun"]);
    assert_ne!(out.readings[0].world, out.readings[1].world);
}

fn profile(kn: &Knowledge, surface: &str, position: usize, concept: Option<&str>, features: Option<&str>) -> Profile {
    let e = kn.lexicon.resolve_entry(surface).remove(0);
    Profile {
        actor: ActorId(99),
        surface: surface.into(),
        position,
        span_start: position,
        word_class: e.word_class.clone(),
        features: features.map(|f| parse_fs(f).unwrap()).unwrap_or(e.features),
        concept: concept.map(String::from).or(e.concept),
        open_slots: Vec::new(),
    }
}

fn slot_for(kn: &Knowledge, head: &str, position: usize, cand: &Profile) -> Option<String> {
    let e = kn.lexicon.resolve_entry(head).remove(0);
    let view = HeadView {
        position,
        concept: e.concept.as_deref(),
        features: &e.features,
        open: e.valencies.iter().collect(),
    };
    check_valency(kn, &view, cand).map(|m| m.slot)
}

#[test]
fn valency_checks_of_the_sample_sentence() {
    let kn = knowledge("fig4.lex", "fig4.kb");
    let hd = profile(
        &kn,
        "120-MByte-Harddisk",
        7,
        None,
        Some("{agr: {case: dat, num: sg, gen: fem}, cat: noun}"),
    );
    assert_eq!(slot_for(&kn, "mit", 5, &hd).as_deref(), Some("obj"));
    let pp = profile(&kn, "mit", 5, Some("Harddisk"), None);
    assert_eq!(slot_for(&kn, "Notebook", 4, &pp).as_deref(), Some("ppatt"));
    assert_eq!(slot_for(&kn, "entwickelt", 2, &pp), None);
    let loose = knowledge("fig4.lex", "fig4-permissive.kb");
    assert_eq!(slot_for(&loose, "entwickelt", 2, &pp).as_deref(), Some("instrument"));
    // a preposition left of the noun cannot fill a rightward valency
    let left_pp = profile(&kn, "mit", 3, Some("Harddisk"), None);
    assert_eq!(slot_for(&kn, "Notebook", 4, &left_pp), None);
}
