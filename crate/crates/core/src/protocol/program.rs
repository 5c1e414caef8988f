//! Declarative mirror of the scanner and word handlers, from which the event
//! type network is derived. Every send made by the handlers appears here
//! under the guard of the branch that makes it.

use crate::events::{Action, BehaviorDef, MethodDef};

pub const BEHAVIOR_SCANNER: &str = "scanner";
pub const BEHAVIOR_WORD: &str = "word";

pub const KEYS: [&str; 8] = [
    "searchHead",
    "headFound",
    "headAccepted",
    "receipt",
    "scanNext",
    "updateFeatures",
    "copyStructure",
    "duplicateStructure",
];

pub const PLUMBING_KEYS: [&str; 1] = ["headRetracted"];

fn method(key: &str, body: Action) -> MethodDef {
    MethodDef {
        key: key.to_string(),
        pre: None,
        body,
        post: None,
    }
}

fn send(key: &str) -> Action {
    Action::send("?", key)
}

fn plumbing(key: &str) -> Action {
    Action::send_plumbing("?", key)
}

pub fn word_behavior() -> BehaviorDef {
    use Action as A;
    let search_head = MethodDef {
        key: "searchHead".into(),
        pre: None,
        body: A::branch_labeled(
            "valency constraint satisfied",
            send("headFound"),
            "",
            A::branch_labeled(
                "left attachment",
                plumbing("headAccepted"),
                "no constraint satisfied",
                send("receipt"),
            ),
        ),
        post: Some(A::when("self is governed", send("searchHead"))),
    };
    let head_found = method(
        "headFound",
        A::branch_labeled(
            "no ambiguity",
            A::branch_labeled(
                "",
                A::seq(vec![
                    A::when("self has modifiers", send("updateFeatures")),
                    send("headAccepted"),
                ]),
                "unification failure",
                plumbing("headRetracted"),
            ),
            "structural ambiguity",
            A::seq(vec![
                A::Create("copy of self".into()),
                A::when("structural ambiguity & self has modifiers", send("copyStructure")),
                send("duplicateStructure"),
            ]),
        ),
    );
    let head_accepted = method(
        "headAccepted",
        A::seq(vec![
            A::when("", send("receipt")),
            A::when(
                "mandatory valencies satisfied",
                A::branch_labeled("", send("searchHead"), "no left neighbor", plumbing("scanNext")),
            ),
            A::when(
                "left attachment",
                A::seq(vec![
                    A::when("span has left neighbor", send("searchHead")),
                    A::when("all receipts collected", plumbing("scanNext")),
                ]),
            ),
            A::when(
                "copy complete",
                A::seq(vec![plumbing("headAccepted"), plumbing("receipt")]),
            ),
        ]),
    );
    let receipt = method("receipt", A::when("", send("scanNext")));
    let update = method("updateFeatures", A::when("self has modifiers", send("updateFeatures")));
    let copy = method(
        "copyStructure",
        A::seq(vec![
            A::Create("copy of self".into()),
            A::when("self has modifiers", send("copyStructure")),
            A::when("", send("headAccepted")),
        ]),
    );
    let duplicate = method(
        "duplicateStructure",
        A::seq(vec![
            A::Create("copy of self".into()),
            A::when("self is governed", send("duplicateStructure")),
            A::when("self has modifiers", send("copyStructure")),
            send("headFound"),
        ]),
    );
    let retracted = method(
        "headRetracted",
        A::seq(vec![
            plumbing("receipt"),
            A::when(
                "copy complete",
                A::seq(vec![plumbing("headAccepted"), plumbing("receipt")]),
            ),
        ]),
    );
    BehaviorDef {
        name: BEHAVIOR_WORD.into(),
        methods: vec![
            search_head,
            head_found,
            head_accepted,
            receipt,
            update,
            copy,
            duplicate,
            retracted,
        ],
    }
}

pub fn scanner_behavior() -> BehaviorDef {
    use Action as A;
    BehaviorDef {
        name: BEHAVIOR_SCANNER.into(),
        methods: vec![method(
            "scanNext",
            A::when(
                "tokens remain",
                A::seq(vec![
                    A::Create("word actor".into()),
                    A::branch_labeled("", send("searchHead"), "deferring or first word", send("scanNext")),
                ]),
            ),
        )],
    }
}

/// The whole protocol: scanner and word behaviors.
pub fn program() -> Vec<BehaviorDef> {
    vec![scanner_behavior(), word_behavior()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::derive_etn;

    #[test]
    fn every_send_yields_a_distinct_triple() {
        let etn = derive_etn(&program()).unwrap();
        let sends: usize = program().iter().map(BehaviorDef::send_count).sum();
        assert_eq!(etn.all_triples().len(), sends);
    }

    #[test]
    fn headfound_edges_carry_protocol_labels() {
        let etn = derive_etn(&program()).unwrap();
        let t = etn.core_triples();
        assert!(t.contains(&("headFound".into(), "headAccepted".into(), "no ambiguity".into())));
        assert!(t.contains(&(
            "headFound".into(),
            "duplicateStructure".into(),
            "structural ambiguity".into()
        )));
        assert!(t.contains(&("searchHead".into(), "searchHead".into(), "self is governed".into())));
    }
}
