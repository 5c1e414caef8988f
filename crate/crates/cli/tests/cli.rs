use std::path::PathBuf;

use actorparse::concepts::load_kb;
use actorparse::events::derive_etn;
use actorparse::lexicon::load_lexicon;
use actorparse::protocol::Knowledge;
use actorparse_cli::oracle::{oracle_parse, OracleError};
use actorparse_cli::{compare_sentences, run, KnowledgeArgs, ModeArg, RunArgs};

const FIG4: &str = "Compaq entwickelt einen Notebook mit einer 120-MByte-Harddisk";

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn cli_with_stdin(args: &[&str], input: &str) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["actorparse".to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    let code = run(argv, &mut input.as_bytes(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn cli(args: &[&str]) -> (i32, String, String) {
    cli_with_stdin(args, "")
}

fn parse_args<'a>(lex: &'a str, kb: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["parse", "--lexicon", lex, "--kb", kb];
    v.extend_from_slice(extra);
    v
}

fn scratch(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("actorparse-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn parse_prints_sample_tree() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let mut args = parse_args(&lex, &kb, &[]);
    args.extend(FIG4.split_whitespace());
    let (code, out, _) = cli(&args);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.contains('→')).count(), 6);
    assert!(out.contains("Notebook —ppatt→ mit"));
}

#[test]
fn empty_sentence_exits_two() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let (code, out, _) = cli(&parse_args(&lex, &kb, &[]));
    assert_eq!(code, 2);
    assert_eq!(out, "");
}

#[test]
fn no_reading_exits_two() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let (code, _, err) = cli(&parse_args(&lex, &kb, &["Compaq", "entwickelt"]));
    assert_eq!(code, 2);
    assert!(err.contains("no reading"));
}

#[test]
fn permissive_kb_prints_two_readings() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4-permissive.kb"));
    let mut args = parse_args(&lex, &kb, &[]);
    args.extend(FIG4.split_whitespace());
    let (code, out, _) = cli(&args);
    assert_eq!(code, 0);
    assert!(out.contains("reading 2"));
    assert!(out.contains("entwickelt —instrument→ mit"));
}

#[test]
fn stdin_supplies_tokens() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let (code, out, _) = cli_with_stdin(&parse_args(&lex, &kb, &["--stdin"]), &format!("{FIG4}\n"));
    assert_eq!(code, 0);
    assert!(out.starts_with("reading 1\n"));
}

#[test]
fn unknown_token_is_an_error_unless_lenient() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let (code, _, err) = cli(&parse_args(&lex, &kb, &["Compaq", "schnell", "entwickelt"]));
    assert_eq!(code, 1);
    assert!(err.contains("unknown token schnell"));
    let mut args = parse_args(&lex, &kb, &["--lenient"]);
    args.extend("Compaq schnell entwickelt einen Notebook".split_whitespace());
    let (code, out, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("skipped unknown token schnell"));
    assert!(out.contains("entwickelt —subj→ Compaq"));
}

#[test]
fn missing_lexicon_file_is_an_error() {
    let kb = fixture("fig4.kb");
    let (code, _, err) = cli(&parse_args("/nonexistent/x.lex", &kb, &["Compaq"]));
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent/x.lex"));
}

#[test]
fn output_is_byte_identical_across_invocations() {
    let (lex, kb) = (fixture("corpus.lex"), fixture("fig4.kb"));
    let trace_a = scratch("a.jsonl", "");
    let trace_b = scratch("b.jsonl", "");
    let sentence = "Compaq entwickelt einen neuen Notebook für Kunden";
    let mut a = parse_args(&lex, &kb, &["--seed", "7", "--trace", &trace_a]);
    a.extend(sentence.split_whitespace());
    let mut b = parse_args(&lex, &kb, &["--seed", "7", "--trace", &trace_b]);
    b.extend(sentence.split_whitespace());
    let (ca, oa, _) = cli(&a);
    let (cb, ob, _) = cli(&b);
    assert_eq!((ca, cb), (0, 0));
    assert_eq!(oa, ob);
    let (ta, tb) = (std::fs::read(&trace_a).unwrap(), std::fs::read(&trace_b).unwrap());
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn dot_export_names_episode_events() {
    let (lex, kb) = (fixture("fig4.lex"), fixture("fig4.kb"));
    let dot = scratch("events.dot", "");
    let mut args = parse_args(&lex, &kb, &["--dot", &dot]);
    args.extend(FIG4.split_whitespace());
    assert_eq!(cli(&args).0, 0);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.contains("[Notebook] <= searchHead"));
}

#[test]
fn etn_matches_golden_and_reports_differences() {
    let (code, out, _) = cli(&["etn", "--golden", &fixture("fig2.dot")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("digraph etn"));
    let broken = std::fs::read_to_string(fixture("fig2.dot"))
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"headFound\" -> \"headAccepted\""))
        .collect::<Vec<_>>()
        .join("\n");
    let golden = scratch("broken.dot", &broken);
    let (code, _, err) = cli(&["etn", "--golden", &golden]);
    assert_eq!(code, 1);
    assert!(err.contains("unexpected edge headFound -> headAccepted"), "{err}");
}

#[test]
fn etn_jsonl_has_one_line_per_edge() {
    let (code, out, _) = cli(&["etn", "--format", "jsonl"]);
    assert_eq!(code, 0);
    let edges = derive_etn(&actorparse::protocol::program()).unwrap().edges.len();
    assert_eq!(out.lines().count(), edges);
}

#[test]
fn empty_program_has_empty_network() {
    let etn = derive_etn(&[]).unwrap();
    assert!(etn.edges.is_empty() && etn.nodes.is_empty());
}

#[test]
fn validate_accepts_fixtures() {
    for lex in ["fig4.lex", "corpus.lex"] {
        let (code, out, _) = cli(&["validate", "--lexicon", &fixture(lex), "--kb", &fixture("fig4.kb")]);
        assert_eq!(code, 0, "{lex}: {out}");
    }
    let (_, out, _) = cli(&[
        "validate",
        "--lexicon",
        &fixture("fig4.lex"),
        "--kb",
        &fixture("fig4.kb"),
    ]);
    assert!(out.starts_with("ok: 7 lexemes"));
}

#[test]
fn validate_reports_cycle() {
    let lex = scratch(
        "cycle.lex",
        "wordclass A : B { }\nwordclass B : A { }\nlexeme \"x\" : A { }\n",
    );
    let (code, out, err) = cli(&["validate", "--lexicon", &lex, "--kb", &fixture("fig4.kb")]);
    assert_ne!(code, 0);
    assert!(format!("{out}{err}").contains("cycl"), "{out}{err}");
}

#[test]
fn validate_reports_undefined_role_range() {
    let kb = scratch("role.kb", "concept Action\nrole instrument domain Action range Tool\n");
    let (code, out, err) = cli(&["validate", "--lexicon", &fixture("fig4.lex"), "--kb", &kb]);
    assert_ne!(code, 0);
    assert!(format!("{out}{err}").contains("Tool"), "{out}{err}");
}

#[test]
fn oracle_compare_passes_on_corpus() {
    let (code, out, _) = cli(&[
        "oracle-compare",
        "--lexicon",
        &fixture("corpus.lex"),
        "--kb",
        &fixture("fig4.kb"),
        "--seeds",
        "5",
        &fixture("corpus.txt"),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("0 with mismatches"));
}

#[test]
fn unparseable_sentence_matches_empty_oracle() {
    let corpus = scratch("bad.txt", "# comment\nCompaq entwickelt\n\n");
    let (code, out, _) = cli(&[
        "oracle-compare",
        "--lexicon",
        &fixture("fig4.lex"),
        "--kb",
        &fixture("fig4.kb"),
        "--seeds",
        "3",
        &corpus,
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("ok       0 readings  Compaq entwickelt"));
}

fn run_args() -> RunArgs {
    RunArgs {
        knowledge: KnowledgeArgs {
            lexicon: fixture("fig4.lex").into(),
            kb: fixture("fig4.kb").into(),
        },
        seed: 0,
        steps: 100_000,
        mode: ModeArg::Sequential,
        lenient: false,
    }
}

#[test]
fn harness_reports_broken_valency_direction() {
    let text = std::fs::read_to_string(fixture("fig4.lex")).unwrap();
    let kb = load_kb(&std::fs::read_to_string(fixture("fig4.kb")).unwrap()).unwrap();
    let engine = Knowledge::new(load_lexicon(&text).unwrap(), kb.clone());
    let mutated = text.replacen(
        "valency spec { class: Determiner  dir: left",
        "valency spec { class: Determiner  dir: right",
        1,
    );
    assert_ne!(mutated, text);
    let broken = load_lexicon(&mutated).unwrap();
    let reports = compare_sentences(&engine, &broken, &kb, &[FIG4], &run_args(), 2).unwrap();
    assert_eq!(reports[0].oracle_readings, 0);
    assert_eq!(reports[0].mismatches.len(), 2);
}

#[test]
fn oracle_finds_sample_tree() {
    let lex = load_lexicon(&std::fs::read_to_string(fixture("fig4.lex")).unwrap()).unwrap();
    let kb = load_kb(&std::fs::read_to_string(fixture("fig4.kb")).unwrap()).unwrap();
    let toks: Vec<String> = FIG4.split_whitespace().map(String::from).collect();
    let trees = oracle_parse(&lex, &kb, &toks).unwrap();
    assert_eq!(trees.len(), 1);
    let r = trees[0].render();
    assert!(r.contains("entwickelt —dirobj→ Notebook") && r.contains("Notebook —ppatt→ mit"));
}

#[test]
fn oracle_single_token_without_mandatory_valency() {
    let lex = load_lexicon(&std::fs::read_to_string(fixture("fig4.lex")).unwrap()).unwrap();
    let kb = load_kb(&std::fs::read_to_string(fixture("fig4.kb")).unwrap()).unwrap();
    let trees = oracle_parse(&lex, &kb, &["Notebook".to_string()]).unwrap();
    assert_eq!(trees.len(), 1);
    assert!(trees[0].edges.is_empty());
    assert!(oracle_parse(&lex, &kb, &["mit".to_string()]).unwrap().is_empty());
}

#[test]
fn oracle_bounds_sentence_length() {
    let lex = load_lexicon(&std::fs::read_to_string(fixture("fig4.lex")).unwrap()).unwrap();
    let kb = load_kb(&std::fs::read_to_string(fixture("fig4.kb")).unwrap()).unwrap();
    let toks = vec!["Notebook".to_string(); 11];
    assert_eq!(oracle_parse(&lex, &kb, &toks), Err(OracleError::TooLong(11)));
}
