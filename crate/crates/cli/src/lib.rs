//! Command-line driver: parsing, trace export, event type network
//! derivation, validation and comparison against the exhaustive oracle.

pub mod oracle;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use actorparse::actor::Mode;
use actorparse::concepts::{load_kb, validate_kb, ConceptTaxonomy};
use actorparse::events::{
    compare_etn_core, derive_etn, export_dot, export_etn_dot, export_etn_jsonl, export_jsonl, parse_etn_dot,
};
use actorparse::lexicon::{load_lexicon, validate_lexicon, Lexicon};
use actorparse::protocol::{parse_tokens, program, Knowledge, ParseConfig, ParseOutcome};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_READING: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "actorparse",
    version,
    about = "Concurrent dependency parsing with word actors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a sentence and print its readings.
    Parse(ParseArgs),
    /// Print the event type network of the protocol.
    Etn(EtnArgs),
    /// Check a lexicon and a knowledge base.
    Validate(KnowledgeArgs),
    /// Compare parser readings with the exhaustive oracle over a corpus.
    OracleCompare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct KnowledgeArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum ModeArg {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub knowledge: KnowledgeArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step ceiling for one run.
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Sequential)]
    pub mode: ModeArg,
    /// Skip tokens missing from the lexicon instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ParseArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the event network as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the event network as DOT.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Read the sentence from standard input.
    #[arg(long)]
    pub stdin: bool,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum EtnFormat {
    #[default]
    Dot,
    Jsonl,
}

#[derive(Debug, Clone, Args)]
pub struct EtnArgs {
    /// Compare the derived network with a stored DOT file.
    #[arg(long)]
    pub golden: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EtnFormat::Dot)]
    pub format: EtnFormat,
    /// Write the network to a file instead of standard output.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of seeds per sentence, starting at --seed.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    /// One sentence per line; blank lines and lines starting with # are ignored.
    pub corpus: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Load { path: String, msg: String },
    #[error(transparent)]
    Parse(#[from] actorparse::protocol::ParseError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error("{0}")]
    Other(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Load {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

pub fn load_knowledge(k: &KnowledgeArgs) -> Result<(Lexicon, ConceptTaxonomy), CliError> {
    let lex = load_lexicon(&read(&k.lexicon)?).map_err(|e| load_err(&k.lexicon, e))?;
    let kb = load_kb(&read(&k.kb)?).map_err(|e| load_err(&k.kb, e))?;
    Ok((lex, kb))
}

impl RunArgs {
    pub fn config(&self, seed: u64) -> ParseConfig {
        ParseConfig {
            seed,
            step_ceiling: self.steps,
            mode: match self.mode {
                ModeArg::Sequential => Mode::Sequential,
                ModeArg::Parallel => Mode::Parallel,
            },
            lenient: self.lenient,
            log_requests: false,
        }
    }
}

/// Stable text form of a parse: one block per reading.
pub fn render_outcome(out: &ParseOutcome) -> String {
    let mut s = String::new();
    for (i, r) in out.readings.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str(&format!("reading {}\n", i + 1));
        let body = r.tree.render();
        if !body.is_empty() {
            s.push_str(&body);
            s.push('\n');
        }
    }
    s
}

/// Runs one command line. Returns the exit status.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Parse(a) => cmd_parse(a, stdin, out, err),
        Command::Etn(a) => cmd_etn(a, out, err),
        Command::Validate(a) => cmd_validate(a, out),
        Command::OracleCompare(a) => cmd_oracle_compare(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn cmd_parse(
    a: &ParseArgs,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let (lex, kb) = load_knowledge(&a.run.knowledge)?;
    let mut tokens = a.tokens.clone();
    if a.stdin {
        let mut text = String::new();
        stdin.read_to_string(&mut text).map_err(|source| CliError::Io {
            path: "<stdin>".into(),
            source,
        })?;
        tokens.extend(text.split_whitespace().map(String::from));
    }
    let outcome = parse_tokens(Knowledge::new(lex, kb), &tokens, &a.run.config(a.run.seed))?;
    if let Some(p) = &a.trace {
        write_file(p, &export_jsonl(&outcome.network))?;
    }
    if let Some(p) = &a.dot {
        write_file(p, &export_dot(&outcome.network))?;
    }
    for t in &outcome.skipped {
        let _ = writeln!(err, "skipped unknown token {t}");
    }
    let _ = out.write_all(render_outcome(&outcome).as_bytes());
    if !outcome.violations.is_empty() {
        for v in &outcome.violations {
            let _ = writeln!(err, "protocol violation: {v}");
        }
        return Ok(EXIT_ERROR);
    }
    if outcome.readings.is_empty() {
        let _ = writeln!(err, "no reading");
        return Ok(EXIT_NO_READING);
    }
    Ok(EXIT_OK)
}

pub fn cmd_etn(a: &EtnArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let etn = derive_etn(&program()).map_err(|e| CliError::Other(e.to_string()))?;
    let text = match a.format {
        EtnFormat::Dot => export_etn_dot(&etn),
        EtnFormat::Jsonl => export_etn_jsonl(&etn),
    };
    match &a.dot {
        Some(p) => write_file(p, &text)?,
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    if let Some(g) = &a.golden {
        let golden = parse_etn_dot(&read(g)?).map_err(|e| load_err(g, e))?;
        let diff = compare_etn_core(&etn, &golden);
        if !diff.is_empty() {
            for d in &diff {
                let _ = writeln!(err, "{d}");
            }
            return Ok(EXIT_ERROR);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_validate(a: &KnowledgeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (lex, kb) = load_knowledge(a)?;
    let mut clean = true;
    for (path, diags) in [(&a.kb, validate_kb(&kb)), (&a.lexicon, validate_lexicon(&lex, &kb))] {
        for d in diags {
            clean = false;
            let _ = writeln!(out, "{}:{}: {}", path.display(), d.line, d.message);
        }
    }
    if clean {
        let _ = writeln!(
            out,
            "ok: {} lexemes, {} concepts",
            lex.lexeme_count(),
            kb.concepts().count()
        );
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_ERROR)
    }
}

/// Result of comparing one sentence over all seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceReport {
    pub sentence: String,
    pub oracle_readings: usize,
    pub mismatches: Vec<String>,
}

pub fn compare_corpus(a: &CompareArgs) -> Result<Vec<SentenceReport>, CliError> {
    let (lex, kb) = load_knowledge(&a.run.knowledge)?;
    let text = read(&a.corpus)?;
    let sentences: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let kn = Knowledge::new(lex, kb);
    compare_sentences(&kn, &kn.lexicon, &kn.kb, &sentences, &a.run, a.seeds)
}

/// Parses each sentence with `kn` for `seeds` seeds and compares the
/// reading sets with the oracle run on `oracle_lex` and `oracle_kb`.
pub fn compare_sentences(
    kn: &Arc<Knowledge>,
    oracle_lex: &Lexicon,
    oracle_kb: &ConceptTaxonomy,
    sentences: &[&str],
    run: &RunArgs,
    seeds: u64,
) -> Result<Vec<SentenceReport>, CliError> {
    let mut reports = Vec::new();
    for line in sentences {
        let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
        let known: Vec<String> = if run.lenient {
            tokens
                .iter()
                .filter(|t| !oracle_lex.resolve_entry(t).is_empty())
                .cloned()
                .collect()
        } else {
            tokens.clone()
        };
        let expected: BTreeSet<String> = oracle::oracle_parse(oracle_lex, oracle_kb, &known)?
            .iter()
            .map(|t| t.canonical())
            .collect();
        let mut mismatches = Vec::new();
        for seed in run.seed..run.seed + seeds {
            match parse_tokens(Arc::clone(kn), &tokens, &run.config(seed)) {
                Ok(o) => {
                    let got: BTreeSet<String> = o.canonical_trees().into_iter().collect();
                    if got != expected {
                        let missing = expected.difference(&got).count();
                        let extra = got.difference(&expected).count();
                        mismatches.push(format!("seed {seed}: {missing} oracle readings missing, {extra} extra"));
                    }
                    for v in o.violations {
                        mismatches.push(format!("seed {seed}: {v}"));
                    }
                }
                Err(e) => mismatches.push(format!("seed {seed}: {e}")),
            }
        }
        reports.push(SentenceReport {
            sentence: line.to_string(),
            oracle_readings: expected.len(),
            mismatches,
        });
    }
    Ok(reports)
}

pub fn cmd_oracle_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let reports = compare_corpus(a)?;
    let mut failed = 0;
    for r in &reports {
        if r.mismatches.is_empty() {
            let _ = writeln!(out, "ok       {} readings  {}", r.oracle_readings, r.sentence);
        } else {
            failed += 1;
            let _ = writeln!(out, "MISMATCH {} readings  {}", r.oracle_readings, r.sentence);
            for m in &r.mismatches {
                let _ = writeln!(out, "    {m}");
            }
        }
    }
    let _ = writeln!(
        out,
        "{} sentences, {} seeds each, {failed} with mismatches",
        reports.len(),
        a.seeds
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_ERROR })
}
