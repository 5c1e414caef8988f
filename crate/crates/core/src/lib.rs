//! Lexicalized dependency parsing by word actors that exchange messages,
//! with the recorded event network of every run and the static event type
//! network derived from the actor behaviors.

pub mod actor;
pub mod concepts;
pub mod diag;
pub mod events;
pub mod features;
pub mod lexicon;
pub mod protocol;

pub use diag::Diagnostic;
