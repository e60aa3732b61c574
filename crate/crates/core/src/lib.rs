//! Corpus engineering for multilingual machine translation.
//!
//! The crate covers the data side of a many-to-many translation system:
//! reading and filtering parallel corpora, temperature-balanced sampling over
//! bitext, back-translation and dual-pseudo pools, synthetic data generation
//! through a pluggable [`translator::Translator`], spBLEU-style scoring,
//! hybrid direct/pivot routing and progressive-learning stage schedules.
//!
//! Deterministic cipher-language translators make every stage of the pipeline
//! exactly checkable without a trained model.

pub mod augmentation;
pub mod bleu;
pub mod cleaning;
pub mod cli;
pub mod corpus;
pub mod curriculum;
pub mod demo;
pub mod routing;
pub mod sampling;
pub mod shuffle;
pub mod tokenizer;
pub mod translator;

pub use corpus::{CorpusManifest, Direction, LangCode, OriginPool, SentencePair};
