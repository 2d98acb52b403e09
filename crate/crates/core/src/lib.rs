//! Sentence generation in two stages: a grammar turns a semantic input into a
//! word lattice of candidate sentences, and an n-gram model picks the most
//! fluent paths through it.

pub mod decoder;
pub mod grammar;
pub mod lattice;
pub mod lm;
pub mod morphology;
pub mod semantics;
pub mod sexpr;

pub use decoder::{brute_force_nbest, default_path, nbest, random_path, rank_sentences, BeamConfig, DecodeError, RandomMode};
pub use grammar::{parse_grammar, parse_lexicon, Category, EStructure, Grammar, Lexicon, RealizeError, Realizer};
pub use lattice::{epsilon, or, seq, wrd, Label, Lattice, LatticeError, LatticeStats, StateId, Transition, Word};
pub use lm::{
    corrected_score, read_model, sentence_logprob, train, write_model, LanguageModel, LmConfig, LmError, NGramModel,
    ScoredSentence,
};
pub use morphology::{load_exceptions, ExceptionTable, Feature, PartOfSpeech};
pub use semantics::{parse_spl, render_spl, Concept, Role, SemanticNode, SemanticValue};
