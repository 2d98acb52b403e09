//! Sentence extraction from word lattices.
//!
//! [`nbest`] sweeps the states in topological order carrying, per state,
//! hypotheses grouped by their LM context. Every continuation of a group is
//! scored identically, so keeping the best K ≥ N of each group cannot lose a
//! top-N sentence. [`brute_force_nbest`] enumerates every path and is used to
//! check it.

use std::collections::{HashMap, HashSet};

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{Label, Lattice, LatticeError, StateId};
use crate::lm::{length_bonus, sentence_logprob, LanguageModel, ScoredSentence, TokenId};

/// Default limit on the number of paths the brute-force oracle will expand.
pub const DEFAULT_PATH_BOUND: u64 = 100_000;

/// Hypotheses whose keys fall this close to the K-th best are kept too, so
/// float rounding cannot decide what gets pruned.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub n: usize,
    /// Hypotheses kept per (state, context); must be at least `n`.
    pub k: usize,
    /// Cap on hypotheses per state across all contexts. Makes the search
    /// inexact.
    pub global_beam: Option<usize>,
}

impl BeamConfig {
    pub fn exact(n: usize) -> Self {
        BeamConfig { n, k: n, global_beam: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("per-context beam K={k} is smaller than N={n}")]
    BeamTooSmall { n: usize, k: usize },
    #[error("lattice has {paths} paths, more than the bound of {bound}")]
    TooManyPaths { paths: BigUint, bound: u64 },
}

#[derive(Debug, Clone)]
struct Hyp {
    words: Vec<u32>,
    logprob: f64,
    ctx: [TokenId; 2],
}

impl Hyp {
    fn key(&self) -> f64 {
        self.logprob + length_bonus(self.words.len())
    }
}

/// Lattice words indexed in sorted order, so comparing ids compares strings.
struct WordTable {
    words: Vec<String>,
    ids: HashMap<String, u32>,
    /// (token when sentence-initial, token otherwise)
    tokens: Vec<(TokenId, TokenId)>,
}

impl WordTable {
    fn new<M: LanguageModel + ?Sized>(lattice: &Lattice, model: &M) -> Self {
        let words: Vec<String> = lattice.vocabulary().iter().map(|w| w.to_string()).collect();
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let tokens = words.iter().map(|w| (model.classify(w, true), model.classify(w, false))).collect();
        WordTable { words, ids, tokens }
    }

    fn sentence(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.words[i as usize].clone()).collect()
    }
}

fn by_score_then_words(a: &ScoredSentence, b: &ScoredSentence) -> std::cmp::Ordering {
    b.corrected.total_cmp(&a.corrected).then_with(|| a.words.cmp(&b.words))
}

/// Keeps the best `k` hypotheses (plus near-ties) of a group after dropping
/// duplicate word sequences.
fn prune(group: &mut Vec<Hyp>, k: usize) {
    group.sort_by(|a, b| b.key().total_cmp(&a.key()).then_with(|| a.words.cmp(&b.words)));
    group.dedup_by(|a, b| a.words == b.words);
    if group.len() > k {
        if k == 0 {
            group.clear();
            return;
        }
        let cutoff = group[k - 1].key() - TIE_EPSILON;
        let keep = k + group[k..].iter().take_while(|h| h.key() >= cutoff).count();
        group.truncate(keep);
    }
}

/// The N best distinct sentences by length-corrected score, ties broken by
/// word sequence.
pub fn nbest<M: LanguageModel + ?Sized>(
    lattice: &Lattice,
    model: &M,
    config: BeamConfig,
) -> Result<Vec<ScoredSentence>, DecodeError> {
    if config.k < config.n {
        return Err(DecodeError::BeamTooSmall { n: config.n, k: config.k });
    }
    let order = lattice.topological_order()?;
    if config.n == 0 {
        return Ok(Vec::new());
    }
    let table = WordTable::new(lattice, model);

    // Groups are keyed on the context and on whether anything was emitted,
    // since the first word is classified differently.
    type Groups = HashMap<([TokenId; 2], bool), Vec<Hyp>>;
    let mut pending: Vec<Groups> = vec![HashMap::new(); lattice.num_states()];
    pending[lattice.start()].insert((model.start(), true), vec![Hyp { words: Vec::new(), logprob: 0.0, ctx: model.start() }]);

    for &s in &order {
        let mut groups = std::mem::take(&mut pending[s]);
        if s == lattice.final_state() {
            pending[s] = groups;
            break;
        }
        for group in groups.values_mut() {
            prune(group, config.k);
        }
        if let Some(width) = config.global_beam {
            let mut all: Vec<Hyp> = groups.into_values().flatten().collect();
            prune(&mut all, width);
            groups = HashMap::new();
            for h in all {
                groups.entry((h.ctx, h.words.is_empty())).or_default().push(h);
            }
        }
        let mut keys: Vec<_> = groups.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            for h in &groups[&key] {
                for t in lattice.arcs_from(s) {
                    let next = match &t.label {
                        Label::Epsilon => h.clone(),
                        Label::Word(w) => {
                            let id = table.ids[w.as_str()];
                            let (initial, mid) = table.tokens[id as usize];
                            let tok = if h.words.is_empty() { initial } else { mid };
                            let (lp, ctx) = model.step(&h.ctx, tok);
                            let mut words = h.words.clone();
                            words.push(id);
                            Hyp { words, logprob: h.logprob + lp, ctx }
                        }
                    };
                    pending[t.target].entry((next.ctx, next.words.is_empty())).or_default().push(next);
                }
            }
        }
    }

    let mut seen = HashSet::new();
    let mut results: Vec<ScoredSentence> = Vec::new();
    for h in pending[lattice.final_state()].values().flatten() {
        if !seen.insert(h.words.clone()) {
            continue;
        }
        let logprob = h.logprob + model.finish(&h.ctx);
        results.push(ScoredSentence {
            words: table.sentence(&h.words),
            logprob,
            corrected: logprob + length_bonus(h.words.len()),
        });
    }
    results.sort_by(by_score_then_words);
    results.truncate(config.n);
    Ok(results)
}

/// Every path's word sequence, in arc order. Fails above `bound` paths.
pub fn enumerate_sentences(lattice: &Lattice, bound: u64) -> Result<Vec<Vec<String>>, DecodeError> {
    let paths = lattice.count_paths()?;
    if paths > BigUint::from(bound) {
        return Err(DecodeError::TooManyPaths { paths, bound });
    }
    fn walk(l: &Lattice, s: StateId, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if s == l.final_state() {
            out.push(prefix.clone());
            return;
        }
        for t in l.arcs_from(s) {
            match &t.label {
                Label::Epsilon => walk(l, t.target, prefix, out),
                Label::Word(w) => {
                    prefix.push(w.to_string());
                    walk(l, t.target, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(lattice, lattice.start(), &mut Vec::new(), &mut out);
    Ok(out)
}

/// Scores every distinct sentence of the lattice and keeps the best `n`.
pub fn brute_force_nbest<M: LanguageModel + ?Sized>(
    lattice: &Lattice,
    model: &M,
    n: usize,
    bound: u64,
) -> Result<Vec<ScoredSentence>, DecodeError> {
    let mut seen = HashSet::new();
    let mut results: Vec<ScoredSentence> = enumerate_sentences(lattice, bound)?
        .into_iter()
        .filter(|s| seen.insert(s.clone()))
        .map(|words| {
            let logprob = sentence_logprob(model, &words);
            let corrected = logprob + length_bonus(words.len());
            ScoredSentence { words, logprob, corrected }
        })
        .collect();
    results.sort_by(by_score_then_words);
    results.truncate(n);
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomMode {
    /// Every complete path is equally likely.
    #[default]
    UniformPath,
    /// Every outgoing arc of a state is equally likely.
    UniformArc,
}

/// Samples a path with a ChaCha8 generator seeded from `seed`.
pub fn random_path(lattice: &Lattice, seed: u64, mode: RandomMode) -> Result<Vec<String>, DecodeError> {
    let counts = lattice.suffix_path_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::new();
    let mut s = lattice.start();
    while s != lattice.final_state() {
        let arcs = lattice.arcs_from(s);
        let arc = match mode {
            RandomMode::UniformArc => &arcs[rng.gen_range(0..arcs.len())],
            RandomMode::UniformPath => {
                let mut pick = rng.gen_biguint_below(&counts[s]);
                let mut chosen = None;
                for t in arcs {
                    if pick < counts[t.target] {
                        chosen = Some(t);
                        break;
                    }
                    pick -= &counts[t.target];
                }
                chosen.expect("suffix counts sum to the state's count")
            }
        };
        if let Label::Word(w) = &arc.label {
            words.push(w.to_string());
        }
        s = arc.target;
    }
    Ok(words)
}

/// Follows the first outgoing arc of every state.
pub fn default_path(lattice: &Lattice) -> Result<Vec<String>, DecodeError> {
    let report = lattice.validate();
    if !report.is_ok() {
        return Err(LatticeError::Invalid(report).into());
    }
    let mut words = Vec::new();
    let mut s = lattice.start();
    while s != lattice.final_state() {
        let arc = &lattice.arcs_from(s)[0];
        if let Label::Word(w) = &arc.label {
            words.push(w.to_string());
        }
        s = arc.target;
    }
    Ok(words)
}

/// Scores each sentence and sorts by corrected score, keeping input order
/// among equal scores.
pub fn rank_sentences<M: LanguageModel + ?Sized, S: AsRef<str>>(model: &M, sentences: &[Vec<S>]) -> Vec<ScoredSentence> {
    let mut scored: Vec<ScoredSentence> = sentences
        .iter()
        .map(|words| {
            let logprob = sentence_logprob(model, words);
            ScoredSentence {
                words: words.iter().map(|w| w.as_ref().to_string()).collect(),
                logprob,
                corrected: logprob + length_bonus(words.len()),
            }
        })
        .collect();
    scored.sort_by(|a, b| b.corrected.total_cmp(&a.corrected));
    scored
}

/// One numbered result line: `k<TAB>sentence<TAB>[ score ]`.
pub fn format_result(rank: usize, s: &ScoredSentence) -> String {
    format!("{rank}\t{}\t[ {:.6} ]", s.text(), s.corrected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{epsilon, or, seq, wrd};
    use crate::lm::{corrected_score, train, LmConfig, NGramModel};

    fn w(s: &str) -> Lattice {
        wrd(s).unwrap()
    }

    fn model() -> NGramModel {
        let corpus: Vec<Vec<String>> = ["the deficit fell", "a deficit fell", "the large deficit fell", "deficits fell"]
            .iter()
            .map(|s| s.split(' ').map(String::from).collect())
            .collect();
        train(&corpus, 2, LmConfig::default()).unwrap()
    }

    fn eight_path() -> Lattice {
        seq(vec![
            or(vec![w("the"), w("a"), w("an"), epsilon()]).unwrap(),
            w("large"),
            w("Federal"),
            or(vec![w("deficit"), w("deficits")]).unwrap(),
            w("fell"),
        ])
        .unwrap()
    }

    #[test]
    fn exhaustive_n_returns_everything_sorted() {
        let m = model();
        let l = eight_path();
        let all = nbest(&l, &m, BeamConfig::exact(100)).unwrap();
        assert_eq!(all.len(), 8);
        assert!(all.windows(2).all(|p| p[0].corrected >= p[1].corrected));
        assert_eq!(all, brute_force_nbest(&l, &m, 100, DEFAULT_PATH_BOUND).unwrap());
    }

    #[test]
    fn single_path_scores_like_corrected_score() {
        let m = model();
        let l = seq(vec![w("the"), w("deficit"), w("fell")]).unwrap();
        let r = nbest(&l, &m, BeamConfig::exact(3)).unwrap();
        assert_eq!(r, vec![corrected_score(&m, &["the", "deficit", "fell"])]);
    }

    #[test]
    fn duplicate_sequences_collapse() {
        let m = model();
        let l = or(vec![w("fell"), w("fell"), seq(vec![epsilon(), w("fell")]).unwrap()]).unwrap();
        assert_eq!(brute_force_nbest(&l, &m, 10, 100).unwrap().len(), 1);
        assert_eq!(nbest(&l, &m, BeamConfig::exact(10)).unwrap().len(), 1);
    }

    #[test]
    fn zero_n_and_bad_beam() {
        let m = model();
        let l = eight_path();
        assert!(nbest(&l, &m, BeamConfig::exact(0)).unwrap().is_empty());
        assert!(brute_force_nbest(&l, &m, 0, 100).unwrap().is_empty());
        assert_eq!(
            nbest(&l, &m, BeamConfig { n: 5, k: 2, global_beam: None }),
            Err(DecodeError::BeamTooSmall { n: 5, k: 2 })
        );
        assert!(matches!(brute_force_nbest(&l, &m, 1, 4), Err(DecodeError::TooManyPaths { .. })));
    }

    #[test]
    fn tight_beam_still_exact() {
        let m = model();
        let l = eight_path();
        for n in 1..=8 {
            assert_eq!(
                nbest(&l, &m, BeamConfig::exact(n)).unwrap(),
                brute_force_nbest(&l, &m, n, DEFAULT_PATH_BOUND).unwrap()
            );
        }
    }

    #[test]
    fn default_takes_first_arcs() {
        assert_eq!(default_path(&eight_path()).unwrap(), ["the", "large", "Federal", "deficit", "fell"]);
        let enumerated = enumerate_sentences(&eight_path(), 100).unwrap();
        assert_eq!(enumerated[0], default_path(&eight_path()).unwrap());
    }

    #[test]
    fn random_is_seeded_and_uniform() {
        let l = eight_path();
        assert_eq!(random_path(&l, 7, RandomMode::UniformPath), random_path(&l, 7, RandomMode::UniformPath));
        let single = seq(vec![w("a"), w("b")]).unwrap();
        for seed in 0..5 {
            assert_eq!(random_path(&single, seed, RandomMode::UniformPath).unwrap(), ["a", "b"]);
        }
        // x takes one of two arcs from the start but only one of three paths
        let skew = or(vec![w("x"), or(vec![w("y"), w("z")]).unwrap()]).unwrap();
        let n = 6000;
        let xs = (0..n)
            .filter(|&s| random_path(&skew, s, RandomMode::UniformPath).unwrap() == ["x"])
            .count() as f64;
        let p: f64 = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((xs - n as f64 * p).abs() < 3.0 * sd, "{xs}");
    }

    #[test]
    fn rank_is_stable_and_formatted() {
        let m = model();
        let sentences = vec![vec!["deficits", "fell"], vec!["the", "deficit", "fell"], vec!["deficits", "fell"]];
        let ranked = rank_sentences(&m, &sentences);
        assert_eq!(ranked.len(), 3);
        let dupes: Vec<_> = ranked.iter().filter(|s| s.words == ["deficits", "fell"]).collect();
        assert_eq!(dupes[0].corrected, dupes[1].corrected);
        let line = format_result(1, &ranked[0]);
        assert!(line.starts_with("1\t"), "{line}");
        assert!(line.ends_with(" ]"));
        assert!(line.contains("\t[ -"));
    }
}
