//! Smoothed bigram/trigram language model.
//!
//! Counts are re-estimated with Simple Good-Turing (Gale & Sampson): raw
//! Turing estimates for small counts, switching to a log-log regression of
//! the frequency-of-frequency curve once the two disagree by less than 1.96
//! standard deviations. Each seen context keeps the discounted mass of its
//! seen continuations and hands the rest to unseen ones in proportion to the
//! next-lower-order distribution. Probabilities are log10.
//!
//! Tokens are lowercased surface forms, `<NUM>` for anything with a digit and
//! `<NAME>` for capitalized words that are not sentence-initial dictionary
//! words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const NAME: &str = "<NAME>";
pub const NUM: &str = "<NUM>";

pub const BOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;

pub const MODEL_HEADER: &str = "NGM v1";

/// Length bonus per emitted word.
pub const LENGTH_WEIGHT: f64 = 0.5;

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "co.", "corp.", "inc.", "ltd.", "vs.", "etc.",
    "e.g.", "i.e.", "u.s.", "jan.", "feb.", "aug.", "sept.", "oct.", "nov.", "dec.",
];

/// Words that are known lowercase even if a corpus only shows them
/// capitalized at the start of a sentence. They are never classed as names.
const CLOSED_CLASS: &[&str] = &[
    "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers", "it", "its",
    "we", "us", "our", "ours", "they", "them", "their", "theirs", "the", "a", "an", "this", "that", "these",
    "those", "and", "or", "but", "if", "of", "in", "on", "at", "to", "for", "by", "with", "from", "as", "is",
    "was", "are", "were", "be", "been", "not", "no", "there", "what", "who", "mr.", "mrs.", "ms.", "dr.",
];

const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '`'];
const TRAILERS: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', ')', ']', '}'];
const CLOSERS: &[&str] = &["\"", "'", ")", "]", "}"];

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

/// Splits text into sentences of raw (case-preserving) tokens.
pub fn segment(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut ended = false;
    let push = |tok: String, current: &mut Vec<String>, ended: &mut bool, sentences: &mut Vec<Vec<String>>| {
        if *ended && !CLOSERS.contains(&tok.as_str()) {
            sentences.push(std::mem::take(current));
            *ended = false;
        }
        let term = is_terminal(&tok);
        current.push(tok);
        if term {
            *ended = true;
        }
    };
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        while let Some(c) = rest.chars().next().filter(|c| OPENERS.contains(c)) {
            if rest.len() == c.len_utf8() {
                break;
            }
            push(c.to_string(), &mut current, &mut ended, &mut sentences);
            rest = &rest[c.len_utf8()..];
        }
        if ABBREVIATIONS.contains(&rest.to_lowercase().as_str()) {
            push(rest.to_string(), &mut current, &mut ended, &mut sentences);
            continue;
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().next_back().filter(|c| TRAILERS.contains(c)) {
            if rest.len() == c.len_utf8() {
                break;
            }
            trailing.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        }
        push(rest.to_string(), &mut current, &mut ended, &mut sentences);
        for t in trailing.into_iter().rev() {
            push(t, &mut current, &mut ended, &mut sentences);
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// The set of words known in lowercase, used to decide whether a
/// sentence-initial capital marks a name.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    pub fn from_sentences(sentences: &[Vec<String>]) -> Self {
        let words = sentences
            .iter()
            .flatten()
            .filter(|t| !t.chars().next().is_some_and(char::is_uppercase))
            .map(|t| t.to_lowercase())
            .collect();
        Lexicon { words }
    }

    pub fn contains(&self, lower: &str) -> bool {
        self.words.contains(lower) || CLOSED_CLASS.contains(&lower)
    }
}

pub fn classify_token(token: &str, initial: bool, lexicon: &Lexicon) -> String {
    if token.chars().any(|c| c.is_ascii_digit()) {
        return NUM.to_string();
    }
    let lower = token.to_lowercase();
    if token.chars().next().is_some_and(char::is_uppercase) {
        let closed = CLOSED_CLASS.contains(&lower.as_str());
        if !closed && (!initial || !lexicon.contains(&lower)) {
            return NAME.to_string();
        }
    }
    lower
}

/// Sentence-segments and classifies `text`, bracketing each sentence with
/// `<s>` and `</s>`.
pub fn tokenize(text: &str) -> Vec<Vec<String>> {
    let raw = segment(text);
    let lexicon = Lexicon::from_sentences(&raw);
    raw.iter()
        .map(|s| {
            let mut out = Vec::with_capacity(s.len() + 2);
            out.push(BOS.to_string());
            out.extend(s.iter().enumerate().map(|(i, t)| classify_token(t, i == 0, &lexicon)));
            out.push(EOS.to_string());
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodTuring {
    /// Probability mass reserved for unseen events.
    pub unseen_mass: f64,
    /// r -> (raw r*, renormalized r*).
    pub adjusted: BTreeMap<u64, (f64, f64)>,
    /// First r at which the smoothed estimate replaced the Turing estimate.
    pub switch_at: Option<u64>,
    pub intercept: f64,
    pub slope: f64,
    /// Maximum-likelihood fallback was used.
    pub fallback: bool,
    pub total: u64,
}

impl GoodTuring {
    pub fn raw_rstar(&self, r: u64) -> Option<f64> {
        self.adjusted.get(&r).map(|a| a.0)
    }

    /// Adjusted count, renormalized so that seen and unseen mass sum to one.
    pub fn rstar(&self, r: u64) -> Option<f64> {
        self.adjusted.get(&r).map(|a| a.1)
    }

    /// Σ N_r r*(r) / N + unseen mass; equals one up to rounding.
    pub fn total_mass(&self, freq_of_freq: &BTreeMap<u64, u64>) -> f64 {
        let seen: f64 = freq_of_freq
            .iter()
            .map(|(&r, &n)| n as f64 * self.rstar(r).unwrap_or(0.0))
            .sum::<f64>()
            / self.total as f64;
        seen + self.unseen_mass
    }
}

/// Simple Good-Turing over a frequency-of-frequency table.
pub fn good_turing_adjust(freq_of_freq: &BTreeMap<u64, u64>, total: u64, floor: f64) -> Result<GoodTuring, LmError> {
    let table: Vec<(u64, u64)> = freq_of_freq.iter().filter(|(_, &n)| n > 0).map(|(&r, &n)| (r, n)).collect();
    if total == 0 || table.is_empty() || table.iter().any(|&(r, _)| r == 0) {
        return Err(LmError::EmptyCorpus);
    }
    let n_total = total as f64;
    let n1 = freq_of_freq.get(&1).copied().unwrap_or(0);
    let mut gt = GoodTuring {
        unseen_mass: n1 as f64 / n_total,
        adjusted: BTreeMap::new(),
        switch_at: None,
        intercept: 0.0,
        slope: 0.0,
        fallback: false,
        total,
    };

    if table.len() == 1 {
        gt.fallback = true;
        gt.unseen_mass = floor;
        for &(r, _) in &table {
            let v = r as f64 * (1.0 - floor);
            gt.adjusted.insert(r, (v, v));
        }
        return Ok(gt);
    }
    if n1 == 0 {
        for &(r, _) in &table {
            gt.adjusted.insert(r, (r as f64, r as f64));
        }
        return Ok(gt);
    }

    // Z_r averages N_r over the gap to its neighbours before regressing.
    let k = table.len();
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for j in 0..k {
        let (r, n) = table[j];
        let q = if j == 0 { 0.0 } else { table[j - 1].0 as f64 };
        let t = if j + 1 < k { table[j + 1].0 as f64 } else { 2.0 * r as f64 - q };
        xs.push((r as f64).ln());
        ys.push((2.0 * n as f64 / (t - q)).ln());
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    gt.slope = slope;
    gt.intercept = intercept;

    let lookup: HashMap<u64, u64> = table.iter().copied().collect();
    let mut switched = false;
    for &(r, n) in &table {
        let rf = r as f64;
        let smoothed = (rf + 1.0) * (1.0 + 1.0 / rf).powf(slope);
        let next = lookup.get(&(r + 1)).copied().unwrap_or(0);
        if !switched && next == 0 {
            switched = true;
            gt.switch_at = Some(r);
        }
        let raw = if switched {
            smoothed
        } else {
            let (nf, next_f) = (n as f64, next as f64);
            let turing = (rf + 1.0) * next_f / nf;
            let sd = ((rf + 1.0).powi(2) * next_f / (nf * nf) * (1.0 + next_f / nf)).sqrt();
            if (turing - smoothed).abs() > 1.96 * sd {
                turing
            } else {
                switched = true;
                gt.switch_at = Some(r);
                smoothed
            }
        };
        gt.adjusted.insert(r, (raw, raw));
    }

    let seen_raw: f64 = table.iter().map(|&(r, n)| n as f64 * gt.adjusted[&r].0).sum();
    let scale = (1.0 - gt.unseen_mass) * n_total / seen_raw;
    for v in gt.adjusted.values_mut() {
        v.1 = v.0 * scale;
    }
    Ok(gt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    /// Lower bound on the unseen mass of every context, and the reserved
    /// mass when a count table is too degenerate to smooth.
    pub unseen_floor: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { unseen_floor: 1e-3 }
    }
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unsupported model order {0} (expected 2 or 3)")]
    BadOrder(usize),
    #[error("unseen floor must be in (0, 1), got {0}")]
    BadFloor(f64),
    #[error("model version mismatch: expected {MODEL_HEADER:?}, found {0:?}")]
    VersionMismatch(String),
    #[error("model checksum mismatch (file truncated or modified)")]
    Checksum,
    #[error("model file line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
struct ContextInfo {
    total: u64,
    unseen_mass: f64,
    /// 1 − Σ lower-order probability of the continuations seen here.
    backoff_denom: f64,
}

/// The LM interface used by scoring and decoding. A context is the last two
/// token ids; bigram models keep the first slot fixed.
pub trait LanguageModel {
    fn start(&self) -> [TokenId; 2];
    fn classify(&self, word: &str, initial: bool) -> TokenId;
    /// Log10 probability of `tok` after `ctx`, and the next context.
    fn step(&self, ctx: &[TokenId; 2], tok: TokenId) -> (f64, [TokenId; 2]);
    /// Log10 probability of the end-of-sentence marker after `ctx`.
    fn finish(&self, ctx: &[TokenId; 2]) -> f64;
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    config: LmConfig,
    corpus_tokens: u64,
    sentences: u64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// counts[m-1]: m-gram -> count
    counts: Vec<HashMap<Vec<TokenId>, u64>>,
    good_turing: Vec<GoodTuring>,
    /// logp[m-1]: seen m-gram -> log10 P(last | rest)
    logp: Vec<HashMap<Vec<TokenId>, f64>>,
    /// contexts[m-1]: (m-1)-token history -> info
    contexts: Vec<HashMap<Vec<TokenId>, ContextInfo>>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn corpus_tokens(&self) -> u64 {
        self.corpus_tokens
    }

    pub fn sentences(&self) -> u64 {
        self.sentences
    }

    pub fn config(&self) -> LmConfig {
        self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token_id(&self, tok: &str) -> Option<TokenId> {
        self.index.get(tok).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.vocab[id as usize]
    }

    pub fn good_turing(&self, m: usize) -> &GoodTuring {
        &self.good_turing[m - 1]
    }

    /// Distinct m-grams seen in training.
    pub fn ngram_count(&self, m: usize) -> usize {
        self.counts[m - 1].len()
    }

    /// Log10 P(w | history), backing off through lower orders.
    pub fn logprob_ids(&self, history: &[TokenId], w: TokenId) -> f64 {
        let m = history.len() + 1;
        let mut key = history.to_vec();
        key.push(w);
        if let Some(&lp) = self.logp[m - 1].get(&key) {
            return lp;
        }
        if m == 1 {
            return self.contexts[0][&Vec::new()].unseen_mass.log10();
        }
        let lower = self.logprob_ids(&history[1..], w);
        match self.contexts[m - 1].get(history) {
            Some(ctx) => ctx.unseen_mass.log10() + lower - ctx.backoff_denom.log10(),
            None => lower,
        }
    }

    /// Log10 P(w | history) over classified tokens; unknown strings are `<unk>`.
    pub fn logprob(&self, history: &[&str], w: &str) -> f64 {
        let id = |t: &str| self.token_id(t).unwrap_or(UNK_ID);
        let hist: Vec<TokenId> = history.iter().map(|t| id(t)).collect();
        self.logprob_ids(&hist, id(w))
    }

    /// Unseen mass reserved by a seen context, if it was seen.
    pub fn unseen_mass(&self, history: &[&str]) -> Option<f64> {
        let hist: Option<Vec<TokenId>> = history.iter().map(|t| self.token_id(t)).collect();
        self.contexts[history.len()].get(&hist?).map(|c| c.unseen_mass)
    }

    /// Every seen context of order m, as token strings.
    pub fn seen_contexts(&self, m: usize) -> Vec<Vec<&str>> {
        self.contexts[m - 1].keys().map(|k| k.iter().map(|&t| self.token(t)).collect()).collect()
    }

    fn lexicon_contains(&self, lower: &str) -> bool {
        self.index.contains_key(lower) || CLOSED_CLASS.contains(&lower)
    }
}

impl LanguageModel for NGramModel {
    fn start(&self) -> [TokenId; 2] {
        [BOS_ID, BOS_ID]
    }

    fn classify(&self, word: &str, initial: bool) -> TokenId {
        let tok = if word.chars().any(|c| c.is_ascii_digit()) {
            NUM.to_string()
        } else {
            let lower = word.to_lowercase();
            let capital = word.chars().next().is_some_and(char::is_uppercase);
            if capital && !CLOSED_CLASS.contains(&lower.as_str()) && (!initial || !self.lexicon_contains(&lower)) {
                NAME.to_string()
            } else {
                lower
            }
        };
        self.token_id(&tok).unwrap_or(UNK_ID)
    }

    fn step(&self, ctx: &[TokenId; 2], tok: TokenId) -> (f64, [TokenId; 2]) {
        let lp = self.logprob_ids(&ctx[3 - self.order..], tok);
        let next = if self.order == 2 { [BOS_ID, tok] } else { [ctx[1], tok] };
        (lp, next)
    }

    fn finish(&self, ctx: &[TokenId; 2]) -> f64 {
        self.logprob_ids(&ctx[3 - self.order..], EOS_ID)
    }
}

/// Trains an order-2 or order-3 model. Boundary symbols in the input are
/// ignored; every sentence is padded here.
pub fn train(sentences: &[Vec<String>], order: usize, config: LmConfig) -> Result<NGramModel, LmError> {
    if !(2..=3).contains(&order) {
        return Err(LmError::BadOrder(order));
    }
    if !(config.unseen_floor > 0.0 && config.unseen_floor < 1.0) {
        return Err(LmError::BadFloor(config.unseen_floor));
    }
    let body: Vec<Vec<&str>> = sentences
        .iter()
        .map(|s| s.iter().map(String::as_str).filter(|t| *t != BOS && *t != EOS).collect())
        .collect();
    if body.is_empty() {
        return Err(LmError::EmptyCorpus);
    }

    let mut words: Vec<&str> = body.iter().flatten().copied().collect();
    words.sort_unstable();
    words.dedup();
    let mut vocab: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
    vocab.extend(words.into_iter().filter(|w| *w != UNK).map(String::from));
    let index: HashMap<String, TokenId> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();

    let mut counts = vec![HashMap::new(); order];
    for s in &body {
        let mut padded = vec![BOS_ID; order - 1];
        padded.extend(s.iter().map(|w| index[*w]));
        padded.push(EOS_ID);
        for i in order - 1..padded.len() {
            for m in 1..=order {
                *counts[m - 1].entry(padded[i + 1 - m..=i].to_vec()).or_insert(0u64) += 1;
            }
        }
    }
    finalize(order, config, body.len() as u64, vocab, index, counts)
}

fn finalize(
    order: usize,
    config: LmConfig,
    sentences: u64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    counts: Vec<HashMap<Vec<TokenId>, u64>>,
) -> Result<NGramModel, LmError> {
    let corpus_tokens: u64 = counts[0].values().sum();
    let mut model = NGramModel {
        order,
        config,
        corpus_tokens,
        sentences,
        vocab,
        index,
        counts,
        good_turing: Vec::new(),
        logp: Vec::new(),
        contexts: Vec::new(),
    };
    for m in 1..=order {
        let mut fof = BTreeMap::new();
        for &c in model.counts[m - 1].values() {
            *fof.entry(c).or_insert(0u64) += 1;
        }
        let gt = good_turing_adjust(&fof, corpus_tokens, config.unseen_floor)?;

        // Group continuations by history, in a fixed order so that float sums
        // are reproducible.
        let mut by_ctx: BTreeMap<Vec<TokenId>, Vec<(TokenId, u64)>> = BTreeMap::new();
        for (gram, &c) in &model.counts[m - 1] {
            by_ctx.entry(gram[..m - 1].to_vec()).or_default().push((gram[m - 1], c));
        }
        let mut logp = HashMap::new();
        let mut contexts = HashMap::new();
        for (hist, mut conts) in by_ctx {
            conts.sort_unstable();
            let total: u64 = conts.iter().map(|c| c.1).sum();
            let mut probs: Vec<f64> = conts
                .iter()
                .map(|&(_, r)| {
                    let d = (gt.rstar(r).unwrap() / r as f64).min(1.0);
                    d * r as f64 / total as f64
                })
                .collect();
            let seen: f64 = probs.iter().sum();
            let mut unseen = 1.0 - seen;
            if unseen < config.unseen_floor {
                let scale = (1.0 - config.unseen_floor) / seen;
                probs.iter_mut().for_each(|p| *p *= scale);
                unseen = config.unseen_floor;
            }
            let backoff_denom = if m == 1 {
                1.0
            } else {
                let lower_seen: f64 = conts.iter().map(|&(w, _)| 10f64.powf(model.logprob_ids(&hist[1..], w))).sum();
                1.0 - lower_seen
            };
            for (&(w, _), p) in conts.iter().zip(&probs) {
                let mut key = hist.clone();
                key.push(w);
                logp.insert(key, p.log10());
            }
            contexts.insert(hist, ContextInfo { total, unseen_mass: unseen, backoff_denom });
        }
        model.good_turing.push(gt);
        model.logp.push(logp);
        model.contexts.push(contexts);
    }
    Ok(model)
}

/// Trains on raw text after tokenizing it.
pub fn train_text(text: &str, order: usize, config: LmConfig) -> Result<NGramModel, LmError> {
    train(&tokenize(text), order, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredSentence {
    pub words: Vec<String>,
    pub logprob: f64,
    pub corrected: f64,
}

impl ScoredSentence {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

pub fn length_bonus(len: usize) -> f64 {
    LENGTH_WEIGHT * len as f64
}

/// Log10 likelihood including the `<s>` and `</s>` transitions.
pub fn sentence_logprob<M: LanguageModel + ?Sized, S: AsRef<str>>(model: &M, words: &[S]) -> f64 {
    let mut ctx = model.start();
    let mut total = 0.0;
    for (i, w) in words.iter().enumerate() {
        let (lp, next) = model.step(&ctx, model.classify(w.as_ref(), i == 0));
        total += lp;
        ctx = next;
    }
    total + model.finish(&ctx)
}

pub fn corrected_score<M: LanguageModel + ?Sized, S: AsRef<str>>(model: &M, words: &[S]) -> ScoredSentence {
    let logprob = sentence_logprob(model, words);
    ScoredSentence {
        words: words.iter().map(|w| w.as_ref().to_string()).collect(),
        logprob,
        corrected: logprob + length_bonus(words.len()),
    }
}

fn ngram_text(model: &NGramModel, gram: &[TokenId]) -> String {
    gram.iter().map(|&t| model.token(t)).collect::<Vec<_>>().join(" ")
}

/// Serializes the model. Output depends only on the counts and config.
pub fn write_model(model: &NGramModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_HEADER} order={} corpus_tokens={}", model.order, model.corpus_tokens).unwrap();
    writeln!(
        out,
        "META sentences={} vocab={} unseen_floor={}",
        model.sentences,
        model.vocab.len(),
        model.config.unseen_floor
    )
    .unwrap();
    for (i, gt) in model.good_turing.iter().enumerate() {
        let switch = gt.switch_at.map_or("none".to_string(), |r| r.to_string());
        writeln!(
            out,
            "GT {} unseen_mass={} switch_at={} intercept={} slope={} fallback={}",
            i + 1,
            gt.unseen_mass,
            switch,
            gt.intercept,
            gt.slope,
            gt.fallback
        )
        .unwrap();
    }
    for m in 1..=model.order {
        writeln!(out, "\\{m}-grams").unwrap();
        let mut rows: Vec<(String, u64, f64)> = model.counts[m - 1]
            .iter()
            .map(|(g, &c)| (ngram_text(model, g), c, model.logp[m - 1][g]))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (g, c, lp) in rows {
            writeln!(out, "{g}\t{c}\t{lp}").unwrap();
        }
    }
    for m in 1..=model.order {
        let mut rows: Vec<(String, f64)> = model.contexts[m - 1]
            .iter()
            .map(|(h, c)| (ngram_text(model, h), c.unseen_mass))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (h, mass) in rows {
            writeln!(out, "UNSEEN\t{h}\t{mass}").unwrap();
        }
    }
    writeln!(out, "CLASS\t{NUM}\tcontains-digit").unwrap();
    writeln!(out, "CLASS\t{NAME}\tcapitalized-non-initial-or-unknown").unwrap();
    let digest = Sha256::digest(out.as_bytes());
    writeln!(out, "CHECKSUM {}", hex::encode(digest)).unwrap();
    out
}

fn field<T: std::str::FromStr>(line: usize, text: &str, key: &str) -> Result<T, LmError> {
    let bad = || LmError::Syntax { line, message: format!("missing or bad {key}=") };
    text.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(bad)?
        .parse()
        .map_err(|_| bad())
}

/// Reads a model written by [`write_model`]. Probabilities are recomputed
/// from the counts and must agree with the stored values.
pub fn read_model(text: &str) -> Result<NGramModel, LmError> {
    let first = text.lines().next().unwrap_or("");
    if !first.starts_with(&format!("{MODEL_HEADER} ")) {
        return Err(LmError::VersionMismatch(first.split(" order=").next().unwrap_or("").to_string()));
    }
    let body_end = text.rfind("CHECKSUM ").ok_or(LmError::Checksum)?;
    if body_end > 0 && !text[..body_end].ends_with('\n') {
        return Err(LmError::Checksum);
    }
    let (body, trailer) = text.split_at(body_end);
    let stored = trailer.trim_end_matches('\n').strip_prefix("CHECKSUM ").unwrap_or("");
    if hex::encode(Sha256::digest(body.as_bytes())) != stored {
        return Err(LmError::Checksum);
    }

    let lines: Vec<&str> = body.lines().collect();
    let order: usize = field(1, lines[0], "order")?;
    if !(2..=3).contains(&order) {
        return Err(LmError::BadOrder(order));
    }
    let meta = lines.get(1).copied().unwrap_or("");
    let sentences: u64 = field(2, meta, "sentences")?;
    let unseen_floor: f64 = field(2, meta, "unseen_floor")?;
    let config = LmConfig { unseen_floor };

    let mut section = 0usize;
    let mut grams: Vec<Vec<(Vec<String>, u64, String)>> = vec![Vec::new(); order];
    for (i, line) in lines.iter().enumerate().skip(2) {
        let lineno = i + 1;
        if let Some(m) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams")) {
            section = m.parse().map_err(|_| LmError::Syntax { line: lineno, message: "bad section".into() })?;
            if section == 0 || section > order {
                return Err(LmError::Syntax { line: lineno, message: format!("unexpected {section}-gram section") });
            }
            continue;
        }
        if line.starts_with("GT ") || line.starts_with("UNSEEN\t") || line.starts_with("CLASS\t") {
            section = 0;
            continue;
        }
        if section == 0 {
            return Err(LmError::Syntax { line: lineno, message: format!("unexpected line {line:?}") });
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let [gram, count, lp] = parts[..] else {
            return Err(LmError::Syntax { line: lineno, message: "expected ngram<TAB>count<TAB>logprob".into() });
        };
        let toks: Vec<String> = gram.split(' ').map(String::from).collect();
        let count: u64 = count.parse().map_err(|_| LmError::Syntax { line: lineno, message: "bad count".into() })?;
        if toks.len() != section || count == 0 {
            return Err(LmError::Syntax { line: lineno, message: "bad n-gram entry".into() });
        }
        grams[section - 1].push((toks, count, lp.to_string()));
    }

    let mut words: Vec<&str> = grams[0].iter().map(|(t, _, _)| t[0].as_str()).filter(|w| *w != EOS).collect();
    words.sort_unstable();
    let mut vocab: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
    vocab.extend(words.into_iter().map(String::from));
    let index: HashMap<String, TokenId> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
    let mut counts = vec![HashMap::new(); order];
    for (m, rows) in grams.iter().enumerate() {
        for (toks, c, _) in rows {
            let ids = toks
                .iter()
                .map(|t| index.get(t).copied())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| LmError::Syntax { line: 0, message: format!("n-gram {toks:?} uses unknown tokens") })?;
            counts[m].insert(ids, *c);
        }
    }
    let model = finalize(order, config, sentences, vocab, index, counts)?;
    for (m, rows) in grams.iter().enumerate() {
        for (toks, _, lp) in rows {
            let ids: Vec<TokenId> = toks.iter().map(|t| model.index[t]).collect();
            if model.logp[m][&ids].to_string() != *lp {
                return Err(LmError::Syntax {
                    line: 0,
                    message: format!("stored probability for {:?} disagrees with counts", toks.join(" ")),
                });
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
    }

    fn repeated(s: &str, n: usize) -> Vec<Vec<String>> {
        sents(&vec![s; n])
    }

    #[test]
    fn tokenize_single_sentence() {
        assert_eq!(tokenize("She left."), [["<s>", "she", "left", ".", "</s>"]]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn abbreviation_guard() {
        let raw = segment("Mr. Smith ran. He fell.");
        assert_eq!(raw, [vec!["Mr.", "Smith", "ran", "."], vec!["He", "fell", "."]]);
        let toks = tokenize("Mr. Smith ran. He fell.");
        assert_eq!(toks[0], ["<s>", "mr.", "<NAME>", "ran", ".", "</s>"]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let raw = segment("He said \"no.\" Then (quietly) left!");
        assert_eq!(raw[0], ["He", "said", "\"", "no", ".", "\""]);
        assert_eq!(raw[1], ["Then", "(", "quietly", ")", "left", "!"]);
    }

    #[test]
    fn classification() {
        let lex = Lexicon::from_sentences(&sents(&["the dog ran"]));
        assert_eq!(classify_token("1989", false, &lex), NUM);
        assert_eq!(classify_token("Perkin", false, &lex), NAME);
        assert_eq!(classify_token("the", false, &lex), "the");
        assert_eq!(classify_token("The", true, &lex), "the");
        assert_eq!(classify_token("Smith", true, &lex), NAME);
        assert_eq!(classify_token("He", true, &lex), "he");
    }

    #[test]
    fn raw_turing_example() {
        let fof = BTreeMap::from([(1, 3), (2, 1)]);
        let gt = good_turing_adjust(&fof, 5, 1e-3).unwrap();
        assert!((gt.raw_rstar(1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((gt.unseen_mass - 3.0 / 5.0).abs() < 1e-15);
        assert!((gt.total_mass(&fof) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_singletons_means_no_discount() {
        let fof = BTreeMap::from([(2, 4), (3, 1)]);
        let gt = good_turing_adjust(&fof, 11, 1e-3).unwrap();
        assert_eq!(gt.unseen_mass, 0.0);
        assert_eq!(gt.rstar(2), Some(2.0));
        assert_eq!(gt.rstar(3), Some(3.0));
    }

    #[test]
    fn degenerate_table_falls_back() {
        let fof = BTreeMap::from([(100, 3)]);
        let gt = good_turing_adjust(&fof, 300, 1e-3).unwrap();
        assert!(gt.fallback);
        assert_eq!(gt.unseen_mass, 1e-3);
        assert!((gt.total_mass(&fof) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_tail_switches_to_regression() {
        // Zipf-ish table: N_r ~ 1000 / r^2
        let fof: BTreeMap<u64, u64> = (1..=40u64).map(|r| (r, (1000 / (r * r)).max(1))).collect();
        let total = fof.iter().map(|(r, n)| r * n).sum();
        let gt = good_turing_adjust(&fof, total, 1e-3).unwrap();
        assert!(gt.switch_at.is_some());
        assert!(gt.slope < -1.0);
        assert!((gt.total_mass(&fof) - 1.0).abs() < 1e-9);
    }

    fn vocab_sum(model: &NGramModel, hist: &[TokenId]) -> f64 {
        (1..model.vocab().len() as TokenId).map(|w| 10f64.powf(model.logprob_ids(hist, w))).sum()
    }

    #[test]
    fn repeated_sentence_model() {
        let model = train(&repeated("a b", 100), 2, LmConfig::default()).unwrap();
        let ab = sentence_logprob(&model, &["a", "b"]);
        assert!(ab > sentence_logprob(&model, &["a", "a"]));
        assert!(ab > sentence_logprob(&model, &["b", "a"]));
        assert!(model.logprob(&["a"], "b") > model.logprob(&["a"], "a"));
    }

    #[test]
    fn single_sentence_still_smooths() {
        let model = train(&sents(&["the cat sat"]), 2, LmConfig::default()).unwrap();
        let lp = model.logprob(&["sat"], "cat");
        assert!(lp.is_finite() && lp < 0.0);
        let unk = sentence_logprob(&model, &["zebra", "quokka"]);
        assert!(unk.is_finite() && unk < 0.0);
    }

    #[test]
    fn empty_sentence_is_boundary_only() {
        let model = train(&repeated("a b", 3), 2, LmConfig::default()).unwrap();
        assert_eq!(sentence_logprob::<_, &str>(&model, &[]), model.logprob(&[BOS], EOS));
    }

    #[test]
    fn bad_order_and_empty_corpus() {
        assert!(matches!(train(&sents(&["a"]), 4, LmConfig::default()), Err(LmError::BadOrder(4))));
        assert!(matches!(train(&[], 2, LmConfig::default()), Err(LmError::EmptyCorpus)));
    }

    const CORPUS: &str = "the deficit fell . the deficits fell sharply . a large deficit fell . \
        the large federal deficit fell . he saw me . she saw him . they saw the dog . \
        the dog saw a cat . a cat fell . the cat saw the deficit .";

    #[test]
    fn contexts_normalize_over_vocabulary() {
        for order in [2, 3] {
            let model = train(&sents(&CORPUS.split(" . ").collect::<Vec<_>>()), order, LmConfig::default()).unwrap();
            for m in 1..=order {
                for hist in model.seen_contexts(m) {
                    let ids: Vec<TokenId> = hist.iter().map(|t| model.token_id(t).unwrap()).collect();
                    let s = vocab_sum(&model, &ids);
                    assert!((s - 1.0).abs() < 1e-9, "order {order} ctx {hist:?}: {s}");
                }
            }
            // unseen histories back off to a normalized distribution too
            assert!((vocab_sum(&model, &vec![UNK_ID; order - 1]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_preserves_scores() {
        let model = train_text("The deficit fell. A large deficit fell in 1989. Mr. Smith saw it.", 3, LmConfig::default())
            .unwrap();
        let text = write_model(&model);
        assert!(text.starts_with("NGM v1 order=3 corpus_tokens="));
        let back = read_model(&text).unwrap();
        assert_eq!(write_model(&back), text);
        for s in [vec!["the", "deficit", "fell"], vec!["Smith", "saw", "1990"], vec![]] {
            assert_eq!(sentence_logprob(&model, &s), sentence_logprob(&back, &s));
        }
    }

    #[test]
    fn corrupted_models_are_rejected() {
        let text = write_model(&train(&repeated("a b", 5), 2, LmConfig::default()).unwrap());
        assert!(matches!(read_model(&text[..text.len() / 2]), Err(LmError::Checksum)));
        assert!(matches!(read_model(&text.replacen("\t5\t", "\t6\t", 1)), Err(LmError::Checksum)));
        assert!(matches!(read_model(&text.replacen("NGM v1", "NGM v2", 1)), Err(LmError::VersionMismatch(_))));
    }

    #[test]
    fn names_share_a_class() {
        let model = train_text("Yesterday Smith met Jones. Then Brown left.", 2, LmConfig::default()).unwrap();
        let a = sentence_logprob(&model, &["then", "Smith", "left"]);
        let b = sentence_logprob(&model, &["then", "Kowalski", "left"]);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn length_correction_is_exact(words in proptest::collection::vec("[a-e]{1,2}", 0..12)) {
            let model = train(&sents(&["a b c", "b c d", "e a"]), 2, LmConfig::default()).unwrap();
            let s = corrected_score(&model, &words);
            prop_assert_eq!(s.corrected - s.logprob, 0.5 * words.len() as f64);
        }

        #[test]
        fn one_step_additivity(words in proptest::collection::vec("[a-e]", 1..8)) {
            let model = train(&sents(&["a b c", "b c d", "e a", "a b"]), 3, LmConfig::default()).unwrap();
            let mut ctx = model.start();
            let mut acc = 0.0;
            for (i, w) in words.iter().enumerate() {
                let (lp, next) = model.step(&ctx, model.classify(w, i == 0));
                acc += lp;
                ctx = next;
            }
            prop_assert_eq!(acc + model.finish(&ctx), sentence_logprob(&model, &words));
        }

        #[test]
        fn gt_conserves_mass(table in proptest::collection::btree_map(1u64..30, 1u64..200, 1..12)) {
            let total = table.iter().map(|(r, n)| r * n).sum();
            let gt = good_turing_adjust(&table, total, 1e-3).unwrap();
            prop_assert!((gt.total_mass(&table) - 1.0).abs() < 1e-6);
        }
    }
}
