//! Over-generating inflection.
//!
//! Every regular pattern whose condition matches the lemma is applied and all
//! distinct results are returned, leaving the choice to the language model.
//! Irregular forms come from a small exception table that overrides the
//! patterns completely.
//!
//! Shipped patterns, in declaration order:
//!
//! | feature                    | pattern            | applies when                               |
//! |----------------------------|--------------------|--------------------------------------------|
//! | plural, third-singular     | `+s`               | not after s/x/z/ch/sh, not consonant + y   |
//! | plural, third-singular     | `+es`              | after s/x/z/ch/sh/o                        |
//! | plural, third-singular     | `y -> ies`         | consonant + y                              |
//! | past, past-participle      | `+ed`              | not after e, not consonant + y             |
//! | past, past-participle      | double final + ed  | ends consonant-vowel-consonant (not w/x/y) |
//! | past, past-participle      | `e -> ed`          | after e                                    |
//! | past, past-participle      | `y -> ied`         | consonant + y                              |
//!
//! Patterns examine the lower-cased lemma; the output keeps the lemma's casing.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartOfSpeech {
    Noun,
    Verb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Citation,
    Plural,
    ThirdSingular,
    Past,
    PastParticiple,
}

impl Feature {
    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Citation => "citation",
            Feature::Plural => "plural",
            Feature::ThirdSingular => "third-singular",
            Feature::Past => "past",
            Feature::PastParticiple => "past-participle",
        }
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "citation" => Feature::Citation,
            "plural" => Feature::Plural,
            "third-singular" => Feature::ThirdSingular,
            "past" => Feature::Past,
            "past-participle" => Feature::PastParticiple,
            _ => return Err(format!("unknown feature {s:?}")),
        })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InflectionRequest {
    pub lemma: String,
    pub pos: PartOfSpeech,
    pub feature: Feature,
}

impl InflectionRequest {
    pub fn new(lemma: impl Into<String>, pos: PartOfSpeech, feature: Feature) -> Self {
        InflectionRequest { lemma: lemma.into(), pos, feature }
    }
}

/// Size above which loading an exception table logs a warning.
pub const DEFAULT_EXCEPTION_WARN_SIZE: usize = 500;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExceptionTable {
    entries: HashMap<(String, Feature), Vec<String>>,
}

impl ExceptionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, lemma: &str, feature: Feature) -> Option<&[String]> {
        self.entries.get(&(lemma.to_lowercase(), feature)).map(Vec::as_slice)
    }

    /// Returns `false` if the key was already present.
    pub fn insert(&mut self, lemma: &str, feature: Feature, forms: Vec<String>) -> bool {
        use std::collections::hash_map::Entry;
        match self.entries.entry((lemma.to_lowercase(), feature)) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(forms);
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExceptionError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate entry for {lemma} {feature}")]
    Duplicate { line: usize, lemma: String, feature: Feature },
}

pub fn load_exceptions(text: &str) -> Result<ExceptionTable, ExceptionError> {
    load_exceptions_with_limit(text, DEFAULT_EXCEPTION_WARN_SIZE)
}

/// Parses `lemma <tab> feature <tab> form[,form...]` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn load_exceptions_with_limit(text: &str, warn_size: usize) -> Result<ExceptionTable, ExceptionError> {
    let mut table = ExceptionTable::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let malformed = |message: String| ExceptionError::Malformed { line, message };
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let [lemma, feature, forms] = fields[..] else {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        if lemma.is_empty() || lemma.contains(char::is_whitespace) {
            return Err(malformed(format!("bad lemma {lemma:?}")));
        }
        let feature: Feature = feature.parse().map_err(malformed)?;
        let forms: Vec<String> = forms.split(',').map(|f| f.trim().to_string()).collect();
        if forms.iter().any(|f| f.is_empty() || f.contains(char::is_whitespace)) {
            return Err(malformed("empty or multi-word form".into()));
        }
        if !table.insert(lemma, feature, dedup(forms)) {
            return Err(ExceptionError::Duplicate { line, lemma: lemma.to_string(), feature });
        }
    }
    if table.len() > warn_size {
        log::warn!("exception table has {} entries (more than {warn_size})", table.len());
    }
    Ok(table)
}

fn dedup(forms: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(forms.len());
    for f in forms {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn ends_consonant_y(lower: &str) -> bool {
    let mut rev = lower.chars().rev();
    rev.next() == Some('y') && rev.next().is_some_and(|c| c.is_alphabetic() && !is_vowel(c))
}

fn ends_sibilant(lower: &str) -> bool {
    ["s", "x", "z", "ch", "sh"].iter().any(|e| lower.ends_with(e))
}

fn ends_cvc(lower: &str) -> bool {
    let tail: Vec<char> = lower.chars().rev().take(3).collect();
    if tail.len() < 3 {
        return false;
    }
    let (c2, v, c1) = (tail[0], tail[1], tail[2]);
    let consonant = |c: char| c.is_alphabetic() && !is_vowel(c);
    consonant(c2) && !matches!(c2, 'w' | 'x' | 'y') && is_vowel(v) && consonant(c1)
}

fn chop_last(s: &str) -> &str {
    let mut it = s.char_indices();
    match it.next_back() {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// The `-s` family shared by noun plurals and third-person singular verbs.
fn s_forms(lemma: &str, lower: &str) -> Vec<String> {
    let mut out = Vec::new();
    if !ends_sibilant(lower) && !ends_consonant_y(lower) {
        out.push(format!("{lemma}s"));
    }
    if ends_sibilant(lower) || lower.ends_with('o') {
        out.push(format!("{lemma}es"));
    }
    if ends_consonant_y(lower) {
        out.push(format!("{}ies", chop_last(lemma)));
    }
    out
}

fn ed_forms(lemma: &str, lower: &str) -> Vec<String> {
    let mut out = Vec::new();
    if !lower.ends_with('e') && !ends_consonant_y(lower) {
        out.push(format!("{lemma}ed"));
    }
    if ends_cvc(lower) {
        let last = lemma.chars().next_back().expect("non-empty");
        out.push(format!("{lemma}{last}ed"));
    }
    if lower.ends_with('e') {
        out.push(format!("{lemma}d"));
    }
    if ends_consonant_y(lower) {
        out.push(format!("{}ied", chop_last(lemma)));
    }
    out
}

/// All plausible surface forms for a request, duplicate-free, in pattern
/// declaration order. An exception entry is returned verbatim.
pub fn inflect_overgen(req: &InflectionRequest, exceptions: &ExceptionTable) -> Vec<String> {
    if let Some(forms) = exceptions.get(&req.lemma, req.feature) {
        return forms.to_vec();
    }
    let lemma = req.lemma.as_str();
    let lower = lemma.to_lowercase();
    let forms = match (req.pos, req.feature) {
        (_, Feature::Citation) => vec![lemma.to_string()],
        (PartOfSpeech::Noun, Feature::Plural) | (PartOfSpeech::Verb, Feature::ThirdSingular) => {
            s_forms(lemma, &lower)
        }
        (PartOfSpeech::Verb, Feature::Past | Feature::PastParticiple) => ed_forms(lemma, &lower),
        // Features that do not apply to the part of speech leave the lemma as is.
        _ => vec![lemma.to_string()],
    };
    dedup(forms)
}

/// Forms for several features at once, merged in feature order without duplicates.
pub fn inflect_all(
    lemma: &str,
    pos: PartOfSpeech,
    features: &[Feature],
    exceptions: &ExceptionTable,
) -> Vec<String> {
    let mut out = Vec::new();
    for &feature in features {
        out.extend(inflect_overgen(&InflectionRequest::new(lemma, pos, feature), exceptions));
    }
    dedup(out)
}
