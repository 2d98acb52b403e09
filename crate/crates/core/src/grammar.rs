//! Bottom-up lattice construction from semantic inputs.
//!
//! A grammar is a list of rules keyed on semantic roles rather than on
//! syntax. Each rule has a left-hand side of `(slot :role)` pairs, optionally
//! including one `:rest` slot that soaks up unmatched roles, and a list of
//! right-hand-side alternatives `(category expr)`. Expressions are built from
//! `seq`, `or` (also written `*OR*`), `wrd` and slot references `(x1 np)`.
//!
//! ```text
//! (categories s np v v-tensed)
//! ((x1 :agent) (x2 :patient) (x3 :rest) ->
//!   (s (seq (x1 np) (x3 v-tensed) (x2 np))))
//! ```
//!
//! Each semantic subexpression gets an [`EStructure`]: one lattice per
//! syntactic category it can be realized as. Leaves and atoms are looked up in
//! the [`Lexicon`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{self, Lattice, Word};
use crate::morphology::{self, ExceptionTable, Feature, PartOfSpeech};
use crate::semantics::{Role, SemanticNode, SemanticValue};
use crate::sexpr::{self, Pos, ReadError, Sexp};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category(Arc<str>);

impl Category {
    pub fn new(name: &str) -> Self {
        Category(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotVar(String);

impl SlotVar {
    pub fn new(name: &str) -> Self {
        SlotVar(name.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SlotVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LhsRole {
    Role(Role),
    Rest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LatticeExpr {
    Seq(Vec<LatticeExpr>),
    Or(Vec<LatticeExpr>),
    Wrd(Word),
    Slot(SlotVar, Category),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarRule {
    pub lhs: Vec<(SlotVar, LhsRole)>,
    pub rhs: Vec<(Category, LatticeExpr)>,
}

impl GrammarRule {
    pub fn rest_slot(&self) -> Option<&SlotVar> {
        self.lhs.iter().find(|(_, r)| *r == LhsRole::Rest).map(|(v, _)| v)
    }

    pub fn roles(&self) -> impl Iterator<Item = (&SlotVar, &Role)> {
        self.lhs.iter().filter_map(|(v, r)| match r {
            LhsRole::Role(role) => Some((v, role)),
            LhsRole::Rest => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    categories: Vec<Category>,
    rules: Vec<GrammarRule>,
}

impl Grammar {
    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn rules(&self) -> &[GrammarRule] {
        &self.rules
    }

    pub fn has_category(&self, cat: &str) -> bool {
        self.categories.iter().any(|c| c.as_str() == cat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("{pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("{pos}: unknown category {category}")]
    UnknownCategory { pos: Pos, category: String },
    #[error("{pos}: slot {slot} is not bound on the left-hand side")]
    UnknownSlot { pos: Pos, slot: String },
}

fn syntax(pos: Pos, message: impl Into<String>) -> GrammarError {
    GrammarError::Syntax { pos, message: message.into() }
}

const KEYWORDS: [&str; 4] = ["seq", "or", "*or*", "wrd"];

fn is_or(s: &str) -> bool {
    s.eq_ignore_ascii_case("or") || s.eq_ignore_ascii_case("*or*")
}

pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let forms = sexpr::read_all(text)?;
    let mut forms = forms.iter();
    let header = forms.next().ok_or_else(|| syntax(Pos { offset: 0, line: 1, column: 1 }, "empty grammar"))?;
    let categories = match header.list() {
        Some([head, cats @ ..]) if head.symbol().is_some_and(|s| s.eq_ignore_ascii_case("categories")) => cats
            .iter()
            .map(|c| c.symbol().map(Category::new).ok_or_else(|| syntax(c.pos(), "category must be a symbol")))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(syntax(header.pos(), "grammar must start with (categories ...)")),
    };
    let mut grammar = Grammar { categories, rules: Vec::new() };
    for form in forms {
        let rule = parse_rule(form, &grammar)?;
        grammar.rules.push(rule);
    }
    Ok(grammar)
}

fn parse_rule(form: &Sexp, grammar: &Grammar) -> Result<GrammarRule, GrammarError> {
    let items = form.list().ok_or_else(|| syntax(form.pos(), "rule must be a list"))?;
    let arrow = items
        .iter()
        .position(|s| s.symbol() == Some("->"))
        .ok_or_else(|| syntax(form.pos(), "rule is missing '->'"))?;

    let mut lhs = Vec::new();
    let mut seen_slots = HashSet::new();
    let mut seen_roles = HashSet::new();
    for pair in &items[..arrow] {
        let (var, role) = match pair.list() {
            Some([v, r]) => (v, r),
            _ => return Err(syntax(pair.pos(), "expected (slot :role)")),
        };
        let name = var
            .symbol()
            .filter(|s| !s.starts_with(':') && !KEYWORDS.contains(&s.to_lowercase().as_str()))
            .ok_or_else(|| syntax(var.pos(), "bad slot variable"))?;
        let role = role
            .symbol()
            .and_then(Role::new)
            .ok_or_else(|| syntax(role.pos(), "expected a role keyword"))?;
        if !seen_slots.insert(name.to_string()) {
            return Err(syntax(var.pos(), format!("slot {name} bound twice")));
        }
        if !seen_roles.insert(role.clone()) {
            return Err(syntax(pair.pos(), format!("role {role} matched twice")));
        }
        let role = if role.is_rest() { LhsRole::Rest } else { LhsRole::Role(role) };
        lhs.push((SlotVar::new(name), role));
    }
    if !lhs.iter().any(|(_, r)| matches!(r, LhsRole::Role(_))) {
        return Err(syntax(form.pos(), "rule needs at least one role besides :rest"));
    }

    let mut rhs = Vec::new();
    for alt in &items[arrow + 1..] {
        let (cat, expr) = match alt.list() {
            Some([c, e]) => (c, e),
            _ => return Err(syntax(alt.pos(), "expected (category expr)")),
        };
        let cat = category(cat, grammar)?;
        rhs.push((cat, parse_expr(expr, &seen_slots, grammar)?));
    }
    if rhs.is_empty() {
        return Err(syntax(form.pos(), "rule has no right-hand side"));
    }
    Ok(GrammarRule { lhs, rhs })
}

fn category(sexp: &Sexp, grammar: &Grammar) -> Result<Category, GrammarError> {
    let name = sexp.symbol().ok_or_else(|| syntax(sexp.pos(), "expected a category"))?;
    if !grammar.has_category(name) {
        return Err(GrammarError::UnknownCategory { pos: sexp.pos(), category: name.to_string() });
    }
    Ok(Category::new(name))
}

fn parse_expr(sexp: &Sexp, slots: &HashSet<String>, grammar: &Grammar) -> Result<LatticeExpr, GrammarError> {
    let items = sexp.list().ok_or_else(|| syntax(sexp.pos(), "expected an expression list"))?;
    let (head, args) = items.split_first().ok_or_else(|| syntax(sexp.pos(), "empty expression"))?;
    let head_name = head.symbol().ok_or_else(|| syntax(head.pos(), "expected seq, or, wrd or a slot"))?;
    let sub = |args: &[Sexp]| -> Result<Vec<LatticeExpr>, GrammarError> {
        if args.is_empty() {
            return Err(syntax(sexp.pos(), format!("({head_name}) needs at least one part")));
        }
        args.iter().map(|a| parse_expr(a, slots, grammar)).collect()
    };
    if head_name.eq_ignore_ascii_case("seq") {
        return Ok(LatticeExpr::Seq(sub(args)?));
    }
    if is_or(head_name) {
        return Ok(LatticeExpr::Or(sub(args)?));
    }
    if head_name.eq_ignore_ascii_case("wrd") {
        let [w] = args else {
            return Err(syntax(sexp.pos(), "(wrd \"word\") takes one string"));
        };
        let text = w.string().or_else(|| w.symbol()).ok_or_else(|| syntax(w.pos(), "expected a word"))?;
        let word = Word::new(text).map_err(|e| syntax(w.pos(), e.to_string()))?;
        return Ok(LatticeExpr::Wrd(word));
    }

    if !slots.contains(head_name) {
        return Err(GrammarError::UnknownSlot { pos: head.pos(), slot: head_name.to_string() });
    }
    let slot = SlotVar::new(head_name);
    let [cat] = args else {
        return Err(syntax(sexp.pos(), "slot reference takes one category"));
    };
    // (x2 (*OR* inf inf-raise)) is shorthand for (or (x2 inf) (x2 inf-raise)).
    if let Some([or_head, cats @ ..]) = cat.list() {
        if !or_head.symbol().is_some_and(is_or) || cats.is_empty() {
            return Err(syntax(cat.pos(), "expected a category or (*OR* category ...)"));
        }
        let alts = cats
            .iter()
            .map(|c| Ok(LatticeExpr::Slot(slot.clone(), category(c, grammar)?)))
            .collect::<Result<Vec<_>, GrammarError>>()?;
        return Ok(LatticeExpr::Or(alts));
    }
    Ok(LatticeExpr::Slot(slot, category(cat, grammar)?))
}

/// Part-of-speech tag of a lexicon entry; only nouns and verbs inflect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexPos {
    Inflecting(PartOfSpeech),
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub category: Category,
    pub citation: Vec<String>,
    pub pos: LexPos,
    pub features: Vec<Feature>,
}

impl LexiconEntry {
    /// Expands the citation form into a lattice, inflecting the head word
    /// (last word of a noun, first word of a verb).
    pub fn to_lattice(&self, exceptions: &ExceptionTable) -> Lattice {
        let head = match self.pos {
            LexPos::Inflecting(PartOfSpeech::Verb) => 0,
            _ => self.citation.len() - 1,
        };
        let parts = self
            .citation
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let forms = match &self.pos {
                    LexPos::Inflecting(pos) if i == head => {
                        morphology::inflect_all(w, *pos, &self.features, exceptions)
                    }
                    _ => vec![w.clone()],
                };
                let alts = forms.iter().map(|f| lattice::wrd(f).expect("forms are single tokens")).collect();
                lattice::or(alts).expect("at least one form")
            })
            .collect();
        lattice::seq(parts).expect("citation is non-empty")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, Vec<LexiconEntry>>,
}

impl Lexicon {
    pub fn get(&self, concept: &str) -> Option<&[LexiconEntry]> {
        self.entries.get(concept).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[LexiconEntry])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Reads `(|concept| (<cat> "<citation>" <pos> [feature ...]) ...)` forms.
/// Without explicit features a noun yields citation and plural forms and a
/// verb its citation form.
pub fn parse_lexicon(text: &str) -> Result<Lexicon, GrammarError> {
    let mut lexicon = Lexicon::default();
    for form in sexpr::read_all(text)? {
        let items = form.list().ok_or_else(|| syntax(form.pos(), "lexicon form must be a list"))?;
        let (key, senses) = items.split_first().ok_or_else(|| syntax(form.pos(), "empty lexicon form"))?;
        let concept = key
            .bar()
            .or_else(|| key.symbol())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| syntax(key.pos(), "expected |concept| or SYMBOL"))?;
        if senses.is_empty() {
            return Err(syntax(form.pos(), format!("no entries for {concept}")));
        }
        let entries = senses.iter().map(parse_lex_entry).collect::<Result<Vec<_>, _>>()?;
        if lexicon.entries.insert(concept.to_string(), entries).is_some() {
            return Err(syntax(key.pos(), format!("duplicate lexicon entry for {concept}")));
        }
    }
    Ok(lexicon)
}

fn parse_lex_entry(sexp: &Sexp) -> Result<LexiconEntry, GrammarError> {
    let items = sexp.list().ok_or_else(|| syntax(sexp.pos(), "expected (category \"citation\" pos)"))?;
    let [cat, citation, pos, features @ ..] = items else {
        return Err(syntax(sexp.pos(), "expected (category \"citation\" pos)"));
    };
    let category = Category::new(cat.symbol().ok_or_else(|| syntax(cat.pos(), "expected a category"))?);
    let text = citation.string().ok_or_else(|| syntax(citation.pos(), "citation must be a string"))?;
    let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if words.is_empty() || words.iter().any(|w| Word::new(w).is_err()) {
        return Err(syntax(citation.pos(), format!("bad citation form {text:?}")));
    }
    let tag = pos.symbol().ok_or_else(|| syntax(pos.pos(), "expected a part-of-speech tag"))?;
    let pos_tag = match tag.to_lowercase().as_str() {
        "noun" => LexPos::Inflecting(PartOfSpeech::Noun),
        "verb" => LexPos::Inflecting(PartOfSpeech::Verb),
        _ => LexPos::Fixed(tag.to_string()),
    };
    let mut feats = features
        .iter()
        .map(|f| {
            f.symbol()
                .ok_or_else(|| syntax(f.pos(), "expected a feature"))?
                .parse::<Feature>()
                .map_err(|e| syntax(f.pos(), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match pos_tag {
        LexPos::Fixed(_) if !feats.is_empty() => {
            return Err(syntax(sexp.pos(), format!("{tag} does not inflect")));
        }
        LexPos::Inflecting(PartOfSpeech::Noun) if feats.is_empty() => {
            feats = vec![Feature::Citation, Feature::Plural];
        }
        LexPos::Inflecting(PartOfSpeech::Verb) if feats.is_empty() => feats = vec![Feature::Citation],
        _ => {}
    }
    Ok(LexiconEntry { category, citation: words, pos: pos_tag, features: feats })
}

/// Category-to-lattice map for one semantic subexpression. Categories are
/// distinct and kept in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EStructure {
    entries: Vec<(Category, Lattice)>,
}

impl EStructure {
    pub fn get(&self, cat: &Category) -> Option<&Lattice> {
        self.entries.iter().find(|(c, _)| c == cat).map(|(_, l)| l)
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.entries.iter().map(|(c, _)| c)
    }

    pub fn entries(&self) -> &[(Category, Lattice)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Groups lattices by category; several lattices for one category are
    /// merged with `or` in the order given.
    pub fn from_alternatives(alts: Vec<(Category, Lattice)>) -> Self {
        let mut grouped: Vec<(Category, Vec<Lattice>)> = Vec::new();
        for (cat, lat) in alts {
            match grouped.iter_mut().find(|(c, _)| *c == cat) {
                Some((_, v)) => v.push(lat),
                None => grouped.push((cat, vec![lat])),
            }
        }
        let entries = grouped
            .into_iter()
            .map(|(cat, mut lats)| {
                let lat = if lats.len() == 1 { lats.pop().unwrap() } else { lattice::or(lats).unwrap() };
                (cat, lat)
            })
            .collect();
        EStructure { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RealizeError {
    #[error("no lexicon entry for |{0}|")]
    MissingLexiconEntry(String),
    #[error("no grammar rule matches |{concept}| with roles {{{roles}}}")]
    NoMatchingRule { concept: String, roles: String },
    #[error("every alternative failed for |{concept}| (rules tried: {rules:?})")]
    AllAlternativesFailed { concept: String, rules: Vec<usize> },
    #[error("realization of |{concept}| has no {goal} (available: {available})")]
    MissingGoal { concept: String, goal: String, available: String },
    #[error("lexicon entry for |{concept}| uses undeclared category {category}")]
    UndeclaredCategory { concept: String, category: String },
}

/// Result of matching a node against the rule list.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatch<'g> {
    pub index: usize,
    pub rule: &'g GrammarRule,
    pub bindings: Vec<(SlotVar, SemanticValue)>,
    /// The rest slot bound to the node's concept with only the unmatched roles.
    pub rest: Option<(SlotVar, SemanticNode)>,
}

fn try_match<'g>(node: &SemanticNode, index: usize, rule: &'g GrammarRule) -> Option<RuleMatch<'g>> {
    let mut bindings = Vec::new();
    let mut used = HashSet::new();
    for (slot, role) in rule.roles() {
        let value = node.role(role)?;
        bindings.push((slot.clone(), value.clone()));
        used.insert(role);
    }
    let leftover: Vec<_> = node.roles().iter().filter(|(r, _)| !used.contains(r)).collect();
    let rest = match rule.rest_slot() {
        Some(slot) => {
            let mut rest = SemanticNode::new(node.var.clone(), node.concept.clone());
            for (r, v) in leftover {
                rest.push_role(r.clone(), v.clone());
            }
            Some((slot.clone(), rest))
        }
        // Without a rest slot, unmatched roles would be silently dropped.
        None if !leftover.is_empty() => return None,
        None => None,
    };
    Some(RuleMatch { index, rule, bindings, rest })
}

fn role_list(node: &SemanticNode) -> String {
    node.roles().iter().map(|(r, _)| r.as_str()).collect::<Vec<_>>().join(" ")
}

/// Every rule matching `node`, in declaration order.
pub fn matching_rules<'g>(node: &SemanticNode, rules: &'g [GrammarRule]) -> Vec<RuleMatch<'g>> {
    rules.iter().enumerate().filter_map(|(i, r)| try_match(node, i, r)).collect()
}

/// The first rule whose non-rest roles are all present on `node`.
pub fn match_rule<'g>(node: &SemanticNode, rules: &'g [GrammarRule]) -> Result<RuleMatch<'g>, RealizeError> {
    matching_rules(node, rules).into_iter().next().ok_or_else(|| RealizeError::NoMatchingRule {
        concept: node.concept.as_str().to_string(),
        roles: role_list(node),
    })
}

/// Evaluates an expression against the slots' e-structures. `None` means the
/// expression failed: a slot lacked the category, a `seq` part failed, or
/// every `or` branch failed.
pub fn eval_expr(expr: &LatticeExpr, estructs: &HashMap<SlotVar, EStructure>) -> Option<Lattice> {
    match expr {
        LatticeExpr::Wrd(w) => Some(lattice::wrd(w.as_str()).expect("validated word")),
        LatticeExpr::Slot(slot, cat) => estructs.get(slot)?.get(cat).cloned(),
        LatticeExpr::Seq(parts) => {
            let mut lats = parts.iter().map(|p| eval_expr(p, estructs)).collect::<Option<Vec<_>>>()?;
            if lats.len() == 1 {
                lats.pop()
            } else {
                lattice::seq(lats).ok()
            }
        }
        LatticeExpr::Or(alts) => {
            let mut lats: Vec<Lattice> = alts.iter().filter_map(|a| eval_expr(a, estructs)).collect();
            match lats.len() {
                0 => None,
                1 => lats.pop(),
                _ => lattice::or(lats).ok(),
            }
        }
    }
}

pub struct Realizer<'a> {
    grammar: &'a Grammar,
    lexicon: &'a Lexicon,
    exceptions: &'a ExceptionTable,
}

impl<'a> Realizer<'a> {
    /// Checks that every lexicon category is declared by the grammar.
    pub fn new(grammar: &'a Grammar, lexicon: &'a Lexicon, exceptions: &'a ExceptionTable) -> Result<Self, RealizeError> {
        let mut concepts: Vec<_> = lexicon.iter().collect();
        concepts.sort_by_key(|(k, _)| *k);
        for (concept, entries) in concepts {
            if let Some(e) = entries.iter().find(|e| !grammar.has_category(e.category.as_str())) {
                return Err(RealizeError::UndeclaredCategory {
                    concept: concept.to_string(),
                    category: e.category.to_string(),
                });
            }
        }
        Ok(Realizer { grammar, lexicon, exceptions })
    }

    pub fn lexical_estructure(&self, name: &str) -> Result<EStructure, RealizeError> {
        let entries = self.lexicon.get(name).ok_or_else(|| RealizeError::MissingLexiconEntry(name.to_string()))?;
        Ok(EStructure::from_alternatives(
            entries.iter().map(|e| (e.category.clone(), e.to_lattice(self.exceptions))).collect(),
        ))
    }

    fn value_estructure(&self, value: &SemanticValue) -> Result<EStructure, RealizeError> {
        match value {
            SemanticValue::Node(n) => self.build_estructure(n),
            SemanticValue::Atom(a) => self.lexical_estructure(a),
        }
    }

    pub fn build_estructure(&self, node: &SemanticNode) -> Result<EStructure, RealizeError> {
        if node.is_leaf() {
            return self.lexical_estructure(node.concept.as_str());
        }
        let mut tried = Vec::new();
        for m in matching_rules(node, self.grammar.rules()) {
            let mut estructs = HashMap::new();
            for (slot, value) in &m.bindings {
                estructs.insert(slot.clone(), self.value_estructure(value)?);
            }
            if let Some((slot, rest)) = &m.rest {
                estructs.insert(slot.clone(), self.build_estructure(rest)?);
            }
            let produced: Vec<(Category, Lattice)> = m
                .rule
                .rhs
                .iter()
                .filter_map(|(cat, expr)| eval_expr(expr, &estructs).map(|l| (cat.clone(), l)))
                .collect();
            if !produced.is_empty() {
                return Ok(EStructure::from_alternatives(produced));
            }
            tried.push(m.index);
        }
        let concept = node.concept.as_str().to_string();
        if tried.is_empty() {
            Err(RealizeError::NoMatchingRule { concept, roles: role_list(node) })
        } else {
            Err(RealizeError::AllAlternativesFailed { concept, rules: tried })
        }
    }

    pub fn realize(&self, node: &SemanticNode, goal: &Category) -> Result<Lattice, RealizeError> {
        let es = self.build_estructure(node)?;
        es.get(goal).cloned().ok_or_else(|| RealizeError::MissingGoal {
            concept: node.concept.as_str().to_string(),
            goal: goal.to_string(),
            available: es.categories().map(Category::as_str).collect::<Vec<_>>().join(" "),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::parse_spl;

    const SAMPLE: &str = r#"
        (categories s np v v-tensed v-passive inf inf-raise)
        ((x1 :agent) (x2 :patient) (x3 :rest) ->
          (s (seq (x1 np) (x3 v-tensed) (x2 np)))
          (s (seq (x1 np) (x3 v-tensed) (wrd "that") (x2 s)))
          (s (seq (x1 np) (x3 v-tensed) (x2 (*OR* inf inf-raise))))
          (s (seq (x2 np) (x3 v-passive) (wrd "by") (x1 np)))
          (inf (seq (wrd "for") (x1 np) (wrd "to") (x3 v) (x2 np)))
          (inf-raise (seq (x1 np) (or (seq (wrd "of") (x3 np) (x2 np))
                                      (seq (wrd "to") (x3 v) (x2 np)))))
          (np (seq (x3 np) (wrd "of") (x2 np) (wrd "by") (x1 np))))
        ((x1 :time) (x2 :rest) ->
          (s (seq (x2 s) (x1 np))))
    "#;

    const LEXICON: &str = r#"
        (SHE (np "she" pron))
        (HE (np "he" pron))
        (|obtain| (v "obtain" verb) (v-tensed "obtain" verb third-singular)
                  (v-passive "obtain" verb past-participle) (np "procurement" noun))
        (|gun, arm| (np "gun" noun) (np "arm" noun))
        (|today| (np "today" adv))
    "#;

    fn paths(l: &Lattice) -> Vec<String> {
        fn go(l: &Lattice, s: usize, pre: &mut Vec<String>, out: &mut Vec<String>) {
            if s == l.final_state() {
                out.push(pre.join(" "));
                return;
            }
            for t in l.arcs_from(s) {
                let w = t.label.word().map(|w| w.to_string());
                if let Some(w) = &w {
                    pre.push(w.clone());
                }
                go(l, t.target, pre, out);
                if w.is_some() {
                    pre.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(l, l.start(), &mut Vec::new(), &mut out);
        out
    }

    fn setup() -> (Grammar, Lexicon, ExceptionTable) {
        (parse_grammar(SAMPLE).unwrap(), parse_lexicon(LEXICON).unwrap(), ExceptionTable::new())
    }

    #[test]
    fn parses_sample_rule() {
        let g = parse_grammar(SAMPLE).unwrap();
        assert_eq!(g.rules().len(), 2);
        let r = &g.rules()[0];
        assert_eq!(r.lhs.len(), 3);
        assert_eq!(r.rest_slot(), Some(&SlotVar::new("x3")));
        assert_eq!(r.rhs.len(), 7);
        let s_count = r.rhs.iter().filter(|(c, _)| c.as_str() == "s").count();
        assert_eq!(s_count, 4);
        // (x2 (*OR* inf inf-raise)) becomes an or of slot references
        let LatticeExpr::Seq(parts) = &r.rhs[2].1 else { panic!() };
        assert_eq!(
            parts[2],
            LatticeExpr::Or(vec![
                LatticeExpr::Slot(SlotVar::new("x2"), Category::new("inf")),
                LatticeExpr::Slot(SlotVar::new("x2"), Category::new("inf-raise")),
            ])
        );
    }

    #[test]
    fn grammar_load_errors() {
        let unknown_cat = "(categories s) ((x1 :agent) -> (s (x1 np)))";
        assert!(matches!(parse_grammar(unknown_cat), Err(GrammarError::UnknownCategory { .. })));
        let unknown_slot = "(categories s) ((x1 :agent) -> (s (x2 s)))";
        assert!(matches!(parse_grammar(unknown_slot), Err(GrammarError::UnknownSlot { .. })));
        let dup = "(categories s) ((x1 :agent) (x1 :patient) -> (s (x1 s)))";
        assert!(matches!(parse_grammar(dup), Err(GrammarError::Syntax { .. })));
        let rest_only = "(categories s) ((x1 :rest) -> (s (x1 s)))";
        assert!(matches!(parse_grammar(rest_only), Err(GrammarError::Syntax { .. })));
        let no_header = "((x1 :agent) -> (s (x1 s)))";
        assert!(matches!(parse_grammar(no_header), Err(GrammarError::Syntax { .. })));
        let empty_seq = "(categories s) ((x1 :agent) -> (s (seq)))";
        assert!(matches!(parse_grammar(empty_seq), Err(GrammarError::Syntax { .. })));
    }

    #[test]
    fn match_binds_agent_and_patient() {
        let (g, _, _) = setup();
        let node = parse_spl("(P / |obtain| :AGENT HE :PATIENT (G / |gun, arm|))").unwrap();
        let m = match_rule(&node, g.rules()).unwrap();
        assert_eq!(m.index, 0);
        assert_eq!(m.bindings.len(), 2);
        let (slot, rest) = m.rest.unwrap();
        assert_eq!(slot.as_str(), "x3");
        assert!(rest.is_leaf());
        assert_eq!(rest.concept.as_str(), "obtain");
    }

    #[test]
    fn unmatched_roles_go_to_rest() {
        let (g, _, _) = setup();
        let node = parse_spl("(P / |obtain| :AGENT HE :PATIENT (G / |gun, arm|) :TIME (T / |today|))").unwrap();
        let m = match_rule(&node, g.rules()).unwrap();
        let (_, rest) = m.rest.unwrap();
        let roles: Vec<_> = rest.roles().iter().map(|(r, _)| r.as_str()).collect();
        assert_eq!(roles, [":time"]);
        // role order in the input does not affect which rule is chosen
        let permuted = parse_spl("(P / |obtain| :TIME (T / |today|) :PATIENT (G / |gun, arm|) :AGENT HE)").unwrap();
        assert_eq!(match_rule(&permuted, g.rules()).unwrap().index, 0);
    }

    #[test]
    fn no_matching_rule() {
        let (g, _, _) = setup();
        let node = parse_spl("(P / |obtain| :MANNER HE)").unwrap();
        let err = match_rule(&node, g.rules()).unwrap_err();
        assert_eq!(err, RealizeError::NoMatchingRule { concept: "obtain".into(), roles: ":manner".into() });
    }

    #[test]
    fn eval_expr_semantics() {
        let mut es = HashMap::new();
        es.insert(
            SlotVar::new("x1"),
            EStructure::from_alternatives(vec![(Category::new("np"), lattice::wrd("americans").unwrap())]),
        );
        es.insert(
            SlotVar::new("x2"),
            EStructure::from_alternatives(vec![(Category::new("np"), lattice::wrd("guns").unwrap())]),
        );
        es.insert(
            SlotVar::new("x3"),
            EStructure::from_alternatives(vec![(Category::new("v"), lattice::wrd("obtain").unwrap())]),
        );
        let slot = |x: &str, c: &str| LatticeExpr::Slot(SlotVar::new(x), Category::new(c));
        let word = |w: &str| LatticeExpr::Wrd(Word::new(w).unwrap());
        let inf = LatticeExpr::Seq(vec![word("for"), slot("x1", "np"), word("to"), slot("x3", "v"), slot("x2", "np")]);
        let l = eval_expr(&inf, &es).unwrap();
        assert_eq!(paths(&l), ["for americans to obtain guns"]);

        assert!(eval_expr(&slot("x2", "s"), &es).is_none());
        let failing_seq = LatticeExpr::Seq(vec![word("that"), slot("x2", "s")]);
        assert!(eval_expr(&failing_seq, &es).is_none());

        let mixed = LatticeExpr::Or(vec![slot("x2", "s"), slot("x2", "np")]);
        let l = eval_expr(&mixed, &es).unwrap();
        assert_eq!(paths(&l), paths(&eval_expr(&slot("x2", "np"), &es).unwrap()));
    }

    #[test]
    fn leaf_synonyms_inflect_and_merge() {
        let (g, lex, ex) = setup();
        let r = Realizer::new(&g, &lex, &ex).unwrap();
        let es = r.build_estructure(&parse_spl("(G / |gun, arm|)").unwrap()).unwrap();
        let np = es.get(&Category::new("np")).unwrap();
        assert_eq!(paths(np), ["gun", "guns", "arm", "arms"]);
    }

    #[test]
    fn agent_patient_estructure_categories() {
        let (g, lex, ex) = setup();
        let r = Realizer::new(&g, &lex, &ex).unwrap();
        let node = parse_spl("(P / |obtain| :AGENT HE :PATIENT (G / |gun, arm|))").unwrap();
        let es = r.build_estructure(&node).unwrap();
        let cats: Vec<_> = es.categories().map(Category::as_str).collect();
        assert_eq!(cats, ["s", "inf", "inf-raise", "np"]);
        let inf = paths(es.get(&Category::new("inf")).unwrap());
        assert!(inf.contains(&"for he to obtain guns".to_string()));
    }

    #[test]
    fn rest_recursion_realizes_extra_roles() {
        let (g, lex, ex) = setup();
        let r = Realizer::new(&g, &lex, &ex).unwrap();
        let node = parse_spl("(P / |obtain| :AGENT HE :PATIENT (G / |gun, arm|) :TIME (T / |today|))").unwrap();
        // Rule 0 leaves {:time} for x3; the :time rule then needs an s from
        // the bare verb, which the lexicon cannot supply.
        let err = r.build_estructure(&node).unwrap_err();
        assert!(matches!(err, RealizeError::AllAlternativesFailed { .. }), "{err}");
    }

    #[test]
    fn missing_lexicon_entry_names_concept() {
        let (g, lex, ex) = setup();
        let r = Realizer::new(&g, &lex, &ex).unwrap();
        let err = r.realize(&parse_spl("(Q / |unicorn|)").unwrap(), &Category::new("np")).unwrap_err();
        assert_eq!(err.to_string(), "no lexicon entry for |unicorn|");
    }

    #[test]
    fn single_leaf_realization() {
        let g = parse_grammar("(categories s np) ((x1 :agent) -> (s (x1 np)))").unwrap();
        let lex = parse_lexicon(r#"(|dog| (np "dog" det))"#).unwrap();
        let ex = ExceptionTable::new();
        let r = Realizer::new(&g, &lex, &ex).unwrap();
        let l = r.realize(&parse_spl("(D / |dog|)").unwrap(), &Category::new("np")).unwrap();
        assert_eq!(paths(&l), ["dog"]);
        assert!(matches!(
            r.realize(&parse_spl("(D / |dog|)").unwrap(), &Category::new("s")),
            Err(RealizeError::MissingGoal { .. })
        ));
    }

    #[test]
    fn undeclared_lexicon_category() {
        let g = parse_grammar("(categories s) ((x1 :agent) -> (s (x1 s)))").unwrap();
        let lex = parse_lexicon(r#"(|dog| (np "dog" noun))"#).unwrap();
        let ex = ExceptionTable::new();
        assert!(matches!(Realizer::new(&g, &lex, &ex), Err(RealizeError::UndeclaredCategory { .. })));
    }

    #[test]
    fn lexicon_errors() {
        assert!(parse_lexicon(r#"(|a| (np "x" noun)) (|a| (np "y" noun))"#).is_err());
        assert!(parse_lexicon(r#"(|a|)"#).is_err());
        assert!(parse_lexicon(r#"(|a| (np "" noun))"#).is_err());
        assert!(parse_lexicon(r#"(|a| (np "x" pron plural))"#).is_err());
        assert!(parse_lexicon(r#"(|a| (np "x" noun dual))"#).is_err());
    }

    #[test]
    fn adding_an_alternative_only_adds_paths() {
        let (g, lex, ex) = setup();
        let node = parse_spl("(P / |obtain| :AGENT HE :PATIENT (G / |gun, arm|))").unwrap();
        let before = paths(&Realizer::new(&g, &lex, &ex).unwrap().realize(&node, &Category::new("s")).unwrap());
        let extended_src = SAMPLE.replacen(
            "(s (seq (x1 np) (x3 v-tensed) (x2 np)))",
            "(s (seq (x1 np) (x3 v-tensed) (x2 np)))\n (s (seq (x2 np) (wrd \"was\") (x3 v-passive)))",
            1,
        );
        let g2 = parse_grammar(&extended_src).unwrap();
        let after = paths(&Realizer::new(&g2, &lex, &ex).unwrap().realize(&node, &Category::new("s")).unwrap());
        assert!(after.len() > before.len());
        for p in &before {
            assert!(after.contains(p), "lost {p}");
        }
    }
}
