//! SPL-style semantic inputs: `(var / |concept| :role value ...)`.
//!
//! Role fillers are either nested nodes or atomic symbols such as `SHE`.
//! Role keywords are case-insensitive and stored in lower case.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::sexpr::{self, AtomKind, Pos, ReadError, Sexp};

/// A concept name without its surrounding bars.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Concept(String);

impl Concept {
    /// Returns `None` for an empty or all-whitespace name, or one containing `|`.
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        if name.trim().is_empty() || name.contains('|') {
            None
        } else {
            Some(Concept(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}|", self.0)
    }
}

/// A role keyword such as `:agent`, canonicalized to lower case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Role(String);

impl Role {
    pub fn new(keyword: &str) -> Option<Self> {
        let rest = keyword.strip_prefix(':')?;
        if rest.is_empty() || rest.chars().any(|c| c.is_whitespace() || "()|\"/".contains(c)) {
            return None;
        }
        Some(Role(format!(":{}", rest.to_lowercase())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_rest(&self) -> bool {
        self.0 == ":rest"
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticValue {
    Node(Box<SemanticNode>),
    Atom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticNode {
    pub var: String,
    pub concept: Concept,
    roles: Vec<(Role, SemanticValue)>,
}

impl SemanticNode {
    pub fn new(var: impl Into<String>, concept: Concept) -> Self {
        SemanticNode { var: var.into(), concept, roles: Vec::new() }
    }

    /// Appends a role, returning `false` (and leaving the node unchanged) if the
    /// keyword is already present.
    pub fn push_role(&mut self, role: Role, value: SemanticValue) -> bool {
        if self.role(&role).is_some() {
            return false;
        }
        self.roles.push((role, value));
        true
    }

    pub fn with_role(mut self, role: Role, value: SemanticValue) -> Self {
        self.push_role(role, value);
        self
    }

    pub fn roles(&self) -> &[(Role, SemanticValue)] {
        &self.roles
    }

    pub fn role(&self, role: &Role) -> Option<&SemanticValue> {
        self.roles.iter().find(|(r, _)| r == role).map(|(_, v)| v)
    }

    pub fn is_leaf(&self) -> bool {
        self.roles.is_empty()
    }

    /// Depth of the tree; a node with no nested nodes has depth 1.
    pub fn depth(&self) -> usize {
        1 + self
            .roles
            .iter()
            .map(|(_, v)| match v {
                SemanticValue::Node(n) => n.depth(),
                SemanticValue::Atom(_) => 0,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("expected a single parenthesized expression")]
    Empty,
    #[error("unexpected input after the expression at {0}")]
    Trailing(Pos),
    #[error("expected '(var / |concept| ...)' at {0}")]
    NotANode(Pos),
    #[error("missing '/' after variable at {0}")]
    MissingSlash(Pos),
    #[error("empty or invalid concept name at {0}")]
    BadConcept(Pos),
    #[error("expected a role keyword like ':agent' at {0}")]
    BadRole(Pos),
    #[error("role {role} has no value at {pos}")]
    MissingValue { role: String, pos: Pos },
    #[error("duplicate role {role} at {pos}")]
    DuplicateRole { role: String, pos: Pos },
    #[error("invalid role value at {0}")]
    BadValue(Pos),
}

impl SplError {
    pub fn pos(&self) -> Option<Pos> {
        match self {
            SplError::Read(e) => Some(e.pos()),
            SplError::Empty => None,
            SplError::Trailing(p)
            | SplError::NotANode(p)
            | SplError::MissingSlash(p)
            | SplError::BadConcept(p)
            | SplError::BadRole(p)
            | SplError::BadValue(p) => Some(*p),
            SplError::MissingValue { pos, .. } | SplError::DuplicateRole { pos, .. } => Some(*pos),
        }
    }
}

/// Parses one SPL expression.
pub fn parse_spl(text: &str) -> Result<SemanticNode, SplError> {
    let forms = sexpr::read_all(text)?;
    let mut forms = forms.into_iter();
    let first = forms.next().ok_or(SplError::Empty)?;
    if let Some(extra) = forms.next() {
        return Err(SplError::Trailing(extra.pos()));
    }
    node_from_sexp(&first)
}

fn node_from_sexp(sexp: &Sexp) -> Result<SemanticNode, SplError> {
    let Sexp::List { items, pos } = sexp else {
        return Err(SplError::NotANode(sexp.pos()));
    };
    let var = match items.first() {
        Some(Sexp::Atom { kind: AtomKind::Symbol, text, .. }) if text != "/" && !text.starts_with(':') => {
            text.clone()
        }
        _ => return Err(SplError::NotANode(*pos)),
    };
    match items.get(1) {
        Some(s) if s.symbol() == Some("/") => {}
        Some(s) => return Err(SplError::MissingSlash(s.pos())),
        None => return Err(SplError::MissingSlash(*pos)),
    }
    let concept = match items.get(2) {
        Some(s) => s.bar().and_then(Concept::new).ok_or(SplError::BadConcept(s.pos()))?,
        None => return Err(SplError::BadConcept(*pos)),
    };

    let mut node = SemanticNode::new(var, concept);
    let mut rest = items[3..].iter();
    while let Some(key) = rest.next() {
        let role = key.symbol().and_then(Role::new).ok_or(SplError::BadRole(key.pos()))?;
        let value = rest
            .next()
            .ok_or_else(|| SplError::MissingValue { role: role.to_string(), pos: key.pos() })?;
        let value = match value {
            Sexp::List { .. } => SemanticValue::Node(Box::new(node_from_sexp(value)?)),
            Sexp::Atom { kind: AtomKind::Symbol, text, pos } => {
                if text == "/" || text.starts_with(':') {
                    return Err(SplError::BadValue(*pos));
                }
                SemanticValue::Atom(text.clone())
            }
            other => return Err(SplError::BadValue(other.pos())),
        };
        if !node.push_role(role.clone(), value) {
            return Err(SplError::DuplicateRole { role: role.to_string(), pos: key.pos() });
        }
    }
    Ok(node)
}

/// Renders a node on one line; `parse_spl` reads it back unchanged.
pub fn render_spl(node: &SemanticNode) -> String {
    let mut out = String::new();
    render_into(node, &mut out);
    out
}

fn render_into(node: &SemanticNode, out: &mut String) {
    let _ = write!(out, "({} / {}", node.var, node.concept);
    for (role, value) in &node.roles {
        let _ = write!(out, " {role} ");
        match value {
            SemanticValue::Node(n) => render_into(n, out),
            SemanticValue::Atom(a) => out.push_str(a),
        }
    }
    out.push(')');
}

impl fmt::Display for SemanticNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_spl(self))
    }
}
