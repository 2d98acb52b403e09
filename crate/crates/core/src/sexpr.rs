//! A small s-expression reader shared by the SPL, grammar and lexicon formats.
//!
//! Atoms come in three flavours: bare symbols (`x1`, `:agent`, `*OR*`),
//! double-quoted strings (`"that"`) and bar-delimited names (`|gun, arm|`).
//! A lone `/` is its own symbol so that `(A/|accuse|)` reads like `(A / |accuse|)`.
//! `;` starts a comment that runs to the end of the line.

use std::fmt;

use thiserror::Error;

/// A location in source text. Lines and columns are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    Symbol,
    Str,
    Bar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom { kind: AtomKind, text: String, pos: Pos },
    List { items: Vec<Sexp>, pos: Pos },
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom { pos, .. } | Sexp::List { pos, .. } => *pos,
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            Sexp::Atom { kind: AtomKind::Symbol, text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn string(&self) -> Option<&str> {
        match self {
            Sexp::Atom { kind: AtomKind::Str, text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn bar(&self) -> Option<&str> {
        match self {
            Sexp::Atom { kind: AtomKind::Bar, text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Some(items),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadError {
    #[error("unbalanced parentheses: unclosed '(' opened at {0}")]
    Unclosed(Pos),
    #[error("unbalanced parentheses: unexpected ')' at {0}")]
    UnexpectedClose(Pos),
    #[error("unterminated {what} starting at {pos}")]
    Unterminated { what: &'static str, pos: Pos },
}

impl ReadError {
    pub fn pos(&self) -> Pos {
        match self {
            ReadError::Unclosed(p) | ReadError::UnexpectedClose(p) => *p,
            ReadError::Unterminated { pos, .. } => *pos,
        }
    }
}

struct Cursor<'a> {
    text: &'a str,
    offset: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { text, offset: 0, line: 1, column: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { offset: self.offset, line: self.line, column: self.column }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.offset..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | '|' | ';' | '/')
}

/// Reads every top-level form in `text`.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, ReadError> {
    let mut cur = Cursor::new(text);
    // Stack of open lists: (position of '(', items so far).
    let mut stack: Vec<(Pos, Vec<Sexp>)> = Vec::new();
    let mut top = Vec::new();

    loop {
        cur.skip_trivia();
        let pos = cur.pos();
        let Some(c) = cur.peek() else { break };
        let item = match c {
            '(' => {
                cur.bump();
                stack.push((pos, Vec::new()));
                continue;
            }
            ')' => {
                cur.bump();
                let Some((open, items)) = stack.pop() else {
                    return Err(ReadError::UnexpectedClose(pos));
                };
                Sexp::List { items, pos: open }
            }
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(ReadError::Unterminated { what: "string", pos }),
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            None => return Err(ReadError::Unterminated { what: "string", pos }),
                            Some(e) => s.push(e),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Sexp::Atom { kind: AtomKind::Str, text: s, pos }
            }
            '|' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(ReadError::Unterminated { what: "|name|", pos }),
                        Some('|') => break,
                        Some(ch) => s.push(ch),
                    }
                }
                Sexp::Atom { kind: AtomKind::Bar, text: s, pos }
            }
            '/' => {
                cur.bump();
                Sexp::Atom { kind: AtomKind::Symbol, text: "/".to_string(), pos }
            }
            _ => {
                let start = cur.offset;
                while let Some(ch) = cur.peek() {
                    if is_delimiter(ch) {
                        break;
                    }
                    cur.bump();
                }
                Sexp::Atom {
                    kind: AtomKind::Symbol,
                    text: text[start..cur.offset].to_string(),
                    pos,
                }
            }
        };
        match stack.last_mut() {
            Some((_, items)) => items.push(item),
            None => top.push(item),
        }
    }

    if let Some((open, _)) = stack.pop() {
        return Err(ReadError::Unclosed(open));
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_forms() {
        let forms = read_all(r#"(a (b "c d") |e, f|) ; trailing comment
            (g)"#)
        .unwrap();
        assert_eq!(forms.len(), 2);
        let items = forms[0].list().unwrap();
        assert_eq!(items[0].symbol(), Some("a"));
        let inner = items[1].list().unwrap();
        assert_eq!(inner[1].string(), Some("c d"));
        assert_eq!(items[2].bar(), Some("e, f"));
    }

    #[test]
    fn slash_is_self_delimiting() {
        let forms = read_all("(A/|accuse|)").unwrap();
        let items = forms[0].list().unwrap();
        assert_eq!(items[0].symbol(), Some("A"));
        assert_eq!(items[1].symbol(), Some("/"));
        assert_eq!(items[2].bar(), Some("accuse"));
    }

    #[test]
    fn reports_positions() {
        let err = read_all("(a\n  (b)").unwrap_err();
        assert_eq!(err, ReadError::Unclosed(Pos { offset: 0, line: 1, column: 1 }));
        let err = read_all("(a))").unwrap_err();
        assert_eq!(err.pos().column, 4);
        assert!(matches!(read_all("(\"abc"), Err(ReadError::Unterminated { .. })));
    }
}
