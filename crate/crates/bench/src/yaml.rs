//! Reader for the small YAML subset instance files use: top-level
//! `key: value` lines whose values are scalars, flow lists (possibly nested
//! and spanning lines) or one-level flow maps. Comments start with `#`.
//! Anything else is rejected with a line and column.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Str(String),
    List(Vec<Spanned>),
    Map(Vec<(String, Spanned)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub pos: Pos,
    pub node: Node,
}

/// Top-level entries in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub entries: Vec<(String, Spanned)>,
    pub end: Pos,
}

struct Cursor {
    chars: Vec<char>,
    at: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Cursor {
            chars: src.chars().collect(),
            at: 0,
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.at += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn skip_inline_space(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn skip_comment(&mut self) {
        if self.peek() == Some('#') {
            while !matches!(self.peek(), None | Some('\n')) {
                self.bump();
            }
        }
    }

    // whitespace, newlines and comments inside brackets
    fn skip_flow_space(&mut self) {
        loop {
            self.skip_inline_space();
            match self.peek() {
                Some('\n') => {
                    self.bump();
                }
                Some('#') => self.skip_comment(),
                _ => break,
            }
        }
    }

    fn key(&mut self) -> Result<String, SyntaxError> {
        let mut key = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                key.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if key.is_empty() {
            return self.err("expected a key");
        }
        self.skip_inline_space();
        if self.peek() != Some(':') {
            return self.err(format!("expected ':' after key '{key}'"));
        }
        self.bump();
        Ok(key)
    }

    fn value(&mut self, in_flow: bool) -> Result<Spanned, SyntaxError> {
        let pos = self.pos();
        match self.peek() {
            Some('[') => self.list(),
            Some('{') => self.map(),
            Some('\'' | '"') => {
                let quote = self.bump().unwrap();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some(c) if c == quote => break,
                        Some('\n') | None => {
                            return Err(SyntaxError {
                                pos,
                                message: "unterminated string".into(),
                            })
                        }
                        Some(c) => s.push(c),
                    }
                }
                Ok(Spanned {
                    pos,
                    node: Node::Str(s),
                })
            }
            _ => {
                let mut raw = String::new();
                while let Some(c) = self.peek() {
                    let stop = c == '\n' || c == '#' || (in_flow && matches!(c, ',' | ']' | '}'));
                    if stop {
                        break;
                    }
                    raw.push(c);
                    self.bump();
                }
                let raw = raw.trim();
                if raw.is_empty() {
                    return Err(SyntaxError {
                        pos,
                        message: "expected a value".into(),
                    });
                }
                let node = match raw.parse::<f64>() {
                    Ok(x) => Node::Num(x),
                    Err(_) => Node::Str(raw.to_string()),
                };
                Ok(Spanned { pos, node })
            }
        }
    }

    fn list(&mut self) -> Result<Spanned, SyntaxError> {
        let pos = self.pos();
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_flow_space();
            match self.peek() {
                Some(']') => {
                    self.bump();
                    break;
                }
                None => {
                    return Err(SyntaxError {
                        pos,
                        message: "unclosed '['".into(),
                    })
                }
                _ => {}
            }
            items.push(self.value(true)?);
            self.skip_flow_space();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {}
                _ => return self.err("expected ',' or ']'"),
            }
        }
        Ok(Spanned {
            pos,
            node: Node::List(items),
        })
    }

    fn map(&mut self) -> Result<Spanned, SyntaxError> {
        let pos = self.pos();
        self.bump();
        let mut entries: Vec<(String, Spanned)> = Vec::new();
        loop {
            self.skip_flow_space();
            match self.peek() {
                Some('}') => {
                    self.bump();
                    break;
                }
                None => {
                    return Err(SyntaxError {
                        pos,
                        message: "unclosed '{'".into(),
                    })
                }
                _ => {}
            }
            let kpos = self.pos();
            let key = self.key()?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(SyntaxError {
                    pos: kpos,
                    message: format!("duplicate key '{key}'"),
                });
            }
            self.skip_flow_space();
            let v = self.value(true)?;
            if matches!(v.node, Node::Map(_)) {
                return Err(SyntaxError {
                    pos: v.pos,
                    message: "maps nest only one level deep".into(),
                });
            }
            entries.push((key, v));
            self.skip_flow_space();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some('}') => {}
                _ => return self.err("expected ',' or '}'"),
            }
        }
        Ok(Spanned {
            pos,
            node: Node::Map(entries),
        })
    }
}

pub fn parse(src: &str) -> Result<Document, SyntaxError> {
    let mut cur = Cursor::new(src);
    let mut entries: Vec<(String, Spanned)> = Vec::new();
    loop {
        cur.skip_inline_space();
        cur.skip_comment();
        match cur.peek() {
            None => break,
            Some('\n') => {
                cur.bump();
                continue;
            }
            _ => {}
        }
        if cur.col != 1 {
            return cur.err("indented blocks are not supported; use flow syntax");
        }
        let kpos = cur.pos();
        let key = cur.key()?;
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(SyntaxError {
                pos: kpos,
                message: format!("duplicate key '{key}'"),
            });
        }
        cur.skip_inline_space();
        if matches!(cur.peek(), None | Some('\n' | '#')) {
            return cur.err(format!("key '{key}' has no value"));
        }
        let v = cur.value(false)?;
        cur.skip_inline_space();
        cur.skip_comment();
        if !matches!(cur.peek(), None | Some('\n')) {
            return cur.err("unexpected text after value");
        }
        entries.push((key, v));
    }
    Ok(Document {
        entries,
        end: cur.pos(),
    })
}
