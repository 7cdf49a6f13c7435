use thiserror::Error;

use super::{is_keyword, CmpOp, Direction, Operand, OrderKey, Predicate, Query};
use crate::value::parse_decimal;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("empty projection")]
    EmptyProjection,
    #[error("column {0:?} appears more than once in ORDER BY")]
    DuplicateOrderColumn(String),
}

fn syntax(pos: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        pos,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Keyword(&'static str),
    Ident(String),
    Number(f64),
    Str(String),
    Op(CmpOp),
    Comma,
    LParen,
    RParen,
    Semi,
    Eof,
}

const KEYWORDS: [&str; 10] = [
    "SELECT", "FROM", "WHERE", "ORDER", "BY", "ASC", "DESC", "AND", "OR", "NOT",
];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b',' => {
                out.push((start, Tok::Comma));
                i += 1;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b';' => {
                out.push((start, Tok::Semi));
                i += 1;
            }
            b'=' => {
                out.push((start, Tok::Op(CmpOp::Eq)));
                i += 1;
            }
            b'<' => {
                let (op, len) = match bytes.get(i + 1) {
                    Some(b'=') => (CmpOp::Le, 2),
                    Some(b'>') => (CmpOp::Ne, 2),
                    _ => (CmpOp::Lt, 1),
                };
                out.push((start, Tok::Op(op)));
                i += len;
            }
            b'>' => {
                let (op, len) = if bytes.get(i + 1) == Some(&b'=') {
                    (CmpOp::Ge, 2)
                } else {
                    (CmpOp::Gt, 1)
                };
                out.push((start, Tok::Op(op)));
                i += len;
            }
            b'\'' | b'"' => {
                let quote = c;
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(rel) = text[i..].find(quote as char) else {
                        return Err(syntax(start, "unterminated quoted token"));
                    };
                    s.push_str(&text[i..i + rel]);
                    i += rel + 1;
                    if bytes.get(i) == Some(&quote) {
                        s.push(quote as char);
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((
                    start,
                    if quote == b'\'' {
                        Tok::Str(s)
                    } else {
                        Tok::Ident(s)
                    },
                ));
            }
            b'0'..=b'9' | b'.' | b'-' | b'+' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lexeme = &text[start..i];
                let n = parse_decimal(lexeme)
                    .ok_or_else(|| syntax(start, format!("bad number {lexeme:?}")))?;
                out.push((start, Tok::Number(n)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match KEYWORDS.iter().find(|k| k.eq_ignore_ascii_case(word)) {
                    Some(k) => Tok::Keyword(k),
                    None => Tok::Ident(word.to_string()),
                };
                out.push((start, tok));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character {ch:?}")));
            }
        }
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Keyword(k) if *k == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(
                self.pos(),
                format!("expected {kw}, found {}", describe(self.peek())),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            other => Err(syntax(
                self.pos(),
                format!("expected {what}, found {}", describe(other)),
            )),
        }
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        self.expect_keyword("SELECT")?;
        if matches!(self.peek(), Tok::Keyword("FROM")) {
            return Err(ParseError::EmptyProjection);
        }
        let mut projection = vec![self.ident("column name")?];
        while matches!(self.peek(), Tok::Comma) {
            self.bump();
            projection.push(self.ident("column name")?);
        }
        self.expect_keyword("FROM")?;
        let source = self.ident("table name")?;
        let predicate = if self.eat_keyword("WHERE") {
            Some(self.or_expr()?)
        } else {
            None
        };
        let mut order_keys: Vec<OrderKey> = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            loop {
                let column = self.ident("ORDER BY column")?;
                let direction = if self.eat_keyword("DESC") {
                    Direction::Descending
                } else {
                    self.eat_keyword("ASC");
                    Direction::Ascending
                };
                if order_keys.iter().any(|k| k.column == column) {
                    return Err(ParseError::DuplicateOrderColumn(column));
                }
                order_keys.push(OrderKey { column, direction });
                if matches!(self.peek(), Tok::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        if matches!(self.peek(), Tok::Semi) {
            self.bump();
        }
        if !matches!(self.peek(), Tok::Eof) {
            return Err(syntax(
                self.pos(),
                format!("unexpected {}", describe(self.peek())),
            ));
        }
        Ok(Query {
            projection,
            source,
            predicate,
            order_keys,
        })
    }

    fn or_expr(&mut self) -> Result<Predicate, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("OR") {
            lhs = Predicate::or(lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Predicate, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_keyword("AND") {
            lhs = Predicate::and(lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Predicate, ParseError> {
        if self.eat_keyword("NOT") {
            return Ok(Predicate::not(self.not_expr()?));
        }
        if matches!(self.peek(), Tok::LParen) {
            self.bump();
            let inner = self.or_expr()?;
            if !matches!(self.peek(), Tok::RParen) {
                return Err(syntax(
                    self.pos(),
                    format!("expected ')', found {}", describe(self.peek())),
                ));
            }
            self.bump();
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Predicate, ParseError> {
        let column = self.ident("column name")?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            other => {
                return Err(syntax(
                    self.pos(),
                    format!("expected comparison operator, found {}", describe(other)),
                ))
            }
        };
        self.bump();
        let pos = self.pos();
        let rhs = match self.bump() {
            Tok::Number(n) => Operand::Number(n),
            Tok::Str(s) => Operand::Text(s),
            Tok::Ident(c) => Operand::Column(c),
            other => {
                return Err(syntax(
                    pos,
                    format!("expected literal or column, found {}", describe(&other)),
                ))
            }
        };
        Ok(Predicate::Comparison { column, op, rhs })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Keyword(k) => k.to_string(),
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Number(n) => format!("number {n}"),
        Tok::Str(s) => format!("string '{s}'"),
        Tok::Op(op) => format!("'{}'", op.symbol()),
        Tok::Comma => "','".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Semi => "';'".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses one statement of the dialect. Keywords are case-insensitive;
/// identifiers are bare words or double-quoted, text literals single-quoted.
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    debug_assert!(KEYWORDS.iter().all(|k| is_keyword(k)));
    let toks = lex(text)?;
    Parser { toks, at: 0 }.query()
}
