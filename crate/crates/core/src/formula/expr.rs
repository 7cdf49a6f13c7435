use std::fmt;

use thiserror::Error;

use super::addr::{letters_to_col, CellAddr, CellRange, MAX_ROW};
use crate::value::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Concat,
    Cmp(CmpOp),
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Cmp(_) => 1,
            BinOp::Concat => 2,
            BinOp::Add | BinOp::Sub => 3,
            BinOp::Mul | BinOp::Div => 4,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Concat => "&",
            BinOp::Cmp(op) => op.symbol(),
        }
    }
}

const UNARY_PREC: u8 = 5;
const ATOM_PREC: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    If,
    Match,
    Index,
    RankEq,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::If => "IF",
            Func::Match => "MATCH",
            Func::Index => "INDEX",
            Func::RankEq => "RANK.EQ",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Index => 2,
            Func::If | Func::Match | Func::RankEq => 3,
        }
    }

    pub fn lookup(name: &str) -> Option<Func> {
        [Func::If, Func::Match, Func::Index, Func::RankEq]
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }
}

/// Formula expression tree.
///
/// Number literals are non-negative; a leading minus is [`Expr::Neg`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Ref(CellAddr),
    Range(CellRange),
    Name(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Self {
        debug_assert_eq!(args.len(), func.arity());
        Expr::Call { func, args }
    }

    pub fn name(n: impl Into<String>) -> Self {
        Expr::Name(n.into())
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => UNARY_PREC,
            Expr::Number(n) if n.is_sign_negative() => UNARY_PREC,
            _ => ATOM_PREC,
        }
    }

    /// Visits every cell reference, range reference and name in the tree.
    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(RefItem<'a>)) {
        match self {
            Expr::Number(_) | Expr::Text(_) => {}
            Expr::Ref(a) => f(RefItem::Cell(a)),
            Expr::Range(r) => f(RefItem::Range(r)),
            Expr::Name(n) => f(RefItem::Name(n)),
            Expr::Neg(e) => e.visit_refs(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit_refs(f);
                rhs.visit_refs(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.visit_refs(f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefItem<'a> {
    Cell(&'a CellAddr),
    Range(&'a CellRange),
    Name(&'a str),
}

/// Renders `expr` as formula text (leading `=`, no spaces, minimal
/// parentheses). References on `home` omit the sheet prefix.
pub fn render_formula(expr: &Expr, home: &str) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, expr, home);
    out
}

fn write_child(out: &mut String, e: &Expr, home: &str, min_prec: u8) {
    if e.precedence() < min_prec {
        out.push('(');
        write_expr(out, e, home);
        out.push(')');
    } else {
        write_expr(out, e, home);
    }
}

fn write_expr(out: &mut String, expr: &Expr, home: &str) {
    match expr {
        Expr::Number(n) => out.push_str(&n.to_string()),
        Expr::Text(s) => {
            out.push('"');
            out.push_str(&s.replace('"', "\"\""));
            out.push('"');
        }
        Expr::Ref(a) => out.push_str(&a.render(Some(home))),
        Expr::Range(r) => out.push_str(&r.render(Some(home))),
        Expr::Name(n) => out.push_str(n),
        Expr::Neg(e) => {
            out.push('-');
            write_child(out, e, home, UNARY_PREC);
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            write_child(out, lhs, home, p);
            out.push_str(op.symbol());
            // Left-associative: an equal-precedence right operand keeps its parens.
            write_child(out, rhs, home, p + 1);
        }
        Expr::Call { func, args } => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_expr(out, a, home);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("{func} takes {expected} arguments, got {found}")]
    Arity {
        func: &'static str,
        expected: usize,
        found: usize,
    },
}

fn syntax(pos: usize, message: impl Into<String>) -> FormulaError {
    FormulaError::Syntax {
        pos,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Str(String),
    Word(String),
    /// `'quoted sheet'` (only valid before `!`).
    QuotedSheet(String),
    Bang,
    Colon,
    Comma,
    LParen,
    RParen,
    Op(BinOp),
    Minus,
    Eof,
}

fn lex(text: &str, base: usize) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i];
        let tok = match c {
            b' ' | b'\t' => {
                i += 1;
                continue;
            }
            b'!' => Tok::Bang,
            b':' => Tok::Colon,
            b',' => Tok::Comma,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'+' => Tok::Op(BinOp::Add),
            b'-' => Tok::Minus,
            b'*' => Tok::Op(BinOp::Mul),
            b'/' => Tok::Op(BinOp::Div),
            b'&' => Tok::Op(BinOp::Concat),
            b'=' => Tok::Op(BinOp::Cmp(CmpOp::Eq)),
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 1;
                    Tok::Op(BinOp::Cmp(CmpOp::Le))
                }
                Some(b'>') => {
                    i += 1;
                    Tok::Op(BinOp::Cmp(CmpOp::Ne))
                }
                _ => Tok::Op(BinOp::Cmp(CmpOp::Lt)),
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    Tok::Op(BinOp::Cmp(CmpOp::Ge))
                } else {
                    Tok::Op(BinOp::Cmp(CmpOp::Gt))
                }
            }
            b'"' | b'\'' => {
                let quote = c as char;
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(rel) = text[i..].find(quote) else {
                        return Err(syntax(base + start, "unterminated quote"));
                    };
                    s.push_str(&text[i..i + rel]);
                    i += rel + 1;
                    if text[i..].starts_with(quote) {
                        s.push(quote);
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((
                    base + start,
                    if quote == '"' {
                        Tok::Str(s)
                    } else {
                        Tok::QuotedSheet(s)
                    },
                ));
                continue;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lexeme = &text[start..i];
                let n = crate::value::parse_decimal(lexeme)
                    .ok_or_else(|| syntax(base + start, format!("bad number {lexeme:?}")))?;
                out.push((base + start, Tok::Number(n)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                out.push((base + start, Tok::Word(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(base + start, format!("unexpected character {ch:?}")));
            }
        };
        out.push((base + start, tok));
        i += 1;
    }
    out.push((base + text.len(), Tok::Eof));
    Ok(out)
}

/// Splits `AB12` into a column and row, `None` if it is not an in-bounds reference.
pub(crate) fn split_cell_ref(word: &str) -> Option<(u32, u32)> {
    let digits_at = word.find(|c: char| c.is_ascii_digit())?;
    let (letters, digits) = word.split_at(digits_at);
    if !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let col = letters_to_col(letters)?;
    let row: u32 = digits.parse().ok()?;
    (1..=MAX_ROW).contains(&row).then_some((col, row))
}

/// A name is usable in formulas if it lexes as one word and cannot be read
/// as a cell reference or function call.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && split_cell_ref(name).is_none()
        && Func::lookup(name).is_none()
}

struct Parser<'s> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    home: &'s str,
}

impl Parser<'_> {
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

    fn expr(&mut self, min_prec: u8) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op(op) => *op,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.expr(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Number(n) => Ok(Expr::Number(n)),
            Tok::Str(s) => Ok(Expr::Text(s)),
            Tok::LParen => {
                let e = self.expr(1)?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::QuotedSheet(sheet) => {
                self.expect(Tok::Bang, "'!' after sheet name")?;
                self.reference(&sheet)
            }
            Tok::Word(word) => {
                if matches!(self.peek(), Tok::Bang) {
                    self.bump();
                    return self.reference(&word);
                }
                if matches!(self.peek(), Tok::LParen) {
                    return self.call(&word);
                }
                if split_cell_ref(&word).is_some() {
                    self.at -= 1;
                    let home = self.home.to_string();
                    return self.reference(&home);
                }
                // TRUE/FALSE are not part of the vocabulary and resolve like any other name.
                Ok(Expr::Name(word))
            }
            other => Err(syntax(pos, format!("unexpected {other:?}"))),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {what}")))
        }
    }

    fn cell(&mut self, sheet: &str) -> Result<CellAddr, FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Word(w) => match split_cell_ref(&w) {
                Some((col, row)) => Ok(CellAddr::new(sheet, col, row)),
                None => Err(syntax(pos, format!("bad cell reference {w:?}"))),
            },
            _ => Err(syntax(pos, "expected cell reference")),
        }
    }

    fn reference(&mut self, sheet: &str) -> Result<Expr, FormulaError> {
        if sheet.is_empty() {
            return Err(syntax(self.pos(), "empty sheet name"));
        }
        let start = self.cell(sheet)?;
        if matches!(self.peek(), Tok::Colon) {
            self.bump();
            let end = self.cell(sheet)?;
            return Ok(Expr::Range(CellRange::between(&start, &end)));
        }
        Ok(Expr::Ref(start))
    }

    fn call(&mut self, name: &str) -> Result<Expr, FormulaError> {
        let func = Func::lookup(name)
            .ok_or_else(|| FormulaError::UnknownFunction(name.to_ascii_uppercase()))?;
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if !matches!(self.peek(), Tok::RParen) {
            loop {
                args.push(self.expr(1)?);
                if matches!(self.peek(), Tok::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "')' or ','")?;
        if args.len() != func.arity() {
            return Err(FormulaError::Arity {
                func: func.name(),
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call { func, args })
    }
}

/// Parses formula text (must start with `=`). Unqualified references are
/// placed on `home`; names stay unresolved.
pub fn parse_formula(text: &str, home: &str) -> Result<Expr, FormulaError> {
    let Some(body) = text.strip_prefix('=') else {
        return Err(syntax(0, "formula must start with '='"));
    };
    let toks = lex(body, 1)?;
    let mut p = Parser { toks, at: 0, home };
    let e = p.expr(1)?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(syntax(p.pos(), format!("unexpected {:?}", p.peek())));
    }
    Ok(e)
}

/// Parses a bare reference such as `Params!B2` or `'My Data'!A2:A9`.
pub fn parse_reference(text: &str, home: &str) -> Result<Expr, FormulaError> {
    match parse_formula(&format!("={text}"), home)? {
        e @ (Expr::Ref(_) | Expr::Range(_)) => Ok(e),
        _ => Err(syntax(
            0,
            format!("{text:?} is not a cell or range reference"),
        )),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self, "");
        f.write_str(&s)
    }
}
