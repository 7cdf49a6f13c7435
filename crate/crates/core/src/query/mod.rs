//! The SELECT dialect: `SELECT cols FROM t [WHERE pred] [ORDER BY col [ASC|DESC], ...]`.

mod bind;
mod parse;

use std::fmt;

pub use bind::{bind_query, BindError, BoundOperand, BoundOrderKey, BoundPredicate, BoundQuery};
pub use parse::{parse_query, ParseError};

pub use crate::value::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Ascending,
    Descending,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Ascending => Direction::Descending,
            Direction::Descending => Direction::Ascending,
        }
    }
}

/// Right-hand side of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Number(f64),
    Text(String),
    Column(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Comparison {
        column: String,
        op: CmpOp,
        rhs: Operand,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn cmp(column: impl Into<String>, op: CmpOp, rhs: Operand) -> Self {
        Predicate::Comparison {
            column: column.into(),
            op,
            rhs,
        }
    }

    pub fn and(l: Predicate, r: Predicate) -> Self {
        Predicate::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Predicate, r: Predicate) -> Self {
        Predicate::Or(Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Predicate) -> Self {
        Predicate::Not(Box::new(e))
    }

    /// Number of literal leaves, left to right.
    pub fn literal_count(&self) -> usize {
        match self {
            Predicate::Comparison {
                rhs: Operand::Column(_),
                ..
            } => 0,
            Predicate::Comparison { .. } => 1,
            Predicate::And(l, r) | Predicate::Or(l, r) => l.literal_count() + r.literal_count(),
            Predicate::Not(e) => e.literal_count(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Predicate::Or(..) => 1,
            Predicate::And(..) => 2,
            Predicate::Not(..) => 3,
            Predicate::Comparison { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub column: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub projection: Vec<String>,
    pub source: String,
    pub predicate: Option<Predicate>,
    pub order_keys: Vec<OrderKey>,
}

const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "WHERE", "ORDER", "BY", "ASC", "DESC", "AND", "OR", "NOT",
];

pub(crate) fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn is_bare_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_keyword(s)
}

fn write_ident(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_bare_ident(s) {
        f.write_str(s)
    } else {
        write!(f, "\"{}\"", s.replace('"', "\"\""))
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Number(n) => write!(f, "{n}"),
            Operand::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Operand::Column(c) => write_ident(f, c),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, c: &Predicate, min: u8| -> fmt::Result {
            if c.precedence() < min {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        };
        match self {
            Predicate::Comparison { column, op, rhs } => {
                write_ident(f, column)?;
                write!(f, " {} {rhs}", op.symbol())
            }
            // Both connectives parse left-associatively, so a same-precedence
            // right child needs parentheses.
            Predicate::Or(l, r) => {
                child(f, l, 1)?;
                f.write_str(" OR ")?;
                child(f, r, 2)
            }
            Predicate::And(l, r) => {
                child(f, l, 2)?;
                f.write_str(" AND ")?;
                child(f, r, 3)
            }
            Predicate::Not(e) => {
                f.write_str("NOT ")?;
                child(f, e, 3)
            }
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, c) in self.projection.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_ident(f, c)?;
        }
        f.write_str(" FROM ")?;
        write_ident(f, &self.source)?;
        if let Some(p) = &self.predicate {
            write!(f, " WHERE {p}")?;
        }
        for (i, k) in self.order_keys.iter().enumerate() {
            f.write_str(if i == 0 { " ORDER BY " } else { ", " })?;
            write_ident(f, &k.column)?;
            if k.direction == Direction::Descending {
                f.write_str(" DESC")?;
            }
        }
        Ok(())
    }
}
