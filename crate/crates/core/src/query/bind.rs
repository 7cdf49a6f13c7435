use thiserror::Error;

use super::{CmpOp, Direction, Operand, Predicate, Query};
use crate::table::{ColType, Table};

#[derive(Debug, Error, PartialEq)]
pub enum BindError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("unknown table {found:?} (loaded table is {expected:?})")]
    UnknownTable { found: String, expected: String },
    #[error("ORDER BY column {0:?} is not numeric")]
    NonNumericOrderKey(String),
    #[error("cannot order-compare {column:?} ({column_type}) with {rhs}")]
    TypeMismatchOrdering {
        column: String,
        column_type: ColType,
        rhs: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundOperand {
    Number(f64),
    Text(String),
    Column(usize),
}

/// A predicate with resolved column indices.
///
/// `Const` only appears at the root: equality across types folds to a
/// constant and the folding is propagated through the connectives.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundPredicate {
    Const(bool),
    Compare {
        column: usize,
        op: CmpOp,
        rhs: BoundOperand,
    },
    And(Box<BoundPredicate>, Box<BoundPredicate>),
    Or(Box<BoundPredicate>, Box<BoundPredicate>),
    Not(Box<BoundPredicate>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOrderKey {
    pub column: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub query: Query,
    pub projection: Vec<usize>,
    pub predicate: Option<BoundPredicate>,
    pub order_keys: Vec<BoundOrderKey>,
}

/// Resolves every column reference against `table` and type-checks comparisons.
pub fn bind_query(query: &Query, table: &Table) -> Result<BoundQuery, BindError> {
    if !query.source.eq_ignore_ascii_case(&table.name) {
        return Err(BindError::UnknownTable {
            found: query.source.clone(),
            expected: table.name.clone(),
        });
    }
    let resolve = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| BindError::UnknownColumn(name.to_string()))
    };

    let projection = query
        .projection
        .iter()
        .map(|c| resolve(c))
        .collect::<Result<Vec<_>, _>>()?;
    let predicate = query
        .predicate
        .as_ref()
        .map(|p| bind_predicate(p, table))
        .transpose()?
        .map(fold);
    let order_keys = query
        .order_keys
        .iter()
        .map(|k| {
            let column = resolve(&k.column)?;
            if table.columns()[column].col_type != ColType::Number {
                return Err(BindError::NonNumericOrderKey(k.column.clone()));
            }
            Ok(BoundOrderKey {
                column,
                direction: k.direction,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundQuery {
        query: query.clone(),
        projection,
        predicate,
        order_keys,
    })
}

fn bind_predicate(p: &Predicate, table: &Table) -> Result<BoundPredicate, BindError> {
    Ok(match p {
        Predicate::Comparison { column, op, rhs } => {
            let col = table
                .column_index(column)
                .ok_or_else(|| BindError::UnknownColumn(column.clone()))?;
            let lhs_type = table.columns()[col].col_type;
            let (bound, rhs_type) = match rhs {
                Operand::Number(n) => (BoundOperand::Number(*n), ColType::Number),
                Operand::Text(s) => (BoundOperand::Text(s.clone()), ColType::Text),
                Operand::Column(c) => {
                    let idx = table
                        .column_index(c)
                        .ok_or_else(|| BindError::UnknownColumn(c.clone()))?;
                    (BoundOperand::Column(idx), table.columns()[idx].col_type)
                }
            };
            if lhs_type != rhs_type {
                match op {
                    CmpOp::Eq => return Ok(BoundPredicate::Const(false)),
                    CmpOp::Ne => return Ok(BoundPredicate::Const(true)),
                    _ => {
                        return Err(BindError::TypeMismatchOrdering {
                            column: column.clone(),
                            column_type: lhs_type,
                            rhs: rhs.to_string(),
                        })
                    }
                }
            }
            BoundPredicate::Compare {
                column: col,
                op: *op,
                rhs: bound,
            }
        }
        Predicate::And(l, r) => BoundPredicate::And(
            Box::new(bind_predicate(l, table)?),
            Box::new(bind_predicate(r, table)?),
        ),
        Predicate::Or(l, r) => BoundPredicate::Or(
            Box::new(bind_predicate(l, table)?),
            Box::new(bind_predicate(r, table)?),
        ),
        Predicate::Not(e) => BoundPredicate::Not(Box::new(bind_predicate(e, table)?)),
    })
}

fn fold(p: BoundPredicate) -> BoundPredicate {
    use BoundPredicate::*;
    match p {
        And(l, r) => match (fold(*l), fold(*r)) {
            (Const(false), _) | (_, Const(false)) => Const(false),
            (Const(true), x) | (x, Const(true)) => x,
            (l, r) => And(Box::new(l), Box::new(r)),
        },
        Or(l, r) => match (fold(*l), fold(*r)) {
            (Const(true), _) | (_, Const(true)) => Const(true),
            (Const(false), x) | (x, Const(false)) => x,
            (l, r) => Or(Box::new(l), Box::new(r)),
        },
        Not(e) => match fold(*e) {
            Const(b) => Const(!b),
            e => Not(Box::new(e)),
        },
        leaf => leaf,
    }
}
