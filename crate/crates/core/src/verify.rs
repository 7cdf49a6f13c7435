//! Ground truth for compiled grids: a direct filter/sort/project over the
//! table, extraction of the grid's result block, a slot-by-slot diff, and a
//! seeded generator of tables and queries.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compiler::{compile_with, CompilationPlan, CompileError, CompileOptions};
use crate::engine::{evaluate, EvalError, ValueGrid};
use crate::query::{
    bind_query, BindError, BoundOperand, BoundPredicate, BoundQuery, Direction, Operand, OrderKey,
    Predicate, Query,
};
use crate::table::{ColType, ColumnDef, Layout, Scalar, Table};
use crate::value::{cmp_number, compare, is_truthy, text_eq, CmpOp, ErrorKind, Value};

/// Projected rows in result order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub match_count: usize,
}

/// What the grid's result block holds after evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<Vec<Value>>,
    pub match_count: usize,
    /// Every slot after `match_count` is `#N/A` in row number and values.
    pub na_tail_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// 1-based slot.
    pub slot: usize,
    pub column: String,
    pub oracle: Option<Value>,
    pub grid: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub status: Status,
    pub mismatches: Vec<Mismatch>,
    pub na_tail_ok: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("malformed grid: no value at {0}")]
    MalformedGrid(String),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn cell_value(table: &Table, row: usize, col: usize) -> Value {
    table.cell(row, col).to_value()
}

fn holds(p: &BoundPredicate, table: &Table, row: usize) -> Result<bool, ErrorKind> {
    Ok(match p {
        BoundPredicate::Const(b) => *b,
        BoundPredicate::Compare { column, op, rhs } => {
            let rhs = match rhs {
                BoundOperand::Number(n) => Value::Number(*n),
                BoundOperand::Text(t) => Value::Text(t.clone()),
                BoundOperand::Column(c) => cell_value(table, row, *c),
            };
            is_truthy(&compare(*op, &cell_value(table, row, *column), &rhs))?
        }
        BoundPredicate::And(l, r) => {
            let l = holds(l, table, row)?;
            holds(r, table, row)? && l
        }
        BoundPredicate::Or(l, r) => {
            let l = holds(l, table, row)?;
            holds(r, table, row)? || l
        }
        BoundPredicate::Not(e) => !holds(e, table, row)?,
    })
}

/// Filters, stable-sorts by the order keys (source position breaks the
/// remaining ties) and projects.
pub fn oracle_select(table: &Table, bq: &BoundQuery) -> OracleResult {
    let mut selected: Vec<usize> = (0..table.row_count())
        .filter(|&i| {
            bq.predicate
                .as_ref()
                .is_none_or(|p| holds(p, table, i).unwrap_or(false))
        })
        .collect();
    selected.sort_by(|&a, &b| {
        for key in &bq.order_keys {
            let (x, y) = (table.cell(a, key.column), table.cell(b, key.column));
            let (Scalar::Number(x), Scalar::Number(y)) = (x, y) else {
                unreachable!("order keys are numeric")
            };
            let ord = match key.direction {
                Direction::Ascending => cmp_number(*x, *y),
                Direction::Descending => cmp_number(*y, *x),
            };
            if ord.is_ne() {
                return ord;
            }
        }
        a.cmp(&b)
    });
    let rows: Vec<Vec<Value>> = selected
        .iter()
        .map(|&i| {
            bq.projection
                .iter()
                .map(|&c| cell_value(table, i, c))
                .collect()
        })
        .collect();
    OracleResult {
        columns: bq.query.projection.clone(),
        match_count: rows.len(),
        rows,
    }
}

/// Reads the Ordered block when there is one, else the Where block.
pub fn extract_grid_result(
    vg: &ValueGrid,
    plan: &CompilationPlan,
) -> Result<GridResult, VerifyError> {
    let block = plan.result_block();
    let lanes: Vec<u32> = block
        .value_lanes
        .iter()
        .take(plan.projection_len)
        .map(|&(_, l)| l)
        .collect();
    let read = |lane: u32, slot: usize| {
        let addr = block.addr(lane, slot);
        vg.get(&addr)
            .cloned()
            .ok_or_else(|| VerifyError::MalformedGrid(addr.to_string()))
    };
    let mut rows = Vec::new();
    let mut match_count = None;
    let mut na_tail_ok = true;
    for slot in 1..=block.n_slots {
        let rownum = read(block.rownum_lane, slot)?;
        let values = lanes
            .iter()
            .map(|&l| read(l, slot))
            .collect::<Result<Vec<_>, _>>()?;
        match match_count {
            None if !rownum.is_na() => rows.push(values),
            None => {
                match_count = Some(slot - 1);
                na_tail_ok &= values.iter().all(Value::is_na);
            }
            Some(_) => na_tail_ok &= rownum.is_na() && values.iter().all(Value::is_na),
        }
    }
    Ok(GridResult {
        match_count: match_count.unwrap_or(block.n_slots),
        rows,
        na_tail_ok,
    })
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x == y,
        (Value::Text(x), Value::Text(y)) => text_eq(x, y),
        _ => a == b,
    }
}

/// Row-by-row, column-by-column diff. Numbers must match exactly.
pub fn compare_results(oracle: &OracleResult, grid: &GridResult) -> VerifyReport {
    let mut mismatches = Vec::new();
    for slot in 0..oracle.rows.len().max(grid.rows.len()) {
        for (c, name) in oracle.columns.iter().enumerate() {
            let o = oracle.rows.get(slot).map(|r| r[c].clone());
            let g = grid.rows.get(slot).and_then(|r| r.get(c).cloned());
            let equal = match (&o, &g) {
                (Some(o), Some(g)) => same(o, g),
                _ => false,
            };
            if !equal {
                mismatches.push(Mismatch {
                    slot: slot + 1,
                    column: name.clone(),
                    oracle: o,
                    grid: g,
                });
            }
        }
    }
    let status = if mismatches.is_empty() && grid.na_tail_ok {
        Status::Pass
    } else {
        Status::Fail
    };
    VerifyReport {
        status,
        mismatches,
        na_tail_ok: grid.na_tail_ok,
    }
}

impl fmt::Display for VerifyReport {
    /// `PASS` or `FAIL`, then `slot<TAB>column<TAB>oracle<TAB>grid` per mismatch.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}",
            if self.status == Status::Pass {
                "PASS"
            } else {
                "FAIL"
            }
        )?;
        let show = |v: &Option<Value>| {
            v.as_ref()
                .map_or("(absent)".to_string(), Value::canonical_text)
        };
        for m in &self.mismatches {
            writeln!(
                f,
                "{}\t{}\t{}\t{}",
                m.slot,
                m.column,
                show(&m.oracle),
                show(&m.grid)
            )?;
        }
        if !self.na_tail_ok {
            writeln!(f, "tail\tnon-#N/A value after the last match")?;
        }
        Ok(())
    }
}

/// Compile, evaluate, extract and diff against the oracle.
pub fn check_grid(
    bq: &BoundQuery,
    table: &Table,
    layout: &Layout,
    opts: &CompileOptions,
) -> Result<(GridResult, VerifyReport), VerifyError> {
    let (wb, plan) = compile_with(bq, table, layout, opts)?;
    let vg = evaluate(&wb, &BTreeMap::new())?;
    let grid = extract_grid_result(&vg, &plan)?;
    let report = compare_results(&oracle_select(table, bq), &grid);
    Ok((grid, report))
}

/// Binds `query` and runs [`check_grid`].
pub fn verify_query(
    query: &Query,
    table: &Table,
    layout: &Layout,
    opts: &CompileOptions,
) -> Result<VerifyReport, VerifyError> {
    let bq = bind_query(query, table)?;
    Ok(check_grid(&bq, table, layout, opts)?.1)
}

const WORDS: [&str; 7] = ["alpha", "Alpha", "BETA", "beta", "Gamma", "delta", "GPI"];

/// A seeded random table named `t` plus a query over it.
///
/// Value domains are tiny so that duplicates, and therefore rank ties, are
/// the norm. Text uses mixed-case spellings of the same words.
pub fn random_instance(seed: u64, max_rows: usize, max_keys: usize) -> (Table, Query) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_num = rng.gen_range(1..=3);
    let n_txt = rng.gen_range(0..=2);
    let mut columns: Vec<ColumnDef> = (1..=n_num)
        .map(|i| ColumnDef::new(format!("Num{i}"), ColType::Number))
        .chain((1..=n_txt).map(|i| ColumnDef::new(format!("Txt{i}"), ColType::Text)))
        .collect();
    columns.shuffle(&mut rng);
    let domains: Vec<u32> = columns.iter().map(|_| rng.gen_range(1..=6)).collect();

    let n_rows = rng.gen_range(0..=max_rows);
    let rows: Vec<Vec<Scalar>> = (0..n_rows)
        .map(|_| {
            columns
                .iter()
                .zip(&domains)
                .map(|(c, &d)| random_scalar(&mut rng, c.col_type, d))
                .collect()
        })
        .collect();
    let table = Table::new("t", columns.clone(), rows).expect("generated table is well-formed");

    let mut projection: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    projection.shuffle(&mut rng);
    projection.truncate(rng.gen_range(1..=columns.len()));

    let predicate = if rng.gen_bool(0.2) {
        None
    } else {
        Some(random_predicate(&mut rng, &columns, &domains, 3))
    };

    let mut numeric: Vec<&ColumnDef> = columns
        .iter()
        .filter(|c| c.col_type == ColType::Number)
        .collect();
    numeric.shuffle(&mut rng);
    let n_keys = rng.gen_range(0..=max_keys.min(numeric.len()));
    let order_keys = numeric[..n_keys]
        .iter()
        .map(|c| OrderKey {
            column: c.name.clone(),
            direction: if rng.gen_bool(0.5) {
                Direction::Ascending
            } else {
                Direction::Descending
            },
        })
        .collect();
    (
        table,
        Query {
            projection,
            source: "t".to_string(),
            predicate,
            order_keys,
        },
    )
}

fn random_scalar(rng: &mut ChaCha8Rng, ty: ColType, domain: u32) -> Scalar {
    match ty {
        ColType::Number => {
            let base = rng.gen_range(0..=domain) as f64;
            // Occasional halves and negatives.
            match rng.gen_range(0..10) {
                0 => Scalar::Number(base + 0.5),
                1 => Scalar::Number(-base),
                _ => Scalar::Number(base),
            }
        }
        ColType::Text => Scalar::Text(
            WORDS[rng.gen_range(0..(domain as usize + 1).min(WORDS.len()))].to_string(),
        ),
    }
}

fn random_predicate(
    rng: &mut ChaCha8Rng,
    columns: &[ColumnDef],
    domains: &[u32],
    depth: u32,
) -> Predicate {
    if depth > 0 && rng.gen_bool(0.45) {
        return match rng.gen_range(0..5) {
            0 | 1 => Predicate::and(
                random_predicate(rng, columns, domains, depth - 1),
                random_predicate(rng, columns, domains, depth - 1),
            ),
            2 | 3 => Predicate::or(
                random_predicate(rng, columns, domains, depth - 1),
                random_predicate(rng, columns, domains, depth - 1),
            ),
            _ => Predicate::not(random_predicate(rng, columns, domains, depth - 1)),
        };
    }
    let ci = rng.gen_range(0..columns.len());
    let col = &columns[ci];
    let op = *CmpOp::ALL.choose(rng).expect("non-empty");
    let same_type: Vec<&ColumnDef> = columns
        .iter()
        .filter(|c| c.col_type == col.col_type && c.name != col.name)
        .collect();
    let roll = rng.gen_range(0..20);
    let rhs = if roll < 3 && !same_type.is_empty() {
        Operand::Column(same_type.choose(rng).expect("non-empty").name.clone())
    } else if roll < 5 {
        // Cross-type equality: folds to a constant.
        let rhs = match col.col_type {
            ColType::Number => Operand::Text(WORDS[rng.gen_range(0..WORDS.len())].to_string()),
            ColType::Text => Operand::Number(rng.gen_range(0..5) as f64),
        };
        let op = if rng.gen_bool(0.5) {
            CmpOp::Eq
        } else {
            CmpOp::Ne
        };
        return Predicate::cmp(col.name.clone(), op, rhs);
    } else {
        match random_scalar(rng, col.col_type, domains[ci] + 1) {
            Scalar::Number(n) => Operand::Number(n),
            Scalar::Text(t) => Operand::Text(t),
        }
    };
    Predicate::cmp(col.name.clone(), op, rhs)
}
