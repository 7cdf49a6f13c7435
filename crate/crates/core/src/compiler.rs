//! Lowers a bound query into a workbook of plain formulas.
//!
//! Sheets emitted:
//!
//! * the source sheet: table literals, an indicator column (1 when the row
//!   satisfies the predicate) and a running-sum sequence column;
//! * `Params`: one literal cell per predicate literal, each a named parameter;
//! * `Where`: slots 1..N, the source row holding the k-th selected row
//!   (`MATCH` over the sequence column) and `INDEX` formulas per column;
//! * `Ordered` (only with ORDER BY): rank columns, a surrogate key and its
//!   rank live on `Where`; this sheet reads the Where rows back in key order.
//!
//! Every address goes through [`Placer`], so a horizontal layout is the same
//! construction with rows and columns swapped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{
    BinOp, CellAddr, CellRange, Expr, Func, NameTarget, Workbook, MAX_COL, MAX_ROW,
};
use crate::query::{BoundOperand, BoundPredicate, BoundQuery, Direction};
use crate::table::{Orientation, Scalar, Table};
use crate::value::CmpOp;

pub const PARAMS_SHEET: &str = "Params";
pub const WHERE_SHEET: &str = "Where";
pub const ORDERED_SHEET: &str = "Ordered";

const SK_NAME: &str = "SK";
const SK_RANK_NAME: &str = "SK_Rank";

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("SK capacity exceeded: {n} rows with {k} order keys needs ({n}+1)^{} > {limit}", k + 1)]
    SkCapacityExceeded { n: usize, k: usize, limit: u64 },
    #[error("source sheet name {0:?} clashes with a generated sheet")]
    SheetNameClash(String),
    #[error("layout does not fit: {needed} {unit} needed, the limit is {limit}")]
    LayoutOutOfBounds {
        needed: u64,
        unit: &'static str,
        limit: u32,
    },
}

/// Switches used by tests to build known-wrong grids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompileOptions {
    /// Match ordered slots directly against the first key's rank column,
    /// skipping the surrogate key. Ties then collapse onto one slot.
    pub naive_single_key: bool,
    /// Emit every rank with the opposite direction.
    pub flip_rank_direction: bool,
}

/// Maps a `(record, lane)` pair to a cell: records run down rows in a
/// vertical layout and across columns in a horizontal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placer(pub Orientation);

impl Placer {
    pub fn addr(self, sheet: &str, record: u32, lane: u32) -> CellAddr {
        match self.0 {
            Orientation::Vertical => CellAddr::new(sheet, lane, record),
            Orientation::Horizontal => CellAddr::new(sheet, record, lane),
        }
    }

    /// The cells of one lane across records `first..=last`.
    pub fn lane_range(self, sheet: &str, lane: u32, first: u32, last: u32) -> CellRange {
        CellRange::between(
            &self.addr(sheet, first, lane),
            &self.addr(sheet, last, lane),
        )
    }

    fn record_limit(self) -> (u32, &'static str) {
        match self.0 {
            Orientation::Vertical => (MAX_ROW, "rows"),
            Orientation::Horizontal => (MAX_COL, "columns"),
        }
    }

    fn lane_limit(self) -> (u32, &'static str) {
        match self.0 {
            Orientation::Vertical => (MAX_COL, "columns"),
            Orientation::Horizontal => (MAX_ROW, "rows"),
        }
    }
}

/// Slot numbers, looked-up row numbers and value columns of one result block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionBlock {
    pub sheet: String,
    pub orientation: Orientation,
    /// Record of slot 1; slot `i` sits at `first_record + i - 1`.
    pub first_record: u32,
    pub n_slots: usize,
    pub seq_lane: u32,
    pub rownum_lane: u32,
    /// `(source column index, lane)`.
    pub value_lanes: Vec<(usize, u32)>,
}

impl ExtractionBlock {
    /// Cell of 1-based `slot` in `lane`.
    pub fn addr(&self, lane: u32, slot: usize) -> CellAddr {
        Placer(self.orientation).addr(&self.sheet, self.first_record + slot as u32 - 1, lane)
    }

    /// The whole lane; `None` for an empty block.
    pub fn lane_range(&self, lane: u32) -> Option<CellRange> {
        (self.n_slots > 0).then(|| {
            Placer(self.orientation).lane_range(
                &self.sheet,
                lane,
                self.first_record,
                self.first_record + self.n_slots as u32 - 1,
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilationPlan {
    pub orientation: Orientation,
    pub source_sheet: String,
    pub data_start: u32,
    pub row_count: usize,
    pub indicator_lane: u32,
    pub seqno_lane: u32,
    pub where_block: ExtractionBlock,
    /// Number of leading `where_block.value_lanes` that are projected; the
    /// rest carry order-key values.
    pub projection_len: usize,
    /// `(source column index, lane on the Where sheet)` per order key.
    pub rank_lanes: Vec<(usize, u32)>,
    pub sk_lane: Option<u32>,
    pub sk_rank_lane: Option<u32>,
    pub order_block: Option<ExtractionBlock>,
    pub base: u64,
    pub params: Vec<(String, CellAddr)>,
}

impl CompilationPlan {
    /// The block holding the final result.
    pub fn result_block(&self) -> &ExtractionBlock {
        self.order_block.as_ref().unwrap_or(&self.where_block)
    }

    /// Indicator cell of 0-based source row `i`.
    pub fn indicator_addr(&self, i: usize) -> CellAddr {
        Placer(self.orientation).addr(
            &self.source_sheet,
            self.data_start + i as u32,
            self.indicator_lane,
        )
    }

    pub fn seqno_addr(&self, i: usize) -> CellAddr {
        Placer(self.orientation).addr(
            &self.source_sheet,
            self.data_start + i as u32,
            self.seqno_lane,
        )
    }
}

/// Minimal radix for the surrogate key: one more than the row count.
pub fn surrogate_base(n: usize) -> u64 {
    n as u64 + 1
}

/// Accepts when every surrogate key, at most `(n+1)^(k+1) - 1`, is an
/// integer a double holds exactly.
pub fn check_sk_capacity(n: usize, k: usize) -> Result<(), CompileError> {
    const LIMIT: u128 = 1 << 53;
    let base = n as u128 + 1;
    let mut acc: u128 = 1;
    for _ in 0..=k {
        acc = acc.saturating_mul(base);
        if acc > LIMIT {
            return Err(CompileError::SkCapacityExceeded {
                n,
                k,
                limit: LIMIT as u64,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum LiftedOperand {
    Param(String),
    Column(usize),
}

/// A bound predicate whose literals have been replaced by parameter names.
#[derive(Debug, Clone, PartialEq)]
pub enum LiftedPredicate {
    Const(bool),
    Compare {
        column: usize,
        op: CmpOp,
        rhs: LiftedOperand,
    },
    And(Box<LiftedPredicate>, Box<LiftedPredicate>),
    Or(Box<LiftedPredicate>, Box<LiftedPredicate>),
    Not(Box<LiftedPredicate>),
}

/// Replaces each literal with `Param_1`, `Param_2`, ... in left-to-right order.
pub fn lift_literals(pred: &BoundPredicate) -> (LiftedPredicate, Vec<(String, Scalar)>) {
    fn go(p: &BoundPredicate, params: &mut Vec<(String, Scalar)>) -> LiftedPredicate {
        match p {
            BoundPredicate::Const(b) => LiftedPredicate::Const(*b),
            BoundPredicate::Compare { column, op, rhs } => {
                let rhs = match rhs {
                    BoundOperand::Column(c) => LiftedOperand::Column(*c),
                    lit => {
                        let name = format!("Param_{}", params.len() + 1);
                        let value = match lit {
                            BoundOperand::Number(n) => Scalar::Number(*n),
                            BoundOperand::Text(t) => Scalar::Text(t.clone()),
                            BoundOperand::Column(_) => unreachable!(),
                        };
                        params.push((name.clone(), value));
                        LiftedOperand::Param(name)
                    }
                };
                LiftedPredicate::Compare {
                    column: *column,
                    op: *op,
                    rhs,
                }
            }
            BoundPredicate::And(l, r) => {
                let l = go(l, params);
                LiftedPredicate::And(Box::new(l), Box::new(go(r, params)))
            }
            BoundPredicate::Or(l, r) => {
                let l = go(l, params);
                LiftedPredicate::Or(Box::new(l), Box::new(go(r, params)))
            }
            BoundPredicate::Not(e) => LiftedPredicate::Not(Box::new(go(e, params))),
        }
    }
    let mut params = Vec::new();
    let lifted = go(pred, &mut params);
    (lifted, params)
}

/// Indicator expression for one row: evaluates to 1 or 0.
fn indicator_expr(p: &LiftedPredicate, cell_of: &dyn Fn(usize) -> CellAddr) -> Expr {
    let one = || Expr::Number(1.0);
    match p {
        LiftedPredicate::Const(b) => Expr::Number(if *b { 1.0 } else { 0.0 }),
        LiftedPredicate::Compare { column, op, rhs } => {
            let rhs = match rhs {
                LiftedOperand::Param(name) => Expr::name(name.clone()),
                LiftedOperand::Column(c) => Expr::Ref(cell_of(*c)),
            };
            let cmp = Expr::binary(BinOp::Cmp(*op), Expr::Ref(cell_of(*column)), rhs);
            Expr::call(Func::If, vec![cmp, one(), Expr::Number(0.0)])
        }
        LiftedPredicate::And(l, r) => Expr::binary(
            BinOp::Mul,
            indicator_expr(l, cell_of),
            indicator_expr(r, cell_of),
        ),
        LiftedPredicate::Or(l, r) => {
            let sum = Expr::binary(
                BinOp::Add,
                indicator_expr(l, cell_of),
                indicator_expr(r, cell_of),
            );
            Expr::call(Func::If, vec![sum, one(), Expr::Number(0.0)])
        }
        LiftedPredicate::Not(e) => Expr::binary(BinOp::Sub, one(), indicator_expr(e, cell_of)),
    }
}

fn literal(s: &Scalar) -> crate::formula::Cell {
    match s {
        Scalar::Number(n) => crate::formula::Cell::Number(*n),
        Scalar::Text(t) => crate::formula::Cell::Text(t.clone()),
    }
}

fn check_fits(needed: u64, (limit, unit): (u32, &'static str)) -> Result<(), CompileError> {
    if needed > limit as u64 {
        return Err(CompileError::LayoutOutOfBounds {
            needed,
            unit,
            limit,
        });
    }
    Ok(())
}

fn rank_direction(d: Direction, opts: &CompileOptions) -> f64 {
    let d = if opts.flip_rank_direction {
        d.flipped()
    } else {
        d
    };
    match d {
        Direction::Descending => 0.0,
        Direction::Ascending => 1.0,
    }
}

pub fn compile(
    bq: &BoundQuery,
    table: &Table,
    layout: &crate::table::Layout,
) -> Result<(Workbook, CompilationPlan), CompileError> {
    compile_with(bq, table, layout, &CompileOptions::default())
}

pub fn compile_with(
    bq: &BoundQuery,
    table: &Table,
    layout: &crate::table::Layout,
    opts: &CompileOptions,
) -> Result<(Workbook, CompilationPlan), CompileError> {
    let n = table.row_count();
    let k = bq.order_keys.len();
    let use_sk = k > 0 && !opts.naive_single_key;
    if use_sk {
        check_sk_capacity(n, k)?;
    }
    let src = layout.source_sheet_name.as_str();
    if [PARAMS_SHEET, WHERE_SHEET, ORDERED_SHEET].contains(&src) {
        return Err(CompileError::SheetNameClash(src.to_string()));
    }
    let place = Placer(layout.orientation);

    // Where-sheet lanes: NoSeq, RowNum, projected values, extra key values,
    // one rank per key, then SK and SK_Rank.
    let mut where_cols: Vec<usize> = bq.projection.clone();
    for key in &bq.order_keys {
        if !where_cols.contains(&key.column) {
            where_cols.push(key.column);
        }
    }
    let value_lanes: Vec<(usize, u32)> = where_cols
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, 3 + i as u32))
        .collect();
    let lane_of = |c: usize| {
        value_lanes
            .iter()
            .find(|(col, _)| *col == c)
            .map(|&(_, l)| l)
            .expect("key lane")
    };
    let mut next_lane = 3 + value_lanes.len() as u32;
    let rank_lanes: Vec<(usize, u32)> = bq
        .order_keys
        .iter()
        .map(|key| {
            next_lane += 1;
            (key.column, next_lane - 1)
        })
        .collect();
    let (sk_lane, sk_rank_lane) = if use_sk {
        (Some(next_lane), Some(next_lane + 1))
    } else {
        (None, None)
    };
    let last_where_lane = next_lane + if use_sk { 1 } else { 0 };

    let width = table.columns().len() as u32;
    let (indicator_lane, seqno_lane) = (width + 1, width + 2);
    check_fits(
        layout.data_start_index as u64 + n as u64 - 1,
        place.record_limit(),
    )?;
    check_fits(n as u64 + 1, place.record_limit())?;
    check_fits(seqno_lane.max(last_where_lane) as u64, place.lane_limit())?;

    let mut wb = Workbook::new();
    let err_sheet = |e| panic!("generated sheet rejected: {e}");
    wb.add_sheet(src).map(|_| ()).unwrap_or_else(err_sheet);
    wb.add_sheet(PARAMS_SHEET)
        .map(|_| ())
        .unwrap_or_else(err_sheet);
    wb.add_sheet(WHERE_SHEET)
        .map(|_| ())
        .unwrap_or_else(err_sheet);
    if k > 0 {
        wb.add_sheet(ORDERED_SHEET)
            .map(|_| ())
            .unwrap_or_else(err_sheet);
    }
    let put = |wb: &mut Workbook, addr: CellAddr, cell: crate::formula::Cell| {
        wb.set(&addr, cell)
            .expect("address checked against layout limits");
    };
    let text = |s: &str| crate::formula::Cell::Text(s.to_string());
    let formula = crate::formula::Cell::Formula;

    // Source block.
    let header = layout.header_index;
    let data_rec = |i: usize| layout.data_start_index + i as u32;
    for (c, col) in table.columns().iter().enumerate() {
        put(
            &mut wb,
            place.addr(src, header, c as u32 + 1),
            text(&col.name),
        );
    }
    put(
        &mut wb,
        place.addr(src, header, indicator_lane),
        text("Indicator"),
    );
    put(&mut wb, place.addr(src, header, seqno_lane), text("SeqNo"));
    for (i, row) in table.rows().iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            put(
                &mut wb,
                place.addr(src, data_rec(i), c as u32 + 1),
                literal(v),
            );
        }
    }

    // Parameters.
    let (lifted, params) = match &bq.predicate {
        Some(p) => lift_literals(p),
        None => (LiftedPredicate::Const(true), Vec::new()),
    };
    put(&mut wb, place.addr(PARAMS_SHEET, 1, 1), text("Name"));
    put(&mut wb, place.addr(PARAMS_SHEET, 1, 2), text("Value"));
    let mut param_addrs = Vec::new();
    for (i, (name, value)) in params.iter().enumerate() {
        let rec = i as u32 + 2;
        put(&mut wb, place.addr(PARAMS_SHEET, rec, 1), text(name));
        let addr = place.addr(PARAMS_SHEET, rec, 2);
        put(&mut wb, addr.clone(), literal(value));
        wb.define_name(name, NameTarget::Cell(addr.clone()))
            .expect("fresh parameter name");
        wb.add_param(name).expect("parameter just defined");
        param_addrs.push((name.clone(), addr));
    }

    // Indicator and running sum.
    for i in 0..n {
        let rec = data_rec(i);
        let ind = match &lifted {
            LiftedPredicate::Const(b) => crate::formula::Cell::Number(if *b { 1.0 } else { 0.0 }),
            p => formula(indicator_expr(p, &|c| place.addr(src, rec, c as u32 + 1))),
        };
        let ind_addr = place.addr(src, rec, indicator_lane);
        put(&mut wb, ind_addr.clone(), ind);
        let seq = if i == 0 {
            Expr::Ref(ind_addr)
        } else {
            Expr::binary(
                BinOp::Add,
                Expr::Ref(place.addr(src, rec - 1, seqno_lane)),
                Expr::Ref(ind_addr),
            )
        };
        put(&mut wb, place.addr(src, rec, seqno_lane), formula(seq));
    }

    // Where block.
    let where_block = ExtractionBlock {
        sheet: WHERE_SHEET.to_string(),
        orientation: layout.orientation,
        first_record: 2,
        n_slots: n,
        seq_lane: 1,
        rownum_lane: 2,
        value_lanes: value_lanes.clone(),
    };
    let source_lane_range =
        |lane: u32| place.lane_range(src, lane, data_rec(0), data_rec(n.max(1) - 1));
    let wh = |lane, slot| where_block.addr(lane, slot);
    put(&mut wb, place.addr(WHERE_SHEET, 1, 1), text("NoSeq"));
    put(&mut wb, place.addr(WHERE_SHEET, 1, 2), text("RowNum"));
    for &(c, lane) in &value_lanes {
        put(
            &mut wb,
            place.addr(WHERE_SHEET, 1, lane),
            text(&table.columns()[c].name),
        );
    }
    for slot in 1..=n {
        put(
            &mut wb,
            wh(1, slot),
            crate::formula::Cell::Number(slot as f64),
        );
        let m = Expr::call(
            Func::Match,
            vec![
                Expr::Ref(wh(1, slot)),
                Expr::Range(source_lane_range(seqno_lane)),
                Expr::Number(0.0),
            ],
        );
        put(&mut wb, wh(2, slot), formula(m));
        for &(c, lane) in &value_lanes {
            let idx = Expr::call(
                Func::Index,
                vec![
                    Expr::Range(source_lane_range(c as u32 + 1)),
                    Expr::Ref(wh(2, slot)),
                ],
            );
            put(&mut wb, wh(lane, slot), formula(idx));
        }
    }

    // Ordering.
    let base = surrogate_base(n);
    let mut order_block = None;
    if k > 0 {
        for (j, (key, &(c, lane))) in bq.order_keys.iter().zip(&rank_lanes).enumerate() {
            let key_name = format!("Key_{}", j + 1);
            let rank_name = format!("Rank_{}", j + 1);
            put(&mut wb, place.addr(WHERE_SHEET, 1, lane), text(&rank_name));
            if n == 0 {
                continue;
            }
            let key_range = where_block.lane_range(lane_of(c)).expect("non-empty block");
            wb.define_name(&key_name, NameTarget::Range(key_range))
                .expect("fresh key name");
            if opts.naive_single_key && j == 0 {
                let range = where_block.lane_range(lane).expect("non-empty block");
                wb.define_name(&rank_name, NameTarget::Range(range))
                    .expect("fresh rank name");
            }
            for slot in 1..=n {
                let r = Expr::call(
                    Func::RankEq,
                    vec![
                        Expr::Ref(wh(lane_of(c), slot)),
                        Expr::name(key_name.clone()),
                        Expr::Number(rank_direction(key.direction, opts)),
                    ],
                );
                put(&mut wb, wh(lane, slot), formula(r));
            }
        }
        let match_target = match (sk_lane, sk_rank_lane) {
            (Some(sk), Some(skr)) => {
                put(&mut wb, place.addr(WHERE_SHEET, 1, sk), text(SK_NAME));
                put(&mut wb, place.addr(WHERE_SHEET, 1, skr), text(SK_RANK_NAME));
                if n > 0 {
                    let sk_range = where_block.lane_range(sk).expect("non-empty block");
                    let skr_range = where_block.lane_range(skr).expect("non-empty block");
                    wb.define_name(SK_NAME, NameTarget::Range(sk_range))
                        .expect("fresh name");
                    wb.define_name(SK_RANK_NAME, NameTarget::Range(skr_range))
                        .expect("fresh name");
                }
                for slot in 1..=n {
                    // ((r1*A + r2)*A + ...)*A + NoSeq
                    let mut acc = Expr::Ref(wh(rank_lanes[0].1, slot));
                    for &(_, lane) in &rank_lanes[1..] {
                        acc = Expr::binary(
                            BinOp::Add,
                            Expr::binary(BinOp::Mul, acc, Expr::Number(base as f64)),
                            Expr::Ref(wh(lane, slot)),
                        );
                    }
                    let sk_expr = Expr::binary(
                        BinOp::Add,
                        Expr::binary(BinOp::Mul, acc, Expr::Number(base as f64)),
                        Expr::Ref(wh(1, slot)),
                    );
                    put(&mut wb, wh(sk, slot), formula(sk_expr));
                    let skr_expr = Expr::call(
                        Func::RankEq,
                        vec![
                            Expr::Ref(wh(sk, slot)),
                            Expr::name(SK_NAME),
                            Expr::Number(1.0),
                        ],
                    );
                    put(&mut wb, wh(skr, slot), formula(skr_expr));
                }
                SK_RANK_NAME.to_string()
            }
            _ => "Rank_1".to_string(),
        };

        let ordered = ExtractionBlock {
            sheet: ORDERED_SHEET.to_string(),
            orientation: layout.orientation,
            first_record: 2,
            n_slots: n,
            seq_lane: 1,
            rownum_lane: 2,
            value_lanes: value_lanes[..bq.projection.len()].to_vec(),
        };
        put(&mut wb, place.addr(ORDERED_SHEET, 1, 1), text("NoSeq"));
        put(&mut wb, place.addr(ORDERED_SHEET, 1, 2), text("RowNum"));
        for &(c, lane) in &ordered.value_lanes {
            put(
                &mut wb,
                place.addr(ORDERED_SHEET, 1, lane),
                text(&table.columns()[c].name),
            );
        }
        for slot in 1..=n {
            put(
                &mut wb,
                ordered.addr(1, slot),
                crate::formula::Cell::Number(slot as f64),
            );
            let m = Expr::call(
                Func::Match,
                vec![
                    Expr::Ref(ordered.addr(1, slot)),
                    Expr::name(match_target.clone()),
                    Expr::Number(0.0),
                ],
            );
            put(&mut wb, ordered.addr(2, slot), formula(m));
            for &(_, lane) in &ordered.value_lanes {
                let range = where_block.lane_range(lane).expect("non-empty block");
                let idx = Expr::call(
                    Func::Index,
                    vec![Expr::Range(range), Expr::Ref(ordered.addr(2, slot))],
                );
                put(&mut wb, ordered.addr(lane, slot), formula(idx));
            }
        }
        order_block = Some(ordered);
    }

    let plan = CompilationPlan {
        orientation: layout.orientation,
        source_sheet: src.to_string(),
        data_start: layout.data_start_index,
        row_count: n,
        indicator_lane,
        seqno_lane,
        where_block,
        projection_len: bq.projection.len(),
        rank_lanes,
        sk_lane,
        sk_rank_lane,
        order_block,
        base,
        params: param_addrs,
    };
    Ok((wb, plan))
}

#[derive(Debug, Error, PartialEq)]
#[error("plan line {line}: {message}")]
pub struct PlanParseError {
    pub line: usize,
    pub message: String,
}

fn render_block(out: &mut String, tag: &str, b: &ExtractionBlock) {
    let lanes: Vec<String> = b
        .value_lanes
        .iter()
        .map(|(c, l)| format!("{c}:{l}"))
        .collect();
    writeln!(
        out,
        "{tag}\t{}\t{}\t{}\t{}\t{}\t{}",
        b.sheet,
        b.first_record,
        b.n_slots,
        b.seq_lane,
        b.rownum_lane,
        lanes.join(",")
    )
    .expect("write to string");
}

impl CompilationPlan {
    /// Tab-separated `key value...` lines under a `== PLAN ==` header.
    pub fn to_text(&self) -> String {
        let mut out = String::from("== PLAN ==\n");
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!("orientation\t{}", self.orientation));
        line(format!("source_sheet\t{}", self.source_sheet));
        line(format!("data_start\t{}", self.data_start));
        line(format!("row_count\t{}", self.row_count));
        line(format!("indicator_lane\t{}", self.indicator_lane));
        line(format!("seqno_lane\t{}", self.seqno_lane));
        line(format!("projection_len\t{}", self.projection_len));
        line(format!("base\t{}", self.base));
        for (c, l) in &self.rank_lanes {
            line(format!("rank\t{c}\t{l}"));
        }
        if let Some(l) = self.sk_lane {
            line(format!("sk\t{l}"));
        }
        if let Some(l) = self.sk_rank_lane {
            line(format!("sk_rank\t{l}"));
        }
        for (name, addr) in &self.params {
            line(format!("param\t{name}\t{}", addr.render(None)));
        }
        render_block(&mut out, "where", &self.where_block);
        if let Some(b) = &self.order_block {
            render_block(&mut out, "ordered", b);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<CompilationPlan, PlanParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, "== PLAN ==")) => {}
            Some((i, _)) => {
                return Err(PlanParseError {
                    line: i + 1,
                    message: "missing `== PLAN ==` header".into(),
                })
            }
            None => {
                return Err(PlanParseError {
                    line: 1,
                    message: "empty plan".into(),
                })
            }
        }
        let mut orientation = None;
        let mut source_sheet = None;
        let (
            mut data_start,
            mut row_count,
            mut indicator_lane,
            mut seqno_lane,
            mut projection_len,
            mut base,
        ) = (None, None, None, None, None, None);
        let (mut rank_lanes, mut sk_lane, mut sk_rank_lane, mut params) =
            (Vec::new(), None, None, Vec::new());
        let (mut where_block, mut order_block) = (None, None);

        for (i, raw) in lines {
            let err = |m: &str| PlanParseError {
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = raw.split('\t').collect();
            let num = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| err(&format!("bad number {s:?}")))
            };
            let arity = |n: usize| {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(err("wrong field count"))
                }
            };
            match fields[0] {
                "orientation" => {
                    arity(2)?;
                    orientation = Some(match fields[1] {
                        "vertical" => Orientation::Vertical,
                        "horizontal" => Orientation::Horizontal,
                        _ => return Err(err("bad orientation")),
                    });
                }
                "source_sheet" => {
                    arity(2)?;
                    source_sheet = Some(fields[1].to_string());
                }
                "data_start" => {
                    arity(2)?;
                    data_start = Some(num(fields[1])? as u32);
                }
                "row_count" => {
                    arity(2)?;
                    row_count = Some(num(fields[1])? as usize);
                }
                "indicator_lane" => {
                    arity(2)?;
                    indicator_lane = Some(num(fields[1])? as u32);
                }
                "seqno_lane" => {
                    arity(2)?;
                    seqno_lane = Some(num(fields[1])? as u32);
                }
                "projection_len" => {
                    arity(2)?;
                    projection_len = Some(num(fields[1])? as usize);
                }
                "base" => {
                    arity(2)?;
                    base = Some(num(fields[1])?);
                }
                "rank" => {
                    arity(3)?;
                    rank_lanes.push((num(fields[1])? as usize, num(fields[2])? as u32));
                }
                "sk" => {
                    arity(2)?;
                    sk_lane = Some(num(fields[1])? as u32);
                }
                "sk_rank" => {
                    arity(2)?;
                    sk_rank_lane = Some(num(fields[1])? as u32);
                }
                "param" => {
                    arity(3)?;
                    let addr = match crate::formula::parse_reference(fields[2], "") {
                        Ok(Expr::Ref(a)) => a,
                        _ => return Err(err("bad parameter address")),
                    };
                    params.push((fields[1].to_string(), addr));
                }
                tag @ ("where" | "ordered") => {
                    arity(7)?;
                    let mut value_lanes = Vec::new();
                    for pair in fields[6].split(',').filter(|s| !s.is_empty()) {
                        let (c, l) = pair.split_once(':').ok_or_else(|| err("bad value lane"))?;
                        value_lanes.push((num(c)? as usize, num(l)? as u32));
                    }
                    let block = ExtractionBlock {
                        sheet: fields[1].to_string(),
                        orientation: orientation
                            .ok_or_else(|| err("orientation must come first"))?,
                        first_record: num(fields[2])? as u32,
                        n_slots: num(fields[3])? as usize,
                        seq_lane: num(fields[4])? as u32,
                        rownum_lane: num(fields[5])? as u32,
                        value_lanes,
                    };
                    if tag == "where" {
                        where_block = Some(block);
                    } else {
                        order_block = Some(block);
                    }
                }
                other => return Err(err(&format!("unknown key {other:?}"))),
            }
        }
        let missing = |what: &str| PlanParseError {
            line: 0,
            message: format!("missing {what}"),
        };
        Ok(CompilationPlan {
            orientation: orientation.ok_or_else(|| missing("orientation"))?,
            source_sheet: source_sheet.ok_or_else(|| missing("source_sheet"))?,
            data_start: data_start.ok_or_else(|| missing("data_start"))?,
            row_count: row_count.ok_or_else(|| missing("row_count"))?,
            indicator_lane: indicator_lane.ok_or_else(|| missing("indicator_lane"))?,
            seqno_lane: seqno_lane.ok_or_else(|| missing("seqno_lane"))?,
            where_block: where_block.ok_or_else(|| missing("where block"))?,
            projection_len: projection_len.ok_or_else(|| missing("projection_len"))?,
            rank_lanes,
            sk_lane,
            sk_rank_lane,
            order_block,
            base: base.ok_or_else(|| missing("base"))?,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::evaluate;
    use crate::formula::{render_formula, Cell};
    use crate::query::{bind_query, parse_query};
    use crate::table::{load_table, Layout};
    use crate::value::Value;
    use std::collections::BTreeMap;

    const CSV: &str = "Club,Product,Pop,Cost\n\
        690,REP,1200,500\n\
        689,GPI,422,15000\n\
        700,GPI,9000,15000\n\
        711,CV,4128,500\n\
        712,GPI,422,125000\n";

    fn build(sql: &str, layout: &Layout, opts: CompileOptions) -> (Workbook, CompilationPlan) {
        let t = load_table(CSV, "t").unwrap();
        let bq = bind_query(&parse_query(sql).unwrap(), &t).unwrap();
        compile_with(&bq, &t, layout, &opts).unwrap()
    }

    fn formula_at(wb: &Workbook, addr: &CellAddr) -> String {
        match wb.get(addr).unwrap() {
            Cell::Formula(e) => render_formula(e, &addr.sheet),
            other => panic!("not a formula: {other:?}"),
        }
    }

    #[test]
    fn base_and_capacity() {
        assert_eq!(surrogate_base(72), 73);
        assert_eq!(surrogate_base(0), 1);
        assert_eq!(surrogate_base(1297), 1298);
        assert!(check_sk_capacity(1297, 2).is_ok());
        assert!(matches!(
            check_sk_capacity(1297, 5),
            Err(CompileError::SkCapacityExceeded { n: 1297, k: 5, .. })
        ));
        assert!(check_sk_capacity(0, 1).is_ok());
        // (2^13 - 1 + 1)^4 = 2^52 fits, 2^53 + 1 does not.
        assert!(check_sk_capacity(8191, 3).is_ok());
        assert!(check_sk_capacity(94906264, 1).is_ok());
        assert!(check_sk_capacity(94906265, 1).is_err());
    }

    #[test]
    fn lifting() {
        let t = load_table(CSV, "t").unwrap();
        let lift = |sql: &str| {
            let bq = bind_query(&parse_query(sql).unwrap(), &t).unwrap();
            lift_literals(bq.predicate.as_ref().unwrap())
        };
        let (p, params) = lift("SELECT Club FROM t WHERE Product = 'GPI'");
        assert_eq!(
            params,
            vec![("Param_1".to_string(), Scalar::Text("GPI".into()))]
        );
        assert!(
            matches!(p, LiftedPredicate::Compare { rhs: LiftedOperand::Param(ref n), .. } if n == "Param_1")
        );
        let (_, params) = lift("SELECT Club FROM t WHERE Pop > 1000 AND Pop < 5000");
        let names: Vec<_> = params.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["Param_1", "Param_2"]);
        assert_eq!(params[1].1, Scalar::Number(5000.0));
        let (_, params) = lift("SELECT Club FROM t WHERE Cost > Pop");
        assert!(params.is_empty());
    }

    #[test]
    fn formula_shapes_vertical() {
        let (wb, plan) = build(
            "SELECT Club, Pop FROM t WHERE Product = 'GPI' ORDER BY Cost DESC, Pop DESC",
            &Layout::default(),
            CompileOptions::default(),
        );
        assert_eq!((plan.indicator_lane, plan.seqno_lane), (5, 6));
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Source", 5, 2)),
            "=IF(B2=Param_1,1,0)"
        );
        assert_eq!(formula_at(&wb, &CellAddr::new("Source", 6, 2)), "=E2");
        assert_eq!(formula_at(&wb, &CellAddr::new("Source", 6, 3)), "=F2+E3");
        assert_eq!(
            wb.get(&CellAddr::new("Params", 2, 2)),
            Some(&Cell::Text("GPI".into()))
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 2, 2)),
            "=MATCH(A2,Source!F2:F6,0)"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 3, 2)),
            "=INDEX(Source!A2:A6,B2)"
        );
        // Lanes: A NoSeq, B RowNum, C Club, D Pop, E Cost, F/G ranks, H SK, I SK_Rank.
        assert_eq!(plan.where_block.value_lanes, vec![(0, 3), (2, 4), (3, 5)]);
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 6, 2)),
            "=RANK.EQ(E2,Key_1,0)"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 7, 2)),
            "=RANK.EQ(D2,Key_2,0)"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 8, 2)),
            "=(F2*6+G2)*6+A2"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 9, 2)),
            "=RANK.EQ(H2,SK,1)"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Ordered", 2, 2)),
            "=MATCH(A2,SK_Rank,0)"
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Ordered", 3, 2)),
            "=INDEX(Where!C2:C6,B2)"
        );
        assert_eq!(plan.base, 6);
        assert_eq!(plan.rank_lanes, vec![(3, 6), (2, 7)]);
        assert_eq!((plan.sk_lane, plan.sk_rank_lane), (Some(8), Some(9)));
        wb.validate().unwrap();
    }

    #[test]
    fn compound_predicates_and_constants() {
        let (wb, _) = build(
            "SELECT Club FROM t WHERE NOT (Pop > 1000 OR Product = 'CV') AND Cost < Pop",
            &Layout::default(),
            CompileOptions::default(),
        );
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Source", 5, 2)),
            "=(1-IF(IF(C2>Param_1,1,0)+IF(B2=Param_2,1,0),1,0))*IF(D2<C2,1,0)"
        );
        let (wb, plan) = build(
            "SELECT Club FROM t",
            &Layout::default(),
            CompileOptions::default(),
        );
        assert_eq!(
            wb.get(&CellAddr::new("Source", 5, 4)),
            Some(&Cell::Number(1.0))
        );
        assert!(plan.order_block.is_none() && plan.params.is_empty());
        let (wb, _) = build(
            "SELECT Club FROM t WHERE Pop = 'x'",
            &Layout::default(),
            CompileOptions::default(),
        );
        assert_eq!(
            wb.get(&CellAddr::new("Source", 5, 4)),
            Some(&Cell::Number(0.0))
        );
    }

    #[test]
    fn horizontal_is_a_transpose() {
        let sql = "SELECT Club, Pop FROM t WHERE Pop > 500 ORDER BY Cost ASC";
        let (v, _) = build(sql, &Layout::default(), CompileOptions::default());
        let (h, hplan) = build(sql, &Layout::horizontal(), CompileOptions::default());
        assert_eq!(hplan.orientation, Orientation::Horizontal);
        for sheet in v.sheets() {
            for (col, row, cell) in sheet.cells() {
                let t = CellAddr::new(sheet.name.clone(), row, col);
                match cell {
                    Cell::Formula(_) => {
                        // Compare through rendering with swapped references.
                        assert!(h.get(&t).unwrap().is_formula(), "{t}");
                    }
                    lit => assert_eq!(h.get(&t), Some(lit), "{t}"),
                }
            }
        }
        assert_eq!(
            formula_at(&h, &CellAddr::new("Where", 2, 2)),
            "=MATCH(B1,Source!B6:F6,0)"
        );
        assert_eq!(formula_at(&h, &CellAddr::new("Source", 2, 6)), "=B5");
        assert_eq!(formula_at(&h, &CellAddr::new("Source", 3, 6)), "=B6+C5");
        assert_eq!(
            h.resolve_name("Key_1"),
            Some(&NameTarget::Range(CellRange::new("Where", 2, 5, 6, 5)))
        );
    }

    #[test]
    fn layout_errors() {
        let t = load_table(CSV, "t").unwrap();
        let bq = bind_query(&parse_query("SELECT Club FROM t").unwrap(), &t).unwrap();
        let clash = Layout {
            source_sheet_name: "Where".into(),
            ..Layout::default()
        };
        assert_eq!(
            compile(&bq, &t, &clash).unwrap_err(),
            CompileError::SheetNameClash("Where".into())
        );
        let far = Layout {
            data_start_index: MAX_COL - 1,
            header_index: 1,
            ..Layout::horizontal()
        };
        assert!(matches!(
            compile(&bq, &t, &far),
            Err(CompileError::LayoutOutOfBounds { .. })
        ));
        let offset = Layout {
            header_index: 3,
            data_start_index: 5,
            source_sheet_name: "My Data".into(),
            ..Layout::default()
        };
        let (wb, plan) = compile(&bq, &t, &offset).unwrap();
        assert_eq!(plan.seqno_addr(0), CellAddr::new("My Data", 6, 5));
        assert_eq!(
            formula_at(&wb, &CellAddr::new("Where", 2, 2)),
            "=MATCH(A2,'My Data'!F5:F9,0)"
        );
    }

    #[test]
    fn empty_table() {
        let t = load_table("Club,Pop\n", "t").unwrap();
        let bq = bind_query(
            &parse_query("SELECT Club FROM t WHERE Pop > 3 ORDER BY Pop").unwrap(),
            &t,
        )
        .unwrap();
        let (wb, plan) = compile(&bq, &t, &Layout::default()).unwrap();
        assert_eq!(plan.where_block.n_slots, 0);
        assert_eq!(plan.base, 1);
        wb.validate().unwrap();
        evaluate(&wb, &BTreeMap::new()).unwrap();
    }

    #[test]
    fn evaluated_sk_decodes() {
        let (wb, plan) = build(
            "SELECT Club FROM t ORDER BY Cost DESC, Pop DESC",
            &Layout::default(),
            CompileOptions::default(),
        );
        let vg = evaluate(&wb, &BTreeMap::new()).unwrap();
        let b = &plan.where_block;
        for slot in 1..=5 {
            let sk = vg
                .get(&b.addr(plan.sk_lane.unwrap(), slot))
                .unwrap()
                .as_number()
                .unwrap() as u64;
            let r1 = vg
                .get(&b.addr(plan.rank_lanes[0].1, slot))
                .unwrap()
                .as_number()
                .unwrap() as u64;
            let r2 = vg
                .get(&b.addr(plan.rank_lanes[1].1, slot))
                .unwrap()
                .as_number()
                .unwrap() as u64;
            assert_eq!(
                (
                    sk % plan.base,
                    sk / plan.base % plan.base,
                    sk / plan.base / plan.base
                ),
                (slot as u64, r2, r1)
            );
        }
        // Costs 125000 > 15000 (Pop 9000, 422) > 500 (Pop 4128, 1200).
        let clubs: Vec<_> = (1..=5)
            .map(|s| vg.get(&plan.result_block().addr(3, s)).unwrap().clone())
            .collect();
        assert_eq!(clubs, [712., 700., 689., 711., 690.].map(Value::Number));
    }

    #[test]
    fn plan_text_round_trip() {
        for opts in [
            CompileOptions::default(),
            CompileOptions {
                naive_single_key: true,
                ..Default::default()
            },
        ] {
            for layout in [Layout::default(), Layout::horizontal()] {
                let (_, plan) = build(
                    "SELECT Club, Pop FROM t WHERE Product = 'GPI' ORDER BY Cost",
                    &layout,
                    opts,
                );
                assert_eq!(CompilationPlan::from_text(&plan.to_text()).unwrap(), plan);
            }
        }
        let (_, plan) = build(
            "SELECT Club FROM t",
            &Layout::default(),
            CompileOptions::default(),
        );
        assert_eq!(CompilationPlan::from_text(&plan.to_text()).unwrap(), plan);
        assert!(CompilationPlan::from_text("junk").is_err());
        assert!(CompilationPlan::from_text("== PLAN ==\nrow_count\tx\n").is_err());
    }
}
