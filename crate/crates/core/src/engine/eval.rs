use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use thiserror::Error;

use super::builtins::{eval_binary, eval_neg, fn_if, fn_index, fn_match_exact, fn_rank_eq};
use super::graph::schedule;
use crate::formula::{Cell, CellAddr, CellRange, Expr, Func, NameTarget, Workbook};
use crate::value::{ErrorKind, Value};

type RangeValues = Rc<Vec<Option<Value>>>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

/// Evaluated values of one sheet, dense over its populated extent.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetValues {
    pub name: String,
    width: u32,
    height: u32,
    cells: Vec<Option<Value>>,
}

impl SheetValues {
    fn new(name: &str, width: u32, height: u32) -> Self {
        SheetValues {
            name: name.to_string(),
            width,
            height,
            cells: vec![None; width as usize * height as usize],
        }
    }

    fn slot(&self, col: u32, row: u32) -> Option<usize> {
        (col >= 1 && row >= 1 && col <= self.width && row <= self.height)
            .then(|| (row - 1) as usize * self.width as usize + (col - 1) as usize)
    }

    /// `(width, height)`.
    pub fn extent(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// `None` for blank cells and for addresses outside the extent.
    pub fn get(&self, col: u32, row: u32) -> Option<&Value> {
        self.slot(col, row).and_then(|i| self.cells[i].as_ref())
    }

    fn set(&mut self, col: u32, row: u32, v: Value) {
        let i = self.slot(col, row).expect("cell inside the sheet extent");
        self.cells[i] = Some(v);
    }
}

/// The result of evaluating a workbook.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    sheets: Vec<SheetValues>,
}

impl ValueGrid {
    pub fn sheets(&self) -> &[SheetValues] {
        &self.sheets
    }

    pub fn sheet(&self, name: &str) -> Option<&SheetValues> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn get(&self, addr: &CellAddr) -> Option<&Value> {
        self.sheet(&addr.sheet)?.get(addr.col, addr.row)
    }

    /// Bitwise comparison of every cell.
    pub fn bit_identical(&self, other: &ValueGrid) -> bool {
        self.sheets.len() == other.sheets.len()
            && self.sheets.iter().zip(&other.sheets).all(|(a, b)| {
                a.name == b.name
                    && a.extent() == b.extent()
                    && a.cells.iter().zip(&b.cells).all(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => x.bit_identical(y),
                        (None, None) => true,
                        _ => false,
                    })
            })
    }

    /// Sectioned CSV: a `== SHEET name ==` line, then one CSV record per row.
    pub fn to_values_text(&self, na_blank: bool) -> String {
        let mut out = String::new();
        for sheet in &self.sheets {
            out.push_str(&format!("== SHEET {} ==\n", sheet.name));
            for row in 1..=sheet.height {
                let mut fields: Vec<String> = (1..=sheet.width)
                    .map(|col| match sheet.get(col, row) {
                        None => String::new(),
                        Some(v) if na_blank && v.is_na() => String::new(),
                        Some(v) => v.canonical_text(),
                    })
                    .collect();
                while fields.last().is_some_and(String::is_empty) {
                    fields.pop();
                }
                // An empty record is a bare line break, not `""`.
                if !fields.is_empty() {
                    let mut w = csv::WriterBuilder::new()
                        .terminator(csv::Terminator::Any(b'\n'))
                        .from_writer(Vec::new());
                    w.write_record(&fields).expect("in-memory write");
                    let bytes = w.into_inner().expect("in-memory write");
                    out.push_str(
                        std::str::from_utf8(&bytes)
                            .expect("csv output is UTF-8")
                            .trim_end_matches('\n'),
                    );
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Evaluates every formula. `overrides` replace parameter literals first.
pub fn evaluate(
    wb: &Workbook,
    overrides: &BTreeMap<String, Value>,
) -> Result<ValueGrid, EvalError> {
    let mut params = Vec::with_capacity(overrides.len());
    for (name, v) in overrides {
        let addr = wb
            .param_addr(name)
            .ok_or_else(|| EvalError::UnknownParam(name.clone()))?;
        params.push((addr, v));
    }

    let sheet_index: HashMap<&str, usize> = wb
        .sheets()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    let mut sheets: Vec<SheetValues> = wb
        .sheets()
        .iter()
        .map(|s| {
            let (w, h) = s.extent();
            let mut sv = SheetValues::new(&s.name, w, h);
            for (col, row, cell) in s.cells() {
                match cell {
                    Cell::Number(n) => sv.set(col, row, Value::Number(*n)),
                    Cell::Text(t) => sv.set(col, row, Value::Text(t.clone())),
                    Cell::Formula(_) => {}
                }
            }
            sv
        })
        .collect();
    for (addr, v) in params {
        let sv = &mut sheets[sheet_index[addr.sheet.as_str()]];
        if sv.slot(addr.col, addr.row).is_none() {
            // A parameter on a blank cell outside the populated extent: grow.
            let mut grown =
                SheetValues::new(&sv.name, sv.width.max(addr.col), sv.height.max(addr.row));
            for row in 1..=sv.height {
                for col in 1..=sv.width {
                    if let Some(v) = sv.get(col, row) {
                        grown.set(col, row, v.clone());
                    }
                }
            }
            *sv = grown;
        }
        sv.set(addr.col, addr.row, v.clone());
    }

    let plan = schedule(wb);
    for &(si, col, row) in &plan.cyclic {
        sheets[si].set(col, row, Value::Error(ErrorKind::Circ));
    }
    let mut ctx = Ctx {
        wb,
        sheet_index,
        sheets,
        ranges: HashMap::new(),
    };
    for &(si, col, row) in &plan.order {
        let expr = wb.sheets()[si]
            .get(col, row)
            .and_then(Cell::formula)
            .expect("scheduled cell is a formula");
        let v = ctx.scalar(expr);
        ctx.sheets[si].set(col, row, v);
    }
    Ok(ValueGrid { sheets: ctx.sheets })
}

struct Ctx<'a> {
    wb: &'a Workbook,
    sheet_index: HashMap<&'a str, usize>,
    sheets: Vec<SheetValues>,
    /// Safe to cache: a range is only read after every formula inside it.
    ranges: HashMap<CellRange, Rc<Vec<Option<Value>>>>,
}

impl Ctx<'_> {
    fn cell(&self, addr: &CellAddr) -> Value {
        match self.sheet_index.get(addr.sheet.as_str()) {
            None => Value::Error(ErrorKind::Ref),
            Some(&si) => self.sheets[si]
                .get(addr.col, addr.row)
                .cloned()
                .unwrap_or(Value::Number(0.0)),
        }
    }

    fn materialize(&mut self, r: &CellRange) -> Result<Rc<Vec<Option<Value>>>, ErrorKind> {
        if let Some(v) = self.ranges.get(r) {
            return Ok(v.clone());
        }
        let &si = self
            .sheet_index
            .get(r.sheet.as_str())
            .ok_or(ErrorKind::Ref)?;
        let sheet = &self.sheets[si];
        let mut values = Vec::with_capacity(r.cell_count());
        for row in r.row_start..=r.row_end {
            for col in r.col_start..=r.col_end {
                values.push(sheet.get(col, row).cloned());
            }
        }
        let values = Rc::new(values);
        self.ranges.insert(r.clone(), values.clone());
        Ok(values)
    }

    /// Resolves an argument that must be a range. A single cell counts as a
    /// 1x1 range.
    fn range_of(&mut self, e: &Expr) -> Result<CellRange, ErrorKind> {
        match e {
            Expr::Range(r) => Ok(r.clone()),
            Expr::Ref(a) => Ok(CellRange::between(a, a)),
            Expr::Name(n) => match self.wb.resolve_name(n) {
                None => Err(ErrorKind::Name),
                Some(NameTarget::Range(r)) => Ok(r.clone()),
                Some(NameTarget::Cell(a)) => Ok(CellRange::between(a, a)),
            },
            other => match self.scalar(other) {
                Value::Error(e) => Err(e),
                _ => Err(ErrorKind::Value),
            },
        }
    }

    fn range_arg(&mut self, e: &Expr) -> Result<(RangeValues, bool), ErrorKind> {
        let r = self.range_of(e)?;
        Ok((self.materialize(&r)?, r.is_1d()))
    }

    fn scalar(&mut self, e: &Expr) -> Value {
        match e {
            Expr::Number(n) => Value::Number(*n),
            Expr::Text(t) => Value::Text(t.clone()),
            Expr::Ref(a) => self.cell(a),
            Expr::Range(_) => Value::Error(ErrorKind::Value),
            Expr::Name(n) => match self.wb.resolve_name(n) {
                None => Value::Error(ErrorKind::Name),
                Some(NameTarget::Cell(a)) => self.cell(a),
                Some(NameTarget::Range(_)) => Value::Error(ErrorKind::Value),
            },
            Expr::Neg(inner) => eval_neg(&self.scalar(inner)),
            Expr::Binary { op, lhs, rhs } => {
                let l = self.scalar(lhs);
                let r = self.scalar(rhs);
                eval_binary(*op, &l, &r)
            }
            Expr::Call { func, args } => self.call(*func, args),
        }
    }

    fn call(&mut self, func: Func, args: &[Expr]) -> Value {
        match func {
            Func::If => {
                let c = self.scalar(&args[0]);
                let t = self.scalar(&args[1]);
                let f = self.scalar(&args[2]);
                fn_if(&c, &t, &f)
            }
            Func::Match => {
                let needle = self.scalar(&args[0]);
                let range = self.range_arg(&args[1]);
                let mt = self.scalar(&args[2]);
                match range {
                    Ok((values, is_1d)) => fn_match_exact(&needle, &values, is_1d, &mt),
                    Err(e) => Value::Error(e),
                }
            }
            Func::Index => {
                let range = self.range_arg(&args[0]);
                let n = self.scalar(&args[1]);
                match range {
                    Ok((values, is_1d)) => fn_index(&values, is_1d, &n),
                    Err(e) => Value::Error(e),
                }
            }
            Func::RankEq => {
                let x = self.scalar(&args[0]);
                let range = self.range_arg(&args[1]);
                let order = self.scalar(&args[2]);
                match range {
                    Ok((values, _)) => fn_rank_eq(&x, &values, &order),
                    Err(e) => Value::Error(e),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn n(v: f64) -> Value {
        Value::Number(v)
    }

    const NA: Value = Value::Error(ErrorKind::NA);

    /// Product codes in A, indicator in B, running sum in C,
    /// an extraction block in E:G.
    fn products() -> Workbook {
        let codes = ["REP", "SER", "GPI", "VIDEO", "GPI", "CV", "GPI"];
        let mut wb = Workbook::new();
        wb.add_sheet("S").unwrap();
        wb.add_sheet("P").unwrap();
        let s = |c, r| CellAddr::new("S", c, r);
        wb.set(&CellAddr::new("P", 1, 1), "GPI").unwrap();
        wb.define_name("Desired", NameTarget::Cell(CellAddr::new("P", 1, 1)))
            .unwrap();
        wb.add_param("Desired").unwrap();
        let f = |t: &str| parse_formula(t, "S").unwrap();
        for (i, code) in codes.iter().enumerate() {
            let r = i as u32 + 1;
            wb.set(&s(1, r), *code).unwrap();
            wb.set(&s(2, r), f(&format!("=IF(A{r}=Desired,1,0)")))
                .unwrap();
            let seq = if r == 1 {
                "=B1".to_string()
            } else {
                format!("=C{}+B{r}", r - 1)
            };
            wb.set(&s(3, r), f(&seq)).unwrap();
            wb.set(&s(5, r), r as f64).unwrap();
            wb.set(&s(6, r), f(&format!("=MATCH(E{r},C1:C7,0)")))
                .unwrap();
            wb.set(&s(7, r), f(&format!("=INDEX(A1:A7,F{r})"))).unwrap();
        }
        wb
    }

    fn column(vg: &ValueGrid, col: u32) -> Vec<Value> {
        (1..=7)
            .map(|r| vg.get(&CellAddr::new("S", col, r)).unwrap().clone())
            .collect()
    }

    #[test]
    fn where_block_and_override() {
        let wb = products();
        let vg = evaluate(&wb, &BTreeMap::new()).unwrap();
        assert_eq!(column(&vg, 3), [0., 0., 1., 1., 2., 2., 3.].map(n));
        assert_eq!(column(&vg, 6), vec![n(3.), n(5.), n(7.), NA, NA, NA, NA]);
        assert_eq!(column(&vg, 7)[..3], ["GPI", "GPI", "GPI"].map(Value::from));
        assert_eq!(column(&vg, 7)[3], NA);

        let vg = evaluate(
            &wb,
            &BTreeMap::from([("Desired".to_string(), Value::from("cv"))]),
        )
        .unwrap();
        assert_eq!(column(&vg, 6), vec![n(6.), NA, NA, NA, NA, NA, NA]);
        assert_eq!(column(&vg, 7)[0], Value::from("CV"));
    }

    #[test]
    fn override_equals_recompiled_literal() {
        let wb = products();
        let over = evaluate(
            &wb,
            &BTreeMap::from([("Desired".to_string(), Value::from("SER"))]),
        )
        .unwrap();
        let mut edited = wb.clone();
        edited.set(&CellAddr::new("P", 1, 1), "SER").unwrap();
        assert!(over.bit_identical(&evaluate(&edited, &BTreeMap::new()).unwrap()));
    }

    #[test]
    fn unknown_override_rejected() {
        let err =
            evaluate(&products(), &BTreeMap::from([("Nope".to_string(), n(1.))])).unwrap_err();
        assert_eq!(err, EvalError::UnknownParam("Nope".into()));
    }

    #[test]
    fn empty_workbook() {
        let vg = evaluate(&Workbook::new(), &BTreeMap::new()).unwrap();
        assert!(vg.sheets().is_empty());
        assert_eq!(vg.to_values_text(false), "");
    }

    fn single(formula: &str) -> Value {
        let mut wb = Workbook::new();
        wb.add_sheet("S").unwrap();
        wb.add_sheet("T").unwrap();
        wb.set(&CellAddr::new("T", 1, 1), 3.0).unwrap();
        wb.set(&CellAddr::new("T", 1, 2), "x").unwrap();
        wb.define_name("Col", NameTarget::Range(CellRange::new("T", 1, 1, 1, 2)))
            .unwrap();
        wb.set(
            &CellAddr::new("S", 1, 1),
            parse_formula(formula, "S").unwrap(),
        )
        .unwrap();
        evaluate(&wb, &BTreeMap::new())
            .unwrap()
            .get(&CellAddr::new("S", 1, 1))
            .unwrap()
            .clone()
    }

    #[test]
    fn reference_edge_cases() {
        assert_eq!(single("=T!Z99+1"), n(1.));
        assert_eq!(single("=Missing"), Value::Error(ErrorKind::Name));
        assert_eq!(single("=Col"), Value::Error(ErrorKind::Value));
        assert_eq!(single("=T!A1:A2"), Value::Error(ErrorKind::Value));
        assert_eq!(single("=Nowhere!A1"), Value::Error(ErrorKind::Ref));
        assert_eq!(single("=MATCH(\"X\",Col,0)"), n(2.));
        assert_eq!(single("=INDEX(Col,1)*2"), n(6.));
        assert_eq!(single("=INDEX(T!A1:B2,1)"), Value::Error(ErrorKind::Ref));
        assert_eq!(single("=INDEX(1+1,1)"), Value::Error(ErrorKind::Value));
        assert_eq!(single("=RANK.EQ(3,Col,0)"), n(1.));
        assert_eq!(single("=T!A2&\"-\"&T!A1"), Value::from("x-3"));
        assert_eq!(single("=-T!A1/0"), Value::Error(ErrorKind::Div0));
    }

    #[test]
    fn cycles_evaluate_to_circ() {
        let mut wb = Workbook::new();
        wb.add_sheet("S").unwrap();
        for (col, text) in [(1, "=B1+1"), (2, "=A1"), (3, "=A1*0"), (4, "=5")] {
            wb.set(
                &CellAddr::new("S", col, 1),
                parse_formula(text, "S").unwrap(),
            )
            .unwrap();
        }
        let vg = evaluate(&wb, &BTreeMap::new()).unwrap();
        let circ = Value::Error(ErrorKind::Circ);
        let got: Vec<_> = (1..=4)
            .map(|c| vg.get(&CellAddr::new("S", c, 1)).unwrap().clone())
            .collect();
        assert_eq!(got, vec![circ.clone(), circ.clone(), circ, n(5.)]);
    }

    #[test]
    fn values_text() {
        let mut wb = Workbook::new();
        wb.add_sheet("S").unwrap();
        let s = |c, r| CellAddr::new("S", c, r);
        wb.set(&s(1, 1), "a,b").unwrap();
        wb.set(&s(2, 1), 0.1 + 0.2).unwrap();
        wb.set(&s(1, 3), parse_formula("=MATCH(9,A1:A1,0)", "S").unwrap())
            .unwrap();
        wb.set(&s(2, 3), 1.0).unwrap();
        let vg = evaluate(&wb, &BTreeMap::new()).unwrap();
        assert_eq!(
            vg.to_values_text(false),
            "== SHEET S ==\n\"a,b\",0.3\n\n#N/A,1\n"
        );
        assert_eq!(
            vg.to_values_text(true),
            "== SHEET S ==\n\"a,b\",0.3\n\n,1\n"
        );
    }
}
