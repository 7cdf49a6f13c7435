use std::collections::BTreeMap;

use thiserror::Error;

use super::addr::{CellAddr, CellRange};
use super::expr::{
    is_valid_name, parse_formula, parse_reference, render_formula, Expr, FormulaError, RefItem,
};
use crate::value::{format_number, parse_decimal};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Formula(Expr),
}

impl Cell {
    pub fn is_formula(&self) -> bool {
        matches!(self, Cell::Formula(_))
    }

    pub fn formula(&self) -> Option<&Expr> {
        match self {
            Cell::Formula(e) => Some(e),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(n: f64) -> Self {
        Cell::Number(n)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Expr> for Cell {
    fn from(e: Expr) -> Self {
        Cell::Formula(e)
    }
}

/// A sparse grid keyed by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sheet {
    pub name: String,
    cells: BTreeMap<(u32, u32), Cell>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Sheet {
            name: name.into(),
            cells: BTreeMap::new(),
        }
    }

    pub fn get(&self, col: u32, row: u32) -> Option<&Cell> {
        self.cells.get(&(row, col))
    }

    pub fn set(&mut self, col: u32, row: u32, cell: impl Into<Cell>) {
        self.cells.insert((row, col), cell.into());
    }

    /// Populated cells in row-major order as `(col, row, cell)`.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, &Cell)> {
        self.cells.iter().map(|(&(r, c), cell)| (c, r, cell))
    }

    /// Populated cells inside `range` (sheet part ignored), row-major.
    pub fn cells_in<'a>(
        &'a self,
        range: &CellRange,
    ) -> impl Iterator<Item = (u32, u32, &'a Cell)> + 'a {
        let (c0, c1) = (range.col_start, range.col_end);
        self.cells
            .range((range.row_start, c0)..=(range.row_end, c1))
            .filter(move |(&(_, c), _)| c >= c0 && c <= c1)
            .map(|(&(r, c), cell)| (c, r, cell))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(max_col, max_row)` over populated cells, `(0, 0)` when empty.
    pub fn extent(&self) -> (u32, u32) {
        self.cells
            .keys()
            .fold((0, 0), |(mc, mr), &(r, c)| (mc.max(c), mr.max(r)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameTarget {
    Cell(CellAddr),
    Range(CellRange),
}

impl NameTarget {
    pub fn sheet(&self) -> &str {
        match self {
            NameTarget::Cell(a) => &a.sheet,
            NameTarget::Range(r) => &r.sheet,
        }
    }

    pub fn render(&self) -> String {
        match self {
            NameTarget::Cell(a) => a.render(None),
            NameTarget::Range(r) => r.render(None),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkbookError {
    #[error("duplicate sheet {0:?}")]
    DuplicateSheet(String),
    #[error("invalid sheet name {0:?}")]
    BadSheetName(String),
    #[error("unknown sheet {0:?}")]
    UnknownSheet(String),
    #[error("invalid name {0:?}")]
    BadName(String),
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("name {0:?} is not defined")]
    UndefinedName(String),
    #[error("parameter {0:?} must name a single literal cell")]
    BadParam(String),
    #[error("invalid address {0}")]
    BadAddress(String),
}

/// Named sheets of cells, plus workbook-level names and the subset of names
/// designated as user-changeable parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    sheets: Vec<Sheet>,
    names: BTreeMap<String, NameTarget>,
    params: Vec<String>,
}

impl Workbook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sheet(&mut self, name: &str) -> Result<&mut Sheet, WorkbookError> {
        if name.is_empty()
            || name.contains(['\t', '\n', '\r'])
            || name.starts_with(' ')
            || name.ends_with(' ')
        {
            return Err(WorkbookError::BadSheetName(name.to_string()));
        }
        if self.sheet(name).is_some() {
            return Err(WorkbookError::DuplicateSheet(name.to_string()));
        }
        self.sheets.push(Sheet::new(name));
        Ok(self.sheets.last_mut().expect("just pushed"))
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn sheet_mut(&mut self, name: &str) -> Option<&mut Sheet> {
        self.sheets.iter_mut().find(|s| s.name == name)
    }

    pub fn get(&self, addr: &CellAddr) -> Option<&Cell> {
        self.sheet(&addr.sheet)?.get(addr.col, addr.row)
    }

    pub fn set(&mut self, addr: &CellAddr, cell: impl Into<Cell>) -> Result<(), WorkbookError> {
        if !addr.is_valid() {
            return Err(WorkbookError::BadAddress(addr.to_string()));
        }
        let sheet = self
            .sheet_mut(&addr.sheet)
            .ok_or_else(|| WorkbookError::UnknownSheet(addr.sheet.clone()))?;
        sheet.set(addr.col, addr.row, cell);
        Ok(())
    }

    pub fn define_name(&mut self, name: &str, target: NameTarget) -> Result<(), WorkbookError> {
        if !is_valid_name(name) {
            return Err(WorkbookError::BadName(name.to_string()));
        }
        if self.names.contains_key(name) {
            return Err(WorkbookError::DuplicateName(name.to_string()));
        }
        if self.sheet(target.sheet()).is_none() {
            return Err(WorkbookError::UnknownSheet(target.sheet().to_string()));
        }
        self.names.insert(name.to_string(), target);
        Ok(())
    }

    pub fn names(&self) -> &BTreeMap<String, NameTarget> {
        &self.names
    }

    pub fn resolve_name(&self, name: &str) -> Option<&NameTarget> {
        self.names.get(name)
    }

    /// Marks an existing single-cell name as a parameter.
    pub fn add_param(&mut self, name: &str) -> Result<(), WorkbookError> {
        match self.names.get(name) {
            None => Err(WorkbookError::UndefinedName(name.to_string())),
            Some(NameTarget::Range(_)) => Err(WorkbookError::BadParam(name.to_string())),
            Some(NameTarget::Cell(_)) if self.params.iter().any(|p| p == name) => {
                Err(WorkbookError::DuplicateName(name.to_string()))
            }
            Some(NameTarget::Cell(_)) => {
                self.params.push(name.to_string());
                Ok(())
            }
        }
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn param_addr(&self, name: &str) -> Option<&CellAddr> {
        if !self.params.iter().any(|p| p == name) {
            return None;
        }
        match self.names.get(name)? {
            NameTarget::Cell(a) => Some(a),
            NameTarget::Range(_) => None,
        }
    }

    /// Checks the structural invariants: names land on existing sheets,
    /// formula references resolve, parameter cells hold literals.
    pub fn validate(&self) -> Result<(), WorkbookError> {
        for target in self.names.values() {
            if self.sheet(target.sheet()).is_none() {
                return Err(WorkbookError::UnknownSheet(target.sheet().to_string()));
            }
        }
        for sheet in &self.sheets {
            for (_, _, cell) in sheet.cells() {
                let Some(expr) = cell.formula() else { continue };
                let mut err = None;
                expr.visit_refs(&mut |item| {
                    if err.is_some() {
                        return;
                    }
                    err = match item {
                        RefItem::Cell(a) if self.sheet(&a.sheet).is_none() => {
                            Some(WorkbookError::UnknownSheet(a.sheet.clone()))
                        }
                        RefItem::Range(r) if self.sheet(&r.sheet).is_none() => {
                            Some(WorkbookError::UnknownSheet(r.sheet.clone()))
                        }
                        RefItem::Name(n) if !self.names.contains_key(n) => {
                            Some(WorkbookError::UndefinedName(n.to_string()))
                        }
                        _ => None,
                    };
                });
                if let Some(e) = err {
                    return Err(e);
                }
            }
        }
        for p in &self.params {
            let addr = self
                .param_addr(p)
                .ok_or_else(|| WorkbookError::BadParam(p.clone()))?;
            if matches!(self.get(addr), Some(Cell::Formula(_))) {
                return Err(WorkbookError::BadParam(p.clone()));
            }
        }
        Ok(())
    }

    /// Serializes to the sectioned, tab-separated grid text format.
    pub fn to_grid_text(&self) -> Result<String, GridError> {
        let mut out = String::new();
        for sheet in &self.sheets {
            out.push_str(&format!("== SHEET {} ==\n", sheet.name));
            let (max_col, max_row) = sheet.extent();
            for row in 1..=max_row {
                let mut fields: Vec<String> = Vec::with_capacity(max_col as usize);
                for col in 1..=max_col {
                    fields.push(match sheet.get(col, row) {
                        None => String::new(),
                        Some(Cell::Number(n)) => n.to_string(),
                        Some(Cell::Text(t)) => {
                            escape_text(t).ok_or_else(|| GridError::UnrepresentableText {
                                addr: CellAddr::new(sheet.name.clone(), col, row).to_string(),
                            })?
                        }
                        Some(Cell::Formula(e)) => render_formula(e, &sheet.name),
                    });
                }
                while fields.last().is_some_and(String::is_empty) {
                    fields.pop();
                }
                out.push_str(&fields.join("\t"));
                out.push('\n');
            }
        }
        out.push_str("== NAMES ==\n");
        for (name, target) in &self.names {
            out.push_str(&format!("{name}\t{}\n", target.render()));
        }
        out.push_str("== PARAMS ==\n");
        for p in &self.params {
            out.push_str(p);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the grid text format and validates the result.
    pub fn from_grid_text(text: &str) -> Result<Workbook, GridError> {
        enum Section {
            None,
            Sheet(String, u32),
            Names,
            Params,
        }
        let mut wb = Workbook::new();
        let mut section = Section::None;
        let mut pending_params = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if let Some(name) = line
                .strip_prefix("== SHEET ")
                .and_then(|r| r.strip_suffix(" =="))
            {
                wb.add_sheet(name).map_err(|e| GridError::Workbook {
                    line: line_no,
                    source: e,
                })?;
                section = Section::Sheet(name.to_string(), 0);
                continue;
            }
            match line {
                "== NAMES ==" => {
                    section = Section::Names;
                    continue;
                }
                "== PARAMS ==" => {
                    section = Section::Params;
                    continue;
                }
                _ => {}
            }
            match &mut section {
                Section::None => {
                    if !line.is_empty() {
                        return Err(GridError::OutsideSection { line: line_no });
                    }
                }
                Section::Sheet(name, row) => {
                    *row += 1;
                    let sheet_name = name.clone();
                    for (c, field) in line.split('\t').enumerate() {
                        if field.is_empty() {
                            continue;
                        }
                        let addr = CellAddr::new(sheet_name.clone(), c as u32 + 1, *row);
                        let cell =
                            read_field(field, &sheet_name).map_err(|e| GridError::Formula {
                                addr: addr.to_string(),
                                source: e,
                            })?;
                        wb.set(&addr, cell).map_err(|e| GridError::Workbook {
                            line: line_no,
                            source: e,
                        })?;
                    }
                }
                Section::Names => {
                    if line.is_empty() {
                        continue;
                    }
                    let (name, target) = line
                        .split_once('\t')
                        .ok_or(GridError::BadLine { line: line_no })?;
                    let target = match parse_reference(target, "") {
                        Ok(Expr::Ref(a)) => NameTarget::Cell(a),
                        Ok(Expr::Range(r)) => NameTarget::Range(r),
                        _ => return Err(GridError::BadLine { line: line_no }),
                    };
                    wb.define_name(name, target)
                        .map_err(|e| GridError::Workbook {
                            line: line_no,
                            source: e,
                        })?;
                }
                Section::Params => {
                    if !line.is_empty() {
                        pending_params.push((line_no, line.to_string()));
                    }
                }
            }
        }
        for (line, p) in pending_params {
            wb.add_param(&p)
                .map_err(|e| GridError::Workbook { line, source: e })?;
        }
        wb.validate()
            .map_err(|e| GridError::Workbook { line: 0, source: e })?;
        Ok(wb)
    }
}

/// Text cells that would read back as something else get a leading
/// apostrophe, the usual spreadsheet "force text" marker.
fn escape_text(t: &str) -> Option<String> {
    if t.contains(['\t', '\n', '\r']) {
        return None;
    }
    if t.is_empty() || t.starts_with('=') || t.starts_with('\'') || parse_decimal(t).is_some() {
        Some(format!("'{t}"))
    } else {
        Some(t.to_string())
    }
}

fn read_field(field: &str, sheet: &str) -> Result<Cell, FormulaError> {
    if field.starts_with('=') {
        return parse_formula(field, sheet).map(Cell::Formula);
    }
    if let Some(rest) = field.strip_prefix('\'') {
        return Ok(Cell::Text(rest.to_string()));
    }
    Ok(match parse_decimal(field) {
        Some(n) => Cell::Number(n),
        None => Cell::Text(field.to_string()),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("line {line}: content outside any section")]
    OutsideSection { line: usize },
    #[error("line {line}: malformed entry")]
    BadLine { line: usize },
    #[error("{addr}: {source}")]
    Formula { addr: String, source: FormulaError },
    #[error("line {line}: {source}")]
    Workbook { line: usize, source: WorkbookError },
    #[error("{addr}: text containing tabs or line breaks cannot be written")]
    UnrepresentableText { addr: String },
}

/// Display helper: a literal cell's text as it would appear in the grid.
pub fn literal_text(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Number(n) => Some(format_number(*n)),
        Cell::Text(t) => Some(t.clone()),
        Cell::Formula(_) => None,
    }
}
