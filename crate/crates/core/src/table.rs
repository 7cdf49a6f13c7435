//! Source dataset ingestion and placement configuration.

use std::fmt;

use thiserror::Error;

use crate::value::{format_number, parse_decimal, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColType {
    Number,
    Text,
}

impl fmt::Display for ColType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColType::Number => "number",
            ColType::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub col_type: ColType,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, col_type: ColType) -> Self {
        ColumnDef {
            name: name.into(),
            col_type,
        }
    }
}

/// A single cell of the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn col_type(&self) -> ColType {
        match self {
            Scalar::Number(_) => ColType::Number,
            Scalar::Text(_) => ColType::Text,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Scalar::Number(n) => Value::Number(*n),
            Scalar::Text(s) => Value::Text(s.clone()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("empty input: no header line")]
    EmptyInput,
    #[error("ragged rows: line {line} has {found} fields, header has {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("column {column:?} is numeric but has an empty field on line {line}")]
    EmptyNumericField { column: String, line: usize },
    #[error("column {column:?} is declared numeric but {value:?} on line {line} is not a number")]
    UnparsableNumber {
        column: String,
        line: usize,
        value: String,
    },
    #[error("invalid column name {0:?}")]
    BadColumnName(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("type override names unknown column {0:?}")]
    UnknownOverride(String),
    #[error("row {row} has {found} values, table has {expected} columns")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column:?}: value does not match the column type {expected}")]
    CellType {
        row: usize,
        column: String,
        expected: ColType,
    },
    #[error("csv: {0}")]
    Csv(String),
}

/// The relational side: typed columns plus row records.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    columns: Vec<ColumnDef>,
    rows: Vec<Vec<Scalar>>,
}

impl Table {
    /// Builds a table, checking every invariant (names, arity, cell types).
    pub fn new(
        name: impl Into<String>,
        columns: Vec<ColumnDef>,
        rows: Vec<Vec<Scalar>>,
    ) -> Result<Self, TableError> {
        check_column_names(columns.iter().map(|c| c.name.as_str()))?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::Arity {
                    row: i,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            for (cell, col) in row.iter().zip(&columns) {
                if cell.col_type() != col.col_type {
                    return Err(TableError::CellType {
                        row: i,
                        column: col.name.clone(),
                        expected: col.col_type,
                    });
                }
            }
        }
        Ok(Table {
            name: name.into(),
            columns,
            rows,
        })
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn cell(&self, row: usize, col: usize) -> &Scalar {
        &self.rows[row][col]
    }

    /// Serializes back to RFC-4180 CSV. Numbers use the shortest form that
    /// reparses to the same double.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("write to Vec");
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|s| match s {
                    Scalar::Number(n) => n.to_string(),
                    Scalar::Text(t) => t.clone(),
                })
                .collect();
            w.write_record(&fields).expect("write to Vec");
        }
        String::from_utf8(w.into_inner().expect("flush to Vec")).expect("utf-8 in, utf-8 out")
    }
}

fn check_column_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), TableError> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        if name.is_empty() || name.contains(['\t', '\n', '\r']) {
            return Err(TableError::BadColumnName(name.to_string()));
        }
        if !seen.insert(name) {
            return Err(TableError::DuplicateColumn(name.to_string()));
        }
    }
    Ok(())
}

/// Loads CSV text, inferring a number/text type per column.
///
/// A column is numeric iff every non-empty field parses as a decimal. An
/// empty field inside a numeric column is an error; a column with no
/// non-empty field at all is text.
pub fn load_table(csv_text: &str, table_name: &str) -> Result<Table, TableError> {
    load_table_with_types(csv_text, table_name, &[])
}

/// Like [`load_table`], with declared column types overriding inference.
pub fn load_table_with_types(
    csv_text: &str,
    table_name: &str,
    declared: &[(&str, ColType)],
) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push((line, rec));
    }
    let Some(((_, header), data)) = records.split_first() else {
        return Err(TableError::EmptyInput);
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    check_column_names(names.iter().map(String::as_str))?;
    for (name, _) in declared {
        if !names.iter().any(|n| n == name) {
            return Err(TableError::UnknownOverride(name.to_string()));
        }
    }
    for (line, rec) in data {
        if rec.len() != names.len() {
            return Err(TableError::RaggedRows {
                line: *line,
                expected: names.len(),
                found: rec.len(),
            });
        }
    }

    let mut columns = Vec::with_capacity(names.len());
    for (c, name) in names.iter().enumerate() {
        let declared_type = declared.iter().find(|(n, _)| n == name).map(|(_, t)| *t);
        let col_type = match declared_type {
            Some(t) => t,
            None => {
                let mut any = false;
                let numeric = data.iter().all(|(_, rec)| {
                    let f = &rec[c];
                    any |= !f.is_empty();
                    f.is_empty() || parse_decimal(f).is_some()
                });
                if (numeric && any) || data.is_empty() {
                    ColType::Number
                } else {
                    ColType::Text
                }
            }
        };
        columns.push(ColumnDef::new(name.clone(), col_type));
    }

    let mut rows = Vec::with_capacity(data.len());
    for (line, rec) in data {
        let mut row = Vec::with_capacity(columns.len());
        for (field, col) in rec.iter().zip(&columns) {
            row.push(match col.col_type {
                ColType::Text => Scalar::Text(field.to_string()),
                ColType::Number if field.is_empty() => {
                    return Err(TableError::EmptyNumericField {
                        column: col.name.clone(),
                        line: *line,
                    })
                }
                ColType::Number => match parse_decimal(field) {
                    Some(n) => Scalar::Number(n),
                    None => {
                        return Err(TableError::UnparsableNumber {
                            column: col.name.clone(),
                            line: *line,
                            value: field.to_string(),
                        })
                    }
                },
            });
        }
        rows.push(row);
    }
    Table::new(table_name, columns, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Records run down rows, fields across columns.
    Vertical,
    /// Records run across columns, fields down rows.
    Horizontal,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Vertical => "vertical",
            Orientation::Horizontal => "horizontal",
        })
    }
}

/// Where and how the source block is placed.
///
/// `header_index` and `data_start_index` are rows for a vertical layout and
/// columns for a horizontal one, both 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub orientation: Orientation,
    pub source_sheet_name: String,
    pub header_index: u32,
    pub data_start_index: u32,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            orientation: Orientation::Vertical,
            source_sheet_name: "Source".to_string(),
            header_index: 1,
            data_start_index: 2,
        }
    }
}

impl Layout {
    pub fn horizontal() -> Self {
        Layout {
            orientation: Orientation::Horizontal,
            ..Layout::default()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error(
        "data_start_index ({data_start_index}) must be greater than header_index ({header_index})"
    )]
    InconsistentIndices {
        header_index: u32,
        data_start_index: u32,
    },
}

/// Parses `key = value` lines. Blank lines and `#` comment lines are skipped.
pub fn parse_layout(config_text: &str) -> Result<Layout, LayoutError> {
    let mut layout = Layout::default();
    for (i, raw) in config_text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(LayoutError::Malformed { line });
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = || LayoutError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "orientation" => {
                layout.orientation = match value.to_ascii_lowercase().as_str() {
                    "vertical" => Orientation::Vertical,
                    "horizontal" => Orientation::Horizontal,
                    _ => return Err(bad()),
                }
            }
            "source_sheet_name" => {
                if value.is_empty() || value.contains(['\t', '!', '\'']) {
                    return Err(bad());
                }
                layout.source_sheet_name = value.to_string();
            }
            "header_index" => layout.header_index = parse_index(value).ok_or_else(bad)?,
            "data_start_index" => layout.data_start_index = parse_index(value).ok_or_else(bad)?,
            _ => {
                return Err(LayoutError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    if layout.data_start_index <= layout.header_index {
        return Err(LayoutError::InconsistentIndices {
            header_index: layout.header_index,
            data_start_index: layout.data_start_index,
        });
    }
    Ok(layout)
}

fn parse_index(s: &str) -> Option<u32> {
    s.parse::<u32>().ok().filter(|&n| n >= 1)
}

/// Renders a layout back to config text.
pub fn render_layout(layout: &Layout) -> String {
    format!(
        "orientation = {}\nsource_sheet_name = {}\nheader_index = {}\ndata_start_index = {}\n",
        layout.orientation, layout.source_sheet_name, layout.header_index, layout.data_start_index
    )
}

/// Canonical text of a scalar for display and diffs.
pub fn scalar_text(s: &Scalar) -> String {
    match s {
        Scalar::Number(n) => format_number(*n),
        Scalar::Text(t) => t.clone(),
    }
}
