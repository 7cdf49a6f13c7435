use std::fmt;

pub const MAX_COL: u32 = 16_384;
pub const MAX_ROW: u32 = 1_048_576;

/// Bijective base-26 column letters: 1 → `A`, 26 → `Z`, 27 → `AA`.
pub fn col_to_letters(mut col: u32) -> String {
    debug_assert!(col >= 1);
    let mut buf = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        buf.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    buf.reverse();
    String::from_utf8(buf).expect("ascii letters")
}

/// Inverse of [`col_to_letters`]; case-insensitive, `None` outside `1..=MAX_COL`.
pub fn letters_to_col(s: &str) -> Option<u32> {
    if s.is_empty() || s.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for b in s.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1);
    }
    (col <= MAX_COL).then_some(col)
}

/// Sheet names are quoted unless they are plain words (ASCII letters, digits,
/// underscores, not starting with a digit).
pub fn sheet_needs_quotes(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_ascii_digit() => true,
        Some(c) => {
            !(c.is_ascii_alphanumeric() || c == '_')
                || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
    }
}

pub fn render_sheet_prefix(name: &str) -> String {
    if sheet_needs_quotes(name) {
        format!("'{}'!", name.replace('\'', "''"))
    } else {
        format!("{name}!")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddr {
    pub sheet: String,
    pub col: u32,
    pub row: u32,
}

impl CellAddr {
    pub fn new(sheet: impl Into<String>, col: u32, row: u32) -> Self {
        CellAddr {
            sheet: sheet.into(),
            col,
            row,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.sheet.is_empty()
            && (1..=MAX_COL).contains(&self.col)
            && (1..=MAX_ROW).contains(&self.row)
    }

    /// `A1` text, without a sheet prefix.
    pub fn local(&self) -> String {
        format!("{}{}", col_to_letters(self.col), self.row)
    }

    /// Renders the address, omitting the sheet prefix when it equals `home`.
    pub fn render(&self, home: Option<&str>) -> String {
        if home == Some(self.sheet.as_str()) {
            self.local()
        } else {
            format!("{}{}", render_sheet_prefix(&self.sheet), self.local())
        }
    }
}

impl fmt::Display for CellAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellRange {
    pub sheet: String,
    pub col_start: u32,
    pub row_start: u32,
    pub col_end: u32,
    pub row_end: u32,
}

impl CellRange {
    pub fn new(
        sheet: impl Into<String>,
        col_start: u32,
        row_start: u32,
        col_end: u32,
        row_end: u32,
    ) -> Self {
        CellRange {
            sheet: sheet.into(),
            col_start,
            row_start,
            col_end,
            row_end,
        }
    }

    pub fn between(a: &CellAddr, b: &CellAddr) -> Self {
        debug_assert_eq!(a.sheet, b.sheet);
        CellRange::new(
            a.sheet.clone(),
            a.col.min(b.col),
            a.row.min(b.row),
            a.col.max(b.col),
            a.row.max(b.row),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.start().is_valid()
            && self.end().is_valid()
            && self.col_start <= self.col_end
            && self.row_start <= self.row_end
    }

    pub fn start(&self) -> CellAddr {
        CellAddr::new(self.sheet.clone(), self.col_start, self.row_start)
    }

    pub fn end(&self) -> CellAddr {
        CellAddr::new(self.sheet.clone(), self.col_end, self.row_end)
    }

    pub fn width(&self) -> u32 {
        self.col_end - self.col_start + 1
    }

    pub fn height(&self) -> u32 {
        self.row_end - self.row_start + 1
    }

    pub fn cell_count(&self) -> usize {
        self.width() as usize * self.height() as usize
    }

    /// True for a single row or a single column.
    pub fn is_1d(&self) -> bool {
        self.width() == 1 || self.height() == 1
    }

    pub fn contains(&self, addr: &CellAddr) -> bool {
        addr.sheet == self.sheet
            && (self.col_start..=self.col_end).contains(&addr.col)
            && (self.row_start..=self.row_end).contains(&addr.row)
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellAddr> + '_ {
        (self.row_start..=self.row_end).flat_map(move |r| {
            (self.col_start..=self.col_end).map(move |c| CellAddr::new(self.sheet.clone(), c, r))
        })
    }

    pub fn render(&self, home: Option<&str>) -> String {
        let body = format!(
            "{}{}:{}{}",
            col_to_letters(self.col_start),
            self.row_start,
            col_to_letters(self.col_end),
            self.row_end
        );
        if home == Some(self.sheet.as_str()) {
            body
        } else {
            format!("{}{}", render_sheet_prefix(&self.sheet), body)
        }
    }
}

impl fmt::Display for CellRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}
