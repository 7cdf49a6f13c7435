//! Cell addresses, formula expressions, and the workbook they live in.

mod addr;
mod expr;
mod workbook;

pub use addr::{
    col_to_letters, letters_to_col, sheet_needs_quotes, CellAddr, CellRange, MAX_COL, MAX_ROW,
};
pub use expr::{
    is_valid_name, parse_formula, parse_reference, render_formula, BinOp, Expr, FormulaError, Func,
    RefItem,
};
pub use workbook::{literal_text, Cell, GridError, NameTarget, Sheet, Workbook, WorkbookError};
