//! Formula evaluation.

mod builtins;
mod eval;
mod graph;

pub use builtins::{
    eval_binary, eval_neg, fn_if, fn_index, fn_match_exact, fn_rank_eq, index_offset,
};
pub use eval::{evaluate, EvalError, SheetValues, ValueGrid};
pub use graph::{build_eval_order, EvalOrder};
