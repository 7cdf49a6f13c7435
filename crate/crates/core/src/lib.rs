pub mod cli;
pub mod compiler;
pub mod engine;
pub mod formula;
pub mod query;
pub mod table;
pub mod value;
pub mod verify;
