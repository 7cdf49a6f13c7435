//! The `sheetql` command line.
//!
//! Exit status: 0 on success, 1 when the input is rejected or verification
//! fails, 2 when a file cannot be read or written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::compiler::{compile_with, CompileOptions};
use crate::engine::evaluate;
use crate::formula::{is_valid_name, Workbook};
use crate::query::{bind_query, parse_query, Query};
use crate::table::{load_table, parse_layout, Layout, Table};
use crate::value::{parse_decimal, Value};
use crate::verify::{check_grid, random_instance, Status, VerifyReport};

const RANDOM_MAX_ROWS: usize = 500;
const RANDOM_MAX_KEYS: usize = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sheetql",
    version,
    about = "Compile SELECT queries into spreadsheet formulas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a query over a CSV table into a formula grid (plus a `.plan` sidecar).
    Compile {
        /// Query file, or the query text itself.
        query: String,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, hide = true)]
        mutation: Option<Mutation>,
    },
    /// Evaluate a grid file and write its values as sectioned CSV.
    Eval {
        grid: PathBuf,
        /// Values file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a parameter cell, e.g. `--set Param_1=CV`.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        overrides: Vec<String>,
        /// Write #N/A cells as empty fields.
        #[arg(long)]
        na_blank: bool,
    },
    /// Check compiled grids against a direct evaluation of the query.
    Verify {
        /// Query file or text; not used with `--random`.
        query: Option<String>,
        #[command(flatten)]
        source: OptionalSourceArgs,
        /// Check N generated instances instead.
        #[arg(long, value_name = "N")]
        random: Option<u64>,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        mutation: Option<Mutation>,
    },
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// CSV file; its file stem is the table name.
    #[arg(long)]
    data: PathBuf,
    /// Layout config (`key = value` lines).
    #[arg(long)]
    layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptionalSourceArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
}

/// Deliberately broken builds, for checking that verification notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    FlipRank,
    NaiveRank,
}

fn options(m: Option<Mutation>) -> CompileOptions {
    match m {
        None => CompileOptions::default(),
        Some(Mutation::FlipRank) => CompileOptions {
            flip_rank_direction: true,
            ..Default::default()
        },
        Some(Mutation::NaiveRank) => CompileOptions {
            naive_single_key: true,
            ..Default::default()
        },
    }
}

#[derive(Debug)]
enum Failure {
    Domain(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

/// An existing file is read; otherwise text starting with SELECT is the query.
fn load_query(arg: &str) -> Result<Query, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        read(path)?
    } else if arg
        .trim_start()
        .get(..6)
        .is_some_and(|s| s.eq_ignore_ascii_case("select"))
    {
        arg.to_string()
    } else {
        return Err(Failure::Io(format!("cannot read query file {arg}")));
    };
    parse_query(&text).map_err(domain)
}

fn load_source(data: &Path, layout: Option<&Path>) -> Result<(Table, Layout), Failure> {
    let name = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let table = load_table(&read(data)?, name)
        .map_err(|e| Failure::Domain(format!("{}: {e}", data.display())))?;
    let layout = match layout {
        Some(p) => {
            parse_layout(&read(p)?).map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))?
        }
        None => Layout::default(),
    };
    Ok((table, layout))
}

/// `NAME=VALUE`: decimals become numbers, quoted or other values text.
pub fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    if !is_valid_name(name) {
        return Err(format!("invalid parameter name {name:?}"));
    }
    let quoted = ['"', '\''].iter().find_map(|&q| {
        value
            .strip_prefix(q)
            .and_then(|v| v.strip_suffix(q))
            .filter(|_| value.len() >= 2)
    });
    let value = match quoted {
        Some(inner) => Value::Text(inner.to_string()),
        None => parse_decimal(value)
            .map(Value::Number)
            .unwrap_or_else(|| Value::Text(value.to_string())),
    };
    Ok((name.to_string(), value))
}

struct Painter(bool);

impl Painter {
    fn status(&self, report: &VerifyReport) -> String {
        let text = report.to_string();
        if !self.0 {
            return text;
        }
        let (head, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let code = if report.status == Status::Pass {
            "32"
        } else {
            "31"
        };
        format!("\x1b[{code}m{head}\x1b[0m\n{rest}")
    }
}

fn run_command(cmd: Command, out: &mut dyn Write, color: bool) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("cannot write output: {e}"));
    match cmd {
        Command::Compile {
            query,
            source,
            out: path,
            mutation,
        } => {
            let query = load_query(&query)?;
            let (table, layout) = load_source(&source.data, source.layout.as_deref())?;
            let bq = bind_query(&query, &table).map_err(domain)?;
            let (wb, plan) =
                compile_with(&bq, &table, &layout, &options(mutation)).map_err(domain)?;
            let grid = wb.to_grid_text().map_err(domain)?;
            write(&path, &grid)?;
            let mut plan_path = path.into_os_string();
            plan_path.push(".plan");
            write(Path::new(&plan_path), &plan.to_text())?;
            Ok(0)
        }
        Command::Eval {
            grid,
            out: path,
            overrides,
            na_blank,
        } => {
            let wb = Workbook::from_grid_text(&read(&grid)?)
                .map_err(|e| Failure::Domain(format!("{}: {e}", grid.display())))?;
            let overrides = overrides
                .iter()
                .map(|s| parse_override(s))
                .collect::<Result<BTreeMap<_, _>, _>>()
                .map_err(Failure::Domain)?;
            let values = evaluate(&wb, &overrides)
                .map_err(domain)?
                .to_values_text(na_blank);
            match path {
                Some(p) => write(&p, &values)?,
                None => out.write_all(values.as_bytes()).map_err(io)?,
            }
            Ok(0)
        }
        Command::Verify {
            query,
            source,
            random,
            seed,
            mutation,
        } => {
            let opts = options(mutation);
            let paint = Painter(color);
            if let Some(count) = random {
                let mut failed = 0;
                for i in 0..count {
                    let s = seed.wrapping_add(i);
                    let (table, query) = random_instance(s, RANDOM_MAX_ROWS, RANDOM_MAX_KEYS);
                    let bq = bind_query(&query, &table).map_err(domain)?;
                    let (_, report) =
                        check_grid(&bq, &table, &Layout::default(), &opts).map_err(domain)?;
                    if report.status == Status::Fail {
                        failed += 1;
                        writeln!(
                            out,
                            "# instance {i} (seed {s}, {} rows): {query}",
                            table.row_count()
                        )
                        .map_err(io)?;
                    }
                    write!(out, "{}", paint.status(&report)).map_err(io)?;
                }
                writeln!(out, "# {} of {count} instances passed", count - failed).map_err(io)?;
                return Ok(if failed == 0 { 0 } else { 1 });
            }
            let query = query
                .ok_or_else(|| Failure::Domain("verify needs a QUERY or --random N".into()))?;
            let data = source
                .data
                .ok_or_else(|| Failure::Domain("verify needs --data".into()))?;
            let query = load_query(&query)?;
            let (table, layout) = load_source(&data, source.layout.as_deref())?;
            let bq = bind_query(&query, &table).map_err(domain)?;
            let (_, report) = check_grid(&bq, &table, &layout, &opts).map_err(domain)?;
            write!(out, "{}", paint.status(&report)).map_err(io)?;
            Ok(if report.status == Status::Pass { 0 } else { 1 })
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let color = stdout.is_terminal() && std::env::var_os("SHEETQL_NO_COLOR").is_none();
    match run_command(cli.command, &mut stdout.lock(), color) {
        Ok(code) => code,
        Err(f) => {
            let (Failure::Domain(msg) | Failure::Io(msg)) = &f;
            eprintln!("sheetql: {msg}");
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_typing() {
        assert_eq!(
            parse_override("Param_1=CV"),
            Ok(("Param_1".into(), Value::from("CV")))
        );
        assert_eq!(
            parse_override("Param_2=1000"),
            Ok(("Param_2".into(), Value::Number(1000.0)))
        );
        assert_eq!(
            parse_override("Param_2=-2.5e1"),
            Ok(("Param_2".into(), Value::Number(-25.0)))
        );
        assert_eq!(
            parse_override("P='1000'"),
            Ok(("P".into(), Value::from("1000")))
        );
        assert_eq!(
            parse_override("P=\"a b\""),
            Ok(("P".into(), Value::from("a b")))
        );
        assert_eq!(parse_override("P="), Ok(("P".into(), Value::from(""))));
        assert_eq!(parse_override("P='"), Ok(("P".into(), Value::from("'"))));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("A1=3").is_err());
    }

    #[test]
    fn query_argument() {
        assert!(load_query("SELECT a FROM t").is_ok());
        assert!(matches!(
            load_query("select a from"),
            Err(Failure::Domain(_))
        ));
        assert!(matches!(
            load_query("/no/such/file.sql"),
            Err(Failure::Io(_))
        ));
    }
}
