mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const QUERY: &str = "SELECT Club, Product, Previous_Cost FROM purchases \
                     WHERE Product = 'GPI' ORDER BY Previous_Cost DESC, Club ASC";

fn sheetql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetql"))
        .args(args)
        .env("SHEETQL_NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
    data: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("purchases.csv");
        fs::write(&data, common::purchases().to_csv()).unwrap();
        Workspace { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn compile(&self, query: &str, extra: &[&str]) -> (Output, PathBuf) {
        let grid = self.path("out.grid");
        let mut args = vec!["compile", query, "--data", s(&self.data), "--out", s(&grid)];
        args.extend_from_slice(extra);
        (sheetql(&args), grid)
    }
}

/// Rows of one `== SHEET name ==` section.
fn section<'a>(values: &'a str, name: &str) -> Vec<&'a str> {
    let header = format!("== SHEET {name} ==");
    values
        .lines()
        .skip_while(|l| *l != header)
        .skip(1)
        .take_while(|l| !l.starts_with("== SHEET "))
        .collect()
}

/// Where-block rows whose row number resolved, from vertical values text.
fn where_matches(values: &str) -> usize {
    section(values, "Where")
        .iter()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .nth(1)
                .is_some_and(|f| f.parse::<f64>().is_ok())
        })
        .count()
}

fn gpi_count() -> usize {
    let t = common::purchases();
    let p = t.column_index("Product").unwrap();
    (0..t.row_count())
        .filter(|&i| sheetql::table::scalar_text(t.cell(i, p)) == "GPI")
        .count()
}

#[test]
fn compile_writes_grid_and_plan() {
    let ws = Workspace::new();
    let (o, grid) = ws.compile(QUERY, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&grid).unwrap();
    assert!(text.contains("=IF(B2=Param_1,1,0)"));
    assert!(text.contains("=MATCH(A2,SK_Rank,0)"));
    let plan = fs::read_to_string(ws.path("out.grid.plan")).unwrap();
    assert!(plan.starts_with("== PLAN =="));
}

#[test]
fn eval_with_overrides() {
    let ws = Workspace::new();
    let (o, grid) = ws.compile(QUERY, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let base = sheetql(&["eval", s(&grid)]);
    assert_eq!(base.status.code(), Some(0), "{}", stderr(&base));
    assert_eq!(where_matches(&stdout(&base)), gpi_count());

    let cv = sheetql(&["eval", s(&grid), "--set", "Param_1=CV"]);
    assert_eq!(cv.status.code(), Some(0), "{}", stderr(&cv));
    assert_eq!(where_matches(&stdout(&cv)), common::CV_BUYERS);
    assert!(stdout(&cv).contains("#N/A"));

    let out = ws.path("values.csv");
    let blank = sheetql(&["eval", s(&grid), "--na-blank", "--out", s(&out)]);
    assert_eq!(blank.status.code(), Some(0), "{}", stderr(&blank));
    assert!(stdout(&blank).is_empty());
    assert!(!fs::read_to_string(&out).unwrap().contains("#N/A"));

    let bad = sheetql(&["eval", s(&grid), "--set", "Nope=1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("Nope"));
}

#[test]
fn verify_fixed_query() {
    let ws = Workspace::new();
    let o = sheetql(&["verify", QUERY, "--data", s(&ws.data)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("PASS"));

    let q = ws.path("q.sql");
    fs::write(&q, QUERY).unwrap();
    let o = sheetql(&[
        "verify",
        s(&q),
        "--data",
        s(&ws.data),
        "--mutation",
        "flip-rank",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL"));
}

#[test]
fn verify_random_instances() {
    let o = sheetql(&["verify", "--random", "20", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| *l == "PASS").count(), 20);
    assert!(text.ends_with("# 20 of 20 instances passed\n"));
}

#[test]
fn horizontal_layout_matches_vertical() {
    let ws = Workspace::new();
    let cfg = ws.path("h.cfg");
    fs::write(&cfg, "orientation = horizontal\n").unwrap();
    let (o, grid) = ws.compile(QUERY, &["--layout", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&grid).unwrap();
    assert!(text.contains("\nIndicator\t=IF(B2=Param_1,1,0)\t=IF(C2=Param_1,1,0)\t"));
    assert!(text.contains("\nRowNum\t=MATCH(B1,SK_Rank,0)\t"));

    let o = sheetql(&["verify", QUERY, "--data", s(&ws.data), "--layout", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn too_many_keys_for_the_surrogate() {
    let ws = Workspace::new();
    let wide = ws.path("wide.csv");
    let mut csv = String::from("A,B,C,D,E,F\n");
    for i in 0..common::PURCHASES {
        let row: Vec<String> = (1..=6).map(|k| ((i * k) % 97).to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(&wide, csv).unwrap();
    let q = "SELECT A FROM wide ORDER BY A, B, C, D, E, F DESC";
    let o = sheetql(&[
        "compile",
        q,
        "--data",
        s(&wide),
        "--out",
        s(&ws.path("w.grid")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("SK capacity exceeded"),
        "{}",
        stderr(&o)
    );
    assert!(!ws.path("w.grid").exists());
}

#[test]
fn exit_codes_for_bad_input() {
    let ws = Workspace::new();
    let missing = ws.path("missing.csv");
    let o = sheetql(&[
        "compile",
        QUERY,
        "--data",
        s(&missing),
        "--out",
        s(&ws.path("g")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = sheetql(&["eval", s(&ws.path("nothing.grid"))]);
    assert_eq!(o.status.code(), Some(2));

    let (o, _) = ws.compile("SELECT Nope FROM purchases", &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = sheetql(&["compile"]);
    assert_eq!(o.status.code(), Some(1));
}
