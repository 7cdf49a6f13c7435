//! Dependency graph and deterministic evaluation order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use petgraph::graph::{DiGraph, NodeIndex};

use crate::formula::{CellAddr, CellRange, Expr, NameTarget, RefItem, Workbook};

/// Formula cells in evaluation order, plus the cells that sit on a cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOrder {
    pub cells: Vec<CellAddr>,
    pub cycles: BTreeSet<CellAddr>,
}

/// `(sheet index, col, row)` of a formula cell.
pub(crate) type CellKey = (usize, u32, u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Cell(CellKey),
    /// Stands for "every formula cell inside this range is computed".
    Range(usize, CellRange),
}

pub(crate) struct Schedule {
    pub order: Vec<CellKey>,
    pub cyclic: Vec<CellKey>,
}

/// Resolves a name to its target, if defined on an existing sheet.
pub(crate) fn resolve_ref<'a>(wb: &'a Workbook, item: RefItem<'a>) -> Option<Target<'a>> {
    match item {
        RefItem::Cell(a) => Some(Target::Cell(a)),
        RefItem::Range(r) => Some(Target::Range(r)),
        RefItem::Name(n) => match wb.resolve_name(n)? {
            NameTarget::Cell(a) => Some(Target::Cell(a)),
            NameTarget::Range(r) => Some(Target::Range(r)),
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Target<'a> {
    Cell(&'a CellAddr),
    Range(&'a CellRange),
}

pub(crate) fn schedule(wb: &Workbook) -> Schedule {
    let sheet_index: HashMap<&str, usize> = wb
        .sheets()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    // Ties are broken by sheet name, then row, then column.
    let mut by_name: Vec<usize> = (0..wb.sheets().len()).collect();
    by_name.sort_by(|&a, &b| wb.sheets()[a].name.cmp(&wb.sheets()[b].name));
    let mut sheet_rank = vec![0usize; by_name.len()];
    for (rank, &idx) in by_name.iter().enumerate() {
        sheet_rank[idx] = rank;
    }

    let mut graph: DiGraph<Node, ()> = DiGraph::new();
    let mut ids: HashMap<Node, NodeIndex> = HashMap::new();
    let mut formulas: Vec<(CellKey, &Expr)> = Vec::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (col, row, cell) in sheet.cells() {
            if let Some(e) = cell.formula() {
                let key = (si, col, row);
                ids.insert(Node::Cell(key), graph.add_node(Node::Cell(key)));
                formulas.push((key, e));
            }
        }
    }

    for &(key, expr) in &formulas {
        let consumer = ids[&Node::Cell(key)];
        let mut deps: Vec<Target> = Vec::new();
        expr.visit_refs(&mut |item| deps.extend(resolve_ref(wb, item)));
        for dep in deps {
            match dep {
                Target::Cell(a) => {
                    let Some(&si) = sheet_index.get(a.sheet.as_str()) else {
                        continue;
                    };
                    if let Some(&n) = ids.get(&Node::Cell((si, a.col, a.row))) {
                        graph.update_edge(n, consumer, ());
                    }
                }
                Target::Range(r) => {
                    let Some(&si) = sheet_index.get(r.sheet.as_str()) else {
                        continue;
                    };
                    let node = Node::Range(si, r.clone());
                    let rn = match ids.get(&node) {
                        Some(&n) => n,
                        None => {
                            let n = graph.add_node(node.clone());
                            ids.insert(node, n);
                            let sheet = &wb.sheets()[si];
                            for (col, row, cell) in sheet.cells_in(r) {
                                if cell.is_formula() {
                                    graph.update_edge(ids[&Node::Cell((si, col, row))], n, ());
                                }
                            }
                            n
                        }
                    };
                    graph.update_edge(rn, consumer, ());
                }
            }
        }
    }

    let mut component = vec![usize::MAX; graph.node_count()];
    let mut on_cycle = vec![false; graph.node_count()];
    for (ci, scc) in petgraph::algo::tarjan_scc(&graph).into_iter().enumerate() {
        let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        for n in scc {
            component[n.index()] = ci;
            on_cycle[n.index()] = cyclic;
        }
    }

    // Kahn over the condensation: edges inside one component are ignored, the
    // cells of a cyclic component are pre-assigned #CIRC! by the evaluator.
    let mut indegree = vec![0usize; graph.node_count()];
    for e in graph.edge_indices() {
        let (u, v) = graph.edge_endpoints(e).expect("edge exists");
        if component[u.index()] != component[v.index()] {
            indegree[v.index()] += 1;
        }
    }
    let priority = |n: NodeIndex| match &graph[n] {
        Node::Cell((si, col, row)) => (sheet_rank[*si], *row, *col, 0u8, 0u32, 0u32),
        Node::Range(si, r) => (
            sheet_rank[*si],
            r.row_start,
            r.col_start,
            1,
            r.row_end,
            r.col_end,
        ),
    };
    let mut heap: BinaryHeap<Reverse<(_, NodeIndex)>> = graph
        .node_indices()
        .filter(|n| indegree[n.index()] == 0)
        .map(|n| Reverse((priority(n), n)))
        .collect();
    let mut order = Vec::new();
    let mut cyclic = Vec::new();
    while let Some(Reverse((_, n))) = heap.pop() {
        if let Node::Cell(key) = graph[n] {
            if on_cycle[n.index()] {
                cyclic.push(key);
            } else {
                order.push(key);
            }
        }
        for m in graph.neighbors(n) {
            if component[m.index()] != component[n.index()] {
                indegree[m.index()] -= 1;
                if indegree[m.index()] == 0 {
                    heap.push(Reverse((priority(m), m)));
                }
            }
        }
    }
    debug_assert_eq!(order.len() + cyclic.len(), formulas.len());
    Schedule { order, cyclic }
}

/// Orders formula cells so that each comes after everything it references.
pub fn build_eval_order(wb: &Workbook) -> EvalOrder {
    let s = schedule(wb);
    let addr = |(si, col, row): CellKey| CellAddr::new(wb.sheets()[si].name.clone(), col, row);
    EvalOrder {
        cells: s.order.into_iter().map(addr).collect(),
        cycles: s.cyclic.into_iter().map(addr).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    type SheetSpec<'a> = (&'a str, &'a [(u32, u32, &'a str)]);

    fn wb(sheets: &[SheetSpec]) -> Workbook {
        let mut wb = Workbook::new();
        for (name, cells) in sheets {
            wb.add_sheet(name).unwrap();
            for &(col, row, text) in cells.iter() {
                let addr = CellAddr::new(*name, col, row);
                if text.starts_with('=') {
                    wb.set(&addr, parse_formula(text, name).unwrap()).unwrap();
                } else {
                    wb.set(&addr, text.parse::<f64>().unwrap()).unwrap();
                }
            }
        }
        wb
    }

    fn position(order: &EvalOrder, sheet: &str, col: u32, row: u32) -> usize {
        order
            .cells
            .iter()
            .position(|a| *a == CellAddr::new(sheet, col, row))
            .unwrap()
    }

    #[test]
    fn running_sum_follows_rows() {
        // Indicator in column I, running sum in J, declared bottom-up.
        let w = wb(&[(
            "S",
            &[
                (10, 4, "=J3+I4"),
                (10, 3, "=J2+I3"),
                (10, 2, "=I2"),
                (9, 2, "1"),
                (9, 3, "0"),
                (9, 4, "1"),
            ],
        )]);
        let order = build_eval_order(&w);
        assert!(order.cycles.is_empty());
        assert!(position(&order, "S", 10, 2) < position(&order, "S", 10, 3));
        assert!(position(&order, "S", 10, 3) < position(&order, "S", 10, 4));
    }

    #[test]
    fn range_dependencies() {
        let w = wb(&[
            ("A", &[(1, 1, "=MATCH(1,B!A1:A3,0)")]),
            ("B", &[(1, 3, "=A1"), (1, 1, "=5"), (1, 2, "2")]),
        ]);
        let order = build_eval_order(&w);
        assert!(position(&order, "A", 1, 1) > position(&order, "B", 1, 1));
        assert!(position(&order, "A", 1, 1) > position(&order, "B", 1, 3));
    }

    #[test]
    fn self_loop_and_downstream() {
        let w = wb(&[("S", &[(1, 1, "=A1+1"), (2, 1, "=A1*2"), (3, 1, "=7")])]);
        let order = build_eval_order(&w);
        assert_eq!(order.cycles, BTreeSet::from([CellAddr::new("S", 1, 1)]));
        assert_eq!(
            order.cells,
            vec![CellAddr::new("S", 2, 1), CellAddr::new("S", 3, 1)]
        );
    }

    #[test]
    fn cycle_through_range() {
        let w = wb(&[(
            "S",
            &[
                (1, 1, "=INDEX(A1:A3,2)"),
                (1, 2, "=A3"),
                (1, 3, "=4"),
                (2, 1, "=A2"),
            ],
        )]);
        let order = build_eval_order(&w);
        assert_eq!(order.cycles, BTreeSet::from([CellAddr::new("S", 1, 1)]));
        assert!(position(&order, "S", 1, 2) > position(&order, "S", 1, 3));
    }

    #[test]
    fn deterministic_tie_break() {
        let w = wb(&[
            ("Zed", &[(1, 1, "=1")]),
            ("Alpha", &[(2, 1, "=1"), (1, 2, "=1")]),
        ]);
        let order = build_eval_order(&w);
        assert_eq!(
            order.cells,
            vec![
                CellAddr::new("Alpha", 2, 1),
                CellAddr::new("Alpha", 1, 2),
                CellAddr::new("Zed", 1, 1)
            ]
        );
        assert_eq!(build_eval_order(&w), order);
    }
}
