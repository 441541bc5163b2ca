//! Dependency-graph certification of linearizability.
//!
//! Builds a graph over all operations whose edges are real-time
//! order plus the write-read, write-write and read-write dependencies implied
//! by the internal timestamps τ. An acyclic, well-formed graph proves the
//! history linearizable. A cyclic or malformed one proves nothing, so the
//! verdict is then only "inconclusive".

use std::collections::BTreeMap;

use crate::types::{Timestamp, Value};

use super::history::{History, Tau};
use super::CheckError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WhiteboxVerdict {
    Certified,
    Inconclusive(String),
}

impl WhiteboxVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, WhiteboxVerdict::Certified)
    }
}

/// Edges of the dependency graph, as `(from, to)` op ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub vertices: Vec<usize>,
    pub rt: Vec<(usize, usize)>,
    pub wr: Vec<(usize, usize)>,
    pub ww: Vec<(usize, usize)>,
    pub rw: Vec<(usize, usize)>,
}

impl DependencyGraph {
    fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.rt.iter().chain(&self.wr).chain(&self.ww).chain(&self.rw)
    }

    /// Some cycle through the graph, if there is one.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        let mut adj: BTreeMap<usize, Vec<usize>> = self.vertices.iter().map(|v| (*v, Vec::new())).collect();
        for &(a, b) in self.edges() {
            adj.entry(a).or_default().push(b);
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark: BTreeMap<usize, Mark> = adj.keys().map(|v| (*v, Mark::New)).collect();
        let mut path = Vec::new();
        fn visit(
            v: usize,
            adj: &BTreeMap<usize, Vec<usize>>,
            mark: &mut BTreeMap<usize, Mark>,
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            mark.insert(v, Mark::Active);
            path.push(v);
            for &w in &adj[&v] {
                match mark[&w] {
                    Mark::Active => {
                        let start = path.iter().position(|x| *x == w).expect("on path");
                        return Some(path[start..].to_vec());
                    }
                    Mark::New => {
                        if let Some(c) = visit(w, adj, mark, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
            path.pop();
            mark.insert(v, Mark::Done);
            None
        }
        let keys: Vec<usize> = adj.keys().copied().collect();
        for v in keys {
            if mark[&v] == Mark::New {
                if let Some(c) = visit(v, &adj, &mut mark, &mut path) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// Builds the dependency graph of `history`, or explains why the witness
/// relations are not well formed.
pub fn build_graph(history: &History) -> Result<Result<DependencyGraph, String>, CheckError> {
    let ops = &history.ops;
    let mut tau = Vec::with_capacity(ops.len());
    for (i, r) in ops.iter().enumerate() {
        match r.tau {
            Some(t) => tau.push(t),
            None if r.is_complete() => return Err(CheckError::MissingTau(i)),
            None => tau.push(Tau::Infinite(r.client)),
        }
    }
    let initial = Tau::Finite(Timestamp::INITIAL);
    let mut writer_of: BTreeMap<Tau, usize> = BTreeMap::new();
    for i in (0..ops.len()).filter(|i| ops[*i].is_write()) {
        if let Tau::Finite(_) = tau[i] {
            if let Some(&j) = writer_of.get(&tau[i]) {
                return Err(CheckError::DuplicateWriteTau(j, i));
            }
            writer_of.insert(tau[i], i);
            if tau[i] == initial {
                return Ok(Err(format!("write {i} carries the initial timestamp")));
            }
        }
    }

    let complete_read = |i: usize| ops[i].is_read() && ops[i].is_complete();
    let visible: Vec<bool> = (0..ops.len())
        .map(|i| {
            ops[i].is_complete() || (ops[i].is_write() && (0..ops.len()).any(|r| complete_read(r) && tau[r] == tau[i]))
        })
        .collect();
    let mut g = DependencyGraph {
        vertices: (0..ops.len()).collect(),
        ..Default::default()
    };
    let vis_writes: Vec<usize> = (0..ops.len()).filter(|i| visible[*i] && ops[*i].is_write()).collect();

    let mut reads_from: BTreeMap<usize, Option<usize>> = BTreeMap::new();
    for r in (0..ops.len()).filter(|r| complete_read(*r)) {
        if tau[r] == initial {
            if ops[r].value != Some(Value::INITIAL) {
                return Ok(Err(format!(
                    "read {r} has the initial timestamp but returned {:?}",
                    ops[r].value
                )));
            }
            reads_from.insert(r, None);
            continue;
        }
        match writer_of.get(&tau[r]) {
            Some(&w) if visible[w] => {
                if ops[w].value != ops[r].value {
                    return Ok(Err(format!(
                        "read {r} shares τ with write {w} but returned a different value"
                    )));
                }
                g.wr.push((w, r));
                reads_from.insert(r, Some(w));
            }
            _ => return Ok(Err(format!("read {r} has τ={} matching no visible write", tau[r]))),
        }
    }

    for &a in &vis_writes {
        for &b in &vis_writes {
            if tau[a] < tau[b] {
                g.ww.push((a, b));
            }
        }
    }

    // Only complete reads get anti-dependency edges: an incomplete read has
    // no reads-from edge, and treating it as a read of the initial value
    // would order it before writes it may follow in real time.
    for (&r, src) in &reads_from {
        for &w in &vis_writes {
            let later = match src {
                Some(src) => tau[*src] < tau[w],
                None => true,
            };
            if later {
                g.rw.push((r, w));
            }
        }
    }

    for &a in &g.vertices {
        for &b in &g.vertices {
            if a != b && ops[a].precedes(&ops[b]) {
                g.rt.push((a, b));
            }
        }
    }
    Ok(Ok(g))
}

/// Certifies `history` linearizable when its dependency graph is well formed
/// and acyclic.
pub fn check_atomicity_whitebox(history: &History) -> Result<WhiteboxVerdict, CheckError> {
    Ok(match build_graph(history)? {
        Err(why) => WhiteboxVerdict::Inconclusive(why),
        Ok(g) => match g.find_cycle() {
            None => WhiteboxVerdict::Certified,
            Some(c) => WhiteboxVerdict::Inconclusive(format!("cycle through ops {c:?}")),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::history::HistoryRecord;
    use crate::sim::trace::OpKind;

    fn op(kind: OpKind, client: u32, val: u64, inv: u64, resp: Option<u64>, tau: Tau) -> HistoryRecord {
        HistoryRecord {
            client,
            kind,
            value: Some(Value(val)),
            invoke: inv,
            respond: resp,
            tau: Some(tau),
        }
    }

    fn ts(c: u64, j: u32) -> Tau {
        Tau::Finite(Timestamp::new(c, j))
    }

    #[test]
    fn empty_history_is_certified() {
        assert!(check_atomicity_whitebox(&History::default()).unwrap().is_certified());
    }

    #[test]
    fn write_then_matching_read_is_certified() {
        let h = History::new(vec![
            op(OpKind::Write, 4, 1, 0, Some(5), ts(1, 4)),
            op(OpKind::Read, 5, 1, 6, Some(9), ts(1, 4)),
        ]);
        let g = build_graph(&h).unwrap().unwrap();
        assert_eq!(g.wr, vec![(0, 1)]);
        assert_eq!(g.rt, vec![(0, 1)]);
        assert!(g.rw.is_empty() && g.ww.is_empty());
        assert!(check_atomicity_whitebox(&h).unwrap().is_certified());
    }

    #[test]
    fn stale_read_after_completed_write_is_inconclusive() {
        let h = History::new(vec![
            op(OpKind::Write, 4, 1, 0, Some(5), ts(1, 4)),
            op(OpKind::Read, 5, 0, 6, Some(9), ts(0, 0)),
        ]);
        let g = build_graph(&h).unwrap().unwrap();
        assert_eq!(g.rw, vec![(1, 0)]);
        assert!(!check_atomicity_whitebox(&h).unwrap().is_certified());
    }

    #[test]
    fn incomplete_write_is_visible_through_a_read() {
        let h = History::new(vec![
            op(OpKind::Write, 4, 1, 0, None, ts(1, 4)),
            op(OpKind::Read, 5, 1, 6, Some(9), ts(1, 4)),
        ]);
        let g = build_graph(&h).unwrap().unwrap();
        assert_eq!(g.wr, vec![(0, 1)]);
        assert!(check_atomicity_whitebox(&h).unwrap().is_certified());
    }

    #[test]
    fn incomplete_read_after_a_write_adds_no_cycle() {
        let h = History::new(vec![
            op(OpKind::Write, 4, 1, 0, Some(5), ts(1, 4)),
            op(OpKind::Read, 5, 0, 6, None, Tau::Infinite(5)),
        ]);
        assert!(check_atomicity_whitebox(&h).unwrap().is_certified());
    }

    #[test]
    fn duplicate_write_tau_is_an_input_error() {
        let h = History::new(vec![
            op(OpKind::Write, 4, 1, 0, Some(2), ts(1, 4)),
            op(OpKind::Write, 4, 2, 3, Some(5), ts(1, 4)),
        ]);
        assert_eq!(check_atomicity_whitebox(&h), Err(CheckError::DuplicateWriteTau(0, 1)));
    }

    #[test]
    fn missing_tau_on_complete_op_is_an_input_error() {
        let mut r = op(OpKind::Read, 5, 0, 0, Some(3), ts(0, 0));
        r.tau = None;
        assert_eq!(
            check_atomicity_whitebox(&History::new(vec![r])),
            Err(CheckError::MissingTau(0))
        );
    }
}
