//! Evaluation of connected free-connex acyclic queries over an arbitrary
//! database, given as a rooted tree whose first `free` nodes are the
//! output variables.
//!
//! Preprocessing is a bottom-up semi-join pass followed by a top-down one
//! (a full reducer). Afterwards every surviving value of a free node has a
//! surviving partner in each free child, so nested cursors over the
//! filtered adjacency lists enumerate the answers without dead ends.

use std::collections::HashMap;

use crate::index::ColorIndex;
use crate::model::{ConjunctiveQuery, ConstId, Database, RelId};
use crate::plan::{rooted_tree, ComponentPlan};

/// Node constraint of a [`TreeQuery`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeCheck {
    /// `R(x)` for a unary `R`.
    Unary(RelId),
    /// `R(x,x)` for a binary `R`.
    Loop(RelId),
}

/// A connected acyclic query as a rooted tree over node positions
/// `0..len`, each parent before its children, free nodes `0..free`.
#[derive(Debug, Clone)]
pub struct TreeQuery {
    pub parent: Vec<Option<usize>>,
    pub free: usize,
    pub checks: Vec<Vec<NodeCheck>>,
    /// For each non-root node: binary atoms on the edge to its parent, as
    /// `(R, true)` for `R(parent, node)` and `(R, false)` for `R(node, parent)`.
    pub edges: Vec<Vec<(RelId, bool)>>,
    /// Set when an atom names a relation the database lacks.
    pub unsatisfiable: bool,
}

impl TreeQuery {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Tree form of a connected free-connex acyclic `q` over `db`'s schema.
    /// Also returns the query variable at each position.
    pub fn from_connected_query(q: &ConjunctiveQuery, db: &Database) -> (TreeQuery, Vec<usize>) {
        let tree = rooted_tree(q);
        let len = tree.order.len();
        let mut tq = TreeQuery {
            parent: tree.parent.clone(),
            free: q.arity(),
            checks: vec![Vec::new(); len],
            edges: vec![Vec::new(); len],
            unsatisfiable: false,
        };
        let schema = db.schema();
        for a in q.atoms() {
            let Some(rel) = schema.lookup(&a.relation).filter(|&r| schema.arity(r) == a.args.len())
            else {
                tq.unsatisfiable = true;
                continue;
            };
            match a.args[..] {
                [x] => tq.checks[tree.pos[x]].push(NodeCheck::Unary(rel)),
                [x, y] if x == y => tq.checks[tree.pos[x]].push(NodeCheck::Loop(rel)),
                [x, y] => {
                    let (px, py) = (tree.pos[x], tree.pos[y]);
                    if px < py {
                        tq.edges[py].push((rel, true));
                    } else {
                        tq.edges[px].push((rel, false));
                    }
                }
                _ => unreachable!("binary schema"),
            }
        }
        (tq, tree.order)
    }

    /// Tree form of a component's color query over the index's color
    /// database. Labels outside the downward closure make it unsatisfiable.
    pub fn color_query(plan: &ComponentPlan, idx: &ColorIndex) -> TreeQuery {
        let len = plan.len();
        let mut tq = TreeQuery {
            parent: (0..len).map(|i| plan.parent(i)).collect(),
            free: plan.k(),
            checks: vec![Vec::new(); len],
            edges: vec![Vec::new(); len],
            unsatisfiable: false,
        };
        for i in 0..len {
            for &u in plan.unary(i) {
                match idx.color_unary(u) {
                    Some(r) => tq.checks[i].push(NodeCheck::Unary(r)),
                    None => tq.unsatisfiable = true,
                }
            }
            if let Some(l) = plan.edge_label(i) {
                match idx.color_relation(l) {
                    Some(r) => tq.edges[i].push((r, true)),
                    None => tq.unsatisfiable = true,
                }
            }
        }
        tq
    }
}

/// Pairs `(parent value, child value)` satisfying every atom on the edge.
fn edge_pairs(db: &Database, atoms: &[(RelId, bool)]) -> Vec<(ConstId, ConstId)> {
    let orient = |(a, b): (ConstId, ConstId), fwd: bool| if fwd { (a, b) } else { (b, a) };
    let (first, rest) = atoms.split_first().expect("tree edge has an atom");
    let mut pairs: Vec<(ConstId, ConstId)> = db
        .relation(first.0)
        .binary()
        .iter()
        .map(|&t| orient(t, first.1))
        .filter(|&(p, c)| {
            rest.iter().all(|&(r, fwd)| {
                let (a, b) = orient((p, c), fwd);
                db.relation(r).contains_pair(a, b)
            })
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

fn node_alive(db: &Database, checks: &[NodeCheck], n: usize) -> Vec<bool> {
    let mut alive = vec![false; n];
    for &a in db.adom() {
        alive[a as usize] = true;
    }
    for &c in checks {
        let mut keep = vec![false; n];
        match c {
            NodeCheck::Unary(r) => {
                for &a in db.relation(r).unary() {
                    keep[a as usize] = true;
                }
            }
            NodeCheck::Loop(r) => {
                for &(a, b) in db.relation(r).binary() {
                    if a == b {
                        keep[a as usize] = true;
                    }
                }
            }
        }
        for (x, k) in alive.iter_mut().zip(keep) {
            *x &= k;
        }
    }
    alive
}

/// Semi-join state after the bottom-up pass.
struct Reduced {
    alive: Vec<Vec<bool>>,
    pairs: Vec<Vec<(ConstId, ConstId)>>,
}

fn bottom_up(db: &Database, tq: &TreeQuery) -> Option<Reduced> {
    if tq.unsatisfiable || tq.is_empty() {
        return None;
    }
    let n = db.constants().len();
    let mut alive: Vec<Vec<bool>> = tq.checks.iter().map(|c| node_alive(db, c, n)).collect();
    let mut pairs: Vec<Vec<(ConstId, ConstId)>> = vec![Vec::new(); tq.len()];
    for y in (1..tq.len()).rev() {
        let p = tq.parent[y].expect("non-root node has a parent");
        pairs[y] = edge_pairs(db, &tq.edges[y]);
        let mut support = vec![false; n];
        for &(a, b) in &pairs[y] {
            if alive[y][b as usize] {
                support[a as usize] = true;
            }
        }
        for (x, s) in alive[p].iter_mut().zip(support) {
            *x &= s;
        }
    }
    Some(Reduced { alive, pairs })
}

/// Boolean evaluation by the bottom-up semi-join pass: the query has an
/// answer iff some root value survives.
pub fn yannakakis_boolean(db: &Database, tq: &TreeQuery) -> bool {
    bottom_up(db, tq).is_some_and(|r| r.alive[0].iter().any(|&x| x))
}

/// Preprocessed enumerator of a [`TreeQuery`]'s answers. Tuples list the
/// values of nodes `0..free` in order.
#[derive(Debug, Clone)]
pub struct Cde {
    free: usize,
    parent: Vec<Option<usize>>,
    roots: Vec<ConstId>,
    adj: Vec<HashMap<ConstId, Vec<ConstId>>>,
    nonempty: bool,
}

/// Cursor state of one pass over a [`Cde`]'s answers.
#[derive(Debug, Clone, Default)]
pub struct CdeCursor {
    pos: Vec<usize>,
    values: Vec<ConstId>,
    started: bool,
    done: bool,
}

impl CdeCursor {
    /// Values of the current answer.
    pub fn values(&self) -> &[ConstId] {
        &self.values
    }
}

/// Preprocess `tq` over `db` for enumeration.
pub fn cde_fc_acq(db: &Database, tq: &TreeQuery) -> Cde {
    let mut cde = Cde {
        free: tq.free,
        parent: tq.parent.iter().take(tq.free).copied().collect(),
        roots: Vec::new(),
        adj: vec![HashMap::new(); tq.free],
        nonempty: false,
    };
    let Some(Reduced { mut alive, pairs }) = bottom_up(db, tq) else {
        return cde;
    };
    cde.nonempty = alive[0].iter().any(|&x| x);
    if !cde.nonempty {
        return cde;
    }
    // Top-down pass: keep child values with a surviving parent partner.
    let n = alive[0].len();
    for y in 1..tq.free {
        let p = tq.parent[y].unwrap();
        let mut keep = vec![false; n];
        for &(a, b) in &pairs[y] {
            if alive[p][a as usize] {
                keep[b as usize] = true;
            }
        }
        for (x, k) in alive[y].iter_mut().zip(keep) {
            *x &= k;
        }
    }
    if tq.free > 0 {
        cde.roots = (0..n as ConstId).filter(|&a| alive[0][a as usize]).collect();
    }
    for y in 1..tq.free {
        let p = tq.parent[y].unwrap();
        let map = &mut cde.adj[y];
        for &(a, b) in &pairs[y] {
            if alive[p][a as usize] && alive[y][b as usize] {
                map.entry(a).or_default().push(b);
            }
        }
    }
    cde
}

impl Cde {
    /// Whether the query has at least one answer.
    pub fn is_nonempty(&self) -> bool {
        self.nonempty
    }

    pub fn arity(&self) -> usize {
        self.free
    }

    pub fn cursor(&self) -> CdeCursor {
        CdeCursor {
            pos: vec![0; self.free],
            values: vec![0; self.free],
            started: false,
            done: !self.nonempty,
        }
    }

    fn list(&self, cur: &CdeCursor, i: usize) -> &[ConstId] {
        if i == 0 {
            &self.roots
        } else {
            let p = self.parent[i].unwrap();
            self.adj[i]
                .get(&cur.values[p])
                .map_or(&[], |v| v.as_slice())
        }
    }

    fn fill_from(&self, cur: &mut CdeCursor, from: usize, steps: &mut u64) {
        for i in from..self.free {
            let first = self.list(cur, i)[0];
            cur.pos[i] = 0;
            cur.values[i] = first;
            *steps += 1;
        }
    }

    /// Move to the next answer; `false` at the end. Each call does at most
    /// `2 * arity + 1` cursor steps, added to `steps`.
    pub fn advance(&self, cur: &mut CdeCursor, steps: &mut u64) -> bool {
        *steps += 1;
        if cur.done {
            return false;
        }
        if !cur.started {
            cur.started = true;
            self.fill_from(cur, 0, steps);
            return true;
        }
        let mut i = self.free;
        while i > 0 {
            i -= 1;
            *steps += 1;
            let len = self.list(cur, i).len();
            if cur.pos[i] + 1 < len {
                cur.pos[i] += 1;
                cur.values[i] = self.list(cur, i)[cur.pos[i]];
                self.fill_from(cur, i + 1, steps);
                return true;
            }
        }
        cur.done = true;
        false
    }

    /// Collect all answers; convenience for tests.
    pub fn collect_all(&self) -> Vec<Vec<ConstId>> {
        let mut out = Vec::new();
        let mut cur = self.cursor();
        let mut steps = 0;
        while self.advance(&mut cur, &mut steps) {
            out.push(cur.values.clone());
        }
        out
    }
}
