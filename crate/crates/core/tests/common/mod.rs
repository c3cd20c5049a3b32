#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use colorindex::graph::{build_labeled_graph, encode_self_loops};
use colorindex::model::ConstId;
use colorindex::{
    count, enumerate, eval_boolean, is_stable, load_database, naive_eval, Coloring, ColorIndex,
    ConjunctiveQuery, Database, ExecMode, LabeledGraph, QueryPlan, ResultSet,
};
use rand::Rng;

pub fn movies() -> Database {
    load_database(include_str!("../data/movies.facts"), None).unwrap()
}

pub fn graph_of(db: &Database) -> LabeledGraph {
    let (s1, d1) = encode_self_loops(db);
    build_labeled_graph(&s1, &d1, ExecMode::Sequential)
}

/// Random database over `binary` binary and `unary` unary symbols with at
/// most `n` constants; self-loops allowed.
pub fn random_db<R: Rng>(rng: &mut R, n: usize, binary: usize, unary: usize) -> Database {
    let p = rng.gen_range(0.05..0.5);
    colorindex::gen::random_dense_database(rng, n, binary, unary, p, true)
}

/// Coarsest stable coloring through the subdivision digraph: one extra
/// vertex per edge `(u,w)` colored by its label, arcs `u -> v_(u,w) -> w`,
/// refined by out-neighbor color counts from the initial coloring
/// (vertex label or edge label, kept apart), then restricted to the
/// original vertices.
pub fn subdivision_refine(g: &LabeledGraph) -> Coloring {
    let n = g.vertex_count();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut init: Vec<(u8, u32)> = (0..n as ConstId).map(|v| (0, g.vertex_label_id(v))).collect();
    for u in 0..n as ConstId {
        for (w, l) in g.out_edges(u) {
            let e = init.len();
            init.push((1, l));
            out[u as usize].push(e);
            out.push(vec![w as usize]);
        }
    }
    let total = init.len();
    let mut colors = dense(&init);
    loop {
        let sigs: Vec<(u32, Vec<u32>)> = (0..total)
            .map(|v| {
                let mut s: Vec<u32> = out[v].iter().map(|&w| colors[w]).collect();
                s.sort_unstable();
                (colors[v], s)
            })
            .collect();
        let next = dense(&sigs);
        let classes = |c: &[u32]| c.iter().collect::<BTreeSet<_>>().len();
        if classes(&next) == classes(&colors) {
            break;
        }
        colors = next;
    }
    Coloring::from_assignment(&colors[..n])
}

fn dense<T: Ord + Clone>(keys: &[T]) -> Vec<u32> {
    let mut ids: BTreeMap<T, u32> = BTreeMap::new();
    for k in keys {
        let next = ids.len() as u32;
        ids.entry(k.clone()).or_insert(next);
    }
    keys.iter().map(|k| ids[k]).collect()
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, n, max.max(c), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        let mut cur = vec![0];
        rec(1, n, 0, &mut cur, &mut out);
    }
    out
}

/// Exhaustive check that no stable coloring refining the vertex labels is
/// coarser than `col`, and that every one with as many classes equals it.
pub fn no_coarser_stable(g: &LabeledGraph, col: &Coloring) -> Result<(), String> {
    for assignment in partitions(g.vertex_count()) {
        let cand = Coloring::from_assignment(&assignment);
        if cand.num_colors() > col.num_colors() {
            continue;
        }
        if is_stable(g, &cand).unwrap().is_stable() && &cand != col {
            return Err(format!(
                "stable coloring {:?} with {} classes vs refined {:?}",
                cand.colors(),
                cand.num_colors(),
                col.colors()
            ));
        }
    }
    Ok(())
}

/// Compare every indexed task against the oracle for one query.
pub fn check_query(db: &Database, idx: &ColorIndex, q: &ConjunctiveQuery) -> Result<(), String> {
    let plan = QueryPlan::new(q, idx.sigma1()).map_err(|e| format!("{q}: plan: {e}"))?;
    let want = naive_eval(db, q);
    // The index may renumber constants; compare by name.
    let want_named = want.to_named(db);
    let idb = idx.database();

    let mut got = ResultSet::new(q.arity());
    let mut e = enumerate(idx, &plan);
    let mut emitted = 0usize;
    while let Some(t) = e.next_tuple() {
        emitted += 1;
        if !got.insert(t.to_vec()) {
            return Err(format!("{q}: duplicate {}", idb.format_tuple(t)));
        }
    }
    let got_named = got.to_named(idb);
    if got_named != want_named {
        return Err(format!("{q}: enumerate {got_named:?} != oracle {want_named:?}"));
    }
    let c = count(idx, &plan);
    if c != want.len().into() {
        return Err(format!("{q}: count {c} != oracle {}", want.len()));
    }
    if emitted != want.len() {
        return Err(format!("{q}: emitted {emitted}"));
    }
    if q.is_boolean() {
        let b = eval_boolean(idx, &plan).unwrap();
        if b == want.is_empty() {
            return Err(format!("{q}: boolean {b} but oracle has {} answers", want.len()));
        }
    }
    Ok(())
}
