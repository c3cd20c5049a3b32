use std::collections::BTreeSet;

use colorindex::gen::{random_fc_query, rng, QueryShape};
use colorindex::plan::{check_binary_core, GaifmanGraph};
use colorindex::{
    check_free_connex_acyclic, parse_query, ConjunctiveQuery, FcViolation, PlanError, QueryPlan,
    Schema, Sigma1,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// GYO reduction: repeatedly drop vertices occurring in a single edge and
/// edges contained in another edge.
fn alpha_acyclic(mut edges: Vec<BTreeSet<usize>>) -> bool {
    loop {
        let mut changed = false;
        let all: BTreeSet<usize> = edges.iter().flatten().copied().collect();
        for v in all {
            let holders: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].contains(&v)).collect();
            if holders.len() == 1 {
                edges[holders[0]].remove(&v);
                changed = true;
            }
        }
        let mut i = 0;
        while i < edges.len() {
            let covered = edges[i].is_empty()
                || (0..edges.len()).any(|j| j != i && edges[i].is_subset(&edges[j]));
            if covered {
                edges.swap_remove(i);
                changed = true;
            } else {
                i += 1;
            }
        }
        if edges.is_empty() {
            return true;
        }
        if !changed {
            return false;
        }
    }
}

fn free_connex_by_gyo(q: &ConjunctiveQuery) -> bool {
    let mut edges: Vec<BTreeSet<usize>> =
        q.atoms().iter().map(|a| a.args.iter().copied().collect()).collect();
    if !alpha_acyclic(edges.clone()) {
        return false;
    }
    edges.push(q.head().iter().copied().collect());
    alpha_acyclic(edges)
}

/// Arbitrary CQ over R/2, S/2, U/1 with up to `vars` variables.
fn random_cq<R: Rng>(r: &mut R, vars: usize, atoms: usize) -> ConjunctiveQuery {
    let names: Vec<String> = (0..vars).map(|i| format!("v{i}")).collect();
    let mut body: Vec<(String, Vec<String>)> = Vec::new();
    for _ in 0..r.gen_range(1..=atoms) {
        let x = names.choose(r).unwrap().clone();
        let y = names.choose(r).unwrap().clone();
        body.push(match r.gen_range(0..5) {
            0 => ("U".into(), vec![x]),
            1 | 2 => ("R".into(), vec![x, y]),
            _ => ("S".into(), vec![x, y]),
        });
    }
    let used: BTreeSet<String> = body.iter().flat_map(|(_, a)| a.iter().cloned()).collect();
    let mut used: Vec<String> = used.into_iter().collect();
    used.shuffle(r);
    let k = r.gen_range(0..=used.len());
    used.truncate(k);
    ConjunctiveQuery::new(&used, &body).unwrap()
}

#[test]
fn recognition_matches_gyo() {
    let mut r = rng(11);
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..3000 {
        let q = random_cq(&mut r, 5, 6);
        let ours = check_free_connex_acyclic(&q).is_ok();
        assert_eq!(ours, free_connex_by_gyo(&q), "{q}");
        if ours {
            accepted += 1;
        } else {
            rejected += 1;
        }
    }
    assert!(accepted > 300 && rejected > 300, "{accepted} accepted, {rejected} rejected");
}

#[test]
fn dropping_unary_and_loop_atoms_preserves_recognition() {
    let mut r = rng(12);
    for _ in 0..3000 {
        let q = random_cq(&mut r, 5, 6);
        assert_eq!(
            check_free_connex_acyclic(&q).is_ok(),
            check_binary_core(&q).is_ok(),
            "{q}"
        );
    }
}

#[test]
fn generated_queries_are_free_connex() {
    let schema = Schema::new([("R", 2), ("S", 2), ("U", 1)]).unwrap();
    let mut r = rng(13);
    for _ in 0..2000 {
        let q = random_fc_query(&mut r, &schema, QueryShape::default());
        assert!(free_connex_by_gyo(&q), "{q}");
        assert!(q.arity() <= 4 && q.atoms().len() <= 5, "{q}");
    }
}

fn gaifman_edges(q: &ConjunctiveQuery) -> BTreeSet<(String, String)> {
    GaifmanGraph::of(q)
        .edges()
        .into_iter()
        .map(|(a, b)| {
            let (a, b) = (q.var_name(a).to_owned(), q.var_name(b).to_owned());
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

#[test]
fn color_queries_keep_head_and_gaifman_graph() {
    let schema = Schema::new([("R", 2), ("S", 2), ("U", 1)]).unwrap();
    let sigma1 = Sigma1::new(&schema);
    let mut r = rng(14);
    for _ in 0..2000 {
        let q = random_fc_query(&mut r, &schema, QueryShape::default());
        let plan = QueryPlan::new(&q, &sigma1).unwrap();
        let mut free_seen = BTreeSet::new();
        for c in plan.components() {
            let q1 = c.q1();
            let qc = c.color_query();
            assert!(check_free_connex_acyclic(qc).is_ok(), "{qc}");
            assert_eq!(gaifman_edges(q1), gaifman_edges(qc), "{q1} vs {qc}");
            assert_eq!(gaifman_edges(c.query()), gaifman_edges(q1));
            let head = |q: &ConjunctiveQuery| -> Vec<String> {
                q.head().iter().map(|&v| q.var_name(v).to_owned()).collect()
            };
            let set = |v: Vec<String>| v.into_iter().collect::<BTreeSet<_>>();
            assert_eq!(set(head(q1)), set(head(qc)));
            let order: Vec<String> = (0..c.k()).map(|i| c.var_name(i).to_owned()).collect();
            assert_eq!(head(qc), order);
            assert!(q1.atoms().iter().all(|a| a.args.len() == 1 || a.args[0] != a.args[1]));
            // Head variables come first in the traversal, parents before children.
            for i in 0..c.len() {
                if let Some(p) = c.parent(i) {
                    assert!(p < i);
                    assert!(c.edge_label(i).is_some());
                }
                if i < c.k() {
                    free_seen.insert(c.user_slot(i));
                }
            }
        }
        assert_eq!(free_seen, (0..q.arity()).collect());
    }
}

#[test]
fn rejection_messages() {
    let sigma1 = Sigma1::new(&Schema::new([("R", 2)]).unwrap());
    let cyclic = parse_query("Ans() <- R(a,b), R(b,c), R(c,a).").unwrap();
    let err = QueryPlan::new(&cyclic, &sigma1).unwrap_err();
    assert!(matches!(err, PlanError::NotFreeConnex(FcViolation::Cycle(_))));
    assert!(err.to_string().contains("query is cyclic"), "{err}");

    let split = parse_query("Ans(x,z) <- R(x,y), R(y,z).").unwrap();
    let err = QueryPlan::new(&split, &sigma1).unwrap_err();
    assert!(err.to_string().contains("free variables disconnected"), "{err}");

    let unknown = parse_query("Ans(x) <- T(x,y).").unwrap();
    assert!(matches!(QueryPlan::new(&unknown, &sigma1), Err(PlanError::Query(_))));
}

#[test]
fn long_path_queries_plan_in_one_pass() {
    let sigma1 = Sigma1::new(&Schema::new([("R", 2)]).unwrap());
    for n in [10usize, 1_000, 20_000] {
        let atoms: Vec<String> = (0..n).map(|i| format!("R(y{i},y{})", i + 1)).collect();
        let text = format!("Ans(y0,y1) <- {}.", atoms.join(", "));
        let q = parse_query(&text).unwrap();
        let plan = QueryPlan::new(&q, &sigma1).unwrap();
        let c = &plan.components()[0];
        assert_eq!(c.len(), n + 1);
        assert_eq!(c.color_query().atoms().len(), n);
    }
}
