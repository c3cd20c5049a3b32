//! Deterministic database and query generators.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ConjunctiveQuery, ConstId, Database, Interner, Relation, Schema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("a cycle needs at least 3 nodes, got {0}")]
    CycleTooShort(usize),
    #[error("cannot place {facts} distinct facts over {constants} constants (at most {max})")]
    TooManyFacts {
        facts: usize,
        constants: usize,
        max: usize,
    },
}

/// Seeded generator used throughout tests and benches.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Directed cycle `R(1,2), ..., R(n-1,n), R(n,1)` over constants `1..=n`.
///
/// Accepts any `n >= 1`; [`checked_cycle_database`] enforces `n >= 3`.
pub fn cycle_database(n: usize) -> Database {
    let schema = Schema::new([("R", 2)]).expect("valid schema");
    let names = (1..=n).map(|i| i.to_string()).collect();
    let tuples = (0..n as ConstId)
        .map(|i| (i, (i + 1) % n as ConstId))
        .collect();
    Database::from_relations(schema, Interner::from_names(names), vec![Relation::Binary(tuples)])
        .expect("cycle is well-formed")
}

pub fn checked_cycle_database(n: usize) -> Result<Database, GenError> {
    if n < 3 {
        return Err(GenError::CycleTooShort(n));
    }
    Ok(cycle_database(n))
}

/// Schema used by [`random_database`]: `R/2, S/2, U/1`.
pub fn random_schema() -> Schema {
    Schema::new([("R", 2), ("S", 2), ("U", 1)]).expect("valid schema")
}

/// Exactly `m` distinct facts over `R/2, S/2, U/1` drawn from constants
/// `c0..c{n-1}`, reproducible from `seed`. Constants that end up unused are
/// dropped.
pub fn random_database(n: usize, m: usize, seed: u64) -> Result<Database, GenError> {
    let max = 2 * n * n + n;
    if m > max {
        return Err(GenError::TooManyFacts {
            facts: m,
            constants: n,
            max,
        });
    }
    let mut rng = rng(seed);
    // Fact code: 0..n² for R, n²..2n² for S, 2n²..2n²+n for U.
    let codes: Vec<usize> = if 2 * m > max {
        let mut all: Vec<usize> = (0..max).collect();
        all.shuffle(&mut rng);
        all.truncate(m);
        all
    } else {
        let mut seen = BTreeSet::new();
        let mut picked = Vec::with_capacity(m);
        while picked.len() < m {
            let code = rng.gen_range(0..max);
            if seen.insert(code) {
                picked.push(code);
            }
        }
        picked
    };
    let nn = n * n;
    let (mut r, mut s, mut u) = (Vec::new(), Vec::new(), Vec::new());
    for code in codes {
        if code < 2 * nn {
            let pair = ((code % nn / n) as ConstId, (code % nn % n) as ConstId);
            if code < nn {
                r.push(pair)
            } else {
                s.push(pair)
            }
        } else {
            u.push((code - 2 * nn) as ConstId);
        }
    }
    let names = (0..n).map(|i| format!("c{i}")).collect();
    let db = Database::from_relations(
        random_schema(),
        Interner::from_names(names),
        vec![Relation::Binary(r), Relation::Binary(s), Relation::Unary(u)],
    )
    .expect("generated tuples are in range");
    Ok(db.compact())
}

/// Random database with each possible fact present independently with
/// probability `p`; `binary` and `unary` give the relation counts.
pub fn random_dense_database<R: Rng>(
    rng: &mut R,
    n: usize,
    binary: usize,
    unary: usize,
    p: f64,
    loops: bool,
) -> Database {
    let mut symbols: Vec<(String, usize)> = (0..binary).map(|i| (format!("R{i}"), 2)).collect();
    symbols.extend((0..unary).map(|i| (format!("U{i}"), 1)));
    let schema = Schema::new(symbols).expect("valid schema");
    let mut relations = Vec::new();
    for _ in 0..binary {
        let mut t = Vec::new();
        for a in 0..n as ConstId {
            for b in 0..n as ConstId {
                if (a != b || loops) && rng.gen_bool(p) {
                    t.push((a, b));
                }
            }
        }
        relations.push(Relation::Binary(t));
    }
    for _ in 0..unary {
        let t = (0..n as ConstId).filter(|_| rng.gen_bool(p)).collect();
        relations.push(Relation::Unary(t));
    }
    let names = (0..n).map(|i| format!("v{i}")).collect();
    Database::from_relations(schema, Interner::from_names(names), relations)
        .expect("generated tuples are in range")
        .compact()
}

/// Shape parameters for [`random_fc_query`].
#[derive(Debug, Clone, Copy)]
pub struct QueryShape {
    pub max_atoms: usize,
    pub max_free: usize,
    pub max_vars: usize,
}

impl Default for QueryShape {
    fn default() -> Self {
        QueryShape {
            max_atoms: 5,
            max_free: 4,
            max_vars: 5,
        }
    }
}

/// A random free-connex acyclic query over the binary and unary symbols of
/// `schema`. Variables are named `x0, x1, ...`.
///
/// The Gaifman graph is a random forest; each tree edge carries one or two
/// binary atoms in random directions, remaining atoms are unary or
/// self-loop atoms. Free variables grow from a random root of each tree so
/// they stay connected.
pub fn random_fc_query<R: Rng>(rng: &mut R, schema: &Schema, shape: QueryShape) -> ConjunctiveQuery {
    let binary: Vec<&str> = schema.binary_ids().map(|r| schema.name(r)).collect();
    let unary: Vec<&str> = schema.unary_ids().map(|r| schema.name(r)).collect();
    assert!(!binary.is_empty() || !unary.is_empty(), "schema has no symbols");
    assert!(shape.max_atoms >= 1 && shape.max_vars >= 1);

    let name = |v: usize| format!("x{v}");
    let mut atoms: Vec<(String, Vec<String>)> = Vec::new();
    let n_atoms = rng.gen_range(1..=shape.max_atoms);

    // Tree edges first, one atom each, then extra atoms on existing edges or
    // vertices.
    let n_vars = if binary.is_empty() {
        1
    } else {
        rng.gen_range(1..=shape.max_vars.min(n_atoms + 1))
    };
    let mut parent: Vec<Option<usize>> = vec![None; n_vars];
    let mut edges = Vec::new();
    let mut budget = n_atoms;
    for v in 1..n_vars {
        // Keep a few atoms for disconnected vertices or extras.
        if budget == 0 {
            break;
        }
        if rng.gen_bool(0.85) {
            let p = rng.gen_range(0..v);
            parent[v] = Some(p);
            edges.push((p, v));
            let rel = binary.choose(rng).unwrap().to_string();
            let args = if rng.gen_bool(0.5) { vec![p, v] } else { vec![v, p] };
            atoms.push((rel, args.into_iter().map(name).collect()));
            budget -= 1;
        }
    }
    // Every vertex needs at least one atom.
    let mut covered = vec![false; n_vars];
    for (p, v) in &edges {
        covered[*p] = true;
        covered[*v] = true;
    }
    let mut used_vars: Vec<usize> = Vec::new();
    for v in 0..n_vars {
        if covered[v] {
            used_vars.push(v);
            continue;
        }
        if budget == 0 {
            continue;
        }
        atoms.push(lonely_atom(rng, &binary, &unary, &name(v)));
        budget -= 1;
        used_vars.push(v);
    }
    while budget > 0 {
        let extra_edge = !edges.is_empty() && rng.gen_bool(0.4);
        if extra_edge {
            let &(p, v) = edges.choose(rng).unwrap();
            let rel = binary.choose(rng).unwrap().to_string();
            let args = if rng.gen_bool(0.5) { vec![p, v] } else { vec![v, p] };
            atoms.push((rel, args.into_iter().map(name).collect()));
        } else {
            let &v = used_vars.choose(rng).unwrap();
            atoms.push(lonely_atom(rng, &binary, &unary, &name(v)));
        }
        budget -= 1;
    }

    // Free variables: per tree, a connected set grown from a random vertex.
    let mut root_of: Vec<usize> = (0..n_vars).collect();
    for v in 0..n_vars {
        let mut r = v;
        while let Some(p) = parent[r] {
            r = p;
        }
        root_of[v] = r;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_vars];
    for &(p, v) in &edges {
        adj[p].push(v);
        adj[v].push(p);
    }
    let mut free: Vec<usize> = Vec::new();
    let mut trees: Vec<usize> = used_vars.iter().map(|&v| root_of[v]).collect();
    trees.sort_unstable();
    trees.dedup();
    trees.shuffle(rng);
    for t in trees {
        if free.len() >= shape.max_free || rng.gen_bool(0.3) {
            continue;
        }
        let members: Vec<usize> = used_vars.iter().copied().filter(|&v| root_of[v] == t).collect();
        let start = *members.choose(rng).unwrap();
        let want = rng.gen_range(1..=members.len());
        let mut chosen = vec![start];
        let mut frontier: Vec<usize> = adj[start].clone();
        while chosen.len() < want && free.len() + chosen.len() < shape.max_free {
            frontier.retain(|w| !chosen.contains(w));
            let Some(&w) = frontier.choose(rng) else {
                break;
            };
            chosen.push(w);
            frontier.extend(adj[w].iter().copied());
        }
        free.extend(chosen);
    }
    free.shuffle(rng);
    let head: Vec<String> = free.into_iter().map(name).collect();
    ConjunctiveQuery::new(&head, &atoms).expect("generated query is well-formed")
}

fn lonely_atom<R: Rng>(
    rng: &mut R,
    binary: &[&str],
    unary: &[&str],
    var: &str,
) -> (String, Vec<String>) {
    let use_loop = unary.is_empty() || (!binary.is_empty() && rng.gen_bool(0.3));
    if use_loop {
        (
            binary.choose(rng).unwrap().to_string(),
            vec![var.to_owned(), var.to_owned()],
        )
    } else {
        (unary.choose(rng).unwrap().to_string(), vec![var.to_owned()])
    }
}
