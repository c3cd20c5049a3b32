//! Query analysis: Gaifman graph, free-connex acyclicity, component
//! decomposition, loop rewriting and the rooted-tree plan with its color
//! query.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::graph::{EdgeLabel, LabelAtom, Sigma1};
use crate::index::color_rel_name;
use crate::model::{Atom, ConjunctiveQuery, QueryError, RelId, VarId};

/// Undirected graph on the variables of a query with an edge between any two
/// distinct variables sharing an atom.
#[derive(Debug, Clone)]
pub struct GaifmanGraph {
    adj: Vec<Vec<VarId>>,
}

impl GaifmanGraph {
    pub fn of(q: &ConjunctiveQuery) -> Self {
        let mut adj: Vec<BTreeSet<VarId>> = vec![BTreeSet::new(); q.var_count()];
        for a in q.atoms() {
            if let [x, y] = a.args[..] {
                if x != y {
                    adj[x].insert(y);
                    adj[y].insert(x);
                }
            }
        }
        GaifmanGraph {
            adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    /// Neighbors of `v`, sorted.
    pub fn neighbors(&self, v: VarId) -> &[VarId] {
        &self.adj[v]
    }

    /// Edges `(x, y)` with `x < y`.
    pub fn edges(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for (x, n) in self.adj.iter().enumerate() {
            out.extend(n.iter().filter(|&&y| x < y).map(|&y| (x, y)));
        }
        out
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<VarId>> {
        let mut seen = vec![false; self.adj.len()];
        let mut out = Vec::new();
        for s in 0..self.adj.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut i = 0;
            while i < comp.len() {
                for &w in &self.adj[comp[i]] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Why a query is not free-connex acyclic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FcViolation {
    #[error("query is cyclic: Gaifman cycle {}", render_cycle(.0))]
    Cycle(Vec<String>),
    #[error("free variables disconnected: `{0}` and `{1}` are not joined by free variables")]
    FreeDisconnected(String, String),
}

fn render_cycle(vars: &[String]) -> String {
    let mut s = vars.join(" - ");
    if let Some(first) = vars.first() {
        s.push_str(" - ");
        s.push_str(first);
    }
    s
}

/// Accept iff the Gaifman graph is a forest and in each of its trees the
/// free variables induce a connected (or empty) subgraph.
pub fn check_free_connex_acyclic(q: &ConjunctiveQuery) -> Result<(), FcViolation> {
    let free: Vec<bool> = (0..q.var_count()).map(|v| q.is_free(v)).collect();
    check_parts(&GaifmanGraph::of(q), &free, q.head(), |v| q.var_name(v).to_owned())
}

fn check_parts(
    g: &GaifmanGraph,
    free: &[bool],
    head: &[VarId],
    name: impl Fn(VarId) -> String,
) -> Result<(), FcViolation> {
    let n = g.vertex_count();
    let mut parent: Vec<Option<VarId>> = vec![None; n];
    let mut depth = vec![0usize; n];
    for comp in g.components() {
        // BFS tree from the smallest member; any non-tree edge closes a cycle.
        let mut queue = vec![comp[0]];
        let mut i = 0;
        let mut seen = BTreeSet::from([comp[0]]);
        while i < queue.len() {
            let x = queue[i];
            i += 1;
            for &y in g.neighbors(x) {
                if seen.insert(y) {
                    parent[y] = Some(x);
                    depth[y] = depth[x] + 1;
                    queue.push(y);
                }
            }
        }
        for &x in &comp {
            for &y in g.neighbors(x) {
                if x < y && parent[x] != Some(y) && parent[y] != Some(x) {
                    let (mut a, mut b) = (x, y);
                    let (mut left, mut right) = (vec![a], vec![b]);
                    while depth[a] > depth[b] {
                        a = parent[a].unwrap();
                        left.push(a);
                    }
                    while depth[b] > depth[a] {
                        b = parent[b].unwrap();
                        right.push(b);
                    }
                    while a != b {
                        a = parent[a].unwrap();
                        b = parent[b].unwrap();
                        left.push(a);
                        right.push(b);
                    }
                    right.pop();
                    left.extend(right.into_iter().rev());
                    return Err(FcViolation::Cycle(left.into_iter().map(&name).collect()));
                }
            }
        }
    }
    for comp in g.components() {
        let members: BTreeSet<VarId> = comp.iter().copied().collect();
        let comp_free: Vec<VarId> = head.iter().copied().filter(|v| members.contains(v)).collect();
        let Some(&start) = comp_free.first() else {
            continue;
        };
        let mut reached = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for &y in g.neighbors(x) {
                if free[y] && reached.insert(y) {
                    stack.push(y);
                }
            }
        }
        if let Some(&missing) = comp_free.iter().find(|v| !reached.contains(v)) {
            return Err(FcViolation::FreeDisconnected(name(start), name(missing)));
        }
    }
    Ok(())
}

/// Check the variant of `q` without unary and self-loop atoms, keeping as
/// free exactly the free variables that still occur.
pub fn check_binary_core(q: &ConjunctiveQuery) -> Result<(), FcViolation> {
    let mut occurs = vec![false; q.var_count()];
    for a in q.atoms() {
        if a.args.len() == 2 && a.args[0] != a.args[1] {
            occurs[a.args[0]] = true;
            occurs[a.args[1]] = true;
        }
    }
    let g = GaifmanGraph::of(q);
    let head: Vec<VarId> = q.head().iter().copied().filter(|&v| occurs[v]).collect();
    let free: Vec<bool> = (0..q.var_count()).map(|v| occurs[v] && q.is_free(v)).collect();
    check_parts(&g, &free, &head, |v| q.var_name(v).to_owned())
}

/// A connected sub-query together with the user head positions of its head
/// variables (in the sub-query's head order).
#[derive(Debug, Clone)]
pub struct Component {
    pub query: ConjunctiveQuery,
    pub head_slots: Vec<usize>,
}

/// Split `q` into the connected components of its Gaifman graph. Components
/// with free variables come first, ordered by their first head position;
/// Boolean components follow in variable order.
pub fn decompose_components(q: &ConjunctiveQuery) -> Vec<Component> {
    let g = GaifmanGraph::of(q);
    let mut comps = g.components();
    let first_slot = |c: &Vec<VarId>| {
        q.head()
            .iter()
            .position(|h| c.binary_search(h).is_ok())
            .unwrap_or(usize::MAX)
    };
    comps.sort_by_key(|c| (first_slot(c), c[0]));
    comps
        .into_iter()
        .map(|members| {
            let head_slots: Vec<usize> = (0..q.arity())
                .filter(|&i| members.binary_search(&q.head()[i]).is_ok())
                .collect();
            let head: Vec<&str> = head_slots.iter().map(|&i| q.var_name(q.head()[i])).collect();
            let atoms: Vec<(&str, Vec<&str>)> = q
                .atoms()
                .iter()
                .filter(|a| members.binary_search(&a.args[0]).is_ok())
                .map(|a| {
                    (
                        a.relation.as_str(),
                        a.args.iter().map(|&v| q.var_name(v)).collect(),
                    )
                })
                .collect();
            Component {
                query: ConjunctiveQuery::new(&head, &atoms).expect("component of a valid query"),
                head_slots,
            }
        })
        .collect()
}

/// Replace every `R(x,x)` by `S_R(x)`.
pub fn remove_self_loops(q: &ConjunctiveQuery, sigma1: &Sigma1) -> Result<ConjunctiveQuery, QueryError> {
    let schema = sigma1.schema();
    let atoms = q
        .atoms()
        .iter()
        .map(|a| {
            if !a.is_self_loop() {
                return Ok(a.clone());
            }
            let loop_rel = schema
                .lookup(&a.relation)
                .and_then(|r| sigma1.loop_symbol(r))
                .ok_or_else(|| QueryError::UnknownRelation(a.relation.clone()))?;
            Ok(Atom {
                relation: schema.name(loop_rel).to_owned(),
                args: vec![a.args[0]],
            })
        })
        .collect::<Result<Vec<_>, QueryError>>()?;
    Ok(ConjunctiveQuery::from_parts(
        q.vars().to_vec(),
        q.head().to_vec(),
        atoms,
    ))
}

/// Rooted spanning tree of a connected acyclic query, in traversal order.
#[derive(Debug, Clone)]
pub(crate) struct RootedTree {
    /// Variables in traversal order; free variables first.
    pub order: Vec<VarId>,
    /// Position of each variable in `order`.
    pub pos: Vec<usize>,
    /// Parent position of each position; `None` for the root.
    pub parent: Vec<Option<usize>>,
}

/// Traverse from the root with two queues, always draining free variables
/// before quantified ones; each queue releases variables by name.
pub(crate) fn rooted_tree(q: &ConjunctiveQuery) -> RootedTree {
    let g = GaifmanGraph::of(q);
    let root = match q.head().first() {
        Some(&h) => h,
        None => (0..q.var_count())
            .min_by(|&a, &b| q.var_name(a).cmp(q.var_name(b)))
            .expect("query has variables"),
    };
    let n = q.var_count();
    let mut parent_var: Vec<Option<VarId>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut free_q: BTreeSet<(&str, VarId)> = BTreeSet::new();
    let mut quant_q: BTreeSet<(&str, VarId)> = BTreeSet::new();
    let mut order = Vec::with_capacity(n);
    seen[root] = true;
    free_q.insert((q.var_name(root), root));
    loop {
        let next = match free_q.pop_first() {
            Some(e) => e,
            None => match quant_q.pop_first() {
                Some(e) => e,
                None => break,
            },
        };
        let x = next.1;
        order.push(x);
        for &y in g.neighbors(x) {
            if !seen[y] {
                seen[y] = true;
                parent_var[y] = Some(x);
                let entry = (q.var_name(y), y);
                if q.is_free(y) {
                    free_q.insert(entry);
                } else {
                    quant_q.insert(entry);
                }
            }
        }
    }
    assert_eq!(order.len(), n, "query must be connected");
    let mut pos = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let parent = order.iter().map(|&v| parent_var[v].map(|p| pos[p])).collect();
    RootedTree { order, pos, parent }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    NotFreeConnex(#[from] FcViolation),
}

/// Plan of one connected component. Positions `0..len()` follow the
/// traversal order; positions `0..k()` are the free variables.
#[derive(Debug, Clone)]
pub struct ComponentPlan {
    query: ConjunctiveQuery,
    q1: ConjunctiveQuery,
    color_query: ConjunctiveQuery,
    vars: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    k: usize,
    unary: Vec<Vec<RelId>>,
    edge_label: Vec<Option<EdgeLabel>>,
    user_slot: Vec<usize>,
}

impl ComponentPlan {
    fn build(comp: &Component, sigma1: &Sigma1) -> Result<Self, PlanError> {
        let schema = sigma1.schema();
        let q1 = remove_self_loops(&comp.query, sigma1)?;
        let tree = rooted_tree(&q1);
        let len = tree.order.len();
        let k = q1.arity();
        debug_assert!(tree.order[..k].iter().all(|&v| q1.is_free(v)));

        let mut unary: Vec<Vec<RelId>> = vec![Vec::new(); len];
        let mut atoms_on_edge: Vec<Vec<LabelAtom>> = vec![Vec::new(); len];
        for a in q1.atoms() {
            let rel = schema
                .lookup(&a.relation)
                .ok_or_else(|| QueryError::UnknownRelation(a.relation.clone()))?;
            match a.args[..] {
                [x] => unary[tree.pos[x]].push(rel),
                [x, y] => {
                    let (px, py) = (tree.pos[x], tree.pos[y]);
                    if px < py {
                        atoms_on_edge[py].push(LabelAtom::forward(rel));
                    } else {
                        atoms_on_edge[px].push(LabelAtom::backward(rel));
                    }
                }
                _ => unreachable!("binary schema"),
            }
        }
        for u in &mut unary {
            u.sort_unstable();
            u.dedup();
        }
        let edge_label: Vec<Option<EdgeLabel>> = atoms_on_edge.into_iter().map(EdgeLabel::new).collect();
        let mut children = vec![Vec::new(); len];
        for (i, p) in tree.parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
                debug_assert!(edge_label[i].is_some());
            }
        }

        let vars: Vec<String> = tree.order.iter().map(|&v| q1.var_name(v).to_owned()).collect();
        let user_slot = (0..k)
            .map(|i| {
                let at = q1.head().iter().position(|&h| h == tree.order[i]).unwrap();
                comp.head_slots[at]
            })
            .collect();

        let mut col_atoms: Vec<Atom> = q1
            .atoms()
            .iter()
            .filter(|a| a.is_unary())
            .map(|a| Atom {
                relation: a.relation.clone(),
                args: vec![tree.pos[a.args[0]]],
            })
            .collect();
        for (i, l) in edge_label.iter().enumerate() {
            if let (Some(l), Some(p)) = (l, tree.parent[i]) {
                col_atoms.push(Atom {
                    relation: color_rel_name(l, schema),
                    args: vec![p, i],
                });
            }
        }
        let color_query = ConjunctiveQuery::from_parts(vars.clone(), (0..k).collect(), col_atoms);

        Ok(ComponentPlan {
            query: comp.query.clone(),
            q1,
            color_query,
            vars,
            parent: tree.parent,
            children,
            k,
            unary,
            edge_label,
            user_slot,
        })
    }

    /// The component as it appears in the input query.
    pub fn query(&self) -> &ConjunctiveQuery {
        &self.query
    }

    /// The component with self-loop atoms rewritten to unary atoms.
    pub fn q1(&self) -> &ConjunctiveQuery {
        &self.q1
    }

    /// The query to evaluate on the color database; its head lists the free
    /// variables in traversal order.
    pub fn color_query(&self) -> &ConjunctiveQuery {
        &self.color_query
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_boolean(&self) -> bool {
        self.k == 0
    }

    pub fn is_full(&self) -> bool {
        self.k == self.vars.len()
    }

    pub fn var_name(&self, i: usize) -> &str {
        &self.vars[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Unary symbols of σ₁ required at position `i`, sorted.
    pub fn unary(&self, i: usize) -> &[RelId] {
        &self.unary[i]
    }

    /// Label of the tree edge from the parent of `i` to `i`.
    pub fn edge_label(&self, i: usize) -> Option<&EdgeLabel> {
        self.edge_label[i].as_ref()
    }

    /// Position in the user's head of free position `i`.
    pub fn user_slot(&self, i: usize) -> usize {
        self.user_slot[i]
    }
}

/// A checked query split into component plans.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    query: ConjunctiveQuery,
    components: Vec<ComponentPlan>,
}

impl QueryPlan {
    pub fn new(q: &ConjunctiveQuery, sigma1: &Sigma1) -> Result<Self, PlanError> {
        q.check_schema(sigma1.base_schema())?;
        check_free_connex_acyclic(q)?;
        let components = decompose_components(q)
            .iter()
            .map(|c| ComponentPlan::build(c, sigma1))
            .collect::<Result<_, _>>()?;
        Ok(QueryPlan {
            query: q.clone(),
            components,
        })
    }

    pub fn query(&self) -> &ConjunctiveQuery {
        &self.query
    }

    pub fn components(&self) -> &[ComponentPlan] {
        &self.components
    }

    pub fn arity(&self) -> usize {
        self.query.arity()
    }

    pub fn is_boolean(&self) -> bool {
        self.query.is_boolean()
    }

    /// Human-readable rendering of every component plan.
    pub fn explain(&self, sigma1: &Sigma1) -> String {
        let schema = sigma1.schema();
        let mut s = String::new();
        let _ = writeln!(s, "query: {}", self.query);
        for (ci, c) in self.components.iter().enumerate() {
            let _ = writeln!(
                s,
                "component {ci}: {} variable(s), {} free{}",
                c.len(),
                c.k,
                if c.is_boolean() { " (boolean)" } else { "" }
            );
            let _ = writeln!(s, "  Q1:    {}", c.q1);
            let _ = writeln!(s, "  order: {}", c.vars.join(" < "));
            let _ = writeln!(s, "  root:  {}", c.vars[0]);
            for i in 0..c.len() {
                let _ = write!(s, "  {}", c.vars[i]);
                if i < c.k {
                    let _ = write!(s, " [free -> head #{}]", c.user_slot[i]);
                }
                if let (Some(p), Some(l)) = (c.parent[i], &c.edge_label[i]) {
                    let _ = write!(s, " parent {} via {}", c.vars[p], l.display(schema));
                }
                if !c.unary[i].is_empty() {
                    let names: Vec<&str> = c.unary[i].iter().map(|&r| schema.name(r)).collect();
                    let _ = write!(s, " unary {{{}}}", names.join(","));
                }
                s.push('\n');
            }
            let _ = writeln!(s, "  Q_col: {}", c.color_query);
        }
        s
    }
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{}", c.color_query)?;
        }
        Ok(())
    }
}
