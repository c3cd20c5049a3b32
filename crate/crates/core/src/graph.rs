//! Self-loop encoding and the labeled graph representation of a database.

use std::collections::BTreeMap;
use std::fmt;

use crate::exec::{self, ExecMode};
use crate::model::{ConstId, Database, Relation, RelId, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    fn sign(self) -> char {
        match self {
            Direction::Forward => '+',
            Direction::Backward => '-',
        }
    }
}

/// One `(R, +)` or `(R, -)` entry of an edge label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelAtom {
    pub rel: RelId,
    pub dir: Direction,
}

impl LabelAtom {
    pub fn forward(rel: RelId) -> Self {
        LabelAtom {
            rel,
            dir: Direction::Forward,
        }
    }

    pub fn backward(rel: RelId) -> Self {
        LabelAtom {
            rel,
            dir: Direction::Backward,
        }
    }

    fn code(self) -> u32 {
        (self.rel as u32) << 1 | (self.dir == Direction::Backward) as u32
    }

    fn from_code(code: u32) -> Self {
        LabelAtom {
            rel: (code >> 1) as RelId,
            dir: if code & 1 == 0 {
                Direction::Forward
            } else {
                Direction::Backward
            },
        }
    }
}

/// A non-empty set of label atoms in canonical sorted order, so labels
/// compare and hash by value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeLabel(Vec<LabelAtom>);

impl EdgeLabel {
    pub fn new(atoms: impl IntoIterator<Item = LabelAtom>) -> Option<Self> {
        let mut atoms: Vec<LabelAtom> = atoms.into_iter().collect();
        atoms.sort_unstable();
        atoms.dedup();
        (!atoms.is_empty()).then_some(EdgeLabel(atoms))
    }

    pub fn atoms(&self) -> &[LabelAtom] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dual(&self) -> EdgeLabel {
        EdgeLabel::new(self.0.iter().map(|a| LabelAtom {
            rel: a.rel,
            dir: a.dir.flip(),
        }))
        .expect("dual of a non-empty label")
    }

    /// `self ⊆ other`; both are sorted so a merge walk suffices.
    pub fn is_subset_of(&self, other: &EdgeLabel) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|a| it.by_ref().any(|b| b == a))
    }

    /// All non-empty subsets, in no particular order.
    pub fn nonempty_subsets(&self) -> Vec<EdgeLabel> {
        let n = self.0.len();
        assert!(n < 32, "edge label too large to enumerate subsets");
        (1u32..(1 << n))
            .map(|mask| {
                EdgeLabel(
                    (0..n)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| self.0[i])
                        .collect(),
                )
            })
            .collect()
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> LabelDisplay<'a> {
        LabelDisplay {
            label: self,
            schema,
        }
    }
}

pub struct LabelDisplay<'a> {
    label: &'a EdgeLabel,
    schema: &'a Schema,
}

impl fmt::Display for LabelDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.label.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{})", self.schema.name(a.rel), a.dir.sign())?;
        }
        f.write_str("}")
    }
}

/// The extended schema: the base schema plus one fresh unary symbol per
/// binary relation holding its self-loops.
#[derive(Debug, Clone)]
pub struct Sigma1 {
    base: Schema,
    schema: Schema,
    base_len: usize,
    loop_symbol: Vec<Option<RelId>>,
}

impl Sigma1 {
    pub fn new(base: &Schema) -> Self {
        let mut schema = base.clone();
        let mut loop_symbol = vec![None; base.len()];
        for rel in base.binary_ids().collect::<Vec<_>>() {
            let stem = format!("S_{}", base.name(rel));
            let mut name = stem.clone();
            let mut suffix = 1;
            while schema.contains(&name) {
                name = format!("{stem}_{suffix}");
                suffix += 1;
            }
            loop_symbol[rel] = Some(schema.push(name, 1).expect("fresh unary symbol"));
        }
        Sigma1 {
            base: base.clone(),
            schema,
            base_len: base.len(),
            loop_symbol,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn base_schema(&self) -> &Schema {
        &self.base
    }

    /// Number of symbols of the original schema; their ids are unchanged.
    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn loop_symbol(&self, rel: RelId) -> Option<RelId> {
        self.loop_symbol.get(rel).copied().flatten()
    }
}

/// Add the self-loop relations: `S_R = {v | (v,v) ∈ R}` for every binary `R`.
pub fn encode_self_loops(db: &Database) -> (Sigma1, Database) {
    let sigma1 = Sigma1::new(db.schema());
    let mut relations = db.relations().to_vec();
    relations.resize(sigma1.schema().len(), Relation::Unary(Vec::new()));
    for rel in db.schema().binary_ids() {
        let loops = db
            .relation(rel)
            .binary()
            .iter()
            .filter(|(a, b)| a == b)
            .map(|&(a, _)| a)
            .collect();
        relations[sigma1.loop_symbol(rel).unwrap()] = Relation::Unary(loops);
    }
    let d1 = Database::from_relations(sigma1.schema().clone(), db.constants().clone(), relations)
        .expect("self-loop encoding preserves well-formedness");
    (sigma1, d1)
}

/// Self-loop-free symmetric digraph with vertex and edge labels. Vertices are
/// the constant ids `0..n`; labels are interned and numbered in sorted order.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    n: usize,
    vertex_label: Vec<u32>,
    vertex_labels: Vec<Vec<RelId>>,
    offsets: Vec<usize>,
    targets: Vec<ConstId>,
    edge_label: Vec<u32>,
    labels: Vec<EdgeLabel>,
    dual: Vec<u32>,
}

/// Build the labeled graph of a loop-encoded database over `sigma1`.
pub fn build_labeled_graph(sigma1: &Sigma1, d1: &Database, mode: ExecMode) -> LabeledGraph {
    let n = d1.constants().len();
    let schema = sigma1.schema();

    let mut arcs: Vec<(ConstId, ConstId, u32)> = Vec::new();
    for rel in schema.binary_ids() {
        for &(a, b) in d1.relation(rel).binary() {
            if a != b {
                arcs.push((a, b, LabelAtom::forward(rel).code()));
                arcs.push((b, a, LabelAtom::backward(rel).code()));
            }
        }
    }
    exec::sort_unstable(mode, &mut arcs);

    // Group arcs sharing (source, target) into one labeled edge.
    let mut edges: Vec<(ConstId, ConstId, std::ops::Range<usize>)> = Vec::new();
    let mut i = 0;
    while i < arcs.len() {
        let (a, b, _) = arcs[i];
        let mut j = i + 1;
        while j < arcs.len() && arcs[j].0 == a && arcs[j].1 == b {
            j += 1;
        }
        edges.push((a, b, i..j));
        i = j;
    }
    let codes = |r: &std::ops::Range<usize>| -> Vec<u32> {
        arcs[r.clone()].iter().map(|t| t.2).collect()
    };

    let mut label_ids: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    for (_, _, r) in &edges {
        label_ids.entry(codes(r)).or_insert(0);
    }
    for (i, id) in label_ids.values_mut().enumerate() {
        *id = i as u32;
    }
    let labels: Vec<EdgeLabel> = label_ids
        .keys()
        .map(|c| EdgeLabel(c.iter().map(|&x| LabelAtom::from_code(x)).collect()))
        .collect();
    let dual = labels
        .iter()
        .map(|l| {
            let d: Vec<u32> = l.dual().0.iter().map(|a| a.code()).collect();
            label_ids[&d]
        })
        .collect();

    let mut offsets = vec![0usize; n + 1];
    let mut targets = Vec::with_capacity(edges.len());
    let mut edge_label = Vec::with_capacity(edges.len());
    for (a, b, r) in &edges {
        offsets[*a as usize + 1] += 1;
        targets.push(*b);
        edge_label.push(label_ids[&codes(r)]);
    }
    for v in 0..n {
        offsets[v + 1] += offsets[v];
    }

    let mut unary_of: Vec<Vec<RelId>> = vec![Vec::new(); n];
    for rel in schema.unary_ids() {
        for &a in d1.relation(rel).unary() {
            unary_of[a as usize].push(rel);
        }
    }
    let mut vl_ids: BTreeMap<Vec<RelId>, u32> = BTreeMap::new();
    for l in &unary_of {
        vl_ids.entry(l.clone()).or_insert(0);
    }
    for (i, id) in vl_ids.values_mut().enumerate() {
        *id = i as u32;
    }
    let vertex_label = unary_of.iter().map(|l| vl_ids[l]).collect();
    let vertex_labels = vl_ids.into_keys().collect();

    LabeledGraph {
        n,
        vertex_label,
        vertex_labels,
        offsets,
        targets,
        edge_label,
        labels,
        dual,
    }
}

impl LabeledGraph {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Number of directed edges (each undirected connection counts twice).
    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Outgoing edges of `v` as `(target, label id)`, sorted by target.
    pub fn out_edges(&self, v: ConstId) -> impl Iterator<Item = (ConstId, u32)> + '_ {
        let r = self.offsets[v as usize]..self.offsets[v as usize + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.edge_label[r].iter().copied())
    }

    pub fn out_degree(&self, v: ConstId) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    /// Label of the edge `(v, w)`, if present.
    pub fn edge_label(&self, v: ConstId, w: ConstId) -> Option<u32> {
        let r = self.offsets[v as usize]..self.offsets[v as usize + 1];
        let slice = &self.targets[r.clone()];
        slice
            .binary_search(&w)
            .ok()
            .map(|i| self.edge_label[r.start + i])
    }

    /// Interned vertex label id of `v`.
    pub fn vertex_label_id(&self, v: ConstId) -> u32 {
        self.vertex_label[v as usize]
    }

    /// Unary symbols holding `v`, sorted.
    pub fn vertex_label(&self, v: ConstId) -> &[RelId] {
        &self.vertex_labels[self.vertex_label[v as usize] as usize]
    }

    pub fn vertex_label_count(&self) -> usize {
        self.vertex_labels.len()
    }

    pub fn vertex_labels(&self) -> &[Vec<RelId>] {
        &self.vertex_labels
    }

    pub fn labels(&self) -> &[EdgeLabel] {
        &self.labels
    }

    pub fn label(&self, id: u32) -> &EdgeLabel {
        &self.labels[id as usize]
    }

    pub fn label_id(&self, label: &EdgeLabel) -> Option<u32> {
        self.labels.binary_search(label).ok().map(|i| i as u32)
    }

    pub fn dual(&self, id: u32) -> u32 {
        self.dual[id as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_database;

    fn movies() -> Database {
        load_database(
            "P(PS,LM)\nP(PS,MM)\nA(LM,PS)\nA(MM,PS)\nM(LM,Dr.S)\nM(MM,Dr.S)\nS(LM,18m)\nS(MM,34m)\n",
            None,
        )
        .unwrap()
    }

    fn check_invariants(g: &LabeledGraph) {
        for v in 0..g.vertex_count() as ConstId {
            for (w, l) in g.out_edges(v) {
                assert_ne!(v, w);
                let back = g.edge_label(w, v).expect("symmetric");
                assert_eq!(g.label(back), &g.label(l).dual());
                assert_eq!(g.dual(l), back);
            }
        }
    }

    #[test]
    fn running_example_graph() {
        let db = movies();
        let (sigma1, d1) = encode_self_loops(&db);
        assert_eq!(sigma1.schema().len(), 8);
        assert_eq!(d1.size(), 8);
        for rel in 0..4 {
            let s = sigma1.loop_symbol(rel).unwrap();
            assert!(d1.relation(s).is_empty());
            assert_eq!(sigma1.schema().name(s), format!("S_{}", db.schema().name(rel)));
        }
        let g = build_labeled_graph(&sigma1, &d1, ExecMode::Sequential);
        assert_eq!(g.vertex_count(), 6);
        assert_eq!(g.vertex_label_count(), 1);
        assert!(g.vertex_label(0).is_empty());
        let ps = db.constants().id("PS").unwrap();
        let lm = db.constants().id("LM").unwrap();
        let l = g.label(g.edge_label(ps, lm).unwrap());
        let (p, a) = (0, 1);
        assert_eq!(l.display(db.schema()).to_string(), "{(P,+),(A,-)}");
        assert_eq!(
            l,
            &EdgeLabel::new([LabelAtom::forward(p), LabelAtom::backward(a)]).unwrap()
        );
        assert_eq!(g.labels().len(), 6);
        check_invariants(&g);
    }

    #[test]
    fn self_loops_become_unary() {
        let db = load_database("R(a,a)\nR(a,b)\n", None).unwrap();
        let (sigma1, d1) = encode_self_loops(&db);
        let s = sigma1.loop_symbol(0).unwrap();
        assert_eq!(d1.relation(s).unary(), &[0]);
        assert_eq!(d1.relation(0).len(), 2);
        let g = build_labeled_graph(&sigma1, &d1, ExecMode::Parallel);
        assert_eq!(g.vertex_label(0), &[s]);
        assert!(g.vertex_label(1).is_empty());
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn cycle_graph_labels() {
        let db = crate::gen::cycle_database(5);
        let (sigma1, d1) = encode_self_loops(&db);
        assert_eq!(d1.size(), db.size());
        let g = build_labeled_graph(&sigma1, &d1, ExecMode::Sequential);
        let fwd = EdgeLabel::new([LabelAtom::forward(0)]).unwrap();
        for i in 0..5u32 {
            let j = (i + 1) % 5;
            assert_eq!(g.label(g.edge_label(i, j).unwrap()), &fwd);
            assert_eq!(g.label(g.edge_label(j, i).unwrap()), &fwd.dual());
        }
        check_invariants(&g);
    }

    #[test]
    fn unary_only_database_is_edgeless() {
        let db = load_database("U(a)\nV(a)\nU(b)\nW(c)\n", None).unwrap();
        let (sigma1, d1) = encode_self_loops(&db);
        let g = build_labeled_graph(&sigma1, &d1, ExecMode::Sequential);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.vertex_label(0), &[0, 1]);
        assert_eq!(g.vertex_label(1), &[0]);
        assert_eq!(g.vertex_label(2), &[2]);
    }

    #[test]
    fn fresh_loop_names_avoid_collisions() {
        let schema = Schema::new([("R", 2), ("S_R", 1)]).unwrap();
        let sigma1 = Sigma1::new(&schema);
        let s = sigma1.loop_symbol(0).unwrap();
        assert_eq!(sigma1.schema().name(s), "S_R_1");
    }

    #[test]
    fn dual_is_involution_and_subsets() {
        let l = EdgeLabel::new([LabelAtom::forward(2), LabelAtom::backward(0)]).unwrap();
        assert_eq!(l.dual().dual(), l);
        assert_eq!(l.nonempty_subsets().len(), 3);
        for s in l.nonempty_subsets() {
            assert!(s.is_subset_of(&l));
        }
        assert!(!l.is_subset_of(&EdgeLabel::new([LabelAtom::forward(2)]).unwrap()));
    }
}
