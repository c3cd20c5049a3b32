//! The color index: coloring lookups, per-vertex successor segments grouped
//! by target color, per-class successor counts, and the color database.
//!
//! Tables are kept only for the actual edge labels of the graph. Requests for
//! an arbitrary label `λ` resolve to the union (for successor sets) or sum
//! (for counts) over the actual labels containing `λ`; the per-`λ` view is
//! computed once and memoized in a [`HatLabel`].
//!
//! A vertex with self-loops counts as its own successor under the label
//! made of `(R,+)` and `(R,-)` for each of its loops. The graph itself
//! stays loop-free; since that label depends only on the vertex label, the
//! coloring is stable for the extended successor relation as well, and
//! answers mapping adjacent variables to one looped constant are kept.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::graph::{build_labeled_graph, encode_self_loops, EdgeLabel, LabelAtom, LabeledGraph, Sigma1};
use crate::model::{ConstId, Database, Interner, RelId, Relation, Schema};
use crate::refine::{refine, Coloring};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("unknown vertex id {0}")]
    UnknownVertex(ConstId),
    #[error("unknown color id {0}")]
    UnknownColor(u32),
    #[error("edge labels must be non-empty")]
    EmptyLabel,
    #[error("index file is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A run of equally labeled successors inside one `(v, c)` segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub label: u32,
    pub start: u32,
    pub end: u32,
}

/// Resolved view of one (possibly non-actual) edge label.
#[derive(Debug)]
pub struct HatLabel {
    label: EdgeLabel,
    superset: Vec<bool>,
    succ: Vec<Vec<(u32, u64)>>,
    tuples: usize,
}

impl HatLabel {
    pub fn label(&self) -> &EdgeLabel {
        &self.label
    }

    /// Whether actual label `id` contains this label.
    pub fn covers(&self, id: u32) -> bool {
        self.superset[id as usize]
    }

    /// Colors `c'` with a positive count from `c`, with that count; sorted.
    pub fn successors(&self, c: u32) -> &[(u32, u64)] {
        &self.succ[c as usize]
    }

    pub fn count(&self, c: u32, c2: u32) -> u64 {
        let s = &self.succ[c as usize];
        s.binary_search_by_key(&c2, |e| e.0)
            .map_or(0, |i| s[i].1)
    }

    /// Number of color pairs with a positive count.
    pub fn len(&self) -> usize {
        self.tuples
    }

    pub fn is_empty(&self) -> bool {
        self.tuples == 0
    }
}

/// Sizes and build timings of an index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexStats {
    pub db_size: usize,
    pub d1_size: usize,
    pub adom: usize,
    pub colors: usize,
    pub color_db_size: usize,
    pub edge_labels: usize,
    pub vertex_labels: usize,
    pub color_relations: usize,
    pub graph_time: Duration,
    pub refine_time: Duration,
    pub tables_time: Duration,
}

impl IndexStats {
    /// `|D_col| / |D|`, the measured blow-up constant; zero for empty input.
    pub fn k_sigma(&self) -> f64 {
        if self.db_size == 0 {
            0.0
        } else {
            self.color_db_size as f64 / self.db_size as f64
        }
    }
}

#[derive(Debug)]
pub struct ColorIndex {
    db: Database,
    sigma1: Sigma1,
    d1: Database,
    graph: LabeledGraph,
    coloring: Coloring,
    // Actual labels of the graph followed by loop labels not among them.
    labels: Vec<EdgeLabel>,
    seg_targets: Vec<ConstId>,
    runs: Vec<Run>,
    seg_lookup: HashMap<(ConstId, u32), (u32, u32)>,
    // Per color: (target color, actual label, count) for its representative.
    class_counts: Vec<Vec<(u32, u32, u64)>>,
    color_db: Database,
    color_rel: HashMap<EdgeLabel, RelId>,
    unary_rel: Vec<Option<RelId>>,
    memo: RwLock<HashMap<EdgeLabel, Arc<HatLabel>>>,
    stats: IndexStats,
}

impl ColorIndex {
    pub fn build(db: &Database) -> Self {
        Self::build_with(db, ExecMode::default())
    }

    pub fn build_with(db: &Database, mode: ExecMode) -> Self {
        let t = Instant::now();
        let db = db.compact();
        let (sigma1, d1) = encode_self_loops(&db);
        let graph = build_labeled_graph(&sigma1, &d1, mode);
        let graph_time = t.elapsed();
        let t = Instant::now();
        let coloring = refine(&graph);
        let refine_time = t.elapsed();
        let mut idx = Self::assemble(db, sigma1, d1, graph, coloring, mode);
        idx.stats.graph_time = graph_time;
        idx.stats.refine_time = refine_time;
        idx
    }

    fn assemble(
        db: Database,
        sigma1: Sigma1,
        d1: Database,
        graph: LabeledGraph,
        coloring: Coloring,
        mode: ExecMode,
    ) -> Self {
        let t = Instant::now();
        let n = graph.vertex_count();
        let (labels, loop_of) = loop_labels(&sigma1, &graph);

        // Segments: out-edges of each vertex sorted by (color, label, target),
        // plus the vertex itself under its loop label.
        let per_vertex: Vec<Vec<(u32, u32, ConstId)>> = exec::map_range(mode, n, |v| {
            let v = v as ConstId;
            let mut e: Vec<(u32, u32, ConstId)> = graph
                .out_edges(v)
                .map(|(w, l)| (coloring.color(w), l, w))
                .collect();
            if let Some(l) = loop_of[graph.vertex_label_id(v) as usize] {
                e.push((coloring.color(v), l, v));
            }
            e.sort_unstable();
            e
        });
        let mut seg_targets = Vec::with_capacity(per_vertex.iter().map(Vec::len).sum());
        let mut runs: Vec<Run> = Vec::new();
        let mut seg_lookup = HashMap::with_capacity(graph.edge_count());
        for (v, edges) in per_vertex.iter().enumerate() {
            let base = seg_targets.len();
            seg_targets.extend(edges.iter().map(|e| e.2));
            let mut i = 0;
            while i < edges.len() {
                let c = edges[i].0;
                let run_lo = runs.len() as u32;
                while i < edges.len() && edges[i].0 == c {
                    let l = edges[i].1;
                    let start = i;
                    while i < edges.len() && edges[i].0 == c && edges[i].1 == l {
                        i += 1;
                    }
                    runs.push(Run {
                        label: l,
                        start: (base + start) as u32,
                        end: (base + i) as u32,
                    });
                }
                seg_lookup.insert((v as ConstId, c), (run_lo, runs.len() as u32));
            }
        }

        // Per-class counts from one representative each.
        let class_counts: Vec<Vec<(u32, u32, u64)>> =
            exec::map_range(mode, coloring.num_colors(), |c| {
                let rep = coloring.class(c as u32)[0];
                let edges = &per_vertex[rep as usize];
                let mut out: Vec<(u32, u32, u64)> = Vec::new();
                for &(c2, l, _) in edges {
                    match out.last_mut() {
                        Some(last) if last.0 == c2 && last.1 == l => last.2 += 1,
                        _ => out.push((c2, l, 1)),
                    }
                }
                out
            });
        drop(per_vertex);

        let (color_db, color_rel, unary_rel) =
            build_color_db(&sigma1, &graph, &labels, &coloring, &class_counts, mode);

        let stats = IndexStats {
            db_size: db.size(),
            d1_size: d1.size(),
            adom: db.adom().len(),
            colors: coloring.num_colors(),
            color_db_size: color_db.size(),
            edge_labels: graph.labels().len(),
            vertex_labels: if n == 0 { 0 } else { graph.vertex_label_count() },
            color_relations: color_rel.len(),
            tables_time: t.elapsed(),
            ..IndexStats::default()
        };

        ColorIndex {
            db,
            sigma1,
            d1,
            graph,
            coloring,
            labels,
            seg_targets,
            runs,
            seg_lookup,
            class_counts,
            color_db,
            color_rel,
            unary_rel,
            memo: RwLock::new(HashMap::new()),
            stats,
        }
    }

    /// The input database, restricted to its active domain.
    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn sigma1(&self) -> &Sigma1 {
        &self.sigma1
    }

    pub fn d1(&self) -> &Database {
        &self.d1
    }

    pub fn graph(&self) -> &LabeledGraph {
        &self.graph
    }

    pub fn coloring(&self) -> &Coloring {
        &self.coloring
    }

    pub fn color_db(&self) -> &Database {
        &self.color_db
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn num_colors(&self) -> usize {
        self.coloring.num_colors()
    }

    /// Relation of the color database holding `E_λ`, if `λ` lies in the
    /// downward closure of the actual labels.
    pub fn color_relation(&self, label: &EdgeLabel) -> Option<RelId> {
        self.color_rel.get(label).copied()
    }

    /// Relation of the color database mirroring unary symbol `rel` of σ₁.
    pub fn color_unary(&self, rel: RelId) -> Option<RelId> {
        self.unary_rel.get(rel).copied().flatten()
    }

    /// Unary symbols of σ₁ holding the vertices of color `c`.
    pub fn color_vertex_label(&self, c: u32) -> &[RelId] {
        self.graph.vertex_label(self.coloring.class(c)[0])
    }

    fn check_vertex(&self, v: ConstId) -> Result<(), IndexError> {
        if (v as usize) < self.graph.vertex_count() {
            Ok(())
        } else {
            Err(IndexError::UnknownVertex(v))
        }
    }

    fn check_color(&self, c: u32) -> Result<(), IndexError> {
        if (c as usize) < self.num_colors() {
            Ok(())
        } else {
            Err(IndexError::UnknownColor(c))
        }
    }

    /// Label runs of the `(v, c)` segment: successors of `v` with color `c`,
    /// grouped by actual label.
    pub fn segment_runs(&self, v: ConstId, c: u32) -> &[Run] {
        match self.seg_lookup.get(&(v, c)) {
            Some(&(lo, hi)) => &self.runs[lo as usize..hi as usize],
            None => &[],
        }
    }

    pub fn run_targets(&self, run: &Run) -> &[ConstId] {
        &self.seg_targets[run.start as usize..run.end as usize]
    }

    /// Memoized view of label `λ`. Concurrent first requests may compute the
    /// view twice; the first installed value wins and both are identical.
    pub fn hat_label(&self, label: &EdgeLabel) -> Arc<HatLabel> {
        if let Some(h) = self.memo.read().unwrap().get(label) {
            return h.clone();
        }
        let superset: Vec<bool> = self
            .labels
            .iter()
            .map(|l| label.is_subset_of(l))
            .collect();
        let mut tuples = 0;
        let succ: Vec<Vec<(u32, u64)>> = self
            .class_counts
            .iter()
            .map(|entries| {
                let mut out: Vec<(u32, u64)> = Vec::new();
                for &(c2, l, n) in entries {
                    if !superset[l as usize] {
                        continue;
                    }
                    match out.last_mut() {
                        Some(last) if last.0 == c2 => last.1 += n,
                        _ => out.push((c2, n)),
                    }
                }
                tuples += out.len();
                out
            })
            .collect();
        let hat = Arc::new(HatLabel {
            label: label.clone(),
            superset,
            succ,
            tuples,
        });
        self.memo
            .write()
            .unwrap()
            .entry(label.clone())
            .or_insert(hat)
            .clone()
    }

    /// Number of memoized label views.
    pub fn memo_len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    /// Successors `w` of `v` with `col(w) = c` and `el(v,w) ⊇ λ`, in segment
    /// order. `v` itself is included when its loops cover `λ`.
    pub fn hat_succ_set(
        &self,
        label: &EdgeLabel,
        v: ConstId,
        c: u32,
    ) -> Result<Vec<ConstId>, IndexError> {
        if label.is_empty() {
            return Err(IndexError::EmptyLabel);
        }
        self.check_vertex(v)?;
        self.check_color(c)?;
        let hat = self.hat_label(label);
        Ok(self
            .segment_runs(v, c)
            .iter()
            .filter(|r| hat.covers(r.label))
            .flat_map(|r| self.run_targets(r).iter().copied())
            .collect())
    }

    /// `|N̂^λ(v, c2)|` for any `v` of color `c`.
    pub fn hat_succ_count(&self, label: &EdgeLabel, c: u32, c2: u32) -> Result<u64, IndexError> {
        if label.is_empty() {
            return Err(IndexError::EmptyLabel);
        }
        self.check_color(c)?;
        self.check_color(c2)?;
        Ok(self.hat_label(label).count(c, c2))
    }

    /// Name of color `c` in the color database.
    pub fn color_name(&self, c: u32) -> &str {
        self.color_db.name(c)
    }
}

/// Extend the actual labels with loop labels. Returns the extended list and,
/// per vertex label id, the id of its loop label.
fn loop_labels(sigma1: &Sigma1, graph: &LabeledGraph) -> (Vec<EdgeLabel>, Vec<Option<u32>>) {
    let mut labels = graph.labels().to_vec();
    let mut extra: HashMap<EdgeLabel, u32> = HashMap::new();
    let base = sigma1.base_schema();
    let loop_of = graph
        .vertex_labels()
        .iter()
        .map(|vl| {
            let atoms = base.binary_ids().filter(|&r| {
                sigma1.loop_symbol(r).is_some_and(|s| vl.contains(&s))
            });
            let label = EdgeLabel::new(
                atoms.flat_map(|r| [LabelAtom::forward(r), LabelAtom::backward(r)]),
            )?;
            Some(graph.label_id(&label).unwrap_or_else(|| {
                *extra.entry(label.clone()).or_insert_with(|| {
                    labels.push(label);
                    labels.len() as u32 - 1
                })
            }))
        })
        .collect();
    (labels, loop_of)
}

pub(crate) fn color_rel_name(label: &EdgeLabel, schema: &Schema) -> String {
    format!("E_{{{}}}", label.display(schema))
}

type ColorDbParts = (Database, HashMap<EdgeLabel, RelId>, Vec<Option<RelId>>);

fn build_color_db(
    sigma1: &Sigma1,
    graph: &LabeledGraph,
    labels: &[EdgeLabel],
    coloring: &Coloring,
    class_counts: &[Vec<(u32, u32, u64)>],
    mode: ExecMode,
) -> ColorDbParts {
    let s1 = sigma1.schema();

    // Downward closure of the labels.
    let mut closure: Vec<EdgeLabel> = labels
        .iter()
        .flat_map(|l| l.nonempty_subsets())
        .collect();
    exec::sort_unstable(mode, &mut closure);
    closure.dedup();

    let mut symbols: Vec<(String, usize)> = Vec::new();
    let mut unary_rel = vec![None; s1.len()];
    for rel in s1.unary_ids() {
        unary_rel[rel] = Some(symbols.len());
        symbols.push((s1.name(rel).to_owned(), 1));
    }
    let mut color_rel = HashMap::with_capacity(closure.len());
    for l in &closure {
        color_rel.insert(l.clone(), symbols.len());
        symbols.push((color_rel_name(l, s1), 2));
    }

    let mut relations: Vec<Relation> = symbols
        .iter()
        .map(|(_, a)| Relation::empty(*a))
        .collect();
    for c in 0..coloring.num_colors() as u32 {
        let rep = coloring.class(c)[0];
        for &rel in graph.vertex_label(rep) {
            if let Relation::Unary(t) = &mut relations[unary_rel[rel].unwrap()] {
                t.push(c);
            }
        }
    }
    // Actual label id -> color relations of its non-empty subsets.
    let subset_rels: Vec<Vec<RelId>> = exec::map_slice(mode, labels, |l| {
        l.nonempty_subsets().iter().map(|s| color_rel[s]).collect()
    });
    for (c, entries) in class_counts.iter().enumerate() {
        for &(c2, l, _) in entries {
            for &rel in &subset_rels[l as usize] {
                if let Relation::Binary(t) = &mut relations[rel] {
                    t.push((c as u32, c2));
                }
            }
        }
    }

    let names = (0..coloring.num_colors()).map(|c| format!("c{c}")).collect();
    let schema = if symbols.is_empty() {
        Schema::default()
    } else {
        Schema::new(symbols).expect("color schema names are distinct")
    };
    let db = Database::from_relations(schema, Interner::from_names(names), relations)
        .expect("color database is well-formed");
    (db, color_rel, unary_rel)
}

const MAGIC: &[u8; 4] = b"CIDX";
const VERSION: u32 = 1;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u32(&mut self, x: u32) -> io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn len(&mut self, x: usize) -> io::Result<()> {
        self.u32(x as u32)
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.len(s.len())?;
        self.0.write_all(s.as_bytes())
    }
    fn relations(&mut self, db: &Database) -> io::Result<()> {
        self.len(db.schema().len())?;
        for (id, sym) in db.schema().symbols() {
            self.str(&sym.name)?;
            self.u32(sym.arity as u32)?;
            match db.relation(id) {
                Relation::Unary(t) => {
                    self.len(t.len())?;
                    for &a in t {
                        self.u32(a)?;
                    }
                }
                Relation::Binary(t) => {
                    self.len(t.len())?;
                    for &(a, b) in t {
                        self.u32(a)?;
                        self.u32(b)?;
                    }
                }
            }
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn u32(&mut self) -> Result<u32, IndexError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b).map_err(eof)?;
        Ok(u32::from_le_bytes(b))
    }
    fn len(&mut self, limit: usize) -> Result<usize, IndexError> {
        let n = self.u32()? as usize;
        if n > limit {
            return Err(IndexError::Format(format!("length {n} exceeds {limit}")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, IndexError> {
        let n = self.len(1 << 20)?;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(eof)?;
        String::from_utf8(b).map_err(|_| IndexError::Format("invalid UTF-8".into()))
    }
    fn relations(&mut self, constants: Interner) -> Result<Database, IndexError> {
        let count = self.len(1 << 20)?;
        let mut symbols = Vec::with_capacity(count);
        let mut relations = Vec::with_capacity(count);
        for _ in 0..count {
            let name = self.str()?;
            let arity = self.u32()? as usize;
            let n = self.len(u32::MAX as usize)?;
            let rel = match arity {
                1 => Relation::Unary((0..n).map(|_| self.u32()).collect::<Result<_, _>>()?),
                2 => Relation::Binary(
                    (0..n)
                        .map(|_| Ok((self.u32()?, self.u32()?)))
                        .collect::<Result<_, IndexError>>()?,
                ),
                a => return Err(IndexError::Format(format!("arity {a}"))),
            };
            symbols.push((name, arity));
            relations.push(rel);
        }
        let schema = if symbols.is_empty() {
            Schema::default()
        } else {
            Schema::new(symbols).map_err(|e| IndexError::Format(e.to_string()))?
        };
        Database::from_relations(schema, constants, relations)
            .map_err(|e| IndexError::Format(e.to_string()))
    }
}

fn eof(e: io::Error) -> IndexError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        IndexError::Format("truncated file".into())
    } else {
        IndexError::Io(e)
    }
}

impl ColorIndex {
    /// Write the index: base database, coloring, actual edge labels and the
    /// color database. Memoized label views are not stored.
    pub fn save<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = Out(io::BufWriter::new(w));
        out.0.write_all(MAGIC)?;
        out.u32(VERSION)?;
        out.len(self.db.constants().len())?;
        for name in self.db.constants().names() {
            out.str(name)?;
        }
        out.relations(&self.db)?;
        out.len(self.coloring.vertex_count())?;
        for &c in self.coloring.colors() {
            out.u32(c)?;
        }
        out.len(self.graph.labels().len())?;
        for l in self.graph.labels() {
            out.len(l.len())?;
            for a in l.atoms() {
                out.u32(a.rel as u32)?;
                out.u32((a.dir == crate::graph::Direction::Backward) as u32)?;
            }
        }
        out.len(self.color_db.constants().len())?;
        for name in self.color_db.constants().names() {
            out.str(name)?;
        }
        out.relations(&self.color_db)?;
        out.0.flush()
    }

    /// Read an index written by [`ColorIndex::save`]. The graph and lookup
    /// tables are rebuilt from the stored coloring without refining again;
    /// stored labels and color database are checked against the rebuild.
    pub fn load<R: Read>(r: R) -> Result<Self, IndexError> {
        Self::load_with(r, ExecMode::default())
    }

    pub fn load_with<R: Read>(r: R, mode: ExecMode) -> Result<Self, IndexError> {
        let t = Instant::now();
        let mut input = In(io::BufReader::new(r));
        let mut magic = [0u8; 4];
        input.0.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = input.u32()?;
        if version != VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let read_names = |input: &mut In<_>| -> Result<Interner, IndexError> {
            let n = input.len(u32::MAX as usize)?;
            let names = (0..n).map(|_| input.str()).collect::<Result<Vec<_>, _>>()?;
            Ok(Interner::from_names(names))
        };
        let constants = read_names(&mut input)?;
        let db = input.relations(constants)?;
        if !db.is_compact() {
            return Err(IndexError::Format("constants outside the active domain".into()));
        }
        let n = input.len(u32::MAX as usize)?;
        if n != db.constants().len() {
            return Err(IndexError::Format("coloring size mismatch".into()));
        }
        let colors = (0..n).map(|_| input.u32()).collect::<Result<Vec<_>, _>>()?;
        let n_labels = input.len(u32::MAX as usize)?;
        let mut labels = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            let k = input.len(64)?;
            let mut atoms = Vec::with_capacity(k);
            for _ in 0..k {
                let rel = input.u32()? as RelId;
                let dir = input.u32()?;
                atoms.push(if dir == 0 {
                    LabelAtom::forward(rel)
                } else {
                    LabelAtom::backward(rel)
                });
            }
            labels.push(EdgeLabel::new(atoms).ok_or(IndexError::Format("empty label".into()))?);
        }
        let color_names = read_names(&mut input)?;
        let color_db = input.relations(color_names)?;

        let (sigma1, d1) = encode_self_loops(&db);
        let graph = build_labeled_graph(&sigma1, &d1, mode);
        if graph.labels() != labels.as_slice() {
            return Err(IndexError::Format("edge label table mismatch".into()));
        }
        let coloring = Coloring::from_assignment(&colors);
        if coloring.colors() != colors.as_slice() {
            return Err(IndexError::Format("coloring is not canonical".into()));
        }
        let graph_time = t.elapsed();
        let mut idx = Self::assemble(db, sigma1, d1, graph, coloring, mode);
        if idx.color_db.to_fact_list() != color_db.to_fact_list() {
            return Err(IndexError::Format("color database mismatch".into()));
        }
        idx.stats.graph_time = graph_time;
        Ok(idx)
    }
}
