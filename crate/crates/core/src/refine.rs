//! Coarsest stable colorings of labeled graphs.
//!
//! [`refine`] is a Hopcroft-style partition refinement: cells waiting in a
//! worklist act as splitters, every splitter splits the cells of vertices
//! pointing into it by their per-label edge counts, and a split cell that
//! was not waiting itself enqueues all pieces but the largest one. This
//! keeps the total work at `O((|V|+|E|) log |V|)` up to sorting.
//!
//! [`naive_refine`] is the textbook fixpoint iteration and exists as an
//! oracle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::model::ConstId;

/// A vertex coloring with dense color ids.
///
/// Colorings built through [`Coloring::from_assignment`] are canonical:
/// colors are numbered by the smallest vertex they contain, so two
/// colorings with the same partition compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    color_of: Vec<u32>,
    classes: Vec<Vec<ConstId>>,
}

impl Coloring {
    /// Canonicalize an arbitrary assignment of color values to vertices.
    pub fn from_assignment(assignment: &[u32]) -> Self {
        let mut rename: BTreeMap<u32, u32> = BTreeMap::new();
        let mut classes: Vec<Vec<ConstId>> = Vec::new();
        let mut color_of = Vec::with_capacity(assignment.len());
        for (v, &raw) in assignment.iter().enumerate() {
            let next = rename.len() as u32;
            let c = *rename.entry(raw).or_insert(next);
            if c as usize == classes.len() {
                classes.push(Vec::new());
            }
            classes[c as usize].push(v as ConstId);
            color_of.push(c);
        }
        Coloring { color_of, classes }
    }

    pub fn color(&self, v: ConstId) -> u32 {
        self.color_of[v as usize]
    }

    pub fn colors(&self) -> &[u32] {
        &self.color_of
    }

    /// Vertices of color `c`, sorted.
    pub fn class(&self, c: u32) -> &[ConstId] {
        &self.classes[c as usize]
    }

    pub fn class_size(&self, c: u32) -> usize {
        self.classes[c as usize].len()
    }

    pub fn classes(&self) -> &[Vec<ConstId>] {
        &self.classes
    }

    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.color_of.len()
    }

    /// `true` iff every class of `self` lies inside one class of `other`.
    pub fn refines(&self, other: &Coloring) -> bool {
        self.color_of.len() == other.color_of.len()
            && self.classes.iter().all(|class| {
                let c = other.color(class[0]);
                class.iter().all(|&v| other.color(v) == c)
            })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("coloring covers {found} vertices but the graph has {expected}")]
    MissingVertex { expected: usize, found: usize },
}

/// Result of [`is_stable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// Equal colors but different vertex labels.
    LabelMismatch { v: ConstId, w: ConstId },
    /// Equal colors but `v` and `w` have different numbers of
    /// `label`-successors of color `color`.
    Unbalanced {
        v: ConstId,
        w: ConstId,
        label: u32,
        color: u32,
        v_count: usize,
        w_count: usize,
    },
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Stable)
    }
}

fn signature(g: &LabeledGraph, colors: &[u32], v: ConstId) -> Vec<((u32, u32), usize)> {
    let mut pairs: Vec<(u32, u32)> = g
        .out_edges(v)
        .map(|(w, l)| (l, colors[w as usize]))
        .collect();
    pairs.sort_unstable();
    let mut sig: Vec<((u32, u32), usize)> = Vec::new();
    for p in pairs {
        match sig.last_mut() {
            Some((q, n)) if *q == p => *n += 1,
            _ => sig.push((p, 1)),
        }
    }
    sig
}

/// Check that `col` refines the vertex labels and is stable; on failure
/// return a witness pair.
pub fn is_stable(g: &LabeledGraph, col: &Coloring) -> Result<Stability, RefineError> {
    if col.vertex_count() != g.vertex_count() {
        return Err(RefineError::MissingVertex {
            expected: g.vertex_count(),
            found: col.vertex_count(),
        });
    }
    for class in col.classes() {
        let rep = class[0];
        let rep_sig = signature(g, col.colors(), rep);
        for &w in &class[1..] {
            if g.vertex_label_id(w) != g.vertex_label_id(rep) {
                return Ok(Stability::LabelMismatch { v: rep, w });
            }
            let sig = signature(g, col.colors(), w);
            if sig != rep_sig {
                let count = |s: &[((u32, u32), usize)], k: (u32, u32)| {
                    s.iter().find(|(q, _)| *q == k).map_or(0, |(_, n)| *n)
                };
                let key = rep_sig
                    .iter()
                    .chain(sig.iter())
                    .map(|(k, _)| *k)
                    .find(|&k| count(&rep_sig, k) != count(&sig, k))
                    .expect("signatures differ");
                return Ok(Stability::Unbalanced {
                    v: rep,
                    w,
                    label: key.0,
                    color: key.1,
                    v_count: count(&rep_sig, key),
                    w_count: count(&sig, key),
                });
            }
        }
    }
    Ok(Stability::Stable)
}

/// Fixpoint iteration: split classes by their full `(label, color)` count
/// signature until the number of classes stops growing.
pub fn naive_refine(g: &LabeledGraph) -> Coloring {
    let n = g.vertex_count();
    let mut colors: Vec<u32> = (0..n as ConstId).map(|v| g.vertex_label_id(v)).collect();
    let mut count = Coloring::from_assignment(&colors).num_colors();
    loop {
        let mut keyed: Vec<((u32, Vec<((u32, u32), usize)>), ConstId)> = (0..n as ConstId)
            .map(|v| ((colors[v as usize], signature(g, &colors, v)), v))
            .collect();
        keyed.sort();
        let mut next = vec![0u32; n];
        let mut id = 0u32;
        for i in 0..keyed.len() {
            if i > 0 && keyed[i].0 != keyed[i - 1].0 {
                id += 1;
            }
            next[keyed[i].1 as usize] = id;
        }
        colors = next;
        let new_count = Coloring::from_assignment(&colors).num_colors();
        if new_count == count {
            return Coloring::from_assignment(&colors);
        }
        count = new_count;
    }
}

struct Partition {
    elems: Vec<ConstId>,
    pos: Vec<usize>,
    cell_of: Vec<u32>,
    start: Vec<usize>,
    end: Vec<usize>,
}

impl Partition {
    fn size(&self, cell: u32) -> usize {
        self.end[cell as usize] - self.start[cell as usize]
    }

    fn new_cell(&mut self, start: usize, end: usize) -> u32 {
        let id = self.start.len() as u32;
        self.start.push(start);
        self.end.push(end);
        for i in start..end {
            self.cell_of[self.elems[i] as usize] = id;
        }
        id
    }
}

/// Coarsest stable coloring refining the vertex labels, computed by
/// partition refinement over `(edge label, target cell)` counts.
pub fn refine(g: &LabeledGraph) -> Coloring {
    let n = g.vertex_count();
    if n == 0 {
        return Coloring::from_assignment(&[]);
    }
    let mut elems: Vec<ConstId> = (0..n as ConstId).collect();
    elems.sort_by_key(|&v| (g.vertex_label_id(v), v));
    let mut p = Partition {
        pos: vec![0; n],
        cell_of: vec![0; n],
        start: Vec::new(),
        end: Vec::new(),
        elems,
    };
    for (i, &v) in p.elems.iter().enumerate() {
        p.pos[v as usize] = i;
    }
    let mut i = 0;
    while i < n {
        let label = g.vertex_label_id(p.elems[i]);
        let mut j = i + 1;
        while j < n && g.vertex_label_id(p.elems[j]) == label {
            j += 1;
        }
        p.new_cell(i, j);
        i = j;
    }

    let mut waiting: Vec<bool> = vec![true; p.start.len()];
    let mut worklist: Vec<u32> = (0..p.start.len() as u32).rev().collect();

    let mut arcs: Vec<(u32, ConstId)> = Vec::new();
    let mut runs: Vec<(u32, usize, ConstId)> = Vec::new();

    while let Some(splitter) = worklist.pop() {
        waiting[splitter as usize] = false;
        let (s, e) = (p.start[splitter as usize], p.end[splitter as usize]);

        // (label of v -> w, v) for every w in the splitter; the graph is
        // symmetric so incoming edges are outgoing edges with dual labels.
        arcs.clear();
        for &w in &p.elems[s..e] {
            for (v, l) in g.out_edges(w) {
                arcs.push((g.dual(l), v));
            }
        }
        arcs.sort_unstable();

        let mut a = 0;
        while a < arcs.len() {
            let label = arcs[a].0;
            let mut b = a;
            runs.clear();
            while b < arcs.len() && arcs[b].0 == label {
                let v = arcs[b].1;
                let mut c = b;
                while c < arcs.len() && arcs[c] == (label, v) {
                    c += 1;
                }
                runs.push((p.cell_of[v as usize], c - b, v));
                b = c;
            }
            a = b;
            runs.sort_unstable();

            let mut r = 0;
            while r < runs.len() {
                let cell = runs[r].0;
                let mut t = r;
                while t < runs.len() && runs[t].0 == cell {
                    t += 1;
                }
                split_cell(&mut p, cell, &runs[r..t], &mut waiting, &mut worklist);
                r = t;
            }
        }
    }

    Coloring::from_assignment(&p.cell_of)
}

/// Split `cell` by the counts in `touched` (sorted by count, then vertex).
fn split_cell(
    p: &mut Partition,
    cell: u32,
    touched: &[(u32, usize, ConstId)],
    waiting: &mut Vec<bool>,
    worklist: &mut Vec<u32>,
) {
    let size = p.size(cell);
    let untouched = size - touched.len();
    if untouched == 0 && touched[0].1 == touched[touched.len() - 1].1 {
        return;
    }
    let (s, e) = (p.start[cell as usize], p.end[cell as usize]);

    // Move the touched vertices to the tail of the cell, then order the tail
    // by count.
    let mut boundary = e;
    for &(_, _, v) in touched {
        boundary -= 1;
        let at = p.pos[v as usize];
        let other = p.elems[boundary];
        p.elems.swap(at, boundary);
        p.pos[other as usize] = at;
        p.pos[v as usize] = boundary;
    }
    for (k, &(_, _, v)) in touched.iter().enumerate() {
        p.elems[boundary + k] = v;
        p.pos[v as usize] = boundary + k;
    }

    // Piece boundaries: [s, s+untouched) keeps `cell` if non-empty.
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    if untouched > 0 {
        pieces.push((s, s + untouched));
    }
    let mut k = 0;
    while k < touched.len() {
        let mut m = k + 1;
        while m < touched.len() && touched[m].1 == touched[k].1 {
            m += 1;
        }
        pieces.push((boundary + k, boundary + m));
        k = m;
    }

    p.end[cell as usize] = pieces[0].1;
    let mut ids = vec![cell];
    for &(ps, pe) in &pieces[1..] {
        ids.push(p.new_cell(ps, pe));
        waiting.push(false);
    }

    if waiting[cell as usize] {
        for &id in &ids[1..] {
            waiting[id as usize] = true;
            worklist.push(id);
        }
    } else {
        let largest = (0..ids.len())
            .max_by_key(|&i| (pieces[i].1 - pieces[i].0, usize::MAX - i))
            .unwrap();
        for (i, &id) in ids.iter().enumerate() {
            if i != largest {
                waiting[id as usize] = true;
                worklist.push(id);
            }
        }
    }
}
