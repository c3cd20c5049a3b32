//! Query answering on a [`ColorIndex`]: Boolean evaluation, counting and
//! enumeration, all driven by the color database.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::cde::{cde_fc_acq, yannakakis_boolean, Cde, CdeCursor, TreeQuery};
use crate::exec::{self, ExecMode};
use crate::index::{ColorIndex, HatLabel, Run};
use crate::model::{ConstId, RelId};
use crate::plan::{ComponentPlan, QueryPlan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("Boolean evaluation needs a Boolean query, got arity {0}")]
    NotBoolean(usize),
}

fn component_holds(idx: &ColorIndex, comp: &ComponentPlan) -> bool {
    yannakakis_boolean(idx.color_db(), &TreeQuery::color_query(comp, idx))
}

/// Answer a Boolean query: every component must have a match in the color
/// database.
pub fn eval_boolean(idx: &ColorIndex, plan: &QueryPlan) -> Result<bool, EvalError> {
    if !plan.is_boolean() {
        return Err(EvalError::NotBoolean(plan.arity()));
    }
    Ok(plan.components().iter().all(|c| component_holds(idx, c)))
}

fn hat_labels(idx: &ColorIndex, comp: &ComponentPlan) -> Vec<Option<Arc<HatLabel>>> {
    (0..comp.len())
        .map(|i| comp.edge_label(i).map(|l| idx.hat_label(l)))
        .collect()
}

fn is_subset(small: &[RelId], big: &[RelId]) -> bool {
    let mut it = big.iter();
    small.iter().all(|a| it.by_ref().any(|b| b == a))
}

/// Per-color tables of one counting pass.
pub struct CountTables {
    /// `f1[i][c]`: whether class `c` satisfies the unary atoms at position `i`.
    pub f1: Vec<Vec<bool>>,
    /// `f_down[i][c]`: extensions of a vertex of color `c` at position `i`
    /// to the subtree below `i`.
    pub f_down: Vec<Vec<BigUint>>,
}

/// Bottom-up pass over the whole tree of `comp`.
pub fn count_tables(idx: &ColorIndex, comp: &ComponentPlan, mode: ExecMode) -> CountTables {
    let hats = hat_labels(idx, comp);
    let colors = idx.num_colors();
    let len = comp.len();
    let f1: Vec<Vec<bool>> = (0..len)
        .map(|i| {
            (0..colors as u32)
                .map(|c| is_subset(comp.unary(i), idx.color_vertex_label(c)))
                .collect()
        })
        .collect();
    let mut f_down: Vec<Vec<BigUint>> = vec![Vec::new(); len];
    let mut g: Vec<Vec<BigUint>> = vec![Vec::new(); len];
    for i in (0..len).rev() {
        let children = comp.children(i);
        f_down[i] = exec::map_range(mode, colors, |c| {
            if !f1[i][c] {
                return BigUint::zero();
            }
            let mut acc = BigUint::one();
            for &y in children {
                if acc.is_zero() {
                    break;
                }
                acc *= &g[y][c];
            }
            acc
        });
        if let Some(hat) = &hats[i] {
            g[i] = propagate(mode, colors, hat, &f_down[i]);
        }
    }
    CountTables { f1, f_down }
}

/// `g(c) = Σ_{c'} f(c') · #̂^λ(c, c')`.
fn propagate(mode: ExecMode, colors: usize, hat: &HatLabel, f: &[BigUint]) -> Vec<BigUint> {
    exec::map_range(mode, colors, |c| {
        let mut acc = BigUint::zero();
        for &(c2, n) in hat.successors(c as u32) {
            let v = &f[c2 as usize];
            if !v.is_zero() {
                acc += v * n;
            }
        }
        acc
    })
}

fn count_component(idx: &ColorIndex, comp: &ComponentPlan, mode: ExecMode) -> BigUint {
    if comp.is_boolean() {
        return if component_holds(idx, comp) {
            BigUint::one()
        } else {
            BigUint::zero()
        };
    }
    let colors = idx.num_colors();
    let tables = count_tables(idx, comp, mode);
    let root = if comp.is_full() {
        tables.f_down[0].clone()
    } else {
        // Second pass over the free subtree: a free vertex counts once its
        // quantified subtrees can be completed.
        let hats = hat_labels(idx, comp);
        let k = comp.k();
        let mut f_free: Vec<Vec<BigUint>> = vec![Vec::new(); k];
        let mut g_free: Vec<Vec<BigUint>> = vec![Vec::new(); k];
        for i in (0..k).rev() {
            let free_children: Vec<usize> =
                comp.children(i).iter().copied().filter(|&y| y < k).collect();
            let f_down = &tables.f_down[i];
            f_free[i] = exec::map_range(mode, colors, |c| {
                if f_down[c].is_zero() {
                    return BigUint::zero();
                }
                let mut acc = BigUint::one();
                for &y in &free_children {
                    if acc.is_zero() {
                        break;
                    }
                    acc *= &g_free[y][c];
                }
                acc
            });
            if let Some(hat) = &hats[i] {
                g_free[i] = propagate(mode, colors, hat, &f_free[i]);
            }
        }
        f_free.swap_remove(0)
    };
    let coloring = idx.coloring();
    root.iter()
        .enumerate()
        .filter(|(_, f)| !f.is_zero())
        .map(|(c, f)| f * coloring.class_size(c as u32))
        .sum()
}

/// Number of answers, computed on the color level.
pub fn count(idx: &ColorIndex, plan: &QueryPlan) -> BigUint {
    count_with(idx, plan, ExecMode::default())
}

pub fn count_with(idx: &ColorIndex, plan: &QueryPlan, mode: ExecMode) -> BigUint {
    let mut total = BigUint::one();
    for comp in plan.components() {
        let c = count_component(idx, comp, mode);
        if c.is_zero() {
            return c;
        }
        total *= c;
    }
    total
}

/// Count several queries, spreading the queries over threads in parallel
/// mode.
pub fn count_batch(idx: &ColorIndex, plans: &[QueryPlan], mode: ExecMode) -> Vec<BigUint> {
    exec::map_slice(mode, plans, |p| count_with(idx, p, ExecMode::Sequential))
}

#[derive(Debug, Clone, Copy, Default)]
struct Level<'a> {
    runs: &'a [Run],
    run: usize,
    pos: usize,
}

struct ComponentCursor<'a> {
    plan: &'a ComponentPlan,
    hats: Vec<Option<Arc<HatLabel>>>,
    cde: Cde,
    colors: CdeCursor,
    levels: Vec<Level<'a>>,
    values: Vec<ConstId>,
}

impl<'a> ComponentCursor<'a> {
    fn new(idx: &'a ColorIndex, plan: &'a ComponentPlan) -> Self {
        let cde = cde_fc_acq(idx.color_db(), &TreeQuery::color_query(plan, idx));
        let colors = cde.cursor();
        ComponentCursor {
            plan,
            hats: hat_labels(idx, plan),
            cde,
            colors,
            levels: vec![Level::default(); plan.k()],
            values: vec![0; plan.k()],
        }
    }

    fn restart(&mut self) {
        self.colors = self.cde.cursor();
    }

    fn color(&self, i: usize) -> u32 {
        self.colors.values()[i]
    }

    /// Position the cursor of level `i` on its first vertex.
    fn fill(&mut self, idx: &'a ColorIndex, i: usize, steps: &mut u64) {
        *steps += 1;
        if i == 0 {
            let class = idx.coloring().class(self.color(0));
            self.levels[0].pos = 0;
            self.values[0] = class[0];
            return;
        }
        let p = self.plan.parent(i).unwrap();
        let hat = self.hats[i].as_ref().unwrap();
        let runs = idx.segment_runs(self.values[p], self.color(i));
        let mut r = 0;
        while r < runs.len() && !hat.covers(runs[r].label) {
            r += 1;
            *steps += 1;
        }
        debug_assert!(r < runs.len(), "empty successor set during expansion");
        let run = runs[r];
        self.levels[i] = Level {
            runs,
            run: r,
            pos: run.start as usize,
        };
        self.values[i] = idx.run_targets(&run)[0];
    }

    /// Move level `i` to its next vertex, if any.
    fn step(&mut self, idx: &'a ColorIndex, i: usize, steps: &mut u64) -> bool {
        *steps += 1;
        if i == 0 {
            let class = idx.coloring().class(self.color(0));
            let l = &mut self.levels[0];
            if l.pos + 1 < class.len() {
                l.pos += 1;
                self.values[0] = class[l.pos];
                return true;
            }
            return false;
        }
        let hat = self.hats[i].as_ref().unwrap();
        let l = &mut self.levels[i];
        if l.pos + 1 < l.runs[l.run].end as usize {
            l.pos += 1;
        } else {
            let mut r = l.run + 1;
            while r < l.runs.len() && !hat.covers(l.runs[r].label) {
                r += 1;
                *steps += 1;
            }
            if r == l.runs.len() {
                return false;
            }
            l.run = r;
            l.pos = l.runs[r].start as usize;
        }
        let run = l.runs[l.run];
        self.values[i] = idx.run_targets(&run)[l.pos - run.start as usize];
        true
    }

    /// Next answer of this component; `false` once exhausted.
    fn advance(&mut self, idx: &'a ColorIndex, steps: &mut u64, started: bool) -> bool {
        let k = self.plan.k();
        if started {
            let mut i = k;
            while i > 0 {
                i -= 1;
                if self.step(idx, i, steps) {
                    for j in i + 1..k {
                        self.fill(idx, j, steps);
                    }
                    return true;
                }
            }
        }
        if !self.cde.advance(&mut self.colors, steps) {
            return false;
        }
        for j in 0..k {
            self.fill(idx, j, steps);
        }
        true
    }
}

/// Pull-based enumeration of a query's answers in the user's head order.
pub struct Enumeration<'a> {
    idx: &'a ColorIndex,
    arity: usize,
    comps: Vec<ComponentCursor<'a>>,
    holds: bool,
    started: bool,
    done: bool,
    steps: u64,
    tuple: Vec<ConstId>,
}

/// Preprocess `plan` for enumeration.
pub fn enumerate<'a>(idx: &'a ColorIndex, plan: &'a QueryPlan) -> Enumeration<'a> {
    let mut holds = true;
    let mut comps = Vec::new();
    for c in plan.components() {
        if c.is_boolean() {
            holds &= component_holds(idx, c);
        } else {
            comps.push(ComponentCursor::new(idx, c));
        }
    }
    Enumeration {
        idx,
        arity: plan.arity(),
        comps,
        holds,
        started: false,
        done: false,
        steps: 0,
        tuple: vec![0; plan.arity()],
    }
}

impl<'a> Enumeration<'a> {
    /// Total cursor steps so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Color tuple (in traversal order) behind the current answer of
    /// component `i`, counting only components with free variables.
    pub fn color_tuple(&self, i: usize) -> &[u32] {
        self.comps[i].colors.values()
    }

    /// Next answer, or `None` at the end of the enumeration.
    pub fn next_tuple(&mut self) -> Option<&[ConstId]> {
        if self.done {
            return None;
        }
        let idx = self.idx;
        let ok = if !self.started {
            self.started = true;
            self.holds
                && self
                    .comps
                    .iter_mut()
                    .all(|c| c.advance(idx, &mut self.steps, false))
        } else {
            let mut i = self.comps.len();
            loop {
                if i == 0 {
                    break false;
                }
                i -= 1;
                if self.comps[i].advance(idx, &mut self.steps, true) {
                    for c in &mut self.comps[i + 1..] {
                        c.restart();
                        let more = c.advance(idx, &mut self.steps, false);
                        debug_assert!(more);
                    }
                    break true;
                }
            }
        };
        if !ok {
            self.done = true;
            return None;
        }
        for c in &self.comps {
            for (j, &v) in c.values.iter().enumerate() {
                self.tuple[c.plan.user_slot(j)] = v;
            }
        }
        Some(&self.tuple)
    }
}

impl Iterator for Enumeration<'_> {
    type Item = Vec<ConstId>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_tuple().map(<[ConstId]>::to_vec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_database, parse_query, Database};
    use crate::oracle::naive_eval;

    fn movies() -> Database {
        load_database(
            "P(PS,LM)\nP(PS,MM)\nA(LM,PS)\nA(MM,PS)\nM(LM,Dr.S)\nM(MM,Dr.S)\nS(LM,18m)\nS(MM,34m)\n",
            None,
        )
        .unwrap()
    }

    fn plan(idx: &ColorIndex, text: &str) -> QueryPlan {
        QueryPlan::new(&parse_query(text).unwrap(), idx.sigma1()).unwrap()
    }

    fn names(idx: &ColorIndex, plan: &QueryPlan) -> Vec<String> {
        let mut v: Vec<String> = enumerate(idx, plan)
            .map(|t| idx.database().format_tuple(&t))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn running_example_tasks() {
        let idx = ColorIndex::build(&movies());
        let p = plan(&idx, "Ans(x,y) <- P(x,y).");
        assert_eq!(names(&idx, &p), vec!["(PS,LM)", "(PS,MM)"]);
        assert_eq!(count(&idx, &p), BigUint::from(2u32));
        let p = plan(&idx, "Ans(x) <- A(x,y).");
        assert_eq!(names(&idx, &p), vec!["(LM)", "(MM)"]);
        let p = plan(&idx, "Ans(x) <- P(x,y).");
        assert_eq!(count(&idx, &p), BigUint::from(1u32));
        assert_eq!(names(&idx, &p), vec!["(PS)"]);
        let p = plan(&idx, "Ans() <- P(x,y), M(y,z).");
        assert_eq!(eval_boolean(&idx, &p), Ok(true));
        assert_eq!(count(&idx, &p), BigUint::from(1u32));
        assert_eq!(names(&idx, &p), vec!["()"]);
        let p = plan(&idx, "Ans(x) <- P(x,y).");
        assert_eq!(eval_boolean(&idx, &p), Err(EvalError::NotBoolean(1)));
    }

    #[test]
    fn cycle_tasks() {
        let idx = ColorIndex::build(&crate::gen::cycle_database(5));
        let p = plan(&idx, "Ans() <- R(x,y), R(y,x).");
        assert_eq!(eval_boolean(&idx, &p), Ok(false));
        let p = plan(&idx, "Ans(x,y) <- R(x,y).");
        assert_eq!(count(&idx, &p), BigUint::from(5u32));
        assert_eq!(enumerate(&idx, &p).count(), 5);
    }

    #[test]
    fn adjacent_variables_on_one_looped_constant() {
        let db = load_database("R(a,a)\nR(a,b)\nR(b,c)\n", None).unwrap();
        let idx = ColorIndex::build(&db);
        let idb = idx.database();
        for (text, want) in [
            ("Ans(x,y) <- R(x,y).", 3),
            ("Ans(x,y) <- R(x,y), R(y,x).", 1),
            ("Ans(x,y,z) <- R(x,y), R(y,z).", 3),
            ("Ans(x) <- R(x,y), R(y,x).", 1),
        ] {
            let p = plan(&idx, text);
            let got: Vec<String> = enumerate(&idx, &p).map(|t| idb.format_tuple(&t)).collect();
            let oracle = naive_eval(&db, p.query());
            assert_eq!(oracle.len(), want, "{text}");
            let mut sorted = got.clone();
            sorted.sort();
            assert_eq!(sorted, oracle.to_named(&db), "{text}");
            assert_eq!(count(&idx, &p), BigUint::from(want), "{text}");
        }
        let p = plan(&idx, "Ans() <- R(x,y), R(y,x).");
        assert_eq!(eval_boolean(&idx, &p), Ok(true));
    }

    #[test]
    fn empty_database() {
        let idx = ColorIndex::build(&Database::empty(
            crate::model::Schema::new([("R", 2)]).unwrap(),
        ));
        let p = plan(&idx, "Ans(x) <- R(x,y).");
        assert_eq!(enumerate(&idx, &p).count(), 0);
        assert!(count(&idx, &p).is_zero());
        let p = plan(&idx, "Ans() <- R(x,y).");
        assert_eq!(eval_boolean(&idx, &p), Ok(false));
    }

    #[test]
    fn quantified_child_below_free_node() {
        // y must have an S-successor even though only x and y are output.
        let db = load_database("R(a,b)\nR(a,c)\nS(b,d)\nR(e,f)\nS(f,g)\nS(f,h)\n", None).unwrap();
        let idx = ColorIndex::build(&db);
        for text in [
            "Ans(x,y) <- R(x,y), S(y,z).",
            "Ans(x) <- R(x,y), S(y,z).",
            "Ans(y,x) <- R(x,y), S(y,z), S(y,w).",
            "Ans(x,u) <- R(x,y), S(u,w).",
            "Ans(u) <- R(x,y), S(u,w).",
        ] {
            let p = plan(&idx, text);
            let want = naive_eval(&db, p.query());
            assert_eq!(count(&idx, &p), BigUint::from(want.len()), "{text}");
            assert_eq!(names(&idx, &p), want.to_named(&db), "{text}");
        }
    }

    #[test]
    fn modes_agree() {
        let db = crate::gen::random_database(30, 120, 5).unwrap();
        let idx = ColorIndex::build(&db);
        let plans: Vec<QueryPlan> = [
            "Ans(x,y) <- R(x,y), S(y,z).",
            "Ans(x) <- R(x,y), U(y).",
            "Ans(x,y,z) <- R(x,y), R(y,z).",
        ]
        .iter()
        .map(|t| plan(&idx, t))
        .collect();
        let seq = count_batch(&idx, &plans, ExecMode::Sequential);
        let par = count_batch(&idx, &plans, ExecMode::Parallel);
        assert_eq!(seq, par);
        for p in &plans {
            assert_eq!(count_with(&idx, p, ExecMode::Parallel), count_with(&idx, p, ExecMode::Sequential));
        }
    }
}
