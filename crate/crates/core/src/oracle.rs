//! Reference evaluator: backtracking over all valuations, no index.

use std::collections::{BTreeSet, HashMap};

use crate::model::{ConjunctiveQuery, ConstId, Database, Relation, VarId};

/// A set of result tuples of a fixed arity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    arity: usize,
    tuples: BTreeSet<Vec<ConstId>>,
}

impl ResultSet {
    pub fn new(arity: usize) -> Self {
        ResultSet {
            arity,
            tuples: BTreeSet::new(),
        }
    }

    pub fn from_tuples(arity: usize, tuples: impl IntoIterator<Item = Vec<ConstId>>) -> Self {
        let mut r = ResultSet::new(arity);
        for t in tuples {
            r.insert(t);
        }
        r
    }

    /// Insert a tuple; returns `false` if it was already present.
    pub fn insert(&mut self, t: Vec<ConstId>) -> bool {
        assert_eq!(t.len(), self.arity, "tuple arity");
        self.tuples.insert(t)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &[ConstId]) -> bool {
        self.tuples.contains(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<ConstId>> {
        self.tuples.iter()
    }

    /// Tuples rendered as `(a,b,...)` with the database's constant names,
    /// sorted as strings.
    pub fn to_named(&self, db: &Database) -> Vec<String> {
        let mut v: Vec<String> = self.tuples.iter().map(|t| db.format_tuple(t)).collect();
        v.sort();
        v
    }
}

enum Check<'a> {
    Unary(&'a Relation, VarId),
    Binary(&'a Relation, VarId, VarId),
    Never,
}

/// `⟦q⟧(db)` by exhaustive search. Variables are bound in order of
/// decreasing atom count; candidates come from an already-bound neighbor
/// when one exists.
pub fn naive_eval(db: &Database, q: &ConjunctiveQuery) -> ResultSet {
    let n = q.var_count();
    let mut result = ResultSet::new(q.arity());

    let checks: Vec<Check> = q
        .atoms()
        .iter()
        .map(|a| match db.schema().lookup(&a.relation) {
            Some(id) if db.schema().arity(id) == a.args.len() => match a.args[..] {
                [x] => Check::Unary(db.relation(id), x),
                [x, y] => Check::Binary(db.relation(id), x, y),
                _ => Check::Never,
            },
            _ => Check::Never,
        })
        .collect();
    if checks.iter().any(|c| matches!(c, Check::Never)) {
        return result;
    }

    let mut coverage = vec![0usize; n];
    for a in q.atoms() {
        let mut vs = a.args.clone();
        vs.dedup();
        for v in vs {
            coverage[v] += 1;
        }
    }
    let mut order: Vec<VarId> = (0..n).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(coverage[v]), v));
    let mut rank = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }

    // Atoms become checkable once their last variable is bound.
    let mut ready: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, a) in q.atoms().iter().enumerate() {
        let last = a.args.iter().map(|&v| rank[v]).max().unwrap();
        ready[last].push(i);
    }

    // Adjacency per binary atom in both directions.
    let mut fwd: Vec<Option<HashMap<ConstId, Vec<ConstId>>>> = Vec::new();
    let mut bwd: Vec<Option<HashMap<ConstId, Vec<ConstId>>>> = Vec::new();
    for c in &checks {
        if let Check::Binary(r, _, _) = c {
            let mut f: HashMap<ConstId, Vec<ConstId>> = HashMap::new();
            let mut b: HashMap<ConstId, Vec<ConstId>> = HashMap::new();
            for &(x, y) in r.binary() {
                f.entry(x).or_default().push(y);
                b.entry(y).or_default().push(x);
            }
            fwd.push(Some(f));
            bwd.push(Some(b));
        } else {
            fwd.push(None);
            bwd.push(None);
        }
    }

    let mut assign: Vec<Option<ConstId>> = vec![None; n];
    let mut search = Search {
        q,
        checks: &checks,
        order: &order,
        ready: &ready,
        fwd: &fwd,
        bwd: &bwd,
        adom: db.adom(),
        boolean: q.is_boolean(),
        assign: &mut assign,
        result: &mut result,
    };
    search.run(0);
    result
}

struct Search<'a> {
    q: &'a ConjunctiveQuery,
    checks: &'a [Check<'a>],
    order: &'a [VarId],
    ready: &'a [Vec<usize>],
    fwd: &'a [Option<HashMap<ConstId, Vec<ConstId>>>],
    bwd: &'a [Option<HashMap<ConstId, Vec<ConstId>>>],
    adom: &'a [ConstId],
    boolean: bool,
    assign: &'a mut Vec<Option<ConstId>>,
    result: &'a mut ResultSet,
}

impl Search<'_> {
    /// Returns `true` to stop the search.
    fn run(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            let t = self.q.head().iter().map(|&h| self.assign[h].unwrap()).collect();
            self.result.insert(t);
            return self.boolean;
        }
        let x = self.order[depth];
        let candidates = self.candidates(x);
        for a in candidates {
            self.assign[x] = Some(a);
            let ok = self.ready[depth].iter().all(|&i| self.holds(i));
            if ok && self.run(depth + 1) {
                self.assign[x] = None;
                return true;
            }
        }
        self.assign[x] = None;
        false
    }

    fn candidates(&self, x: VarId) -> Vec<ConstId> {
        let mut best: Option<&[ConstId]> = None;
        for (i, c) in self.checks.iter().enumerate() {
            if let Check::Binary(_, s, t) = *c {
                let found = if t == x && s != x {
                    self.assign[s].map(|a| self.fwd[i].as_ref().unwrap().get(&a))
                } else if s == x && t != x {
                    self.assign[t].map(|b| self.bwd[i].as_ref().unwrap().get(&b))
                } else {
                    None
                };
                match found {
                    Some(None) => return Vec::new(),
                    Some(Some(list)) if best.is_none_or(|b| list.len() < b.len()) => {
                        best = Some(list)
                    }
                    _ => {}
                }
            }
        }
        best.unwrap_or(self.adom).to_vec()
    }

    fn holds(&self, i: usize) -> bool {
        match self.checks[i] {
            Check::Unary(r, x) => r.contains_unary(self.assign[x].unwrap()),
            Check::Binary(r, x, y) => {
                r.contains_pair(self.assign[x].unwrap(), self.assign[y].unwrap())
            }
            Check::Never => false,
        }
    }
}

/// `|⟦q⟧(db)|`.
pub fn naive_count(db: &Database, q: &ConjunctiveQuery) -> usize {
    naive_eval(db, q).len()
}
