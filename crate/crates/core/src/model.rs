//! Interned relational data model for binary schemas.
//!
//! Constants are interned to dense `u32` ids when a database is loaded and
//! every downstream structure works on those ids. Relations are sets: tuples
//! are kept sorted and deduplicated.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Dense id of an interned constant.
pub type ConstId = u32;
/// Index of a relation symbol inside its [`Schema`].
pub type RelId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema must contain at least one relation symbol")]
    Empty,
    #[error("relation symbol `{0}` declared twice")]
    Duplicate(String),
    #[error("relation symbol `{name}` has arity {arity}; only arities 1 and 2 are supported")]
    BadArity { name: String, arity: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub arity: u8,
}

/// A binary schema: relation symbols of arity 1 or 2 with distinct names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    symbols: Vec<Symbol>,
    by_name: HashMap<String, RelId>,
}

impl Schema {
    pub fn new<S: Into<String>>(
        symbols: impl IntoIterator<Item = (S, usize)>,
    ) -> Result<Self, SchemaError> {
        let mut schema = Schema::default();
        for (name, arity) in symbols {
            schema.push(name.into(), arity)?;
        }
        if schema.symbols.is_empty() {
            return Err(SchemaError::Empty);
        }
        Ok(schema)
    }

    pub(crate) fn push(&mut self, name: String, arity: usize) -> Result<RelId, SchemaError> {
        if arity == 0 || arity > 2 {
            return Err(SchemaError::BadArity { name, arity });
        }
        if self.by_name.contains_key(&name) {
            return Err(SchemaError::Duplicate(name));
        }
        let id = self.symbols.len();
        self.by_name.insert(name.clone(), id);
        self.symbols.push(Symbol {
            name,
            arity: arity as u8,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: RelId) -> &Symbol {
        &self.symbols[id]
    }

    pub fn name(&self, id: RelId) -> &str {
        &self.symbols[id].name
    }

    pub fn arity(&self, id: RelId) -> usize {
        self.symbols[id].arity as usize
    }

    pub fn lookup(&self, name: &str) -> Option<RelId> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn symbols(&self) -> impl Iterator<Item = (RelId, &Symbol)> {
        self.symbols.iter().enumerate()
    }

    pub fn unary_ids(&self) -> impl Iterator<Item = RelId> + '_ {
        self.symbols().filter(|(_, s)| s.arity == 1).map(|(i, _)| i)
    }

    pub fn binary_ids(&self) -> impl Iterator<Item = RelId> + '_ {
        self.symbols().filter(|(_, s)| s.arity == 2).map(|(i, _)| i)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}/{}", s.name, s.arity)?;
        }
        Ok(())
    }
}

/// Bidirectional constant name table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, ConstId>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> ConstId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as ConstId;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as ConstId))
            .collect();
        Interner { names, ids }
    }

    pub fn id(&self, name: &str) -> Option<ConstId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: ConstId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Tuples of one relation, sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Relation {
    Unary(Vec<ConstId>),
    Binary(Vec<(ConstId, ConstId)>),
}

impl Relation {
    pub fn empty(arity: usize) -> Self {
        if arity == 1 {
            Relation::Unary(Vec::new())
        } else {
            Relation::Binary(Vec::new())
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Relation::Unary(t) => t.len(),
            Relation::Binary(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        match self {
            Relation::Unary(_) => 1,
            Relation::Binary(_) => 2,
        }
    }

    pub fn unary(&self) -> &[ConstId] {
        match self {
            Relation::Unary(t) => t,
            Relation::Binary(_) => &[],
        }
    }

    pub fn binary(&self) -> &[(ConstId, ConstId)] {
        match self {
            Relation::Binary(t) => t,
            Relation::Unary(_) => &[],
        }
    }

    pub fn contains_unary(&self, a: ConstId) -> bool {
        self.unary().binary_search(&a).is_ok()
    }

    pub fn contains_pair(&self, a: ConstId, b: ConstId) -> bool {
        self.binary().binary_search(&(a, b)).is_ok()
    }

    fn normalize(&mut self) {
        match self {
            Relation::Unary(t) => {
                t.sort_unstable();
                t.dedup();
            }
            Relation::Binary(t) => {
                t.sort_unstable();
                t.dedup();
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatabaseError {
    #[error("relation `{name}` has arity {arity} but a tuple of arity {found} was given")]
    ArityMismatch {
        name: String,
        arity: usize,
        found: usize,
    },
    #[error("expected {expected} relations for the schema, got {found}")]
    RelationCount { expected: usize, found: usize },
    #[error("constant id {0} is out of range")]
    UnknownConstant(ConstId),
}

/// An immutable database over a binary schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    schema: Schema,
    constants: Interner,
    relations: Vec<Relation>,
    adom: Vec<ConstId>,
}

impl Database {
    /// Assemble a database from already-interned tuples. Tuples are
    /// normalized to set semantics.
    pub fn from_relations(
        schema: Schema,
        constants: Interner,
        mut relations: Vec<Relation>,
    ) -> Result<Self, DatabaseError> {
        if relations.len() != schema.len() {
            return Err(DatabaseError::RelationCount {
                expected: schema.len(),
                found: relations.len(),
            });
        }
        let n = constants.len() as ConstId;
        let mut seen = vec![false; constants.len()];
        for (id, rel) in relations.iter_mut().enumerate() {
            if rel.arity() != schema.arity(id) {
                return Err(DatabaseError::ArityMismatch {
                    name: schema.name(id).to_owned(),
                    arity: schema.arity(id),
                    found: rel.arity(),
                });
            }
            rel.normalize();
            let mut mark = |a: ConstId| -> Result<(), DatabaseError> {
                if a >= n {
                    return Err(DatabaseError::UnknownConstant(a));
                }
                seen[a as usize] = true;
                Ok(())
            };
            match rel {
                Relation::Unary(t) => t.iter().try_for_each(|&a| mark(a))?,
                Relation::Binary(t) => t.iter().try_for_each(|&(a, b)| {
                    mark(a)?;
                    mark(b)
                })?,
            }
        }
        let adom = (0..n).filter(|&a| seen[a as usize]).collect();
        Ok(Database {
            schema,
            constants,
            relations,
            adom,
        })
    }

    pub fn empty(schema: Schema) -> Self {
        let relations = schema
            .symbols()
            .map(|(_, s)| Relation::empty(s.arity as usize))
            .collect();
        Database {
            schema,
            constants: Interner::default(),
            relations,
            adom: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn constants(&self) -> &Interner {
        &self.constants
    }

    pub fn relation(&self, id: RelId) -> &Relation {
        &self.relations[id]
    }

    pub fn relation_by_name(&self, name: &str) -> Option<&Relation> {
        self.schema.lookup(name).map(|id| &self.relations[id])
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Active domain, sorted by id.
    pub fn adom(&self) -> &[ConstId] {
        &self.adom
    }

    /// Total number of tuples across all relations.
    pub fn size(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    pub fn name(&self, id: ConstId) -> &str {
        self.constants.name(id)
    }

    /// Render a tuple of constant ids as `(a,b,...)`.
    pub fn format_tuple(&self, tuple: &[ConstId]) -> String {
        let mut s = String::from("(");
        for (i, &c) in tuple.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(self.name(c));
        }
        s.push(')');
        s
    }

    /// `true` iff every interned constant occurs in some tuple.
    pub fn is_compact(&self) -> bool {
        self.adom.len() == self.constants.len()
    }

    /// Drop interned constants outside the active domain, renumbering the
    /// remaining ones in id order.
    pub fn compact(&self) -> Database {
        if self.is_compact() {
            return self.clone();
        }
        let mut rename = vec![ConstId::MAX; self.constants.len()];
        for (new, &old) in self.adom.iter().enumerate() {
            rename[old as usize] = new as ConstId;
        }
        let names = self
            .adom
            .iter()
            .map(|&a| self.name(a).to_owned())
            .collect();
        let r = |a: ConstId| rename[a as usize];
        let relations = self
            .relations
            .iter()
            .map(|rel| match rel {
                Relation::Unary(t) => Relation::Unary(t.iter().map(|&a| r(a)).collect()),
                Relation::Binary(t) => {
                    Relation::Binary(t.iter().map(|&(a, b)| (r(a), r(b))).collect())
                }
            })
            .collect();
        Database::from_relations(self.schema.clone(), Interner::from_names(names), relations)
            .expect("renaming preserves well-formedness")
    }

    /// Serialize as a fact list readable by [`load_database`].
    pub fn to_fact_list(&self) -> String {
        let mut out = String::new();
        for (id, rel) in self.relations.iter().enumerate() {
            let name = self.schema.name(id);
            match rel {
                Relation::Unary(t) => {
                    for &a in t {
                        out.push_str(&format!("{}({})\n", name, self.name(a)));
                    }
                }
                Relation::Binary(t) => {
                    for &(a, b) in t {
                        out.push_str(&format!("{}({},{})\n", name, self.name(a), self.name(b)));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoadErrorKind {
    #[error("malformed fact: {0}")]
    Malformed(String),
    #[error("relation `{name}` used with arity {found}, expected {expected}")]
    ArityConflict {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("relation `{name}` has arity {arity}; only arities 1 and 2 are supported")]
    ArityTooLarge { name: String, arity: usize },
    #[error("relation `{0}` is not part of the schema")]
    UnknownSymbol(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct LoadError {
    pub line: usize,
    pub kind: LoadErrorKind,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

pub(crate) fn is_relation_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_name_start(c)) && chars.all(is_name_char)
}

fn is_constant_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| is_name_char(c) || c == '-')
}

fn parse_fact(line: &str) -> Result<(&str, Vec<&str>), String> {
    let open = line
        .find('(')
        .ok_or_else(|| format!("missing `(` in `{line}`"))?;
    let name = line[..open].trim();
    if !is_relation_name(name) {
        return Err(format!("invalid relation name `{name}`"));
    }
    let rest = line[open + 1..].trim_end();
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("missing `)` in `{line}`"))?;
    let args: Vec<&str> = inner.split(',').map(str::trim).collect();
    for a in &args {
        if !is_constant_name(a) {
            return Err(format!("invalid constant `{a}`"));
        }
    }
    Ok((name, args))
}

/// Parse a fact-list document: one `R(a)` or `R(a,b)` per line, `#`
/// comments and blank lines ignored.
///
/// With an explicit schema every symbol must be declared with a matching
/// arity; otherwise the schema is inferred in order of first use.
pub fn load_database(text: &str, schema: Option<&Schema>) -> Result<Database, LoadError> {
    let mut inferred = schema.cloned().unwrap_or_default();
    let fixed = schema.is_some();
    let mut constants = Interner::default();
    let mut tuples: Vec<Vec<Vec<ConstId>>> = vec![Vec::new(); inferred.len()];

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |kind| LoadError { line, kind };
        let (name, args) = parse_fact(content).map_err(|m| err(LoadErrorKind::Malformed(m)))?;
        if args.len() > 2 {
            return Err(err(LoadErrorKind::ArityTooLarge {
                name: name.to_owned(),
                arity: args.len(),
            }));
        }
        let rel = match inferred.lookup(name) {
            Some(id) => {
                let expected = inferred.arity(id);
                if expected != args.len() {
                    return Err(err(LoadErrorKind::ArityConflict {
                        name: name.to_owned(),
                        expected,
                        found: args.len(),
                    }));
                }
                id
            }
            None if fixed => return Err(err(LoadErrorKind::UnknownSymbol(name.to_owned()))),
            None => {
                tuples.push(Vec::new());
                inferred
                    .push(name.to_owned(), args.len())
                    .expect("fresh name with valid arity")
            }
        };
        let ids = args.iter().map(|a| constants.intern(a)).collect();
        tuples[rel].push(ids);
    }

    let relations = tuples
        .into_iter()
        .enumerate()
        .map(|(id, ts)| match inferred.arity(id) {
            1 => Relation::Unary(ts.into_iter().map(|t| t[0]).collect()),
            _ => Relation::Binary(ts.into_iter().map(|t| (t[0], t[1])).collect()),
        })
        .collect();
    Ok(Database::from_relations(inferred, constants, relations)
        .expect("loader produces well-formed relations"))
}

/// Index of a variable inside its query.
pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<VarId>,
}

impl Atom {
    pub fn is_unary(&self) -> bool {
        self.args.len() == 1
    }

    pub fn is_self_loop(&self) -> bool {
        self.args.len() == 2 && self.args[0] == self.args[1]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("query body must contain at least one atom")]
    NoAtoms,
    #[error("head variable `{0}` does not occur in the body")]
    HeadVarNotInBody(String),
    #[error("head variables must be pairwise distinct; `{0}` is repeated")]
    RepeatedHeadVar(String),
    #[error("constants in atoms are not supported (found `{0}`)")]
    ConstantInAtom(String),
    #[error("unknown relation symbol `{0}`")]
    UnknownRelation(String),
    #[error("relation `{name}` used with arity {found}, expected {expected}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
}

/// A conjunctive query `Ans(z1,...,zk) <- a1, ..., ad` over variables only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    vars: Vec<String>,
    head: Vec<VarId>,
    atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    /// Build a query from named parts. Identical atoms are merged; variables
    /// are numbered by first occurrence in the body.
    pub fn new<S: AsRef<str>>(
        head: &[S],
        atoms: &[(S, Vec<S>)],
    ) -> Result<Self, QueryError> {
        if atoms.is_empty() {
            return Err(QueryError::NoAtoms);
        }
        let mut vars: Vec<String> = Vec::new();
        let mut ids: HashMap<String, VarId> = HashMap::new();
        let mut arities: HashMap<&str, usize> = HashMap::new();
        let mut out_atoms = Vec::with_capacity(atoms.len());
        let mut seen = BTreeSet::new();
        for (rel, args) in atoms {
            let rel = rel.as_ref();
            if args.is_empty() || args.len() > 2 {
                return Err(QueryError::ArityMismatch {
                    name: rel.to_owned(),
                    expected: 2,
                    found: args.len(),
                });
            }
            match arities.get(rel) {
                Some(&a) if a != args.len() => {
                    return Err(QueryError::ArityMismatch {
                        name: rel.to_owned(),
                        expected: a,
                        found: args.len(),
                    })
                }
                _ => {
                    arities.insert(rel, args.len());
                }
            }
            let args: Vec<VarId> = args
                .iter()
                .map(|a| {
                    let a = a.as_ref();
                    *ids.entry(a.to_owned()).or_insert_with(|| {
                        vars.push(a.to_owned());
                        vars.len() - 1
                    })
                })
                .collect();
            let atom = Atom {
                relation: rel.to_owned(),
                args,
            };
            if seen.insert(atom.clone()) {
                out_atoms.push(atom);
            }
        }
        let mut head_ids = Vec::with_capacity(head.len());
        for h in head {
            let h = h.as_ref();
            let id = *ids
                .get(h)
                .ok_or_else(|| QueryError::HeadVarNotInBody(h.to_owned()))?;
            if head_ids.contains(&id) {
                return Err(QueryError::RepeatedHeadVar(h.to_owned()));
            }
            head_ids.push(id);
        }
        Ok(ConjunctiveQuery {
            vars,
            head: head_ids,
            atoms: out_atoms,
        })
    }

    pub(crate) fn from_parts(vars: Vec<String>, head: Vec<VarId>, atoms: Vec<Atom>) -> Self {
        let mut seen = BTreeSet::new();
        let atoms = atoms.into_iter().filter(|a| seen.insert(a.clone())).collect();
        ConjunctiveQuery { vars, head, atoms }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn head(&self) -> &[VarId] {
        &self.head
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn arity(&self) -> usize {
        self.head.len()
    }

    pub fn is_boolean(&self) -> bool {
        self.head.is_empty()
    }

    pub fn is_free(&self, v: VarId) -> bool {
        self.head.contains(&v)
    }

    /// Number of atoms, the query size.
    pub fn size(&self) -> usize {
        self.atoms.len()
    }

    /// Check every atom against a schema.
    pub fn check_schema(&self, schema: &Schema) -> Result<(), QueryError> {
        for atom in &self.atoms {
            let id = schema
                .lookup(&atom.relation)
                .ok_or_else(|| QueryError::UnknownRelation(atom.relation.clone()))?;
            if schema.arity(id) != atom.args.len() {
                return Err(QueryError::ArityMismatch {
                    name: atom.relation.clone(),
                    expected: schema.arity(id),
                    found: atom.args.len(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Ans(")?;
        for (i, &h) in self.head.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(&self.vars[h])?;
        }
        f.write_str(") <- ")?;
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}(", atom.relation)?;
            for (j, &a) in atom.args.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                f.write_str(&self.vars[a])?;
            }
            f.write_str(")")?;
        }
        f.write_str(".")
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, s: &str) -> Result<(), QueryError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            self.error(format!("expected `{s}`"))
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn relation_name(&mut self) -> Result<&'a str, QueryError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(if i == 0 { is_name_start(c) } else { is_name_char(c) }))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.error("expected a relation name");
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    /// A term: maximal run of characters other than separators.
    fn term(&mut self) -> Result<&'a str, QueryError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .find(|&(_, c)| c == ',' || c == '(' || c == ')' || c.is_whitespace())
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.error("expected a variable");
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    fn term_list(&mut self) -> Result<Vec<&'a str>, QueryError> {
        self.expect("(")?;
        let mut terms = Vec::new();
        if self.eat(")") {
            return Ok(terms);
        }
        loop {
            terms.push(self.term()?);
            if self.eat(")") {
                return Ok(terms);
            }
            self.expect(",")?;
        }
    }
}

fn is_variable(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse `Ans(v1,...,vk) <- A1, ..., Ad.` (`:-` is accepted for `<-`, the
/// final period is optional). Variables are lowercase identifiers.
pub fn parse_query(text: &str) -> Result<ConjunctiveQuery, QueryError> {
    let mut lx = Lexer { src: text, pos: 0 };
    lx.relation_name()?;
    let head = lx.term_list()?;
    for h in &head {
        if !is_variable(h) {
            return lx.error(format!("head term `{h}` is not a variable"));
        }
    }
    if !lx.eat("<-") && !lx.eat(":-") {
        return lx.error("expected `<-`");
    }
    let mut atoms: Vec<(&str, Vec<&str>)> = Vec::new();
    loop {
        let rel = lx.relation_name()?;
        let args = lx.term_list()?;
        if let Some(c) = args.iter().find(|a| !is_variable(a)) {
            return Err(QueryError::ConstantInAtom((*c).to_owned()));
        }
        atoms.push((rel, args));
        if !lx.eat(",") {
            break;
        }
    }
    lx.eat(".");
    if lx.peek().is_some() {
        return lx.error("unexpected trailing input");
    }
    ConjunctiveQuery::new(&head, &atoms)
}
