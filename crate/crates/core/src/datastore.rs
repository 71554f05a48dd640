//! In-memory database of ground atoms and entity features, loaded from a
//! directory of tab-separated files.
//!
//! Layout, one file per relation or entity type:
//!
//! * `<Predicate>.tsv`: one ground atom per line, columns separated by `\t`.
//!   Open relations may add a trailing `0`/`1` gold column. `#` starts a
//!   comment line.
//! * `<EntityType>.feat`: the constant followed by its dense feature values,
//!   space separated.
//! * `<EntityType>.vocab`: one constant per line; the line number is the
//!   embedding index.
//!
//! Constants are interned after all files are read, in sorted order, so
//! symbol order equals string order and query results never depend on the
//! row order of the input files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::{Atom, CheckedProgram, EntityKind, Term};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing data file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: expected {expected} columns, found {found}")]
    ArityError { file: PathBuf, line: usize, expected: String, found: usize },
    #[error("{file}:{line}: unknown {entity} constant `{constant}`")]
    UnknownConstant { file: PathBuf, line: usize, entity: String, constant: String },
    #[error("{file}:{line}: expected {expected} feature values, found {found}")]
    DimensionError { file: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{file}:{line}: bad value `{value}`")]
    BadValue { file: PathBuf, line: usize, value: String },
    #[error("{file}:{line}: duplicate atom")]
    DuplicateAtom { file: PathBuf, line: usize },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Interned constant. Ordering agrees with the string ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym(pub u32);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundAtomTable {
    pub predicate: String,
    pub open: bool,
    /// Sorted, distinct.
    rows: Vec<Vec<Sym>>,
    /// Parallel to `rows`; always `None` for closed relations.
    gold: Vec<Option<bool>>,
    index: HashMap<Vec<Sym>, usize>,
}

impl GroundAtomTable {
    pub fn rows(&self) -> &[Vec<Sym>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: &[Sym]) -> bool {
        self.index.contains_key(row)
    }

    pub fn position(&self, row: &[Sym]) -> Option<usize> {
        self.index.get(row).copied()
    }

    pub fn gold(&self, row: &[Sym]) -> Option<bool> {
        self.position(row).and_then(|i| self.gold[i])
    }

    pub fn gold_count(&self) -> usize {
        self.gold.iter().filter(|g| g.is_some()).count()
    }

    /// Rows agreeing with every `Some` entry of `pattern`, in sorted order.
    pub fn matching<'a>(&'a self, pattern: &'a [Option<Sym>]) -> impl Iterator<Item = &'a [Sym]> + 'a {
        self.rows
            .iter()
            .filter(move |row| pattern.iter().zip(row.iter()).all(|(p, v)| p.is_none_or(|p| p == *v)))
            .map(|r| r.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureStore {
    /// Attributed types: constant -> dense vector.
    pub dense: BTreeMap<String, DenseFeatures>,
    /// Symbolic types: vocabulary in index order.
    pub vocab: BTreeMap<String, Vocabulary>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseFeatures {
    pub dim: usize,
    pub vectors: HashMap<Sym, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    pub items: Vec<Sym>,
    pub index: HashMap<Sym, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A complete or partial variable binding, keyed by variable name.
pub type Binding = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Datastore {
    symbols: Vec<String>,
    lookup: HashMap<String, Sym>,
    tables: BTreeMap<String, GroundAtomTable>,
    pub features: FeatureStore,
}

struct RawRow {
    line: usize,
    cols: Vec<String>,
    gold: Option<bool>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect())
}

impl Datastore {
    /// Loads every relation and feature file the program needs from `dir`.
    pub fn load(dir: &Path, program: &CheckedProgram) -> Result<Datastore, DataError> {
        let mut raw_tables: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
        let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
        for schema in program.predicates.values() {
            let path = dir.join(format!("{}.tsv", schema.predicate));
            if !path.exists() {
                if schema.open {
                    raw_tables.insert(schema.predicate.clone(), Vec::new());
                    files.insert(schema.predicate.clone(), path);
                    continue;
                }
                return Err(DataError::MissingFile(path));
            }
            let k = schema.arity();
            let mut rows = Vec::new();
            for (line, text) in read_lines(&path)? {
                let mut cols: Vec<String> = text.split('\t').map(|c| c.trim().to_string()).collect();
                let gold = if schema.open && cols.len() == k + 1 {
                    match cols.pop().as_deref() {
                        Some("0") => Some(false),
                        Some("1") => Some(true),
                        Some(other) => {
                            return Err(DataError::BadValue { file: path.clone(), line, value: other.to_string() })
                        }
                        None => None,
                    }
                } else {
                    None
                };
                if cols.len() != k {
                    let expected = if schema.open { format!("{} or {}", k, k + 1) } else { k.to_string() };
                    return Err(DataError::ArityError { file: path.clone(), line, expected, found: cols.len() });
                }
                rows.push(RawRow { line, cols, gold });
            }
            raw_tables.insert(schema.predicate.clone(), rows);
            files.insert(schema.predicate.clone(), path);
        }

        type FeatureRows = Vec<(usize, String, Vec<f64>)>;
        let mut raw_dense: BTreeMap<String, (PathBuf, usize, FeatureRows)> = BTreeMap::new();
        let mut raw_vocab: BTreeMap<String, (PathBuf, Vec<(usize, String)>)> = BTreeMap::new();
        for ent in program.entities.values() {
            match ent.kind {
                EntityKind::Attributed { dim } => {
                    let path = dir.join(format!("{}.feat", ent.name));
                    let mut rows = Vec::new();
                    if path.exists() {
                        for (line, text) in read_lines(&path)? {
                            let mut parts = text.split_whitespace();
                            let name = parts.next().unwrap_or_default().to_string();
                            let mut values = Vec::new();
                            for p in parts {
                                let v: f64 = p
                                    .parse()
                                    .ok()
                                    .filter(|v: &f64| v.is_finite())
                                    .ok_or_else(|| DataError::BadValue { file: path.clone(), line, value: p.into() })?;
                                values.push(v);
                            }
                            if values.len() != dim {
                                return Err(DataError::DimensionError {
                                    file: path.clone(),
                                    line,
                                    expected: dim,
                                    found: values.len(),
                                });
                            }
                            rows.push((line, name, values));
                        }
                    }
                    raw_dense.insert(ent.name.clone(), (path, dim, rows));
                }
                EntityKind::Symbolic { vocab_file } => {
                    let path = dir.join(format!("{}.vocab", ent.name));
                    if vocab_file || path.exists() {
                        if !path.exists() {
                            return Err(DataError::MissingFile(path));
                        }
                        let rows = read_lines(&path)?.into_iter().map(|(l, s)| (l, s.trim().to_string())).collect();
                        raw_vocab.insert(ent.name.clone(), (path, rows));
                    }
                }
            }
        }

        // Intern in sorted order.
        let mut all: BTreeSet<&str> = BTreeSet::new();
        for rows in raw_tables.values() {
            for r in rows {
                all.extend(r.cols.iter().map(String::as_str));
            }
        }
        for (_, _, rows) in raw_dense.values() {
            all.extend(rows.iter().map(|r| r.1.as_str()));
        }
        for (_, rows) in raw_vocab.values() {
            all.extend(rows.iter().map(|r| r.1.as_str()));
        }
        let symbols: Vec<String> = all.into_iter().map(str::to_string).collect();
        let lookup: HashMap<String, Sym> =
            symbols.iter().enumerate().map(|(i, s)| (s.clone(), Sym(i as u32))).collect();

        let mut store = Datastore { symbols, lookup, tables: BTreeMap::new(), features: FeatureStore::default() };

        for (name, (path, dim, rows)) in raw_dense {
            let mut vectors = HashMap::new();
            for (line, c, v) in rows {
                if vectors.insert(store.lookup[&c], v).is_some() {
                    return Err(DataError::DuplicateAtom { file: path.clone(), line });
                }
            }
            store.features.dense.insert(name, DenseFeatures { dim, vectors });
        }
        for (name, (path, rows)) in raw_vocab {
            let mut vocab = Vocabulary::default();
            for (line, c) in rows {
                let s = store.lookup[&c];
                if vocab.index.insert(s, vocab.items.len()).is_some() {
                    return Err(DataError::DuplicateAtom { file: path.clone(), line });
                }
                vocab.items.push(s);
            }
            store.features.vocab.insert(name, vocab);
        }

        let mut derived_vocab: BTreeMap<String, BTreeSet<Sym>> = BTreeMap::new();
        for (pred, rows) in raw_tables {
            let schema = &program.predicates[&pred];
            let path = &files[&pred];
            let mut entries: Vec<(Vec<Sym>, Option<bool>, usize)> = Vec::with_capacity(rows.len());
            for r in rows {
                let syms: Vec<Sym> = r.cols.iter().map(|c| store.lookup[c]).collect();
                for (sym, ty) in syms.iter().zip(&schema.arg_types) {
                    match program.entities[ty].kind {
                        EntityKind::Attributed { .. } => {
                            if !store.features.dense[ty].vectors.contains_key(sym) {
                                return Err(DataError::UnknownConstant {
                                    file: path.clone(),
                                    line: r.line,
                                    entity: ty.clone(),
                                    constant: store.name(*sym).to_string(),
                                });
                            }
                        }
                        EntityKind::Symbolic { .. } => match store.features.vocab.get(ty) {
                            Some(v) if !v.index.contains_key(sym) => {
                                return Err(DataError::UnknownConstant {
                                    file: path.clone(),
                                    line: r.line,
                                    entity: ty.clone(),
                                    constant: store.name(*sym).to_string(),
                                });
                            }
                            Some(_) => {}
                            None => {
                                derived_vocab.entry(ty.clone()).or_default().insert(*sym);
                            }
                        },
                    }
                }
                entries.push((syms, r.gold, r.line));
            }
            entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
            let mut table = GroundAtomTable { predicate: pred.clone(), open: schema.open, ..Default::default() };
            for (syms, gold, line) in entries {
                if table.rows.last() == Some(&syms) {
                    if schema.open {
                        return Err(DataError::DuplicateAtom { file: path.clone(), line });
                    }
                    continue;
                }
                table.index.insert(syms.clone(), table.rows.len());
                table.rows.push(syms);
                table.gold.push(gold);
            }
            store.tables.insert(pred, table);
        }

        for ent in program.entities.values() {
            if matches!(ent.kind, EntityKind::Symbolic { .. }) && !store.features.vocab.contains_key(&ent.name) {
                let items: Vec<Sym> = derived_vocab.remove(&ent.name).unwrap_or_default().into_iter().collect();
                let index = items.iter().enumerate().map(|(i, s)| (*s, i)).collect();
                store.features.vocab.insert(ent.name.clone(), Vocabulary { items, index });
            }
        }
        Ok(store)
    }

    pub fn sym(&self, constant: &str) -> Option<Sym> {
        self.lookup.get(constant).copied()
    }

    pub fn name(&self, sym: Sym) -> &str {
        &self.symbols[sym.0 as usize]
    }

    pub fn table(&self, predicate: &str) -> Option<&GroundAtomTable> {
        self.tables.get(predicate)
    }

    pub fn tables(&self) -> impl Iterator<Item = &GroundAtomTable> {
        self.tables.values()
    }

    pub fn dense(&self, entity: &str, sym: Sym) -> Option<&[f64]> {
        self.features.dense.get(entity)?.vectors.get(&sym).map(Vec::as_slice)
    }

    pub fn vocab(&self, entity: &str) -> Option<&Vocabulary> {
        self.features.vocab.get(entity)
    }

    pub fn vocab_index(&self, entity: &str, sym: Sym) -> Option<usize> {
        self.features.vocab.get(entity)?.index.get(&sym).copied()
    }

    /// Every extension of `bindings` that makes `pattern` a row of its
    /// table, in lexicographic row order. Summation variables are treated
    /// like ordinary variables.
    pub fn query(&self, pattern: &Atom, bindings: &Binding) -> Vec<Binding> {
        let Some(table) = self.tables.get(&pattern.predicate) else { return Vec::new() };
        let mut fixed = Vec::with_capacity(pattern.args.len());
        for t in &pattern.args {
            let c = match t {
                Term::Const(c) => Some(c.as_str()),
                Term::Var(v) | Term::SumVar(v) => bindings.get(v).map(String::as_str),
            };
            match c {
                Some(c) => match self.sym(c) {
                    Some(s) => fixed.push(Some(s)),
                    None => return Vec::new(),
                },
                None => fixed.push(None),
            }
        }
        let mut out = Vec::new();
        'rows: for row in table.matching(&fixed) {
            let mut b = bindings.clone();
            for (t, s) in pattern.args.iter().zip(row) {
                if let Some(v) = t.var_name() {
                    let name = self.name(*s);
                    match b.get(v) {
                        Some(prev) if prev != name => continue 'rows,
                        Some(_) => {}
                        None => {
                            b.insert(v.to_string(), name.to_string());
                        }
                    }
                }
            }
            out.push(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::compile;
    use std::fs;

    const PROGRAM: &str = "entity User features=2\nentity Post features=2\nentity Thread\n\
        predicate Author(User, Post)\npredicate InThread(Thread, Post)\npredicate Agree(Post, Post)?\n";

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "User.feat", "u1 1 0\nu2 0 1\n");
        write(dir.path(), "Post.feat", "p1 0.5 -1.0\np2 0 0\np3 1 1\n");
        write(dir.path(), "Author.tsv", "u1\tp1\n");
        write(dir.path(), "InThread.tsv", "# thread membership\nt2\tp3\nt1\tp2\nt1\tp1\n");
        dir
    }

    fn atom(src: &str) -> Atom {
        crate::dsl::parse_rule(&format!("=> {}", src), crate::dsl::RuleKind::Hard)
            .unwrap()
            .head
            .atom()
            .unwrap()
            .clone()
    }

    #[test]
    fn loads_closed_rows_and_features() {
        let prog = compile(PROGRAM).unwrap();
        let dir = fixture();
        let ds = Datastore::load(dir.path(), &prog).unwrap();
        let author = ds.table("Author").unwrap();
        assert_eq!(author.len(), 1);
        let row = [ds.sym("u1").unwrap(), ds.sym("p1").unwrap()];
        assert!(author.contains(&row));
        assert_eq!(ds.dense("Post", ds.sym("p1").unwrap()), Some(&[0.5, -1.0][..]));
        // Agree.tsv missing: open relations may be fully latent
        let agree = ds.table("Agree").unwrap();
        assert!(agree.is_empty());
        assert_eq!(agree.gold_count(), 0);
        // derived vocabulary for the bare symbolic type
        assert_eq!(ds.vocab("Thread").unwrap().len(), 2);
    }

    #[test]
    fn query_selects_and_orders() {
        let prog = compile(PROGRAM).unwrap();
        let dir = fixture();
        let ds = Datastore::load(dir.path(), &prog).unwrap();
        let mut b = Binding::new();
        b.insert("T".into(), "t1".into());
        let res = ds.query(&atom("InThread(T, P)"), &b);
        let ps: Vec<&str> = res.iter().map(|b| b["P"].as_str()).collect();
        assert_eq!(ps, ["p1", "p2"]);

        let res = ds.query(&atom("InThread(\"t1\", \"p2\")"), &Binding::new());
        assert_eq!(res, vec![Binding::new()]);
        assert!(ds.query(&atom("InThread(\"t9\", P)"), &Binding::new()).is_empty());
        // repeated variable
        assert!(ds.query(&atom("Author(X, X)"), &Binding::new()).is_empty());
    }

    #[test]
    fn open_rows_are_candidates_regardless_of_gold() {
        let prog = compile(PROGRAM).unwrap();
        let dir = fixture();
        write(dir.path(), "Agree.tsv", "p1\tp2\t1\np2\tp3\t0\np1\tp3\n");
        let ds = Datastore::load(dir.path(), &prog).unwrap();
        let res = ds.query(&atom("Agree(A, B)"), &Binding::new());
        assert_eq!(res.len(), 3);
        let t = ds.table("Agree").unwrap();
        assert_eq!(t.gold_count(), 2);
        let p = |s| ds.sym(s).unwrap();
        assert_eq!(t.gold(&[p("p1"), p("p2")]), Some(true));
        assert_eq!(t.gold(&[p("p2"), p("p3")]), Some(false));
        assert_eq!(t.gold(&[p("p1"), p("p3")]), None);
    }

    #[test]
    fn errors() {
        let prog = compile(PROGRAM).unwrap();
        let dir = fixture();
        fs::remove_file(dir.path().join("Author.tsv")).unwrap();
        assert!(matches!(Datastore::load(dir.path(), &prog), Err(DataError::MissingFile(_))));

        let dir = fixture();
        write(dir.path(), "Author.tsv", "u1\tp1\t1\n");
        assert!(matches!(Datastore::load(dir.path(), &prog), Err(DataError::ArityError { line: 1, .. })));

        let dir = fixture();
        write(dir.path(), "Author.tsv", "u7\tp1\n");
        assert!(matches!(Datastore::load(dir.path(), &prog), Err(DataError::UnknownConstant { .. })));

        let dir = fixture();
        write(dir.path(), "Post.feat", "p1 0.5\np2 0 0\np3 1 1\n");
        assert!(matches!(
            Datastore::load(dir.path(), &prog),
            Err(DataError::DimensionError { expected: 2, found: 1, .. })
        ));

        let dir = fixture();
        write(dir.path(), "Agree.tsv", "p1\tp2\t1\np1\tp2\t0\n");
        assert!(matches!(Datastore::load(dir.path(), &prog), Err(DataError::DuplicateAtom { .. })));
    }

    #[test]
    fn load_is_idempotent_and_row_order_free() {
        let prog = compile(PROGRAM).unwrap();
        let dir = fixture();
        let a = Datastore::load(dir.path(), &prog).unwrap();
        let b = Datastore::load(dir.path(), &prog).unwrap();
        assert_eq!(a, b);
        write(dir.path(), "InThread.tsv", "t1\tp1\nt2\tp3\nt1\tp2\n");
        let c = Datastore::load(dir.path(), &prog).unwrap();
        assert_eq!(a.table("InThread"), c.table("InThread"));
    }
}
