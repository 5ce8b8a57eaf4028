//! Shared plumbing: exit-code mapping, argument parsers, input loading and
//! output writing.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use ftfi::graph::{load_edge_list, minimum_spanning_tree};
use ftfi::{ErrorKind, FtfiError, ScalarMap, TensorField, WeightedGraph, WeightedTree};

/// Version stamped into every JSON and CSV output.
pub const SCHEMA_VERSION: u32 = 1;

pub const F_SPEC_HELP: &str = "\
Scalar map f applied to tree distances. Grammar:
  poly:a0,a1,...         a0 + a1 z + ... (degree <= 16)
  exp:l                  exp(l z)
  exppoly:l;a0,a1,...    exp(l z) (a0 + a1 z + ...)
  trig:cos[,w]           cos(w z), w defaults to 1 (also trig:sin)
  rat:a0,.../b0,...      (a0 + a1 z + ...) / (b0 + b1 z + ...)
  expoverlin:l,c         exp(l z) / (z + c)
  expquad:u,v,w          exp(u z^2 + v z + w)
  gauss:s                exp(-z^2 / (2 s^2))";

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub const PARSE: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const NUMERIC: i32 = 4;

    pub fn parse(msg: impl Into<String>) -> Self {
        Failure { code: Self::PARSE, msg: msg.into() }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Failure { code: Self::PRECONDITION, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<FtfiError> for Failure {
    fn from(e: FtfiError) -> Self {
        let code = match e.kind() {
            ErrorKind::Parse | ErrorKind::Io => Failure::PARSE,
            ErrorKind::Precondition => Failure::PRECONDITION,
            ErrorKind::Numeric => Failure::NUMERIC,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::parse(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::parse(format!("invalid JSON: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn parse_f(s: &str) -> Result<ScalarMap, String> {
    s.parse().map_err(|e: FtfiError| e.to_string())
}

/// `"a,b"` as a pair of numbers.
pub fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    Ok((a, b))
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct TreeInput {
    /// Edge list (`u v w` per line) that must form a tree.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Edge list of a connected graph; its minimum spanning tree is used.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

pub struct LoadedInput {
    /// Present when the input was a graph.
    pub graph: Option<WeightedGraph>,
    pub tree: WeightedTree,
}

impl TreeInput {
    pub fn load(&self) -> CliResult<LoadedInput> {
        match (&self.tree, &self.graph) {
            (Some(path), _) => {
                let g = load_edge_list(path).map_err(|e| Failure::from(e).context(path))?;
                Ok(LoadedInput { graph: None, tree: g.to_tree()? })
            }
            (None, Some(path)) => {
                let g = load_edge_list(path).map_err(|e| Failure::from(e).context(path))?;
                let tree = minimum_spanning_tree(&g)?;
                Ok(LoadedInput { graph: Some(g), tree })
            }
            (None, None) => unreachable!("clap enforces the input group"),
        }
    }
}

/// Reads a field CSV: `vertex,x_0,...,x_{D-1}` rows in any order, one per
/// vertex. Lines starting with `#` and a header starting with `vertex` are
/// skipped.
pub fn read_field(path: &Path, n: usize) -> CliResult<TensorField> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(path))?;
    let mut width = None;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("vertex") {
            continue;
        }
        let err = |msg: String| Failure::parse(format!("{}:{}: {msg}", path.display(), idx + 1));
        let mut fields = line.split(',').map(str::trim);
        let id = fields.next().unwrap_or("");
        let v: usize = id.parse().map_err(|_| err(format!("bad vertex id {id:?}")))?;
        let values = fields
            .map(|x| x.parse::<f64>().map_err(|_| err(format!("bad value {x:?}"))))
            .collect::<CliResult<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(err("row has no values".into()));
        }
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(err(format!("expected {} values, found {}", width.unwrap(), values.len())));
        }
        if v >= n {
            return Err(Failure::precondition(format!("field row for vertex {v}, but the tree has {n} vertices")));
        }
        if rows[v].replace(values).is_some() {
            return Err(err(format!("vertex {v} appears twice")));
        }
    }
    if let Some(missing) = rows.iter().position(Option::is_none) {
        return Err(Failure::precondition(format!("field has no row for vertex {missing}")));
    }
    let width = width.unwrap_or(1);
    Ok(TensorField::from_rows(n, width, rows.into_iter().flatten().flatten().collect())?)
}

pub fn format_field(field: &TensorField) -> String {
    let mut out = format!("# schema_version: {SCHEMA_VERSION}\nvertex");
    for k in 0..field.width() {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for v in 0..field.n() {
        out.push_str(&v.to_string());
        for x in field.row(v) {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(path, &text)
}

pub fn dense_limit(force_dense: bool, guard: usize) -> usize {
    if force_dense {
        usize::MAX
    } else {
        guard
    }
}

impl Failure {
    /// Prefixes the message with the offending file.
    pub fn context(mut self, path: &Path) -> Self {
        self.msg = format!("{}: {}", path.display(), self.msg);
        self
    }
}
