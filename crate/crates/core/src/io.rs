//! JSON file formats for algebras, manifolds, bundles and connections.
//!
//! A reference to another object is either an inline JSON object or a string.
//! Strings name an existing file (relative paths are tried against the
//! referring file's directory first) or, failing that, a shipped fixture;
//! a trailing `.json` and any directories are ignored for fixture lookup.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chartman::{build_manifold, ChartedManifold, ManifoldSpec};
use crate::connection::ConnectionForm;
use crate::error::{input, Error, Result};
use crate::fixtures;
use crate::lab::Trivialization;
use crate::liealg::LieAlgebra;

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraFile {
    pub name: String,
    pub dim: usize,
    pub c: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub algebra: Value,
    pub manifold: Value,
    /// `frames[chart][node]`, each matrix as a list of rows.
    pub frames: Vec<Vec<MatrixRows>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionFile {
    pub bundle: Value,
    /// `omega[chart][axis][node]`, each matrix as a list of rows.
    pub omega: Vec<Vec<Vec<MatrixRows>>>,
}

fn rows(m: &DMatrix<f64>) -> MatrixRows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(r: &MatrixRows, what: &str) -> Result<DMatrix<f64>> {
    let n = r.len();
    let m = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != m) {
        return input(format!("{what}: ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| r[i][j]))
}

pub fn algebra_to_file(g: &LieAlgebra) -> AlgebraFile {
    AlgebraFile {
        name: g.name().to_string(),
        dim: g.dim(),
        c: g.nested(),
    }
}

pub fn bundle_to_file(t: &Trivialization) -> BundleFile {
    BundleFile {
        algebra: serde_json::to_value(algebra_to_file(&t.algebra)).expect("serializable"),
        manifold: serde_json::to_value(t.manifold.to_spec()).expect("serializable"),
        frames: t.frames.iter().map(|c| c.iter().map(rows).collect()).collect(),
    }
}

pub fn connection_to_file(c: &ConnectionForm) -> ConnectionFile {
    ConnectionFile {
        bundle: serde_json::to_value(bundle_to_file(&c.bundle)).expect("serializable"),
        omega: c
            .omega
            .iter()
            .map(|ch| ch.iter().map(|ax| ax.iter().map(rows).collect()).collect())
            .collect(),
    }
}

enum Source {
    Json(Value, Option<PathBuf>),
    Fixture(String),
}

fn resolve(reference: &Value, base: Option<&Path>) -> Result<Source> {
    let s = match reference {
        Value::String(s) => s,
        Value::Object(_) => return Ok(Source::Json(reference.clone(), base.map(Path::to_path_buf))),
        _ => return input("reference must be a string or an object"),
    };
    let mut candidates = Vec::new();
    if let Some(dir) = base {
        candidates.push(dir.join(s));
    }
    candidates.push(PathBuf::from(s));
    if let Some(path) = candidates.into_iter().find(|p| p.is_file()) {
        let text = std::fs::read_to_string(&path)?;
        let value = serde_json::from_str(&text)?;
        return Ok(Source::Json(value, path.parent().map(Path::to_path_buf)));
    }
    let stem = Path::new(s)
        .file_name()
        .and_then(|f| f.to_str())
        .map(|f| f.strip_suffix(".json").unwrap_or(f))
        .unwrap_or(s);
    Ok(Source::Fixture(stem.to_string()))
}

fn unknown(kind: &str, name: &str) -> Error {
    Error::Input(format!("no {kind} file or fixture named {name:?}"))
}

fn algebra_from(reference: &Value, base: Option<&Path>) -> Result<LieAlgebra> {
    match resolve(reference, base)? {
        Source::Fixture(name) => fixtures::algebra(&name).ok_or_else(|| unknown("algebra", &name)),
        Source::Json(v, _) => {
            let f: AlgebraFile = serde_json::from_value(v)?;
            LieAlgebra::from_nested(f.name, f.dim, &f.c)
        }
    }
}

fn manifold_from(reference: &Value, base: Option<&Path>) -> Result<ChartedManifold> {
    match resolve(reference, base)? {
        Source::Fixture(name) => fixtures::manifold(&name).ok_or_else(|| unknown("manifold", &name)),
        Source::Json(v, _) => {
            let spec: ManifoldSpec = serde_json::from_value(v)?;
            build_manifold(&spec)
        }
    }
}

fn bundle_from(reference: &Value, base: Option<&Path>) -> Result<Trivialization> {
    match resolve(reference, base)? {
        Source::Fixture(name) => fixtures::bundle(&name).ok_or_else(|| unknown("bundle", &name)),
        Source::Json(v, dir) => {
            let f: BundleFile = serde_json::from_value(v)?;
            let g = algebra_from(&f.algebra, dir.as_deref())?;
            let m = manifold_from(&f.manifold, dir.as_deref())?;
            let frames = f
                .frames
                .iter()
                .map(|c| c.iter().map(|r| matrix(r, "frame")).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Trivialization::new(g, m, frames)
        }
    }
}

fn connection_from(reference: &Value, base: Option<&Path>) -> Result<ConnectionForm> {
    match resolve(reference, base)? {
        Source::Fixture(name) => fixtures::connection(&name).ok_or_else(|| unknown("connection", &name)),
        Source::Json(v, dir) => {
            let f: ConnectionFile = serde_json::from_value(v)?;
            let t = bundle_from(&f.bundle, dir.as_deref())?;
            let omega = f
                .omega
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|a| a.iter().map(|r| matrix(r, "omega")).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            ConnectionForm::new(t, omega)
        }
    }
}

/// Loads an algebra from a file path or fixture name.
pub fn load_algebra(reference: &str) -> Result<LieAlgebra> {
    algebra_from(&Value::String(reference.into()), None)
}

pub fn load_manifold(reference: &str) -> Result<ChartedManifold> {
    manifold_from(&Value::String(reference.into()), None)
}

pub fn load_bundle(reference: &str) -> Result<Trivialization> {
    bundle_from(&Value::String(reference.into()), None)
}

pub fn load_connection(reference: &str) -> Result<ConnectionForm> {
    connection_from(&Value::String(reference.into()), None)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}
