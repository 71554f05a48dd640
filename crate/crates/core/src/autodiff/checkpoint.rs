use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AutodiffError, ParamStore, Tensor};

pub const CHECKPOINT_HEADER: &str = "relgraph-params v1";

/// Text format, one parameter per line:
/// `name<TAB>d0,d1<TAB>v v v ...` with values at 17 significant digits,
/// which round-trips every `f64` exactly. Lines starting with `#` after
/// the count line are ignored.
pub fn save_checkpoint(store: &ParamStore) -> String {
    let mut out = String::new();
    writeln!(out, "{}", CHECKPOINT_HEADER).unwrap();
    writeln!(out, "count {}", store.len()).unwrap();
    for (_, p) in store.iter() {
        let shape: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        let values: Vec<String> = p.value.data().iter().map(|v| format!("{:.16e}", v)).collect();
        writeln!(out, "{}\t{}\t{}", p.name, shape.join(","), values.join(" ")).unwrap();
    }
    out
}

pub fn load_checkpoint(text: &str) -> Result<ParamStore, AutodiffError> {
    let err = |line: usize, message: String| AutodiffError::Checkpoint { line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
        _ => return Err(err(1, format!("expected header {:?}", CHECKPOINT_HEADER))),
    }
    let count: usize = lines
        .next()
        .and_then(|(_, l)| l.strip_prefix("count "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| err(2, "expected `count N`".into()))?;
    let mut store = ParamStore::new();
    for (i, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(name), Some(shape), Some(values)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err(i + 1, "expected three tab-separated columns".into()));
        };
        let shape: Vec<usize> = if shape.is_empty() {
            Vec::new()
        } else {
            shape
                .split(',')
                .map(|d| d.parse().map_err(|_| err(i + 1, format!("bad dimension {:?}", d))))
                .collect::<Result<_, _>>()?
        };
        let data: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| err(i + 1, format!("bad value {:?}", v))))
            .collect::<Result<_, _>>()?;
        let t = Tensor::new(shape, data).map_err(|e| err(i + 1, e.to_string()))?;
        store.add(name, t).map_err(|e| err(i + 1, e.to_string()))?;
    }
    if store.len() != count {
        return Err(err(2, format!("header says {} parameters, found {}", count, store.len())));
    }
    Ok(store)
}

pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<(), AutodiffError> {
    fs::write(path, save_checkpoint(store)).map_err(|e| AutodiffError::Io(format!("{}: {}", path.display(), e)))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore, AutodiffError> {
    let text = fs::read_to_string(path).map_err(|e| AutodiffError::Io(format!("{}: {}", path.display(), e)))?;
    load_checkpoint(&text)
}
