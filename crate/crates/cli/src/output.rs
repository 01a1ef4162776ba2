use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Rendered bytes bound for a file, or standard output when `path` is `None`.
pub struct Output {
    pub path: Option<PathBuf>,
    pub body: Vec<u8>,
}

impl Output {
    pub fn new(path: Option<PathBuf>, body: Vec<u8>) -> Self {
        Output { path, body }
    }
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("value serializes");
    buf.push(b'\n');
    buf
}

fn write_atomic(path: &Path, body: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body)?;
    tmp.persist(path).map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn emit(out: Output) -> Result<(), CliError> {
    emit_all(vec![out])
}

/// Writes every output only after all of them have been rendered.
pub fn emit_all(outs: Vec<Output>) -> Result<(), CliError> {
    for out in outs {
        match &out.path {
            Some(p) => write_atomic(p, &out.body)?,
            None => std::io::stdout().write_all(&out.body)?,
        }
    }
    Ok(())
}
