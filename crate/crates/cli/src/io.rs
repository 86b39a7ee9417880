use std::fs;
use std::path::{Path, PathBuf};

use netsym::netcore::checkpoint::read_header;
use netsym::training::Dataset;
use netsym::{ArchitectureSpec, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::stamp::Stamp;

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes `body` as JSON with the stamp under the `stamp` key.
pub fn write_json<T: Serialize>(path: &Path, body: &T, stamp: &Stamp) -> CliResult<()> {
    let mut v = serde_json::to_value(body)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("stamp".into(), serde_json::to_value(stamp)?);
        }
        other => {
            v = json!({ "result": other.take(), "stamp": stamp });
        }
    }
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

/// Sidecar `<path>.stamp.json` for outputs that cannot carry a stamp themselves.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".stamp.json");
    PathBuf::from(s)
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| Error::InvalidArgument(format!("{} is not UTF-8 text", path.display())).into())
}

/// Architecture from a JSON spec file or from a checkpoint header.
pub fn read_spec(path: &Path) -> CliResult<ArchitectureSpec> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"NNCK") {
        return Ok(read_header(&bytes)?.0.spec);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidArgument(format!("{} is neither JSON nor a checkpoint", path.display())))?;
    Ok(ArchitectureSpec::from_json(&text)?)
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    Ok(Dataset::from_json(&read_text(path)?)?)
}

/// The `task` descriptor stored next to a generated dataset, if any.
pub fn read_task(path: &Path) -> CliResult<Value> {
    let v: Value = serde_json::from_str(&read_text(path)?)?;
    Ok(v.get("task").cloned().unwrap_or(Value::Null))
}

/// The `inputs` array of any JSON file (datasets and grids).
pub fn read_inputs(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let v: Value = serde_json::from_str(&read_text(path)?)?;
    let inputs = v
        .get("inputs")
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no `inputs` array", path.display())))?;
    Ok(serde_json::from_value(inputs.clone())?)
}

/// Rows of floats from a CSV with a header line.
pub fn read_float_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("{} row {}: {e}", path.display(), n + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        out.push(
            field
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("{} row {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
