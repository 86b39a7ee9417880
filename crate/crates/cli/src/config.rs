use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use serde_json::Value;

use crate::error::CliError;

/// Location of `--config` in raw arguments.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn has_flag(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

fn render(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => Some(items.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        _ => None,
    }
}

/// Appends `--key value` for every config entry whose flag is absent from
/// `argv`, so explicit flags win. Keys may be snake_case or kebab-case;
/// `true` becomes a bare switch and `false`/`null` are skipped.
pub fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {} is not JSON: {e}", path.display())))?;
    let Value::Object(map) = cfg else {
        return Err(CliError::Usage("config file must hold a JSON object".into()));
    };
    let mut out = argv;
    let mut extra = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || has_flag(&out, &flag) {
            continue;
        }
        match value {
            Value::Bool(true) => extra.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            other => {
                let v = render(&other).ok_or_else(|| CliError::Usage(format!("config key {key:?} has an unsupported value")))?;
                extra.push(flag.into());
                extra.push(v.into());
            }
        }
    }
    out.extend(extra);
    Ok(out)
}
