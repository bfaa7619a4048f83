use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Relative paths land in `out_dir`, which is created on demand.
pub fn resolve(out_dir: &Path, path: &Path) -> Result<PathBuf, CliError> {
    let full = if path.is_absolute() { path.to_path_buf() } else { out_dir.join(path) };
    if let Some(parent) = full.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(full)
}

pub fn create(out_dir: &Path, path: &Path) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let full = resolve(out_dir, path)?;
    let file = File::create(&full)?;
    Ok((full, BufWriter::new(file)))
}

/// Rounds every float to 12 significant digits.
fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or_default();
            let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
            if let Some(m) = serde_json::Number::from_f64(rounded) {
                *n = m;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(value).map_err(coarse_forge::Error::from)?;
    round_numbers(&mut v);
    let mut text = serde_json::to_string_pretty(&v).map_err(coarse_forge::Error::from)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(out_dir: &Path, path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let full = resolve(out_dir, path)?;
    fs::write(&full, to_json(value)?)?;
    Ok(full)
}
