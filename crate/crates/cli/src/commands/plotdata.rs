use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use homeadam::numkit::fmt_f64;

use crate::error::CliError;
use crate::output::{Cell, Csv};

pub const PLOTDATA_HEADER: &str = "series,t,value";

/// Wide CSVs (first column `t`) directly inside a run directory, sorted by
/// file name. Other CSVs, such as per-N tables, are not time series.
fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn run_name(path: &Path, taken: &mut BTreeSet<String>) -> String {
    let base = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty() && s != "." && s != "..")
        .unwrap_or_else(|| "run".to_string());
    let mut name = base.clone();
    let mut k = 2;
    while !taken.insert(name.clone()) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

/// Reshapes one wide CSV into `(series, t, value)` rows; `None` if the file
/// has no leading `t` column.
fn reshape(path: &Path, prefix: &str, out: &mut Csv) -> Result<Option<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').map(str::trim).collect(),
        None => return Err(CliError::io(path, "empty file")),
    };
    if header.join(",") == PLOTDATA_HEADER {
        return Err(CliError::io(path, "already in long format (series,t,value)"));
    }
    if header.first() != Some(&"t") {
        return Ok(None);
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(CliError::io(
                path,
                format!("line {}: expected {} fields, found {}", k + 2, header.len(), cells.len()),
            ));
        }
        let t: u64 = cells[0]
            .parse()
            .map_err(|_| CliError::io(path, format!("line {}: bad step `{}`", k + 2, cells[0])))?;
        for (col, cell) in header.iter().zip(&cells).skip(1) {
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                CliError::io(path, format!("line {}: column {col}: not a number `{cell}`", k + 2))
            })?;
            out.push(vec![
                Cell::from(format!("{prefix}/{stem}/{col}")),
                Cell::from(t),
                Cell::from(fmt_f64(value)),
            ]);
            rows += 1;
        }
    }
    Ok(Some(rows))
}

/// Merges the time-series CSVs of one or more run directories into one
/// long table. Series are named `run/file/column`; runs with the same
/// directory name get `_2`, `_3`, ... suffixes in argument order.
pub fn cmd_plotdata(runs: &[PathBuf]) -> Result<Csv, CliError> {
    if runs.is_empty() {
        return Err(CliError::Config("plotdata needs at least one run directory".into()));
    }
    let mut out = Csv::new(&["series", "t", "value"]);
    let mut taken = BTreeSet::new();
    for run in runs {
        if run.is_file() {
            let name = run_name(run.parent().unwrap_or(Path::new("run")), &mut taken);
            if reshape(run, &name, &mut out)?.is_none() {
                return Err(CliError::io(run, "no leading `t` column"));
            }
            continue;
        }
        if !run.is_dir() {
            return Err(CliError::io(run, "no such run directory"));
        }
        let name = run_name(run, &mut taken);
        let mut found = false;
        for file in trace_files(run)? {
            found |= reshape(&file, &name, &mut out)?.is_some();
        }
        if !found {
            return Err(CliError::io(run, "no trace CSV found"));
        }
    }
    Ok(out)
}
