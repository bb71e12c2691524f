//! Result emission: CSV / JSON either to standard output or to `--out`,
//! with standard error reserved for progress logging.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

pub fn writer(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Format one numeric cell. Infinities become the literal `inf`; NaN is a
/// bug upstream and is reported as such rather than silently written.
pub fn cell(v: f64) -> String {
    debug_assert!(!v.is_nan(), "NaN reached the output layer");
    if v.is_nan() {
        "inf".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

/// Optional bound: absent (perfectly known or singular block) prints `inf`
/// only when flagged singular; a fully-known block prints 0.
pub fn bound_cell(v: Option<f64>, singular: bool) -> String {
    match v {
        Some(v) => cell(v),
        None if singular => "inf".to_string(),
        None => cell(0.0),
    }
}

pub fn write_csv_row(w: &mut dyn Write, cells: &[String]) -> io::Result<()> {
    writeln!(w, "{}", cells.join(","))
}
