//! Index files: one 0-based index per line, `#` comments allowed.

use std::io::{BufRead, Write};

use super::EvalError;

pub fn read_index_file<R: BufRead>(r: R) -> Result<Vec<usize>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v = t.parse().map_err(|_| EvalError::Parse {
            line: i + 1,
            msg: format!("expected a non-negative index, got '{t}'"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_index_file<W: Write>(mut w: W, indices: &[usize], header: Option<&str>) -> std::io::Result<()> {
    if let Some(h) = header {
        for l in h.lines() {
            writeln!(w, "# {l}")?;
        }
    }
    for i in indices {
        writeln!(w, "{i}")?;
    }
    Ok(())
}
