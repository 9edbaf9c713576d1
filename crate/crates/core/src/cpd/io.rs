use std::io::{BufRead, Write};

use super::FactorPoint;
use crate::error::{Error, Result};
use crate::tensor::header_fields;

/// Writes `modes N`, `rank r`, `dims n_1 .. n_N`, then the flattened values one per line.
pub fn write_factor_point<W: Write>(mut w: W, x: &FactorPoint) -> Result<()> {
    writeln!(w, "modes {}", x.modes())?;
    writeln!(w, "rank {}", x.rank())?;
    let dims: Vec<String> = x.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "dims {}", dims.join(" "))?;
    for v in x.flatten() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_factor_point<R: BufRead>(r: R) -> Result<FactorPoint> {
    let mut lines = r.lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse(format!("missing {what} line")))
    };
    let modes = single(&counts(&next_line("modes")?, "modes")?, "modes")?;
    let rank = single(&counts(&next_line("rank")?, "rank")?, "rank")?;
    let dims = counts(&next_line("dims")?, "dims")?;
    if dims.len() != modes {
        return Err(Error::Parse(format!(
            "header declares {modes} modes but lists {} dims",
            dims.len()
        )));
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("value {}: {e}", i + 1)))?,
        );
    }
    FactorPoint::unflatten(&dims, rank, &values).map_err(|e| Error::Parse(e.to_string()))
}

fn counts(line: &str, key: &str) -> Result<Vec<usize>> {
    header_fields(line, key)?
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|e| Error::Parse(format!("`{key}` value {f:?}: {e}")))
        })
        .collect()
}

fn single(fields: &[usize], key: &str) -> Result<usize> {
    match fields {
        [v] => Ok(*v),
        _ => Err(Error::Parse(format!("`{key}` expects one value"))),
    }
}
