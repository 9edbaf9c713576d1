//! Plain-text tensor cache format:
//!
//! ```text
//! dims 20 20 20
//! rank 3
//! <value>        one per line, storage order, 17 significant digits
//! ```

use std::io::{BufRead, Write};

use super::DenseTensor;
use crate::error::{Error, Result};

pub fn write_tensor<W: Write>(mut w: W, t: &DenseTensor, rank: usize) -> Result<()> {
    let dims: Vec<String> = t.shape().iter().map(|n| n.to_string()).collect();
    writeln!(w, "dims {}", dims.join(" "))?;
    writeln!(w, "rank {rank}")?;
    for v in t.values() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// Returns the tensor and the rank recorded in its header.
pub fn read_tensor<R: BufRead>(r: R) -> Result<(DenseTensor, usize)> {
    let mut lines = r.lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {what} line")))?
            .map_err(Error::from)
    };
    let dims_line = next_line("dims")?;
    let dims: Vec<usize> = header_fields(&dims_line, "dims")?
        .iter()
        .map(|s| s.parse().map_err(|e| Error::Parse(format!("bad extent {s:?}: {e}"))))
        .collect::<Result<_>>()?;
    let rank_line = next_line("rank")?;
    let rank_fields = header_fields(&rank_line, "rank")?;
    let rank: usize = match rank_fields.as_slice() {
        [one] => one.parse().map_err(|e| Error::Parse(format!("bad rank: {e}")))?,
        _ => return Err(Error::Parse("rank line needs one value".into())),
    };
    let count: usize = dims.iter().product();
    let mut values = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        values.push(
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value {s:?}: {e}")))?,
        );
    }
    Ok((DenseTensor::new(dims, values)?, rank))
}

pub(crate) fn header_fields(line: &str, key: &str) -> Result<Vec<String>> {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
        other => Err(Error::Parse(format!("expected '{key}' header, found {other:?}"))),
    }
}
