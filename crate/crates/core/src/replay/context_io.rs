use std::io::{BufRead, Write};

use super::ReplayError;
use crate::context::{normalize_order, ContextRecord};

/// Reads JSON Lines context records. Blank lines are skipped; every record
/// is validated and the result is in canonical query order.
pub fn read_context<R: BufRead>(reader: R) -> Result<Vec<ContextRecord>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ContextRecord =
            serde_json::from_str(&line).map_err(|e| ReplayError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        record
            .validate()
            .map_err(|source| ReplayError::InvalidContext {
                line: line_no,
                source,
            })?;
        out.push(record);
    }
    normalize_order(&mut out);
    Ok(out)
}

pub fn write_context<W: Write>(records: &[ContextRecord], mut writer: W) -> Result<(), ReplayError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
