//! CSV trace files.
//!
//! One header row with the column names of [`TraceLog::header`], then one
//! row per tick. Floats are written with 17 significant digits, which is
//! enough to read back the exact value.

use std::io::{Read, Write};
use std::path::Path;

use hvs_core::simulation::TraceLog;

use crate::error::{CliError, Result};

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(trace: &TraceLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| CliError::Usage(format!("writing trace: {e}"));
    w.write_record(trace.header()).map_err(wrap)?;
    for r in &trace.records {
        w.write_record(trace.row(r).iter().map(|&x| format_float(x)))
            .map_err(wrap)?;
    }
    w.flush()
        .map_err(|e| CliError::Usage(format!("writing trace: {e}")))
}

pub fn save_trace(trace: &TraceLog, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trace(trace, std::io::BufWriter::new(file))
}

/// Reads a trace. Errors name the zero-based record index (the header is
/// not a record).
pub fn read_trace<R: Read>(input: R) -> Result<TraceLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::TraceParse {
            record: 0,
            message: format!("header: {e}"),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::TraceParse {
            record: i,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(CliError::TraceParse {
                record: i,
                message: format!("expected {} fields, got {}", header.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::TraceParse {
                        record: i,
                        message: format!("column '{}': '{field}' is not a number", header[c]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::TraceParse {
            record: 0,
            message: "no records".into(),
        });
    }
    TraceLog::from_table(&header, &rows).map_err(|e| CliError::TraceParse {
        record: 0,
        message: e.to_string(),
    })
}

pub fn load_trace(path: &Path) -> Result<TraceLog> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_trace(std::io::BufReader::new(file))
}
