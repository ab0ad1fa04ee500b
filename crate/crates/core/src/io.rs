//! Path export formats.
//!
//! CSV: header `path,<t_0>,<t_1>,...`, then one row per path `index,<v_0>,...`.
//!
//! Binary (all integers and floats little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `SSPATHv1`                        |
//! | 8      | 4    | model tag (u32, see [`ModelTag::code`]) |
//! | 12     | 4    | reserved, zero                          |
//! | 16     | 8    | seed (u64)                              |
//! | 24     | 8    | n_paths (u64)                           |
//! | 32     | 8    | n_steps (u64)                           |
//! | 40     | 8    | grid start (f64)                        |
//! | 48     | 8    | grid end (f64)                          |
//! | 56     | ...  | values, f64, row-major                  |

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::simulate::{ModelTag, PathSet, TimeGrid};

pub const MAGIC: &[u8; 8] = b"SSPATHv1";
pub const HEADER_LEN: usize = 56;

pub fn write_paths_csv<W: Write>(paths: &PathSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::with_capacity(paths.grid().n_points() + 1);
    header.push("path".to_string());
    header.extend(paths.grid().times().iter().map(|t| t.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in paths.rows().enumerate() {
        record.clear();
        record.push(i.to_string());
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Grid times and path rows read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvPaths {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_paths_csv<R: Read>(input: R) -> Result<CsvPaths> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("path") {
        return Err(Error::Format("first CSV column must be `path`".into()));
    }
    let times = header
        .iter()
        .skip(1)
        .map(parse_f64)
        .collect::<Result<Vec<_>>>()?;
    if times.len() < 2 {
        return Err(Error::Format("need at least two grid times".into()));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Format("grid times must be finite and strictly increasing".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != times.len() + 1 {
            return Err(Error::Format(format!("row {i} has {} fields, expected {}", record.len(), times.len() + 1)));
        }
        let index: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("row {i}: bad path index")))?;
        if index != i {
            return Err(Error::Format(format!("row {i}: path index {index} out of order")));
        }
        rows.push(record.iter().skip(1).map(parse_f64).collect::<Result<Vec<_>>>()?);
    }
    Ok(CsvPaths { times, rows })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn encode_paths_binary(paths: &PathSet) -> Vec<u8> {
    let grid = paths.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * paths.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&paths.model_tag().code().to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&paths.seed().to_le_bytes());
    out.extend_from_slice(&(paths.n_paths() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.n_steps as u64).to_le_bytes());
    out.extend_from_slice(&grid.start.to_le_bytes());
    out.extend_from_slice(&grid.end.to_le_bytes());
    for v in paths.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes and validates a binary path dump.
pub fn decode_paths_binary(bytes: &[u8]) -> Result<PathSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let tag = ModelTag::from_code(le_u32(bytes, 8)).ok_or_else(|| Error::Format("unknown model tag".into()))?;
    if le_u32(bytes, 12) != 0 {
        return Err(Error::Format("reserved header field must be zero".into()));
    }
    let seed = le_u64(bytes, 16);
    let n_paths = usize::try_from(le_u64(bytes, 24)).map_err(|_| Error::Format("n_paths overflows".into()))?;
    let n_steps = usize::try_from(le_u64(bytes, 32)).map_err(|_| Error::Format("n_steps overflows".into()))?;
    let start = f64::from_le_bytes(bytes[40..48].try_into().expect("8-byte slice"));
    let end = f64::from_le_bytes(bytes[48..56].try_into().expect("8-byte slice"));
    let grid = TimeGrid {
        start,
        end,
        n_steps,
    };
    grid.validate().map_err(|e| Error::Format(e.to_string()))?;
    let n_values = n_steps
        .checked_add(1)
        .and_then(|p| p.checked_mul(n_paths))
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let body = &bytes[HEADER_LEN..];
    if Some(body.len()) != n_values.checked_mul(8) {
        return Err(Error::Format(format!(
            "expected {n_values} values ({} bytes), found {} bytes",
            n_values.saturating_mul(8),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    PathSet::new(grid, n_paths, values, tag, seed)
}
