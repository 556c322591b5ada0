use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::RawSeries;

fn parse_err(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))
}

/// Reads a header-first CSV whose first column is an uninterpreted timestamp
/// and whose remaining columns are numeric channels. Rows are numbered from 1
/// starting at the first data row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawSeries> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 0, format!("bad header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(parse_err(path, 0, "header needs a timestamp column and at least one channel"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let c = names.len();
    let mut values = vec![Vec::new(); c];
    let mut stamps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(path, row, e.to_string()))?;
        if rec.len() != c + 1 {
            return Err(parse_err(
                path,
                row,
                format!("expected {} fields, found {}", c + 1, rec.len()),
            ));
        }
        stamps.push(rec[0].to_string());
        for (ch, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(parse_err(path, row, format!("missing value in column `{}`", names[ch])));
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(path, row, format!("non-numeric value `{cell}` in column `{}`", names[ch]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, row, format!("non-finite value in column `{}`", names[ch])));
            }
            values[ch].push(v);
        }
    }
    if stamps.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    RawSeries::new(names, values, stamps)
}

/// Writes a series in the layout `load_csv` reads.
pub fn write_csv(path: impl AsRef<Path>, s: &RawSeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    write!(w, "date")?;
    for n in &s.channel_names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for t in 0..s.len() {
        write!(w, "{}", s.timestamps[t])?;
        for row in &s.values {
            write!(w, ",{}", row[t])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// One univariate series from an M4-style file.
#[derive(Debug, Clone, PartialEq)]
pub struct M4Series {
    pub id: String,
    pub values: Vec<f64>,
}

/// Reads `id,v1,v2,...` lines of varying length. Quotes around fields are
/// stripped, trailing empty cells ignored, and a first line with no numeric
/// values is taken as a header.
pub fn load_m4(path: impl AsRef<Path>) -> Result<Vec<M4Series>> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(|f| f.trim().trim_matches('"'));
        let id = fields.next().unwrap_or_default().to_string();
        let cells: Vec<&str> = fields.collect();
        let last = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        let cells = &cells[..last];
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        if i == 0 && parsed.iter().all(Option::is_none) {
            continue;
        }
        let mut values = Vec::with_capacity(cells.len());
        for (k, (cell, v)) in cells.iter().zip(parsed).enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(parse_err(
                        path,
                        row,
                        format!("series `{id}`: value {} (`{cell}`) is not a number", k + 1),
                    ))
                }
            }
        }
        if values.is_empty() {
            return Err(parse_err(path, row, format!("series `{id}` has no values")));
        }
        out.push(M4Series { id, values });
    }
    Ok(out)
}
