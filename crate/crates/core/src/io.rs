//! CSV ingestion and export. Data files carry a header `y,x1[,x2,x3]`;
//! residual files carry `resid,x1[,x2,x3]`. LF and CRLF line endings are
//! accepted and row order is preserved.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::{Regressors, Sample, MAX_DIM};

/// Parsed table: response column plus regressor columns, row-major.
struct Table {
    response: Vec<f64>,
    x: Vec<f64>,
    p: usize,
}

fn parse_table<R: Read>(reader: R, response: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let p = headers.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once(response.to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    if headers.len() < 2 || headers != expected {
        let missing: Vec<&str> = expected
            .iter()
            .filter(|c| !headers.contains(c))
            .map(String::as_str)
            .collect();
        let mut message = format!(
            "header must be `{response},x1[,x2,x3]`, found `{}`",
            headers.join(",")
        );
        if headers.len() < 2 {
            message.push_str("; missing columns: x1");
        } else if !missing.is_empty() {
            message.push_str(&format!("; missing columns: {}", missing.join(", ")));
        }
        return Err(Error::Parse { line: 1, message });
    }
    if p > MAX_DIM {
        return Err(Error::Parse {
            line: 1,
            message: format!("{p} regressor columns; at most {MAX_DIM} are supported (p < 4)"),
        });
    }
    let mut resp = Vec::new();
    let mut x = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{cell}` is not a number", headers[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{}`: non-finite value `{cell}`", headers[j]),
                });
            }
            if j == 0 {
                resp.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if resp.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(Table {
        response: resp,
        x,
        p,
    })
}

pub fn read_sample<R: Read>(reader: R) -> Result<Sample> {
    let t = parse_table(reader, "y")?;
    let n = t.response.len();
    Sample::new(t.response, Regressors::new(n, t.p, t.x)?)
}

/// Reads a `y,x1..xp` CSV file.
pub fn parse_data(path: &Path) -> Result<Sample> {
    read_sample(File::open(path)?)
}

pub fn read_residuals<R: Read>(reader: R) -> Result<(Vec<f64>, Regressors)> {
    let t = parse_table(reader, "resid")?;
    let n = t.response.len();
    Ok((t.response, Regressors::new(n, t.p, t.x)?))
}

/// Reads a `resid,x1..xp` CSV file of user-supplied null residuals.
pub fn parse_residuals(path: &Path) -> Result<(Vec<f64>, Regressors)> {
    read_residuals(File::open(path)?)
}

/// Writes `y,x1..xp` with shortest round-trip float formatting.
pub fn write_sample<W: Write>(sample: &Sample, mut w: W) -> Result<()> {
    let p = sample.dim();
    let mut header = String::from("y");
    for j in 1..=p {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(w, "{header}")?;
    for t in 0..sample.n() {
        let mut line = format!("{:?}", sample.y[t]);
        for v in sample.x.row(t) {
            line.push_str(&format!(",{v:?}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sample(sample: &Sample, path: &Path) -> Result<()> {
    write_sample(sample, std::io::BufWriter::new(File::create(path)?))
}
