//! On-disk feature frames.
//!
//! A frame directory holds:
//! - `features.dfx`: the N×M matrix (`DFX1` binary, below)
//! - `features.desc`: one `kind,symbol,lag_or_window,partner` line per column
//! - `targets.dfx`: N×S next-interval price differences
//! - `rows.csv`: `timestamp,<sym...>` mid-price at each row
//! - `frame.meta`: `warmup_rows=<n>`
//!
//! `DFX1` layout: the 4 magic bytes, then little-endian u64 rows, u64 cols,
//! and rows·cols f64 values in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{parse_timestamp, FeatureDescriptor, FeatureFrame, FeatureKind, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"DFX1";

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.data().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let bad = |msg: &str| Error::Format {
        what: "DFX1 matrix",
        msg: msg.to_string(),
    };
    if bytes.len() < 20 || &bytes[..4] != MATRIX_MAGIC {
        return Err(bad("missing DFX1 header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(4) as usize, word(12) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(20))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "{rows}x{cols} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    decode_matrix(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_descriptors(path: &Path, descriptors: &[FeatureDescriptor]) -> Result<()> {
    let mut text = String::new();
    for d in descriptors {
        text.push_str(&d.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_descriptors(path: &Path) -> Result<Vec<FeatureDescriptor>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(err("expected kind,symbol,lag_or_window,partner"));
            }
            Ok(FeatureDescriptor {
                kind: FeatureKind::parse(parts[0]).ok_or_else(|| err("unknown feature kind"))?,
                symbol: parts[1].to_string(),
                lag_or_window: parts[2].parse().map_err(|_| err("bad lag_or_window"))?,
                partner: (!parts[3].is_empty()).then(|| parts[3].to_string()),
            })
        })
        .collect()
}

pub fn save_frame(dir: &Path, frame: &FeatureFrame) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join("features.dfx"), &frame.x)?;
    write_descriptors(&dir.join("features.desc"), &frame.descriptors)?;
    write_matrix(&dir.join("targets.dfx"), &frame.next_diffs)?;

    let rows_path = dir.join("rows.csv");
    let file = fs::File::create(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&rows_path, e);
    write!(w, "timestamp").map_err(io)?;
    for s in &frame.symbols {
        write!(w, ",{s}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (r, ts) in frame.timestamps.iter().enumerate() {
        write!(w, "{}", ts.format(TIMESTAMP_FORMAT)).map_err(io)?;
        for v in frame.prices.row(r) {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta = dir.join("frame.meta");
    fs::write(&meta, format!("warmup_rows={}\n", frame.warmup_rows))
        .map_err(|e| Error::io(&meta, e))
}

pub fn load_frame(dir: &Path) -> Result<FeatureFrame> {
    let x = read_matrix(&dir.join("features.dfx"))?;
    let descriptors = read_descriptors(&dir.join("features.desc"))?;
    let next_diffs = read_matrix(&dir.join("targets.dfx"))?;

    let rows_path = dir.join("rows.csv");
    let text = fs::read_to_string(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: rows_path.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let symbols: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (i, line) in lines.enumerate() {
        let err = |msg: String| Error::Parse {
            path: rows_path.clone(),
            line: i + 2,
            msg,
        };
        let mut parts = line.split(',');
        let ts = parts.next().unwrap_or_default();
        timestamps.push(parse_timestamp(ts).ok_or_else(|| err(format!("bad timestamp {ts:?}")))?);
        for p in parts {
            prices.push(
                p.parse::<f64>()
                    .map_err(|_| err(format!("bad price {p:?}")))?,
            );
        }
    }
    let prices = Matrix::new(timestamps.len(), symbols.len(), prices)?;

    let meta = dir.join("frame.meta");
    let meta_text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let warmup_rows = meta_text
        .trim()
        .strip_prefix("warmup_rows=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format {
            what: "frame.meta",
            msg: "expected warmup_rows=<n>".into(),
        })?;

    if x.cols() != descriptors.len()
        || x.rows() != timestamps.len()
        || next_diffs.shape() != prices.shape()
        || x.rows() != next_diffs.rows()
    {
        return Err(Error::Format {
            what: "feature frame",
            msg: format!(
                "inconsistent files: features {:?}, {} descriptors, targets {:?}, rows {:?}",
                x.shape(),
                descriptors.len(),
                next_diffs.shape(),
                prices.shape()
            ),
        });
    }
    Ok(FeatureFrame {
        x,
        descriptors,
        symbols,
        timestamps,
        prices,
        next_diffs,
        labels: None,
        norm_stats: None,
        warmup_rows,
    })
}
